#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fpm {

/* Syntax tree of the build language.  Structural equality ignores source
   locations. */
struct SExpr
{
    enum class Kind { Symbol, String, Int, Bool, List };

    Kind kind = Kind::List;
    std::string atom;         // symbol name or string bytes
    int64_t num = 0;
    bool flag = false;
    std::vector<SExpr> items; // for List
    int line = 0, col = 0;

    static SExpr symbol(std::string name);
    static SExpr string(std::string s);
    static SExpr integer(int64_t n);
    static SExpr boolean(bool b);
    static SExpr list(std::vector<SExpr> items = {});

    bool isSymbol(std::string_view name) const
    {
        return kind == Kind::Symbol && atom == name;
    }

    bool operator==(const SExpr & other) const;
};

/* Parse a whole source text into its top-level forms.  'x reads as
   (quote x), `x as (quasiquote x), ,x as (unquote x); ';' comments to end
   of line; quasiquote nesting beyond one level is rejected. */
std::vector<SExpr> parseSExprs(std::string_view source);

/* Single-expression convenience; requires exactly one form. */
SExpr parseSExpr(std::string_view source);

std::string printSExpr(const SExpr & e);

}
