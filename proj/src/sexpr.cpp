#include "fpm/sexpr.hpp"
#include "fpm/error.hpp"

#include <cctype>

namespace fpm {

SExpr SExpr::symbol(std::string name)
{
    SExpr e;
    e.kind = Kind::Symbol;
    e.atom = std::move(name);
    return e;
}

SExpr SExpr::string(std::string s)
{
    SExpr e;
    e.kind = Kind::String;
    e.atom = std::move(s);
    return e;
}

SExpr SExpr::integer(int64_t n)
{
    SExpr e;
    e.kind = Kind::Int;
    e.num = n;
    return e;
}

SExpr SExpr::boolean(bool b)
{
    SExpr e;
    e.kind = Kind::Bool;
    e.flag = b;
    return e;
}

SExpr SExpr::list(std::vector<SExpr> items)
{
    SExpr e;
    e.kind = Kind::List;
    e.items = std::move(items);
    return e;
}

bool SExpr::operator==(const SExpr & other) const
{
    if (kind != other.kind) return false;
    switch (kind) {
    case Kind::Symbol:
    case Kind::String: return atom == other.atom;
    case Kind::Int: return num == other.num;
    case Kind::Bool: return flag == other.flag;
    case Kind::List: return items == other.items;
    }
    return false;
}

namespace {

struct Parser
{
    std::string_view src;
    size_t pos = 0;
    int line = 1, col = 1;
    int quasiDepth = 0;

    [[noreturn]] void error(const std::string & msg) const
    {
        fail("ParseError",
            msg + " at line " + std::to_string(line) + ", column " + std::to_string(col));
    }

    bool eof() const { return pos >= src.size(); }
    char peek() const { return src[pos]; }

    char next()
    {
        char c = src[pos++];
        if (c == '\n') {
            line++;
            col = 1;
        } else {
            col++;
        }
        return c;
    }

    void skipWhitespaceAndComments()
    {
        while (!eof()) {
            char c = peek();
            if (c == ';') {
                while (!eof() && peek() != '\n') next();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                next();
            } else {
                break;
            }
        }
    }

    static bool isDelimiter(char c)
    {
        return std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')'
            || c == '"' || c == ';' || c == '\'' || c == '`' || c == ',';
    }

    SExpr parseString()
    {
        int startLine = line, startCol = col;
        next(); // opening quote
        std::string out;
        while (true) {
            if (eof()) error("unterminated string literal");
            char c = next();
            if (c == '"') break;
            if (c == '\\') {
                if (eof()) error("unterminated escape sequence");
                char esc = next();
                switch (esc) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default: error(std::string("invalid escape sequence '\\") + esc + "'");
                }
            } else {
                out += c;
            }
        }
        SExpr e = SExpr::string(std::move(out));
        e.line = startLine;
        e.col = startCol;
        return e;
    }

    SExpr parseAtom()
    {
        int startLine = line, startCol = col;
        std::string token;
        while (!eof() && !isDelimiter(peek())) token += next();
        if (token.empty()) error("unexpected character");

        SExpr e;
        if (token == "#t") {
            e = SExpr::boolean(true);
        } else if (token == "#f") {
            e = SExpr::boolean(false);
        } else {
            bool numeric = !token.empty()
                && (std::isdigit(static_cast<unsigned char>(token[0]))
                    || (token[0] == '-' && token.size() > 1
                        && std::isdigit(static_cast<unsigned char>(token[1]))));
            if (numeric) {
                for (size_t i = (token[0] == '-' ? 1 : 0); i < token.size(); ++i)
                    if (!std::isdigit(static_cast<unsigned char>(token[i]))) {
                        numeric = false;
                        break;
                    }
            }
            if (numeric)
                e = SExpr::integer(std::stoll(token));
            else
                e = SExpr::symbol(std::move(token));
        }
        e.line = startLine;
        e.col = startCol;
        return e;
    }

    SExpr wrap(const char * head, bool quasi)
    {
        int startLine = line, startCol = col;
        next(); // the quote character
        if (quasi) {
            if (quasiDepth >= 1)
                error("nested quasiquote is not supported (one level only)");
            quasiDepth++;
        }
        SExpr inner = parseExpr();
        if (quasi) quasiDepth--;
        SExpr e = SExpr::list({SExpr::symbol(head), std::move(inner)});
        e.line = startLine;
        e.col = startCol;
        return e;
    }

    SExpr parseExpr()
    {
        skipWhitespaceAndComments();
        if (eof()) error("unexpected end of input");
        char c = peek();
        if (c == '(') {
            int startLine = line, startCol = col;
            next();
            std::vector<SExpr> items;
            while (true) {
                skipWhitespaceAndComments();
                if (eof()) {
                    line = startLine;
                    col = startCol;
                    error("unbalanced parenthesis");
                }
                if (peek() == ')') {
                    next();
                    break;
                }
                items.push_back(parseExpr());
            }
            SExpr e = SExpr::list(std::move(items));
            e.line = startLine;
            e.col = startCol;
            return e;
        }
        if (c == ')') error("unexpected ')'");
        if (c == '"') return parseString();
        if (c == '\'') return wrap("quote", false);
        if (c == '`') return wrap("quasiquote", true);
        if (c == ',') return wrap("unquote", false);
        return parseAtom();
    }
};

}

std::vector<SExpr> parseSExprs(std::string_view source)
{
    Parser p{source};
    std::vector<SExpr> out;
    while (true) {
        p.skipWhitespaceAndComments();
        if (p.eof()) break;
        out.push_back(p.parseExpr());
    }
    return out;
}

SExpr parseSExpr(std::string_view source)
{
    auto forms = parseSExprs(source);
    if (forms.size() != 1)
        fail("ParseError", "expected exactly one expression, got " + std::to_string(forms.size()));
    return forms[0];
}

static void escapeString(std::string & out, const std::string & s)
{
    out += '"';
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    out += '"';
}

static void printTo(std::string & out, const SExpr & e)
{
    switch (e.kind) {
    case SExpr::Kind::Symbol: out += e.atom; break;
    case SExpr::Kind::String: escapeString(out, e.atom); break;
    case SExpr::Kind::Int: out += std::to_string(e.num); break;
    case SExpr::Kind::Bool: out += e.flag ? "#t" : "#f"; break;
    case SExpr::Kind::List:
        out += '(';
        for (size_t i = 0; i < e.items.size(); ++i) {
            if (i) out += ' ';
            printTo(out, e.items[i]);
        }
        out += ')';
        break;
    }
}

std::string printSExpr(const SExpr & e)
{
    std::string out;
    printTo(out, e);
    return out;
}

}
