#include "fpm/hash.hpp"
#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <cstring>
#include <map>

#include <openssl/evp.h>

namespace fs = std::filesystem;

namespace fpm {

static const char base32Alphabet[] = "0123456789abcdfghijklmnpqrsvwxyz";

Sha256 sha256(std::string_view data)
{
    Sha256 out{};
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr)
        || len != out.size())
        fail("IoError", "sha256 computation failed");
    return out;
}

Sha256 sha256File(const fs::path & p)
{
    return sha256(util::readFile(p));
}

static void appendLengthPrefixed(std::string & out, std::string_view s)
{
    uint64_t n = s.size();
    for (int i = 0; i < 8; ++i) out += static_cast<char>((n >> (8 * i)) & 0xff);
    out += s;
}

static void collectEntries(const fs::path & root, const fs::path & dir,
    std::map<std::string, fs::path> & entries)
{
    for (auto & entry : fs::directory_iterator(dir)) {
        auto rel = fs::relative(entry.path(), root).generic_string();
        entries.emplace(rel, entry.path());
        if (fs::is_directory(entry.symlink_status()))
            collectEntries(root, entry.path(), entries);
    }
}

std::string serializeTree(const fs::path & dir)
{
    std::map<std::string, fs::path> entries;
    collectEntries(dir, dir, entries);

    std::string out = "fpm-archive-1\n";
    for (auto & [rel, p] : entries) {
        appendLengthPrefixed(out, rel);
        auto st = fs::symlink_status(p);
        if (fs::is_symlink(st)) {
            out += 'l';
            out += '-';
            appendLengthPrefixed(out, fs::read_symlink(p).generic_string());
        } else if (fs::is_directory(st)) {
            out += 'd';
            out += '-';
            appendLengthPrefixed(out, "");
        } else if (fs::is_regular_file(st)) {
            out += 'f';
            out += util::isExecutable(p) ? 'x' : '-';
            appendLengthPrefixed(out, util::readFile(p));
        } else {
            fail("IoError", "cannot serialize special file '" + p.string() + "'");
        }
    }
    return out;
}

std::string hex(const Sha256 & h)
{
    return util::hexEncode(h.data(), h.size());
}

std::string base32Encode(const unsigned char * data, size_t len)
{
    size_t outLen = (len * 8 - 1) / 5 + 1;
    std::string out;
    out.reserve(outLen);
    for (size_t n = outLen; n-- > 0;) {
        size_t b = n * 5;
        size_t i = b / 8;
        size_t j = b % 8;
        unsigned char c =
            static_cast<unsigned char>((data[i] >> j)
                | (i + 1 < len ? data[i + 1] << (8 - j) : 0));
        out += base32Alphabet[c & 0x1f];
    }
    return out;
}

std::string hashToBase32(const std::array<unsigned char, 20> & digest)
{
    return base32Encode(digest.data(), digest.size());
}

template<size_t N>
static std::array<unsigned char, N> base32DecodeN(std::string_view s)
{
    size_t expected = (N * 8 - 1) / 5 + 1;
    if (s.size() != expected)
        fail("InvalidDigest",
            "base32 string must be " + std::to_string(expected) + " characters, got "
                + std::to_string(s.size()));
    std::array<unsigned char, N> out{};
    for (size_t n = 0; n < s.size(); ++n) {
        char ch = s[s.size() - n - 1];
        const char * pos = std::strchr(base32Alphabet, ch);
        if (!pos || !ch)
            fail("InvalidDigest", std::string("invalid base32 character '") + ch + "'");
        auto digit = static_cast<unsigned char>(pos - base32Alphabet);
        size_t b = n * 5;
        size_t i = b / 8;
        size_t j = b % 8;
        out[i] |= static_cast<unsigned char>(digit << j);
        if (j > 3) {
            if (i + 1 >= N) {
                if (digit >> (8 - j))
                    fail("InvalidDigest", "invalid base32 padding bits");
            } else {
                out[i + 1] |= static_cast<unsigned char>(digit >> (8 - j));
            }
        }
    }
    return out;
}

std::array<unsigned char, 20> base32Decode20(std::string_view s)
{
    return base32DecodeN<20>(s);
}

std::array<unsigned char, 32> base32Decode32(std::string_view s)
{
    return base32DecodeN<32>(s);
}

std::array<unsigned char, 20> truncateDigest(const Sha256 & h)
{
    std::array<unsigned char, 20> out;
    std::copy_n(h.begin(), 20, out.begin());
    return out;
}

}
