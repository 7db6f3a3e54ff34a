#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace fpm {

using Sha256 = std::array<unsigned char, 32>;

Sha256 sha256(std::string_view data);
Sha256 sha256File(const std::filesystem::path & p);

/* Canonical serialization of a directory tree: a sorted list of
   (relative path, type byte, executable flag, contents) records with
   64-bit little-endian length prefixes.  Platform-independent, so the
   digest of a tree is stable. */
std::string serializeTree(const std::filesystem::path & dir);

std::string hex(const Sha256 & h);

/* Base32 over the 32-character alphabet 0123456789abcdfghijklmnpqrsvwxyz,
   little-endian 5-bit groups, most significant character first.  A 20-byte
   digest encodes to exactly 32 characters, a 32-byte one to 52. */
std::string base32Encode(const unsigned char * data, size_t len);
std::string hashToBase32(const std::array<unsigned char, 20> & digest);
std::array<unsigned char, 20> base32Decode20(std::string_view s);
std::array<unsigned char, 32> base32Decode32(std::string_view s);

/* First 20 bytes of a sha256, the store-path digest size. */
std::array<unsigned char, 20> truncateDigest(const Sha256 & h);

}
