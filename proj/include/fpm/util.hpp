#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fpm::util {

std::string readFile(const std::filesystem::path & p);

void writeFile(const std::filesystem::path & p, std::string_view contents,
    bool executable = false);

/* Write via a sibling temp file + rename so readers never observe a
   half-written file. */
void atomicWriteFile(const std::filesystem::path & p, std::string_view contents);

/* Recursive copy preserving symlinks and executable bits.  `src` may be a
   regular file, in which case it is copied to `dst` directly. */
void copyRecursive(const std::filesystem::path & src, const std::filesystem::path & dst);

/* rm -rf that first re-enables write permission (store paths are
   write-protected). */
void deleteRecursive(const std::filesystem::path & p);

void makeReadOnlyRecursive(const std::filesystem::path & p);
void makeWritableRecursive(const std::filesystem::path & p);

bool isExecutable(const std::filesystem::path & p);

uint64_t treeSize(const std::filesystem::path & p);

/* Run a child process with exactly the given environment, cwd and argv;
   stdout and stderr are appended to `output`.  Returns the exit status
   (128+signal on abnormal termination). */
int runProcess(const std::filesystem::path & program, const std::vector<std::string> & args,
    const std::map<std::string, std::string> & env, const std::filesystem::path & cwd,
    std::string & output);

std::vector<std::string> split(std::string_view s, char sep);
std::string hexEncode(const unsigned char * data, size_t len);

}
