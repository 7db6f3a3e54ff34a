#include "fpm/util.hpp"
#include "fpm/error.hpp"

#include <fstream>
#include <random>
#include <system_error>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace fpm::util {

std::string readFile(const fs::path & p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) fail("IoError", "cannot open '" + p.string() + "' for reading");
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail("IoError", "error reading '" + p.string() + "'");
    return s;
}

void writeFile(const fs::path & p, std::string_view contents, bool executable)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail("IoError", "cannot open '" + p.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (out.fail()) fail("IoError", "error writing '" + p.string() + "'");
    if (executable)
        fs::permissions(p,
            fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
            fs::perm_options::add);
}

void atomicWriteFile(const fs::path & p, std::string_view contents)
{
    static std::mt19937_64 rng{std::random_device{}()};
    fs::path tmp = p;
    tmp += ".tmp-" + std::to_string(rng());
    writeFile(tmp, contents);
    fs::rename(tmp, p);
}

void copyRecursive(const fs::path & src, const fs::path & dst)
{
    auto st = fs::symlink_status(src);
    if (fs::is_symlink(st)) {
        fs::create_symlink(fs::read_symlink(src), dst);
    } else if (fs::is_directory(st)) {
        fs::create_directories(dst);
        for (auto & entry : fs::directory_iterator(src))
            copyRecursive(entry.path(), dst / entry.path().filename());
    } else if (fs::is_regular_file(st)) {
        fs::create_directories(dst.parent_path());
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        if (isExecutable(src))
            fs::permissions(dst,
                fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                fs::perm_options::add);
    } else {
        fail("IoError", "cannot copy special file '" + src.string() + "'");
    }
}

void deleteRecursive(const fs::path & p)
{
    if (!fs::exists(fs::symlink_status(p))) return;
    makeWritableRecursive(p);
    std::error_code ec;
    fs::remove_all(p, ec);
    if (ec) fail("IoError", "cannot delete '" + p.string() + "': " + ec.message());
}

static void chmodTree(const fs::path & p, bool readOnly)
{
    auto st = fs::symlink_status(p);
    if (fs::is_symlink(st)) return;
    std::error_code ec;
    if (readOnly)
        fs::permissions(p, fs::perms::owner_write | fs::perms::group_write | fs::perms::others_write,
            fs::perm_options::remove, ec);
    else
        fs::permissions(p, fs::perms::owner_write, fs::perm_options::add, ec);
    if (fs::is_directory(st)) {
        /* Directories need to stay writable while we descend; fix them up
           after the children when locking down. */
        if (readOnly)
            fs::permissions(p, fs::perms::owner_write, fs::perm_options::add, ec);
        for (auto & entry : fs::directory_iterator(p))
            chmodTree(entry.path(), readOnly);
        if (readOnly)
            fs::permissions(p, fs::perms::owner_write | fs::perms::group_write | fs::perms::others_write,
                fs::perm_options::remove, ec);
    }
}

void makeReadOnlyRecursive(const fs::path & p) { chmodTree(p, true); }
void makeWritableRecursive(const fs::path & p) { chmodTree(p, false); }

bool isExecutable(const fs::path & p)
{
    auto perms = fs::status(p).permissions();
    return (perms & fs::perms::owner_exec) != fs::perms::none;
}

uint64_t treeSize(const fs::path & p)
{
    auto st = fs::symlink_status(p);
    if (fs::is_symlink(st)) return fs::read_symlink(p).string().size();
    if (fs::is_regular_file(st)) return fs::file_size(p);
    uint64_t total = 0;
    if (fs::is_directory(st))
        for (auto & entry : fs::directory_iterator(p))
            total += treeSize(entry.path());
    return total;
}

int runProcess(const fs::path & program, const std::vector<std::string> & args,
    const std::map<std::string, std::string> & env, const fs::path & cwd, std::string & output)
{
    int pipefd[2];
    if (pipe(pipefd) != 0) fail("IoError", "pipe failed");

    pid_t pid = fork();
    if (pid < 0) fail("IoError", "fork failed");
    if (pid == 0) {
        close(pipefd[0]);
        dup2(pipefd[1], 1);
        dup2(pipefd[1], 2);
        close(pipefd[1]);
        if (chdir(cwd.c_str()) != 0) _exit(126);
        std::vector<std::string> envStrings;
        for (auto & [k, v] : env) envStrings.push_back(k + "=" + v);
        std::vector<char *> envp;
        for (auto & s : envStrings) envp.push_back(const_cast<char *>(s.c_str()));
        envp.push_back(nullptr);
        std::vector<char *> argv;
        std::string prog = program.string();
        argv.push_back(const_cast<char *>(prog.c_str()));
        for (auto & a : args) argv.push_back(const_cast<char *>(a.c_str()));
        argv.push_back(nullptr);
        execve(prog.c_str(), argv.data(), envp.data());
        _exit(127);
    }
    close(pipefd[1]);
    char buf[4096];
    ssize_t n;
    while ((n = read(pipefd[0], buf, sizeof buf)) > 0) output.append(buf, static_cast<size_t>(n));
    close(pipefd[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.emplace_back(s.substr(pos));
            break;
        }
        out.emplace_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

std::string hexEncode(const unsigned char * data, size_t len)
{
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out += digits[data[i] >> 4];
        out += digits[data[i] & 0xf];
    }
    return out;
}

}
