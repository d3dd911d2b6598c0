#include "tsrca/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <stdexcept>

#include <sys/wait.h>
#include <unistd.h>

namespace tsrca {

LineProcess::LineProcess(const std::string& command) {
    int to_pipe[2];
    int from_pipe[2];
    if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0) {
        throw std::runtime_error("subprocess: pipe() failed: " + std::string(strerror(errno)));
    }
    pid_ = fork();
    if (pid_ < 0) {
        throw std::runtime_error("subprocess: fork() failed: " + std::string(strerror(errno)));
    }
    if (pid_ == 0) {
        dup2(to_pipe[0], STDIN_FILENO);
        dup2(from_pipe[1], STDOUT_FILENO);
        close(to_pipe[0]);
        close(to_pipe[1]);
        close(from_pipe[0]);
        close(from_pipe[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_pipe[0]);
    close(from_pipe[1]);
    to_child_ = to_pipe[1];
    from_child_ = from_pipe[0];
}

LineProcess::~LineProcess() { terminate(); }

void LineProcess::write_line(const std::string& line) {
    if (pid_ <= 0) throw std::runtime_error("subprocess: not running");
    std::string payload = line;
    payload.push_back('\n');
    std::size_t written = 0;
    while (written < payload.size()) {
        const ssize_t n = ::write(to_child_, payload.data() + written, payload.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error("subprocess: write failed: " + std::string(strerror(errno)));
        }
        written += static_cast<std::size_t>(n);
    }
}

std::string LineProcess::read_line() {
    if (pid_ <= 0) throw std::runtime_error("subprocess: not running");
    for (;;) {
        const std::size_t nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error("subprocess: read failed: " + std::string(strerror(errno)));
        }
        if (n == 0) throw std::runtime_error("subprocess: unexpected end of stream");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void LineProcess::terminate() {
    if (pid_ <= 0) return;
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    to_child_ = -1;
    from_child_ = -1;
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
        kill(pid_, SIGTERM);
        waitpid(pid_, &status, 0);
    }
    pid_ = -1;
}

}  // namespace tsrca
