#pragma once

#include <string>

#include <sys/types.h>

namespace tsrca {

/// A child process spoken to over line-delimited text on stdin/stdout.
class LineProcess {
public:
    explicit LineProcess(const std::string& command);
    ~LineProcess();

    LineProcess(const LineProcess&) = delete;
    LineProcess& operator=(const LineProcess&) = delete;

    bool running() const { return pid_ > 0; }

    /// Writes one line (appends '\n'). Throws on broken pipe.
    void write_line(const std::string& line);

    /// Reads one line, without the trailing '\n'. Throws on EOF.
    std::string read_line();

    void terminate();

private:
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

}  // namespace tsrca
