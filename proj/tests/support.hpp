#pragma once

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "noteqa.hpp"

// Shared test plumbing: repo-relative paths, warning capture, and a
// subprocess runner for the CLI binary.

namespace support {

inline std::string root() { return NOTEQA_SOURCE_DIR; }

inline std::string root(const std::string& rel) {
    return std::string(NOTEQA_SOURCE_DIR) + "/" + rel;
}

inline std::string fixture(const std::string& name) { return root("data/fixtures/" + name); }
inline std::string golden(const std::string& name) { return root("data/golden/" + name); }

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Captures log::warn output for the lifetime of the object.
class WarningCapture {
  public:
    WarningCapture()
        : old_(noteqa::log::set_sink(
              [this](const std::string& m) { messages_.push_back(m); })) {}
    ~WarningCapture() { noteqa::log::set_sink(old_); }

    const std::vector<std::string>& messages() const { return messages_; }

    bool contains(const std::string& needle) const {
        for (const std::string& m : messages_)
            if (m.find(needle) != std::string::npos) return true;
        return false;
    }

  private:
    std::vector<std::string> messages_;
    noteqa::log::Sink old_;
};

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline CliResult run_cli(const std::string& args) {
    static std::atomic<int> counter{0};
    std::string stem = "/tmp/noteqa_cli_" + std::to_string(counter.fetch_add(1));
    std::string cmd = std::string(NOTEQA_CLI_PATH) + " " + args + " >" + stem + ".out 2>" +
                      stem + ".err";
    int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(stem + ".out");
    result.err = slurp(stem + ".err");
    std::remove((stem + ".out").c_str());
    std::remove((stem + ".err").c_str());
    return result;
}

}  // namespace support
