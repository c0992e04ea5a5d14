#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace reasonlab {

struct ProgramRunResult {
    std::string stdout_text;
    std::string stderr_text;
    int exit_status = 0;   // negative = terminated by signal -exit_status
    bool timed_out = false;
};

struct ProgramRunOptions {
    // Interpreter argv; the script path is appended. The default runs the
    // system Python without user site-packages.
    std::vector<std::string> interpreter{"python3", "-s"};
    std::chrono::milliseconds time_limit{10'000};
    std::size_t output_cap = 64 * 1024 * 1024;
    // Prepends an audit-hook prelude that blocks network use, subprocesses,
    // and file reads outside the scratch directory (and the interpreter's
    // own prefix). Applies to Python interpreters only.
    bool python_guard = true;
    // Scratch parent; empty uses the system temp directory. Each run gets a
    // private subdirectory as its working directory, removed afterwards.
    std::filesystem::path scratch_root;
};

// Runs `source` in an isolated interpreter subprocess: minimal environment,
// working directory confined to a scratch area, stdout/stderr captured, the
// whole process group killed once time_limit passes.
//
// Throws ConfigError when the interpreter itself cannot be executed; program
// failures come back in the result.
ProgramRunResult run_program(const std::string& source,
                             const std::string& stdin_text,
                             const ProgramRunOptions& options = {});

}  // namespace reasonlab
