#include "reasonlab/program_runner.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <system_error>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

namespace {

// PEP 578 audit hook: confines reads to the scratch directory and the
// interpreter prefix, and refuses sockets and subprocesses. Not a hard
// security boundary; it turns accidental escapes into loud failures.
constexpr const char* kPythonGuard = R"PY(
import os as _os, sys as _sys
_ALLOWED = tuple({_os.path.realpath(p) for p in (
    _os.getcwd(), _sys.prefix, _sys.base_prefix, _sys.exec_prefix)})
def _rl_guard(event, args):
    if event == "open":
        path = args[0]
        if isinstance(path, int):
            return
        if isinstance(path, bytes):
            path = path.decode(errors="ignore")
        if not isinstance(path, str):
            return
        full = _os.path.realpath(path)
        if not full.startswith(_ALLOWED):
            raise PermissionError("blocked file access: " + path)
    elif event in ("socket.connect", "socket.bind", "socket.sendto",
                   "socket.getaddrinfo"):
        raise PermissionError("network access is disabled")
    elif event in ("subprocess.Popen", "os.system", "os.exec", "os.spawn",
                   "os.fork", "os.posix_spawn"):
        raise PermissionError("subprocesses are disabled")
_sys.addaudithook(_rl_guard)
del _rl_guard
)PY";

struct Pipe {
    int read_fd = -1;
    int write_fd = -1;

    Pipe() {
        int fds[2];
        if (::pipe(fds) != 0) {
            throw std::system_error(errno, std::generic_category(), "pipe");
        }
        read_fd = fds[0];
        write_fd = fds[1];
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    void close_read() {
        if (read_fd >= 0) { ::close(read_fd); read_fd = -1; }
    }
    void close_write() {
        if (write_fd >= 0) { ::close(write_fd); write_fd = -1; }
    }
};

bool is_python(const std::vector<std::string>& interpreter) {
    if (interpreter.empty()) return false;
    const std::string stem =
        std::filesystem::path(interpreter.front()).filename().string();
    return stem.rfind("python", 0) == 0;
}

void set_nonblocking(int fd) {
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK);
}

// Drains fd into out (respecting cap; excess is discarded but still read so
// the child never blocks on a full pipe). Returns false once EOF is seen.
bool drain(int fd, std::string& out, std::size_t cap) {
    char buf[4096];
    for (;;) {
        const ssize_t n = ::read(fd, buf, sizeof(buf));
        if (n > 0) {
            if (out.size() < cap) {
                out.append(buf, buf + std::min<std::size_t>(n, cap - out.size()));
            }
            continue;
        }
        if (n == 0) return false;
        if (errno == EAGAIN || errno == EWOULDBLOCK) return true;
        return false;
    }
}

}  // namespace

ProgramRunResult run_program(const std::string& source,
                             const std::string& stdin_text,
                             const ProgramRunOptions& options) {
    namespace fs = std::filesystem;
    if (options.time_limit.count() <= 0) {
        throw ConfigError("run_program: time_limit must be positive");
    }
    if (options.interpreter.empty()) {
        throw ConfigError("run_program: empty interpreter command");
    }

    const fs::path root = options.scratch_root.empty()
                              ? fs::temp_directory_path()
                              : options.scratch_root;
    fs::create_directories(root);
    std::string tmpl = (root / "reasonlab.XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
        throw std::system_error(errno, std::generic_category(), "mkdtemp");
    }
    const fs::path scratch(tmpl);

    std::string script;
    if (options.python_guard && is_python(options.interpreter)) {
        script = std::string(kPythonGuard) + "\n" + source;
    } else {
        script = source;
    }
    const fs::path script_path = scratch / "main.py";
    util::atomic_write_file(script_path, script);

    Pipe child_stdin, child_stdout, child_stderr, exec_status;

    const pid_t pid = ::fork();
    if (pid < 0) {
        fs::remove_all(scratch);
        throw std::system_error(errno, std::generic_category(), "fork");
    }

    if (pid == 0) {
        // Child. Own process group so a timeout kill reaches grandchildren.
        ::setpgid(0, 0);
        ::dup2(child_stdin.read_fd, STDIN_FILENO);
        ::dup2(child_stdout.write_fd, STDOUT_FILENO);
        ::dup2(child_stderr.write_fd, STDERR_FILENO);
        child_stdin.close_read(); child_stdin.close_write();
        child_stdout.close_read(); child_stdout.close_write();
        child_stderr.close_read(); child_stderr.close_write();
        exec_status.close_read();
        ::fcntl(exec_status.write_fd, F_SETFD, FD_CLOEXEC);

        if (::chdir(scratch.c_str()) != 0) ::_exit(127);

        std::vector<std::string> argv_store = options.interpreter;
        argv_store.push_back(script_path.string());
        std::vector<char*> argv;
        for (std::string& arg : argv_store) argv.push_back(arg.data());
        argv.push_back(nullptr);

        const std::string home = "HOME=" + scratch.string();
        std::vector<const char*> envp = {
            "PATH=/usr/local/bin:/usr/bin:/bin",
            home.c_str(),
            "LC_ALL=C",
            "PYTHONHASHSEED=0",
            "PYTHONDONTWRITEBYTECODE=1",
            "PYTHONIOENCODING=utf-8",
            nullptr,
        };

        ::execvpe(argv[0], argv.data(), const_cast<char* const*>(envp.data()));
        const int err = errno;
        (void)!::write(exec_status.write_fd, &err, sizeof(err));
        ::_exit(127);
    }

    // Parent.
    ::setpgid(pid, pid);  // mirror the child's call; whoever wins, same group
    child_stdin.close_read();
    child_stdout.close_write();
    child_stderr.close_write();
    exec_status.close_write();

    // Exec failure (interpreter missing) is an environment error, not a
    // program failure.
    {
        int err = 0;
        const ssize_t n = ::read(exec_status.read_fd, &err, sizeof(err));
        if (n == static_cast<ssize_t>(sizeof(err))) {
            int status = 0;
            ::waitpid(pid, &status, 0);
            fs::remove_all(scratch);
            throw ConfigError("cannot execute interpreter '" +
                              options.interpreter.front() +
                              "': " + std::strerror(err));
        }
    }

    // Feed stdin (non-blocking, so a child that never reads cannot wedge the
    // parent), then close so the child sees EOF.
    {
        set_nonblocking(child_stdin.write_fd);
        ::signal(SIGPIPE, SIG_IGN);
        std::size_t written = 0;
        const auto stdin_deadline =
            std::chrono::steady_clock::now() + options.time_limit;
        while (written < stdin_text.size() &&
               std::chrono::steady_clock::now() < stdin_deadline) {
            const ssize_t n = ::write(child_stdin.write_fd,
                                      stdin_text.data() + written,
                                      stdin_text.size() - written);
            if (n > 0) {
                written += static_cast<std::size_t>(n);
            } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
                struct pollfd pfd{child_stdin.write_fd, POLLOUT, 0};
                ::poll(&pfd, 1, 50);
            } else {
                break;  // EPIPE: the child exited or closed stdin
            }
        }
        child_stdin.close_write();
    }

    set_nonblocking(child_stdout.read_fd);
    set_nonblocking(child_stderr.read_fd);

    ProgramRunResult result;
    const auto deadline = std::chrono::steady_clock::now() + options.time_limit;
    bool stdout_open = true, stderr_open = true;

    while (stdout_open || stderr_open) {
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            break;
        }

        struct pollfd fds[2];
        nfds_t nfds = 0;
        if (stdout_open) fds[nfds++] = {child_stdout.read_fd, POLLIN, 0};
        if (stderr_open) fds[nfds++] = {child_stderr.read_fd, POLLIN, 0};

        const int rc = ::poll(fds, nfds, static_cast<int>(
            std::min<std::int64_t>(remaining.count(), 200)));
        if (rc < 0 && errno != EINTR) break;
        if (rc <= 0) continue;

        for (nfds_t i = 0; i < nfds; ++i) {
            if (!(fds[i].revents & (POLLIN | POLLHUP))) continue;
            if (fds[i].fd == child_stdout.read_fd) {
                stdout_open = drain(fds[i].fd, result.stdout_text, options.output_cap);
            } else {
                stderr_open = drain(fds[i].fd, result.stderr_text, options.output_cap);
            }
        }
    }

    // Collect whatever arrived before a timeout kill.
    if (result.timed_out) {
        drain(child_stdout.read_fd, result.stdout_text, options.output_cap);
        drain(child_stderr.read_fd, result.stderr_text, options.output_cap);
    }

    int status = 0;
    ::waitpid(pid, &status, 0);
    if (result.timed_out) {
        result.exit_status = -SIGKILL;
    } else if (WIFEXITED(status)) {
        result.exit_status = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_status = -WTERMSIG(status);
    } else {
        result.exit_status = -1;
    }

    std::error_code ec;
    fs::remove_all(scratch, ec);
    return result;
}

}  // namespace reasonlab
