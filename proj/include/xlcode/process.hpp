#pragma once

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace xlcode::process {

struct RunOptions {
    std::filesystem::path working_dir;         // empty: inherit
    std::chrono::milliseconds timeout{10000};  // wall clock
    std::size_t max_output_bytes = 1 << 20;    // per stream; excess is discarded
    bool isolate_network = false;              // unshare a fresh network namespace
    std::optional<rlim_t> address_space_bytes; // RLIMIT_AS, unset: inherit
    std::string stdin_data;
};

struct RunResult {
    int exit_code = -1;     // valid when !signaled && !timed_out
    int term_signal = 0;
    bool signaled = false;
    bool timed_out = false;
    bool network_isolated = false;
    std::string stdout_data;
    std::string stderr_data;
    double wall_seconds = 0.0;
    pid_t pgid = 0;
};

// Searches PATH for an executable; absolute/relative paths are checked directly.
inline std::optional<std::filesystem::path> find_executable(const std::string& name) {
    if (name.empty())
        return std::nullopt;
    if (name.find('/') != std::string::npos) {
        if (::access(name.c_str(), X_OK) == 0)
            return std::filesystem::path(name);
        return std::nullopt;
    }
    const char* path_env = std::getenv("PATH");
    std::string path = path_env ? path_env : "/usr/bin:/bin";
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find(':', start);
        if (end == std::string::npos)
            end = path.size();
        std::filesystem::path dir = path.substr(start, end - start);
        if (dir.empty())
            dir = ".";
        auto candidate = dir / name;
        if (::access(candidate.c_str(), X_OK) == 0)
            return candidate;
        start = end + 1;
    }
    return std::nullopt;
}

namespace detail {

inline void set_nonblocking(int fd) {
    int flags = ::fcntl(fd, F_GETFL);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

inline void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

[[noreturn]] inline void child_fail(int err_fd, const char* what) {
    int e = errno;
    char buf[256];
    int n = std::snprintf(buf, sizeof buf, "%s: %s", what, std::strerror(e));
    if (n > 0)
        (void)!::write(err_fd, buf, static_cast<std::size_t>(n));
    ::_exit(127);
}

} // namespace detail

// Runs argv[0] (resolved on PATH) in its own process group. On timeout the
// whole group is killed with SIGKILL and reaped before returning.
inline RunResult run(const std::vector<std::string>& argv, const RunOptions& opts) {
    if (argv.empty())
        throw InvalidArgument("process::run: empty argv");
    auto exe = find_executable(argv[0]);
    if (!exe)
        throw ConfigError("executable not found: " + argv[0]);

    int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 ||
        ::pipe2(err_pipe, O_CLOEXEC) != 0 || ::pipe2(exec_pipe, O_CLOEXEC) != 0)
        throw InfrastructureError(std::string("pipe: ") + std::strerror(errno));

    static const bool sigpipe_ignored = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;

    std::vector<std::string> args_copy = argv;
    args_copy[0] = exe->string();
    std::vector<char*> cargv;
    for (auto& a : args_copy)
        cargv.push_back(a.data());
    cargv.push_back(nullptr);

    auto start = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0)
        throw InfrastructureError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        ::signal(SIGPIPE, SIG_DFL);
        // 0 = not requested, 1 = isolated, 2 = unshare refused (best effort)
        char isolation = 0;
        if (opts.isolate_network) {
            isolation = 2;
            if (::unshare(CLONE_NEWNET) == 0 || ::unshare(CLONE_NEWUSER | CLONE_NEWNET) == 0)
                isolation = 1;
        }
        (void)!::write(exec_pipe[1], &isolation, 1);
        if (opts.address_space_bytes) {
            rlimit lim{*opts.address_space_bytes, *opts.address_space_bytes};
            ::setrlimit(RLIMIT_AS, &lim);
        }
        if (!opts.working_dir.empty() && ::chdir(opts.working_dir.c_str()) != 0)
            detail::child_fail(exec_pipe[1], "chdir");
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::execv(cargv[0], cargv.data());
        detail::child_fail(exec_pipe[1], "exec");
    }
    ::setpgid(pid, pid); // races benignly with the child's own call

    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[1]);

    RunResult result;
    result.pgid = pid;

    // The exec pipe carries the isolation byte, then (only on failure) a message;
    // it reaches EOF once exec succeeds because of O_CLOEXEC.
    std::string exec_msg;
    {
        char buf[512];
        ssize_t n;
        while ((n = ::read(exec_pipe[0], buf, sizeof buf)) > 0)
            exec_msg.append(buf, static_cast<std::size_t>(n));
        ::close(exec_pipe[0]);
    }
    if (!exec_msg.empty()) {
        result.network_isolated = exec_msg[0] == 1;
        exec_msg.erase(0, 1);
    }
    if (!exec_msg.empty()) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);
        throw InfrastructureError("sandbox setup failed: " + exec_msg);
    }

    int in_fd = in_pipe[1], out_fd = out_pipe[0], err_fd = err_pipe[0];
    detail::set_nonblocking(in_fd);
    detail::set_nonblocking(out_fd);
    detail::set_nonblocking(err_fd);
    std::size_t in_off = 0;
    if (opts.stdin_data.empty())
        detail::close_fd(in_fd);

    auto deadline = start + opts.timeout;
    bool killed = false;
    auto append_capped = [&](std::string& dst, const char* src, std::size_t n) {
        if (dst.size() < opts.max_output_bytes)
            dst.append(src, std::min(n, opts.max_output_bytes - dst.size()));
    };

    while (out_fd >= 0 || err_fd >= 0) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            ::kill(-pid, SIGKILL);
            killed = true;
            break;
        }
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
        pollfd fds[3];
        int nfds = 0;
        int idx_out = -1, idx_err = -1, idx_in = -1;
        if (out_fd >= 0) { idx_out = nfds; fds[nfds++] = {out_fd, POLLIN, 0}; }
        if (err_fd >= 0) { idx_err = nfds; fds[nfds++] = {err_fd, POLLIN, 0}; }
        if (in_fd >= 0) { idx_in = nfds; fds[nfds++] = {in_fd, POLLOUT, 0}; }
        int rc = ::poll(fds, static_cast<nfds_t>(nfds), wait_ms);
        if (rc < 0) {
            if (errno == EINTR)
                continue;
            ::kill(-pid, SIGKILL);
            killed = true;
            break;
        }
        char buf[8192];
        auto drain = [&](int idx, int& fd, std::string& dst) {
            if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR)))
                return;
            ssize_t n = ::read(fd, buf, sizeof buf);
            if (n > 0)
                append_capped(dst, buf, static_cast<std::size_t>(n));
            else if (n == 0 || (errno != EAGAIN && errno != EINTR))
                detail::close_fd(fd);
        };
        drain(idx_out, out_fd, result.stdout_data);
        drain(idx_err, err_fd, result.stderr_data);
        if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
            ssize_t n = ::write(in_fd, opts.stdin_data.data() + in_off,
                                opts.stdin_data.size() - in_off);
            if (n > 0)
                in_off += static_cast<std::size_t>(n);
            if ((n < 0 && errno != EAGAIN && errno != EINTR) || in_off >= opts.stdin_data.size())
                detail::close_fd(in_fd);
        }
    }
    detail::close_fd(in_fd);
    detail::close_fd(out_fd);
    detail::close_fd(err_fd);

    // Pipes can close before the process exits; keep honouring the deadline.
    int status = 0;
    while (true) {
        pid_t w = ::waitpid(pid, &status, killed ? 0 : WNOHANG);
        if (w == pid)
            break;
        if (w < 0 && errno != EINTR)
            throw InfrastructureError(std::string("waitpid: ") + std::strerror(errno));
        if (!killed && std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            killed = true;
            continue;
        }
        if (!killed)
            ::usleep(1000);
    }
    // Leftover members of the group (background children) never outlive a run.
    ::kill(-pid, SIGKILL);

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.timed_out = killed;
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.signaled = true;
        result.term_signal = WTERMSIG(status);
    }
    return result;
}

} // namespace xlcode::process
