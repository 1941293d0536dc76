#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <pthread.h>
#include <sys/wait.h>
#include <unistd.h>

#include "costtune/errors.hpp"
#include "costtune/exec_backend.hpp"

namespace costtune {

namespace {

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

/// Blocks SIGPIPE for the calling thread while alive and swallows any
/// instance raised by writing to a dead child.
class SigpipeGuard {
public:
    SigpipeGuard() {
        sigemptyset(&pipe_set_);
        sigaddset(&pipe_set_, SIGPIPE);
        sigset_t pending;
        sigpending(&pending);
        was_pending_ = sigismember(&pending, SIGPIPE) == 1;
        pthread_sigmask(SIG_BLOCK, &pipe_set_, &old_);
    }
    ~SigpipeGuard() {
        if (!was_pending_) {
            const timespec zero{0, 0};
            while (sigtimedwait(&pipe_set_, nullptr, &zero) > 0) {
            }
        }
        pthread_sigmask(SIG_SETMASK, &old_, nullptr);
    }
    SigpipeGuard(const SigpipeGuard&) = delete;
    SigpipeGuard& operator=(const SigpipeGuard&) = delete;

private:
    sigset_t pipe_set_{};
    sigset_t old_{};
    bool was_pending_ = false;
};

} // namespace

SubprocessBackend::SubprocessBackend(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) throw InvalidArgument("subprocess backend needs a command");
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) throw BackendError(std::string("pipe: ") + std::strerror(errno));
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw BackendError(std::string("pipe: ") + std::strerror(errno));
    }
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) throw BackendError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execvp(args[0], args.data());
        std::fprintf(stderr, "exec %s: %s\n", args[0], std::strerror(errno));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = ::fdopen(out_pipe[0], "r");
    if (!from_child_) {
        ::close(out_pipe[0]);
        throw BackendError("fdopen failed for child stdout");
    }
}

SubprocessBackend::~SubprocessBackend() {
    close_fd(to_child_);
    if (from_child_) std::fclose(from_child_);
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }
}

std::string SubprocessBackend::child_status() {
    if (pid_ <= 0) return "child not running";
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) return "child exited with status " + std::to_string(WEXITSTATUS(status));
        if (WIFSIGNALED(status)) return "child killed by signal " + std::to_string(WTERMSIG(status));
    }
    return "child closed its output";
}

void SubprocessBackend::write_line(const std::string& line) {
    if (to_child_ < 0) throw BackendError("backend child is not running");
    const SigpipeGuard guard;
    std::string buf = line + '\n';
    std::size_t off = 0;
    while (off < buf.size()) {
        const ssize_t n = ::write(to_child_, buf.data() + off, buf.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BackendError("write to backend child failed: " + std::string(std::strerror(errno)));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::string SubprocessBackend::read_line() {
    std::string line;
    for (int c = std::fgetc(from_child_); c != EOF; c = std::fgetc(from_child_)) {
        if (c == '\n') return line;
        line.push_back(static_cast<char>(c));
    }
    ::usleep(1000);
    throw BackendError("backend produced no response: " + child_status());
}

std::string SubprocessBackend::encode_request(const ExecutionRequest& req) {
    nlohmann::json j;
    j["query_id"] = req.query.id;
    j["cost_units"] = to_json(req.units);
    if (req.early_stop_threshold) {
        j["timeout_ms"] = static_cast<std::int64_t>(std::floor(*req.early_stop_threshold * 1000.0));
    } else {
        j["timeout_ms"] = nullptr;
    }
    return j.dump();
}

ExecutionResult SubprocessBackend::execute(const ExecutionRequest& req) {
    write_line(encode_request(req));
    const auto resp = parse_wire_response(read_line());
    ExecutionResult out;
    out.plan_fingerprint = resp.plan_fingerprint;
    if (resp.timed_out) {
        if (!req.early_stop_threshold) throw BackendError("backend timed out a request that had no timeout");
        out.stopped_early = true;
        out.observed_time = out.charged_time = *req.early_stop_threshold;
        out.true_time = out.observed_time;
        return out;
    }
    double secs = resp.exec_ms / 1000.0;
    // Millisecond truncation of the timeout can leave secs a hair above the threshold.
    if (req.early_stop_threshold) secs = std::min(secs, *req.early_stop_threshold);
    out.observed_time = out.charged_time = out.true_time = secs;
    return out;
}

} // namespace costtune
