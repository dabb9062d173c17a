#include "setcomp/error.hpp"
#include "setcomp/rerank.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace setcomp {

namespace {

/// Line-oriented child process: one request per line on its stdin, one
/// response per line on its stdout. Restarted after a timeout or crash.
class SubprocessTransport final : public ScorerTransport {
public:
    SubprocessTransport(std::string command, std::chrono::milliseconds timeout)
        : command_(std::move(command)), timeout_(timeout) {
        ::signal(SIGPIPE, SIG_IGN);
    }

    ~SubprocessTransport() override { stop(); }

    std::optional<std::string> exchange(const std::string& request) override {
        if (pid_ <= 0) start();
        const std::string line = request + "\n";
        if (!write_all(line)) {
            stop();
            throw TransportError("scorer process closed its input: " + command_);
        }
        auto reply = read_line();
        if (!reply) stop();  // hung child; the next call starts a fresh one
        return reply;
    }

private:
    void start() {
        int to_child[2];
        int from_child[2];
        if (::pipe(to_child) != 0) throw TransportError(std::string("pipe: ") + std::strerror(errno));
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw TransportError(std::string("pipe: ") + std::strerror(errno));
        }
        const pid_t pid = ::fork();
        if (pid < 0) throw TransportError(std::string("fork: ") + std::strerror(errno));
        if (pid == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        pid_ = pid;
        in_fd_ = to_child[1];
        out_fd_ = from_child[0];
        buffer_.clear();
    }

    void stop() {
        if (in_fd_ >= 0) ::close(in_fd_);
        if (out_fd_ >= 0) ::close(out_fd_);
        in_fd_ = out_fd_ = -1;
        if (pid_ > 0) {
            int status = 0;
            // give a well-behaved child a moment to exit on EOF
            for (int i = 0; i < 20; ++i) {
                if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                    pid_ = -1;
                    return;
                }
                ::usleep(5000);
            }
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    bool write_all(const std::string& data) {
        std::size_t off = 0;
        while (off < data.size()) {
            const auto n = ::write(in_fd_, data.data() + off, data.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                return false;
            }
            off += static_cast<std::size_t>(n);
        }
        return true;
    }

    std::optional<std::string> read_line() {
        const auto deadline = std::chrono::steady_clock::now() + timeout_;
        for (;;) {
            if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return std::nullopt;
            pollfd pfd{out_fd_, POLLIN, 0};
            const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
            if (ready < 0 && errno == EINTR) continue;
            if (ready == 0) return std::nullopt;
            char chunk[4096];
            const auto n = ::read(out_fd_, chunk, sizeof chunk);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) {
                stop();
                throw TransportError("scorer process exited: " + command_);
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    std::string command_;
    std::chrono::milliseconds timeout_;
    pid_t pid_ = -1;
    int in_fd_ = -1;
    int out_fd_ = -1;
    std::string buffer_;
};

/// POST {base}/score with the request object; the body is the response.
class HttpTransport final : public ScorerTransport {
public:
    HttpTransport(const std::string& url, std::chrono::milliseconds timeout) {
        // split "scheme://host[:port][/prefix]"
        const auto scheme_end = url.find("://");
        const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const auto path_start = url.find('/', host_start);
        base_ = url.substr(0, path_start);
        path_ = (path_start == std::string::npos ? std::string() : url.substr(path_start));
        while (!path_.empty() && path_.back() == '/') path_.pop_back();
        path_ += "/score";
        client_ = std::make_unique<httplib::Client>(base_);
        const auto secs = timeout.count() / 1000;
        const auto usecs = (timeout.count() % 1000) * 1000;
        client_->set_connection_timeout(secs, usecs);
        client_->set_read_timeout(secs, usecs);
        client_->set_write_timeout(secs, usecs);
    }

    std::optional<std::string> exchange(const std::string& request) override {
        auto res = client_->Post(path_, request, "application/json");
        if (!res) {
            if (res.error() == httplib::Error::Read) return std::nullopt;  // read timeout
            throw TransportError("http scorer " + base_ + path_ + ": " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw TransportError("http scorer returned status " + std::to_string(res->status));
        }
        auto body = res->body;
        while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
        return body;
    }

private:
    std::string base_;
    std::string path_;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace

std::unique_ptr<ScorerTransport> make_transport(const ScorerProtocolConfig& cfg) {
    if (cfg.transport == ScorerProtocolConfig::Transport::Http) {
        return std::make_unique<HttpTransport>(cfg.target, cfg.timeout);
    }
    return std::make_unique<SubprocessTransport>(cfg.target, cfg.timeout);
}

}  // namespace setcomp
