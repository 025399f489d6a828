#include "aps/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

namespace aps {
namespace {

constexpr std::size_t kMaxLine = 1 << 20;
constexpr std::size_t kMaxStderr = 64 * 1024;

int ms_until(Subprocess::Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Subprocess::Clock::now());
  return static_cast<int>(std::clamp<long long>(left.count(), 0, 60'000));
}

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

Subprocess::ExitStatus decode(int status) {
  Subprocess::ExitStatus s;
  if (WIFEXITED(status)) s.code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) s.signal = WTERMSIG(status);
  return s;
}

}  // namespace

Subprocess Subprocess::spawn(const std::vector<std::string>& argv) {
  if (argv.empty()) throw LaunchError("empty command line");
  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  int in_pair[2], out_pair[2], err_pipe[2], exec_pipe[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0) {
    throw LaunchError(std::string("socketpair: ") + std::strerror(errno));
  }
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, out_pair) != 0) {
    ::close(in_pair[0]);
    ::close(in_pair[1]);
    throw LaunchError(std::string("socketpair: ") + std::strerror(errno));
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0 || ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pair[0], in_pair[1], out_pair[0], out_pair[1]}) ::close(fd);
    throw LaunchError(std::string("pipe: ") + std::strerror(errno));
  }

  const pid_t pid = ::fork();
  if (pid < 0) {
    const int err = errno;
    for (int fd : {in_pair[0], in_pair[1], out_pair[0], out_pair[1], err_pipe[0], err_pipe[1], exec_pipe[0],
                   exec_pipe[1]}) {
      ::close(fd);
    }
    throw LaunchError(std::string("fork: ") + std::strerror(err));
  }
  if (pid == 0) {
    // Child: only async-signal-safe calls from here on.
    ::setpgid(0, 0);
    ::signal(SIGPIPE, SIG_DFL);
    ::dup2(in_pair[1], STDIN_FILENO);
    ::dup2(out_pair[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::execvp(cargv[0], cargv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof err);
    ::_exit(127);
  }

  ::close(in_pair[1]);
  ::close(out_pair[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  int exec_errno = 0;
  ssize_t n;
  do {
    n = ::read(exec_pipe[0], &exec_errno, sizeof exec_errno);
  } while (n < 0 && errno == EINTR);
  ::close(exec_pipe[0]);
  if (n == static_cast<ssize_t>(sizeof exec_errno)) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    ::close(in_pair[0]);
    ::close(out_pair[0]);
    ::close(err_pipe[0]);
    throw LaunchError("cannot execute '" + argv[0] + "': " + std::strerror(exec_errno));
  }

  Subprocess p;
  p.pid_ = pid;
  p.in_fd_ = in_pair[0];
  p.out_fd_ = out_pair[0];
  p.err_fd_ = err_pipe[0];
  ::fcntl(p.in_fd_, F_SETFL, ::fcntl(p.in_fd_, F_GETFL) | O_NONBLOCK);
  ::fcntl(p.out_fd_, F_SETFL, ::fcntl(p.out_fd_, F_GETFL) | O_NONBLOCK);
  ::fcntl(p.err_fd_, F_SETFL, ::fcntl(p.err_fd_, F_GETFL) | O_NONBLOCK);
  return p;
}

Subprocess::Subprocess(Subprocess&& o) noexcept
    : pid_(std::exchange(o.pid_, -1)),
      in_fd_(std::exchange(o.in_fd_, -1)),
      out_fd_(std::exchange(o.out_fd_, -1)),
      err_fd_(std::exchange(o.err_fd_, -1)),
      out_buf_(std::move(o.out_buf_)),
      err_buf_(std::move(o.err_buf_)),
      err_truncated_(o.err_truncated_),
      exit_(o.exit_) {}

Subprocess& Subprocess::operator=(Subprocess&& o) noexcept {
  if (this != &o) {
    release();
    pid_ = std::exchange(o.pid_, -1);
    in_fd_ = std::exchange(o.in_fd_, -1);
    out_fd_ = std::exchange(o.out_fd_, -1);
    err_fd_ = std::exchange(o.err_fd_, -1);
    out_buf_ = std::move(o.out_buf_);
    err_buf_ = std::move(o.err_buf_);
    err_truncated_ = o.err_truncated_;
    exit_ = o.exit_;
  }
  return *this;
}

Subprocess::~Subprocess() { release(); }

void Subprocess::release() {
  if (pid_ > 0 && !exit_) kill_and_wait();
  close_fd(in_fd_);
  close_fd(out_fd_);
  close_fd(err_fd_);
  pid_ = -1;
}

void Subprocess::drain_stderr(int timeout_ms) {
  if (err_fd_ < 0) return;
  pollfd p{err_fd_, POLLIN, 0};
  while (::poll(&p, 1, timeout_ms) > 0) {
    char buf[4096];
    const ssize_t n = ::read(err_fd_, buf, sizeof buf);
    if (n <= 0) {
      if (n == 0) close_fd(err_fd_);
      return;
    }
    const auto room = kMaxStderr > err_buf_.size() ? kMaxStderr - err_buf_.size() : 0;
    err_buf_.append(buf, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
    if (static_cast<std::size_t>(n) > room) err_truncated_ = true;
    timeout_ms = 0;
  }
}

const std::string& Subprocess::stderr_text() {
  drain_stderr(0);
  if (err_truncated_ && !err_buf_.ends_with("\n[stderr truncated]\n")) err_buf_ += "\n[stderr truncated]\n";
  return err_buf_;
}

bool Subprocess::write_all(std::string_view data, Clock::time_point deadline) {
  if (in_fd_ < 0) return false;
  while (!data.empty()) {
    const ssize_t n = ::send(in_fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n > 0) {
      data.remove_prefix(static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd p{in_fd_, POLLOUT, 0};
      const int wait = ms_until(deadline);
      if (wait == 0 || ::poll(&p, 1, wait) <= 0) return false;
      continue;
    }
    return false;  // EPIPE and friends: the child is gone
  }
  return true;
}

void Subprocess::close_stdin() { close_fd(in_fd_); }

Subprocess::ReadStatus Subprocess::read_line(std::string& line, Clock::time_point deadline) {
  for (;;) {
    const auto nl = out_buf_.find('\n');
    if (nl != std::string::npos) {
      line.assign(out_buf_, 0, nl);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      out_buf_.erase(0, nl + 1);
      return ReadStatus::Line;
    }
    if (out_buf_.size() > kMaxLine) {
      line = out_buf_.substr(0, 256);
      out_buf_.clear();
      return ReadStatus::Overflow;
    }
    if (out_fd_ < 0) return ReadStatus::Eof;

    pollfd fds[2] = {{out_fd_, POLLIN, 0}, {err_fd_, POLLIN, 0}};
    const nfds_t nfds = err_fd_ >= 0 ? 2 : 1;
    const int wait = ms_until(deadline);
    const int rc = ::poll(fds, nfds, wait);
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) {
      if (Clock::now() >= deadline) return ReadStatus::Timeout;
      continue;
    }
    if (nfds == 2 && (fds[1].revents & (POLLIN | POLLHUP))) drain_stderr(0);
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[4096];
      const ssize_t n = ::read(out_fd_, buf, sizeof buf);
      if (n > 0) {
        out_buf_.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        close_fd(out_fd_);
        if (!out_buf_.empty()) {
          // unterminated last line
          line = std::exchange(out_buf_, {});
          return ReadStatus::Line;
        }
        return ReadStatus::Eof;
      }
    }
  }
}

std::optional<Subprocess::ExitStatus> Subprocess::wait_until(Clock::time_point deadline) {
  if (exit_) return exit_;
  if (pid_ <= 0) return std::nullopt;
  for (;;) {
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
      exit_ = decode(status);
      drain_stderr(50);
      return exit_;
    }
    if (r < 0 && errno != EINTR) {
      exit_ = ExitStatus{};
      return exit_;
    }
    if (Clock::now() >= deadline) return std::nullopt;
    drain_stderr(5);
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

Subprocess::ExitStatus Subprocess::kill_and_wait() {
  if (exit_) return *exit_;
  if (pid_ <= 0) return {};
  ::kill(-pid_, SIGKILL);
  ::kill(pid_, SIGKILL);
  int status = 0;
  pid_t r;
  do {
    r = ::waitpid(pid_, &status, 0);
  } while (r < 0 && errno == EINTR);
  exit_ = r == pid_ ? decode(status) : ExitStatus{};
  drain_stderr(0);
  return *exit_;
}

}  // namespace aps
