#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aps/error.hpp"

namespace aps {

class LaunchError : public Error {
 public:
  using Error::Error;
};

/// Child process with line-oriented stdin/stdout and captured stderr. The child runs in its
/// own process group so that a forced kill also reaches anything it spawned.
class Subprocess {
 public:
  using Clock = std::chrono::steady_clock;

  enum class ReadStatus { Line, Timeout, Eof, Overflow };

  /// Throws LaunchError with the OS error text if the program cannot be executed.
  static Subprocess spawn(const std::vector<std::string>& argv);

  Subprocess(Subprocess&& other) noexcept;
  Subprocess& operator=(Subprocess&& other) noexcept;
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess();

  /// Writes all bytes unless the deadline passes or the child closed its input.
  bool write_all(std::string_view data, Clock::time_point deadline);
  /// Next stdout line without the trailing newline.
  ReadStatus read_line(std::string& line, Clock::time_point deadline);
  void close_stdin();

  /// Exit status once the child has ended; nullopt if it is still running at the deadline.
  struct ExitStatus {
    std::optional<int> code;
    std::optional<int> signal;
  };
  std::optional<ExitStatus> wait_until(Clock::time_point deadline);
  ExitStatus kill_and_wait();

  /// Everything captured from stderr so far (capped).
  const std::string& stderr_text();
  int pid() const { return pid_; }

 private:
  Subprocess() = default;
  void drain_stderr(int timeout_ms);
  void release();

  int pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  int err_fd_ = -1;
  std::string out_buf_;
  std::string err_buf_;
  bool err_truncated_ = false;
  std::optional<ExitStatus> exit_;
};

}  // namespace aps
