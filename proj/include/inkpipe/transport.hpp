#pragma once

#include <fcntl.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <utility>

#include "inkpipe/error.hpp"

namespace inkpipe::transport {

/// Owning POSIX file descriptor.
class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) noexcept : fd_(fd) {}
  UniqueFd(UniqueFd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& other) noexcept {
    if (this != &other) {
      reset(std::exchange(other.fd_, -1));
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void reset(int fd = -1) noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

inline void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::BackendIo, std::string("write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

/// Fills `out` completely; EOF before that is an error.
inline void read_exact(int fd, std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::read(fd, out.data() + done, out.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::BackendIo, std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      throw Error(ErrorCode::BackendIo, "peer closed the connection");
    }
    done += static_cast<std::size_t>(n);
  }
}

/// A bidirectional byte channel: a spawned child's stdio or a TCP socket.
class Channel {
 public:
  Channel() = default;
  Channel(Channel&& other) noexcept
      : read_fd_(std::move(other.read_fd_)),
        write_fd_(std::move(other.write_fd_)),
        child_(std::exchange(other.child_, -1)) {}
  Channel& operator=(Channel&& other) noexcept {
    if (this != &other) {
      shutdown();
      read_fd_ = std::move(other.read_fd_);
      write_fd_ = std::move(other.write_fd_);
      child_ = std::exchange(other.child_, -1);
    }
    return *this;
  }
  ~Channel() { shutdown(); }

  /// Runs `command` through /bin/sh with its stdin/stdout connected to us.
  /// stderr is inherited.
  static Channel spawn(const std::string& command) {
    // A dead peer must surface as EPIPE, not kill the process.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) {
      throw Error(ErrorCode::SpawnFailed, std::string("pipe: ") + std::strerror(errno));
    }
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error(ErrorCode::SpawnFailed, std::string("pipe: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw Error(ErrorCode::SpawnFailed, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    Channel ch;
    ch.write_fd_.reset(to_child[1]);
    ch.read_fd_.reset(from_child[0]);
    ch.child_ = pid;
    return ch;
  }

  static Channel connect_tcp(const std::string& host, const std::string& port) {
    ::signal(SIGPIPE, SIG_IGN);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw Error(ErrorCode::SpawnFailed, host + ":" + port + ": " + ::gai_strerror(rc));
    }
    std::string last_error = "no addresses";
    UniqueFd sock;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      UniqueFd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
      if (!fd.valid()) {
        last_error = std::strerror(errno);
        continue;
      }
      if (::connect(fd.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
        sock = std::move(fd);
        break;
      }
      last_error = std::strerror(errno);
    }
    ::freeaddrinfo(res);
    if (!sock.valid()) {
      throw Error(ErrorCode::SpawnFailed, "connect " + host + ":" + port + ": " + last_error);
    }
    Channel ch;
    ch.write_fd_.reset(::dup(sock.get()));
    ch.read_fd_ = std::move(sock);
    return ch;
  }

  /// Wraps descriptors the caller already owns (used for server-side stdio).
  static Channel from_fds(int read_fd, int write_fd) {
    Channel ch;
    ch.read_fd_.reset(read_fd);
    ch.write_fd_.reset(write_fd);
    return ch;
  }

  void write(std::span<const std::uint8_t> bytes) { write_all(write_fd_.get(), bytes); }
  void read(std::span<std::uint8_t> out) { read_exact(read_fd_.get(), out); }

  /// Like read(), but a clean EOF before the first byte returns false.
  bool read_unless_eof(std::span<std::uint8_t> out) {
    if (out.empty()) return true;
    for (;;) {
      const ssize_t n = ::read(read_fd_.get(), out.data(), 1);
      if (n == 1) break;
      if (n == 0) return false;
      if (errno != EINTR) {
        throw Error(ErrorCode::BackendIo, std::string("read failed: ") + std::strerror(errno));
      }
    }
    read_exact(read_fd_.get(), out.subspan(1));
    return true;
  }

  /// Closes our write side so the peer sees EOF.
  void close_write() noexcept { write_fd_.reset(); }

  bool is_child_process() const noexcept { return child_ > 0; }

  /// Breaks the connection without releasing descriptors, so a thread blocked
  /// on the other direction fails promptly. Safe to call concurrently with I/O.
  void abort() noexcept {
    if (child_ > 0) {
      ::kill(child_, SIGKILL);
    } else if (read_fd_.valid()) {
      ::shutdown(read_fd_.get(), SHUT_RDWR);
    }
  }

  /// Closes both directions and reaps a spawned child, killing it if it does
  /// not exit shortly after seeing EOF.
  void shutdown() noexcept {
    write_fd_.reset();
    read_fd_.reset();
    if (child_ > 0) {
      int status = 0;
      for (int i = 0; i < 200; ++i) {
        if (::waitpid(child_, &status, WNOHANG) == child_) {
          child_ = -1;
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      ::kill(child_, SIGKILL);
      ::waitpid(child_, &status, 0);
      child_ = -1;
    }
  }

 private:
  UniqueFd read_fd_;
  UniqueFd write_fd_;
  pid_t child_ = -1;
};

}  // namespace inkpipe::transport
