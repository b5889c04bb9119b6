// Test peer for the PINK/1 client. Speaks the server side of the protocol
// over stdio or TCP with a handful of scripted behaviours:
//
//   identity    echo every patch
//   invert      255 - v
//   wrong_dims  reply one column short
//   error       answer every request with an error frame
//   reorder     collect requests until the input goes quiet, answer in reverse
//   die_after   exit after --count requests without answering the last one
//   version2    advertise protocol version 2 in the hello
//
// TCP mode prints "PORT <n>" on stdout, serves each connection on its own
// thread, and exits when stdin closes.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "inkpipe/protocol.hpp"

namespace {

using inkpipe::transport::Channel;
namespace pink = inkpipe::pink;

struct Behaviour {
  std::string adapter = "identity";
  int count = 1;
};

pink::Response answer(const pink::Request& req, const Behaviour& b) {
  pink::Response r;
  r.request_id = req.request_id;
  r.width = req.width;
  r.height = req.height;
  r.payload = req.payload;
  if (b.adapter == "invert") {
    for (auto& v : r.payload) v = static_cast<std::uint8_t>(255 - v);
  } else if (b.adapter == "wrong_dims" && req.width > 1) {
    r.width = static_cast<std::uint16_t>(req.width - 1);
    r.payload.assign(static_cast<std::size_t>(r.width) * r.height, 0);
  }
  return r;
}

bool input_pending(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0;
}

/// Returns the process exit status for this connection.
int serve(Channel& ch, int read_fd, const Behaviour& b) {
  try {
    const auto hello = pink::read_client_hello(ch);
    if (hello.version != pink::kVersion) {
      ch.write(pink::encode(pink::ErrorFrame{"unsupported protocol version " + std::to_string(hello.version)}));
      return 3;
    }
    pink::ServerHello reply;
    reply.name = "stub-" + b.adapter;
    if (b.adapter == "version2") reply.version = 2;
    ch.write(pink::encode(reply));

    int served = 0;
    std::vector<pink::Request> held;
    for (;;) {
      auto req = pink::read_client_frame(ch);
      if (!req) break;
      ++served;
      if (b.adapter == "die_after" && served >= b.count) return 4;
      if (b.adapter == "error") {
        ch.write(pink::encode(pink::ErrorFrame{"adapter failed on request " + std::to_string(req->request_id)}));
        continue;
      }
      if (b.adapter == "reorder") {
        held.push_back(std::move(*req));
        if (input_pending(read_fd, 50)) continue;
        for (auto it = held.rbegin(); it != held.rend(); ++it) ch.write(pink::encode(answer(*it, b)));
        held.clear();
        continue;
      }
      ch.write(pink::encode(answer(*req, b)));
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "stub: " << e.what() << '\n';
    return 5;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PINK/1 test peer"};
  Behaviour b;
  std::string transport = "stdio";
  int port = 0;
  app.add_option("--transport", transport)->check(CLI::IsMember({"stdio", "tcp"}));
  app.add_option("--adapter", b.adapter)
      ->check(CLI::IsMember({"identity", "invert", "wrong_dims", "error", "reorder", "die_after", "version2"}));
  app.add_option("--count", b.count);
  app.add_option("--port", port);
  CLI11_PARSE(app, argc, argv);

  if (transport == "stdio") {
    Channel ch = Channel::from_fds(::dup(STDIN_FILENO), ::dup(STDOUT_FILENO));
    return serve(ch, STDIN_FILENO, b);
  }

  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listener, 16) != 0) {
    std::perror("stub: bind/listen");
    return 1;
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  std::printf("PORT %d\n", ntohs(addr.sin_port));
  std::fflush(stdout);

  std::thread([] {
    char buf[64];
    while (::read(STDIN_FILENO, buf, sizeof buf) > 0) {
    }
    std::_Exit(0);
  }).detach();

  for (;;) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) continue;
    std::thread([fd, b] {
      Channel ch = Channel::from_fds(fd, ::dup(fd));
      serve(ch, fd, b);
    }).detach();
  }
}
