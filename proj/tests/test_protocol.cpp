#include <gtest/gtest.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <set>

#include "inkpipe/protocol.hpp"
#include "support/stub_server.hpp"

using namespace inkpipe;
namespace pink = inkpipe::pink;

namespace {

/// Both ends of an in-process pipe pair: what `client` writes `server` reads
/// and vice versa.
struct Loopback {
  transport::Channel client;
  transport::Channel server;
};

Loopback make_loopback() {
  int a[2], b[2];
  if (::pipe2(a, O_CLOEXEC) != 0 || ::pipe2(b, O_CLOEXEC) != 0) throw std::runtime_error("pipe");
  return {transport::Channel::from_fds(b[0], a[1]), transport::Channel::from_fds(a[0], b[1])};
}

std::vector<std::uint8_t> bytes(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(PinkEncoding, ClientHelloLayout) {
  pink::ClientHello h;
  h.prompt = "ab";
  h.patch_size = 512;
  EXPECT_EQ(pink::encode(h), bytes({'P', 'I', 'N', 'K', 0, 1, 0, 2, 'a', 'b', 0x02, 0x00, 1}));
}

TEST(PinkEncoding, ServerHelloLayout) {
  pink::ServerHello h;
  h.name = "id";
  EXPECT_EQ(pink::encode(h), bytes({'K', 'N', 'I', 'P', 0, 1, 0, 2, 'i', 'd'}));
}

TEST(PinkEncoding, RequestLayoutIsBigEndian) {
  pink::Request r;
  r.request_id = 0x01020304;
  r.origin_x = 1320;
  r.origin_y = 373;
  r.width = 2;
  r.height = 1;
  r.payload = {9, 8};
  EXPECT_EQ(pink::encode(r), bytes({1, 1, 2, 3, 4, 0, 0, 0x05, 0x28, 0, 0, 0x01, 0x75, 0, 2, 0, 1, 9, 8}));
}

TEST(PinkEncoding, ResponseAndError) {
  pink::Response r;
  r.request_id = 7;
  r.width = 1;
  r.height = 1;
  r.payload = {200};
  EXPECT_EQ(pink::encode(r), bytes({2, 0, 0, 0, 7, 0, 1, 0, 1, 200}));
  EXPECT_EQ(pink::encode(pink::ErrorFrame{"no"}), bytes({255, 0, 2, 'n', 'o'}));
}

TEST(PinkEncoding, PayloadLengthChecked) {
  pink::Request r;
  r.width = 2;
  r.height = 2;
  r.payload = {1, 2, 3};
  EXPECT_THROW((void)pink::encode(r), Error);
}

TEST(PinkFraming, RoundTripOverPipes) {
  auto lb = make_loopback();
  pink::ClientHello hello;
  hello.prompt = "make it ready for publication";
  hello.patch_size = 256;
  lb.client.write(pink::encode(hello));
  const auto got = pink::read_client_hello(lb.server);
  EXPECT_EQ(got.version, 1);
  EXPECT_EQ(got.prompt, hello.prompt);
  EXPECT_EQ(got.patch_size, 256);
  EXPECT_EQ(got.channels, 1);

  pink::ServerHello sh;
  sh.name = "loop";
  lb.server.write(pink::encode(sh));
  EXPECT_EQ(pink::read_server_hello(lb.client).name, "loop");

  pink::Request req;
  req.request_id = 42;
  req.origin_x = 448;
  req.origin_y = 0;
  req.width = 3;
  req.height = 2;
  req.payload = {1, 2, 3, 4, 5, 6};
  lb.client.write(pink::encode(req));
  const auto r = pink::read_client_frame(lb.server);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->request_id, 42u);
  EXPECT_EQ(r->origin_x, 448u);
  EXPECT_EQ(r->payload, req.payload);

  pink::Response resp{42, 3, 2, req.payload};
  lb.server.write(pink::encode(resp));
  const auto frame = pink::read_server_frame(lb.client);
  ASSERT_TRUE(std::holds_alternative<pink::Response>(frame));
  EXPECT_EQ(std::get<pink::Response>(frame).payload, req.payload);

  lb.server.write(pink::encode(pink::ErrorFrame{"boom"}));
  const auto err = pink::read_server_frame(lb.client);
  ASSERT_TRUE(std::holds_alternative<pink::ErrorFrame>(err));
  EXPECT_EQ(std::get<pink::ErrorFrame>(err).message, "boom");

  lb.client.close_write();
  EXPECT_FALSE(pink::read_client_frame(lb.server).has_value());
}

TEST(PinkFraming, ServerHelloVersionMismatch) {
  auto lb = make_loopback();
  pink::ServerHello sh;
  sh.version = 2;
  lb.server.write(pink::encode(sh));
  try {
    (void)pink::read_server_hello(lb.client);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
  }
}

TEST(PinkFraming, BadMagicRejected) {
  auto lb = make_loopback();
  lb.server.write(bytes({'N', 'O', 'P', 'E', 0, 1, 0, 0}));
  EXPECT_THROW((void)pink::read_server_hello(lb.client), Error);
  lb.client.write(bytes({'N', 'O', 'P', 'E', 0, 1}));
  EXPECT_THROW((void)pink::read_client_hello(lb.server), Error);
}

TEST(PinkFraming, TruncatedFrameIsIoError) {
  auto lb = make_loopback();
  lb.server.write(bytes({2, 0, 0}));
  lb.server.close_write();
  try {
    (void)pink::read_server_frame(lb.client);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendIo);
  }
}

TEST(PinkFraming, UnexpectedFrameType) {
  auto lb = make_loopback();
  lb.server.write(bytes({1, 0, 0, 0, 0}));
  try {
    (void)pink::read_server_frame(lb.client);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProtocolError);
  }
}

class StubSession : public ::testing::Test {
 protected:
  transport::Channel open(const std::string& adapter) {
    auto ch = transport::Channel::spawn(testutil::stub_command(adapter));
    pink::ClientHello hello;
    hello.prompt = kPrompt;
    ch.write(pink::encode(hello));
    return ch;
  }
  static constexpr const char* kPrompt = "make it ready for publication";
};

TEST_F(StubSession, IdentityEchoesPayload) {
  auto ch = open("identity");
  EXPECT_EQ(pink::read_server_hello(ch).name, "stub-identity");
  pink::Request req{5, 0, 0, 4, 2, {0, 1, 2, 3, 250, 251, 252, 253}};
  ch.write(pink::encode(req));
  auto frame = pink::read_server_frame(ch);
  const auto& resp = std::get<pink::Response>(frame);
  EXPECT_EQ(resp.request_id, 5u);
  EXPECT_EQ(resp.width, 4);
  EXPECT_EQ(resp.height, 2);
  EXPECT_EQ(resp.payload, req.payload);
}

TEST_F(StubSession, ClientVersionTwoRefusedWithErrorFrame) {
  auto ch = transport::Channel::spawn(testutil::stub_command("identity"));
  pink::ClientHello hello;
  hello.version = 2;
  hello.prompt = kPrompt;
  ch.write(pink::encode(hello));
  try {
    (void)pink::read_server_hello(ch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HandshakeFailed);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST_F(StubSession, EightRequestsCorrelatedOutOfOrder) {
  auto ch = open("reorder");
  (void)pink::read_server_hello(ch);
  const std::uint32_t xs[] = {0, 448, 896, 1320};
  const std::uint32_t ys[] = {0, 373};
  std::uint32_t id = 100;
  for (auto y : ys)
    for (auto x : xs) {
      pink::Request req{id, x, y, 2, 2, std::vector<std::uint8_t>(4, static_cast<std::uint8_t>(id))};
      ch.write(pink::encode(req));
      ++id;
    }
  std::vector<std::uint32_t> seen;
  for (int i = 0; i < 8; ++i) {
    auto frame = pink::read_server_frame(ch);
    const auto& r = std::get<pink::Response>(frame);
    EXPECT_EQ(r.payload, std::vector<std::uint8_t>(4, static_cast<std::uint8_t>(r.request_id)));
    seen.push_back(r.request_id);
  }
  EXPECT_EQ(std::set<std::uint32_t>(seen.begin(), seen.end()).size(), 8u);
  EXPECT_EQ(*std::min_element(seen.begin(), seen.end()), 100u);
  EXPECT_FALSE(std::is_sorted(seen.begin(), seen.end()));
}

TEST(TcpStub, ServesHandshakeAndEcho) {
  testutil::TcpStub stub;
  auto ch = transport::Channel::connect_tcp("127.0.0.1", stub.port());
  pink::ClientHello hello;
  hello.prompt = "p";
  ch.write(pink::encode(hello));
  EXPECT_EQ(pink::read_server_hello(ch).version, 1);
  pink::Request req{1, 0, 0, 1, 1, {77}};
  ch.write(pink::encode(req));
  auto frame = pink::read_server_frame(ch);
  EXPECT_EQ(std::get<pink::Response>(frame).payload, std::vector<std::uint8_t>{77});
}

TEST(Transport, SpawnFailureSurfacesOnHandshake) {
  auto ch = transport::Channel::spawn("exit 3");
  EXPECT_THROW((void)pink::read_server_hello(ch), Error);
}

TEST(Transport, ConnectRefused) {
  EXPECT_THROW((void)transport::Channel::connect_tcp("127.0.0.1", "1"), Error);
}
