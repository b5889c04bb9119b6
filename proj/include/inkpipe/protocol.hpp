#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "inkpipe/transport.hpp"

/// PINK/1: a framed, big-endian request/response protocol between the pipeline
/// and an external patch translator.
///
///   client hello  "PINK" u16 version  u16 prompt_len prompt  u16 patch_size  u8 channels
///   server hello  "KNIP" u16 version  u16 name_len name
///   request       u8 1   u32 request_id  u32 origin_x  u32 origin_y  u16 w  u16 h  w*h bytes
///   response      u8 2   u32 request_id  u16 w  u16 h  w*h bytes
///   error         u8 255 u16 msg_len msg
///
/// Responses may come back in any order; request_id correlates them.
namespace inkpipe::pink {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::array<std::uint8_t, 4> kClientMagic{'P', 'I', 'N', 'K'};
inline constexpr std::array<std::uint8_t, 4> kServerMagic{'K', 'N', 'I', 'P'};

enum class FrameType : std::uint8_t { Request = 1, Response = 2, Error = 255 };

struct ClientHello {
  std::uint16_t version = kVersion;
  std::string prompt;
  std::uint16_t patch_size = 512;
  std::uint8_t channels = 1;
};

struct ServerHello {
  std::uint16_t version = kVersion;
  std::string name;
};

struct Request {
  std::uint32_t request_id = 0;
  std::uint32_t origin_x = 0;
  std::uint32_t origin_y = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> payload;
};

struct Response {
  std::uint32_t request_id = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> payload;
};

struct ErrorFrame {
  std::string message;
};

/// Append-only big-endian encoder.
class Writer {
 public:
  Writer& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  Writer& u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
    return *this;
  }
  Writer& u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  Writer& bytes(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }
  Writer& text(std::string_view s) {
    if (s.size() > 0xFFFF) throw Error(ErrorCode::ProtocolError, "string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
    return *this;
  }
  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Big-endian decoder pulling from a channel.
class Reader {
 public:
  explicit Reader(transport::Channel& ch) : ch_(ch) {}

  std::uint8_t u8() {
    std::uint8_t b[1];
    ch_.read(b);
    return b[0];
  }
  std::uint16_t u16() {
    std::uint8_t b[2];
    ch_.read(b);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    ch_.read(b);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    std::vector<std::uint8_t> out(n);
    if (n > 0) ch_.read(out);
    return out;
  }
  std::string text() {
    const auto n = u16();
    auto raw = bytes(n);
    return std::string(raw.begin(), raw.end());
  }

 private:
  transport::Channel& ch_;
};

inline std::vector<std::uint8_t> encode(const ClientHello& h) {
  Writer w;
  w.bytes(kClientMagic).u16(h.version).text(h.prompt).u16(h.patch_size).u8(h.channels);
  return w.buffer();
}

inline std::vector<std::uint8_t> encode(const ServerHello& h) {
  Writer w;
  w.bytes(kServerMagic).u16(h.version).text(h.name);
  return w.buffer();
}

inline std::vector<std::uint8_t> encode(const Request& r) {
  if (r.payload.size() != static_cast<std::size_t>(r.width) * r.height) {
    throw Error(ErrorCode::ProtocolError, "request payload does not match its dimensions");
  }
  Writer w;
  w.u8(static_cast<std::uint8_t>(FrameType::Request))
      .u32(r.request_id)
      .u32(r.origin_x)
      .u32(r.origin_y)
      .u16(r.width)
      .u16(r.height)
      .bytes(r.payload);
  return w.buffer();
}

inline std::vector<std::uint8_t> encode(const Response& r) {
  if (r.payload.size() != static_cast<std::size_t>(r.width) * r.height) {
    throw Error(ErrorCode::ProtocolError, "response payload does not match its dimensions");
  }
  Writer w;
  w.u8(static_cast<std::uint8_t>(FrameType::Response)).u32(r.request_id).u16(r.width).u16(r.height).bytes(r.payload);
  return w.buffer();
}

inline std::vector<std::uint8_t> encode(const ErrorFrame& e) {
  Writer w;
  w.u8(static_cast<std::uint8_t>(FrameType::Error)).text(e.message);
  return w.buffer();
}

// ---- client side ----

/// Reads the server's reply to a client hello. An error frame in place of the
/// hello means the server refused the handshake.
inline ServerHello read_server_hello(transport::Channel& ch) {
  Reader in(ch);
  const std::uint8_t first = in.u8();
  if (first == static_cast<std::uint8_t>(FrameType::Error)) {
    throw Error(ErrorCode::HandshakeFailed, "server refused handshake: " + in.text());
  }
  std::array<std::uint8_t, 4> magic{first, 0, 0, 0};
  ch.read(std::span<std::uint8_t>(magic).subspan(1));
  if (magic != kServerMagic) {
    throw Error(ErrorCode::HandshakeFailed, "bad server magic");
  }
  ServerHello h;
  h.version = in.u16();
  if (h.version != kVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "server speaks protocol version " + std::to_string(h.version) + ", expected " +
                    std::to_string(kVersion));
  }
  h.name = in.text();
  return h;
}

inline std::variant<Response, ErrorFrame> read_server_frame(transport::Channel& ch) {
  Reader in(ch);
  const std::uint8_t type = in.u8();
  if (type == static_cast<std::uint8_t>(FrameType::Error)) {
    return ErrorFrame{in.text()};
  }
  if (type != static_cast<std::uint8_t>(FrameType::Response)) {
    throw Error(ErrorCode::ProtocolError, "unexpected frame type " + std::to_string(type));
  }
  Response r;
  r.request_id = in.u32();
  r.width = in.u16();
  r.height = in.u16();
  r.payload = in.bytes(static_cast<std::size_t>(r.width) * r.height);
  return r;
}

// ---- server side ----

/// Reads a client hello. A version other than kVersion is reported through the
/// returned hello; the caller answers it with an error frame.
inline ClientHello read_client_hello(transport::Channel& ch) {
  Reader in(ch);
  std::array<std::uint8_t, 4> magic{};
  ch.read(magic);
  if (magic != kClientMagic) {
    throw Error(ErrorCode::HandshakeFailed, "bad client magic");
  }
  ClientHello h;
  h.version = in.u16();
  if (h.version != kVersion) {
    return h;
  }
  h.prompt = in.text();
  h.patch_size = in.u16();
  h.channels = in.u8();
  return h;
}

/// Next request, or nullopt on a clean EOF between frames.
inline std::optional<Request> read_client_frame(transport::Channel& ch) {
  std::uint8_t type = 0;
  if (!ch.read_unless_eof(std::span<std::uint8_t>(&type, 1))) {
    return std::nullopt;
  }
  if (type != static_cast<std::uint8_t>(FrameType::Request)) {
    throw Error(ErrorCode::ProtocolError, "unexpected frame type " + std::to_string(type));
  }
  Reader in(ch);
  Request r;
  r.request_id = in.u32();
  r.origin_x = in.u32();
  r.origin_y = in.u32();
  r.width = in.u16();
  r.height = in.u16();
  r.payload = in.bytes(static_cast<std::size_t>(r.width) * r.height);
  return r;
}

}  // namespace inkpipe::pink
