#pragma once

#include <sys/socket.h>

#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "inkpipe/ink_render.hpp"
#include "inkpipe/protocol.hpp"
#include "inkpipe/raster.hpp"
#include "inkpipe/transport.hpp"

namespace inkpipe {

inline constexpr const char* kDefaultPrompt = "make it ready for publication";

struct BackendConfig {
  std::string name = "identity";
  /// Conditioning text forwarded to external models; built-in backends ignore it.
  std::string prompt = kDefaultPrompt;
  int patch_size = 512;
  int channels = 1;
  std::uint64_t seed = 0;
  InkRenderParams ink;

  void validate() const {
    if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "prompt must be non-empty");
    if (patch_size < 1) throw Error(ErrorCode::InvalidArgument, "patch_size must be >= 1");
    if (channels != 1) throw Error(ErrorCode::InvalidArgument, "backends take greyscale patches only");
    ink.validate();
  }
};

/// Position of a patch's top-left corner in the source image.
struct PatchOrigin {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
};

struct SessionInfo {
  std::string backend;
  /// Name the peer advertised during the handshake (external backends).
  std::string peer_name;
  std::map<std::string, std::string> params;
};

/// A ready patch translator. translate() checks the input contract and that
/// the output has the input's shape; implementations only do the work.
class BackendSession {
 public:
  virtual ~BackendSession() = default;

  const SessionInfo& info() const noexcept { return info_; }
  int patch_size() const noexcept { return patch_size_; }

  /// True when translate() may be called from several threads at once.
  virtual bool concurrent() const noexcept { return false; }

  /// False once the session can no longer serve requests (peer died or
  /// desynchronised); the caller should open a new one.
  virtual bool healthy() const noexcept { return true; }

  ImageBuffer translate(const ImageBuffer& patch, PatchOrigin origin) {
    check_input(patch);
    ImageBuffer out = do_translate(patch, origin);
    check_output(patch, out);
    return out;
  }

  /// Results come back in argument order.
  std::vector<ImageBuffer> translate_batch(std::span<const ImageBuffer> patches,
                                           std::span<const PatchOrigin> origins) {
    if (patches.size() != origins.size()) {
      throw Error(ErrorCode::LengthMismatch, "one origin per patch is required");
    }
    for (const auto& p : patches) check_input(p);
    auto out = do_translate_batch(patches, origins);
    for (std::size_t i = 0; i < patches.size(); ++i) check_output(patches[i], out[i]);
    return out;
  }

 protected:
  BackendSession(SessionInfo info, int patch_size) : info_(std::move(info)), patch_size_(patch_size) {}

  virtual ImageBuffer do_translate(const ImageBuffer& patch, PatchOrigin origin) = 0;

  virtual std::vector<ImageBuffer> do_translate_batch(std::span<const ImageBuffer> patches,
                                                      std::span<const PatchOrigin> origins) {
    std::vector<ImageBuffer> out;
    out.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) out.push_back(do_translate(patches[i], origins[i]));
    return out;
  }

  SessionInfo info_;

 private:
  void check_input(const ImageBuffer& patch) const {
    require_greyscale(patch, "translate_patch");
    if (patch.width() > patch_size_ || patch.height() > patch_size_) {
      throw Error(ErrorCode::InvalidArgument,
                  "patch " + std::to_string(patch.width()) + "x" + std::to_string(patch.height()) +
                      " exceeds patch_size " + std::to_string(patch_size_));
    }
  }

  static void check_output(const ImageBuffer& in, const ImageBuffer& out) {
    if (!in.same_shape(out)) {
      throw Error(ErrorCode::ShapeViolation,
                  "backend returned " + std::to_string(out.width()) + "x" +
                      std::to_string(out.height()) + "x" + std::to_string(out.channels()) +
                      " for a " + std::to_string(in.width()) + "x" + std::to_string(in.height()) +
                      " patch");
    }
  }

  int patch_size_;
};

class IdentityBackend final : public BackendSession {
 public:
  explicit IdentityBackend(const BackendConfig& config)
      : BackendSession(SessionInfo{"identity", "", {{"prompt", config.prompt}}}, config.patch_size) {}

  bool concurrent() const noexcept override { return true; }

 protected:
  ImageBuffer do_translate(const ImageBuffer& patch, PatchOrigin) override { return patch; }
};

/// Deterministic classical reference: thresholded strokes plus ordered-dither
/// stippling keyed on source-global coordinates.
class InkBackend final : public BackendSession {
 public:
  explicit InkBackend(const BackendConfig& config)
      : BackendSession(SessionInfo{"ink",
                                   "",
                                   {{"prompt", config.prompt},
                                    {"line_threshold", std::to_string(config.ink.line_threshold)},
                                    {"background_threshold",
                                     std::to_string(config.ink.background_threshold)},
                                    {"dither", "bayer8"}}},
                       config.patch_size),
        params_(config.ink) {
    params_.validate();
  }

  bool concurrent() const noexcept override { return true; }
  const InkRenderParams& params() const noexcept { return params_; }

 protected:
  ImageBuffer do_translate(const ImageBuffer& patch, PatchOrigin origin) override {
    return ink_render(patch, params_, origin.x, origin.y);
  }

 private:
  InkRenderParams params_;
};

/// Where an external translator lives.
struct ExternalEndpoint {
  enum class Kind { Command, Tcp } kind = Kind::Command;
  std::string command;
  std::string host;
  std::string port;
};

/// Client side of PINK/1. One session is one serial channel; open several for
/// parallelism.
class ExternalBackend final : public BackendSession {
 public:
  ExternalBackend(const ExternalEndpoint& endpoint, const BackendConfig& config)
      : BackendSession(SessionInfo{"external", "", {{"prompt", config.prompt}}}, config.patch_size) {
    if (config.patch_size > 0xFFFF) {
      throw Error(ErrorCode::InvalidArgument, "external backends take patch_size <= 65535");
    }
    if (endpoint.kind == ExternalEndpoint::Kind::Tcp) {
      channel_ = transport::Channel::connect_tcp(endpoint.host, endpoint.port);
      info_.params["endpoint"] = endpoint.host + ":" + endpoint.port;
    } else {
      channel_ = transport::Channel::spawn(endpoint.command);
      info_.params["endpoint"] = endpoint.command;
    }
    pink::ClientHello hello;
    hello.prompt = config.prompt;
    hello.patch_size = static_cast<std::uint16_t>(config.patch_size);
    hello.channels = static_cast<std::uint8_t>(config.channels);
    try {
      channel_.write(pink::encode(hello));
      info_.peer_name = pink::read_server_hello(channel_).name;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendIo) {
        throw Error(ErrorCode::HandshakeFailed, e.what());
      }
      throw;
    }
  }

  ~ExternalBackend() override { channel_.shutdown(); }

  bool healthy() const noexcept override { return !broken_; }

 protected:
  ImageBuffer do_translate(const ImageBuffer& patch, PatchOrigin origin) override {
    ensure_alive();
    try {
      const std::uint32_t id = next_id_++;
      channel_.write(pink::encode(make_request(id, patch, origin)));
      return await(id);
    } catch (const Error& e) {
      broken_ = e.code() == ErrorCode::BackendIo || e.code() == ErrorCode::ProtocolError;
      throw;
    }
  }

  /// Pipelined: a writer thread streams every request while this thread
  /// collects responses in whatever order the peer produces them.
  std::vector<ImageBuffer> do_translate_batch(std::span<const ImageBuffer> patches,
                                              std::span<const PatchOrigin> origins) override {
    ensure_alive();
    const std::uint32_t first_id = next_id_;
    next_id_ += static_cast<std::uint32_t>(patches.size());

    std::exception_ptr write_error;
    std::thread writer([&] {
      try {
        for (std::size_t i = 0; i < patches.size(); ++i) {
          channel_.write(pink::encode(make_request(first_id + static_cast<std::uint32_t>(i), patches[i], origins[i])));
        }
      } catch (...) {
        write_error = std::current_exception();
      }
    });

    std::vector<ImageBuffer> out(patches.size());
    std::exception_ptr read_error;
    try {
      for (std::size_t i = 0; i < patches.size(); ++i) {
        out[i] = await(first_id + static_cast<std::uint32_t>(i));
      }
    } catch (...) {
      read_error = std::current_exception();
      broken_ = true;
      // Unblock the writer if the peer stopped reading.
      channel_.abort();
    }
    writer.join();
    if (read_error) std::rethrow_exception(read_error);
    if (write_error) {
      broken_ = true;
      std::rethrow_exception(write_error);
    }
    return out;
  }

 private:
  static pink::Request make_request(std::uint32_t id, const ImageBuffer& patch, PatchOrigin origin) {
    pink::Request r;
    r.request_id = id;
    r.origin_x = origin.x;
    r.origin_y = origin.y;
    r.width = static_cast<std::uint16_t>(patch.width());
    r.height = static_cast<std::uint16_t>(patch.height());
    r.payload.assign(patch.data().begin(), patch.data().end());
    return r;
  }

  /// Reads frames until the response for `id` arrives, parking others.
  ImageBuffer await(std::uint32_t id) {
    for (;;) {
      if (auto it = parked_.find(id); it != parked_.end()) {
        pink::Response r = std::move(it->second);
        parked_.erase(it);
        return to_image(r);
      }
      auto frame = pink::read_server_frame(channel_);
      if (auto* err = std::get_if<pink::ErrorFrame>(&frame)) {
        throw Error(ErrorCode::BackendIo, "peer reported: " + err->message);
      }
      auto& resp = std::get<pink::Response>(frame);
      if (resp.request_id >= next_id_ || parked_.contains(resp.request_id)) {
        throw Error(ErrorCode::ProtocolError, "response for unknown request " + std::to_string(resp.request_id));
      }
      parked_.emplace(resp.request_id, std::move(resp));
    }
  }

  static ImageBuffer to_image(const pink::Response& r) {
    if (r.width == 0 || r.height == 0) {
      throw Error(ErrorCode::ShapeViolation, "peer returned an empty patch");
    }
    return ImageBuffer(r.width, r.height, 1, r.payload);
  }

  void ensure_alive() const {
    if (broken_) throw Error(ErrorCode::BackendIo, "session is no longer usable");
  }

  transport::Channel channel_;
  std::uint32_t next_id_ = 0;
  std::unordered_map<std::uint32_t, pink::Response> parked_;
  bool broken_ = false;
};

/// Parsed backend selector: "identity", "ink", "external:<command>" or
/// "external:<host>:<port>" (also "external:tcp://<host>:<port>").
struct BackendSelector {
  enum class Kind { Identity, Ink, External } kind = Kind::Identity;
  ExternalEndpoint endpoint;

  static BackendSelector parse(const std::string& text) {
    BackendSelector s;
    if (text == "identity") return s;
    if (text == "ink") {
      s.kind = Kind::Ink;
      return s;
    }
    const std::string prefix = "external:";
    if (text.rfind(prefix, 0) != 0 || text.size() == prefix.size()) {
      throw Error(ErrorCode::InvalidArgument,
                  "unknown backend '" + text + "' (identity | ink | external:<command or host:port>)");
    }
    s.kind = Kind::External;
    std::string rest = text.substr(prefix.size());
    static const std::regex host_port(R"(^(?:tcp://)?([A-Za-z0-9._-]+|\[[0-9A-Fa-f:]+\]):([0-9]{1,5})$)");
    std::smatch m;
    if (std::regex_match(rest, m, host_port)) {
      s.endpoint.kind = ExternalEndpoint::Kind::Tcp;
      s.endpoint.host = m[1].str();
      if (s.endpoint.host.front() == '[') s.endpoint.host = s.endpoint.host.substr(1, s.endpoint.host.size() - 2);
      s.endpoint.port = m[2].str();
    } else {
      s.endpoint.kind = ExternalEndpoint::Kind::Command;
      s.endpoint.command = rest;
    }
    return s;
  }
};

inline std::unique_ptr<BackendSession> open_backend(const BackendSelector& selector,
                                                    const BackendConfig& config) {
  config.validate();
  switch (selector.kind) {
    case BackendSelector::Kind::Identity:
      return std::make_unique<IdentityBackend>(config);
    case BackendSelector::Kind::Ink:
      return std::make_unique<InkBackend>(config);
    case BackendSelector::Kind::External:
      return std::make_unique<ExternalBackend>(selector.endpoint, config);
  }
  throw Error(ErrorCode::InvalidArgument, "unhandled backend kind");
}

inline std::unique_ptr<BackendSession> open_backend(const std::string& selector, const BackendConfig& config) {
  return open_backend(BackendSelector::parse(selector), config);
}

}  // namespace inkpipe
