#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inkpipe/error.hpp"

namespace inkpipe {

using Sample = std::uint8_t;

struct Rect {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Owned 8-bit raster, row-major with interleaved channels and no row padding.
/// `channels` is 1 (greyscale) or 3 (RGB).
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(int width, int height, int channels, Sample fill = 0)
      : width_(width), height_(height), channels_(channels) {
    validate_shape(width, height, channels);
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  ImageBuffer(int width, int height, int channels, std::vector<Sample> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    validate_shape(width, height, channels);
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw Error(ErrorCode::InvalidArgument,
                  "buffer holds " + std::to_string(data_.size()) + " samples, expected " +
                      std::to_string(static_cast<std::size_t>(width) * height * channels));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t stride() const noexcept { return static_cast<std::size_t>(width_) * channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  Rect bounds() const noexcept { return Rect{0, 0, width_, height_}; }

  std::span<const Sample> data() const noexcept { return data_; }
  std::span<Sample> data() noexcept { return data_; }

  std::span<const Sample> row(int y) const noexcept {
    return std::span<const Sample>(data_).subspan(static_cast<std::size_t>(y) * stride(), stride());
  }
  std::span<Sample> row(int y) noexcept {
    return std::span<Sample>(data_).subspan(static_cast<std::size_t>(y) * stride(), stride());
  }

  Sample at(int x, int y, int c = 0) const noexcept {
    return data_[static_cast<std::size_t>(y) * stride() + static_cast<std::size_t>(x) * channels_ + c];
  }
  Sample& at(int x, int y, int c = 0) noexcept {
    return data_[static_cast<std::size_t>(y) * stride() + static_cast<std::size_t>(x) * channels_ + c];
  }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  static void validate_shape(int width, int height, int channels) {
    if (width < 1 || height < 1) {
      throw Error(ErrorCode::InvalidArgument,
                  "image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    if (channels != 1 && channels != 3) {
      throw Error(ErrorCode::InvalidArgument,
                  "channels must be 1 or 3, got " + std::to_string(channels));
    }
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<Sample> data_;
};

inline bool contains(const Rect& outer, const Rect& inner) noexcept {
  return inner.w >= 1 && inner.h >= 1 && inner.x >= outer.x && inner.y >= outer.y &&
         static_cast<long long>(inner.x) + inner.w <= static_cast<long long>(outer.x) + outer.w &&
         static_cast<long long>(inner.y) + inner.h <= static_cast<long long>(outer.y) + outer.h;
}

inline std::string to_string(const Rect& r) {
  return "Rect(" + std::to_string(r.x) + "," + std::to_string(r.y) + "," + std::to_string(r.w) +
         "," + std::to_string(r.h) + ")";
}

inline ImageBuffer crop(const ImageBuffer& img, const Rect& r) {
  if (!contains(img.bounds(), r)) {
    throw Error(ErrorCode::OutOfBounds, to_string(r) + " exceeds " + std::to_string(img.width()) +
                                            "x" + std::to_string(img.height()));
  }
  ImageBuffer out(r.w, r.h, img.channels());
  const std::size_t span_len = static_cast<std::size_t>(r.w) * img.channels();
  const std::size_t offset = static_cast<std::size_t>(r.x) * img.channels();
  for (int j = 0; j < r.h; ++j) {
    auto src = img.row(r.y + j).subspan(offset, span_len);
    std::copy(src.begin(), src.end(), out.row(j).begin());
  }
  return out;
}

/// Copies `src` into `dst` with its top-left corner at (x, y). The target
/// rectangle must lie inside `dst`.
inline void paste(ImageBuffer& dst, const ImageBuffer& src, int x, int y) {
  if (src.channels() != dst.channels()) {
    throw Error(ErrorCode::ChannelMismatch, "paste needs equal channel counts");
  }
  const Rect target{x, y, src.width(), src.height()};
  if (!contains(dst.bounds(), target)) {
    throw Error(ErrorCode::OutOfBounds, to_string(target) + " exceeds destination");
  }
  const std::size_t offset = static_cast<std::size_t>(x) * dst.channels();
  for (int j = 0; j < src.height(); ++j) {
    auto s = src.row(j);
    std::copy(s.begin(), s.end(), dst.row(y + j).begin() + static_cast<std::ptrdiff_t>(offset));
  }
}

inline void require_greyscale(const ImageBuffer& img, const char* what) {
  if (img.channels() != 1) {
    throw Error(ErrorCode::ChannelMismatch,
                std::string(what) + " needs a greyscale image, got " +
                    std::to_string(img.channels()) + " channels");
  }
}

}  // namespace inkpipe
