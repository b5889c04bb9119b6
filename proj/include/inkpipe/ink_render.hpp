#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "inkpipe/raster.hpp"

namespace inkpipe {

using DitherMatrix = std::array<std::array<Sample, 8>, 8>;

/// Index-dispersed Bayer matrix of order 8, built by the usual recursion
/// M(2n) = [[4M, 4M+2], [4M+3, 4M+1]] from M(1) = [0].
constexpr std::array<std::array<int, 8>, 8> bayer_index_matrix() {
  std::array<std::array<int, 8>, 8> m{};
  int n = 1;
  while (n < 8) {
    for (int y = n - 1; y >= 0; --y) {
      for (int x = n - 1; x >= 0; --x) {
        const int base = 4 * m[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
        m[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = base;
        m[static_cast<std::size_t>(y)][static_cast<std::size_t>(x + n)] = base + 2;
        m[static_cast<std::size_t>(y + n)][static_cast<std::size_t>(x)] = base + 3;
        m[static_cast<std::size_t>(y + n)][static_cast<std::size_t>(x + n)] = base + 1;
      }
    }
    n *= 2;
  }
  return m;
}

/// Bayer thresholds at cell centres: 4 * index + 2, spanning 2..254.
constexpr DitherMatrix bayer_threshold_matrix() {
  const auto idx = bayer_index_matrix();
  DitherMatrix t{};
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      t[y][x] = static_cast<Sample>(4 * idx[y][x] + 2);
    }
  }
  return t;
}

struct InkRenderParams {
  Sample line_threshold = 96;
  Sample background_threshold = 225;
  DitherMatrix dither_matrix = bayer_threshold_matrix();

  void validate() const {
    if (!(line_threshold < background_threshold)) {
      throw Error(ErrorCode::InvalidArgument,
                  "ink render needs line_threshold < background_threshold, got " +
                      std::to_string(line_threshold) + " and " +
                      std::to_string(background_threshold));
    }
  }
};

inline Sample ink_pixel(const InkRenderParams& p, Sample v, std::uint32_t gx, std::uint32_t gy) noexcept {
  if (v <= p.line_threshold) return 0;
  if (v >= p.background_threshold) return 255;
  return v < p.dither_matrix[gy % 8][gx % 8] ? 0 : 255;
}

/// Bilevel ink rendering: dark strokes to black, paper to white and mid-tones
/// stippled by ordered dither. (origin_x, origin_y) is the patch's position in
/// the source image so the stipple phase lines up across patches.
inline ImageBuffer ink_render(const ImageBuffer& img, const InkRenderParams& params,
                              std::uint32_t origin_x = 0, std::uint32_t origin_y = 0) {
  require_greyscale(img, "ink_render");
  ImageBuffer out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    auto src = img.row(y);
    auto dst = out.row(y);
    const std::uint32_t gy = origin_y + static_cast<std::uint32_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      dst[static_cast<std::size_t>(x)] =
          ink_pixel(params, src[static_cast<std::size_t>(x)], origin_x + static_cast<std::uint32_t>(x), gy);
    }
  }
  return out;
}

}  // namespace inkpipe
