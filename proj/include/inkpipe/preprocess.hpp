#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "inkpipe/raster.hpp"

namespace inkpipe {

/// Rounds half away from zero for the non-negative values used here
/// (round-half-up).
inline Sample round_to_sample(double v) noexcept {
  const double r = std::floor(v + 0.5);
  return static_cast<Sample>(std::clamp(r, 0.0, 255.0));
}

/// BT.709 luma. Greyscale input is returned unchanged.
inline ImageBuffer to_greyscale(const ImageBuffer& img) {
  if (img.channels() == 1) {
    return img;
  }
  ImageBuffer out(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0, j = 0; i < dst.size(); ++i, j += 3) {
    dst[i] = round_to_sample(0.2126 * src[j] + 0.7152 * src[j + 1] + 0.0722 * src[j + 2]);
  }
  return out;
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
/// Resizing to the same dimensions is an exact copy.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
  if (width == img.width() && height == img.height()) {
    return img;
  }
  ImageBuffer out(width, height, img.channels());
  const int ch = img.channels();

  struct Tap {
    int i0, i1;
    double frac;
  };
  auto taps = [](int src_len, int dst_len) {
    std::vector<Tap> t(static_cast<std::size_t>(dst_len));
    const double scale = static_cast<double>(src_len) / dst_len;
    for (int d = 0; d < dst_len; ++d) {
      double s = (d + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, src_len - 1);
      t[static_cast<std::size_t>(d)] = Tap{i0, i1, s - i0};
    }
    return t;
  };
  const auto tx = taps(img.width(), width);
  const auto ty = taps(img.height(), height);

  for (int y = 0; y < height; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    auto r0 = img.row(vy.i0);
    auto r1 = img.row(vy.i1);
    auto dst = out.row(y);
    for (int x = 0; x < width; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < ch; ++c) {
        const double a = r0[static_cast<std::size_t>(vx.i0 * ch + c)];
        const double b = r0[static_cast<std::size_t>(vx.i1 * ch + c)];
        const double p = r1[static_cast<std::size_t>(vx.i0 * ch + c)];
        const double q = r1[static_cast<std::size_t>(vx.i1 * ch + c)];
        const double top = a + (b - a) * vx.frac;
        const double bottom = p + (q - p) * vx.frac;
        dst[static_cast<std::size_t>(x * ch + c)] = round_to_sample(top + (bottom - top) * vy.frac);
      }
    }
  }
  return out;
}

struct SquareFit {
  ImageBuffer image;
  /// Where the scaled content sits inside the square canvas.
  Rect placement;
  int source_width = 0;
  int source_height = 0;
};

/// Aspect-preserving letterbox into a side x side canvas. Content dimensions
/// are computed in integer arithmetic (round-half-up) so the placement is exact.
inline SquareFit fit_to_square(const ImageBuffer& img, int side, Sample background = 255) {
  if (side < 1) {
    throw Error(ErrorCode::InvalidArgument, "fit_to_square side must be >= 1");
  }
  const long long w = img.width();
  const long long h = img.height();
  long long cw = 0, ch = 0;
  if (w >= h) {
    cw = side;
    ch = (2 * h * side + w) / (2 * w);
  } else {
    ch = side;
    cw = (2 * w * side + h) / (2 * h);
  }
  cw = std::clamp<long long>(cw, 1, side);
  ch = std::clamp<long long>(ch, 1, side);
  const Rect placement{static_cast<int>((side - cw) / 2), static_cast<int>((side - ch) / 2),
                       static_cast<int>(cw), static_cast<int>(ch)};

  ImageBuffer canvas(side, side, img.channels(), background);
  paste(canvas, resize_bilinear(img, placement.w, placement.h), placement.x, placement.y);
  return SquareFit{std::move(canvas), placement, img.width(), img.height()};
}

/// Undoes fit_to_square on a (possibly translated) square: crops the placement
/// and rescales to the original dimensions.
inline ImageBuffer unfit_from_square(const ImageBuffer& square, const Rect& placement,
                                     int source_width, int source_height) {
  return resize_bilinear(crop(square, placement), source_width, source_height);
}

struct DiagnosticsReport {
  Sample min = 0;
  Sample max = 0;
  double mean = 0.0;
  std::array<std::uint64_t, 256> histogram{};
  double background_fraction = 0.0;
  int contrast_span = 0;
  Sample p1 = 0;
  Sample p99 = 0;
};

inline std::array<std::uint64_t, 256> histogram(const ImageBuffer& img) {
  std::array<std::uint64_t, 256> hist{};
  for (Sample v : img.data()) {
    ++hist[v];
  }
  return hist;
}

/// Nearest-rank percentile over a 256-bin histogram: the smallest value whose
/// cumulative count reaches ceil(p/100 * N), with rank at least 1.
inline Sample percentile(const std::array<std::uint64_t, 256>& hist, double p) {
  std::uint64_t total = 0;
  for (auto c : hist) total += c;
  if (total == 0) {
    throw Error(ErrorCode::Empty, "percentile of an empty histogram");
  }
  auto rank = static_cast<std::uint64_t>(std::ceil(p / 100.0 * static_cast<double>(total)));
  rank = std::clamp<std::uint64_t>(rank, 1, total);
  std::uint64_t cumulative = 0;
  for (int v = 0; v < 256; ++v) {
    cumulative += hist[static_cast<std::size_t>(v)];
    if (cumulative >= rank) {
      return static_cast<Sample>(v);
    }
  }
  return 255;
}

inline DiagnosticsReport diagnostics(const ImageBuffer& img, Sample background_threshold = 250) {
  require_greyscale(img, "diagnostics");
  DiagnosticsReport r;
  r.histogram = histogram(img);
  const auto n = static_cast<double>(img.size());
  std::uint64_t sum = 0;
  std::uint64_t background = 0;
  bool seen = false;
  for (int v = 0; v < 256; ++v) {
    const auto c = r.histogram[static_cast<std::size_t>(v)];
    if (c == 0) continue;
    if (!seen) {
      r.min = static_cast<Sample>(v);
      seen = true;
    }
    r.max = static_cast<Sample>(v);
    sum += c * static_cast<std::uint64_t>(v);
    if (v >= background_threshold) background += c;
  }
  r.mean = static_cast<double>(sum) / n;
  r.background_fraction = static_cast<double>(background) / n;
  r.p1 = percentile(r.histogram, 1.0);
  r.p99 = percentile(r.histogram, 99.0);
  r.contrast_span = static_cast<int>(r.p99) - static_cast<int>(r.p1);
  return r;
}

struct LevelsResult {
  ImageBuffer image;
  Sample low_value = 0;
  Sample high_value = 255;
  /// Set when both percentiles hit the same value; the image is then returned unchanged.
  bool degenerate = false;
};

/// Linear stretch of the [low, high] percentile values onto [0, 255].
inline LevelsResult apply_levels(const ImageBuffer& img, double low_percentile,
                                 double high_percentile) {
  require_greyscale(img, "apply_levels");
  if (!(low_percentile >= 0.0 && low_percentile < high_percentile && high_percentile <= 100.0)) {
    throw Error(ErrorCode::InvalidArgument, "levels need 0 <= low < high <= 100");
  }
  const auto hist = histogram(img);
  LevelsResult r;
  r.low_value = percentile(hist, low_percentile);
  r.high_value = percentile(hist, high_percentile);
  if (r.low_value == r.high_value) {
    r.image = img;
    r.degenerate = true;
    return r;
  }
  std::array<Sample, 256> lut{};
  const double span = static_cast<double>(r.high_value) - r.low_value;
  for (int v = 0; v < 256; ++v) {
    lut[static_cast<std::size_t>(v)] = round_to_sample((v - r.low_value) * 255.0 / span);
  }
  r.image = ImageBuffer(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = r.image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = lut[src[i]];
  }
  return r;
}

/// Post-processing binarisation: v < threshold -> 0, otherwise 255.
inline ImageBuffer apply_bilevel(const ImageBuffer& img, Sample threshold) {
  require_greyscale(img, "apply_bilevel");
  ImageBuffer out = img;
  for (Sample& v : out.data()) {
    v = v < threshold ? 0 : 255;
  }
  return out;
}

}  // namespace inkpipe
