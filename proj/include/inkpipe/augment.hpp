#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "inkpipe/image_io.hpp"
#include "inkpipe/preprocess.hpp"
#include "inkpipe/raster.hpp"

namespace inkpipe {

/// Augmentation random stream, version 1.
///
/// SplitMix64: state += 0x9E3779B97F4A7C15, output is the state passed through
/// the mix z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) *
/// 0x94D049BB133111EB; z ^= z >> 31. Bounded draws use rejection sampling
/// (no modulo bias, no dependence on std:: distributions). A per-pair stream is
/// seeded with mix(seed ^ fnv1a64(pair_id)).
///
/// Changing any of this changes every dataset manifest; bump kStreamVersion.
class SplitMix64 {
 public:
  static constexpr int kStreamVersion = 1;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  /// Independent stream for one source pair.
  SplitMix64 split(std::string_view pair_id) const noexcept {
    return SplitMix64(mix(state_ ^ fnv1a64(pair_id)));
  }

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform in [0, bound); bound must be >= 1.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool coin() noexcept { return (next() >> 63) != 0; }

 private:
  std::uint64_t state_;
};

/// One geometric transform, applied in the fixed order
/// pad -> rotate -> flip_h -> flip_v -> translate -> crop.
struct AugmentSpec {
  int rotation = 0;  ///< degrees clockwise, one of 0/90/180/270
  bool flip_h = false;
  bool flip_v = false;
  int translate_dx = 0;
  int translate_dy = 0;
  int crop_x = 0;
  int crop_y = 0;
  int crop_size = 512;

  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

inline nlohmann::json to_json(const AugmentSpec& s) {
  return {{"rotation", s.rotation},         {"flip_h", s.flip_h},
          {"flip_v", s.flip_v},             {"translate_dx", s.translate_dx},
          {"translate_dy", s.translate_dy}, {"crop_x", s.crop_x},
          {"crop_y", s.crop_y},             {"crop_size", s.crop_size}};
}

struct PairedSample {
  ImageBuffer sketch_patch;
  ImageBuffer ink_patch;
  AugmentSpec spec;
  std::string pair_id;
};

// ---- primitive transforms ----

/// Grows the canvas to at least (width, height), centring the image on `fill`.
inline ImageBuffer pad_to_at_least(const ImageBuffer& img, int width, int height, Sample fill = 255) {
  const int w = std::max(img.width(), width);
  const int h = std::max(img.height(), height);
  if (w == img.width() && h == img.height()) return img;
  ImageBuffer out(w, h, img.channels(), fill);
  paste(out, img, (w - img.width()) / 2, (h - img.height()) / 2);
  return out;
}

/// Clockwise rotation by `quarter_turns` * 90 degrees. For one turn, source
/// pixel (x, y) lands on (h - 1 - y, x).
inline ImageBuffer rotate_quarter(const ImageBuffer& img, int quarter_turns) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return img;
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();
  const bool swap = turns % 2 == 1;
  ImageBuffer out(swap ? h : w, swap ? w : h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int nx = x, ny = y;
      switch (turns) {
        case 1: nx = h - 1 - y; ny = x; break;
        case 2: nx = w - 1 - x; ny = h - 1 - y; break;
        case 3: nx = y; ny = w - 1 - x; break;
      }
      for (int c = 0; c < ch; ++c) out.at(nx, ny, c) = img.at(x, y, c);
    }
  }
  return out;
}

inline ImageBuffer flip_horizontal(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

inline ImageBuffer flip_vertical(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    auto src = img.row(y);
    std::copy(src.begin(), src.end(), out.row(img.height() - 1 - y).begin());
  }
  return out;
}

/// Shifts content by (dx, dy) on a same-size canvas; uncovered area is `fill`.
inline ImageBuffer translate(const ImageBuffer& img, int dx, int dy, Sample fill = 255) {
  if (dx == 0 && dy == 0) return img;
  ImageBuffer out(img.width(), img.height(), img.channels(), fill);
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= img.height()) continue;
    for (int x = 0; x < img.width(); ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= img.width()) continue;
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

/// Canvas size after padding to the crop and rotating.
inline std::pair<int, int> augment_canvas(int source_w, int source_h, int crop_size, int rotation) {
  const int w = std::max(source_w, crop_size);
  const int h = std::max(source_h, crop_size);
  return (rotation == 90 || rotation == 270) ? std::pair{h, w} : std::pair{w, h};
}

inline ImageBuffer apply_spec(const ImageBuffer& img, const AugmentSpec& spec) {
  if (spec.rotation % 90 != 0 || spec.rotation < 0 || spec.rotation >= 360) {
    throw Error(ErrorCode::InvalidArgument, "rotation must be 0, 90, 180 or 270");
  }
  ImageBuffer canvas = pad_to_at_least(img, spec.crop_size, spec.crop_size);
  canvas = rotate_quarter(canvas, spec.rotation / 90);
  if (spec.flip_h) canvas = flip_horizontal(canvas);
  if (spec.flip_v) canvas = flip_vertical(canvas);
  canvas = translate(canvas, spec.translate_dx, spec.translate_dy);
  return crop(canvas, Rect{spec.crop_x, spec.crop_y, spec.crop_size, spec.crop_size});
}

/// Applies one spec identically to a sketch and its inked counterpart.
inline PairedSample apply_pair(const ImageBuffer& sketch, const ImageBuffer& ink, const AugmentSpec& spec,
                               std::string pair_id = {}) {
  require_greyscale(sketch, "apply_pair");
  require_greyscale(ink, "apply_pair");
  if (sketch.width() != ink.width() || sketch.height() != ink.height()) {
    throw Error(ErrorCode::DimensionMismatch,
                "sketch " + std::to_string(sketch.width()) + "x" + std::to_string(sketch.height()) +
                    " vs ink " + std::to_string(ink.width()) + "x" + std::to_string(ink.height()));
  }
  return PairedSample{apply_spec(sketch, spec), apply_spec(ink, spec), spec, std::move(pair_id)};
}

/// Draws n specs from `rng`. Per spec the draw order is rotation, flip_h,
/// flip_v, dx, dy, crop_x, crop_y. max_translate < 0 means crop_size / 8.
inline std::vector<AugmentSpec> sample_specs(int source_w, int source_h, int n, int crop_size, SplitMix64& rng,
                                             int max_translate = -1) {
  if (source_w < 1 || source_h < 1 || crop_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "sample_specs needs positive dimensions");
  }
  if (n < 1) {
    throw Error(ErrorCode::InvalidArgument, "sample_specs needs n >= 1");
  }
  const int t = max_translate < 0 ? crop_size / 8 : max_translate;
  std::vector<AugmentSpec> specs;
  specs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    AugmentSpec s;
    s.crop_size = crop_size;
    s.rotation = static_cast<int>(rng.below(4)) * 90;
    s.flip_h = rng.coin();
    s.flip_v = rng.coin();
    s.translate_dx = static_cast<int>(rng.between(-t, t));
    s.translate_dy = static_cast<int>(rng.between(-t, t));
    const auto [cw, ch] = augment_canvas(source_w, source_h, crop_size, s.rotation);
    s.crop_x = static_cast<int>(rng.between(0, cw - crop_size));
    s.crop_y = static_cast<int>(rng.between(0, ch - crop_size));
    specs.push_back(s);
  }
  return specs;
}

inline std::vector<AugmentSpec> sample_specs(int source_w, int source_h, int n, int crop_size, std::uint64_t seed,
                                             int max_translate = -1) {
  SplitMix64 rng(seed);
  return sample_specs(source_w, source_h, n, crop_size, rng, max_translate);
}

// ---- dataset building ----

struct SourcePair {
  std::string pair_id;
  std::filesystem::path sketch;
  std::filesystem::path ink;
};

/// Pairs files with the same name under <dir>/sketch and <dir>/ink, sorted by name.
inline std::vector<SourcePair> discover_pairs(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path sketch_dir = dir / "sketch";
  const fs::path ink_dir = dir / "ink";
  if (!fs::is_directory(sketch_dir) || !fs::is_directory(ink_dir)) {
    throw Error(ErrorCode::Io, dir.string() + " must contain sketch/ and ink/ directories");
  }
  std::vector<SourcePair> pairs;
  for (const auto& entry : fs::directory_iterator(sketch_dir)) {
    if (!entry.is_regular_file() || !io::is_supported_input(entry.path())) continue;
    const fs::path ink = ink_dir / entry.path().filename();
    if (!fs::exists(ink)) {
      throw Error(ErrorCode::Io, "no inked counterpart for " + entry.path().string());
    }
    pairs.push_back(SourcePair{entry.path().stem().string(), entry.path(), ink});
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const SourcePair& a, const SourcePair& b) { return a.sketch.filename() < b.sketch.filename(); });
  return pairs;
}

struct DatasetOptions {
  int samples_per_pair = 64;
  int crop_size = 512;
  std::uint64_t seed = 0;
  int max_translate = -1;
};

/// Writes train_A/ (sketch) and train_B/ (ink) PNG patches plus a JSON-lines
/// manifest, and returns the manifest records.
inline std::vector<nlohmann::json> build_dataset(const std::vector<SourcePair>& pairs,
                                                 const std::filesystem::path& out_dir,
                                                 const DatasetOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "train_A");
  fs::create_directories(out_dir / "train_B");
  const SplitMix64 root(options.seed);
  std::vector<nlohmann::json> records;
  for (const auto& pair : pairs) {
    const ImageBuffer sketch = to_greyscale(io::read_image(pair.sketch));
    const ImageBuffer ink = to_greyscale(io::read_image(pair.ink));
    SplitMix64 rng = root.split(pair.pair_id);
    const auto specs = sample_specs(sketch.width(), sketch.height(), options.samples_per_pair,
                                    options.crop_size, rng, options.max_translate);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const PairedSample sample = apply_pair(sketch, ink, specs[i], pair.pair_id);
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%05zu.png", i);
      const fs::path a = fs::path("train_A") / (pair.pair_id + suffix);
      const fs::path b = fs::path("train_B") / (pair.pair_id + suffix);
      io::write_png(out_dir / a, sample.sketch_patch);
      io::write_png(out_dir / b, sample.ink_patch);
      nlohmann::json rec = {{"pair_id", pair.pair_id},
                            {"index", i},
                            {"sketch_source", pair.sketch.string()},
                            {"ink_source", pair.ink.string()},
                            {"spec", to_json(specs[i])},
                            {"sketch_output", a.string()},
                            {"ink_output", b.string()},
                            {"seed", options.seed},
                            {"stream", "splitmix64/v" + std::to_string(SplitMix64::kStreamVersion)}};
      records.push_back(std::move(rec));
    }
  }
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::trunc);
  for (const auto& r : records) manifest << r.dump() << '\n';
  if (!manifest) throw Error(ErrorCode::Io, "failed writing manifest");
  return records;
}

}  // namespace inkpipe
