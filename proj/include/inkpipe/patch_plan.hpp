#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inkpipe/preprocess.hpp"
#include "inkpipe/raster.hpp"

namespace inkpipe {

struct PatchSpec {
  int index = 0;
  Rect rect;
  /// True iff rect is patch_size x patch_size.
  bool standard = false;

  friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

struct PatchPlan {
  int source_width = 0;
  int source_height = 0;
  int patch_size = 512;
  int overlap = 64;
  std::vector<PatchSpec> patches;

  std::size_t size() const noexcept { return patches.size(); }
};

/// Window origins along one axis. A dimension that fits in one patch gets a
/// single origin 0 (its extent is then min(dim, patch_size)). Otherwise origins
/// step by patch_size - overlap and the last one is clamped to dim - patch_size.
inline std::vector<int> axis_positions(int dim, int patch_size, int overlap) {
  if (dim <= patch_size) {
    return {0};
  }
  const int stride = patch_size - overlap;
  const int last = dim - patch_size;
  const int count = (last + stride - 1) / stride + 1;
  std::vector<int> pos;
  pos.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count - 1; ++k) {
    pos.push_back(k * stride);
  }
  pos.push_back(last);
  return pos;
}

inline PatchPlan plan_patches(int width, int height, int patch_size = 512, int overlap = 64) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::InvalidArgument, "plan dimensions must be >= 1");
  }
  if (patch_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "patch_size must be >= 1");
  }
  if (overlap < 0 || overlap > patch_size / 2) {
    throw Error(ErrorCode::InvalidOverlap, "overlap " + std::to_string(overlap) +
                                               " outside [0, " + std::to_string(patch_size / 2) + "]");
  }
  PatchPlan plan;
  plan.source_width = width;
  plan.source_height = height;
  plan.patch_size = patch_size;
  plan.overlap = overlap;
  const auto xs = axis_positions(width, patch_size, overlap);
  const auto ys = axis_positions(height, patch_size, overlap);
  const int pw = std::min(width, patch_size);
  const int ph = std::min(height, patch_size);
  plan.patches.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) {
      plan.patches.push_back(PatchSpec{static_cast<int>(plan.patches.size()), Rect{x, y, pw, ph},
                                       pw == patch_size && ph == patch_size});
    }
  }
  return plan;
}

inline nlohmann::json to_json(const PatchPlan& plan) {
  auto arr = nlohmann::json::array();
  for (const auto& p : plan.patches) {
    arr.push_back({{"index", p.index},
                   {"x", p.rect.x},
                   {"y", p.rect.y},
                   {"w", p.rect.w},
                   {"h", p.rect.h},
                   {"standard", p.standard}});
  }
  return arr;
}

inline std::vector<ImageBuffer> extract(const ImageBuffer& img, const PatchPlan& plan) {
  if (img.width() != plan.source_width || img.height() != plan.source_height) {
    throw Error(ErrorCode::DimensionMismatch,
                "image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                    " vs plan " + std::to_string(plan.source_width) + "x" +
                    std::to_string(plan.source_height));
  }
  std::vector<ImageBuffer> out;
  out.reserve(plan.size());
  for (const auto& p : plan.patches) {
    out.push_back(crop(img, p.rect));
  }
  return out;
}

/// Feather weights along one axis of a patch spanning [origin, origin+extent)
/// inside an image of length `dim`. An edge facing the image interior ramps
/// linearly from 1/(overlap+1) at the edge to 1 at distance `overlap`; edges on
/// the image border stay at 1.
inline std::vector<double> axis_weights(int origin, int extent, int dim, int overlap) {
  std::vector<double> w(static_cast<std::size_t>(extent), 1.0);
  if (overlap <= 0) {
    return w;
  }
  const bool ramp_start = origin > 0;
  const bool ramp_end = origin + extent < dim;
  const double denom = overlap + 1.0;
  for (int t = 0; t < extent; ++t) {
    double v = 1.0;
    if (ramp_start) v = std::min(v, (t + 1) / denom);
    if (ramp_end) v = std::min(v, (extent - t) / denom);
    w[static_cast<std::size_t>(t)] = v;
  }
  return w;
}

/// Unnormalised blend weight of a patch at patch-local (u, v).
inline double blend_weight(const PatchPlan& plan, const PatchSpec& patch, int u, int v) {
  const auto wx = axis_weights(patch.rect.x, patch.rect.w, plan.source_width, plan.overlap);
  const auto wy = axis_weights(patch.rect.y, patch.rect.h, plan.source_height, plan.overlap);
  return wx[static_cast<std::size_t>(u)] * wy[static_cast<std::size_t>(v)];
}

/// Per-pixel sum of blend weights over all patches, row-major.
inline std::vector<double> weight_sums(const PatchPlan& plan) {
  std::vector<double> sums(static_cast<std::size_t>(plan.source_width) * plan.source_height, 0.0);
  for (const auto& p : plan.patches) {
    const auto wx = axis_weights(p.rect.x, p.rect.w, plan.source_width, plan.overlap);
    const auto wy = axis_weights(p.rect.y, p.rect.h, plan.source_height, plan.overlap);
    for (int v = 0; v < p.rect.h; ++v) {
      double* row = sums.data() + static_cast<std::size_t>(p.rect.y + v) * plan.source_width + p.rect.x;
      for (int u = 0; u < p.rect.w; ++u) {
        row[u] += wx[static_cast<std::size_t>(u)] * wy[static_cast<std::size_t>(v)];
      }
    }
  }
  return sums;
}

/// Weighted average of the patch outputs, accumulated in plan order in double
/// precision and rounded half-up. The result depends only on (outputs, plan).
inline ImageBuffer recombine(std::span<const ImageBuffer> outputs, const PatchPlan& plan) {
  if (outputs.size() != plan.size()) {
    throw Error(ErrorCode::PlanMismatch, std::to_string(outputs.size()) + " outputs for " +
                                             std::to_string(plan.size()) + " patches");
  }
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& r = plan.patches[i].rect;
    if (outputs[i].width() != r.w || outputs[i].height() != r.h || outputs[i].channels() != 1) {
      throw Error(ErrorCode::PlanMismatch,
                  "output " + std::to_string(i) + " is " + std::to_string(outputs[i].width()) + "x" +
                      std::to_string(outputs[i].height()) + "x" +
                      std::to_string(outputs[i].channels()) + ", plan expects " + to_string(r));
    }
  }
  const int width = plan.source_width;
  const int height = plan.source_height;
  if (plan.size() == 1 && plan.patches[0].rect == Rect{0, 0, width, height}) {
    return outputs[0];
  }

  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<double> num(n, 0.0);
  std::vector<double> den(n, 0.0);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& r = plan.patches[i].rect;
    const auto wx = axis_weights(r.x, r.w, width, plan.overlap);
    const auto wy = axis_weights(r.y, r.h, height, plan.overlap);
    for (int v = 0; v < r.h; ++v) {
      const std::size_t base = static_cast<std::size_t>(r.y + v) * width + r.x;
      double* nrow = num.data() + base;
      double* drow = den.data() + base;
      auto src = outputs[i].row(v);
      const double wv = wy[static_cast<std::size_t>(v)];
      for (int u = 0; u < r.w; ++u) {
        const double w = wx[static_cast<std::size_t>(u)] * wv;
        nrow[u] += w * src[static_cast<std::size_t>(u)];
        drow[u] += w;
      }
    }
  }

  ImageBuffer out(width, height, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = round_to_sample(num[i] / den[i]);
  }
  return out;
}

}  // namespace inkpipe
