#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "inkpipe/backend.hpp"
#include "inkpipe/image_io.hpp"
#include "inkpipe/patch_plan.hpp"
#include "inkpipe/preprocess.hpp"

namespace inkpipe {

inline constexpr const char* kPipelineVersion = "inkpipe/1.0";

struct LevelsSetting {
  double low = 1.0;
  double high = 99.0;
};

struct RunConfig {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path output_dir = "out";
  std::string backend = "identity";
  int patch_size = 512;
  int overlap = 64;
  int workers = 1;
  std::string prompt = kDefaultPrompt;
  std::uint64_t seed = 0;
  InkRenderParams ink;

  /// Letterbox to this side before translation and restore afterwards (training-style input).
  std::optional<int> fit_square;
  std::optional<LevelsSetting> pre_levels;
  std::optional<LevelsSetting> post_levels;
  std::optional<int> bilevel_threshold;
  Sample background_threshold = 250;

  /// Defaults to <output_dir>/manifest.json.
  std::optional<std::filesystem::path> manifest_path;

  void validate() const {
    if (patch_size < 1) throw Error(ErrorCode::InvalidArgument, "patch_size must be >= 1");
    if (overlap < 0 || overlap > patch_size / 2) {
      throw Error(ErrorCode::InvalidOverlap, "overlap must lie in [0, patch_size/2]");
    }
    if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
    if (fit_square && *fit_square < 1) throw Error(ErrorCode::InvalidArgument, "fit_square must be >= 1");
    if (bilevel_threshold && (*bilevel_threshold < 0 || *bilevel_threshold > 255)) {
      throw Error(ErrorCode::InvalidArgument, "bilevel threshold must lie in 0..255");
    }
    for (const auto* lv : {&pre_levels, &post_levels}) {
      if (*lv && !((*lv)->low >= 0 && (*lv)->low < (*lv)->high && (*lv)->high <= 100)) {
        throw Error(ErrorCode::InvalidArgument, "levels need 0 <= low < high <= 100");
      }
    }
    ink.validate();
  }

  BackendConfig backend_config() const {
    BackendConfig c;
    c.name = backend;
    c.prompt = prompt;
    c.patch_size = patch_size;
    c.seed = seed;
    c.ink = ink;
    return c;
  }

  std::filesystem::path resolved_manifest_path() const {
    return manifest_path ? *manifest_path : output_dir / "manifest.json";
  }
};

struct ImageRecord {
  std::filesystem::path input;
  std::optional<std::filesystem::path> output;
  int width = 0;
  int height = 0;
  int patch_count = 0;
  std::string backend;
  double timing_ms = 0.0;
  std::optional<DiagnosticsReport> diagnostics;
  std::optional<std::string> error;
};

struct RunManifest {
  std::string pipeline_version = kPipelineVersion;
  nlohmann::json config;
  std::vector<ImageRecord> records;

  bool all_ok() const {
    return std::all_of(records.begin(), records.end(), [](const ImageRecord& r) { return !r.error; });
  }
};

/// Expands directories (non-recursively) into their supported image files;
/// each directory's entries are sorted by name. Explicit files are kept as given.
inline std::vector<std::filesystem::path> discover_inputs(const std::vector<std::filesystem::path>& paths) {
  namespace fs = std::filesystem;
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && io::is_supported_input(entry.path())) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorCode::Io, "input does not exist: " + p.string());
    }
  }
  return out;
}

/// Runs fn(worker, index) for index in [0, count) on `workers` threads.
/// The first exception is rethrown after every thread has finished.
inline void parallel_for(std::size_t count, int workers, const std::function<void(int, std::size_t)>& fn) {
  if (count == 0) return;
  const int n = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count));
  if (n == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(0, i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = next++; i < count && !failed; i = next++) {
        try {
          fn(w, i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct ImageResult {
  ImageBuffer image;
  int patch_count = 0;
  DiagnosticsReport diagnostics;
};

/// Translates one decoded image: greyscale, optional letterbox and levels,
/// plan, translate every patch, recombine, restore geometry, post-process.
/// Patches are split into contiguous chunks, one per session.
inline ImageResult process_image(const ImageBuffer& decoded, const RunConfig& config,
                                 std::span<BackendSession* const> sessions) {
  ImageBuffer grey = to_greyscale(decoded);
  ImageResult result;
  result.diagnostics = diagnostics(grey, config.background_threshold);

  std::optional<SquareFit> fit;
  ImageBuffer work = std::move(grey);
  if (config.fit_square) {
    fit = fit_to_square(work, *config.fit_square, 255);
    work = fit->image;
  }
  if (config.pre_levels) {
    work = apply_levels(work, config.pre_levels->low, config.pre_levels->high).image;
  }

  const PatchPlan plan = plan_patches(work.width(), work.height(), config.patch_size, config.overlap);
  result.patch_count = static_cast<int>(plan.size());
  const auto patches = extract(work, plan);
  std::vector<PatchOrigin> origins;
  origins.reserve(plan.size());
  for (const auto& p : plan.patches) {
    origins.push_back(PatchOrigin{static_cast<std::uint32_t>(p.rect.x), static_cast<std::uint32_t>(p.rect.y)});
  }

  std::vector<ImageBuffer> outputs(plan.size());
  if (sessions.size() == 1) {
    outputs = sessions[0]->translate_batch(patches, origins);
  } else {
    // Contiguous chunks, one per session; results land by plan index.
    const std::size_t n = sessions.size();
    parallel_for(n, static_cast<int>(n), [&](int, std::size_t s) {
      const std::size_t begin = plan.size() * s / n;
      const std::size_t end = plan.size() * (s + 1) / n;
      if (begin == end) return;
      auto chunk = sessions[s]->translate_batch(std::span(patches).subspan(begin, end - begin),
                                                std::span(origins).subspan(begin, end - begin));
      std::move(chunk.begin(), chunk.end(), outputs.begin() + static_cast<std::ptrdiff_t>(begin));
    });
  }

  ImageBuffer out = recombine(outputs, plan);
  if (fit) {
    out = unfit_from_square(out, fit->placement, fit->source_width, fit->source_height);
  }
  if (config.post_levels) {
    out = apply_levels(out, config.post_levels->low, config.post_levels->high).image;
  }
  if (config.bilevel_threshold) {
    out = apply_bilevel(out, static_cast<Sample>(*config.bilevel_threshold));
  }
  result.image = std::move(out);
  return result;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& p : c.inputs) inputs.push_back(p.string());
  auto levels = [](const std::optional<LevelsSetting>& l) -> nlohmann::json {
    if (!l) return nullptr;
    return {{"low", l->low}, {"high", l->high}};
  };
  return {{"inputs", inputs},
          {"output_dir", c.output_dir.string()},
          {"backend", c.backend},
          {"patch_size", c.patch_size},
          {"overlap", c.overlap},
          {"workers", c.workers},
          {"prompt", c.prompt},
          {"seed", c.seed},
          {"line_threshold", c.ink.line_threshold},
          {"ink_background_threshold", c.ink.background_threshold},
          {"fit_square", c.fit_square ? nlohmann::json(*c.fit_square) : nlohmann::json(nullptr)},
          {"pre_levels", levels(c.pre_levels)},
          {"post_levels", levels(c.post_levels)},
          {"bilevel_threshold", c.bilevel_threshold ? nlohmann::json(*c.bilevel_threshold) : nlohmann::json(nullptr)},
          {"background_threshold", c.background_threshold}};
}

inline nlohmann::json to_json(const ImageRecord& r) {
  nlohmann::json diag = nullptr;
  if (r.diagnostics) {
    diag = {{"min", r.diagnostics->min},
            {"max", r.diagnostics->max},
            {"mean", r.diagnostics->mean},
            {"background_fraction", r.diagnostics->background_fraction},
            {"contrast_span", r.diagnostics->contrast_span}};
  }
  return {{"input", r.input.string()},
          {"output", r.output ? nlohmann::json(r.output->string()) : nlohmann::json(nullptr)},
          {"width", r.width},
          {"height", r.height},
          {"patch_count", r.patch_count},
          {"backend", r.backend},
          {"timing_ms", r.timing_ms},
          {"diagnostics", diag},
          {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) records.push_back(to_json(r));
  return {{"pipeline_version", m.pipeline_version}, {"config", m.config}, {"records", records}};
}

/// Opens sessions for a run. Stateless backends share one session.
class SessionPool {
 public:
  SessionPool(const RunConfig& config, int count)
      : selector_(BackendSelector::parse(config.backend)), config_(config.backend_config()) {
    owned_.push_back(open_backend(selector_, config_));
    info_ = owned_.front()->info();
    if (owned_.front()->concurrent()) {
      sessions_.assign(static_cast<std::size_t>(count), owned_.front().get());
      return;
    }
    sessions_.push_back(owned_.front().get());
    for (int i = 1; i < count; ++i) {
      owned_.push_back(open_backend(selector_, config_));
      sessions_.push_back(owned_.back().get());
    }
  }

  /// Replaces unusable sessions in [offset, offset + count). Each index is
  /// owned by a single worker, so no locking is needed for distinct ranges.
  void heal(std::size_t offset, std::size_t count) {
    if (owned_.size() != sessions_.size()) return;
    for (std::size_t i = offset; i < offset + count; ++i) {
      if (!owned_[i]->healthy()) {
        owned_[i] = open_backend(selector_, config_);
        sessions_[i] = owned_[i].get();
      }
    }
  }

  std::span<BackendSession* const> all() const noexcept { return sessions_; }
  std::span<BackendSession* const> slice(std::size_t offset, std::size_t count) const noexcept {
    return std::span<BackendSession* const>(sessions_).subspan(offset, count);
  }
  /// Info of the first session, captured at open time.
  const SessionInfo& info() const noexcept { return info_; }

 private:
  BackendSelector selector_;
  BackendConfig config_;
  SessionInfo info_;
  std::vector<std::unique_ptr<BackendSession>> owned_;
  std::vector<BackendSession*> sessions_;
};

/// Processes every discovered input, isolating per-image failures, and writes
/// the manifest last. Backend open failures propagate (the run cannot start).
///
/// Workers are split between images and patches: min(workers, images) images
/// run at once, each with workers / that many sessions for its patches.
/// Outputs do not depend on the split.
inline RunManifest run_batch(const RunConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  const auto inputs = discover_inputs(config.inputs);

  const int image_workers = std::max(1, std::min<int>(config.workers, static_cast<int>(inputs.size())));
  const int patch_workers = std::max(1, config.workers / image_workers);
  SessionPool pool(config, image_workers * patch_workers);

  fs::create_directories(config.output_dir);
  RunManifest manifest;
  manifest.config = to_json(config);
  manifest.records.resize(inputs.size());

  // Two inputs with the same stem would write the same output; the later one fails.
  std::vector<std::optional<std::size_t>> clash(inputs.size());
  std::map<std::string, std::size_t> first_with_stem;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto [it, fresh] = first_with_stem.emplace(inputs[i].stem().string(), i);
    if (!fresh) clash[i] = it->second;
  }

  parallel_for(inputs.size(), image_workers, [&](int worker, std::size_t i) {
    ImageRecord& rec = manifest.records[i];
    rec.input = inputs[i];
    rec.backend = pool.info().backend;
    const auto start = std::chrono::steady_clock::now();
    const fs::path out = config.output_dir / (inputs[i].stem().string() + ".png");
    if (clash[i]) {
      rec.error = "output name collides with " + inputs[*clash[i]].string();
      return;
    }
    try {
      const ImageBuffer decoded = io::read_image(inputs[i]);
      rec.width = decoded.width();
      rec.height = decoded.height();
      const auto offset = static_cast<std::size_t>(worker * patch_workers);
      pool.heal(offset, static_cast<std::size_t>(patch_workers));
      ImageResult result = process_image(decoded, config, pool.slice(offset, static_cast<std::size_t>(patch_workers)));
      rec.patch_count = result.patch_count;
      rec.diagnostics = result.diagnostics;
      io::write_png(out, result.image);
      rec.output = out;
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.output.reset();
      std::error_code ignored;
      fs::remove(out, ignored);
    }
    rec.timing_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });

  const fs::path manifest_path = config.resolved_manifest_path();
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  std::ofstream out(manifest_path, std::ios::trunc);
  out << to_json(manifest).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing manifest " + manifest_path.string());
  return manifest;
}

}  // namespace inkpipe
