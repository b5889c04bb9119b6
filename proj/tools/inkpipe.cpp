// inkpipe: batch pencil-to-ink translation and its supporting tools.
//
//   inkpipe process   <inputs...> -o out/ [--backend ink] ...
//   inkpipe plan      <image> | --size WxH
//   inkpipe diagnose  <images...>
//   inkpipe augment   <pairs-dir> -o dataset/ --n 64 --seed 7
//   inkpipe eval      <csv> [--format table|json] [--json report.json]
//
// Exit status: 0 success, 1 some item failed, 2 configuration error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "inkpipe/augment.hpp"
#include "inkpipe/evalkit.hpp"
#include "inkpipe/image_io.hpp"
#include "inkpipe/patch_plan.hpp"
#include "inkpipe/pipeline.hpp"
#include "inkpipe/preprocess.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitItemFailed = 1;
constexpr int kExitConfig = 2;

/// Splices `--config FILE` into ordinary flags placed right after the
/// subcommand, so anything given explicitly on the command line wins.
/// The file is `key = value` lines (INI/TOML style, `#` comments, arrays as
/// `[a, b]`), keys being the long flag names.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t consumed = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      consumed = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      consumed = 1;
    } else {
      continue;
    }
    std::ifstream in(path);
    if (!in) throw CLI::FileError::Missing(path);
    std::vector<std::string> injected;
    for (const auto& item : CLI::ConfigINI().from_config(in)) {
      if (item.name == "++" || item.name == "--") continue;
      injected.push_back("--" + item.name);
      injected.insert(injected.end(), item.inputs.begin(), item.inputs.end());
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + consumed));
    // After the subcommand name (args[1]) when there is one.
    const std::size_t at = args.size() > 1 ? 2 : 1;
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(std::min(at, args.size())), injected.begin(), injected.end());
    break;
  }
  return args;
}

bool is_configuration_error(inkpipe::ErrorCode code) {
  using inkpipe::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidOverlap:
    case ErrorCode::HandshakeFailed:
    case ErrorCode::SpawnFailed:
    case ErrorCode::VersionMismatch:
    case ErrorCode::Io:
      return true;
    default:
      return false;
  }
}

std::optional<inkpipe::LevelsSetting> to_levels(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return inkpipe::LevelsSetting{v.at(0), v.at(1)};
}

nlohmann::json diagnostics_json(const fs::path& path, const inkpipe::ImageBuffer& img,
                                const inkpipe::DiagnosticsReport& d) {
  return {{"input", path.string()},
          {"width", img.width()},
          {"height", img.height()},
          {"min", d.min},
          {"max", d.max},
          {"mean", d.mean},
          {"background_fraction", d.background_fraction},
          {"contrast_span", d.contrast_span},
          {"p1", d.p1},
          {"p99", d.p99},
          {"histogram", d.histogram}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-based pencil-to-ink translation pipeline"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  // process
  inkpipe::RunConfig run;
  std::vector<std::string> run_inputs;
  std::string output_dir = "out";
  std::string manifest_path;
  int fit_square = 0;
  int bilevel = -1;
  int line_threshold = run.ink.line_threshold;
  int ink_background = run.ink.background_threshold;
  int background_threshold = run.background_threshold;
  std::vector<double> pre_levels, post_levels;
  auto* process = app.add_subcommand("process", "Translate drawings patch by patch");
  process->add_option("inputs,--inputs", run_inputs, "Image files or directories")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  process->add_option("-o,--output_dir,--output-dir", output_dir, "Output directory")->capture_default_str();
  process->add_option("--backend", run.backend, "identity | ink | external:<command or host:port>")
      ->envname("INKPIPE_BACKEND")
      ->capture_default_str();
  process->add_option("--patch_size,--patch-size", run.patch_size)->capture_default_str()->check(CLI::Range(1, 65535));
  process->add_option("--overlap", run.overlap)->capture_default_str()->check(CLI::NonNegativeNumber);
  process->add_option("--workers", run.workers)->capture_default_str()->check(CLI::PositiveNumber);
  process->add_option("--prompt", run.prompt)->capture_default_str();
  process->add_option("--seed", run.seed)->capture_default_str();
  process->add_option("--line_threshold,--line-threshold", line_threshold, "Ink backend: darkest values drawn solid")
      ->capture_default_str()->check(CLI::Range(0, 255));
  process->add_option("--ink_background_threshold,--ink-background-threshold", ink_background,
                      "Ink backend: values at or above this become paper")
      ->capture_default_str()->check(CLI::Range(0, 255));
  process->add_option("--fit_square,--fit-square", fit_square, "Letterbox into a square of this side first")
      ->check(CLI::PositiveNumber);
  process->add_option("--pre_levels,--pre-levels", pre_levels, "LOW HIGH percentiles stretched before translation")
      ->expected(2);
  process->add_option("--post_levels,--post-levels", post_levels, "LOW HIGH percentiles stretched after recombining")
      ->expected(2);
  process->add_option("--bilevel_threshold,--bilevel-threshold", bilevel, "Binarise the output at this value")
      ->check(CLI::Range(0, 255));
  process->add_option("--background_threshold,--background-threshold", background_threshold,
                      "Diagnostics: values counted as background")
      ->capture_default_str()->check(CLI::Range(0, 255));
  process->add_option("--manifest", manifest_path, "Manifest path (default <output_dir>/manifest.json)");

  // plan
  std::string plan_image, plan_size;
  int plan_patch = 512, plan_overlap = 64;
  auto* plan = app.add_subcommand("plan", "Print the patch plan as JSON");
  auto* plan_image_opt = plan->add_option("image", plan_image, "Image whose dimensions are planned");
  plan->add_option("--size", plan_size, "WIDTHxHEIGHT instead of an image")->excludes(plan_image_opt);
  plan->add_option("--patch_size,--patch-size", plan_patch)->capture_default_str();
  plan->add_option("--overlap", plan_overlap)->capture_default_str();

  // diagnose
  std::vector<std::string> diag_inputs;
  int diag_threshold = 250;
  auto* diagnose = app.add_subcommand("diagnose", "Print image diagnostics as JSON");
  diagnose->add_option("inputs", diag_inputs)->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  diagnose->add_option("--background_threshold,--background-threshold", diag_threshold)
      ->capture_default_str()->check(CLI::Range(0, 255));

  // augment
  std::string pairs_dir, dataset_dir = "dataset";
  inkpipe::DatasetOptions dataset;
  auto* augment = app.add_subcommand("augment", "Build an augmented paired training set");
  augment->add_option("pairs", pairs_dir, "Directory holding sketch/ and ink/")->required();
  augment->add_option("-o,--output_dir,--output-dir", dataset_dir)->capture_default_str();
  augment->add_option("-n,--n", dataset.samples_per_pair, "Samples per pair")->capture_default_str()->check(CLI::PositiveNumber);
  augment->add_option("--seed", dataset.seed)->capture_default_str();
  augment->add_option("--crop_size,--crop-size", dataset.crop_size)->capture_default_str()->check(CLI::PositiveNumber);
  augment->add_option("--max_translate,--max-translate", dataset.max_translate, "Default crop_size/8");

  // eval
  std::string eval_csv, eval_format = "table", eval_json;
  auto* eval = app.add_subcommand("eval", "Expert-validation metrics from a CSV");
  eval->add_option("csv", eval_csv)->required()->check(CLI::ExistingFile);
  eval->add_option("--format", eval_format)->check(CLI::IsMember({"table", "json"}))->capture_default_str();
  eval->add_option("--json", eval_json, "Also write the JSON report here");

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args));
    std::vector<std::string> reversed(args.begin() + 1, args.end());
    std::reverse(reversed.begin(), reversed.end());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (process->parsed()) {
      run.inputs.assign(run_inputs.begin(), run_inputs.end());
      run.output_dir = output_dir;
      if (!manifest_path.empty()) run.manifest_path = manifest_path;
      if (fit_square > 0) run.fit_square = fit_square;
      if (bilevel >= 0) run.bilevel_threshold = bilevel;
      run.pre_levels = to_levels(pre_levels);
      run.post_levels = to_levels(post_levels);
      run.ink.line_threshold = static_cast<inkpipe::Sample>(line_threshold);
      run.ink.background_threshold = static_cast<inkpipe::Sample>(ink_background);
      run.background_threshold = static_cast<inkpipe::Sample>(background_threshold);

      const auto manifest = inkpipe::run_batch(run);
      std::size_t failed = 0;
      for (const auto& r : manifest.records) {
        if (r.error) {
          ++failed;
          std::cerr << r.input.string() << ": " << *r.error << '\n';
        }
      }
      std::cerr << manifest.records.size() - failed << "/" << manifest.records.size() << " images written to "
                << run.output_dir.string() << '\n';
      return failed == 0 ? kExitOk : kExitItemFailed;
    }

    if (plan->parsed()) {
      int w = 0, h = 0;
      if (!plan_size.empty()) {
        std::smatch m;
        static const std::regex size_re(R"(^(\d+)[xX](\d+)$)");
        if (!std::regex_match(plan_size, m, size_re)) {
          std::cerr << "--size expects WIDTHxHEIGHT\n";
          return kExitConfig;
        }
        w = std::stoi(m[1].str());
        h = std::stoi(m[2].str());
      } else if (!plan_image.empty()) {
        const auto img = inkpipe::io::read_image(plan_image);
        w = img.width();
        h = img.height();
      } else {
        std::cerr << "plan needs an image or --size\n";
        return kExitConfig;
      }
      std::cout << inkpipe::to_json(inkpipe::plan_patches(w, h, plan_patch, plan_overlap)).dump(2) << '\n';
      return kExitOk;
    }

    if (diagnose->parsed()) {
      nlohmann::json out = nlohmann::json::array();
      int rc = kExitOk;
      for (const auto& p : diag_inputs) {
        try {
          const auto img = inkpipe::to_greyscale(inkpipe::io::read_image(p));
          out.push_back(diagnostics_json(p, img, inkpipe::diagnostics(img, static_cast<inkpipe::Sample>(diag_threshold))));
        } catch (const std::exception& e) {
          out.push_back({{"input", p}, {"error", e.what()}});
          rc = kExitItemFailed;
        }
      }
      std::cout << (out.size() == 1 ? out[0] : out).dump(2) << '\n';
      return rc;
    }

    if (augment->parsed()) {
      const auto pairs = inkpipe::discover_pairs(pairs_dir);
      const auto records = inkpipe::build_dataset(pairs, dataset_dir, dataset);
      std::cerr << records.size() << " samples from " << pairs.size() << " pairs written to " << dataset_dir << '\n';
      return kExitOk;
    }

    if (eval->parsed()) {
      std::ifstream in(eval_csv);
      const auto report = inkpipe::eval::evaluate_csv(in);
      const auto json = inkpipe::eval::to_json(report);
      if (!eval_json.empty()) {
        std::ofstream(eval_json) << json.dump(2) << '\n';
      }
      if (eval_format == "json") {
        std::cout << json.dump(2) << '\n';
      } else {
        std::cout << inkpipe::eval::to_table(report);
      }
      return kExitOk;
    }
  } catch (const inkpipe::Error& e) {
    std::cerr << "inkpipe: " << e.what() << '\n';
    return is_configuration_error(e.code()) ? kExitConfig : kExitItemFailed;
  } catch (const std::exception& e) {
    std::cerr << "inkpipe: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
