#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inkpipe/raster.hpp"

namespace inkpipe::eval {

/// Positive class: "the drawing is AI-generated".
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// An exact fraction as produced by the count formulas (not reduced).
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }

  /// Equality of the rational values.
  friend bool operator==(const Ratio& a, const Ratio& b) noexcept {
    return static_cast<unsigned __int128>(a.num) * b.den == static_cast<unsigned __int128>(b.num) * a.den;
  }
};

/// A metric whose denominator is zero is Undefined (nullopt), which is not 0.
using Metric = std::optional<Ratio>;

struct Metrics {
  Metric accuracy;
  Metric recall;
  Metric precision;
  Metric jaccard;
};

/// Works for any indexable boolean sequence (std::vector<bool> included).
template <typename Predicted, typename Actual>
ConfusionCounts confusion(const Predicted& predicted, const Actual& actual) {
  if (predicted.size() != actual.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predicted.size()) + " predictions vs " +
                                               std::to_string(actual.size()) + " labels");
  }
  if (predicted.size() == 0) {
    throw Error(ErrorCode::Empty, "no labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i];
    const bool a = actual[i];
    if (p) {
      a ? ++c.tp : ++c.fp;
    } else {
      a ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

inline Metric ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return Ratio{num, den};
}

inline Metrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) {
    throw Error(ErrorCode::Empty, "metrics need at least one labelled item");
  }
  return Metrics{ratio(c.tp + c.tn, c.total()), ratio(c.tp, c.tp + c.fn), ratio(c.tp, c.tp + c.fp),
                 ratio(c.tp, c.tp + c.fp + c.fn)};
}

/// Mean of 1..5 ratings, with the two-decimal value rounded half-up.
struct ScoreMean {
  std::string criterion;
  std::uint64_t count = 0;
  std::uint64_t sum = 0;
  double mean = 0.0;
  /// round_half_up(100 * mean), computed in integers.
  std::int64_t hundredths = 0;

  double rounded() const noexcept { return static_cast<double>(hundredths) / 100.0; }
};

inline ScoreMean mean_score(std::span<const int> ratings, std::string criterion = {}) {
  if (ratings.empty()) {
    throw Error(ErrorCode::Empty, "no ratings for criterion '" + criterion + "'");
  }
  ScoreMean m;
  m.criterion = std::move(criterion);
  for (int r : ratings) {
    if (r < 1 || r > 5) {
      throw Error(ErrorCode::OutOfRangeRating,
                  "rating " + std::to_string(r) + " outside 1..5 for '" + m.criterion + "'");
    }
    m.sum += static_cast<std::uint64_t>(r);
  }
  m.count = ratings.size();
  m.mean = static_cast<double>(m.sum) / static_cast<double>(m.count);
  m.hundredths = static_cast<std::int64_t>((200 * m.sum + m.count) / (2 * m.count));
  return m;
}

/// scores[item][k] is the rating of item on criteria[k].
inline std::vector<ScoreMean> aggregate_scores(const std::vector<std::vector<int>>& scores,
                                               const std::vector<std::string>& criteria) {
  if (scores.empty() || criteria.empty()) {
    throw Error(ErrorCode::Empty, "score matrix is empty");
  }
  std::vector<std::vector<int>> columns(criteria.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != criteria.size()) {
      throw Error(ErrorCode::LengthMismatch, "row " + std::to_string(i) + " has " +
                                                 std::to_string(scores[i].size()) + " ratings for " +
                                                 std::to_string(criteria.size()) + " criteria");
    }
    for (std::size_t k = 0; k < criteria.size(); ++k) columns[k].push_back(scores[i][k]);
  }
  std::vector<ScoreMean> out;
  for (std::size_t k = 0; k < criteria.size(); ++k) out.push_back(mean_score(columns[k], criteria[k]));
  return out;
}

struct ImageDistance {
  double l2 = 0.0;   ///< sqrt(sum((a - b)^2)) on samples scaled to [0, 1]
  double mae = 0.0;  ///< mean |a - b| on samples scaled to [0, 1]
};

inline ImageDistance image_l2(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch, "image_l2 needs equal shapes");
  }
  std::uint64_t sq = 0;
  std::uint64_t abs_sum = 0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const int d = static_cast<int>(da[i]) - static_cast<int>(db[i]);
    sq += static_cast<std::uint64_t>(d * d);
    abs_sum += static_cast<std::uint64_t>(d < 0 ? -d : d);
  }
  return ImageDistance{std::sqrt(static_cast<double>(sq)) / 255.0,
                       static_cast<double>(abs_sum) / 255.0 / static_cast<double>(da.size())};
}

// ---- CSV-driven reports ----

inline const std::vector<std::string>& standard_criteria() {
  static const std::vector<std::string> c{"AC", "LQ", "SQ", "OQ", "FR", "FD"};
  return c;
}

struct EvaluatorMetrics {
  std::string evaluator;
  ConfusionCounts counts;
  Metrics metrics;
};

struct EvaluatorScores {
  std::string evaluator;
  std::vector<ScoreMean> means;
};

struct EvalReport {
  std::vector<EvaluatorMetrics> classification;
  std::vector<EvaluatorScores> criteria;
  /// Per-criterion means over every evaluator's ratings.
  std::vector<ScoreMean> overall;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_bool(const std::string& s, std::size_t line) {
  if (s == "1" || s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "0" || s == "false" || s == "False" || s == "FALSE") return false;
  throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": '" + s + "' is not 0/1");
}

inline int parse_int(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": '" + s + "' is not an integer");
}

template <typename T>
T& entry_for(std::vector<std::pair<std::string, T>>& v, const std::string& key) {
  for (auto& [k, val] : v) {
    if (k == key) return val;
  }
  v.emplace_back(key, T{});
  return v.back().second;
}

}  // namespace detail

/// Parses either `item_id,evaluator,predicted_ai,actual_ai` or
/// `item_id,evaluator,criterion,score`. Evaluators keep first-appearance order;
/// criteria follow AC LQ SQ OQ FR FD, then any others in first-appearance order.
inline EvalReport evaluate_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv(line);
      break;
    }
  }
  const std::vector<std::string> classification_header{"item_id", "evaluator", "predicted_ai", "actual_ai"};
  const std::vector<std::string> criteria_header{"item_id", "evaluator", "criterion", "score"};
  const bool is_classification = header == classification_header;
  if (!is_classification && header != criteria_header) {
    throw Error(ErrorCode::InvalidArgument,
                "unrecognised CSV header; expected item_id,evaluator,predicted_ai,actual_ai or "
                "item_id,evaluator,criterion,score");
  }

  EvalReport report;
  std::vector<std::pair<std::string, std::pair<std::vector<bool>, std::vector<bool>>>> labels;
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::vector<int>>>>> ratings;
  std::vector<std::string> criteria_seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 4) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected 4 fields");
    }
    if (is_classification) {
      auto& [pred, act] = detail::entry_for(labels, cells[1]);
      pred.push_back(detail::parse_bool(cells[2], line_no));
      act.push_back(detail::parse_bool(cells[3], line_no));
    } else {
      auto& per_eval = detail::entry_for(ratings, cells[1]);
      detail::entry_for(per_eval, cells[2]).push_back(detail::parse_int(cells[3], line_no));
      if (std::find(criteria_seen.begin(), criteria_seen.end(), cells[2]) == criteria_seen.end()) {
        criteria_seen.push_back(cells[2]);
      }
    }
  }

  if (is_classification) {
    if (labels.empty()) throw Error(ErrorCode::Empty, "no rows");
    for (auto& [evaluator, pa] : labels) {
      const auto counts = confusion(pa.first, pa.second);
      report.classification.push_back(EvaluatorMetrics{evaluator, counts, metrics(counts)});
    }
    return report;
  }

  if (ratings.empty()) throw Error(ErrorCode::Empty, "no rows");
  std::vector<std::string> order;
  for (const auto& c : standard_criteria()) {
    if (std::find(criteria_seen.begin(), criteria_seen.end(), c) != criteria_seen.end()) order.push_back(c);
  }
  for (const auto& c : criteria_seen) {
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  std::map<std::string, std::vector<int>> pooled;
  for (auto& [evaluator, per_eval] : ratings) {
    EvaluatorScores s{evaluator, {}};
    for (const auto& c : order) {
      auto& r = detail::entry_for(per_eval, c);
      if (r.empty()) continue;
      s.means.push_back(mean_score(r, c));
      pooled[c].insert(pooled[c].end(), r.begin(), r.end());
    }
    report.criteria.push_back(std::move(s));
  }
  for (const auto& c : order) report.overall.push_back(mean_score(pooled[c], c));
  return report;
}

inline nlohmann::json metric_json(const Metric& m) {
  if (!m) return nullptr;
  return m->value();
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = nlohmann::json::object();
  if (!r.classification.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& e : r.classification) {
      arr.push_back({{"evaluator", e.evaluator},
                     {"tp", e.counts.tp},
                     {"tn", e.counts.tn},
                     {"fp", e.counts.fp},
                     {"fn", e.counts.fn},
                     {"accuracy", metric_json(e.metrics.accuracy)},
                     {"recall", metric_json(e.metrics.recall)},
                     {"precision", metric_json(e.metrics.precision)},
                     {"jaccard", metric_json(e.metrics.jaccard)}});
    }
    j["classification"] = std::move(arr);
  }
  if (!r.criteria.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& e : r.criteria) {
      nlohmann::json means = nlohmann::json::object();
      for (const auto& m : e.means) means[m.criterion] = m.rounded();
      arr.push_back({{"evaluator", e.evaluator}, {"means", std::move(means)}});
    }
    j["criteria"] = std::move(arr);
    nlohmann::json overall = nlohmann::json::object();
    for (const auto& m : r.overall) overall[m.criterion] = m.rounded();
    j["overall"] = std::move(overall);
  }
  return j;
}

/// Plain-text table with right-aligned two-decimal columns; Undefined prints as "undef".
inline std::string to_table(const EvalReport& r) {
  std::ostringstream out;
  auto cell = [](const Metric& m) {
    if (!m) return std::string("undef");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", m->value());
    return std::string(buf);
  };
  auto pad = [](const std::string& s, std::size_t w, bool left) {
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
  };
  std::size_t name_w = 9;
  for (const auto& e : r.classification) name_w = std::max(name_w, e.evaluator.size());
  for (const auto& e : r.criteria) name_w = std::max(name_w, e.evaluator.size());

  if (!r.classification.empty()) {
    out << pad("Evaluator", name_w, true);
    for (const char* h : {"Accuracy", "Recall", "Precision", "Jaccard"}) out << "  " << pad(h, 9, false);
    out << '\n';
    for (const auto& e : r.classification) {
      out << pad(e.evaluator, name_w, true);
      for (const auto* m : {&e.metrics.accuracy, &e.metrics.recall, &e.metrics.precision, &e.metrics.jaccard}) {
        out << "  " << pad(cell(*m), 9, false);
      }
      out << '\n';
    }
  }
  if (!r.criteria.empty()) {
    out << pad("Evaluator", name_w, true);
    for (const auto& m : r.overall) out << "  " << pad(m.criterion, 5, false);
    out << '\n';
    auto row = [&](const std::string& name, const std::vector<ScoreMean>& means) {
      out << pad(name, name_w, true);
      for (const auto& col : r.overall) {
        std::string v = "-";
        for (const auto& m : means) {
          if (m.criterion == col.criterion) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", m.rounded());
            v = buf;
          }
        }
        out << "  " << pad(v, 5, false);
      }
      out << '\n';
    };
    for (const auto& e : r.criteria) row(e.evaluator, e.means);
    row("(all)", r.overall);
  }
  return out.str();
}

}  // namespace inkpipe::eval
