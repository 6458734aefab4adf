#pragma once

// Meta-metrics over phi values (MAR, ASD, SCV), normalized relative gain
// across metric configurations, seed statistics, and the report structure
// the axiom runners fill in.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "frame/common.hpp"
#include "frame/metrics.hpp"

namespace frame {

// Mean of ref / nonref accuracy ratios. Zero denominators are skipped and
// counted; if every denominator is zero the ratio is undefined.
struct MarResult {
  double value = 0.0;
  std::size_t terms = 0;
  std::size_t excluded = 0;
};

inline MarResult compute_mar(double ref_accuracy, const std::vector<double>& nonref_accuracies) {
  if (nonref_accuracies.empty()) throw DataError("MAR needs at least one non-reference rationale");
  MarResult r;
  double sum = 0.0;
  for (double d : nonref_accuracies) {
    if (d == 0.0) {
      ++r.excluded;
      continue;
    }
    sum += ref_accuracy / d;
    ++r.terms;
  }
  if (r.terms == 0) throw DataError("MAR undefined: every non-reference accuracy is zero");
  r.value = sum / static_cast<double>(r.terms);
  return r;
}

inline MarResult compute_mar(const AccuracyTerm& ref, const std::vector<AccuracyTerm>& nonref) {
  std::vector<double> values;
  for (const auto& t : nonref) values.push_back(t.value);
  return compute_mar(ref.value, values);
}

inline double compute_asd(double a, double b) { return std::abs(a - b); }

inline constexpr double kScvZeroMean = 1e-9;

struct ScvResult {
  std::optional<double> value;
  std::string undefined_reason;
};

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Sample standard deviation over mean.
inline ScvResult compute_scv(const std::vector<double>& values) {
  if (values.size() < 2) throw DataError("SCV needs at least two settings");
  double mean = 0.0;
  for (double x : values) mean += x;
  mean /= static_cast<double>(values.size());
  if (std::abs(mean) < kScvZeroMean) return {std::nullopt, "mean phi is zero; coefficient of variation undefined"};
  return {sample_std(values) / mean, {}};
}

struct SeedStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  bool single_seed = false;
};

inline SeedStats aggregate_seeds(const std::vector<double>& values) {
  if (values.empty()) throw DataError("cannot aggregate an empty list of seed values");
  SeedStats s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  s.std = sample_std(values);
  s.single_seed = values.size() == 1;
  return s;
}

enum class Direction { higher_better, lower_better };

inline std::string to_string(Direction d) { return d == Direction::higher_better ? "higher_better" : "lower_better"; }

// Per column, min-max normalize across configurations (inverted for
// lower-is-better columns), then average each row. A constant column maps
// to 0.5. Undefined cells are left out of their column and of their row's
// mean; a row with no defined cells has undefined NRG.
inline std::vector<std::optional<double>> compute_nrg(const std::vector<std::vector<std::optional<double>>>& scores,
                                                      const std::vector<Direction>& directions) {
  if (scores.size() < 2) throw DataError("NRG needs at least two configurations");
  for (const auto& row : scores) {
    if (row.size() != directions.size()) throw DataError("NRG: every column needs a direction");
  }
  const std::size_t cols = directions.size();
  std::vector<double> sum(scores.size(), 0.0);
  std::vector<std::size_t> count(scores.size(), 0);
  for (std::size_t c = 0; c < cols; ++c) {
    std::optional<double> lo, hi;
    for (const auto& row : scores) {
      if (!row[c]) continue;
      lo = lo ? std::min(*lo, *row[c]) : *row[c];
      hi = hi ? std::max(*hi, *row[c]) : *row[c];
    }
    if (!lo) continue;
    const double span = *hi - *lo;
    const bool degenerate = span <= 1e-12 * std::max(1.0, std::abs(*hi));
    for (std::size_t r = 0; r < scores.size(); ++r) {
      if (!scores[r][c]) continue;
      const double v = *scores[r][c];
      double norm = 0.5;
      if (!degenerate) {
        norm = directions[c] == Direction::higher_better ? (v - *lo) / span : (*hi - v) / span;
      }
      sum[r] += norm;
      ++count[r];
    }
  }
  std::vector<std::optional<double>> out(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (count[r]) out[r] = sum[r] / static_cast<double>(count[r]);
  }
  return out;
}

inline std::vector<double> compute_nrg(const std::vector<std::vector<double>>& scores,
                                       const std::vector<Direction>& directions) {
  std::vector<std::vector<std::optional<double>>> opt;
  for (const auto& row : scores) opt.emplace_back(row.begin(), row.end());
  std::vector<double> out;
  for (const auto& v : compute_nrg(opt, directions)) out.push_back(v.value_or(0.0));
  return out;
}

// --- reports --------------------------------------------------------------

struct MetricColumn {
  std::string key;
  std::string header;  // markdown table header
  Direction direction = Direction::higher_better;
  bool in_nrg = true;
};

// One meta-metric for one configuration: per-seed values (or per-annotator
// for human studies) and their aggregate.
struct CellValue {
  std::vector<std::optional<double>> per_seed;
  std::optional<SeedStats> stats;
  std::string undefined_reason;
};

struct ConfigRow {
  std::string config;
  std::map<std::string, CellValue> values;
};

// One point of a phi-vs-setting curve.
struct CurvePoint {
  std::string setting;
  std::string config;
  std::uint64_t seed = 0;
  std::optional<double> phi;
};

struct AxiomReport {
  int axiom = 1;
  std::string simulator_kind = "lm";  // "lm" or "human"
  std::vector<MetricColumn> columns;
  std::vector<ConfigRow> rows;
  std::map<std::string, double> nrg;
  std::vector<std::uint64_t> seeds;
  std::vector<CurvePoint> curves;
  std::vector<PhiResult> phi_results;  // every evaluated cell, for audit
  std::vector<std::string> notes;

  const ConfigRow* row(const std::string& config) const {
    for (const auto& r : rows) {
      if (r.config == config) return &r;
    }
    return nullptr;
  }

  const CellValue* cell(const std::string& config, const std::string& key) const {
    const auto* r = row(config);
    if (!r) return nullptr;
    auto it = r->values.find(key);
    return it == r->values.end() ? nullptr : &it->second;
  }

  std::optional<double> mean(const std::string& config, const std::string& key) const {
    const auto* c = cell(config, key);
    if (!c || !c->stats) return std::nullopt;
    return c->stats->mean;
  }
};

namespace columns {

inline std::vector<MetricColumn> axiom1() {
  return {{"phi_ref", "$\\Phi(\\hat{y})$ (↑)", Direction::higher_better, true},
          {"mar", "MAR (↑)", Direction::higher_better, true}};
}

inline std::vector<MetricColumn> axiom2() {
  return {{"asd_equivalent", "Equivalent ASD (↓)", Direction::lower_better, true},
          {"asd_contrastive", "Contrastive ASD (↑)", Direction::higher_better, true}};
}

inline std::vector<MetricColumn> axiom3() {
  return {{"scv_train_fraction", "% Train SCV (↓)", Direction::lower_better, true},
          {"scv_noise", "% Noisy Train SCV (↓)", Direction::lower_better, true},
          {"scv_capacity", "Capacity SCV (↓)", Direction::lower_better, true},
          {"asd_subpopulation", "Subpop. ASD (↓)", Direction::lower_better, true}};
}

// Two score columns and five confidence columns; no NRG.
inline std::vector<MetricColumn> human() {
  return {{"phi_ref", "$\\Phi(\\hat{y})$ (↑)", Direction::higher_better, false},
          {"mar", "MAR (↑)", Direction::higher_better, false},
          {"conf_control", "Conf. $1_G(x)$ (↓)", Direction::lower_better, false},
          {"conf_pred_rationale", "Conf. $1_H(x, \\hat{r})$ (↓)", Direction::lower_better, false},
          {"conf_gold_rationale", "Conf. $1_H(x, \\dot{r})$ (↓)", Direction::lower_better, false},
          {"conf_gold_label", "Conf. $1_H(x, \\dot{y})$ (↓)", Direction::lower_better, false},
          {"conf_reference", "Conf. $1_H(x, \\hat{y})$ (↑)", Direction::higher_better, false}};
}

}  // namespace columns

// Fills stats for every cell and NRG over the in_nrg columns' means.
inline void finalize_report(AxiomReport& report) {
  for (auto& row : report.rows) {
    for (auto& [key, cell] : row.values) {
      std::vector<double> defined;
      for (const auto& v : cell.per_seed) {
        if (v) defined.push_back(*v);
      }
      if (defined.empty()) {
        cell.stats.reset();
        if (cell.undefined_reason.empty()) cell.undefined_reason = "no defined value";
      } else {
        cell.stats = aggregate_seeds(defined);
      }
    }
  }
  report.nrg.clear();
  std::vector<Direction> dirs;
  std::vector<std::string> keys;
  for (const auto& c : report.columns) {
    if (c.in_nrg) {
      dirs.push_back(c.direction);
      keys.push_back(c.key);
    }
  }
  if (report.rows.size() < 2 || keys.empty()) return;
  std::vector<std::vector<std::optional<double>>> matrix;
  for (const auto& row : report.rows) {
    std::vector<std::optional<double>> r;
    for (const auto& k : keys) r.push_back(report.mean(row.config, k));
    matrix.push_back(std::move(r));
  }
  const auto nrg = compute_nrg(matrix, dirs);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (nrg[i]) report.nrg[report.rows[i].config] = *nrg[i];
  }
}

}  // namespace frame
