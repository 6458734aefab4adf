#pragma once

// Result documents: versioned JSON, per-setting phi curves as CSV, and
// markdown tables with best / second-best marking.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "frame/common.hpp"
#include "frame/meta.hpp"

namespace frame {

inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr const char* kToolVersion = "0.1.0";

struct ReportDocument {
  std::string run_id;
  std::string dataset_name;
  std::vector<AxiomReport> reports;
  nlohmann::json provenance = nlohmann::json::object();
  std::string created_at;
};

// --- JSON -----------------------------------------------------------------

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline std::optional<double> json_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json accuracy_json(const std::optional<AccuracyTerm>& a) {
  if (!a) return nullptr;
  return {{"value", a->value}, {"correct", a->correct}, {"total", a->total}};
}

inline std::optional<AccuracyTerm> json_accuracy(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return AccuracyTerm{j.at("value").get<double>(), j.at("correct").get<std::size_t>(), j.at("total").get<std::size_t>()};
}

inline Subpopulation parse_subpopulation(const std::string& s) {
  for (auto v : {Subpopulation::all, Subpopulation::correct, Subpopulation::incorrect}) {
    if (to_string(v) == s) return v;
  }
  throw DataError("unknown subpopulation '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const PhiResult& r) {
  return {{"config", r.config_name},
          {"rationale", r.rationale},
          {"control", detail::accuracy_json(r.control)},
          {"treatment", detail::accuracy_json(r.treatment)},
          {"phi", detail::opt_json(r.phi)},
          {"seed", r.seed},
          {"subpopulation", to_string(r.subpopulation)},
          {"undefined_reason", r.phi ? nlohmann::json() : nlohmann::json(r.undefined_reason)},
          {"empty_rationales", r.empty_rationales}};
}

inline PhiResult phi_result_from_json(const nlohmann::json& j) {
  PhiResult r;
  r.config_name = j.at("config").get<std::string>();
  r.rationale = j.at("rationale").get<std::string>();
  r.control = detail::json_accuracy(j.at("control"));
  r.treatment = detail::json_accuracy(j.at("treatment"));
  r.phi = detail::json_opt(j.at("phi"));
  r.seed = j.at("seed").get<std::uint64_t>();
  r.subpopulation = detail::parse_subpopulation(j.at("subpopulation").get<std::string>());
  if (!j.at("undefined_reason").is_null()) r.undefined_reason = j.at("undefined_reason").get<std::string>();
  r.empty_rationales = j.at("empty_rationales").get<std::size_t>();
  return r;
}

inline nlohmann::json to_json(const CellValue& c) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& v : c.per_seed) per_seed.push_back(detail::opt_json(v));
  nlohmann::json j{{"per_seed", per_seed}};
  if (c.stats) {
    j["mean"] = c.stats->mean;
    j["std"] = c.stats->std;
    j["n"] = c.stats->n;
    j["single_seed"] = c.stats->single_seed;
    j["undefined_reason"] = nullptr;
  } else {
    j["mean"] = nullptr;
    j["std"] = nullptr;
    j["n"] = 0;
    j["single_seed"] = false;
    j["undefined_reason"] = c.undefined_reason;
  }
  if (c.stats && !c.undefined_reason.empty()) j["partial_reason"] = c.undefined_reason;
  return j;
}

inline CellValue cell_from_json(const nlohmann::json& j) {
  CellValue c;
  for (const auto& v : j.at("per_seed")) c.per_seed.push_back(detail::json_opt(v));
  if (!j.at("mean").is_null()) {
    c.stats = SeedStats{j.at("mean").get<double>(), j.at("std").get<double>(), j.at("n").get<std::size_t>(),
                        j.at("single_seed").get<bool>()};
    if (j.contains("partial_reason")) c.undefined_reason = j.at("partial_reason").get<std::string>();
  } else {
    c.undefined_reason = j.at("undefined_reason").get<std::string>();
  }
  return c;
}

inline nlohmann::json to_json(const AxiomReport& r) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : r.columns) {
    cols.push_back({{"key", c.key}, {"header", c.header}, {"direction", to_string(c.direction)}, {"in_nrg", c.in_nrg}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json values = nlohmann::json::object();
    for (const auto& [k, v] : row.values) values[k] = to_json(v);
    nlohmann::json jr{{"config", row.config}, {"values", values}};
    auto it = r.nrg.find(row.config);
    jr["nrg"] = it == r.nrg.end() ? nlohmann::json() : nlohmann::json(it->second);
    rows.push_back(std::move(jr));
  }
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& p : r.curves) {
    curves.push_back({{"setting", p.setting}, {"config", p.config}, {"seed", p.seed}, {"phi", detail::opt_json(p.phi)}});
  }
  nlohmann::json phis = nlohmann::json::array();
  for (const auto& p : r.phi_results) phis.push_back(to_json(p));
  return {{"axiom", r.axiom},   {"simulator_kind", r.simulator_kind}, {"columns", cols},
          {"rows", rows},       {"seeds", r.seeds},                   {"curves", curves},
          {"phi_results", phis}, {"notes", r.notes}};
}

inline AxiomReport axiom_report_from_json(const nlohmann::json& j) {
  AxiomReport r;
  r.axiom = j.at("axiom").get<int>();
  r.simulator_kind = j.at("simulator_kind").get<std::string>();
  for (const auto& c : j.at("columns")) {
    r.columns.push_back({c.at("key").get<std::string>(), c.at("header").get<std::string>(),
                         c.at("direction").get<std::string>() == "lower_better" ? Direction::lower_better
                                                                                 : Direction::higher_better,
                         c.at("in_nrg").get<bool>()});
  }
  for (const auto& jr : j.at("rows")) {
    ConfigRow row{jr.at("config").get<std::string>(), {}};
    for (const auto& [k, v] : jr.at("values").items()) row.values[k] = cell_from_json(v);
    if (!jr.at("nrg").is_null()) r.nrg[row.config] = jr.at("nrg").get<double>();
    r.rows.push_back(std::move(row));
  }
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& p : j.at("curves")) {
    r.curves.push_back({p.at("setting").get<std::string>(), p.at("config").get<std::string>(),
                        p.at("seed").get<std::uint64_t>(), detail::json_opt(p.at("phi"))});
  }
  for (const auto& p : j.at("phi_results")) r.phi_results.push_back(phi_result_from_json(p));
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

inline nlohmann::json to_json(const ReportDocument& d) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : d.reports) reports.push_back(to_json(r));
  return {{"schema_version", kSchemaVersion}, {"run_id", d.run_id},         {"dataset_name", d.dataset_name},
          {"reports", reports},               {"provenance", d.provenance}, {"created_at", d.created_at}};
}

inline ReportDocument document_from_json(const nlohmann::json& j) {
  const auto version = j.at("schema_version").get<std::string>();
  if (version != kSchemaVersion) throw DataError("unsupported report schema_version '" + version + "'");
  ReportDocument d;
  d.run_id = j.at("run_id").get<std::string>();
  d.dataset_name = j.at("dataset_name").get<std::string>();
  for (const auto& r : j.at("reports")) d.reports.push_back(axiom_report_from_json(r));
  d.provenance = j.at("provenance");
  d.created_at = j.at("created_at").get<std::string>();
  return d;
}

inline bool operator==(const ReportDocument& a, const ReportDocument& b) { return to_json(a) == to_json(b); }

// Keys sorted, two-space indent, trailing newline.
inline std::string canonical_json(const ReportDocument& d) { return to_json(d).dump(2) + "\n"; }

inline void emit_json(const ReportDocument& d, const std::filesystem::path& path) {
  write_text_file(path, canonical_json(d));
}

inline ReportDocument load_report(const std::filesystem::path& path) {
  try {
    return document_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed report: " + e.what());
  }
}

// Stable id from the provenance, so repeated runs share it.
inline std::string make_run_id(const nlohmann::json& provenance) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(provenance.dump())));
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- CSV ------------------------------------------------------------------

inline std::string curves_csv(const AxiomReport& r) {
  std::ostringstream out;
  out << "setting,config,seed,phi\n";
  for (const auto& p : r.curves) {
    out << p.setting << ',' << p.config << ',' << p.seed << ',';
    if (p.phi) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *p.phi);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

// --- markdown -------------------------------------------------------------

enum class TableStyle { axiom1, axiom2, axiom3, human };

inline TableStyle parse_table_style(std::string_view s) {
  if (s == "axiom1") return TableStyle::axiom1;
  if (s == "axiom2") return TableStyle::axiom2;
  if (s == "axiom3") return TableStyle::axiom3;
  if (s == "human") return TableStyle::human;
  throw UsageError("unknown table style '" + std::string(s) + "'");
}

inline TableStyle style_for(const AxiomReport& r) {
  if (r.simulator_kind == "human") return TableStyle::human;
  if (r.axiom == 2) return TableStyle::axiom2;
  if (r.axiom == 3) return TableStyle::axiom3;
  return TableStyle::axiom1;
}

inline std::string format_2dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

namespace detail {

// 0 = best, 1 = second best, -1 = unmarked; ties share a mark.
inline std::vector<int> rank_marks(const std::vector<std::optional<double>>& values, Direction dir) {
  std::set<double> distinct;
  for (const auto& v : values) {
    if (v) distinct.insert(std::round(*v * 100.0) / 100.0);
  }
  std::vector<double> order(distinct.begin(), distinct.end());
  if (dir == Direction::higher_better) std::reverse(order.begin(), order.end());
  std::vector<int> marks(values.size(), -1);
  std::size_t defined = 0;
  for (const auto& v : values) defined += v.has_value();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i]) continue;
    const double r = std::round(*values[i] * 100.0) / 100.0;
    if (r == order[0]) {
      marks[i] = 0;
    } else if (defined > 1 && order.size() > 1 && r == order[1]) {
      marks[i] = 1;
    }
  }
  return marks;
}

inline std::string apply_mark(const std::string& s, int mark) {
  if (mark == 0) return "**" + s + "**";
  if (mark == 1) return "*" + s + "*";
  return s;
}

}  // namespace detail

inline std::string render_table(const AxiomReport& r, TableStyle style) {
  if (style != style_for(r)) {
    throw UsageError("table style does not match report (axiom " + std::to_string(r.axiom) + ", " +
                     r.simulator_kind + " simulators)");
  }
  const bool with_nrg = style != TableStyle::human;
  std::vector<std::string> headers{"Config"};
  for (const auto& c : r.columns) headers.push_back(c.header);
  if (with_nrg) headers.push_back("NRG (↑)");

  std::vector<std::vector<std::string>> body(r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) body[i].push_back(r.rows[i].config);

  std::vector<std::string> footnotes;
  bool single_seed = false;
  for (const auto& col : r.columns) {
    std::vector<std::optional<double>> means;
    for (const auto& row : r.rows) means.push_back(r.mean(row.config, col.key));
    const auto marks = detail::rank_marks(means, col.direction);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      const CellValue* cell = r.cell(r.rows[i].config, col.key);
      if (!cell || !cell->stats) {
        footnotes.push_back(r.rows[i].config + ", " + col.key + ": " +
                            (cell ? cell->undefined_reason : std::string("not computed")));
        body[i].push_back("—[^" + std::to_string(footnotes.size()) + "]");
        continue;
      }
      std::string text = format_2dp(cell->stats->mean);
      if (cell->stats->single_seed) {
        single_seed = true;
      } else {
        text += " (±" + format_2dp(cell->stats->std) + ")";
      }
      body[i].push_back(detail::apply_mark(text, marks[i]));
    }
  }
  if (with_nrg) {
    std::vector<std::optional<double>> nrg;
    for (const auto& row : r.rows) {
      auto it = r.nrg.find(row.config);
      nrg.push_back(it == r.nrg.end() ? std::nullopt : std::optional(it->second));
    }
    const auto marks = detail::rank_marks(nrg, Direction::higher_better);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      if (!nrg[i]) {
        footnotes.push_back(r.rows[i].config + ", NRG: " +
                            (r.rows.size() < 2 ? "needs at least two configurations" : "no defined scores"));
        body[i].push_back("—[^" + std::to_string(footnotes.size()) + "]");
      } else {
        body[i].push_back(detail::apply_mark(format_2dp(*nrg[i]), marks[i]));
      }
    }
  }

  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    out << "|";
    for (const auto& c : cells) out << " " << c << " |";
    out << "\n";
  };
  line(headers);
  out << "|";
  for (std::size_t i = 0; i < headers.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
  out << "\n";
  for (const auto& row : body) line(row);
  if (!footnotes.empty() || single_seed) out << "\n";
  for (std::size_t i = 0; i < footnotes.size(); ++i) out << "[^" << i + 1 << "]: undefined, " << footnotes[i] << "\n";
  if (single_seed) out << "\nValues without (±std) come from a single seed.\n";
  return out.str();
}

inline std::string render_table(const AxiomReport& r) { return render_table(r, style_for(r)); }

}  // namespace frame
