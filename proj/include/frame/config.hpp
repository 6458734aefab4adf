#pragma once

// Declarative run configuration: a flat key = value text format with
// optional [section] headers (keys become "section.key"), '#' comments,
// quoted strings and [a, b] or a,b lists.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "frame/axioms.hpp"
#include "frame/common.hpp"
#include "frame/corpus.hpp"

namespace frame {

using KeyValues = std::map<std::string, std::string>;

inline std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline KeyValues parse_key_values(const std::string& text, const std::string& source = "config") {
  KeyValues kv;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline std::vector<std::string> parse_list(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = unquote(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("'" + key + "' expects an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const auto s = to_lower(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw UsageError("'" + key + "' expects true or false, got '" + v + "'");
}

struct SyntheticSpec {
  std::size_t n = 500;
  std::size_t m = 3;
  TaskKind kind = TaskKind::closed_set;
  std::size_t aux_n = 500;
};

// "n=500,m=3[,kind=multi_choice][,aux=400]"
inline SyntheticSpec parse_synthetic_spec(const std::string& s) {
  SyntheticSpec spec;
  for (const auto& part : parse_list(s)) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw UsageError("synthetic spec: expected key=value, got '" + part + "'");
    const std::string k = trim(part.substr(0, eq)), v = trim(part.substr(eq + 1));
    if (k == "n") {
      spec.n = static_cast<std::size_t>(parse_int("synthetic.n", v));
    } else if (k == "m") {
      spec.m = static_cast<std::size_t>(parse_int("synthetic.m", v));
    } else if (k == "kind") {
      spec.kind = parse_task_kind(v);
    } else if (k == "aux") {
      spec.aux_n = static_cast<std::size_t>(parse_int("synthetic.aux", v));
    } else {
      throw UsageError("synthetic spec: unknown key '" + k + "'");
    }
  }
  if (spec.n < 2) throw UsageError("synthetic spec: n must be at least 2");
  if (spec.m < 2) throw UsageError("synthetic spec: m must be at least 2");
  return spec;
}

struct ExternalFile {
  std::string config;
  std::string role;       // "control" or "treatment"
  std::string condition;  // treatment rationale condition
  std::string path;
};

struct RunConfig {
  int axiom = 1;
  std::string dataset_name;
  std::optional<SyntheticSpec> synthetic;
  std::string train_path;
  std::string test_path;
  std::string aux_path;
  TaskKind task_kind = TaskKind::closed_set;
  std::string task_preds;        // external test predictions; {seed}/{setting} templates
  std::string task_train_preds;  // external train predictions
  std::vector<std::string> configs{"f-gold", "gh-gold", "gh-pred", "np-gh-pred"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> train_fractions{1.0, 0.5, 0.3, 0.1};
  std::vector<double> noise_fractions{0.0, 0.1, 0.3, 0.5};
  std::vector<Capacity> capacities{Capacity::small, Capacity::base, Capacity::large};
  std::vector<std::string> banks;
  bool builtin_banks = true;
  std::string output_dir = "frame_out";
  int jobs = 0;  // 0: FRAME_JOBS or hardware concurrency
  int epochs = 10;
  double learning_rate = 0.1;
  Capacity capacity = Capacity::base;
  std::vector<ExternalFile> external;
};

// "3" means seeds 0..2; a list gives them explicitly.
inline std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  const auto items = parse_list(v);
  if (items.empty()) throw UsageError("at least one seed is required");
  const bool bracketed = trim(v).front() == '[';
  if (items.size() == 1 && !bracketed) {
    const long long n = parse_int("seeds", items[0]);
    if (n < 1) throw UsageError("at least one seed is required");
    std::vector<std::uint64_t> out;
    for (long long i = 0; i < n; ++i) out.push_back(static_cast<std::uint64_t>(i));
    return out;
  }
  std::vector<std::uint64_t> out;
  for (const auto& s : items) {
    const long long n = parse_int("seeds", s);
    if (n < 0) throw UsageError("seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(n));
  }
  return out;
}

inline RunConfig run_config_from(const KeyValues& kv) {
  RunConfig c;
  for (const auto& [key, raw] : kv) {
    const std::string v = unquote(raw);
    if (key == "axiom") {
      c.axiom = static_cast<int>(parse_int(key, v));
    } else if (key == "dataset_name") {
      c.dataset_name = v;
    } else if (key == "synthetic") {
      c.synthetic = parse_synthetic_spec(v);
    } else if (key == "train") {
      c.train_path = v;
    } else if (key == "test") {
      c.test_path = v;
    } else if (key == "aux") {
      c.aux_path = v;
    } else if (key == "task_kind") {
      c.task_kind = parse_task_kind(v);
    } else if (key == "task_preds") {
      c.task_preds = v;
    } else if (key == "task_train_preds") {
      c.task_train_preds = v;
    } else if (key == "configs") {
      c.configs = parse_list(raw);
    } else if (key == "seeds") {
      c.seeds = parse_seeds(raw);
    } else if (key == "sweeps.train_fractions" || key == "train_fractions") {
      c.train_fractions.clear();
      for (const auto& s : parse_list(raw)) c.train_fractions.push_back(parse_double(key, s));
    } else if (key == "sweeps.noise_fractions" || key == "noise_fractions") {
      c.noise_fractions.clear();
      for (const auto& s : parse_list(raw)) c.noise_fractions.push_back(parse_double(key, s));
    } else if (key == "sweeps.capacities" || key == "capacities") {
      c.capacities.clear();
      for (const auto& s : parse_list(raw)) c.capacities.push_back(parse_capacity(s));
    } else if (key == "banks") {
      c.banks = parse_list(raw);
    } else if (key == "builtin_banks") {
      c.builtin_banks = parse_bool(key, v);
    } else if (key == "output" || key == "output_dir") {
      c.output_dir = v;
    } else if (key == "jobs") {
      c.jobs = static_cast<int>(parse_int(key, v));
    } else if (key == "simulator.epochs" || key == "epochs") {
      c.epochs = static_cast<int>(parse_int(key, v));
    } else if (key == "simulator.learning_rate" || key == "learning_rate") {
      c.learning_rate = parse_double(key, v);
    } else if (key == "simulator.capacity" || key == "capacity") {
      c.capacity = parse_capacity(v);
    } else if (key.rfind("external.", 0) == 0) {
      // external.<config>.control or external.<config>.treatment.<condition>
      const auto parts = [&] {
        std::vector<std::string> p;
        std::istringstream in(key);
        for (std::string s; std::getline(in, s, '.');) p.push_back(s);
        return p;
      }();
      if (parts.size() == 3 && parts[2] == "control") {
        c.external.push_back({parts[1], "control", "", v});
      } else if (parts.size() == 4 && parts[2] == "treatment") {
        c.external.push_back({parts[1], "treatment", parts[3], v});
      } else {
        throw UsageError("bad external key '" + key +
                         "' (expected external.<config>.control or external.<config>.treatment.<rationale>)");
      }
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  return c;
}

inline void validate_run_config(const RunConfig& c) {
  if (c.axiom < 1 || c.axiom > 3) throw UsageError("axiom must be 1, 2 or 3");
  if (c.configs.empty()) throw UsageError("at least one metric configuration is required");
  if (c.seeds.empty()) throw UsageError("at least one seed is required");
  for (const auto& name : c.configs) config_by_name(name);
  if (!c.synthetic && c.test_path.empty()) throw UsageError("either a synthetic spec or a test dataset is required");
  if (!c.synthetic && c.task_preds.empty() && c.train_path.empty()) {
    throw UsageError("a train dataset is required unless task predictions are given");
  }
  if (c.epochs < 1) throw UsageError("epochs must be positive");
  if (c.learning_rate <= 0.0) throw UsageError("learning_rate must be positive");
}

inline std::vector<VariationSweep> sweeps_of(const RunConfig& c) {
  std::vector<VariationSweep> out;
  if (!c.train_fractions.empty()) out.push_back(make_fraction_sweep(SweepFactor::train_fraction, c.train_fractions));
  if (!c.noise_fractions.empty()) out.push_back(make_fraction_sweep(SweepFactor::noise_fraction, c.noise_fractions));
  if (!c.capacities.empty()) out.push_back(make_capacity_sweep(c.capacities));
  return out;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["axiom"] = c.axiom;
  j["dataset_name"] = c.dataset_name;
  if (c.synthetic) {
    j["synthetic"] = {{"n", c.synthetic->n},
                      {"m", c.synthetic->m},
                      {"kind", to_string(c.synthetic->kind)},
                      {"aux_n", c.synthetic->aux_n}};
  } else {
    j["synthetic"] = nullptr;
  }
  j["train"] = c.train_path;
  j["test"] = c.test_path;
  j["aux"] = c.aux_path;
  j["task_kind"] = to_string(c.task_kind);
  j["task_preds"] = c.task_preds;
  j["task_train_preds"] = c.task_train_preds;
  j["configs"] = c.configs;
  j["seeds"] = c.seeds;
  j["sweeps"] = {{"train_fractions", c.train_fractions}, {"noise_fractions", c.noise_fractions}};
  std::vector<std::string> caps;
  for (auto cap : c.capacities) caps.push_back(to_string(cap));
  j["sweeps"]["capacities"] = caps;
  j["banks"] = c.banks;
  j["builtin_banks"] = c.builtin_banks;
  j["simulator"] = {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"capacity", to_string(c.capacity)}};
  nlohmann::json ext = nlohmann::json::array();
  for (const auto& e : c.external) {
    ext.push_back({{"config", e.config}, {"role", e.role}, {"condition", e.condition}, {"path", e.path}});
  }
  j["external"] = ext;
  return j;
}

}  // namespace frame
