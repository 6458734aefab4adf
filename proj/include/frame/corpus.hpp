#pragma once

// Task datasets: JSONL ingestion and validation, synthetic task generation,
// and the controlled corruptions (subsampling, label noise, Caesar shift)
// used by the robustness sweeps and the human study.

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "frame/common.hpp"

namespace frame {

enum class TaskKind { closed_set, multi_choice };
enum class Split { train, dev, test };

inline std::string to_string(TaskKind k) {
  return k == TaskKind::closed_set ? "closed_set" : "multi_choice";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "closed_set") return TaskKind::closed_set;
  if (s == "multi_choice") return TaskKind::multi_choice;
  throw UsageError("unknown task kind '" + std::string(s) + "'");
}

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "test";
}

struct TaskInstance {
  std::string id;
  std::string input_text;
  TaskKind task_kind = TaskKind::closed_set;
  std::vector<std::string> choices;
  std::string gold_label;
  std::optional<std::string> gold_rationale;

  // Index of `label` in choices under label normalization, or -1.
  int choice_index(std::string_view label) const {
    for (std::size_t i = 0; i < choices.size(); ++i) {
      if (labels_match(choices[i], label)) return static_cast<int>(i);
    }
    return -1;
  }

  bool operator==(const TaskInstance&) const = default;
};

struct Dataset {
  Split split = Split::test;
  TaskKind task_kind = TaskKind::closed_set;
  std::vector<TaskInstance> instances;
  std::vector<std::string> label_space;  // closed_set only

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }

  bool operator==(const Dataset&) const = default;
};

struct TaskPrediction {
  std::string instance_id;
  std::string pred_label;
  std::optional<std::string> pred_rationale;
  // Rationale produced by the template fallback rather than a real generator.
  bool synthetic_rationale = false;

  bool operator==(const TaskPrediction&) const = default;
};

// Predictions keyed by instance id.
using PredictionMap = std::map<std::string, TaskPrediction>;

inline const TaskPrediction& prediction_for(const PredictionMap& preds,
                                            const std::string& id) {
  auto it = preds.find(id);
  if (it == preds.end()) throw DataError("no task prediction for instance '" + id + "'");
  return it->second;
}

// Checks every TaskInstance/Dataset invariant. Throws DataError naming the
// offending instance.
inline void validate_dataset(const Dataset& d) {
  if (d.instances.empty()) throw DataError("dataset is empty");
  std::set<std::string> ids;
  for (const auto& inst : d.instances) {
    if (inst.id.empty()) throw DataError("instance with empty id");
    if (!ids.insert(inst.id).second) throw DataError("duplicate id '" + inst.id + "'");
    if (inst.task_kind != d.task_kind) {
      throw DataError("instance '" + inst.id + "' has a different task kind");
    }
    if (inst.choices.size() < 2) {
      throw DataError("instance '" + inst.id + "' has fewer than 2 choices");
    }
    if (inst.choice_index(inst.gold_label) < 0) {
      throw DataError("instance '" + inst.id + "': gold_label '" + inst.gold_label +
                      "' is not one of its choices");
    }
    if (d.task_kind == TaskKind::closed_set && inst.choices != d.label_space) {
      throw DataError("instance '" + inst.id +
                      "': closed-set choices differ from the dataset label space");
    }
  }
}

namespace detail {

inline std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string or null");
  return it->get<std::string>();
}

inline std::string required_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw DataError(std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

template <typename Fn>
void for_each_jsonl_record(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": record is not an object");
    }
    try {
      fn(record, line_no);
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

inline TaskInstance instance_from_json(const nlohmann::json& j, TaskKind kind) {
  TaskInstance inst;
  inst.id = detail::required_string(j, "id");
  inst.input_text = detail::required_string(j, "input");
  inst.task_kind = kind;
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array()) {
    throw DataError("instance '" + inst.id + "': missing 'choices' array");
  }
  for (const auto& c : *choices) {
    if (!c.is_string()) throw DataError("instance '" + inst.id + "': non-string choice");
    inst.choices.push_back(c.get<std::string>());
  }
  inst.gold_label = detail::required_string(j, "gold_label");
  inst.gold_rationale = detail::optional_string(j, "gold_rationale");
  return inst;
}

// Canonical field order: id, input, choices, gold_label, gold_rationale.
inline nlohmann::ordered_json instance_to_json(const TaskInstance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  j["input"] = inst.input_text;
  j["choices"] = inst.choices;
  j["gold_label"] = inst.gold_label;
  j["gold_rationale"] = inst.gold_rationale ? nlohmann::ordered_json(*inst.gold_rationale)
                                            : nlohmann::ordered_json(nullptr);
  return j;
}

inline Dataset parse_dataset(std::istream& in, TaskKind kind, Split split = Split::test,
                             const std::string& source = "<stream>") {
  Dataset d;
  d.split = split;
  d.task_kind = kind;
  std::set<std::string> ids;
  detail::for_each_jsonl_record(in, source, [&](const nlohmann::json& j, std::size_t) {
    TaskInstance inst = instance_from_json(j, kind);
    if (inst.choices.size() < 2) throw DataError("instance '" + inst.id + "' has fewer than 2 choices");
    if (inst.choice_index(inst.gold_label) < 0) {
      throw DataError("instance '" + inst.id + "': gold_label '" + inst.gold_label +
                      "' is not one of its choices");
    }
    if (!ids.insert(inst.id).second) throw DataError("duplicate id '" + inst.id + "'");
    if (kind == TaskKind::closed_set) {
      if (d.label_space.empty()) {
        d.label_space = inst.choices;
      } else if (inst.choices != d.label_space) {
        throw DataError("instance '" + inst.id +
                        "': closed-set choices differ from the dataset label space");
      }
    }
    d.instances.push_back(std::move(inst));
  });
  validate_dataset(d);
  return d;
}

inline Dataset load_dataset(const std::string& path, TaskKind kind, Split split = Split::test) {
  auto in = detail::open_input(path);
  return parse_dataset(in, kind, split, path);
}

inline std::string serialize_dataset(const Dataset& d) {
  std::string out;
  for (const auto& inst : d.instances) {
    out += instance_to_json(inst).dump();
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
  auto in = detail::open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  write_text_file(path, serialize_dataset(d));
}

// --- predictions ----------------------------------------------------------

inline nlohmann::ordered_json prediction_to_json(const TaskPrediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.instance_id;
  j["pred_label"] = p.pred_label;
  j["pred_rationale"] = p.pred_rationale ? nlohmann::ordered_json(*p.pred_rationale)
                                         : nlohmann::ordered_json(nullptr);
  return j;
}

inline PredictionMap parse_predictions(std::istream& in, const std::string& source = "<stream>") {
  PredictionMap preds;
  detail::for_each_jsonl_record(in, source, [&](const nlohmann::json& j, std::size_t) {
    TaskPrediction p;
    p.instance_id = detail::required_string(j, "id");
    p.pred_label = detail::required_string(j, "pred_label");
    p.pred_rationale = detail::optional_string(j, "pred_rationale");
    if (!preds.emplace(p.instance_id, p).second) {
      throw DataError("duplicate prediction for id '" + p.instance_id + "'");
    }
  });
  return preds;
}

inline PredictionMap load_predictions(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_predictions(in, path);
}

// Predictions in dataset order; ids absent from the dataset are dropped.
inline std::string serialize_predictions(const PredictionMap& preds, const Dataset& order) {
  std::string out;
  for (const auto& inst : order.instances) {
    auto it = preds.find(inst.id);
    if (it == preds.end()) continue;
    out += prediction_to_json(it->second).dump();
    out += '\n';
  }
  return out;
}

inline std::string serialize_predictions(const PredictionMap& preds) {
  std::string out;
  for (const auto& [id, p] : preds) {
    out += prediction_to_json(p).dump();
    out += '\n';
  }
  return out;
}

// Every instance has exactly one prediction and every predicted label is
// one of that instance's choices.
inline void validate_predictions(const Dataset& d, const PredictionMap& preds) {
  for (const auto& inst : d.instances) {
    const auto& p = prediction_for(preds, inst.id);
    if (inst.choice_index(p.pred_label) < 0) {
      throw DataError("prediction for '" + inst.id + "': pred_label '" + p.pred_label +
                      "' is not one of its choices");
    }
  }
}

// --- corruptions ----------------------------------------------------------

// Uniform subsample without replacement of round(fraction * |d|) instances,
// kept in original order.
inline Dataset subsample_train(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw DataError("subsample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  if (d.split != Split::train) throw DataError("subsample_train expects a train split");
  if (fraction == 1.0) return d;
  const std::size_t k = round_half_up_count(fraction, d.size());
  Rng rng(mix_seed(seed, "subsample"));
  auto picked = rng.sample_indices(d.size(), k);
  std::sort(picked.begin(), picked.end());
  Dataset out = d;
  out.instances.clear();
  for (auto i : picked) out.instances.push_back(d.instances[i]);
  return out;
}

// Replaces the gold label of round(fraction * |d|) uniformly chosen
// instances with a uniformly drawn different choice.
inline Dataset inject_label_noise(const Dataset& d, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw DataError("noise fraction must be in [0, 1], got " + std::to_string(fraction));
  }
  if (d.split != Split::train) throw DataError("inject_label_noise expects a train split");
  const std::size_t k = round_half_up_count(fraction, d.size());
  Rng rng(mix_seed(seed, "label-noise"));
  Dataset out = d;
  for (auto i : rng.sample_indices(d.size(), k)) {
    auto& inst = out.instances[i];
    const int current = inst.choice_index(inst.gold_label);
    if (inst.choices.size() < 2) {
      throw DataError("instance '" + inst.id + "' has a single choice; cannot flip its label");
    }
    std::size_t pick = rng.index(inst.choices.size() - 1);
    if (current >= 0 && pick >= static_cast<std::size_t>(current)) ++pick;
    inst.gold_label = inst.choices[pick];
  }
  return out;
}

// Rotates ASCII letters forward by `shift` within their case; everything
// else passes through untouched.
inline std::string caesar_shift(std::string_view text, int shift) {
  const int s = ((shift % 26) + 26) % 26;
  std::string out(text);
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') {
      c = static_cast<char>('a' + (c - 'a' + s) % 26);
    } else if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>('A' + (c - 'A' + s) % 26);
    }
  }
  return out;
}

inline TaskInstance encrypt_instance(const TaskInstance& inst, int shift) {
  TaskInstance out = inst;
  out.input_text = caesar_shift(inst.input_text, shift);
  for (auto& c : out.choices) c = caesar_shift(c, shift);
  out.gold_label = caesar_shift(inst.gold_label, shift);
  if (inst.gold_rationale) out.gold_rationale = caesar_shift(*inst.gold_rationale, shift);
  return out;
}

// Shifts every content field; ids are left unchanged.
inline Dataset encrypt_dataset(const Dataset& d, int shift) {
  Dataset out = d;
  for (auto& inst : out.instances) inst = encrypt_instance(inst, shift);
  for (auto& c : out.label_space) c = caesar_shift(c, shift);
  return out;
}

inline PredictionMap encrypt_predictions(const PredictionMap& preds, int shift) {
  PredictionMap out = preds;
  for (auto& [id, p] : out) {
    p.pred_label = caesar_shift(p.pred_label, shift);
    if (p.pred_rationale) p.pred_rationale = caesar_shift(*p.pred_rationale, shift);
  }
  return out;
}

// --- synthetic task -------------------------------------------------------
//
// Each class owns a family of cue words. An instance plants cue words from
// several families plus neutral filler; its label is the family with the
// strictly largest cue count. The rule is linear in token counts, so a
// bag-of-words model can learn it exactly.

namespace synthetic {

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {
      "alpha", "bravo", "charlie", "delta", "echo",
      "foxtrot", "golf", "hotel", "india", "juliet"};
  return names;
}

inline std::string class_name(std::size_t j) {
  const auto& names = class_names();
  return j < names.size() ? names[j] : "class" + std::to_string(j);
}

inline std::vector<std::string> cue_family(std::size_t j) {
  static const std::vector<std::vector<std::string>> families = {
      {"amber", "apple", "anchor", "arrow", "atlas", "aspen"},
      {"breeze", "button", "bramble", "bucket", "basil", "beacon"},
      {"copper", "candle", "cactus", "comet", "cedar", "cobalt"},
      {"dune", "daisy", "dragon", "drum", "dolphin", "denim"},
      {"ember", "eagle", "easel", "elm", "engine", "emerald"},
      {"fern", "falcon", "fiddle", "forge", "flint", "fable"},
      {"garnet", "glacier", "goblet", "granite", "gull", "gear"},
      {"harbor", "hazel", "helmet", "heron", "hinge", "honey"},
      {"iris", "igloo", "ivory", "island", "iron", "ink"},
      {"jade", "jasper", "jungle", "jetty", "juniper", "jewel"}};
  if (j < families.size()) return families[j];
  std::vector<std::string> out;
  for (int t = 0; t < 6; ++t) out.push_back("cue" + std::to_string(j) + "x" + std::to_string(t));
  return out;
}

inline const std::vector<std::string>& fillers() {
  static const std::vector<std::string> words = {
      "the", "a", "of", "and", "with", "near", "under", "over", "some", "many",
      "quiet", "bright", "old", "new", "small", "large", "river", "road", "house", "window",
      "garden", "morning", "evening", "story", "paper", "stone", "table", "letter", "music",
      "cloud", "market", "bridge", "field", "tower", "lamp"};
  return words;
}

// Multi-choice candidate text for family j.
inline std::string choice_phrase(std::size_t j) { return "the " + class_name(j) + " group"; }

}  // namespace synthetic

struct SyntheticOptions {
  TaskKind kind = TaskKind::closed_set;
  double test_fraction = 0.2;
  std::string id_prefix = "syn";
  // Multi-choice only: size of the family pool candidates are drawn from.
  std::size_t family_pool = 0;  // 0 = max(m + 2, 5)
};

// Returns (train, test). `n` is the total instance count across both splits.
inline std::pair<Dataset, Dataset> generate_synthetic_task(std::size_t n, std::size_t m,
                                                           std::uint64_t seed,
                                                           const SyntheticOptions& opt = {}) {
  if (m < 2) throw DataError("synthetic task needs m >= 2 classes");
  if (n < m) throw DataError("synthetic task needs n >= m instances");
  if (!(opt.test_fraction > 0.0) || opt.test_fraction >= 1.0) {
    throw DataError("test_fraction must be in (0, 1)");
  }
  const std::size_t pool = opt.kind == TaskKind::closed_set
                               ? m
                               : (opt.family_pool ? std::max(opt.family_pool, m)
                                                  : std::max<std::size_t>(m + 2, 5));
  Rng rng(mix_seed(seed, "synthetic:" + opt.id_prefix));

  std::vector<std::string> label_space;
  if (opt.kind == TaskKind::closed_set) {
    for (std::size_t j = 0; j < m; ++j) label_space.push_back(synthetic::class_name(j));
  }

  std::vector<TaskInstance> all;
  all.reserve(n);
  const auto& fill = synthetic::fillers();
  for (std::size_t i = 0; i < n; ++i) {
    // Families in play for this instance.
    std::vector<std::size_t> fams;
    if (opt.kind == TaskKind::closed_set) {
      for (std::size_t j = 0; j < m; ++j) fams.push_back(j);
    } else {
      fams = rng.sample_indices(pool, m);
    }
    const std::size_t answer_pos = rng.index(fams.size());
    const std::size_t answer = fams[answer_pos];

    const int top = rng.between(3, 5);
    std::vector<std::string> tokens;
    std::string top_cue;
    for (std::size_t f : fams) {
      const int count = f == answer ? top : rng.between(0, top - 1);
      const auto family = synthetic::cue_family(f);
      for (int c = 0; c < count; ++c) {
        const auto& w = family[rng.index(family.size())];
        if (f == answer && c == 0) top_cue = w;
        tokens.push_back(w);
      }
    }
    const int length = rng.between(16, 24);
    while (static_cast<int>(tokens.size()) < length) tokens.push_back(fill[rng.index(fill.size())]);
    rng.shuffle(tokens);

    TaskInstance inst;
    inst.id = opt.id_prefix + "-" + std::to_string(seed) + "-" + std::to_string(i);
    inst.input_text = join(tokens, " ");
    inst.task_kind = opt.kind;
    if (opt.kind == TaskKind::closed_set) {
      inst.choices = label_space;
      inst.gold_label = synthetic::class_name(answer);
    } else {
      for (std::size_t f : fams) inst.choices.push_back(synthetic::choice_phrase(f));
      inst.gold_label = synthetic::choice_phrase(answer);
    }
    inst.gold_rationale = "words like " + top_cue + " appear " + std::to_string(top) +
                          " times , more than any other cue family";
    all.push_back(std::move(inst));
  }

  std::size_t n_test = round_half_up_count(opt.test_fraction, n);
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1 > 0 ? n - 1 : 1);

  Dataset train, test;
  train.split = Split::train;
  test.split = Split::test;
  train.task_kind = test.task_kind = opt.kind;
  train.label_space = test.label_space = label_space;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i < all.size() - n_test ? train : test).instances.push_back(all[i]);
  }
  return {std::move(train), std::move(test)};
}

// Recovers a synthetic instance's label from its cue counts. Used as the
// ground-truth oracle in tests and for sanity checks on generated data.
inline std::string synthetic_rule_label(const TaskInstance& inst) {
  std::size_t best = 0;
  int best_count = -1;
  for (std::size_t c = 0; c < inst.choices.size(); ++c) {
    // Closed-set choices are class names; multi-choice are "the <name> group".
    std::string name = inst.choices[c];
    if (inst.task_kind == TaskKind::multi_choice) {
      auto parts = split_whitespace(name);
      name = parts.size() >= 2 ? parts[1] : name;
    }
    std::size_t family_index = 0;
    const auto& names = synthetic::class_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it != names.end()) {
      family_index = static_cast<std::size_t>(it - names.begin());
    } else if (name.rfind("class", 0) == 0) {
      family_index = std::stoul(name.substr(5));
    }
    const auto fam = synthetic::cue_family(family_index);
    int count = 0;
    for (const auto& tok : split_whitespace(inst.input_text)) {
      if (std::find(fam.begin(), fam.end(), tok) != fam.end()) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  return inst.choices[best];
}

}  // namespace frame
