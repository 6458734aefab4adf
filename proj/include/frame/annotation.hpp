#pragma once

// Human-simulator study: sampling, per-annotator item sequencing, response
// intake with an append-only JSONL log, and scoring into a human report.
//
// Each annotator works through per-instance blocks: the control arm (input
// only) first, then the treatment arms in a seeded random order. In the
// non-pretrained mode all text is Caesar-shifted by one and a training
// phase with the target label visible precedes the scored blocks.

#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "frame/common.hpp"
#include "frame/config.hpp"
#include "frame/corpus.hpp"
#include "frame/meta.hpp"
#include "frame/rationales.hpp"
#include "frame/reports.hpp"

namespace frame {

enum class StudyMode { gh_gold_human, np_gh_pred_human };

inline std::string to_string(StudyMode m) {
  return m == StudyMode::gh_gold_human ? "gh_gold_human" : "np_gh_pred_human";
}

inline StudyMode parse_study_mode(std::string_view s) {
  if (s == "gh_gold_human") return StudyMode::gh_gold_human;
  if (s == "np_gh_pred_human") return StudyMode::np_gh_pred_human;
  throw UsageError("unknown study mode '" + std::string(s) + "' (expected gh_gold_human or np_gh_pred_human)");
}

inline std::string display_name(StudyMode m) {
  return m == StudyMode::gh_gold_human ? "GH-Gold-Human" : "NP-GH-Pred-Human";
}

inline constexpr int kCaesarShift = 1;
inline constexpr const char* kControlArm = "control";

// Error carrying the HTTP status the service should answer with.
struct StudyError : std::runtime_error {
  int status;
  StudyError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
};

struct StudyConfig {
  Dataset test;
  PredictionMap task_preds;
  std::vector<std::string> sample_ids;  // empty: draw sample_size uniformly
  std::size_t sample_size = 50;
  std::uint64_t seed = 0;
  std::set<StudyMode> modes{StudyMode::gh_gold_human, StudyMode::np_gh_pred_human};
  std::vector<RationaleKind> treatment_kinds{RationaleKind::pred_rationale, RationaleKind::gold_rationale,
                                             RationaleKind::gold_label, RationaleKind::reference};
  std::size_t training_size = 10;
  std::string log_path = "responses.jsonl";
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Study config file keys: test, task_kind, task_preds, sample_size, sample_ids,
// seed, modes, arms, training_size, log, host, port.
inline StudyConfig study_config_from(const KeyValues& kv) {
  StudyConfig c;
  std::string test_path, preds_path;
  TaskKind kind = TaskKind::multi_choice;
  for (const auto& [key, raw] : kv) {
    const std::string v = unquote(raw);
    if (key == "test") {
      test_path = v;
    } else if (key == "task_kind") {
      kind = parse_task_kind(v);
    } else if (key == "task_preds") {
      preds_path = v;
    } else if (key == "sample_size") {
      const auto n = parse_int(key, v);
      if (n < 1) throw UsageError("sample_size must be positive");
      c.sample_size = static_cast<std::size_t>(n);
    } else if (key == "sample_ids") {
      c.sample_ids = parse_list(raw);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_int(key, v));
    } else if (key == "modes") {
      c.modes.clear();
      for (const auto& m : parse_list(raw)) c.modes.insert(parse_study_mode(m));
    } else if (key == "arms") {
      c.treatment_kinds.clear();
      for (const auto& a : parse_list(raw)) c.treatment_kinds.push_back(parse_rationale_kind(a));
    } else if (key == "training_size") {
      c.training_size = static_cast<std::size_t>(parse_int(key, v));
    } else if (key == "log") {
      c.log_path = v;
    } else if (key == "host") {
      c.host = v;
    } else if (key == "port") {
      c.port = static_cast<int>(parse_int(key, v));
    } else {
      throw UsageError("unknown study config key '" + key + "'");
    }
  }
  if (test_path.empty()) throw UsageError("study config needs 'test'");
  if (preds_path.empty()) throw UsageError("study config needs 'task_preds'");
  c.test = load_dataset(test_path, kind);
  c.task_preds = load_predictions(preds_path);
  return c;
}

struct AnnotatorResponse {
  std::string annotator_id;
  std::string session_id;
  std::string instance_id;
  StudyMode mode = StudyMode::gh_gold_human;
  std::string arm;
  std::string phase = "score";    // "train" or "score"
  std::string predicted_label;    // as shown to the annotator
  int confidence = 1;
  std::string timestamp;
};

inline nlohmann::json to_json(const AnnotatorResponse& r) {
  return {{"annotator_id", r.annotator_id}, {"session_id", r.session_id}, {"instance_id", r.instance_id},
          {"mode", to_string(r.mode)},      {"arm", r.arm},               {"phase", r.phase},
          {"predicted_label", r.predicted_label}, {"confidence", r.confidence}, {"timestamp", r.timestamp}};
}

inline AnnotatorResponse response_from_json(const nlohmann::json& j) {
  AnnotatorResponse r;
  r.annotator_id = j.at("annotator_id").get<std::string>();
  r.session_id = j.value("session_id", std::string());
  r.instance_id = j.at("instance_id").get<std::string>();
  r.mode = parse_study_mode(j.at("mode").get<std::string>());
  r.arm = j.at("arm").get<std::string>();
  r.phase = j.value("phase", std::string("score"));
  r.predicted_label = j.at("predicted_label").get<std::string>();
  r.confidence = j.at("confidence").get<int>();
  r.timestamp = j.value("timestamp", std::string());
  return r;
}

inline std::vector<AnnotatorResponse> parse_response_log(std::istream& in, const std::string& source = "<log>") {
  std::vector<AnnotatorResponse> out;
  detail::for_each_jsonl_record(in, source, [&](const nlohmann::json& j, std::size_t) {
    try {
      out.push_back(response_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed response record: ") + e.what());
    }
  });
  return out;
}

inline std::vector<AnnotatorResponse> load_response_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  return parse_response_log(in, path);
}

// Instances scored in the study: the explicit id list, else a seeded
// uniform sample without replacement.
inline std::vector<std::string> study_sample(const StudyConfig& c) {
  if (!c.sample_ids.empty()) {
    std::set<std::string> known;
    for (const auto& inst : c.test.instances) known.insert(inst.id);
    std::set<std::string> seen;
    for (const auto& id : c.sample_ids) {
      if (!known.count(id)) throw DataError("sampled id '" + id + "' is not in the test set");
      if (!seen.insert(id).second) throw DataError("sampled id '" + id + "' listed twice");
    }
    return c.sample_ids;
  }
  if (c.sample_size > c.test.size()) {
    throw DataError("cannot sample " + std::to_string(c.sample_size) + " instances from a test set of " +
                    std::to_string(c.test.size()));
  }
  Rng rng(mix_seed(c.seed, "study-sample"));
  std::vector<std::string> ids;
  for (auto i : rng.sample_indices(c.test.size(), c.sample_size)) ids.push_back(c.test.instances[i].id);
  return ids;
}

// Instances for the non-pretrained training phase, disjoint from the sample.
inline std::vector<std::string> training_sample(const StudyConfig& c, const std::vector<std::string>& scored) {
  const std::set<std::string> taken(scored.begin(), scored.end());
  std::vector<std::string> pool;
  for (const auto& inst : c.test.instances) {
    if (!taken.count(inst.id)) pool.push_back(inst.id);
  }
  if (pool.size() < c.training_size) {
    throw DataError("training phase needs " + std::to_string(c.training_size) + " instances outside the sample, only " +
                    std::to_string(pool.size()) + " available");
  }
  Rng rng(mix_seed(c.seed, "study-training"));
  std::vector<std::string> out;
  for (auto i : rng.sample_indices(pool.size(), c.training_size)) out.push_back(pool[i]);
  return out;
}

struct StudyItem {
  std::string instance_id;
  std::string arm;
  std::string phase;
};

class Study {
 public:
  explicit Study(StudyConfig config) : config_(std::move(config)) {
    validate_dataset(config_.test);
    validate_predictions(config_.test, config_.task_preds);
    if (config_.modes.empty()) throw DataError("study needs at least one mode");
    if (config_.treatment_kinds.empty()) throw DataError("study needs at least one treatment arm");
    for (const auto& inst : config_.test.instances) by_id_.emplace(inst.id, &inst);
    sample_ = study_sample(config_);
    if (config_.modes.count(StudyMode::np_gh_pred_human) && config_.training_size > 0) {
      training_ = training_sample(config_, sample_);
    }
    for (const auto* ids : {&sample_, &training_}) {
      for (const auto& id : *ids) {
        for (auto kind : config_.treatment_kinds) {
          make_variant(*by_id_.at(id), config_.task_preds.at(id), kind);
        }
      }
    }
    for (const auto& r : load_response_log(config_.log_path)) record(r);
    log_.open(config_.log_path, std::ios::app);
    if (!log_) throw std::runtime_error("cannot open response log '" + config_.log_path + "'");
  }

  const StudyConfig& config() const { return config_; }
  const std::vector<std::string>& sample() const { return sample_; }
  const std::vector<std::string>& training() const { return training_; }

  std::vector<std::string> arms() const {
    std::vector<std::string> out{kControlArm};
    for (auto k : config_.treatment_kinds) out.push_back(to_string(k));
    return out;
  }

  // Item order for one annotator: deterministic in (study seed, annotator, mode).
  std::vector<StudyItem> sequence(const std::string& annotator, StudyMode mode) const {
    std::vector<StudyItem> items;
    const auto treatment = [&] {
      std::vector<std::string> a;
      for (auto k : config_.treatment_kinds) a.push_back(to_string(k));
      return a;
    }();
    Rng rng(mix_seed(mix_seed(config_.seed, annotator), to_string(mode)));
    if (mode == StudyMode::np_gh_pred_human) {
      for (const auto& id : training_) {
        items.push_back({id, kControlArm, "train"});
        for (const auto& a : treatment) items.push_back({id, a, "train"});
      }
    }
    auto order = sample_;
    rng.shuffle(order);
    for (const auto& id : order) {
      items.push_back({id, kControlArm, "score"});
      auto arms = treatment;
      rng.shuffle(arms);
      for (const auto& a : arms) items.push_back({id, a, "score"});
    }
    return items;
  }

  struct SessionInfo {
    std::string session_id;
    std::string annotator_id;
    StudyMode mode;
    std::size_t position;
    std::size_t total;
  };

  // Opens a session; an annotator with logged responses resumes where the
  // log ends.
  SessionInfo open_session(StudyMode mode, std::string annotator_id = {}) {
    std::lock_guard lock(mu_);
    if (!config_.modes.count(mode)) throw StudyError(400, "mode '" + to_string(mode) + "' is not part of this study");
    if (annotator_id.empty()) annotator_id = "ann-" + random_token();
    Session s;
    s.annotator_id = annotator_id;
    s.mode = mode;
    s.items = sequence(annotator_id, mode);
    while (s.position < s.items.size() && answered_.count(key_of(annotator_id, mode, s.items[s.position]))) {
      ++s.position;
    }
    const std::string id = "s-" + random_token();
    sessions_.emplace(id, s);
    return {id, annotator_id, mode, s.position, s.items.size()};
  }

  // Presentation payload for the next item, or {"done": true}.
  nlohmann::json next_item(const std::string& session_id) {
    std::lock_guard lock(mu_);
    Session& s = session(session_id);
    if (s.position >= s.items.size()) return {{"done", true}, {"progress", s.position}, {"total", s.items.size()}};
    s.served = true;
    return payload(s, s.items[s.position]);
  }

  // Validates and durably logs a response to the most recently served item.
  nlohmann::json submit_response(const std::string& session_id, const nlohmann::json& body) {
    std::lock_guard lock(mu_);
    Session& s = session(session_id);
    if (!body.is_object()) throw StudyError(400, "response body must be a JSON object");
    if (!body.contains("item") || !body["item"].is_number_integer()) throw StudyError(400, "missing integer 'item'");
    if (!body.contains("predicted_label") || !body["predicted_label"].is_string()) {
      throw StudyError(400, "missing 'predicted_label'");
    }
    if (!body.contains("confidence") || !body["confidence"].is_number_integer()) {
      throw StudyError(400, "missing integer 'confidence'");
    }
    const auto item = body["item"].get<long long>();
    const int confidence = body["confidence"].get<int>();
    if (confidence < 1 || confidence > 4) throw StudyError(400, "confidence must be between 1 and 4");
    if (item >= 0 && static_cast<std::size_t>(item) < s.position) {
      const auto& it = s.items[static_cast<std::size_t>(item)];
      if (answered_.count(key_of(s.annotator_id, s.mode, it))) throw StudyError(409, "response already recorded");
    }
    if (s.position >= s.items.size()) throw StudyError(409, "session is complete");
    if (!s.served || item != static_cast<long long>(s.position)) {
      throw StudyError(409, "out-of-order submission: expected item " + std::to_string(s.position));
    }
    const StudyItem& it = s.items[s.position];
    const std::string label = body["predicted_label"].get<std::string>();
    const auto shown = shown_choices(s.mode, *by_id_.at(it.instance_id));
    if (std::find(shown.begin(), shown.end(), label) == shown.end()) {
      throw StudyError(400, "predicted_label is not one of the choices shown");
    }
    const std::string key = key_of(s.annotator_id, s.mode, it);
    if (answered_.count(key)) throw StudyError(409, "response already recorded");

    AnnotatorResponse r{s.annotator_id, session_id, it.instance_id, s.mode, it.arm, it.phase, label, confidence,
                        utc_timestamp()};
    log_ << to_json(r).dump() << "\n";
    log_.flush();
    if (!log_) throw std::runtime_error("failed to append to response log");
    record(r);
    ++s.position;
    s.served = false;
    return {{"ok", true}, {"progress", s.position}, {"total", s.items.size()}};
  }

  std::vector<AnnotatorResponse> responses() const {
    std::lock_guard lock(mu_);
    return responses_;
  }

  void flush() {
    std::lock_guard lock(mu_);
    log_.flush();
  }

 private:
  struct Session {
    std::string annotator_id;
    StudyMode mode = StudyMode::gh_gold_human;
    std::vector<StudyItem> items;
    std::size_t position = 0;
    bool served = false;
  };

  static std::string key_of(const std::string& annotator, StudyMode mode, const StudyItem& it) {
    return annotator + "\x1f" + to_string(mode) + "\x1f" + it.phase + "\x1f" + it.instance_id + "\x1f" + it.arm;
  }

  void record(const AnnotatorResponse& r) {
    answered_.insert(key_of(r.annotator_id, r.mode, {r.instance_id, r.arm, r.phase}));
    responses_.push_back(r);
  }

  std::string random_token() {
    static thread_local std::random_device rd;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(mix_seed((std::uint64_t{rd()} << 32) ^ rd(), ++counter_)));
    return buf;
  }

  Session& session(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw StudyError(404, "unknown session '" + id + "'");
    return it->second;
  }

  std::string shown(StudyMode mode, const std::string& text) const {
    return mode == StudyMode::np_gh_pred_human ? caesar_shift(text, kCaesarShift) : text;
  }

  std::vector<std::string> shown_choices(StudyMode mode, const TaskInstance& inst) const {
    std::vector<std::string> out;
    for (const auto& c : inst.choices) out.push_back(shown(mode, c));
    return out;
  }

  nlohmann::json payload(const Session& s, const StudyItem& it) const {
    const TaskInstance& inst = *by_id_.at(it.instance_id);
    const TaskPrediction& pred = config_.task_preds.at(it.instance_id);
    nlohmann::json j{{"done", false},
                     {"item", s.position},
                     {"total", s.items.size()},
                     {"mode", to_string(s.mode)},
                     {"phase", it.phase},
                     {"arm", it.arm},
                     {"input", shown(s.mode, inst.input_text)},
                     {"choices", shown_choices(s.mode, inst)},
                     {"rationale", nullptr},
                     {"target", nullptr}};
    if (it.arm != kControlArm) {
      j["rationale"] = shown(s.mode, make_variant(inst, pred, parse_rationale_kind(it.arm)).text);
    }
    if (it.phase == "train") j["target"] = shown(s.mode, pred.pred_label);
    return j;
  }

  StudyConfig config_;
  std::map<std::string, const TaskInstance*> by_id_;
  std::vector<std::string> sample_;
  std::vector<std::string> training_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::set<std::string> answered_;
  std::vector<AnnotatorResponse> responses_;
  std::ofstream log_;
  std::uint64_t counter_ = 0;
};

// Human report: per mode, phi(reference), MAR over the non-reference arms
// and mean confidence per arm, aggregated across annotators who answered
// every arm of every sampled instance. Responses in the non-pretrained mode
// are decrypted before comparison with the task predictions.
inline AxiomReport score_study(const std::vector<AnnotatorResponse>& log, const PredictionMap& task_preds,
                               const std::vector<std::string>& sample, const std::vector<std::string>& arms,
                               const std::vector<StudyMode>& modes = {StudyMode::gh_gold_human,
                                                                      StudyMode::np_gh_pred_human}) {
  if (sample.empty()) throw DataError("study sample is empty");
  AxiomReport report;
  report.axiom = 1;
  report.simulator_kind = "human";
  report.columns = columns::human();
  const std::string ref = to_string(RationaleKind::reference);
  const std::vector<std::string> nonref_arms = [&] {
    std::vector<std::string> out;
    for (const auto& a : arms) {
      if (a != kControlArm && a != ref) out.push_back(a);
    }
    return out;
  }();

  for (auto mode : modes) {
    ConfigRow row{display_name(mode), {}};
    // annotator -> arm -> instance -> (label, confidence); first record wins
    std::map<std::string, std::map<std::string, std::map<std::string, std::pair<std::string, int>>>> by_annotator;
    for (const auto& r : log) {
      if (r.mode != mode || r.phase != "score") continue;
      std::string label = r.predicted_label;
      if (mode == StudyMode::np_gh_pred_human) label = caesar_shift(label, 26 - kCaesarShift);
      by_annotator[r.annotator_id][r.arm].emplace(r.instance_id, std::make_pair(label, r.confidence));
    }
    std::vector<std::string> complete;
    for (const auto& [annotator, per_arm] : by_annotator) {
      bool ok = true;
      for (const auto& arm : arms) {
        auto it = per_arm.find(arm);
        for (const auto& id : sample) ok = ok && it != per_arm.end() && it->second.count(id);
      }
      if (ok) {
        complete.push_back(annotator);
      } else {
        report.notes.push_back(row.config + ": annotator " + annotator + " did not answer every arm; excluded");
      }
    }
    const std::size_t n = complete.size();
    const std::string gap = "no annotator completed every arm in this mode";
    for (std::size_t a = 0; a < n; ++a) {
      const auto& per_arm = by_annotator.at(complete[a]);
      auto acc = [&](const std::string& arm) {
        std::size_t correct = 0;
        for (const auto& id : sample) {
          correct += labels_match(per_arm.at(arm).at(id).first, prediction_for(task_preds, id).pred_label);
        }
        return make_accuracy(correct, sample.size());
      };
      auto mean_conf = [&](const std::string& arm) {
        double sum = 0.0;
        for (const auto& id : sample) sum += per_arm.at(arm).at(id).second;
        return sum / static_cast<double>(sample.size());
      };
      const AccuracyTerm control = acc(kControlArm);
      std::optional<AccuracyTerm> reference;
      if (std::find(arms.begin(), arms.end(), ref) != arms.end()) reference = acc(ref);

      PhiResult pr;
      pr.config_name = row.config;
      pr.rationale = ref;
      pr.control = control;
      pr.treatment = reference;
      pr.seed = a;
      if (reference) {
        pr.phi = compute_phi(control, *reference);
      } else {
        pr.undefined_reason = "no reference arm in the study";
      }
      detail::set_cell(row, "phi_ref", a, n, pr.phi, pr.undefined_reason);
      report.phi_results.push_back(pr);

      std::vector<double> nonref;
      for (const auto& arm : nonref_arms) nonref.push_back(acc(arm).value);
      if (!reference || nonref.empty()) {
        detail::set_cell(row, "mar", a, n, std::nullopt, "needs the reference arm and a non-reference arm");
      } else {
        try {
          detail::set_cell(row, "mar", a, n, compute_mar(reference->value, nonref).value);
        } catch (const DataError& e) {
          detail::set_cell(row, "mar", a, n, std::nullopt, e.what());
        }
      }
      for (const auto& arm : arms) {
        detail::set_cell(row, "conf_" + arm, a, n, mean_conf(arm));
        detail::set_cell(row, "acc_" + arm, a, n, acc(arm).value);
      }
    }
    for (const auto& col : report.columns) {
      auto& cell = row.values[col.key];
      if (n == 0) cell.undefined_reason = gap;
      if (cell.per_seed.empty() && cell.undefined_reason.empty()) cell.undefined_reason = "arm not part of the study";
    }
    report.rows.push_back(std::move(row));
  }
  finalize_report(report);
  return report;
}

inline AxiomReport score_study(const Study& study) {
  std::vector<StudyMode> modes(study.config().modes.begin(), study.config().modes.end());
  return score_study(study.responses(), study.config().task_preds, study.sample(), study.arms(), modes);
}

}  // namespace frame
