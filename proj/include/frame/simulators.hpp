#pragma once

// Simulators that predict the task model's label from the input alone
// (control) or from the input plus a rationale (treatment).
//
// The built-in family is a hashed bag-of-words linear scorer trained from
// scratch with SGD on softmax cross-entropy. Closed-set tasks keep one
// weight vector per class; multi-choice tasks score every (input, choice)
// pair with a single shared vector over pair features. Externally produced
// predictions (e.g. from real pretrained LMs) enter through a replay
// simulator with the same interface.

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "frame/common.hpp"
#include "frame/corpus.hpp"
#include "frame/rationales.hpp"

namespace frame {

enum class SimulatorFamily { hashed_bow_linear, external_predictions, task_model_reuse };
enum class SimInit { random, proxy_pretrained };
enum class Supervision { gold, pred };
enum class SimRole { control, treatment };
enum class Capacity { small, base, large };

inline std::string to_string(SimulatorFamily f) {
  switch (f) {
    case SimulatorFamily::hashed_bow_linear: return "hashed_bow_linear";
    case SimulatorFamily::external_predictions: return "external_predictions";
    case SimulatorFamily::task_model_reuse: return "task_model_reuse";
  }
  return "hashed_bow_linear";
}
inline std::string to_string(SimInit i) { return i == SimInit::random ? "random" : "proxy_pretrained"; }
inline std::string to_string(Supervision s) { return s == Supervision::gold ? "gold" : "pred"; }
inline std::string to_string(SimRole r) { return r == SimRole::control ? "control" : "treatment"; }
inline std::string to_string(Capacity c) {
  switch (c) {
    case Capacity::small: return "small";
    case Capacity::base: return "base";
    case Capacity::large: return "large";
  }
  return "base";
}

inline SimulatorFamily parse_family(std::string_view s) {
  for (auto f : {SimulatorFamily::hashed_bow_linear, SimulatorFamily::external_predictions,
                 SimulatorFamily::task_model_reuse}) {
    if (to_string(f) == s) return f;
  }
  throw DataError("unknown simulator family '" + std::string(s) + "'");
}
inline SimInit parse_init(std::string_view s) {
  if (s == "random") return SimInit::random;
  if (s == "proxy_pretrained") return SimInit::proxy_pretrained;
  throw DataError("unknown init '" + std::string(s) + "'");
}
inline Supervision parse_supervision(std::string_view s) {
  if (s == "gold") return Supervision::gold;
  if (s == "pred") return Supervision::pred;
  throw DataError("unknown supervision '" + std::string(s) + "'");
}
inline SimRole parse_role(std::string_view s) {
  if (s == "control") return SimRole::control;
  if (s == "treatment") return SimRole::treatment;
  throw DataError("unknown role '" + std::string(s) + "'");
}
inline Capacity parse_capacity(std::string_view s) {
  if (s == "small") return Capacity::small;
  if (s == "base") return Capacity::base;
  if (s == "large") return Capacity::large;
  throw DataError("unknown capacity '" + std::string(s) + "'");
}

// Hashed feature dimension per capacity tier.
inline std::size_t hashed_dimension(Capacity c) {
  switch (c) {
    case Capacity::small: return std::size_t{1} << 12;
    case Capacity::base: return std::size_t{1} << 14;
    case Capacity::large: return std::size_t{1} << 16;
  }
  return std::size_t{1} << 14;
}

struct SimulatorSpec {
  SimulatorFamily family = SimulatorFamily::hashed_bow_linear;
  SimInit init = SimInit::random;
  Supervision supervision = Supervision::pred;
  SimRole role = SimRole::control;
  Capacity capacity = Capacity::base;
  int epochs = 10;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const SimulatorSpec&) const = default;
};

inline nlohmann::json spec_to_json(const SimulatorSpec& s) {
  return {{"family", to_string(s.family)},   {"init", to_string(s.init)},
          {"supervision", to_string(s.supervision)}, {"role", to_string(s.role)},
          {"capacity", to_string(s.capacity)}, {"epochs", s.epochs},
          {"learning_rate", s.learning_rate}, {"seed", s.seed}};
}

inline SimulatorSpec spec_from_json(const nlohmann::json& j) {
  SimulatorSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.init = parse_init(j.at("init").get<std::string>());
  s.supervision = parse_supervision(j.at("supervision").get<std::string>());
  s.role = parse_role(j.at("role").get<std::string>());
  s.capacity = parse_capacity(j.at("capacity").get<std::string>());
  s.epochs = j.at("epochs").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

// --- featurization --------------------------------------------------------

// Lowercased whitespace tokens with surrounding ASCII punctuation removed.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& raw : split_whitespace(text)) {
    std::size_t b = 0, e = raw.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (e > b) out.push_back(to_lower(std::string_view(raw).substr(b, e - b)));
  }
  return out;
}

// Serialized simulator input split back into its segments. The first
// "explanation:" token starts the rationale; "choices:" before it starts
// the candidate listing, which carries no features of its own.
struct InputSegments {
  std::vector<std::string> input;
  std::vector<std::string> rationale;
  std::string rationale_text;
};

inline InputSegments split_serialized(std::string_view serialized) {
  InputSegments seg;
  enum { kInput, kChoices, kRationale } state = kInput;
  std::vector<std::string> rationale_raw;
  for (auto& raw : split_whitespace(serialized)) {
    if (state != kRationale && raw == kExplanationMarker) {
      state = kRationale;
      continue;
    }
    if (state == kInput && raw == kChoicesMarker) {
      state = kChoices;
      continue;
    }
    if (state == kChoices) continue;
    if (state == kRationale) {
      rationale_raw.push_back(raw);
    } else {
      for (auto& t : tokenize(raw)) seg.input.push_back(std::move(t));
    }
  }
  seg.rationale_text = join(rationale_raw, " ");
  seg.rationale = tokenize(seg.rationale_text);
  return seg;
}

using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

class LinearModel {
 public:
  LinearModel() = default;
  LinearModel(TaskKind kind, std::size_t dim, std::vector<std::string> labels)
      : kind_(kind), dim_(dim), labels_(std::move(labels)) {
    weights_.assign(kind_ == TaskKind::closed_set ? dim_ * labels_.size() : dim_, 0.0);
  }

  TaskKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t parameter_count() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& mutable_weights() { return weights_; }

  void randomize(std::uint64_t seed, double scale = 0.01) {
    Rng rng(mix_seed(seed, "init"));
    for (auto& w : weights_) w = (2.0 * rng.unit() - 1.0) * scale;
  }

  // Per-choice sparse features of one serialized input.
  std::vector<SparseFeatures> featurize(const TaskInstance& inst, std::string_view serialized) const {
    const InputSegments seg = split_serialized(serialized);
    std::vector<SparseFeatures> out;
    if (kind_ == TaskKind::closed_set) {
      SparseFeatures shared;
      add(shared, "bias");
      for (const auto& t : seg.input) add(shared, "x|" + t);
      for (const auto& t : seg.rationale) add(shared, "r|" + t);
      // Closed-set heads share features; the class offset is applied in score().
      out.assign(inst.choices.size(), shared);
      return out;
    }
    const std::string rationale_norm = normalize_label(seg.rationale_text);
    for (const auto& choice : inst.choices) {
      SparseFeatures f;
      const auto ctoks = tokenize(choice);
      for (const auto& c : ctoks) {
        add(f, "c|" + c);
        int in_x = 0, in_r = 0;
        for (const auto& t : seg.input) {
          add(f, "xc|" + t + "|" + c);
          in_x += t == c;
        }
        for (const auto& t : seg.rationale) {
          add(f, "rc|" + t + "|" + c);
          in_r += t == c;
        }
        if (in_x) add(f, "mx", in_x);
        if (in_r) add(f, "mr", in_r);
      }
      const std::string choice_norm = normalize_label(choice);
      if (!choice_norm.empty() && rationale_norm.find(choice_norm) != std::string::npos) {
        add(f, "mr_full");
      }
      out.push_back(std::move(f));
    }
    return out;
  }

  // Per-choice scores for precomputed features.
  std::vector<double> score(const TaskInstance& inst, const std::vector<SparseFeatures>& feats) const {
    std::vector<double> s(feats.size(), 0.0);
    for (std::size_t j = 0; j < feats.size(); ++j) {
      const std::size_t offset = head_offset(inst, j);
      for (const auto& [idx, v] : feats[j]) s[j] += weights_[offset + idx] * v;
    }
    return s;
  }

  std::vector<double> score(const TaskInstance& inst, std::string_view serialized) const {
    return score(inst, featurize(inst, serialized));
  }

  // One SGD step on softmax cross-entropy toward choice `target`.
  void sgd_step(const TaskInstance& inst, const std::vector<SparseFeatures>& feats, std::size_t target,
                double lr) {
    auto s = score(inst, feats);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (auto& v : s) {
      v = std::exp(v - mx);
      z += v;
    }
    for (std::size_t j = 0; j < feats.size(); ++j) {
      const double grad = s[j] / z - (j == target ? 1.0 : 0.0);
      if (grad == 0.0) continue;
      const std::size_t offset = head_offset(inst, j);
      for (const auto& [idx, v] : feats[j]) weights_[offset + idx] -= lr * grad * v;
    }
  }

  nlohmann::json to_json() const {
    return {{"task_kind", to_string(kind_)}, {"dim", dim_}, {"labels", labels_}, {"weights", weights_}};
  }

  static LinearModel from_json(const nlohmann::json& j) {
    LinearModel m(parse_task_kind(j.at("task_kind").get<std::string>()), j.at("dim").get<std::size_t>(),
                  j.at("labels").get<std::vector<std::string>>());
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != m.weights_.size()) throw DataError("checkpoint weight count mismatch");
    m.weights_ = std::move(w);
    return m;
  }

 private:
  void add(SparseFeatures& f, std::string_view key, double value = 1.0) const {
    f.emplace_back(static_cast<std::uint32_t>(fnv1a(key) % dim_), value);
  }

  std::size_t head_offset(const TaskInstance& inst, std::size_t j) const {
    if (kind_ != TaskKind::closed_set) return 0;
    // Heads are indexed by the model's label list, not the instance's order.
    for (std::size_t h = 0; h < labels_.size(); ++h) {
      if (labels_match(labels_[h], inst.choices[j])) return h * dim_;
    }
    throw DataError("label '" + inst.choices[j] + "' is outside the simulator's label space");
  }

  TaskKind kind_ = TaskKind::closed_set;
  std::size_t dim_ = 0;
  std::vector<std::string> labels_;
  std::vector<double> weights_;
};

// Argmax with ties broken toward the lowest choice index.
inline std::size_t argmax_lowest(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

// Maps a training instance (and its task prediction, if any) to the
// rationale a treatment simulator sees.
using VariantFn = std::function<RationaleVariant(const TaskInstance&, const TaskPrediction*)>;

inline VariantFn variant_of_kind(RationaleKind kind) {
  return [kind](const TaskInstance& inst, const TaskPrediction* pred) {
    if (!pred) {
      if (kind == RationaleKind::gold_label || kind == RationaleKind::gold_rationale) {
        return make_variant(inst, TaskPrediction{inst.id, inst.gold_label, std::nullopt}, kind);
      }
      throw DataError("rationale kind '" + to_string(kind) + "' needs a task prediction for '" +
                      inst.id + "'");
    }
    return make_variant(inst, *pred, kind);
  };
}

class Simulator {
 public:
  const SimulatorSpec& spec() const { return spec_; }
  const LinearModel* model() const { return model_.get(); }
  bool is_replay() const { return replay_ != nullptr; }

  // Fingerprints of the auxiliary corpus a warm start was fitted on.
  const std::set<std::uint64_t>& aux_fingerprints() const {
    static const std::set<std::uint64_t> empty;
    return aux_ ? *aux_ : empty;
  }

  std::vector<double> scores(const TaskInstance& inst, const RationaleVariant* variant) const {
    if (!model_) throw std::logic_error("replay simulators have no scores");
    return model_->score(inst, serialize(inst, variant));
  }

  std::string predict(const TaskInstance& inst, const RationaleVariant* variant) const {
    if (replay_) {
      auto it = replay_->find(inst.id);
      if (it == replay_->end()) {
        throw DataError("external predictions have no entry for instance '" + inst.id + "'");
      }
      return it->second;
    }
    return inst.choices[argmax_lowest(scores(inst, variant))];
  }

  // One label per instance. Variants are required exactly when the
  // simulator plays the treatment role.
  std::vector<std::string> predict_batch(std::span<const TaskInstance> instances,
                                         std::span<const RationaleVariant> variants = {}) const {
    const bool treatment = spec_.role == SimRole::treatment;
    if (treatment && variants.size() != instances.size()) {
      throw DataError("predict_batch: " + std::to_string(instances.size()) + " instances but " +
                      std::to_string(variants.size()) + " rationale variants");
    }
    if (!treatment && !variants.empty()) {
      throw DataError("predict_batch: control simulators take no rationales");
    }
    std::vector<std::string> out;
    out.reserve(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      out.push_back(predict(instances[i], treatment ? &variants[i] : nullptr));
    }
    return out;
  }

  std::string serialize(const TaskInstance& inst, const RationaleVariant* variant) const {
    return variant ? compose_treatment_input(inst, *variant) : compose_control_input(inst);
  }

 private:
  friend Simulator make_simulator(SimulatorSpec, std::shared_ptr<const LinearModel>,
                                  std::shared_ptr<const std::set<std::uint64_t>>);
  friend Simulator make_replay_simulator(SimulatorSpec, std::unordered_map<std::string, std::string>);

  SimulatorSpec spec_;
  std::shared_ptr<const LinearModel> model_;
  std::shared_ptr<const std::unordered_map<std::string, std::string>> replay_;
  std::shared_ptr<const std::set<std::uint64_t>> aux_;
};

inline Simulator make_simulator(SimulatorSpec spec, std::shared_ptr<const LinearModel> model,
                                std::shared_ptr<const std::set<std::uint64_t>> aux = nullptr) {
  Simulator s;
  s.spec_ = spec;
  s.model_ = std::move(model);
  s.aux_ = std::move(aux);
  return s;
}

inline Simulator make_replay_simulator(SimulatorSpec spec,
                                       std::unordered_map<std::string, std::string> labels) {
  Simulator s;
  s.spec_ = spec;
  s.replay_ = std::make_shared<const std::unordered_map<std::string, std::string>>(std::move(labels));
  return s;
}

inline std::uint64_t input_fingerprint(const TaskInstance& inst) {
  return fnv1a(normalize_label(inst.input_text));
}

namespace detail {

struct TrainingExample {
  const TaskInstance* instance;
  std::vector<SparseFeatures> features;
  std::size_t target;
};

inline void run_sgd(LinearModel& model, std::vector<TrainingExample>& examples, int epochs, double lr,
                    std::uint64_t seed) {
  Rng rng(mix_seed(seed, "sgd-order"));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (auto i : order) {
      auto& ex = examples[i];
      model.sgd_step(*ex.instance, ex.features, ex.target, lr);
    }
  }
}

inline std::size_t target_index(const TaskInstance& inst, const std::string& label) {
  const int idx = inst.choice_index(label);
  if (idx < 0) {
    throw DataError("training target '" + label + "' is not a choice of instance '" + inst.id + "'");
  }
  return static_cast<std::size_t>(idx);
}

}  // namespace detail

// Warm start for proxy_pretrained simulators: fits gold labels of a
// disjoint auxiliary corpus from the input alone. `exclude`, when given,
// must share no ids or inputs with `aux`.
inline Simulator proxy_pretrain(const SimulatorSpec& spec, const Dataset& aux,
                                const Dataset* exclude = nullptr) {
  if (spec.init != SimInit::proxy_pretrained) {
    throw DataError("proxy_pretrain requires init = proxy_pretrained");
  }
  if (aux.empty()) throw DataError("auxiliary pretraining corpus is empty");
  auto fingerprints = std::make_shared<std::set<std::uint64_t>>();
  for (const auto& inst : aux.instances) fingerprints->insert(input_fingerprint(inst));
  if (exclude) {
    std::set<std::string> ids;
    for (const auto& inst : aux.instances) ids.insert(inst.id);
    for (const auto& inst : exclude->instances) {
      if (ids.count(inst.id) || fingerprints->count(input_fingerprint(inst))) {
        throw DataError("auxiliary corpus overlaps the training set at '" + inst.id + "'");
      }
    }
  }
  auto model = std::make_shared<LinearModel>(aux.task_kind, hashed_dimension(spec.capacity), aux.label_space);
  model->randomize(spec.seed);
  std::vector<detail::TrainingExample> examples;
  for (const auto& inst : aux.instances) {
    examples.push_back({&inst, model->featurize(inst, compose_control_input(inst)),
                        detail::target_index(inst, inst.gold_label)});
  }
  detail::run_sgd(*model, examples, spec.epochs, spec.learning_rate, mix_seed(spec.seed, "pretrain"));
  SimulatorSpec warm = spec;
  warm.role = SimRole::control;
  warm.supervision = Supervision::gold;
  return make_simulator(warm, std::move(model), std::move(fingerprints));
}

// Trains a hashed bag-of-words simulator.
//   - targets: gold labels (supervision = gold) or task_preds (pred);
//   - treatment role: inputs are compose_treatment_input(x, rationale(x));
//   - init = proxy_pretrained: resumes from `warm_start`.
// Deterministic given spec.seed.
inline Simulator train_simulator(const Dataset& train, const PredictionMap* task_preds,
                                 const SimulatorSpec& spec, const VariantFn& rationale = nullptr,
                                 const Simulator* warm_start = nullptr) {
  if (spec.family != SimulatorFamily::hashed_bow_linear) {
    throw DataError("train_simulator builds hashed_bow_linear simulators only");
  }
  if (train.empty()) throw DataError("cannot train a simulator on an empty dataset");
  if (spec.supervision == Supervision::pred && !task_preds) {
    throw DataError("pred supervision requires task predictions for the training split");
  }
  if (spec.role == SimRole::treatment && !rationale) {
    throw DataError("treatment simulators require a rationale kind");
  }

  std::shared_ptr<LinearModel> model;
  std::shared_ptr<const std::set<std::uint64_t>> aux;
  if (spec.init == SimInit::proxy_pretrained) {
    if (!warm_start || !warm_start->model()) {
      throw DataError("init = proxy_pretrained requires a warm start from proxy_pretrain");
    }
    const auto& fp = warm_start->aux_fingerprints();
    for (const auto& inst : train.instances) {
      if (fp.count(input_fingerprint(inst))) {
        throw DataError("warm start was pretrained on training instance '" + inst.id + "'");
      }
    }
    if (warm_start->model()->dim() != hashed_dimension(spec.capacity)) {
      throw DataError("warm start capacity differs from the simulator spec");
    }
    if (warm_start->model()->labels() != train.label_space) {
      throw DataError("warm start label space differs from the training set");
    }
    model = std::make_shared<LinearModel>(*warm_start->model());
  } else {
    model = std::make_shared<LinearModel>(train.task_kind, hashed_dimension(spec.capacity), train.label_space);
    model->randomize(spec.seed);
  }

  std::vector<detail::TrainingExample> examples;
  examples.reserve(train.size());
  for (const auto& inst : train.instances) {
    const TaskPrediction* pred = task_preds ? &prediction_for(*task_preds, inst.id) : nullptr;
    const std::string& target = spec.supervision == Supervision::gold ? inst.gold_label : pred->pred_label;
    std::string serialized;
    if (spec.role == SimRole::treatment) {
      serialized = compose_treatment_input(inst, rationale(inst, pred));
    } else {
      serialized = compose_control_input(inst);
    }
    examples.push_back({&inst, model->featurize(inst, serialized), detail::target_index(inst, target)});
  }
  detail::run_sgd(*model, examples, spec.epochs, spec.learning_rate, spec.seed);
  return make_simulator(spec, std::move(model), std::move(aux));
}

inline Simulator train_simulator(const Dataset& train, const PredictionMap* task_preds,
                                 const SimulatorSpec& spec, std::optional<RationaleKind> rationale_kind,
                                 const Simulator* warm_start = nullptr) {
  return train_simulator(train, task_preds, spec,
                         rationale_kind ? variant_of_kind(*rationale_kind) : VariantFn{}, warm_start);
}

// --- task model F ---------------------------------------------------------

struct TaskModelSpec {
  Capacity capacity = Capacity::base;
  int epochs = 10;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

// Gold-supervised toy task model. It is trained on the bare input and, when
// a gold rationale exists, also on (input, gold rationale) so that it reacts
// to rationale text the way a self-rationalizing model would.
inline Simulator train_task_model(const Dataset& train, const TaskModelSpec& tm) {
  if (train.empty()) throw DataError("cannot train the task model on an empty dataset");
  auto model = std::make_shared<LinearModel>(train.task_kind, hashed_dimension(tm.capacity), train.label_space);
  model->randomize(mix_seed(tm.seed, "task-model"));
  std::vector<detail::TrainingExample> examples;
  for (const auto& inst : train.instances) {
    const auto target = detail::target_index(inst, inst.gold_label);
    examples.push_back({&inst, model->featurize(inst, compose_control_input(inst)), target});
    if (inst.gold_rationale) {
      RationaleVariant v{RationaleKind::gold_rationale, *inst.gold_rationale, inst.id};
      examples.push_back({&inst, model->featurize(inst, compose_treatment_input(inst, v)), target});
    }
  }
  detail::run_sgd(*model, examples, tm.epochs, tm.learning_rate, mix_seed(tm.seed, "task-model"));
  SimulatorSpec spec;
  spec.family = SimulatorFamily::task_model_reuse;
  spec.supervision = Supervision::gold;
  spec.role = SimRole::control;
  spec.capacity = tm.capacity;
  spec.epochs = tm.epochs;
  spec.learning_rate = tm.learning_rate;
  spec.seed = tm.seed;
  return make_simulator(spec, std::move(model));
}

inline std::string template_rationale(const std::string& label) { return "because it is " + label; }

// Runs the task model over a dataset. Rationales come from a template over
// the predicted label and are flagged synthetic.
inline PredictionMap predict_task(const Simulator& task_model, const Dataset& d) {
  PredictionMap out;
  for (const auto& inst : d.instances) {
    TaskPrediction p;
    p.instance_id = inst.id;
    p.pred_label = task_model.predict(inst, nullptr);
    p.pred_rationale = template_rationale(p.pred_label);
    p.synthetic_rationale = true;
    out.emplace(inst.id, std::move(p));
  }
  return out;
}

// The task model itself acting as a simulator in the given role.
inline Simulator reuse_task_model(const Simulator& task_model, SimRole role) {
  if (!task_model.model()) throw DataError("task model has no parameters to reuse");
  SimulatorSpec spec = task_model.spec();
  spec.family = SimulatorFamily::task_model_reuse;
  spec.role = role;
  return make_simulator(spec, std::make_shared<const LinearModel>(*task_model.model()));
}

// --- external predictions -------------------------------------------------

inline Simulator external_simulator(const PredictionMap& preds, SimRole role) {
  std::unordered_map<std::string, std::string> labels;
  for (const auto& [id, p] : preds) labels.emplace(id, p.pred_label);
  SimulatorSpec spec;
  spec.family = SimulatorFamily::external_predictions;
  spec.role = role;
  spec.epochs = 0;
  return make_replay_simulator(spec, std::move(labels));
}

// Replays labels from a predictions JSONL file.
inline Simulator load_external_simulator(const std::string& path, SimRole role) {
  return external_simulator(load_predictions(path), role);
}

// --- checkpoints ----------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "FRAMESIM";
inline constexpr int kCheckpointVersion = 1;

// Layout: "FRAMESIM <version>\n" followed by one JSON document with the
// spec and either model weights or replayed labels.
inline void save_simulator(const Simulator& sim, const std::string& path, const PredictionMap* replay = nullptr) {
  nlohmann::json body;
  body["spec"] = spec_to_json(sim.spec());
  if (sim.model()) {
    body["model"] = sim.model()->to_json();
  } else {
    if (!replay) throw std::invalid_argument("replay simulators need their prediction map to be saved");
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [id, p] : *replay) labels[id] = p.pred_label;
    body["replay"] = labels;
  }
  std::string content = std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  content += body.dump() + "\n";
  write_text_file(path, content);
}

inline Simulator load_simulator(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::string header;
  std::getline(in, header);
  const auto parts = split_whitespace(header);
  if (parts.size() != 2 || parts[0] != kCheckpointMagic) {
    throw DataError("'" + path + "' is not a simulator checkpoint");
  }
  if (std::stoi(parts[1]) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + parts[1]);
  }
  nlohmann::json body;
  try {
    in >> body;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint '" + path + "': " + e.what());
  }
  const SimulatorSpec spec = spec_from_json(body.at("spec"));
  if (body.contains("model")) {
    return make_simulator(spec, std::make_shared<const LinearModel>(LinearModel::from_json(body["model"])));
  }
  std::unordered_map<std::string, std::string> labels;
  for (auto it = body.at("replay").begin(); it != body.at("replay").end(); ++it) {
    labels.emplace(it.key(), it.value().get<std::string>());
  }
  return make_replay_simulator(spec, std::move(labels));
}

}  // namespace frame
