#pragma once

// Simulatability: accuracy terms, phi = treatment - control, and the four
// rationale-label consistency metric configurations.

#include <optional>
#include <string>
#include <vector>

#include "frame/common.hpp"
#include "frame/corpus.hpp"
#include "frame/rationales.hpp"
#include "frame/simulators.hpp"

namespace frame {

struct AccuracyTerm {
  double value = 0.0;  // 0..100
  std::size_t correct = 0;
  std::size_t total = 0;

  bool operator==(const AccuracyTerm&) const = default;
};

inline AccuracyTerm make_accuracy(std::size_t correct, std::size_t total) {
  if (total == 0) throw DataError("accuracy over an empty evaluation set");
  if (correct > total) throw DataError("accuracy: correct exceeds total");
  return {100.0 * static_cast<double>(correct) / static_cast<double>(total), correct, total};
}

// Exact match rate on the 0-100 scale, after trimming and lowercasing.
inline AccuracyTerm accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& targets) {
  if (predicted.size() != targets.size()) {
    throw DataError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                    std::to_string(targets.size()) + " targets");
  }
  if (predicted.empty()) throw DataError("accuracy over an empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += labels_match(predicted[i], targets[i]);
  return make_accuracy(correct, predicted.size());
}

inline double compute_phi(const AccuracyTerm& control, const AccuracyTerm& treatment) {
  if (control.total != treatment.total) {
    throw DataError("phi: control and treatment were measured on different evaluation sets (" +
                    std::to_string(control.total) + " vs " + std::to_string(treatment.total) + ")");
  }
  return treatment.value - control.value;
}

// --- metric configurations ------------------------------------------------

struct MetricConfig {
  std::string name;
  SimulatorSpec control_spec;
  SimulatorSpec treatment_spec;
};

namespace configs {

inline MetricConfig pair(std::string name, SimulatorFamily family, SimInit init, Supervision sup) {
  MetricConfig c;
  c.name = std::move(name);
  c.control_spec.family = c.treatment_spec.family = family;
  c.control_spec.init = c.treatment_spec.init = init;
  c.control_spec.supervision = c.treatment_spec.supervision = sup;
  c.control_spec.role = SimRole::control;
  c.treatment_spec.role = SimRole::treatment;
  return c;
}

// The task model is both simulators.
inline MetricConfig f_gold() {
  return pair("F-Gold", SimulatorFamily::task_model_reuse, SimInit::proxy_pretrained, Supervision::gold);
}
inline MetricConfig gh_gold() {
  return pair("GH-Gold", SimulatorFamily::hashed_bow_linear, SimInit::proxy_pretrained, Supervision::gold);
}
inline MetricConfig gh_pred() {
  return pair("GH-Pred", SimulatorFamily::hashed_bow_linear, SimInit::proxy_pretrained, Supervision::pred);
}
inline MetricConfig np_gh_pred() {
  return pair("NP-GH-Pred", SimulatorFamily::hashed_bow_linear, SimInit::random, Supervision::pred);
}

inline std::vector<MetricConfig> all() { return {f_gold(), gh_gold(), gh_pred(), np_gh_pred()}; }

}  // namespace configs

// Accepts display names ("NP-GH-Pred") and CLI spellings ("np-gh-pred").
inline MetricConfig config_by_name(std::string_view name) {
  const std::string key = to_lower(name);
  for (auto c : configs::all()) {
    if (to_lower(c.name) == key) return c;
  }
  throw UsageError("unknown metric configuration '" + std::string(name) +
                   "' (expected f-gold, gh-gold, gh-pred or np-gh-pred)");
}

inline void validate_config(const MetricConfig& c) {
  auto fail = [&](const std::string& why) { throw DataError("metric config '" + c.name + "': " + why); };
  if (c.control_spec.role != SimRole::control) fail("control spec must have the control role");
  if (c.treatment_spec.role != SimRole::treatment) fail("treatment spec must have the treatment role");
  const auto pretrained = [](const SimulatorSpec& s) {
    return s.init == SimInit::proxy_pretrained || s.family == SimulatorFamily::external_predictions;
  };
  const std::string key = to_lower(c.name);
  if (key == "f-gold") {
    if (c.control_spec.family != SimulatorFamily::task_model_reuse ||
        c.treatment_spec.family != SimulatorFamily::task_model_reuse) {
      fail("F-Gold uses the task model for both simulators");
    }
  } else if (key == "gh-gold" || key == "gh-pred") {
    const Supervision want = key == "gh-gold" ? Supervision::gold : Supervision::pred;
    for (const auto* s : {&c.control_spec, &c.treatment_spec}) {
      if (!pretrained(*s)) fail("simulators must be pretrained (proxy or external)");
      if (s->family != SimulatorFamily::external_predictions && s->supervision != want) {
        fail("wrong supervision target");
      }
    }
  } else if (key == "np-gh-pred") {
    for (const auto* s : {&c.control_spec, &c.treatment_spec}) {
      if (s->family == SimulatorFamily::hashed_bow_linear &&
          (s->init != SimInit::random || s->supervision != Supervision::pred)) {
        fail("NP-GH-Pred simulators are randomly initialized and predict the task model's label");
      }
    }
  }
}

// --- evaluation -----------------------------------------------------------

enum class Subpopulation { all, correct, incorrect };

inline std::string to_string(Subpopulation s) {
  switch (s) {
    case Subpopulation::all: return "all";
    case Subpopulation::correct: return "correct";
    case Subpopulation::incorrect: return "incorrect";
  }
  return "all";
}

struct PhiResult {
  std::string config_name;
  std::string rationale;  // rationale condition, e.g. "reference" or "perturbed_contrastive"
  std::optional<AccuracyTerm> control;
  std::optional<AccuracyTerm> treatment;
  std::optional<double> phi;  // empty when undefined
  std::uint64_t seed = 0;
  Subpopulation subpopulation = Subpopulation::all;
  std::string undefined_reason;
  std::size_t empty_rationales = 0;  // variants with empty text

  bool defined() const { return phi.has_value(); }
};

// Test instances in the requested subpopulation, judged by task prediction
// against gold label.
inline std::vector<TaskInstance> filter_subpopulation(const Dataset& test, const PredictionMap& task_preds,
                                                      Subpopulation sub) {
  std::vector<TaskInstance> out;
  for (const auto& inst : test.instances) {
    const auto& p = prediction_for(task_preds, inst.id);
    const bool correct = labels_match(p.pred_label, inst.gold_label);
    if (sub == Subpopulation::all || (sub == Subpopulation::correct) == correct) out.push_back(inst);
  }
  return out;
}

// Control accuracy on x alone and treatment accuracy on (x, rationale),
// both against the task model's predictions.
inline PhiResult evaluate_config(const Dataset& test, const PredictionMap& task_preds, const std::string& rationale_name,
                                 const VariantFn& rationale, const MetricConfig& config, const Simulator& control,
                                 const Simulator& treatment, Subpopulation sub, std::uint64_t seed = 0) {
  PhiResult r;
  r.config_name = config.name;
  r.rationale = rationale_name;
  r.seed = seed;
  r.subpopulation = sub;

  const auto eval = filter_subpopulation(test, task_preds, sub);
  if (eval.empty()) {
    r.undefined_reason = "subpopulation '" + to_string(sub) + "' is empty";
    return r;
  }
  std::vector<std::string> targets;
  std::vector<RationaleVariant> variants;
  for (const auto& inst : eval) {
    const auto& p = prediction_for(task_preds, inst.id);
    targets.push_back(p.pred_label);
    variants.push_back(rationale(inst, &p));
    r.empty_rationales += variants.back().text.empty();
  }
  r.control = accuracy(control.predict_batch(eval), targets);
  r.treatment = accuracy(treatment.predict_batch(eval, variants), targets);
  r.phi = compute_phi(*r.control, *r.treatment);
  return r;
}

inline PhiResult evaluate_config(const Dataset& test, const PredictionMap& task_preds, RationaleKind kind,
                                 const MetricConfig& config, const Simulator& control, const Simulator& treatment,
                                 Subpopulation sub, std::uint64_t seed = 0) {
  return evaluate_config(test, task_preds, to_string(kind), variant_of_kind(kind), config, control, treatment, sub,
                         seed);
}

}  // namespace frame
