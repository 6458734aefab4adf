#pragma once

// Axiom runners. Each fans (config x seed [x setting]) cells out to a
// worker pool and reduces them deterministically into an AxiomReport.
//
// Where the task model's predictions and the simulators come from is
// abstracted behind TaskRunSource and SimulatorSource, so the same runners
// drive desk-scale toy models and replays of external prediction files.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "frame/corpus.hpp"
#include "frame/meta.hpp"
#include "frame/metrics.hpp"
#include "frame/parallel.hpp"
#include "frame/rationales.hpp"
#include "frame/simulators.hpp"

namespace frame {

// --- variation settings ---------------------------------------------------

enum class SweepFactor { train_fraction, noise_fraction, capacity };

inline std::string to_string(SweepFactor f) {
  switch (f) {
    case SweepFactor::train_fraction: return "train_fraction";
    case SweepFactor::noise_fraction: return "noise_fraction";
    case SweepFactor::capacity: return "capacity";
  }
  return "train_fraction";
}

inline SweepFactor parse_sweep_factor(std::string_view s) {
  for (auto f : {SweepFactor::train_fraction, SweepFactor::noise_fraction, SweepFactor::capacity}) {
    if (to_string(f) == s) return f;
  }
  throw UsageError("unknown sweep factor '" + std::string(s) + "'");
}

// One variation applied to the task model. A default-constructed setting is
// the unmodified task model (all training data, no noise, base capacity).
struct SweepSetting {
  std::optional<SweepFactor> factor;
  double fraction = 1.0;
  Capacity capacity = Capacity::base;

  std::string label() const {
    if (!factor) return "default";
    std::ostringstream ss;
    ss << to_string(*factor) << ":";
    if (*factor == SweepFactor::capacity) {
      ss << to_string(capacity);
    } else {
      ss << fraction;
    }
    return ss.str();
  }
};

struct VariationSweep {
  SweepFactor factor = SweepFactor::train_fraction;
  std::vector<SweepSetting> settings;
};

inline VariationSweep make_fraction_sweep(SweepFactor factor, const std::vector<double>& fractions) {
  VariationSweep s{factor, {}};
  for (double f : fractions) s.settings.push_back({factor, f, Capacity::base});
  return s;
}

inline VariationSweep make_capacity_sweep(const std::vector<Capacity>& caps) {
  VariationSweep s{SweepFactor::capacity, {}};
  for (auto c : caps) s.settings.push_back({SweepFactor::capacity, 1.0, c});
  return s;
}

// 100/50/30/10 % of training data, 0/10/30/50 % noisy labels, three
// capacity tiers.
inline std::vector<VariationSweep> default_sweeps() {
  return {make_fraction_sweep(SweepFactor::train_fraction, {1.0, 0.5, 0.3, 0.1}),
          make_fraction_sweep(SweepFactor::noise_fraction, {0.0, 0.1, 0.3, 0.5}),
          make_capacity_sweep({Capacity::small, Capacity::base, Capacity::large})};
}

inline std::string expand_template(std::string t, std::uint64_t seed, const std::string& setting) {
  auto replace_all = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos = t.find(key); pos != std::string::npos; pos = t.find(key, pos + value.size())) {
      t.replace(pos, key.size(), value);
    }
  };
  replace_all("{seed}", std::to_string(seed));
  std::string safe = setting;
  for (char& c : safe) {
    if (c == ':') c = '_';
  }
  replace_all("{setting}", safe);
  return t;
}

// --- task model runs ------------------------------------------------------

// One trained (or replayed) task model and its predictions.
struct TaskRun {
  std::string setting = "default";
  std::uint64_t seed = 0;
  std::shared_ptr<const Simulator> model;  // null for external predictions
  PredictionMap train_preds;                // may be empty for external runs
  PredictionMap test_preds;
};

class TaskRunSource {
 public:
  virtual ~TaskRunSource() = default;
  virtual TaskRun run(const SweepSetting& setting, std::uint64_t seed) const = 0;
};

// Retrains the toy task model on a corrupted copy of the training split.
// Predictions always cover the full clean training split so simulators can
// be trained on it.
class ToyTaskRunSource : public TaskRunSource {
 public:
  ToyTaskRunSource(Dataset train, Dataset test, TaskModelSpec base = {})
      : train_(std::move(train)), test_(std::move(test)), base_(base) {}

  TaskRun run(const SweepSetting& setting, std::uint64_t seed) const override {
    TaskModelSpec spec = base_;
    spec.seed = seed;
    Dataset fit = train_;
    if (setting.factor == SweepFactor::train_fraction) fit = subsample_train(train_, setting.fraction, seed);
    if (setting.factor == SweepFactor::noise_fraction) fit = inject_label_noise(train_, setting.fraction, seed);
    if (setting.factor == SweepFactor::capacity) spec.capacity = setting.capacity;
    TaskRun r;
    r.setting = setting.label();
    r.seed = seed;
    r.model = std::make_shared<const Simulator>(train_task_model(fit, spec));
    r.train_preds = predict_task(*r.model, train_);
    r.test_preds = predict_task(*r.model, test_);
    return r;
  }

  const Dataset& train() const { return train_; }
  const Dataset& test() const { return test_; }

 private:
  Dataset train_;
  Dataset test_;
  TaskModelSpec base_;
};

// Task predictions read from files; templates may use {seed} and {setting}.
class ExternalTaskRunSource : public TaskRunSource {
 public:
  ExternalTaskRunSource(const Dataset& test, std::string test_template,
                        std::optional<std::string> train_template = std::nullopt,
                        const Dataset* train = nullptr)
      : test_(test), test_template_(std::move(test_template)), train_template_(std::move(train_template)),
        train_(train) {}

  TaskRun run(const SweepSetting& setting, std::uint64_t seed) const override {
    TaskRun r;
    r.setting = setting.label();
    r.seed = seed;
    r.test_preds = load_predictions(expand_template(test_template_, seed, r.setting));
    validate_predictions(test_, r.test_preds);
    if (train_template_) {
      r.train_preds = load_predictions(expand_template(*train_template_, seed, r.setting));
      if (train_) validate_predictions(*train_, r.train_preds);
    }
    return r;
  }

 private:
  const Dataset& test_;
  std::string test_template_;
  std::optional<std::string> train_template_;
  const Dataset* train_;
};

// --- simulators -----------------------------------------------------------

struct RationaleCondition {
  std::string name;
  VariantFn build;
};

inline RationaleCondition condition_of_kind(RationaleKind kind) { return {to_string(kind), variant_of_kind(kind)}; }

class SimulatorSource {
 public:
  virtual ~SimulatorSource() = default;
  virtual Simulator control(const MetricConfig& config, const TaskRun& run, std::uint64_t seed) const = 0;
  virtual Simulator treatment(const MetricConfig& config, const TaskRun& run, const RationaleCondition& rationale,
                              std::uint64_t seed) const = 0;
  // Recorded treatment predictions for a rationale condition the treatment
  // simulator was not trained on (perturbed rationales). Empty when the
  // trained simulator should be queried instead.
  virtual std::optional<Simulator> replay(const MetricConfig&, const TaskRun&, const std::string& /*condition*/,
                                          std::uint64_t) const {
    return std::nullopt;
  }
};

// Builds an auxiliary pretraining corpus for a synthetic task: a fresh
// synthetic sample with the same label space, minus anything colliding with
// the training split.
inline Dataset make_aux_corpus(const Dataset& train, std::size_t n, std::size_t m, std::uint64_t seed) {
  SyntheticOptions opt;
  opt.kind = train.task_kind;
  opt.id_prefix = "aux";
  auto [a, b] = generate_synthetic_task(n, m, mix_seed(seed, "aux-corpus"), opt);
  std::set<std::uint64_t> taken;
  for (const auto& inst : train.instances) taken.insert(input_fingerprint(inst));
  Dataset aux = a;
  aux.split = Split::train;
  aux.instances.clear();
  for (const auto* part : {&a, &b}) {
    for (const auto& inst : part->instances) {
      if (!taken.count(input_fingerprint(inst))) aux.instances.push_back(inst);
    }
  }
  return aux;
}

// Trains toy simulators on the clean training split against the run's
// predictions. Proxy-pretrained warm starts are fitted once per
// (capacity, seed) and shared.
class ToySimulatorSource : public SimulatorSource {
 public:
  ToySimulatorSource(Dataset train, std::optional<Dataset> aux = std::nullopt)
      : train_(std::move(train)), aux_(std::move(aux)) {}

  Simulator control(const MetricConfig& config, const TaskRun& run, std::uint64_t seed) const override {
    if (config.control_spec.family == SimulatorFamily::task_model_reuse) {
      return reuse_task_model(require_model(run), SimRole::control);
    }
    SimulatorSpec spec = config.control_spec;
    spec.seed = seed;
    return train_simulator(train_, &run.train_preds, spec, VariantFn{}, warm_start(spec).get());
  }

  Simulator treatment(const MetricConfig& config, const TaskRun& run, const RationaleCondition& rationale,
                      std::uint64_t seed) const override {
    if (config.treatment_spec.family == SimulatorFamily::task_model_reuse) {
      return reuse_task_model(require_model(run), SimRole::treatment);
    }
    SimulatorSpec spec = config.treatment_spec;
    spec.seed = seed;
    return train_simulator(train_, &run.train_preds, spec, rationale.build, warm_start(spec).get());
  }

 private:
  static const Simulator& require_model(const TaskRun& run) {
    if (!run.model) throw DataError("task-model reuse needs a trained task model, not external predictions");
    return *run.model;
  }

  std::shared_ptr<const Simulator> warm_start(const SimulatorSpec& spec) const {
    if (spec.init != SimInit::proxy_pretrained) return nullptr;
    if (!aux_) throw DataError("proxy-pretrained simulators need an auxiliary pretraining corpus");
    const auto key = std::make_tuple(spec.capacity, spec.epochs, spec.learning_rate, spec.seed);
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto sim = std::make_shared<const Simulator>(proxy_pretrain(spec, *aux_, &train_));
    cache_.emplace(key, sim);
    return sim;
  }

  Dataset train_;
  std::optional<Dataset> aux_;
  mutable std::mutex mu_;
  mutable std::map<std::tuple<Capacity, int, double, std::uint64_t>, std::shared_ptr<const Simulator>> cache_;
};

// Replays prediction files registered per (config, role, condition).
// Templates may use {seed} and {setting}. Configurations without files are
// delegated to `fallback` when one is given. F-Gold without a control file
// replays the task model's own predictions.
class ExternalSimulatorSource : public SimulatorSource {
 public:
  explicit ExternalSimulatorSource(const SimulatorSource* fallback = nullptr) : fallback_(fallback) {}

  void add_control(const std::string& config, std::string path_template) {
    files_[key(config, "control")] = std::move(path_template);
  }
  void add_treatment(const std::string& config, const std::string& condition, std::string path_template) {
    files_[key(config, "treatment/" + condition)] = std::move(path_template);
  }

  bool covers(const std::string& config) const {
    const std::string prefix = to_lower(config) + "/";
    for (const auto& [k, v] : files_) {
      if (k.rfind(prefix, 0) == 0) return true;
    }
    return false;
  }

  Simulator control(const MetricConfig& config, const TaskRun& run, std::uint64_t seed) const override {
    auto it = files_.find(key(config.name, "control"));
    if (it != files_.end()) {
      return load_external_simulator(expand_template(it->second, seed, run.setting), SimRole::control);
    }
    if (to_lower(config.name) == "f-gold" && covers(config.name)) {
      return external_simulator(run.test_preds, SimRole::control);
    }
    if (fallback_ && !covers(config.name)) return fallback_->control(config, run, seed);
    throw DataError("no control predictions registered for config '" + config.name + "'");
  }

  Simulator treatment(const MetricConfig& config, const TaskRun& run, const RationaleCondition& rationale,
                      std::uint64_t seed) const override {
    auto it = files_.find(key(config.name, "treatment/" + rationale.name));
    if (it != files_.end()) {
      return load_external_simulator(expand_template(it->second, seed, run.setting), SimRole::treatment);
    }
    if (fallback_ && !covers(config.name)) return fallback_->treatment(config, run, rationale, seed);
    throw DataError("no treatment predictions registered for config '" + config.name + "', rationale '" +
                    rationale.name + "'");
  }

  std::optional<Simulator> replay(const MetricConfig& config, const TaskRun& run, const std::string& condition,
                                  std::uint64_t seed) const override {
    auto it = files_.find(key(config.name, "treatment/" + condition));
    if (it != files_.end()) {
      return load_external_simulator(expand_template(it->second, seed, run.setting), SimRole::treatment);
    }
    if (fallback_ && !covers(config.name)) return fallback_->replay(config, run, condition, seed);
    throw DataError("no treatment predictions registered for config '" + config.name + "', rationale '" +
                    condition + "'");
  }

 private:
  static std::string key(const std::string& config, const std::string& what) { return to_lower(config) + "/" + what; }

  const SimulatorSource* fallback_;
  std::map<std::string, std::string> files_;
};

// --- runners --------------------------------------------------------------

struct AxiomRunOptions {
  std::vector<MetricConfig> configs;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int jobs = 1;
};

namespace detail {

inline void check_options(const AxiomRunOptions& opt) {
  if (opt.configs.empty()) throw DataError("no metric configurations given");
  if (opt.seeds.empty()) throw DataError("no seeds given");
  for (const auto& c : opt.configs) validate_config(c);
}

template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(context + ": " + e.what());
  }
}

inline std::map<std::uint64_t, TaskRun> default_runs(const TaskRunSource& runs, const AxiomRunOptions& opt) {
  std::vector<TaskRun> out(opt.seeds.size());
  parallel_for(opt.seeds.size(), opt.jobs, [&](std::size_t i) {
    out[i] = with_context("task model, seed " + std::to_string(opt.seeds[i]),
                          [&] { return runs.run(SweepSetting{}, opt.seeds[i]); });
  });
  std::map<std::uint64_t, TaskRun> by_seed;
  for (std::size_t i = 0; i < out.size(); ++i) by_seed.emplace(opt.seeds[i], std::move(out[i]));
  return by_seed;
}

inline void note_synthetic_rationales(AxiomReport& report, const std::map<std::uint64_t, TaskRun>& runs) {
  for (const auto& [seed, run] : runs) {
    for (const auto& [id, p] : run.test_preds) {
      if (p.synthetic_rationale) {
        report.notes.push_back("predicted rationales are template-generated (synthetic), not model outputs");
        return;
      }
    }
  }
}

inline void set_cell(ConfigRow& row, const std::string& key, std::size_t seed_index, std::size_t n_seeds,
                     std::optional<double> value, const std::string& reason = {}) {
  auto& cell = row.values[key];
  cell.per_seed.resize(n_seeds);
  cell.per_seed[seed_index] = value;
  if (!value && !reason.empty() && cell.undefined_reason.empty()) cell.undefined_reason = reason;
}

}  // namespace detail

// Axiom 1: the reference rationale should bound phi from above. Reports
// phi(reference) and the mean accuracy ratio over predicted rationale, gold
// rationale and gold label.
inline AxiomReport run_axiom1(const Dataset& test, const TaskRunSource& runs, const SimulatorSource& sims,
                              const AxiomRunOptions& opt) {
  detail::check_options(opt);
  const auto by_seed = detail::default_runs(runs, opt);

  AxiomReport report;
  report.axiom = 1;
  report.columns = columns::axiom1();
  report.seeds = opt.seeds;
  detail::note_synthetic_rationales(report, by_seed);

  std::vector<RationaleKind> kinds{RationaleKind::reference};
  bool have_pred_rationale = true;
  for (const auto& [seed, run] : by_seed) {
    for (const auto& inst : test.instances) {
      const auto& p = prediction_for(run.test_preds, inst.id);
      have_pred_rationale = have_pred_rationale && p.pred_rationale.has_value();
    }
  }
  const bool have_gold_rationale = std::all_of(test.instances.begin(), test.instances.end(),
                                               [](const TaskInstance& i) { return i.gold_rationale.has_value(); });
  if (have_pred_rationale) {
    kinds.push_back(RationaleKind::pred_rationale);
  } else {
    report.notes.push_back("predicted rationales missing; pred_rationale left out of MAR");
  }
  if (have_gold_rationale) {
    kinds.push_back(RationaleKind::gold_rationale);
  } else {
    report.notes.push_back("gold rationales missing; gold_rationale left out of MAR");
  }
  kinds.push_back(RationaleKind::gold_label);

  const std::size_t nc = opt.configs.size(), ns = opt.seeds.size();
  std::vector<std::vector<PhiResult>> cells(nc * ns);
  parallel_for(nc * ns, opt.jobs, [&](std::size_t i) {
    const auto& config = opt.configs[i / ns];
    const auto seed = opt.seeds[i % ns];
    const auto& run = by_seed.at(seed);
    cells[i] = detail::with_context("config " + config.name + ", seed " + std::to_string(seed), [&] {
      std::vector<PhiResult> results;
      const Simulator control = sims.control(config, run, seed);
      for (auto kind : kinds) {
        const auto cond = condition_of_kind(kind);
        const Simulator treatment = sims.treatment(config, run, cond, seed);
        results.push_back(evaluate_config(test, run.test_preds, cond.name, cond.build, config, control, treatment,
                                          Subpopulation::all, seed));
      }
      return results;
    });
  });

  for (std::size_t c = 0; c < nc; ++c) {
    ConfigRow row{opt.configs[c].name, {}};
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& results = cells[c * ns + s];
      const PhiResult& ref = results.front();
      detail::set_cell(row, "phi_ref", s, ns, ref.phi, ref.undefined_reason);
      detail::set_cell(row, "acc_control", s, ns, ref.control ? std::optional(ref.control->value) : std::nullopt);
      std::vector<double> nonref;
      for (const auto& r : results) {
        detail::set_cell(row, "acc_" + r.rationale, s, ns, r.treatment ? std::optional(r.treatment->value) : std::nullopt);
        detail::set_cell(row, "phi_" + r.rationale, s, ns, r.phi);
        if (&r != &ref && r.treatment) nonref.push_back(r.treatment->value);
        if (r.empty_rationales) {
          report.notes.push_back(row.config + " seed " + std::to_string(opt.seeds[s]) + ": " +
                                 std::to_string(r.empty_rationales) + " empty " + r.rationale + " rationales");
        }
      }
      if (!ref.treatment || nonref.empty()) {
        detail::set_cell(row, "mar", s, ns, std::nullopt, "no treatment accuracies");
        continue;
      }
      try {
        const auto mar = compute_mar(ref.treatment->value, nonref);
        detail::set_cell(row, "mar", s, ns, mar.value);
        if (mar.excluded) {
          report.notes.push_back(row.config + " seed " + std::to_string(opt.seeds[s]) + ": " +
                                 std::to_string(mar.excluded) + " zero-accuracy MAR term(s) excluded");
        }
      } catch (const DataError& e) {
        detail::set_cell(row, "mar", s, ns, std::nullopt, e.what());
      }
    }
    report.rows.push_back(std::move(row));
  }
  for (auto& cell : cells) {
    for (auto& r : cell) report.phi_results.push_back(std::move(r));
  }
  finalize_report(report);
  return report;
}

// Maps a reference variant to its perturbed version.
using PerturbFn = std::function<RationaleVariant(const RationaleVariant&, const TaskInstance&, std::uint64_t)>;

struct Axiom2Options {
  BankSet banks;
  PerturbFn equivalent;   // default: bank-driven perturb_equivalent
  PerturbFn contrastive;  // default: perturb_contrastive
};

// Axiom 2: phi should move little under equivalent perturbation of the
// reference rationale and a lot under contrastive perturbation. The
// treatment simulator is the one trained on reference rationales; only the
// rationales it is evaluated on are perturbed.
inline AxiomReport run_axiom2(const Dataset& test, const TaskRunSource& runs, const SimulatorSource& sims,
                              const AxiomRunOptions& opt, const Axiom2Options& a2) {
  detail::check_options(opt);
  PerturbFn equivalent = a2.equivalent;
  if (!equivalent) {
    const ParaphraseBank* bank = a2.banks.for_task(test.task_kind);
    if (!bank) {
      throw DataError(std::string("no ") + (test.task_kind == TaskKind::closed_set ? "per-class paraphrase" : "affirmation") +
                      " bank for " + to_string(test.task_kind) + " data");
    }
    if (test.task_kind == TaskKind::closed_set) check_bank_covers(*bank, test.label_space);
    equivalent = [bank = *bank](const RationaleVariant& v, const TaskInstance& inst, std::uint64_t s) {
      return perturb_equivalent(v, inst, bank, s);
    };
  }
  PerturbFn contrastive = a2.contrastive;
  if (!contrastive) {
    contrastive = [](const RationaleVariant& v, const TaskInstance& inst, std::uint64_t s) {
      return perturb_contrastive(v, inst, s);
    };
  }

  const auto by_seed = detail::default_runs(runs, opt);
  AxiomReport report;
  report.axiom = 2;
  report.columns = columns::axiom2();
  report.seeds = opt.seeds;

  const std::size_t nc = opt.configs.size(), ns = opt.seeds.size();
  std::vector<std::vector<PhiResult>> cells(nc * ns);
  parallel_for(nc * ns, opt.jobs, [&](std::size_t i) {
    const auto& config = opt.configs[i / ns];
    const auto seed = opt.seeds[i % ns];
    const auto& run = by_seed.at(seed);
    cells[i] = detail::with_context("config " + config.name + ", seed " + std::to_string(seed), [&] {
      auto perturbed = [seed](const std::string& name, RationaleKind kind, PerturbFn fn) {
        return RationaleCondition{name, [seed, kind, fn](const TaskInstance& inst, const TaskPrediction* p) {
                                    auto ref = variant_of_kind(RationaleKind::reference)(inst, p);
                                    auto v = fn(ref, inst, mix_seed(seed, inst.id));
                                    v.kind = kind;
                                    return v;
                                  }};
      };
      const std::vector<RationaleCondition> conditions{
          condition_of_kind(RationaleKind::reference),
          perturbed(to_string(RationaleKind::perturbed_equivalent), RationaleKind::perturbed_equivalent, equivalent),
          perturbed(to_string(RationaleKind::perturbed_contrastive), RationaleKind::perturbed_contrastive, contrastive)};
      std::vector<PhiResult> results;
      const Simulator control = sims.control(config, run, seed);
      const Simulator trained = sims.treatment(config, run, conditions.front(), seed);
      for (const auto& cond : conditions) {
        const auto recorded = &cond == &conditions.front() ? std::nullopt : sims.replay(config, run, cond.name, seed);
        results.push_back(evaluate_config(test, run.test_preds, cond.name, cond.build, config, control,
                                          recorded ? *recorded : trained, Subpopulation::all, seed));
      }
      return results;
    });
  });

  for (std::size_t c = 0; c < nc; ++c) {
    ConfigRow row{opt.configs[c].name, {}};
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& r = cells[c * ns + s];
      detail::set_cell(row, "phi_reference", s, ns, r[0].phi);
      detail::set_cell(row, "phi_equivalent", s, ns, r[1].phi);
      detail::set_cell(row, "phi_contrastive", s, ns, r[2].phi);
      auto asd = [](const PhiResult& a, const PhiResult& b) -> std::optional<double> {
        if (!a.phi || !b.phi) return std::nullopt;
        return compute_asd(*a.phi, *b.phi);
      };
      detail::set_cell(row, "asd_equivalent", s, ns, asd(r[0], r[1]), "phi undefined");
      detail::set_cell(row, "asd_contrastive", s, ns, asd(r[0], r[2]), "phi undefined");
    }
    report.rows.push_back(std::move(row));
  }
  for (auto& cell : cells) {
    for (auto& r : cell) report.phi_results.push_back(std::move(r));
  }
  finalize_report(report);
  return report;
}

// Axiom 3: phi(reference) should be stable as the task model varies. For
// each sweep, SCV of phi across its settings; plus the ASD between phi on
// correctly and incorrectly predicted test instances, averaged over every
// setting where both subpopulations are non-empty.
inline AxiomReport run_axiom3(const Dataset& test, const TaskRunSource& runs, const SimulatorSource& sims,
                              const AxiomRunOptions& opt, const std::vector<VariationSweep>& sweeps) {
  detail::check_options(opt);
  if (sweeps.empty()) throw DataError("no variation sweeps given");
  for (const auto& sw : sweeps) {
    if (sw.settings.size() < 2) throw DataError("sweep '" + to_string(sw.factor) + "' needs at least 2 settings");
  }

  struct SettingRef {
    std::size_t sweep, setting;
  };
  std::vector<SettingRef> settings;
  for (std::size_t w = 0; w < sweeps.size(); ++w) {
    for (std::size_t k = 0; k < sweeps[w].settings.size(); ++k) settings.push_back({w, k});
  }
  const std::size_t nc = opt.configs.size(), ns = opt.seeds.size(), nk = settings.size();

  // Phase 1: one task model per (seed, setting), shared by every config.
  std::vector<TaskRun> task_runs(ns * nk);
  parallel_for(ns * nk, opt.jobs, [&](std::size_t i) {
    const auto seed = opt.seeds[i / nk];
    const auto& st = sweeps[settings[i % nk].sweep].settings[settings[i % nk].setting];
    task_runs[i] = detail::with_context("task model, setting " + st.label() + ", seed " + std::to_string(seed),
                                        [&] { return runs.run(st, seed); });
  });

  // Phase 2: phi on all / correct / incorrect subpopulations per cell.
  struct Cell {
    PhiResult all, correct, incorrect;
  };
  std::vector<Cell> cells(nc * ns * nk);
  parallel_for(cells.size(), opt.jobs, [&](std::size_t i) {
    const auto& config = opt.configs[i / (ns * nk)];
    const std::size_t s = (i / nk) % ns, k = i % nk;
    const auto seed = opt.seeds[s];
    const auto& run = task_runs[s * nk + k];
    cells[i] = detail::with_context(
        "config " + config.name + ", setting " + run.setting + ", seed " + std::to_string(seed), [&] {
          const auto cond = condition_of_kind(RationaleKind::reference);
          const Simulator control = sims.control(config, run, seed);
          const Simulator treatment = sims.treatment(config, run, cond, seed);
          Cell c;
          c.all = evaluate_config(test, run.test_preds, cond.name, cond.build, config, control, treatment,
                                  Subpopulation::all, seed);
          c.correct = evaluate_config(test, run.test_preds, cond.name, cond.build, config, control, treatment,
                                      Subpopulation::correct, seed);
          c.incorrect = evaluate_config(test, run.test_preds, cond.name, cond.build, config, control, treatment,
                                        Subpopulation::incorrect, seed);
          return c;
        });
  });

  AxiomReport report;
  report.axiom = 3;
  report.columns = columns::axiom3();
  report.seeds = opt.seeds;
  const std::map<SweepFactor, std::string> column_of{{SweepFactor::train_fraction, "scv_train_fraction"},
                                                     {SweepFactor::noise_fraction, "scv_noise"},
                                                     {SweepFactor::capacity, "scv_capacity"}};
  for (std::size_t c = 0; c < nc; ++c) {
    ConfigRow row{opt.configs[c].name, {}};
    for (const auto& [factor, key] : column_of) {
      const bool swept = std::any_of(sweeps.begin(), sweeps.end(), [&](const auto& sw) { return sw.factor == factor; });
      if (!swept) {
        for (std::size_t s = 0; s < ns; ++s) detail::set_cell(row, key, s, ns, std::nullopt, "factor not swept");
      }
    }
    for (std::size_t s = 0; s < ns; ++s) {
      const auto cell_at = [&](std::size_t k) -> const Cell& { return cells[(c * ns + s) * nk + k]; };
      for (std::size_t w = 0; w < sweeps.size(); ++w) {
        std::vector<double> phis;
        for (std::size_t k = 0; k < nk; ++k) {
          if (settings[k].sweep == w && cell_at(k).all.phi) phis.push_back(*cell_at(k).all.phi);
        }
        const std::string key = column_of.at(sweeps[w].factor);
        if (phis.size() < 2) {
          detail::set_cell(row, key, s, ns, std::nullopt, "fewer than 2 defined settings");
          continue;
        }
        const auto scv = compute_scv(phis);
        detail::set_cell(row, key, s, ns, scv.value, scv.undefined_reason);
      }
      double asd_sum = 0.0;
      std::size_t asd_n = 0;
      for (std::size_t k = 0; k < nk; ++k) {
        const auto& cell = cell_at(k);
        report.curves.push_back({task_runs[s * nk + k].setting,
                                 row.config, opt.seeds[s], cell.all.phi});
        if (cell.correct.phi && cell.incorrect.phi) {
          asd_sum += compute_asd(*cell.correct.phi, *cell.incorrect.phi);
          ++asd_n;
        }
      }
      detail::set_cell(row, "asd_subpopulation", s, ns,
                       asd_n ? std::optional(asd_sum / static_cast<double>(asd_n)) : std::nullopt,
                       "incorrectly (or correctly) predicted subpopulation empty at every setting");
      detail::set_cell(row, "subpop_settings_defined", s, ns, static_cast<double>(asd_n));
    }
    report.rows.push_back(std::move(row));
  }
  for (auto& cell : cells) {
    report.phi_results.push_back(std::move(cell.all));
    report.phi_results.push_back(std::move(cell.correct));
    report.phi_results.push_back(std::move(cell.incorrect));
  }
  finalize_report(report);
  return report;
}

}  // namespace frame
