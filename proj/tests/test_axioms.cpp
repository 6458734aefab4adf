#include <catch_amalgamated.hpp>

#include "frame/axioms.hpp"
#include "test_util.hpp"

using namespace frame;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using frame::testing::fixture;
using frame::testing::TempDir;

namespace {

Dataset replay_test() { return load_dataset(fixture("replay/test.jsonl"), TaskKind::closed_set); }

void register_replay(ExternalSimulatorSource& src, const std::string& config) {
  src.add_control(config, fixture("replay/control.jsonl"));
  for (const char* k : {"reference", "pred_rationale", "gold_rationale", "gold_label"}) {
    src.add_treatment(config, k, fixture(std::string("replay/treatment_") + k + ".jsonl"));
  }
}

AxiomRunOptions options(std::vector<MetricConfig> configs, std::vector<std::uint64_t> seeds = {0}) {
  AxiomRunOptions o;
  o.configs = std::move(configs);
  o.seeds = std::move(seeds);
  o.jobs = 2;
  return o;
}

struct Toy {
  Dataset train, test;
  Dataset aux;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy t;
    std::tie(t.train, t.test) = generate_synthetic_task(200, 3, 0);
    t.aux = make_aux_corpus(t.train, 200, 3, 0);
    return t;
  }();
  return t;
}

}  // namespace

TEST_CASE("sweep settings and templates") {
  const auto sweeps = default_sweeps();
  REQUIRE(sweeps.size() == 3);
  CHECK(sweeps[0].settings.size() == 4);
  CHECK(sweeps[1].settings.size() == 4);
  CHECK(sweeps[2].settings.size() == 3);
  CHECK(sweeps[0].settings[1].label() == "train_fraction:0.5");
  CHECK(sweeps[2].settings[0].label() == "capacity:small");
  CHECK(SweepSetting{}.label() == "default");
  CHECK(parse_sweep_factor("noise_fraction") == SweepFactor::noise_fraction);
  CHECK(expand_template("p/{seed}/{setting}.jsonl", 2, "capacity:small") == "p/2/capacity_small.jsonl");
}

TEST_CASE("auxiliary corpus is disjoint from the training split") {
  const auto& t = toy();
  CHECK_FALSE(t.aux.empty());
  std::set<std::uint64_t> train_fp;
  for (const auto& inst : t.train.instances) train_fp.insert(input_fingerprint(inst));
  for (const auto& inst : t.aux.instances) {
    CHECK_FALSE(train_fp.count(input_fingerprint(inst)));
    CHECK(inst.id.rfind("aux", 0) == 0);
  }
  CHECK(t.aux.label_space == t.train.label_space);
}

TEST_CASE("external replay reproduces hand-counted phi and MAR") {
  const auto test = replay_test();
  ExternalTaskRunSource runs(test, fixture("replay/task_preds.jsonl"));
  ExternalSimulatorSource sims;
  register_replay(sims, "GH-Pred");
  const auto r = run_axiom1(test, runs, sims, options({configs::gh_pred()}));
  CHECK(r.mean("GH-Pred", "acc_control") == 60.0);
  CHECK(r.mean("GH-Pred", "acc_reference") == 90.0);
  CHECK(r.mean("GH-Pred", "phi_ref") == Approx(30.0).margin(1e-9));
  CHECK(r.mean("GH-Pred", "mar") == Approx(11.0 / 6.0).margin(1e-9));
  CHECK(r.mean("GH-Pred", "phi_pred_rationale") == Approx(0.0).margin(1e-9));
  CHECK(r.mean("GH-Pred", "phi_gold_rationale") == Approx(-30.0).margin(1e-9));
  CHECK(r.mean("GH-Pred", "phi_gold_label") == Approx(30.0).margin(1e-9));
  CHECK(r.cell("GH-Pred", "phi_ref")->stats->single_seed);
}

TEST_CASE("external F-Gold control replays the task predictions") {
  const auto test = replay_test();
  ExternalTaskRunSource runs(test, fixture("replay/task_preds.jsonl"));
  ExternalSimulatorSource sims;
  for (const char* k : {"reference", "pred_rationale", "gold_rationale", "gold_label"}) {
    sims.add_treatment("f-gold", k, fixture(std::string("replay/treatment_") + k + ".jsonl"));
  }
  const auto r = run_axiom1(test, runs, sims, options({configs::f_gold()}));
  CHECK(r.mean("F-Gold", "acc_control") == 100.0);
  CHECK(r.mean("F-Gold", "phi_ref") == Approx(-10.0));
}

TEST_CASE("missing external files name the config and seed") {
  const auto test = replay_test();
  ExternalTaskRunSource runs(test, fixture("replay/task_preds.jsonl"));
  ExternalSimulatorSource sims;
  sims.add_control("GH-Pred", fixture("replay/control.jsonl"));
  sims.add_treatment("GH-Pred", "reference", fixture("replay/nope_{seed}.jsonl"));
  CHECK_THROWS_WITH(run_axiom1(test, runs, sims, options({configs::gh_pred()}, {4})),
                    ContainsSubstring("config GH-Pred, seed 4") && ContainsSubstring("nope_4.jsonl"));
  CHECK_THROWS_AS(run_axiom1(test, runs, sims, options({configs::gh_pred()}, {4})), DataError);

  ExternalTaskRunSource bad_runs(test, fixture("replay/missing_task_{seed}.jsonl"));
  CHECK_THROWS_WITH(run_axiom1(test, bad_runs, sims, options({configs::gh_pred()})),
                    ContainsSubstring("task model, seed 0"));

  // Configs without files fall back; covered configs with gaps do not.
  ExternalSimulatorSource no_fallback;
  register_replay(no_fallback, "GH-Pred");
  CHECK_THROWS_WITH(run_axiom1(test, runs, no_fallback, options({configs::gh_gold()})),
                    ContainsSubstring("no control predictions registered for config 'GH-Gold'"));

  Axiom2Options a2;
  a2.banks.per_class = synthetic_paraphrase_bank(test.label_space);
  CHECK_THROWS_WITH(run_axiom2(test, runs, no_fallback, options({configs::gh_pred()}), a2),
                    ContainsSubstring("perturbed_equivalent"));
}

TEST_CASE("axiom 1 on the synthetic task") {
  const auto& t = toy();
  ToyTaskRunSource runs(t.train, t.test);
  ToySimulatorSource sims(t.train, t.aux);
  const auto r = run_axiom1(t.test, runs, sims, options({configs::np_gh_pred(), configs::gh_gold()}, {0, 1}));
  CHECK(r.axiom == 1);
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) {
    for (const char* key : {"phi_ref", "mar"}) {
      const auto* cell = r.cell(row.config, key);
      REQUIRE(cell);
      CHECK(cell->per_seed.size() == 2);
      CHECK(cell->stats.has_value());
    }
  }
  CHECK(r.mean("NP-GH-Pred", "acc_reference") >= 99.0);
  CHECK(r.nrg.size() == 2);
  CHECK(r.phi_results.size() == 2 * 2 * 4);
  CHECK(std::any_of(r.notes.begin(), r.notes.end(),
                    [](const std::string& n) { return n.find("template-generated") != std::string::npos; }));
}

TEST_CASE("axiom 2: identity equivalent perturbation gives zero ASD") {
  const auto& t = toy();
  ToyTaskRunSource runs(t.train, t.test);
  ToySimulatorSource sims(t.train, t.aux);
  Axiom2Options a2;
  a2.equivalent = [](const RationaleVariant& v, const TaskInstance&, std::uint64_t) { return v; };
  const auto r = run_axiom2(t.test, runs, sims, options({configs::np_gh_pred(), configs::gh_pred()}, {0, 1}), a2);
  for (const auto& row : r.rows) {
    for (const auto& v : r.cell(row.config, "asd_equivalent")->per_seed) CHECK(*v == 0.0);
  }
  CHECK(*r.mean("NP-GH-Pred", "asd_contrastive") > 0.0);
  CHECK(r.columns.size() == 2);
  CHECK(r.columns[0].key == "asd_equivalent");
}

TEST_CASE("axiom 2: bank requirements") {
  const auto& t = toy();
  ToyTaskRunSource runs(t.train, t.test);
  ToySimulatorSource sims(t.train, t.aux);
  CHECK_THROWS_WITH(run_axiom2(t.test, runs, sims, options({configs::gh_pred()}), Axiom2Options{}),
                    ContainsSubstring("no per-class paraphrase bank"));
  Axiom2Options partial;
  partial.banks.per_class = ParaphraseBank{BankKind::per_class, {{t.test.label_space[0], {"x"}}}, {}};
  CHECK_THROWS_AS(run_axiom2(t.test, runs, sims, options({configs::gh_pred()}), partial), DataError);
}

TEST_CASE("axiom 3: sweeps, curves and an empty subpopulation") {
  const auto test = replay_test();
  TempDir dir;
  PredictionMap gold;
  for (const auto& inst : test.instances) gold[inst.id] = TaskPrediction{inst.id, inst.gold_label, "r", false};
  write_text_file(dir.file("gold_preds.jsonl"), serialize_predictions(gold, test));

  ExternalTaskRunSource runs(test, dir.file("gold_preds.jsonl"));
  ExternalSimulatorSource sims;
  register_replay(sims, "GH-Pred");
  register_replay(sims, "NP-GH-Pred");
  const std::vector<VariationSweep> sweeps{make_fraction_sweep(SweepFactor::train_fraction, {1.0, 0.5}),
                                           make_capacity_sweep({Capacity::small, Capacity::large})};
  const auto r = run_axiom3(test, runs, sims, options({configs::gh_pred(), configs::np_gh_pred()}, {0, 1}), sweeps);
  CHECK(r.axiom == 3);
  for (const auto& row : r.rows) {
    CHECK(r.mean(row.config, "scv_train_fraction") == 0.0);
    CHECK(r.mean(row.config, "scv_capacity") == 0.0);
    CHECK_FALSE(r.mean(row.config, "scv_noise").has_value());
    CHECK(r.cell(row.config, "scv_noise")->undefined_reason == "factor not swept");
    const auto* asd = r.cell(row.config, "asd_subpopulation");
    CHECK_FALSE(asd->stats.has_value());
    CHECK_THAT(asd->undefined_reason, ContainsSubstring("subpopulation empty"));
  }
  CHECK(r.curves.size() == 2 * 2 * 4);
  CHECK(r.curves.front().setting == "train_fraction:1");
  for (const auto& p : r.phi_results) {
    if (p.subpopulation == Subpopulation::incorrect) {
      CHECK_FALSE(p.phi.has_value());
    }
  }
  CHECK_THROWS_AS(run_axiom3(test, runs, sims, options({configs::gh_pred()}),
                             {make_fraction_sweep(SweepFactor::noise_fraction, {0.1})}),
                  DataError);
}

TEST_CASE("axiom 3 with toy task models") {
  const auto& t = toy();
  ToyTaskRunSource runs(t.train, t.test, TaskModelSpec{Capacity::small, 3, 0.1, 0});
  ToySimulatorSource sims(t.train, t.aux);
  const std::vector<VariationSweep> sweeps{make_fraction_sweep(SweepFactor::noise_fraction, {0.0, 0.5})};
  const auto r = run_axiom3(t.test, runs, sims, options({configs::np_gh_pred(), configs::f_gold()}, {0}), sweeps);
  CHECK(r.curves.size() == 2 * 2);
  for (const auto& p : r.phi_results) {
    if (p.config_name == "F-Gold" && p.control) CHECK(p.control->value == 100.0);
    if (!p.phi) CHECK_FALSE(p.undefined_reason.empty());
  }
}

TEST_CASE("runner options are validated") {
  const auto test = replay_test();
  ExternalTaskRunSource runs(test, fixture("replay/task_preds.jsonl"));
  ExternalSimulatorSource sims;
  CHECK_THROWS_AS(run_axiom1(test, runs, sims, options({})), DataError);
  CHECK_THROWS_AS(run_axiom1(test, runs, sims, options({configs::gh_pred()}, {})), DataError);
}
