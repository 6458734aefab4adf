#pragma once

// Assembles data, task runs, simulators and banks from a RunConfig and runs
// one axiom into a ReportDocument.

#include <filesystem>
#include <memory>
#include <string>

#include "frame/axioms.hpp"
#include "frame/config.hpp"
#include "frame/reports.hpp"

namespace frame {

struct PipelineData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> aux;
  std::string name;
};

inline PipelineData load_pipeline_data(const RunConfig& c) {
  PipelineData d;
  if (c.synthetic) {
    SyntheticOptions opt;
    opt.kind = c.synthetic->kind;
    auto [train, test] = generate_synthetic_task(c.synthetic->n, c.synthetic->m, 0, opt);
    d.train = std::move(train);
    d.test = std::move(test);
    d.aux = make_aux_corpus(d.train, c.synthetic->aux_n, c.synthetic->m, 0);
    d.name = "synthetic-" + to_string(c.synthetic->kind) + "-n" + std::to_string(c.synthetic->n) + "-m" +
             std::to_string(c.synthetic->m);
  } else {
    d.test = load_dataset(c.test_path, c.task_kind, Split::test);
    if (!c.train_path.empty()) d.train = load_dataset(c.train_path, c.task_kind, Split::train);
    if (!c.aux_path.empty()) d.aux = load_dataset(c.aux_path, c.task_kind, Split::train);
    d.name = std::filesystem::path(c.test_path).stem().string();
  }
  if (!c.dataset_name.empty()) d.name = c.dataset_name;
  return d;
}

inline BankSet load_pipeline_banks(const RunConfig& c, const PipelineData& d) {
  BankSet banks;
  for (const auto& path : c.banks) banks = merge_banks(banks, load_banks(path));
  if (c.synthetic && c.builtin_banks) {
    if (d.test.task_kind == TaskKind::closed_set && !banks.per_class) {
      banks.per_class = synthetic_paraphrase_bank(d.test.label_space);
    }
    if (d.test.task_kind == TaskKind::multi_choice && !banks.affirmation) {
      banks.affirmation = default_affirmation_bank();
    }
  }
  return banks;
}

inline std::vector<MetricConfig> pipeline_configs(const RunConfig& c) {
  std::vector<MetricConfig> out;
  for (const auto& name : c.configs) {
    auto m = config_by_name(name);
    for (auto* s : {&m.control_spec, &m.treatment_spec}) {
      s->epochs = c.epochs;
      s->learning_rate = c.learning_rate;
      s->capacity = c.capacity;
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline ReportDocument run_pipeline(const RunConfig& c) {
  validate_run_config(c);
  const PipelineData data = load_pipeline_data(c);
  const auto configs = pipeline_configs(c);

  std::unique_ptr<TaskRunSource> runs;
  if (!c.task_preds.empty()) {
    runs = std::make_unique<ExternalTaskRunSource>(
        data.test, c.task_preds,
        c.task_train_preds.empty() ? std::nullopt : std::optional<std::string>(c.task_train_preds),
        data.train.empty() ? nullptr : &data.train);
  } else {
    runs = std::make_unique<ToyTaskRunSource>(data.train, data.test,
                                              TaskModelSpec{c.capacity, c.epochs, c.learning_rate, 0});
  }

  std::unique_ptr<SimulatorSource> toy;
  if (!data.train.empty()) toy = std::make_unique<ToySimulatorSource>(data.train, data.aux);
  std::unique_ptr<ExternalSimulatorSource> external;
  if (!c.external.empty()) {
    external = std::make_unique<ExternalSimulatorSource>(toy.get());
    for (const auto& e : c.external) {
      const std::string name = config_by_name(e.config).name;
      if (e.role == "control") {
        external->add_control(name, e.path);
      } else {
        external->add_treatment(name, e.condition, e.path);
      }
    }
  }
  const SimulatorSource* sims = external ? static_cast<const SimulatorSource*>(external.get()) : toy.get();
  if (!sims) throw UsageError("no simulator source: give a train dataset or external simulator predictions");

  AxiomRunOptions opt;
  opt.configs = configs;
  opt.seeds = c.seeds;
  opt.jobs = c.jobs > 0 ? c.jobs : default_jobs();

  nlohmann::json provenance = to_json(c);
  provenance["tool_version"] = kToolVersion;
  nlohmann::json specs = nlohmann::json::object();
  for (const auto& m : configs) {
    specs[m.name] = {{"control", spec_to_json(m.control_spec)}, {"treatment", spec_to_json(m.treatment_spec)}};
  }
  provenance["simulator_specs"] = specs;

  ReportDocument doc;
  doc.dataset_name = data.name;
  if (c.axiom == 1) {
    doc.reports.push_back(run_axiom1(data.test, *runs, *sims, opt));
  } else if (c.axiom == 2) {
    Axiom2Options a2;
    a2.banks = load_pipeline_banks(c, data);
    provenance["bank_contents"] = serialize_banks(a2.banks);
    doc.reports.push_back(run_axiom2(data.test, *runs, *sims, opt, a2));
  } else {
    doc.reports.push_back(run_axiom3(data.test, *runs, *sims, opt, sweeps_of(c)));
  }
  doc.provenance = provenance;
  doc.run_id = make_run_id(provenance);
  doc.created_at = utc_timestamp();
  return doc;
}

struct PipelineFiles {
  std::filesystem::path json;
  std::filesystem::path markdown;
  std::optional<std::filesystem::path> curves;
};

inline PipelineFiles write_pipeline_outputs(const ReportDocument& doc, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
  const auto& r = doc.reports.front();
  const std::string stem = "axiom" + std::to_string(r.axiom);
  PipelineFiles files{dir / (stem + ".json"), dir / (stem + ".md"), std::nullopt};
  emit_json(doc, files.json);
  write_text_file(files.markdown, render_table(r));
  if (!r.curves.empty()) {
    files.curves = dir / (stem + "_curves.csv");
    write_text_file(*files.curves, curves_csv(r));
  }
  return files;
}

}  // namespace frame
