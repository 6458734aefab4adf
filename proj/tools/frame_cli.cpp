// frame: command-line driver.
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.

#include <csignal>
#include <iostream>
#include <pthread.h>

#include <CLI11.hpp>

#include "frame/annotation_server.hpp"
#include "frame/pipeline.hpp"

namespace {

using namespace frame;

KeyValues load_config_file(const std::string& path) {
  if (path.empty()) return {};
  return parse_key_values(read_text_file(path), path);
}

void set_if(KeyValues& kv, const std::string& key, const std::string& value) {
  if (!value.empty()) kv[key] = value;
}

struct RunFlags {
  int axiom = 0;
  std::string config, synthetic, train, test, aux, task_kind, task_preds, task_train_preds, configs, seeds, banks,
      output, train_fractions, noise_fractions, capacities, dataset_name, capacity;
  int jobs = 0, epochs = 0;
  double lr = 0.0;
  bool quiet = false;
};

int cmd_run_axiom(const RunFlags& f) {
  KeyValues kv = load_config_file(f.config);
  kv["axiom"] = std::to_string(f.axiom);
  set_if(kv, "synthetic", f.synthetic);
  set_if(kv, "train", f.train);
  set_if(kv, "test", f.test);
  set_if(kv, "aux", f.aux);
  set_if(kv, "task_kind", f.task_kind);
  set_if(kv, "task_preds", f.task_preds);
  set_if(kv, "task_train_preds", f.task_train_preds);
  set_if(kv, "configs", f.configs);
  set_if(kv, "seeds", f.seeds);
  set_if(kv, "banks", f.banks);
  set_if(kv, "output", f.output);
  set_if(kv, "train_fractions", f.train_fractions);
  set_if(kv, "noise_fractions", f.noise_fractions);
  set_if(kv, "capacities", f.capacities);
  set_if(kv, "dataset_name", f.dataset_name);
  set_if(kv, "capacity", f.capacity);
  if (f.jobs > 0) kv["jobs"] = std::to_string(f.jobs);
  if (f.epochs > 0) kv["epochs"] = std::to_string(f.epochs);
  if (f.lr > 0.0) kv["learning_rate"] = std::to_string(f.lr);

  const RunConfig config = run_config_from(kv);
  const ReportDocument doc = run_pipeline(config);
  const auto files = write_pipeline_outputs(doc, config.output_dir);
  if (!f.quiet) std::cout << render_table(doc.reports.front());
  for (const auto& note : doc.reports.front().notes) std::cerr << "note: " << note << "\n";
  std::cerr << "wrote " << files.json.string() << " and " << files.markdown.string();
  if (files.curves) std::cerr << " and " << files.curves->string();
  std::cerr << "\n";
  return 0;
}

int cmd_encrypt(const std::string& input, const std::string& output, const std::string& kind, int shift,
                const std::string& preds, const std::string& preds_output) {
  const Dataset d = load_dataset(input, parse_task_kind(kind));
  save_dataset(encrypt_dataset(d, shift), output);
  if (!preds.empty()) {
    if (preds_output.empty()) throw UsageError("--predictions needs --predictions-output");
    write_text_file(preds_output, serialize_predictions(encrypt_predictions(load_predictions(preds), shift), d));
  }
  return 0;
}

int cmd_gen_synthetic(std::size_t n, std::size_t m, std::uint64_t seed, const std::string& kind,
                      const std::string& dir, bool with_preds) {
  SyntheticOptions opt;
  opt.kind = parse_task_kind(kind);
  auto [train, test] = generate_synthetic_task(n, m, seed, opt);
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_dataset(train, (base / "train.jsonl").string());
  save_dataset(test, (base / "test.jsonl").string());
  if (with_preds) {
    const auto model = train_task_model(train, TaskModelSpec{Capacity::base, 10, 0.1, seed});
    write_text_file((base / "task_preds_train.jsonl").string(), serialize_predictions(predict_task(model, train), train));
    write_text_file((base / "task_preds_test.jsonl").string(), serialize_predictions(predict_task(model, test), test));
  }
  std::cerr << "wrote " << train.size() << " train and " << test.size() << " test instances to " << dir << "\n";
  return 0;
}

int cmd_serve(const std::string& config_file, int port, const std::string& log) {
  KeyValues kv = load_config_file(config_file);
  if (port >= 0) kv["port"] = std::to_string(port);
  set_if(kv, "log", log);
  StudyConfig config = study_config_from(kv);
  const std::string host = config.host;
  const int want_port = config.port;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Study study(std::move(config));
  AnnotationServer server(study);
  const int bound = server.bind(host, want_port);
  server.start_background();
  std::cerr << "annotation service listening on " << host << ":" << bound << "\n";
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down\n";
  server.stop();
  return 0;
}

int cmd_score(const std::string& config_file, const std::string& log, const std::string& output) {
  KeyValues kv = load_config_file(config_file);
  set_if(kv, "log", log);
  const StudyConfig config = study_config_from(kv);
  std::vector<std::string> arms{kControlArm};
  for (auto k : config.treatment_kinds) arms.push_back(to_string(k));
  const std::vector<StudyMode> modes(config.modes.begin(), config.modes.end());
  std::ifstream in(config.log_path);
  if (!in) throw DataError("cannot open response log '" + config.log_path + "'");
  const auto report = score_study(parse_response_log(in, config.log_path), config.task_preds, study_sample(config),
                                  arms, modes);
  std::cout << render_table(report);
  for (const auto& note : report.notes) std::cerr << "note: " << note << "\n";
  if (!output.empty()) {
    ReportDocument doc;
    doc.dataset_name = std::filesystem::path(kv.count("test") ? unquote(kv.at("test")) : "").stem().string();
    doc.reports.push_back(report);
    doc.provenance = {{"study_config", kv}, {"tool_version", kToolVersion}};
    doc.run_id = make_run_id(doc.provenance);
    doc.created_at = utc_timestamp();
    emit_json(doc, output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frame: meta-evaluation of rationale-label consistency metrics"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run-axiom", "run one axiom over the metric configurations");
  run->add_option("axiom", rf.axiom, "axiom number (1, 2 or 3)")->required()->check(CLI::Range(1, 3));
  run->add_option("--config", rf.config, "key = value config file; flags override it");
  run->add_option("--synthetic", rf.synthetic, "synthetic task, e.g. n=500,m=3[,kind=multi_choice][,aux=500]");
  run->add_option("--train", rf.train, "train split JSONL");
  run->add_option("--test", rf.test, "test split JSONL");
  run->add_option("--aux", rf.aux, "auxiliary pretraining corpus JSONL");
  run->add_option("--task-kind", rf.task_kind, "closed_set or multi_choice");
  run->add_option("--task-preds", rf.task_preds, "external task predictions ({seed}, {setting} expand)");
  run->add_option("--task-train-preds", rf.task_train_preds, "external task predictions on the train split");
  run->add_option("--configs", rf.configs, "comma-separated metric configurations");
  run->add_option("--seeds", rf.seeds, "seed count, or a [list]");
  run->add_option("--banks", rf.banks, "comma-separated paraphrase bank files");
  run->add_option("--output", rf.output, "output directory");
  run->add_option("--train-fractions", rf.train_fractions, "axiom 3 train fraction sweep");
  run->add_option("--noise-fractions", rf.noise_fractions, "axiom 3 label noise sweep");
  run->add_option("--capacities", rf.capacities, "axiom 3 capacity sweep");
  run->add_option("--dataset-name", rf.dataset_name, "dataset name recorded in the report");
  run->add_option("--capacity", rf.capacity, "default model capacity");
  run->add_option("--jobs", rf.jobs, "worker threads (default FRAME_JOBS or all cores)");
  run->add_option("--epochs", rf.epochs, "SGD epochs");
  run->add_option("--learning-rate", rf.lr, "SGD learning rate");
  run->add_flag("--quiet", rf.quiet, "do not print the table");

  std::string enc_in, enc_out, enc_kind = "closed_set", enc_preds, enc_preds_out;
  int shift = 1;
  auto* enc = app.add_subcommand("encrypt", "Caesar-shift every text field of a dataset");
  enc->add_option("input", enc_in, "dataset JSONL")->required();
  enc->add_option("--output,-o", enc_out, "encrypted dataset path")->required();
  enc->add_option("--task-kind", enc_kind, "closed_set or multi_choice");
  enc->add_option("--shift", shift, "shift (default 1)");
  enc->add_option("--predictions", enc_preds, "also encrypt this predictions file");
  enc->add_option("--predictions-output", enc_preds_out, "encrypted predictions path");

  std::size_t gn = 500, gm = 3;
  std::uint64_t gseed = 0;
  std::string gkind = "closed_set", gdir = "synthetic";
  bool gpreds = false;
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic task to disk");
  gen->add_option("--n", gn, "total instances (80/20 train/test)");
  gen->add_option("--m", gm, "number of classes or choices");
  gen->add_option("--seed", gseed, "generator seed");
  gen->add_option("--kind", gkind, "closed_set or multi_choice");
  gen->add_option("--output-dir", gdir, "output directory");
  gen->add_flag("--with-preds", gpreds, "also train the toy task model and write its predictions");

  std::string serve_cfg, serve_log;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve-annotation", "serve the human-simulator study over HTTP");
  serve->add_option("config", serve_cfg, "study config file")->required();
  serve->add_option("--port", serve_port, "override the configured port");
  serve->add_option("--log", serve_log, "override the response log path");

  std::string score_cfg, score_log, score_out;
  auto* score = app.add_subcommand("score-human-study", "score a response log");
  score->add_option("config", score_cfg, "study config file")->required();
  score->add_option("--log", score_log, "response log (default: from the config)");
  score->add_option("--output", score_out, "write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run_axiom(rf);
    if (*enc) return cmd_encrypt(enc_in, enc_out, enc_kind, shift, enc_preds, enc_preds_out);
    if (*gen) return cmd_gen_synthetic(gn, gm, gseed, gkind, gdir, gpreds);
    if (*serve) return cmd_serve(serve_cfg, serve_port, serve_log);
    if (*score) return cmd_score(score_cfg, score_log, score_out);
  } catch (const frame::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const frame::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
