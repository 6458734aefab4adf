#include <catch_amalgamated.hpp>

#include "frame/annotation_server.hpp"
#include "test_util.hpp"

using namespace frame;
using Catch::Approx;
using frame::testing::TempDir;

namespace {

const std::vector<std::string> kChoices{"lantern", "meadow", "harbor"};

// Twelve multi-choice items. Gold is always the first choice; the task
// model predicts the first choice on even items and the second on odd ones.
StudyConfig make_config(const std::string& log) {
  StudyConfig c;
  c.test.task_kind = TaskKind::multi_choice;
  for (int i = 0; i < 12; ++i) {
    TaskInstance inst;
    inst.id = "q" + std::to_string(i);
    inst.task_kind = TaskKind::multi_choice;
    inst.input_text = "which object would travelers remember from journey " + std::to_string(i) + "?";
    inst.choices = kChoices;
    inst.gold_label = kChoices[0];
    inst.gold_rationale = "travelers carry a " + kChoices[0];
    c.test.instances.push_back(inst);
    const std::string pred = kChoices[i % 2];
    c.task_preds[inst.id] = TaskPrediction{inst.id, pred, "because a " + pred + " stands out", false};
  }
  c.sample_ids = {"q0", "q1", "q2", "q3"};
  c.training_size = 3;
  c.log_path = log;
  c.seed = 7;
  return c;
}

std::string decrypt(StudyMode mode, const std::string& s) {
  return mode == StudyMode::np_gh_pred_human ? caesar_shift(s, 26 - kCaesarShift) : s;
}

std::string encrypt(StudyMode mode, const std::string& s) {
  return mode == StudyMode::np_gh_pred_human ? caesar_shift(s, kCaesarShift) : s;
}

const TaskInstance& by_input(const StudyConfig& c, const std::string& input) {
  for (const auto& inst : c.test.instances) {
    if (inst.input_text == input) return inst;
  }
  throw std::runtime_error("no instance with input " + input);
}

// Control: always the first choice. Treatment arms: the task prediction.
// Training items: the shown target.
struct Answer {
  std::string label;
  int confidence;
};

Answer scripted(const StudyConfig& c, const nlohmann::json& item) {
  const auto mode = parse_study_mode(item["mode"].get<std::string>());
  if (item["phase"] == "train") return {item["target"].get<std::string>(), 1};
  const auto& inst = by_input(c, decrypt(mode, item["input"].get<std::string>()));
  if (item["arm"] == kControlArm) return {encrypt(mode, inst.choices[0]), 2};
  const int conf = item["arm"] == "reference" ? 4 : 3;
  return {encrypt(mode, c.task_preds.at(inst.id).pred_label), conf};
}

nlohmann::json json_of(const httplib::Result& r) {
  REQUIRE(r);
  return nlohmann::json::parse(r->body);
}

// Drives one annotator to completion over HTTP; returns payloads seen.
std::vector<nlohmann::json> run_annotator(httplib::Client& cli, const StudyConfig& c, StudyMode mode,
                                          const std::string& annotator) {
  const auto open = cli.Post("/session", nlohmann::json{{"mode", to_string(mode)}, {"annotator_id", annotator}}.dump(),
                             "application/json");
  REQUIRE(open);
  REQUIRE(open->status == 201);
  const std::string session = json_of(open)["session"];
  std::vector<nlohmann::json> seen;
  for (;;) {
    const auto next = json_of(cli.Get("/session/" + session + "/next"));
    if (next["done"].get<bool>()) break;
    seen.push_back(next);
    const auto a = scripted(c, next);
    const auto res = cli.Post("/session/" + session + "/response",
                              nlohmann::json{{"item", next["item"]}, {"predicted_label", a.label},
                                             {"confidence", a.confidence}}
                                  .dump(),
                              "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
  }
  return seen;
}

AnnotatorResponse resp(std::string who, StudyMode mode, std::string id, std::string arm, std::string label,
                       int conf = 2) {
  return {std::move(who), "s", std::move(id), mode, std::move(arm), "score", std::move(label), conf, ""};
}

}  // namespace

TEST_CASE("score_study on a hand-built log") {
  const auto c = make_config("/dev/null");
  const std::vector<std::string> sample{"q0", "q1", "q2", "q3"};
  const std::vector<std::string> arms{kControlArm, "pred_rationale", "reference"};
  std::vector<AnnotatorResponse> log;
  for (const auto& id : sample) {
    const auto& yhat = c.task_preds.at(id).pred_label;
    log.push_back(resp("a1", StudyMode::gh_gold_human, id, kControlArm, kChoices[0], 1));
    log.push_back(resp("a1", StudyMode::gh_gold_human, id, "pred_rationale", kChoices[2], 3));
    log.push_back(resp("a1", StudyMode::gh_gold_human, id, "reference", yhat, 4));
    // a2 gives the same answer everywhere: every accuracy equal.
    for (const auto& arm : arms) log.push_back(resp("a2", StudyMode::gh_gold_human, id, arm, yhat));
    // a3 never finishes.
    log.push_back(resp("a3", StudyMode::gh_gold_human, id, kControlArm, yhat));
  }
  // NP labels are logged as shown (shifted).
  for (const auto& id : sample) {
    for (const auto& arm : arms) {
      log.push_back(resp("n1", StudyMode::np_gh_pred_human, id, arm, caesar_shift(c.task_preds.at(id).pred_label, 1)));
    }
  }

  const auto r = score_study(log, c.task_preds, sample, arms);
  CHECK(r.simulator_kind == "human");
  const auto* phi = r.cell("GH-Gold-Human", "phi_ref");
  REQUIRE(phi->per_seed.size() == 2);
  CHECK(*phi->per_seed[0] == 50.0);  // control 2/4, reference 4/4
  CHECK(*phi->per_seed[1] == 0.0);
  const auto* mar = r.cell("GH-Gold-Human", "mar");
  CHECK_FALSE(mar->per_seed[0].has_value());  // pred_rationale arm scored 0
  CHECK(*mar->per_seed[1] == 1.0);
  CHECK(*r.cell("GH-Gold-Human", "conf_reference")->per_seed[0] == 4.0);
  CHECK(*r.cell("GH-Gold-Human", "conf_control")->per_seed[0] == 1.0);
  CHECK(std::any_of(r.notes.begin(), r.notes.end(), [](const auto& n) { return n.find("a3") != std::string::npos; }));
  CHECK(r.mean("NP-GH-Pred-Human", "acc_reference") == 100.0);
  CHECK(r.mean("NP-GH-Pred-Human", "mar") == 1.0);

  const auto empty = score_study({}, c.task_preds, sample, arms);
  CHECK(empty.cell("GH-Gold-Human", "phi_ref")->undefined_reason == "no annotator completed every arm in this mode");
  CHECK_THROWS_AS(score_study(log, c.task_preds, {}, arms), DataError);
}

TEST_CASE("study sequencing and sampling") {
  TempDir dir;
  Study study(make_config(dir.file("log.jsonl")));
  CHECK(study.sample() == std::vector<std::string>{"q0", "q1", "q2", "q3"});
  REQUIRE(study.training().size() == 3);
  for (const auto& id : study.training()) {
    CHECK(std::find(study.sample().begin(), study.sample().end(), id) == study.sample().end());
  }
  const auto gh = study.sequence("ann", StudyMode::gh_gold_human);
  CHECK(gh.size() == 4 * 5);
  for (std::size_t i = 0; i < gh.size(); i += 5) {
    CHECK(gh[i].arm == kControlArm);
    std::set<std::string> block;
    for (std::size_t k = i; k < i + 5; ++k) {
      CHECK(gh[k].instance_id == gh[i].instance_id);
      block.insert(gh[k].arm);
    }
    CHECK(block.size() == 5);
  }
  const auto np = study.sequence("ann", StudyMode::np_gh_pred_human);
  CHECK(np.size() == 3 * 5 + 4 * 5);
  CHECK(np.front().phase == "train");
  CHECK(np.back().phase == "score");
  CHECK(study.sequence("ann", StudyMode::gh_gold_human).front().instance_id == gh.front().instance_id);

  auto sampled = make_config(dir.file("other.jsonl"));
  sampled.sample_ids.clear();
  sampled.sample_size = 5;
  const auto a = study_sample(sampled);
  CHECK(a.size() == 5);
  CHECK(study_sample(sampled) == a);
  sampled.sample_size = 13;
  CHECK_THROWS_AS(study_sample(sampled), DataError);
  sampled.sample_ids = {"q1", "zz"};
  CHECK_THROWS_AS(study_sample(sampled), DataError);
}

TEST_CASE("live service: scripted annotators, validation and results") {
  TempDir dir;
  const auto config = make_config(dir.file("log.jsonl"));
  Study study(config);
  AnnotationServer server(study);
  const int port = server.bind("127.0.0.1", 0);
  server.start_background();
  httplib::Client cli("127.0.0.1", port);

  CHECK(json_of(cli.Get("/healthz"))["status"] == "ok");

  SECTION("five GH annotators and two NP annotators") {
    for (int a = 0; a < 5; ++a) {
      const auto seen = run_annotator(cli, config, StudyMode::gh_gold_human, "gh-" + std::to_string(a));
      CHECK(seen.size() == 20);
      for (const auto& item : seen) CHECK_FALSE(item.contains("instance_id"));
    }
    std::set<std::string> plaintext;
    for (const auto& inst : config.test.instances) {
      for (const auto& t : tokenize(inst.input_text + " " + *inst.gold_rationale + " " +
                                    config.task_preds.at(inst.id).pred_rationale.value_or(""))) {
        if (t.size() >= 4) plaintext.insert(t);
      }
      for (const auto& ch : inst.choices) plaintext.insert(ch);
    }
    for (int a = 0; a < 2; ++a) {
      const auto seen = run_annotator(cli, config, StudyMode::np_gh_pred_human, "np-" + std::to_string(a));
      CHECK(seen.size() == 35);
      for (const auto& item : seen) {
        std::string text = item["input"].get<std::string>() + " " + item["rationale"].dump() + " " +
                           item["choices"].dump() + " " + item["target"].dump();
        for (const auto& t : tokenize(text)) CHECK_FALSE(plaintext.count(t));
      }
    }

    const auto results = json_of(cli.Get("/study/results"));
    const auto report = axiom_report_from_json(results);
    CHECK(report.columns.size() == 7);
    for (const char* mode : {"GH-Gold-Human", "NP-GH-Pred-Human"}) {
      CHECK(report.mean(mode, "phi_ref") == 50.0);
      CHECK(report.mean(mode, "mar") == 1.0);
      CHECK(report.mean(mode, "conf_reference") == 4.0);
      CHECK(report.mean(mode, "conf_control") == 2.0);
    }
    CHECK(report.cell("GH-Gold-Human", "phi_ref")->per_seed.size() == 5);
    CHECK(score_study(study).cell("NP-GH-Pred-Human", "phi_ref")->per_seed.size() == 2);
    CHECK(study.responses().size() == 5 * 20 + 2 * 35);
  }

  SECTION("response validation") {
    const auto open = json_of(cli.Post("/session", R"({"mode":"gh_gold_human","annotator_id":"v"})", "application/json"));
    const std::string base = "/session/" + open["session"].get<std::string>();
    auto post = [&](const nlohmann::json& body) { return cli.Post(base + "/response", body.dump(), "application/json"); };

    CHECK(post({{"item", 0}, {"predicted_label", "lantern"}, {"confidence", 2}})->status == 409);  // not served yet
    const auto item = json_of(cli.Get(base + "/next"));
    CHECK(post({{"item", 0}, {"predicted_label", "lantern"}, {"confidence", 5}})->status == 400);
    CHECK(post({{"item", 0}, {"predicted_label", "lantern"}, {"confidence", 0}})->status == 400);
    CHECK(post({{"item", 0}, {"predicted_label", "volcano"}, {"confidence", 2}})->status == 400);
    CHECK(post({{"item", 0}, {"predicted_label", "lantern"}})->status == 400);
    CHECK(post({{"item", 3}, {"predicted_label", "lantern"}, {"confidence", 2}})->status == 409);
    CHECK(cli.Post(base + "/response", "{oops", "application/json")->status == 400);
    CHECK(post({{"item", 0}, {"predicted_label", "lantern"}, {"confidence", 2}})->status == 200);
    CHECK(post({{"item", 0}, {"predicted_label", "lantern"}, {"confidence", 2}})->status == 409);
    CHECK(cli.Get("/session/nope/next")->status == 404);
    CHECK(cli.Post("/session", R"({"mode":"bogus"})", "application/json")->status == 400);
    CHECK(cli.Post("/session", R"({})", "application/json")->status == 400);
    CHECK(item["item"] == 0);
    CHECK(study.responses().size() == 1);
  }

  SECTION("a second server cannot bind the same port") {
    Study other(make_config(dir.file("other.jsonl")));
    AnnotationServer second(other);
    CHECK_THROWS_WITH(second.bind("127.0.0.1", port), Catch::Matchers::ContainsSubstring("port in use"));
  }
  server.stop();
}

TEST_CASE("restart resumes from the response log") {
  TempDir dir;
  const auto config = make_config(dir.file("log.jsonl"));
  {
    Study study(config);
    const auto s = study.open_session(StudyMode::gh_gold_human, "ann");
    for (int i = 0; i < 7; ++i) {
      const auto item = study.next_item(s.session_id);
      const auto a = scripted(config, item);
      study.submit_response(s.session_id, {{"item", i}, {"predicted_label", a.label}, {"confidence", a.confidence}});
    }
  }
  CHECK(load_response_log(dir.file("log.jsonl")).size() == 7);
  Study again(config);
  CHECK(again.responses().size() == 7);
  const auto s = again.open_session(StudyMode::gh_gold_human, "ann");
  CHECK(s.position == 7);
  CHECK(again.next_item(s.session_id)["item"] == 7);
  const auto fresh = again.open_session(StudyMode::gh_gold_human, "someone-else");
  CHECK(fresh.position == 0);
  CHECK_THROWS_AS(again.submit_response(s.session_id, {{"item", 3}, {"predicted_label", "lantern"}, {"confidence", 1}}),
                  StudyError);
}

TEST_CASE("study config file") {
  TempDir dir;
  const auto c = make_config(dir.file("log.jsonl"));
  save_dataset(c.test, dir.file("test.jsonl"));
  write_text_file(dir.file("preds.jsonl"), serialize_predictions(c.task_preds, c.test));
  const auto kv = parse_key_values("test = " + dir.file("test.jsonl") + "\ntask_preds = " + dir.file("preds.jsonl") +
                                   "\nsample_size = 5\nmodes = [gh_gold_human]\narms = [reference, gold_label]\nport = 0\n");
  const auto sc = study_config_from(kv);
  CHECK(sc.test.size() == 12);
  CHECK(sc.sample_size == 5);
  CHECK(sc.modes == std::set<StudyMode>{StudyMode::gh_gold_human});
  CHECK(sc.treatment_kinds == std::vector<RationaleKind>{RationaleKind::reference, RationaleKind::gold_label});
  CHECK_THROWS_AS(study_config_from({{"test", dir.file("test.jsonl")}}), UsageError);
  CHECK_THROWS_AS(study_config_from({{"bogus", "1"}}), UsageError);
}
