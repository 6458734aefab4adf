#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>

#include "frame/reports.hpp"
#include "test_util.hpp"

using namespace frame;
using Catch::Matchers::ContainsSubstring;
using frame::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(FRAME_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_CASE("run-axiom 1 writes a report and table") {
  TempDir dir;
  const auto out = dir.file("out");
  const auto r = cli("run-axiom 1 --synthetic n=100,m=3 --seeds 1 --configs gh-pred,np-gh-pred --jobs 2 --output " + out);
  INFO(r.output);
  REQUIRE(r.code == 0);
  CHECK_THAT(r.output, ContainsSubstring("| NP-GH-Pred |"));
  const auto doc = load_report(out + "/axiom1.json");
  REQUIRE(doc.reports.size() == 1);
  CHECK(doc.reports[0].rows.size() == 2);
  CHECK(doc.dataset_name == "synthetic-closed_set-n100-m3");
  CHECK(std::filesystem::exists(out + "/axiom1.md"));
}

TEST_CASE("repeated runs are byte-identical apart from the timestamp") {
  TempDir dir;
  const std::string args = "run-axiom 2 --synthetic n=100,m=3 --seeds 2 --configs gh-pred --quiet --output ";
  REQUIRE(cli(args + dir.file("a")).code == 0);
  REQUIRE(cli(args + dir.file("b") + " --jobs 1").code == 0);
  auto a = load_report(dir.file("a") + "/axiom2.json");
  auto b = load_report(dir.file("b") + "/axiom2.json");
  a.created_at = b.created_at = "";
  // jobs is an execution knob and is excluded from provenance.
  CHECK(canonical_json(a) == canonical_json(b));
  CHECK(a.run_id == b.run_id);
}

TEST_CASE("run-axiom 3 writes curves") {
  TempDir dir;
  const auto r = cli("run-axiom 3 --synthetic n=100,m=3 --seeds 1 --configs gh-pred --train-fractions 1,0.5 "
                     "--noise-fractions [] --capacities [] --epochs 2 --quiet --output " + dir.file("o"));
  INFO(r.output);
  REQUIRE(r.code == 0);
  const auto csv = read_text_file(dir.file("o") + "/axiom3_curves.csv");
  CHECK(csv.rfind("setting,config,seed,phi\n", 0) == 0);
  CHECK_THAT(csv, ContainsSubstring("train_fraction:0.5,GH-Pred,0,"));
}

TEST_CASE("encrypt shifts text fields") {
  TempDir dir;
  Dataset d;
  d.task_kind = TaskKind::closed_set;
  d.label_space = {"hello", "world"};
  d.instances = {frame::testing::closed_instance("a", "hello", "hello", {"hello", "world"})};
  d.instances[0].gold_rationale = "hello";
  save_dataset(d, dir.file("in.jsonl"));
  const auto r = cli("encrypt " + dir.file("in.jsonl") + " -o " + dir.file("enc.jsonl"));
  INFO(r.output);
  REQUIRE(r.code == 0);
  const auto e = load_dataset(dir.file("enc.jsonl"), TaskKind::closed_set);
  CHECK(e.instances[0].input_text == "ifmmp");
  CHECK(e.instances[0].gold_label == "ifmmp");
  CHECK(e.instances[0].id == "a");
}

TEST_CASE("exit codes and error messages") {
  TempDir dir;
  auto r = cli("run-axiom 2 --synthetic n=60,m=3 --seeds 1 --configs gh-pred --banks " + dir.file("missing_bank.jsonl") +
               " --output " + dir.file("o"));
  CHECK(r.code == 2);
  CHECK_THAT(r.output, ContainsSubstring("missing_bank.jsonl"));

  CHECK(cli("run-axiom 4").code == 1);
  CHECK(cli("").code == 1);
  CHECK(cli("run-axiom 1 --synthetic n=60 --configs nonsense").code == 1);
  r = cli("run-axiom 1 --test " + dir.file("nope.jsonl") + " --train " + dir.file("nope.jsonl"));
  CHECK(r.code == 2);
  CHECK_THAT(r.output, ContainsSubstring("nope.jsonl"));
  CHECK(cli("--help").code == 0);
}
