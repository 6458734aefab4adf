#include <catch_amalgamated.hpp>

#include "frame/reports.hpp"
#include "test_util.hpp"

using namespace frame;
using Catch::Matchers::ContainsSubstring;
using frame::testing::TempDir;

namespace {

CellValue cell(std::vector<std::optional<double>> seeds, std::string reason = {}) {
  return {std::move(seeds), std::nullopt, std::move(reason)};
}

AxiomReport axiom1_report() {
  AxiomReport r;
  r.axiom = 1;
  r.columns = columns::axiom1();
  r.seeds = {0, 1, 2};
  r.rows = {{"F-Gold", {{"phi_ref", cell({-7.0, -7.5, -7.3})}, {"mar", cell({1.45, 1.44, 1.46})}}},
            {"GH-Gold", {{"phi_ref", cell({-1.7, 5.0, -8.4})}, {"mar", cell({1.0, 1.1, 0.93})}}},
            {"NP-GH-Pred", {{"phi_ref", cell({50.0, 59.0, 55.31})}, {"mar", cell({1.15, 1.16, 1.14})}}}};
  PhiResult p;
  p.config_name = "F-Gold";
  p.rationale = "reference";
  p.control = make_accuracy(10, 10);
  p.treatment = make_accuracy(3, 10);
  p.phi = -70.0;
  r.phi_results.push_back(p);
  PhiResult undefined;
  undefined.config_name = "GH-Gold";
  undefined.subpopulation = Subpopulation::incorrect;
  undefined.undefined_reason = "subpopulation 'incorrect' is empty";
  r.phi_results.push_back(undefined);
  r.notes = {"a note"};
  finalize_report(r);
  return r;
}

ReportDocument document(AxiomReport r) {
  ReportDocument d;
  d.dataset_name = "toy";
  d.reports.push_back(std::move(r));
  d.provenance = {{"config", {{"axiom", 1}}}, {"tool_version", kToolVersion}};
  d.run_id = make_run_id(d.provenance);
  d.created_at = "2026-01-01T00:00:00Z";
  return d;
}

}  // namespace

TEST_CASE("report documents round-trip through JSON") {
  const auto d = document(axiom1_report());
  TempDir dir;
  emit_json(d, dir.path() / "r.json");
  const auto back = load_report(dir.path() / "r.json");
  CHECK(back == d);
  CHECK(back.reports[0].phi_results[1].undefined_reason == "subpopulation 'incorrect' is empty");
  CHECK(back.reports[0].phi_results[0].control->correct == 10);

  emit_json(back, dir.path() / "again.json");
  CHECK(read_text_file((dir.path() / "r.json").string()) == read_text_file((dir.path() / "again.json").string()));
  CHECK(canonical_json(d).back() == '\n');
  CHECK(d.run_id.size() == 16);
  CHECK(make_run_id(d.provenance) == d.run_id);

  auto j = to_json(d);
  j["schema_version"] = "9.9";
  write_text_file((dir.path() / "v.json").string(), j.dump());
  CHECK_THROWS_AS(load_report(dir.path() / "v.json"), DataError);
  write_text_file((dir.path() / "bad.json").string(), "{");
  CHECK_THROWS_AS(load_report(dir.path() / "bad.json"), DataError);
}

TEST_CASE("undefined cells serialize as null with a reason") {
  auto r = axiom1_report();
  r.rows[1].values["mar"] = cell({std::nullopt, std::nullopt, std::nullopt}, "every non-reference accuracy is zero");
  finalize_report(r);
  const auto j = to_json(r);
  const auto& mar = j["rows"][1]["values"]["mar"];
  CHECK(mar["mean"].is_null());
  CHECK(mar["std"].is_null());
  CHECK(mar["undefined_reason"] == "every non-reference accuracy is zero");
  CHECK(j["rows"][0]["values"]["mar"]["undefined_reason"].is_null());
  CHECK(axiom_report_from_json(j).cell("GH-Gold", "mar")->undefined_reason == "every non-reference accuracy is zero");
}

TEST_CASE("markdown table layout and formatting") {
  const auto table = render_table(axiom1_report());
  CHECK_THAT(table, ContainsSubstring("| Config | $\\Phi(\\hat{y})$ (↑) | MAR (↑) | NRG (↑) |"));
  CHECK_THAT(table, ContainsSubstring("**54.77 (±4.52)**"));
  CHECK_THAT(table, ContainsSubstring("| F-Gold | -7.27 (±0.25) |"));
  CHECK_THAT(table, ContainsSubstring("*-1.70 (±6.70)*"));
  CHECK_THAT(table, ContainsSubstring("**1.45 (±0.01)**"));
  CHECK(format_2dp(-0.001) == "0.00");
  CHECK(format_2dp(54.771) == "54.77");

  AxiomReport one;
  one.columns = columns::axiom1();
  one.rows = {{"GH-Pred", {{"phi_ref", {{54.771}, SeedStats{54.771, 4.266, 3, false}, {}}},
                           {"mar", {{1.0}, SeedStats{1.0, 0.0, 1, true}, {}}}}}};
  const auto single = render_table(one);
  CHECK_THAT(single, ContainsSubstring("**54.77 (±4.27)**"));
  CHECK_THAT(single, ContainsSubstring("| **1.00** |"));
  CHECK(single.find("*54.77") == single.find("**54.77") + 1);
  CHECK_THAT(single, ContainsSubstring("single seed"));
  CHECK_THAT(single, ContainsSubstring("needs at least two configurations"));
}

TEST_CASE("undefined cells render as dashes with footnotes") {
  auto r = axiom1_report();
  r.rows[2].values["mar"] = cell({std::nullopt}, "all zero");
  finalize_report(r);
  const auto table = render_table(r);
  CHECK_THAT(table, ContainsSubstring("—[^1]"));
  CHECK_THAT(table, ContainsSubstring("[^1]: undefined, NP-GH-Pred, mar: all zero"));
}

TEST_CASE("table styles follow the report") {
  auto r = axiom1_report();
  CHECK_THROWS_AS(render_table(r, TableStyle::axiom2), UsageError);
  CHECK_THROWS_AS(parse_table_style("axiom9"), UsageError);
  CHECK(parse_table_style("human") == TableStyle::human);

  AxiomReport a2;
  a2.axiom = 2;
  a2.columns = columns::axiom2();
  CHECK_THAT(render_table(a2), ContainsSubstring("| Config | Equivalent ASD (↓) | Contrastive ASD (↑) | NRG (↑) |"));
  AxiomReport a3;
  a3.axiom = 3;
  a3.columns = columns::axiom3();
  CHECK_THAT(render_table(a3), ContainsSubstring("Capacity SCV (↓) | Subpop. ASD (↓) | NRG (↑) |"));
  AxiomReport h;
  h.simulator_kind = "human";
  h.columns = columns::human();
  const auto ht = render_table(h, TableStyle::human);
  CHECK(ht.find("NRG") == std::string::npos);
  CHECK(h.columns.size() == 7);
}

TEST_CASE("curves CSV") {
  AxiomReport r;
  r.curves = {{"train_fraction:0.5", "GH-Pred", 1, 12.5}, {"capacity:small", "NP-GH-Pred", 0, std::nullopt}};
  CHECK(curves_csv(r) ==
        "setting,config,seed,phi\n"
        "train_fraction:0.5,GH-Pred,1,12.500000\n"
        "capacity:small,NP-GH-Pred,0,\n");
}
