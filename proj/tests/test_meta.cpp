#include <catch_amalgamated.hpp>

#include <random>

#include "frame/meta.hpp"

using namespace frame;
using Catch::Approx;

namespace {

std::vector<double> nrg_of(std::vector<std::vector<double>> cols, std::vector<Direction> dirs) {
  std::vector<std::vector<double>> rows(cols.front().size(), std::vector<double>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r][c] = cols[c][r];
  }
  return compute_nrg(rows, dirs);
}

}  // namespace

TEST_CASE("MAR") {
  CHECK(compute_mar(90.0, {60.0, 45.0, 90.0}).value == Approx(1.5));
  CHECK(compute_mar(70.0, {70.0, 70.0, 70.0}).value == Approx(1.0));
  const auto r = compute_mar(50.0, {0.0, 50.0});
  CHECK(r.value == Approx(1.0));
  CHECK(r.excluded == 1);
  CHECK(r.terms == 1);
  CHECK_THROWS_AS(compute_mar(50.0, {0.0, 0.0}), DataError);
  CHECK_THROWS_AS(compute_mar(50.0, {}), DataError);
  CHECK(compute_mar(make_accuracy(9, 10), {make_accuracy(6, 10)}).value == Approx(1.5));
}

TEST_CASE("ASD") {
  CHECK(compute_asd(54.77, 54.77) == 0.0);
  CHECK(compute_asd(40.0, -0.83) == Approx(40.83));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng);
    CHECK(compute_asd(a, b) == compute_asd(b, a));
    CHECK(compute_asd(a, b) >= 0.0);
  }
}

TEST_CASE("SCV") {
  CHECK(*compute_scv({5, 5, 5}).value == 0.0);
  CHECK(*compute_scv({10, 20, 30}).value == Approx(0.5));
  CHECK(*compute_scv({50, 60}).value == Approx(0.128565).margin(1e-5));
  const auto zero = compute_scv({-1, 1});
  CHECK_FALSE(zero.value.has_value());
  CHECK_FALSE(zero.undefined_reason.empty());
  CHECK_THROWS_AS(compute_scv({1}), DataError);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.5, 100), scale(0.01, 50);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(4);
    for (auto& x : v) x = u(rng);
    const double c = scale(rng);
    auto w = v;
    for (auto& x : w) x *= c;
    CHECK(*compute_scv(w).value == Approx(*compute_scv(v).value).margin(1e-9));
  }
}

TEST_CASE("NRG on e-SNLI consistency and perturbation columns") {
  const auto t1 = nrg_of({{-7.27, -1.70, 9.10, 54.77}, {1.45, 1.01, 1.01, 1.15}},
                         {Direction::higher_better, Direction::higher_better});
  const std::vector<double> want1{0.50, 0.04, 0.13, 0.66};
  for (std::size_t i = 0; i < 4; ++i) CHECK(t1[i] == Approx(want1[i]).margin(0.01));

  const auto t2 = nrg_of({{11.80, 6.10, 0.00, 0.07}, {12.50, 40.53, 5.23, 40.83}},
                         {Direction::lower_better, Direction::higher_better});
  const std::vector<double> want2{0.10, 0.74, 0.50, 1.00};
  for (std::size_t i = 0; i < 4; ++i) CHECK(t2[i] == Approx(want2[i]).margin(0.01));
}

TEST_CASE("NRG edge cases") {
  CHECK(nrg_of({{1.0, 2.0}}, {Direction::higher_better}) == std::vector<double>{0.0, 1.0});
  CHECK(nrg_of({{1.0, 2.0}}, {Direction::lower_better}) == std::vector<double>{1.0, 0.0});
  CHECK(nrg_of({{3.0, 3.0, 3.0}}, {Direction::higher_better}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK_THROWS_AS(compute_nrg(std::vector<std::vector<double>>{{1.0}}, {Direction::higher_better}), DataError);
  CHECK_THROWS_AS(compute_nrg(std::vector<std::vector<double>>{{1.0}, {2.0}}, {}), DataError);

  // Undefined cells drop out of their column and row.
  const auto partial = compute_nrg({{1.0, std::nullopt}, {2.0, 4.0}, {3.0, 2.0}},
                                   {Direction::higher_better, Direction::higher_better});
  CHECK(*partial[0] == Approx(0.0));
  CHECK(*partial[1] == Approx(0.75));
  CHECK(*partial[2] == Approx(0.5));
  const auto none = compute_nrg({{std::nullopt}, {1.0}}, {Direction::higher_better});
  CHECK_FALSE(none[0].has_value());
}

TEST_CASE("NRG is invariant to positive affine column rescaling") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50), a(0.1, 10);
  for (int probe = 0; probe < 100; ++probe) {
    std::vector<std::vector<double>> m(4, std::vector<double>(3));
    for (auto& row : m) {
      for (auto& x : row) x = u(rng);
    }
    const std::vector<Direction> dirs{Direction::higher_better, Direction::lower_better, Direction::higher_better};
    auto scaled = m;
    for (std::size_t c = 0; c < 3; ++c) {
      const double mul = a(rng), add = u(rng);
      for (auto& row : scaled) row[c] = row[c] * mul + add;
    }
    const auto x = compute_nrg(m, dirs), y = compute_nrg(scaled, dirs);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == Approx(x[i]).margin(1e-9));
  }
}

TEST_CASE("NRG of a dominating config is at least that of a dominated one") {
  const auto n = compute_nrg(std::vector<std::vector<double>>{{5, 1}, {3, 2}, {1, 3}},
                             {Direction::higher_better, Direction::lower_better});
  CHECK(n[0] == 1.0);
  CHECK(n[2] == 0.0);
  CHECK(n[0] >= n[1]);
}

TEST_CASE("aggregate_seeds") {
  const auto s = aggregate_seeds({1, 2, 3});
  CHECK(s.mean == 2.0);
  CHECK(s.std == 1.0);
  CHECK_FALSE(s.single_seed);
  const auto one = aggregate_seeds({7});
  CHECK(one.mean == 7.0);
  CHECK(one.std == 0.0);
  CHECK(one.single_seed);
  CHECK(aggregate_seeds({3, 1, 2}).mean == s.mean);
  CHECK_THROWS_AS(aggregate_seeds({}), DataError);
}

TEST_CASE("finalize_report fills stats and NRG") {
  AxiomReport r;
  r.columns = columns::axiom1();
  r.rows = {{"A", {{"phi_ref", {{10.0, 20.0}, {}, {}}}, {"mar", {{1.0, 1.0}, {}, {}}}}},
            {"B", {{"phi_ref", {{30.0, std::nullopt}, {}, {}}}, {"mar", {{std::nullopt}, {}, "all zero"}}}}};
  finalize_report(r);
  CHECK(r.mean("A", "phi_ref") == 15.0);
  CHECK(r.cell("B", "phi_ref")->stats->single_seed);
  CHECK_FALSE(r.cell("B", "mar")->stats.has_value());
  CHECK(r.cell("B", "mar")->undefined_reason == "all zero");
  CHECK(r.nrg.at("A") == Approx(0.25));  // phi 0, lone MAR 0.5
  CHECK(r.nrg.at("B") == Approx(1.0));   // undefined MAR left out
}
