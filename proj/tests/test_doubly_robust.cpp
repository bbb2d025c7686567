#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gmethods/doubly_robust.hpp"
#include "gmethods/g_formula.hpp"
#include "gmethods/rng.hpp"
#include "gmethods/scenario.hpp"

using namespace gmethods;

namespace {

NuisancePair both_right() {
  return {NuisanceModel::Saturated(true), NuisanceModel::Saturated(true), 0.0};
}

NuisancePair wrong_pi_right_b() {
  return {NuisanceModel::Logistic({}, false), NuisanceModel::Saturated(true), 0.0};
}

NuisancePair right_pi_wrong_b() {
  return {NuisanceModel::Saturated(true), NuisanceModel::Logistic({"lbit0"}, false), 0.0};
}

NuisancePair both_wrong() {
  return {NuisanceModel::Logistic({}, false), NuisanceModel::Logistic({"lbit0"}, false), 0.0};
}

// A table built so the inverse-probability weights concentrate on one high
// outcome stratum while the outcome model owes it almost nothing. The fitted
// aipw functional lands above 1 even though every input is a proper ML fit.
CellCounts hull_breaker() {
  CellCounts c;
  c.init(2, 4, 2, 2);
  auto put = [&](int l, int a2, int y, double w) {
    c.at(1, l, a2, y) = w;
    c.total += w;
  };
  put(0, 1, 1, 1);
  put(0, 0, 0, 1);
  put(1, 1, 1, 9);
  put(1, 0, 0, 991);
  put(2, 1, 0, 49);
  put(2, 0, 0, 1);
  put(3, 1, 1, 19);
  put(3, 1, 0, 1);
  put(3, 0, 0, 1);
  for (int l = 0; l < 4; ++l)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int y = 0; y < 2; ++y) {
        c.at(0, l, a2, y) = 1;
        c.total += 1;
      }
  return c;
}

}  // namespace

TEST_CASE("every variant recovers the target exactly from the population law") {
  auto spec = builtin_scenario("dr_world");
  auto pop = population_table(spec);
  double mu = oracle_mean(spec, Regime::fixed(1, 1));
  CHECK(mu == doctest::Approx(0.4125).epsilon(1e-12));

  CHECK(aipw(pop, both_right()).value == doctest::Approx(mu).epsilon(1e-12));
  CHECK(regression_dr(pop, both_right()).value == doctest::Approx(mu).epsilon(1e-12));
  CHECK(targeted_dr(pop, both_right()).value == doctest::Approx(mu).epsilon(1e-12));
}

TEST_CASE("one correct nuisance is enough, two wrong ones are not") {
  auto spec = builtin_scenario("dr_world");
  auto pop = population_table(spec);
  double mu = oracle_mean(spec, Regime::fixed(1, 1));

  // an intercept-only treatment model ignores pi(l); lbit0 sees only half
  // the covariate. Either one alone is repaired by the other arm.
  for (auto nuis : {wrong_pi_right_b(), right_pi_wrong_b()}) {
    CHECK(std::abs(aipw(pop, nuis).value - mu) < 1e-9);
    CHECK(std::abs(regression_dr(pop, nuis).value - mu) < 1e-9);
    CHECK(std::abs(targeted_dr(pop, nuis).value - mu) < 1e-9);
  }

  double dw = aipw(pop, both_wrong()).value;
  CHECK(dw == doctest::Approx(0.514375).epsilon(1e-7));
  CHECK(regression_dr(pop, both_wrong()).value == doctest::Approx(0.514375).epsilon(1e-7));
  CHECK(targeted_dr(pop, both_wrong()).value == doctest::Approx(0.514375).epsilon(1e-7));

  // the pure weighting estimator with the same wrong treatment model drifts
  // further: 31/60 against the doubly robust 0.514375.
  NuisancePair ht{NuisanceModel::Logistic({}, false), NuisanceModel::Zero(), 0.0};
  double iptw = aipw(pop, ht).value;
  CHECK(iptw == doctest::Approx(31.0 / 60.0).epsilon(1e-9));
  CHECK(std::abs(dw - mu) < std::abs(iptw - mu));
}

TEST_CASE("a saturated outcome model turns the regression variant into the g-formula") {
  auto spec = builtin_scenario("dr_world");
  auto data = sample(spec, 40000, 11);
  auto cells = CellCounts::from(data);
  auto gf = gformula_static(cells, 1, 1, NuisanceSpec::Saturated());

  auto rep = regression_dr(cells, {NuisanceModel::Logistic({"l@1", "l@2", "l@3"}, false),
                                   NuisanceModel::Saturated(true), 0.0});
  CHECK(rep.clever_dropped);
  CHECK(rep.value == doctest::Approx(gf.value).epsilon(1e-13));

  // and targeting a saturated fit has nothing left to move
  auto tm = targeted_dr(cells, both_right());
  CHECK(tm.theta == doctest::Approx(0.0).scale(1).epsilon(1e-10));
  CHECK(tm.value == doctest::Approx(gf.value).epsilon(1e-10));
}

TEST_CASE("a zero outcome model collapses aipw to horvitz-thompson") {
  auto spec = builtin_scenario("dr_world");
  auto data = sample(spec, 30000, 23);
  auto cells = CellCounts::from(data);

  NuisancePair ht{NuisanceModel::Saturated(true), NuisanceModel::Zero(), 0.0};
  auto rep = aipw(cells, ht);

  // hand-rolled: sum_l m1_l * ybar1_l / pihat_l over the treated arm mass,
  // with pihat the saturated per-stratum a2 frequency.
  double arm = 0, acc = 0;
  for (int l = 0; l < cells.L; ++l) {
    double m = 0, m1 = 0, y1 = 0;
    for (int y = 0; y < cells.Y; ++y) {
      m += cells.at(1, l, 0, y) + cells.at(1, l, 1, y);
      m1 += cells.at(1, l, 1, y);
      y1 += cells.at(1, l, 1, y) * y;
    }
    arm += m;
    if (m1 > 0) acc += y1 / (m1 / m);
  }
  CHECK(rep.value == doctest::Approx(acc / arm).epsilon(1e-12));
}

TEST_CASE("all variants coincide whenever the treatment model is saturated") {
  auto spec = builtin_scenario("dr_world");
  SplitRng rng(901, 0x0d2);
  for (std::uint64_t rep = 0; rep < 12; ++rep) {
    auto data = sample(spec, 4000, rng.child(rep).next_u64());
    auto cells = CellCounts::from(data);
    for (auto b : {NuisanceModel::Saturated(true), NuisanceModel::Logistic({"lbit0"}, false),
                   NuisanceModel::Logistic({"l"}, false)}) {
      NuisancePair nuis{NuisanceModel::Saturated(true), b, 0.0};
      double a = aipw(cells, nuis).value;
      double r = regression_dr(cells, nuis).value;
      double t = targeted_dr(cells, nuis).value;
      CHECK(a == doctest::Approx(r).epsilon(1e-9));
      CHECK(a == doctest::Approx(t).epsilon(1e-9));
    }
  }
}

TEST_CASE("the variants part ways once both nuisances are genuinely parametric") {
  auto spec = builtin_scenario("dr_world");
  auto data = sample(spec, 20000, 77);
  auto cells = CellCounts::from(data);
  NuisancePair nuis{NuisanceModel::Logistic({"lbit1"}, false),
                    NuisanceModel::Logistic({"lbit0"}, false), 0.0};

  auto a = aipw(cells, nuis);
  auto r = regression_dr(cells, nuis);
  auto t = targeted_dr(cells, nuis);

  CHECK(a.value == doctest::Approx(0.397869365824).epsilon(1e-9));
  CHECK(r.value == doctest::Approx(0.394802948991).epsilon(1e-9));
  CHECK(t.value == doctest::Approx(0.398243490350).epsilon(1e-9));
  CHECK(std::abs(a.value - r.value) > 5e-4);
  CHECK(std::abs(a.value - t.value) > 1e-4);
  CHECK(std::abs(r.value - t.value) > 5e-4);
  CHECK_FALSE(r.clever_dropped);
  CHECK(r.theta != doctest::Approx(0.0).scale(1).epsilon(1e-6));
  CHECK(t.theta != doctest::Approx(0.0).scale(1).epsilon(1e-6));
}

TEST_CASE("aipw is a sample mean of its own influence contributions") {
  auto spec = builtin_scenario("dr_world");
  auto data = sample(spec, 15000, 5);
  auto cells = CellCounts::from(data);
  NuisancePair nuis{NuisanceModel::Logistic({"lbit1"}, false),
                    NuisanceModel::Logistic({"lbit0"}, false), 0.0};
  auto rep = aipw(cells, nuis);

  double arm = 0, acc = 0;
  for (int l = 0; l < cells.L; ++l) {
    for (int a2 = 0; a2 < 2; ++a2)
      for (int y = 0; y < 2; ++y) {
        double w = cells.at(1, l, a2, y);
        arm += w;
        double psi = rep.b[static_cast<std::size_t>(l)];
        if (a2 == 1) psi += (y - rep.b[static_cast<std::size_t>(l)]) / rep.pi[static_cast<std::size_t>(l)];
        acc += w * psi;
      }
  }
  CHECK(rep.value == doctest::Approx(acc / arm).epsilon(1e-12));
}

TEST_CASE("aipw can leave the unit interval; the fitted flag says so") {
  auto cells = hull_breaker();
  NuisancePair nuis{NuisanceModel::Logistic({"lbit1"}, false),
                    NuisanceModel::Logistic({"lbit0"}, false), 0.0};
  auto rep = aipw(cells, nuis);
  CHECK(rep.value > 1.0);
  CHECK_FALSE(rep.in_range);

  // the fitted nuisances really are the group ML rates, nothing exotic
  CHECK(rep.pi[0] == doctest::Approx(10.0 / 1012.0).epsilon(1e-9));
  CHECK(rep.pi[2] == doctest::Approx(69.0 / 71.0).epsilon(1e-9));
  CHECK(rep.b[0] == doctest::Approx(0.02).epsilon(1e-7));
  CHECK(rep.b[1] == doctest::Approx(28.0 / 29.0).epsilon(1e-7));

  // with injected rather than fitted nuisances the excursion is unbounded
  CellCounts tiny;
  tiny.init(2, 1, 2, 2);
  tiny.at(1, 0, 1, 1) = 30;
  tiny.at(1, 0, 0, 0) = 70;
  tiny.at(0, 0, 0, 0) = 50;
  tiny.at(0, 0, 1, 1) = 50;
  tiny.total = 200;
  CHECK(aipw_value(tiny, {0.05}, {0.0}) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("the smoothed variants never leave the outcome hull") {
  SplitRng rng(5150, 0xbee);
  int checked = 0;
  for (std::uint64_t sd = 0; sd < 300; ++sd) {
    auto rr = rng.child(sd);
    CellCounts cc;
    cc.init(2, 4, 2, 2);
    cc.total = 0;
    for (int a1 = 0; a1 < 2; ++a1)
      for (int l = 0; l < 4; ++l)
        for (int a2 = 0; a2 < 2; ++a2)
          for (int y = 0; y < 2; ++y) {
            double w = std::floor(rr.uniform() * 8);
            cc.at(a1, l, a2, y) = w;
            cc.total += w;
          }
    for (int variant = 0; variant < 2; ++variant) {
      NuisancePair nn =
          variant ? NuisancePair{NuisanceModel::Logistic({"l@1", "l@2"}, false),
                                 NuisanceModel::Logistic({"lbit0"}, false), 0.0}
                  : NuisancePair{NuisanceModel::Logistic({"lbit1"}, false),
                                 NuisanceModel::Logistic({"lbit0"}, false), 0.0};
      try {
        double v1 = regression_dr(cc, nn).value;
        double v2 = targeted_dr(cc, nn).value;
        CHECK(v1 >= 0.0);
        CHECK(v1 <= 1.0);
        CHECK(v2 >= 0.0);
        CHECK(v2 <= 1.0);
        ++checked;
      } catch (const std::exception&) {
        // sparse tables are allowed to refuse (positivity, separation);
        // they are not allowed to answer outside the hull
      }
    }
  }
  CHECK(checked > 250);
}

TEST_CASE("the monte carlo grid separates the good cells from the bad one") {
  auto spec = builtin_scenario("dr_world");
  auto grid = dr_grid(spec, 100000, 200, 4242);

  CHECK(grid.oracle == doctest::Approx(0.4125).epsilon(1e-12));
  CHECK(grid.n == 100000);
  CHECK(grid.replications == 200);
  REQUIRE(grid.cells.size() == 4);

  for (const auto& cell : grid.cells) {
    bool good = cell.pi_correct || cell.b_correct;
    for (int k = 0; k < 3; ++k) {
      if (good) {
        CHECK(std::abs(cell.bias[k]) < 3.0 * cell.mc_se[k]);
      } else {
        CHECK(std::abs(cell.bias[k]) > 10.0 * cell.mc_se[k]);
        CHECK(std::abs(cell.bias[k]) == doctest::Approx(0.101875).epsilon(0.05));
        // misspecifying both still beats pure weighting with the same
        // wrong treatment model
        CHECK(std::abs(cell.bias[k]) < std::abs(grid.iptw_bias));
      }
    }
  }
  CHECK(std::abs(grid.iptw_bias) > 0.09);
}

TEST_CASE("the grid is reproducible and seed-sensitive") {
  auto spec = builtin_scenario("dr_world");
  auto g1 = dr_grid(spec, 3000, 25, 8);
  auto g2 = dr_grid(spec, 3000, 25, 8);
  auto g3 = dr_grid(spec, 3000, 25, 9);
  bool differs = false;
  for (std::size_t i = 0; i < g1.cells.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      CHECK(g1.cells[i].bias[k] == g2.cells[i].bias[k]);
      if (g1.cells[i].bias[k] != g3.cells[i].bias[k]) differs = true;
    }
  CHECK(differs);
}

TEST_CASE("the product of nuisance errors sets the bias decay rate") {
  auto spec = builtin_scenario("dr_world");
  std::vector<std::size_t> ns = {1u << 10, 1u << 11, 1u << 12, 1u << 13,
                                 1u << 14, 1u << 15, 1u << 16};
  auto rep = second_order_bias(spec, ns, 0.3, 0.2);

  REQUIRE(rep.ns.size() == ns.size());
  REQUIRE(rep.bias.size() == ns.size());
  CHECK(rep.alpha == 0.3);
  CHECK(rep.beta == 0.2);
  for (std::size_t i = 0; i + 1 < rep.bias.size(); ++i) {
    CHECK(rep.bias[i] > 0.0);
    CHECK(rep.bias[i + 1] < rep.bias[i]);
  }
  CHECK(rep.slope == doctest::Approx(-0.5).epsilon(0.3));
  CHECK(std::abs(rep.slope + 0.5) < 0.15);
}

TEST_CASE("the harness bundles the grid and the rate study") {
  auto spec = builtin_scenario("dr_world");
  auto h = dr_harness(spec, 4000, 30, 17);
  CHECK(h.grid.cells.size() == 4);
  CHECK(h.grid.oracle == doctest::Approx(0.4125).epsilon(1e-12));
  CHECK(h.second_order.ns.size() >= 4);
  CHECK(std::abs(h.second_order.slope + 0.5) < 0.2);
}

TEST_CASE("ill-posed doubly robust requests are refused") {
  auto spec = builtin_scenario("dr_world");
  auto pop = population_table(spec);

  CHECK_THROWS_WITH_AS(aipw(pop, {NuisanceModel::Zero(), NuisanceModel::Saturated(true), 0.0}),
                       doctest::Contains("identically zero"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      regression_dr(pop, {NuisanceModel::Saturated(true), NuisanceModel::Zero(), 0.0}),
      doctest::Contains("outcome model"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      aipw(pop, {NuisanceModel::Logistic({"a2"}, false), NuisanceModel::Saturated(true), 0.0}),
      doctest::Contains("functions of l"), std::invalid_argument);

  // outcome support wider than binary: aipw shrugs, the model-based
  // variants refuse
  CellCounts wide;
  wide.init(2, 2, 2, 3);
  for (int a1 = 0; a1 < 2; ++a1)
    for (int l = 0; l < 2; ++l)
      for (int a2 = 0; a2 < 2; ++a2)
        for (int y = 0; y < 3; ++y) {
          wide.at(a1, l, a2, y) = 1;
          wide.total += 1;
        }
  CHECK_NOTHROW(aipw(wide, both_right()));
  CHECK_THROWS_WITH_AS(regression_dr(wide, both_right()), doctest::Contains("binary outcome"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(targeted_dr(wide, both_right()), doctest::Contains("binary outcome"),
                       std::invalid_argument);

  // no treated records at all
  CellCounts untr;
  untr.init(2, 2, 2, 2);
  for (int l = 0; l < 2; ++l)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int y = 0; y < 2; ++y) {
        untr.at(0, l, a2, y) = 1;
        untr.total += 1;
      }
  CHECK_THROWS_WITH_AS(aipw(untr, both_right()), doctest::Contains("a1=1"), std::runtime_error);

  // a populated stratum that never receives a2=1: saturated pi is zero
  // there. Without a floor that is a refusal, with one it is a flag.
  CellCounts nopos;
  nopos.init(2, 2, 2, 2);
  nopos.at(1, 0, 1, 1) = 10;
  nopos.at(1, 0, 1, 0) = 10;
  nopos.at(1, 0, 0, 0) = 20;
  nopos.at(1, 1, 0, 0) = 40;
  nopos.at(0, 0, 0, 0) = 40;
  nopos.at(0, 1, 1, 1) = 40;
  nopos.total = 160;
  CHECK_THROWS_WITH_AS(aipw(nopos, {NuisanceModel::Saturated(true), NuisanceModel::Zero(), 0.0}),
                       doctest::Contains("positivity"), std::runtime_error);
  auto floored =
      aipw(nopos, {NuisanceModel::Saturated(true), NuisanceModel::Zero(), 1e-6});
  CHECK(floored.pi_floored);
  CHECK(std::isfinite(floored.value));

  // saturated outcome model over a stratum with no (1, l, 1) mass
  CHECK_THROWS_WITH_AS(
      regression_dr(nopos, {NuisanceModel::Logistic({}, false), NuisanceModel::Saturated(true), 1e-6}),
      doctest::Contains("saturated outcome model"), std::runtime_error);

  CHECK_THROWS_AS(dr_grid(spec, 0, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(dr_grid(spec, 100, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(second_order_bias(spec, {1024}, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(second_order_bias(spec, {1024, 2048}, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(second_order_bias(spec, {1024, 2048}, 0.3, -0.1), std::invalid_argument);

  // censored designs belong to the ipcw machinery
  auto cens = pop;
  cens.wcens.assign(static_cast<std::size_t>(cens.A1) * cens.L, 0.01);
  CHECK_THROWS_WITH_AS(aipw(cens, both_right()), doctest::Contains("censored"),
                       std::invalid_argument);
}
