#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "gmethods/g_formula.hpp"
#include "gmethods/models.hpp"

using namespace gmethods;

namespace {

const NuisanceSpec kSat = NuisanceSpec::Saturated();

}  // namespace

TEST_CASE("saturated g-formula on exact cells reproduces every randomized oracle mean") {
  for (const char* name : {"seq_rand", "sharp_null", "no_confounding", "additive"}) {
    auto spec = builtin_scenario(name);
    auto cells = population_table(spec);
    for (const auto& g : all_regimes(spec)) {
      if (!regime_randomization_holds(spec, g)) continue;
      auto est = gformula(cells, g, kSat);
      CHECK_MESSAGE(est.value == doctest::Approx(oracle_mean(spec, g)).epsilon(1e-12),
                    name, " ", g.label());
    }
  }
}

TEST_CASE("g-formula identifies static but not dynamic regimes under partial randomization") {
  auto spec = builtin_scenario("formaldehyde");
  auto cells = population_table(spec);
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2) {
      auto g = Regime::fixed(a1, a2);
      CHECK(gformula(cells, g, kSat).value ==
            doctest::Approx(oracle_mean(spec, g)).epsilon(1e-12));
    }
  // dynamic "treat by covariate" regime: the formula converges to the wrong
  // functional because Y(g) is correlated with A1 through the covariate
  auto g = Regime::dynamic(0, {0, 1});
  double plug = gformula(cells, g, kSat).value;
  double truth = oracle_mean(spec, g);
  CHECK(plug == doctest::Approx(0.400).epsilon(1e-9));
  CHECK(truth == doctest::Approx(0.412).epsilon(1e-9));
  CHECK(std::abs(plug - truth) > 0.005);
}

TEST_CASE("g-formula equals the stratified mean under full joint randomization") {
  // A2 randomized marginally (no L in its law) while L still predicts Y
  ScenarioSpec s;
  s.name = "full_rand";
  s.variables = {{"H", Role::hidden, 2}, {"A1", Role::treatment, 2},
                 {"L", Role::covariate, 2}, {"A2", Role::treatment, 2},
                 {"Y", Role::outcome, 2}};
  std::vector<double> u20(20, 0.05);
  s.errors = {{"eH", {0.5, 0.5}}, {"eL", u20}, {"eY", u20}};
  s.functions["H"] = {{}, {"eH"}, {0, 1}};
  {
    StructuralFn f;
    f.parents = {"H", "A1"};
    f.errors = {"eL"};
    for (int h = 0; h < 2; ++h)
      for (int a1 = 0; a1 < 2; ++a1)
        for (int e = 0; e < 20; ++e) f.table.push_back(e < 5 + 8 * h + 2 * a1 ? 1 : 0);
    s.functions["L"] = f;
  }
  {
    StructuralFn f;
    f.parents = {"H", "A1", "L", "A2"};
    f.errors = {"eY"};
    for (int h = 0; h < 2; ++h)
      for (int a1 = 0; a1 < 2; ++a1)
        for (int l = 0; l < 2; ++l)
          for (int a2 = 0; a2 < 2; ++a2)
            for (int e = 0; e < 20; ++e)
              f.table.push_back(e < 3 + 6 * h + 2 * a1 + 3 * l + 4 * a2 ? 1 : 0);
    s.functions["Y"] = f;
  }
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{}, {0.45, 0.55}, std::nullopt};
  s.validate();

  auto cells = population_table(s);
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2) {
      double num = 0.0, den = 0.0;
      for (int l = 0; l < 2; ++l)
        for (int y = 0; y < 2; ++y) {
          num += y * cells.at(a1, l, a2, y);
          den += cells.at(a1, l, a2, y);
        }
      double stratified = num / den;
      auto est = gformula_static(cells, a1, a2, kSat);
      CHECK(est.value == doctest::Approx(stratified).epsilon(1e-12));
      CHECK(est.value == doctest::Approx(oracle_mean(s, Regime::fixed(a1, a2))).epsilon(1e-12));
    }
}

TEST_CASE("g-formula from finite samples approaches the oracle") {
  auto spec = builtin_scenario("seq_rand");
  auto data = sample(spec, 60000, 2024);
  auto cells = CellCounts::from(data);
  for (const auto& g : all_regimes(spec)) {
    double est = gformula(cells, g, kSat).value;
    CHECK(std::abs(est - oracle_mean(spec, g)) < 0.02);
  }
}

TEST_CASE("saturated fit refuses empty positive-weight strata, parametric extrapolates") {
  CellCounts c;
  c.init(2, 2, 2, 2);
  // a1=1: both l levels occur, but (l=1, a2=1) never does
  c.at(1, 0, 0, 0) = 30;
  c.at(1, 0, 0, 1) = 10;
  c.at(1, 0, 1, 0) = 20;
  c.at(1, 0, 1, 1) = 20;
  c.at(1, 1, 0, 0) = 25;
  c.at(1, 1, 0, 1) = 25;
  // a1=0 arm fully occupied
  for (int l = 0; l < 2; ++l)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int y = 0; y < 2; ++y) c.at(0, l, a2, y) = 10;
  c.total = 210;

  CHECK_THROWS_WITH_AS(gformula_static(c, 1, 1, kSat), doctest::Contains("a1=1,l=1,a2=1"),
                       std::runtime_error);
  CHECK_NOTHROW(gformula_static(c, 1, 0, kSat));

  auto par = NuisanceSpec::Parametric({"a1", "l", "a2"}, {"a1"});
  auto est = gformula_static(c, 1, 1, par);
  REQUIRE(est.empty_strata.size() == 1);
  CHECK(est.empty_strata[0] == "a1=1,l=1,a2=1");
  CHECK(est.value >= 0.0);
  CHECK(est.value <= 1.0);
}

TEST_CASE("zero-probability covariate level is skipped, not an error") {
  CellCounts c;
  c.init(2, 2, 2, 2);
  // l=1 never occurs under a1=1
  c.at(1, 0, 0, 0) = 30;
  c.at(1, 0, 0, 1) = 30;
  c.at(1, 0, 1, 0) = 20;
  c.at(1, 0, 1, 1) = 60;
  for (int l = 0; l < 2; ++l)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int y = 0; y < 2; ++y) c.at(0, l, a2, y) = 5;
  c.total = 180;

  auto est = gformula_static(c, 1, 1, kSat);
  CHECK(est.l_weights[1] == 0.0);
  CHECK(est.value == doctest::Approx(60.0 / 80.0).epsilon(1e-12));
}

TEST_CASE("a saturated-rank parametric model matches the saturated estimate") {
  auto spec = builtin_scenario("seq_rand");
  auto data = sample(spec, 20000, 77);
  auto cells = CellCounts::from(data);
  auto par = NuisanceSpec::Parametric({"a1", "l", "a2", "a1:l", "a1:a2", "l:a2", "a1:l:a2"},
                                      {"a1"});
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2) {
      double sat = gformula_static(cells, a1, a2, kSat).value;
      double fit = gformula_static(cells, a1, a2, par).value;
      CHECK(fit == doctest::Approx(sat).epsilon(1e-8));
    }
}

TEST_CASE("censoring: uncensored regime identified, censored one rejected") {
  auto spec = builtin_scenario("dep_censoring");
  auto cells = population_table(spec);
  for (int a1 = 0; a1 < 2; ++a1) {
    auto est = gformula_static(cells, a1, 0, kSat);
    CHECK(est.value == doctest::Approx(0.4 + 0.2 * a1).epsilon(1e-12));
  }
  CHECK_THROWS_WITH_AS(gformula_static(cells, 0, 1, kSat), doctest::Contains("empty strata"),
                       std::runtime_error);

  // finite sample keeps the same structure
  auto data = sample(spec, 40000, 5);
  auto dcell = CellCounts::from(data);
  CHECK(std::abs(gformula_static(dcell, 1, 0, kSat).value - 0.6) < 0.02);
}

TEST_CASE("regime shape validation") {
  auto cells = population_table(builtin_scenario("seq_rand"));
  CHECK_THROWS_AS(gformula_static(cells, 2, 0, kSat), std::invalid_argument);
  CHECK_THROWS_AS(gformula_static(cells, 0, 5, kSat), std::invalid_argument);
  CHECK_THROWS_AS(gformula_dynamic(cells, 0, {0, 1, 0}, kSat), std::invalid_argument);
  CHECK_THROWS_AS(gformula_dynamic(cells, 0, {0, 2}, kSat), std::invalid_argument);
}

TEST_CASE("sharp null detection by enumeration") {
  CHECK(sharp_null_holds(builtin_scenario("sharp_null")));
  CHECK(sharp_null_holds(builtin_scenario("null_paradox")));
  CHECK(sharp_null_holds(builtin_scenario("formaldehyde_null")));
  CHECK_FALSE(sharp_null_holds(builtin_scenario("seq_rand")));
  CHECK_FALSE(sharp_null_holds(builtin_scenario("formaldehyde")));
}

TEST_CASE("null paradox: the parametric plug-in is asymptotically biased under the null") {
  auto spec = builtin_scenario("null_paradox");
  auto cells = population_table(spec);
  auto par = NuisanceSpec::Parametric({"a1", "l", "a2"}, {"a1"});

  // every regime mean equals E[Y] = 0.45 exactly, and the saturated fit finds that
  for (const auto& g : all_regimes(spec)) {
    CHECK(oracle_mean(spec, g) == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(gformula(cells, g, kSat).value == doctest::Approx(0.45).epsilon(1e-12));
  }
  // the misspecified parametric pair cannot represent the null: its limiting
  // contrast is bounded away from zero
  double limit = gformula_static(cells, 1, 1, par).value -
                 gformula_static(cells, 0, 0, par).value;
  CHECK(std::abs(limit) > 0.02);
}

TEST_CASE("null paradox experiment validates its configuration") {
  auto par = NuisanceSpec::Parametric({"a1", "l", "a2"}, {"a1"});
  auto spec = builtin_scenario("null_paradox");
  CHECK_THROWS_AS(null_paradox_experiment(spec, par, {500}, 0, 0.05, 1), std::invalid_argument);
  CHECK_THROWS_AS(null_paradox_experiment(spec, par, {}, 10, 0.05, 1), std::invalid_argument);
  CHECK_THROWS_AS(null_paradox_experiment(spec, kSat, {500}, 10, 0.05, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(null_paradox_experiment(builtin_scenario("seq_rand"), par, {500}, 10, 0.05, 1),
                  std::invalid_argument);
}

TEST_CASE("null paradox experiment smoke run") {
  auto spec = builtin_scenario("null_paradox");
  auto par = NuisanceSpec::Parametric({"a1", "l", "a2"}, {"a1"});
  auto res = null_paradox_experiment(spec, par, {400}, 20, 0.05, 42, 60);
  REQUIRE(res.parametric.size() == 1);
  REQUIRE(res.saturated.size() == 1);
  CHECK(res.parametric[0].n == 400);
  CHECK(res.parametric[0].rejection_rate >= 0.0);
  CHECK(res.parametric[0].rejection_rate <= 1.0);
  CHECK(res.saturated[0].rejection_rate <= 0.5);

  auto res2 = null_paradox_experiment(spec, par, {400}, 20, 0.05, 42, 60);
  CHECK(res2.parametric[0].rejection_rate == res.parametric[0].rejection_rate);
}
