#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "gmethods/scenario.hpp"

using namespace gmethods;

namespace {

double cell_prob(const CellCounts& t, int a1, int l, int a2, int y) {
  return t.at(a1, l, a2, y);
}

double table_sum(const CellCounts& t) {
  double s = 0;
  for (double v : t.w) s += v;
  for (double v : t.wcens) s += v;
  return s;
}

}  // namespace

TEST_CASE("every builtin validates, enumerates, and has a coherent population table") {
  for (const auto& name : builtin_scenario_names()) {
    ScenarioSpec s = builtin_scenario(name);
    CHECK(s.name == name);
    CHECK(enumeration_size(s) <= 1e7);
    CellCounts t = population_table(s);
    CHECK(table_sum(t) == doctest::Approx(1.0).epsilon(1e-12));
    for (const Regime& g : all_regimes(s)) {
      double m = oracle_mean(s, g);
      CHECK(m >= 0.0);
      CHECK(m <= s.y_var().support - 1.0);
    }
  }
}

TEST_CASE("seq_rand oracle means match hand computation") {
  ScenarioSpec s = builtin_scenario("seq_rand");
  CHECK(oracle_mean(s, Regime::fixed(0, 0)) == doctest::Approx(0.40).epsilon(1e-12));
  CHECK(oracle_mean(s, Regime::fixed(0, 1)) == doctest::Approx(0.47).epsilon(1e-12));
  CHECK(oracle_mean(s, Regime::fixed(1, 0)) == doctest::Approx(0.50).epsilon(1e-12));
  CHECK(oracle_mean(s, Regime::fixed(1, 1)) == doctest::Approx(0.51).epsilon(1e-12));
  // treat at the second stage exactly when l == 0
  CHECK(oracle_mean(s, Regime::dynamic(0, {1, 0})) == doctest::Approx(0.5375).epsilon(1e-12));
  CHECK(oracle_mean(s, Regime::dynamic(1, {1, 0})) == doctest::Approx(0.60).epsilon(1e-12));

  // observed-law facts: P(A1=1)=1/2, P(L=1|a1) = mean over h of (4+10h+3a1)/20
  CellCounts t = population_table(s);
  double pa1 = 0, pl1_a0 = 0, pa0 = 0;
  for (int l = 0; l < 2; ++l)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int y = 0; y < 2; ++y) {
        pa1 += cell_prob(t, 1, l, a2, y);
        pa0 += cell_prob(t, 0, l, a2, y);
        if (l == 1) pl1_a0 += cell_prob(t, 0, l, a2, y);
      }
  CHECK(pa1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pl1_a0 / pa0 == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("formaldehyde oracle: effect of a2 only, 0.2 per unit") {
  ScenarioSpec s = builtin_scenario("formaldehyde");
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2)
      CHECK(oracle_mean(s, Regime::fixed(a1, a2)) ==
            doctest::Approx(0.3 + 0.2 * a2).epsilon(1e-12));
  auto st = check_randomization(scenario_dag(s));
  CHECK_FALSE(st.full);
  CHECK_FALSE(st.sequential_joint);
  CHECK(st.y_only);

  ScenarioSpec s0 = builtin_scenario("formaldehyde_null");
  for (const Regime& g : all_regimes(s0))
    CHECK(oracle_mean(s0, g) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("sharp_null: every regime mean is 0.5 yet nuisance pieces move with a1") {
  ScenarioSpec s = builtin_scenario("sharp_null");
  for (const Regime& g : all_regimes(s))
    CHECK(oracle_mean(s, g) == doctest::Approx(0.5).epsilon(1e-12));
  CellCounts t = population_table(s);
  // f(l=1 | a1) differs across a1
  double pl1[2];
  for (int a1 = 0; a1 < 2; ++a1) {
    double num = 0, den = 0;
    for (int l = 0; l < 2; ++l)
      for (int a2 = 0; a2 < 2; ++a2)
        for (int y = 0; y < 2; ++y) {
          den += cell_prob(t, a1, l, a2, y);
          if (l == 1) num += cell_prob(t, a1, l, a2, y);
        }
    pl1[a1] = num / den;
  }
  CHECK(std::fabs(pl1[1] - pl1[0]) > 0.05);
}

TEST_CASE("additive world: means are 0.5 + a1 + a2") {
  ScenarioSpec s = builtin_scenario("additive");
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2)
      CHECK(oracle_mean(s, Regime::fixed(a1, a2)) ==
            doctest::Approx(0.5 + a1 + a2).epsilon(1e-12));
}

TEST_CASE("dependent censoring: censored mass and uncensored-regime means") {
  ScenarioSpec s = builtin_scenario("dep_censoring");
  CellCounts t = population_table(s);
  double cens = 0;
  for (double v : t.wcens) cens += v;
  CHECK(cens == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(oracle_mean(s, Regime::fixed(0, 0)) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(oracle_mean(s, Regime::fixed(1, 0)) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("sampled frequencies agree with the population table") {
  ScenarioSpec s = builtin_scenario("seq_rand");
  CellCounts pop = population_table(s);
  std::size_t n = 200000;
  LongitudinalDataset d = sample(s, n, 77);
  CellCounts emp = CellCounts::from(d);
  for (int a1 = 0; a1 < 2; ++a1)
    for (int l = 0; l < 2; ++l)
      for (int a2 = 0; a2 < 2; ++a2)
        for (int y = 0; y < 2; ++y) {
          double p = cell_prob(pop, a1, l, a2, y);
          double phat = cell_prob(emp, a1, l, a2, y) / static_cast<double>(n);
          double se = std::sqrt(p * (1 - p) / static_cast<double>(n));
          CHECK(std::fabs(phat - p) < 5 * se + 1e-12);
        }

  // censoring path: masked outcomes, cens mass near its oracle value
  ScenarioSpec c = builtin_scenario("dep_censoring");
  LongitudinalDataset dc = sample(c, 50000, 3);
  REQUIRE(dc.cens.size() == dc.a1.size());
  std::size_t ncens = 0;
  for (std::size_t i = 0; i < dc.a1.size(); ++i) {
    if (dc.cens[i]) {
      ++ncens;
      CHECK(dc.y[i] == -1);
      CHECK(dc.a2[i] == 1);
    } else {
      CHECK(dc.y[i] >= 0);
    }
  }
  CHECK(std::fabs(static_cast<double>(ncens) / 50000.0 - 0.3) < 0.02);
}

TEST_CASE("sampling is reproducible and seed-sensitive") {
  ScenarioSpec s = builtin_scenario("no_confounding");
  LongitudinalDataset a = sample(s, 500, 11), b = sample(s, 500, 11), c = sample(s, 500, 12);
  CHECK(a.a1 == b.a1);
  CHECK(a.y == b.y);
  CHECK(a.y != c.y);
}

TEST_CASE("json round trip preserves the spec and its law") {
  for (const auto& name : builtin_scenario_names()) {
    ScenarioSpec s = builtin_scenario(name);
    std::string j1 = s.to_json_string();
    ScenarioSpec r = ScenarioSpec::from_json_string(j1);
    CHECK(r.to_json_string() == j1);
    CellCounts a = population_table(s), b = population_table(r);
    REQUIRE(a.w.size() == b.w.size());
    for (std::size_t i = 0; i < a.w.size(); ++i)
      CHECK(a.w[i] == doctest::Approx(b.w[i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(ScenarioSpec::from_json_string("{\"variables\": []}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ScenarioSpec::from_json_string("{\"bogus_key\": 1}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ScenarioSpec::from_json_string("not json"), std::invalid_argument);
}

TEST_CASE("validation rejects malformed specs") {
  auto base = [] { return builtin_scenario("no_confounding"); };

  ScenarioSpec s = base();
  s.variables[0].role = Role::covariate;  // A1 slot must be a treatment
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = base();
  s.errors[0].probs = {0.6, 0.6};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = base();
  s.functions["Y"].table[0] = 9;  // outside Y's support
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = base();
  s.functions["Y"].parents = {"A2", "A1", "A2"};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = base();
  s.treatments["A2"].probs = {0.7, 0.3};  // wrong row count
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = base();
  s.treatments["A1"].parents = {"L"};  // A1 may only depend on hiddens
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = base();
  s.a2_is_censoring = true;  // fine: A2 binary here
  CHECK_NOTHROW(s.validate());
  s.variables[static_cast<std::size_t>(s.y_index())].support = 3;
  s.functions["Y"] = build_fn(s, {"A1", "A2"}, {"eY"},
                              [](const auto&, const auto&) { return 0; });
  CHECK_NOTHROW(s.validate());
  s.variables[static_cast<std::size_t>(s.a2_index())].support = 3;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);  // censoring must be binary

  // coupling whose joint contradicts a margin
  s = builtin_scenario("no_confounding_coupled");
  s.couplings[0].joint.assign(400, 1.0 / 400.0);  // margins fine, but now eA0 and eY1
  CHECK_NOTHROW(s.validate());                    // independent: still a legal coupling
  s.couplings[0].joint[0] += 0.01;
  s.couplings[0].joint[1] -= 0.01;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  // natural mechanism that fails to induce the declared probabilities
  s = builtin_scenario("no_confounding_coupled");
  s.treatments["A2"].probs = {0.65, 0.35, 0.4, 0.6};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("enumeration cap triggers on absurd error spaces") {
  ScenarioSpec s = builtin_scenario("no_confounding");
  for (int k = 0; k < 9; ++k)
    s.errors.push_back({"pad" + std::to_string(k), std::vector<double>(20, 0.05)});
  CHECK(s.errors.size() == 10);
  CHECK_NOTHROW(s.validate());
  CHECK(enumeration_size(s) > 1e7);
  CHECK_THROWS_AS(for_each_world(s, [](double, const World&) {}), std::runtime_error);
}

TEST_CASE("counterfactual table margins and the default mediator coupling") {
  ScenarioSpec s = builtin_scenario("no_confounding");
  CounterfactualTable t = oracle_counterfactual_table(s);
  double total = 0;
  for (double v : t.p) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  // single-world margins reproduce the static-regime laws
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2) {
      std::vector<double> law = oracle_outcome_law(s, Regime::fixed(a1, a2));
      double m = 0;
      t.for_each([&](double p, const std::vector<int>&, const std::vector<int>&,
                     const std::vector<int>& y) {
        m += p * y[static_cast<std::size_t>(a1 * 2 + a2)];
      });
      CHECK(m == doctest::Approx(law[1]).epsilon(1e-12));
    }

  // shared-uniform coupling is comonotone: P(A2(0)=1, A2(1)=1) = min(.3,.6)
  double p11 = 0, p10 = 0;
  t.for_each([&](double p, const std::vector<int>&, const std::vector<int>& sv,
                 const std::vector<int>&) {
    if (sv[0] == 1 && sv[1] == 1) p11 += p;
    if (sv[0] == 1 && sv[1] == 0) p10 += p;
  });
  CHECK(p11 == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p10 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("coupled variant: same one-world laws, different cross-world joint") {
  ScenarioSpec a = builtin_scenario("no_confounding");
  ScenarioSpec b = builtin_scenario("no_confounding_coupled");

  CellCounts ta = population_table(a), tb = population_table(b);
  for (std::size_t i = 0; i < ta.w.size(); ++i)
    CHECK(ta.w[i] == doctest::Approx(tb.w[i]).epsilon(1e-12));
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2)
      CHECK(oracle_mean(a, Regime::fixed(a1, a2)) ==
            doctest::Approx(oracle_mean(b, Regime::fixed(a1, a2))).epsilon(1e-12));

  auto pde = [](const ScenarioSpec& s) {
    CounterfactualTable t = oracle_counterfactual_table(s);
    double v = 0;
    t.for_each([&](double p, const std::vector<int>&, const std::vector<int>& sv,
                   const std::vector<int>& y) {
      v += p * (y[static_cast<std::size_t>(2 + sv[0])] - y[static_cast<std::size_t>(sv[0])]);
    });
    return v;
  };
  CHECK(pde(a) == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(pde(b) == doctest::Approx(0.225).epsilon(1e-12));
}

TEST_CASE("regime randomization check by enumeration") {
  for (const auto& name : {"seq_rand", "sharp_null"}) {
    ScenarioSpec s = builtin_scenario(name);
    for (const Regime& g : all_regimes(s)) {
      double dev = 1;
      CHECK(regime_randomization_holds(s, g, 1e-12, &dev));
      CHECK(dev <= 1e-12);
    }
  }

  // formaldehyde: static regimes are randomized, dynamic ones are not, since
  // Y(g) then depends on L(a1), which shares the hidden cause H1 with A1.
  ScenarioSpec f = builtin_scenario("formaldehyde");
  for (const Regime& g : all_regimes(f)) {
    double dev = -1;
    bool ok = regime_randomization_holds(f, g, 1e-12, &dev);
    if (g.is_static()) {
      CHECK(ok);
    } else {
      CHECK_FALSE(ok);
      CHECK(dev > 1e-4);
    }
  }

  // confounded world: A1 listens to the same hidden cause that drives Y
  ScenarioSpec s = builtin_scenario("sharp_null");
  s.treatments["A1"] = {{"H"}, {0.8, 0.2, 0.3, 0.7}, std::nullopt};
  s.validate();
  double dev = 0;
  CHECK_FALSE(regime_randomization_holds(s, Regime::fixed(1, 1), 1e-12, &dev));
  CHECK(dev > 0.01);
}

TEST_CASE("scenario_dag reproduces the declared structure") {
  ScenarioSpec s = builtin_scenario("formaldehyde");
  CausalDag g = scenario_dag(s);
  auto has = [&](const std::string& u, const std::string& v) {
    for (const auto& [a, b] : g.edges())
      if (g.vertex(a).name == u && g.vertex(b).name == v) return true;
    return false;
  };
  CHECK(g.size() == 6);
  CHECK(has("H1", "A1"));
  CHECK(has("H1", "L"));
  CHECK(has("H2", "L"));
  CHECK(has("H2", "Y"));
  CHECK(has("A1", "L"));
  CHECK(has("A1", "A2"));
  CHECK(has("L", "A2"));
  CHECK(has("A2", "Y"));
  CHECK(g.edges().size() == 8);
  CHECK(g.vertex(g.require("H1")).hidden);
  CHECK_FALSE(g.vertex(g.require("L")).hidden);
}

TEST_CASE("regime family enumeration: 8 deterministic regimes when l and a2 are binary") {
  ScenarioSpec s = builtin_scenario("seq_rand");
  std::vector<Regime> gs = all_regimes(s);
  CHECK(gs.size() == 8);
  std::set<std::string> labels;
  for (const auto& g : gs) labels.insert(g.label());
  CHECK(labels.size() == 8);
}

TEST_CASE("random sequential scenarios validate and are sequentially randomized") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    ScenarioSpec s = random_sequential_scenario(seed);
    CHECK(s.name == "random_seq_" + std::to_string(seed));
    auto st = check_randomization(scenario_dag(s));
    CHECK(st.sequential_joint);
    CHECK(st.y_only);
    for (const Regime& g : all_regimes(s))
      CHECK(regime_randomization_holds(s, g));
    CHECK(random_sequential_scenario(seed).to_json_string() == s.to_json_string());
  }
  CHECK(random_sequential_scenario(1).to_json_string() !=
        random_sequential_scenario(2).to_json_string());
}
