#include <cmath>

#include "doctest.h"
#include "gmethods/direct_effects.hpp"
#include "gmethods/scenario.hpp"

using namespace gmethods;

namespace {

std::vector<double> u20() { return std::vector<double>(20, 1.0 / 20.0); }

// the no_confounding world except that A2 ignores A1 entirely
ScenarioSpec indep_mediator() {
  ScenarioSpec s;
  s.name = "indep_mediator";
  s.variables = {Variable{"A1", Role::treatment, 2}, Variable{"L", Role::covariate, 1},
                 Variable{"A2", Role::treatment, 2}, Variable{"Y", Role::outcome, 2}};
  s.errors = {{"eY", u20()}};
  s.functions["L"] = {{}, {}, {0}};
  s.functions["Y"] = build_fn(s, {"A1", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    return e[0] < 4 + 6 * p[0] + 5 * p[1] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{}, {0.6, 0.4}, std::nullopt};
  s.validate();
  return s;
}

// five outcome levels: 10000 coupling atoms, past the exact-rational cutoff
ScenarioSpec wide_outcome() {
  ScenarioSpec s;
  s.name = "wide_outcome";
  s.variables = {Variable{"A1", Role::treatment, 2}, Variable{"L", Role::covariate, 2},
                 Variable{"A2", Role::treatment, 2}, Variable{"Y", Role::outcome, 5}};
  s.errors = {{"eL", u20()}, {"eY", u20()}};
  s.functions["L"] = build_fn(s, {"A1"}, {"eL"}, [](const auto& p, const auto& e) {
    return e[0] < 8 + 4 * p[0] ? 1 : 0;
  });
  s.functions["Y"] = build_fn(s, {"A1", "L", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    return ((e[0] + 3 * p[0] + 2 * p[1] + 4 * p[2]) % 20) / 4;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{"A1"}, {0.6, 0.4, 0.3, 0.7}, std::nullopt};
  s.validate();
  return s;
}

double population_total_effect(const CellCounts& c) {
  double m[2] = {0, 0}, s[2] = {0, 0};
  for (int a1 = 0; a1 < 2; ++a1)
    for (int l = 0; l < c.L; ++l)
      for (int a2 = 0; a2 < c.A2; ++a2)
        for (int y = 0; y < c.Y; ++y) {
          m[a1] += c.at(a1, l, a2, y);
          s[a1] += y * c.at(a1, l, a2, y);
        }
  return s[1] / m[1] - s[0] / m[0];
}

}  // namespace

TEST_CASE("controlled direct effects are the g-formula contrast") {
  auto nc = builtin_scenario("no_confounding");
  auto pop = population_table(nc);
  for (int a2 = 0; a2 < 2; ++a2) {
    auto from_data = cde(pop, a2);
    auto oracle = cde_oracle(nc, a2);
    // threshold 4 + 6 a1 + 5 a2 on twentieths: the a1 contrast is 6/20
    CHECK(oracle.value == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(from_data.value == doctest::Approx(oracle.value).epsilon(1e-12));
    CHECK(from_data.identified_from_data);
    CHECK(from_data.defined);
    CHECK(from_data.assumptions == Assumptions::ffrcistg);
  }
  CHECK(cde(pop, 1).kind == "CDE(a2=1)");

  auto sharp = builtin_scenario("sharp_null");
  auto spop = population_table(sharp);
  for (int a2 = 0; a2 < 2; ++a2) {
    CHECK(std::abs(cde(spop, a2).value) < 1e-12);
    CHECK(std::abs(cde_oracle(sharp, a2).value) < 1e-12);
  }
}

TEST_CASE("sampled controlled direct effect lands near the oracle with a real se") {
  auto nc = builtin_scenario("no_confounding");
  auto data = sample(nc, 100000, 2024);
  auto rep = cde(CellCounts::from(data), 1, NuisanceSpec::Saturated(), 200, 99);
  CHECK(rep.se > 0.002);
  CHECK(rep.se < 0.01);
  CHECK(std::abs(rep.value - 0.3) < 3.0 * rep.se);
}

TEST_CASE("principal strata of the three-arm scenario are intransitive") {
  auto sp = builtin_scenario("psde_intrans");

  auto r01 = psde_oracle(sp, 0, 1);
  auto r12 = psde_oracle(sp, 1, 2);
  auto r02 = psde_oracle(sp, 0, 2);
  CHECK(r01.value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r12.value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r02.value == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(r01.stratum_mass == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(r12.stratum_mass == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(r02.stratum_mass == doctest::Approx(0.4).epsilon(1e-12));
  // each step raises the outcome on its own stratum, yet the end-to-end
  // comparison lowers it: the strata are different subpopulations
  CHECK(r01.value > 0.0);
  CHECK(r12.value > 0.0);
  CHECK(r02.value < 0.0);
  for (const auto& r : {r01, r12, r02}) {
    CHECK(r.defined);
    CHECK_FALSE(r.identified_from_data);
  }

  // the combined stratum is the union of the per-a2 strata
  auto p0 = psde_oracle(sp, 0, 1, 0);
  auto p1 = psde_oracle(sp, 0, 1, 1);
  CHECK(p0.stratum_mass + p1.stratum_mass == doctest::Approx(r01.stratum_mass).epsilon(1e-12));
  CHECK(p0.value * p0.stratum_mass + p1.value * p1.stratum_mass ==
        doctest::Approx(r01.value * r01.stratum_mass).epsilon(1e-12));

  // on the stratum the joint-intervention form Y(a', a2) and the bare form
  // Y(a') coincide; recompute both from the table
  auto ct = oracle_counterfactual_table(sp);
  double joint = 0, bare = 0, mass = 0;
  ct.for_each([&](double p, const std::vector<int>&, const std::vector<int>& s,
                  const std::vector<int>& y) {
    if (s[0] != s[1]) return;
    mass += p;
    joint += p * (y[static_cast<std::size_t>(1 * ct.n_a2 + s[0])] -
                  y[static_cast<std::size_t>(0 * ct.n_a2 + s[0])]);
    bare += p * (y[static_cast<std::size_t>(1 * ct.n_a2 + s[1])] -
                 y[static_cast<std::size_t>(0 * ct.n_a2 + s[0])]);
  });
  CHECK(joint == doctest::Approx(bare).epsilon(1e-14));
  CHECK(joint / mass == doctest::Approx(r01.value).epsilon(1e-12));
}

TEST_CASE("a mediator that ignores the first treatment makes the stratum everything") {
  auto sp = indep_mediator();
  for (int a2 = 0; a2 < 2; ++a2) {
    auto ps = psde_oracle(sp, 0, 1, a2);
    CHECK(ps.value == doctest::Approx(cde_oracle(sp, a2).value).epsilon(1e-12));
    CHECK(ps.stratum_mass == doctest::Approx(a2 == 0 ? 0.6 : 0.4).epsilon(1e-12));
  }
  auto all = psde_oracle(sp, 0, 1);
  CHECK(all.stratum_mass == doctest::Approx(1.0).epsilon(1e-12));
  // with full mass the stratum effect is the total effect
  auto pde = pde_oracle(sp);
  auto tie = tie_oracle(sp);
  CHECK(all.value == doctest::Approx(pde.value + tie.value).epsilon(1e-12));
}

TEST_CASE("an empty principal stratum is reported, not invented") {
  auto sp = builtin_scenario("psde_flip");
  auto r = psde_oracle(sp, 0, 1);
  CHECK_FALSE(r.defined);
  CHECK(r.stratum_mass == 0.0);
  CHECK(std::isnan(r.value));
  for (int a2 = 0; a2 < 2; ++a2) CHECK_FALSE(psde_oracle(sp, 0, 1, a2).defined);
  // the controlled contrast survives: it never conditions on the mediator
  CHECK(cde_oracle(sp, 0).value == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(cde_oracle(sp, 1).value == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("mediation formula equals the cross-world effect under independent errors") {
  auto nc = builtin_scenario("no_confounding");
  auto pop = population_table(nc);
  auto med = pde_mediation(pop);
  auto pde = pde_oracle(nc);
  auto tie = tie_oracle(nc);
  CHECK(med.pde.value == doctest::Approx(pde.value).epsilon(1e-12));
  CHECK(med.tie.value == doctest::Approx(tie.value).epsilon(1e-12));
  CHECK(med.pde.value + med.tie.value == doctest::Approx(med.total).epsilon(1e-12));
  CHECK(med.total == doctest::Approx(population_total_effect(pop)).epsilon(1e-12));
  CHECK(med.pde.identified_from_data);
  CHECK(med.pde.assumptions == Assumptions::npsem_ie);
  CHECK_FALSE(pde.identified_from_data);

  auto add = builtin_scenario("additive");
  auto apop = population_table(add);
  auto amed = pde_mediation(apop);
  // Y = H + A1 + A2: every direct contrast is exactly 1
  CHECK(amed.pde.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pde_oracle(add).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cde_oracle(add, 0).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cde_oracle(add, 1).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(amed.tie.value == doctest::Approx(tie_oracle(add).value).epsilon(1e-12));
}

TEST_CASE("sampled mediation report carries bootstrap errors") {
  auto nc = builtin_scenario("no_confounding");
  auto data = sample(nc, 100000, 2024);
  auto med = pde_mediation(CellCounts::from(data), 200, 99);
  CHECK(med.pde.se > 0.0);
  CHECK(med.tie.se > 0.0);
  CHECK(med.total_se > 0.0);
  CHECK(std::abs(med.pde.value - 0.3) < 3.0 * med.pde.se);
  CHECK(std::abs(med.total - 0.375) < 3.0 * med.total_se);
}

TEST_CASE("identical observables, different cross-world answers") {
  auto plain = builtin_scenario("no_confounding");
  auto coupled = builtin_scenario("no_confounding_coupled");

  // the two worlds are indistinguishable in any experiment
  auto pa = population_table(plain);
  auto pb = population_table(coupled);
  REQUIRE(pa.w.size() == pb.w.size());
  for (std::size_t i = 0; i < pa.w.size(); ++i)
    CHECK(pa.w[i] == doctest::Approx(pb.w[i]).epsilon(1e-12));

  auto med_a = pde_mediation(pa);
  auto med_b = pde_mediation(pb);
  CHECK(med_a.pde.value == doctest::Approx(med_b.pde.value).epsilon(1e-12));

  // yet the pathwise effect differs, and only one world matches the formula
  auto pde_a = pde_oracle(plain);
  auto pde_b = pde_oracle(coupled);
  CHECK(pde_a.value == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(pde_b.value == doctest::Approx(0.225).epsilon(1e-12));
  CHECK(med_a.pde.value == doctest::Approx(pde_a.value).epsilon(1e-12));
  CHECK(std::abs(med_b.pde.value - pde_b.value) > 0.05);

  // the single-world total is shared
  auto tie_a = tie_oracle(plain);
  auto tie_b = tie_oracle(coupled);
  CHECK(pde_a.value + tie_a.value == doctest::Approx(pde_b.value + tie_b.value).epsilon(1e-12));

  // and the sharp bounds, a function of the observable margins alone, agree
  auto ba = pde_bounds(plain);
  auto bb = pde_bounds(coupled);
  CHECK(ba.lower == doctest::Approx(bb.lower).epsilon(1e-12));
  CHECK(ba.upper == doctest::Approx(bb.upper).epsilon(1e-12));
  for (double v : {pde_a.value, pde_b.value, med_a.pde.value}) {
    CHECK(ba.lower <= v + 1e-12);
    CHECK(v <= ba.upper + 1e-12);
  }
  CHECK(ba.upper - ba.lower > 0.1);  // genuinely uninformative gap
}

TEST_CASE("pde bounds on the builtin worlds") {
  // hand arithmetic on the twentieths scale gives short exact endpoints
  auto ba = pde_bounds(builtin_scenario("no_confounding"));
  CHECK(ba.exact);
  CHECK(ba.lower == doctest::Approx(-0.025).epsilon(1e-12));
  CHECK(ba.upper == doctest::Approx(0.525).epsilon(1e-12));

  auto bb = pde_bounds(builtin_scenario("additive"));
  CHECK(bb.exact);
  CHECK(bb.lower == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(bb.upper == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(bb.lower <= 1.0);
  CHECK(1.0 <= bb.upper);

  // a degenerate mediator pins the counterfactuals: the bounds are a point
  auto flip = builtin_scenario("psde_flip");
  auto bf = pde_bounds(flip);
  CHECK(bf.exact);
  CHECK(bf.upper - bf.lower < 1e-12);
  CHECK(bf.lower == doctest::Approx(pde_oracle(flip).value).epsilon(1e-12));

  auto seq = builtin_scenario("seq_rand");
  auto bs = pde_bounds(seq);
  auto ps = pde_oracle(seq);
  CHECK(bs.exact);
  CHECK(bs.lower <= ps.value + 1e-12);
  CHECK(ps.value <= bs.upper + 1e-12);
}

TEST_CASE("pde bounds contain the oracle on randomized scenarios") {
  for (std::uint64_t sd = 8800; sd < 8820; ++sd) {
    auto sp = random_sequential_scenario(sd);
    auto b = pde_bounds(sp);
    auto p = pde_oracle(sp);
    CAPTURE(sd);
    CHECK(b.exact);
    CHECK(b.lower <= b.upper + 1e-12);
    CHECK(b.lower - 1e-9 <= p.value);
    CHECK(p.value <= b.upper + 1e-9);
  }
}

TEST_CASE("the floating solver stands alone past the exact cutoff") {
  auto sp = wide_outcome();
  auto b = pde_bounds(sp);
  auto p = pde_oracle(sp);
  CHECK_FALSE(b.exact);
  CHECK(b.n_atoms == 10000);
  CHECK(b.lower - 1e-7 <= p.value);
  CHECK(p.value <= b.upper + 1e-7);
  CHECK(b.lower >= -4.0);
  CHECK(b.upper <= 4.0);
}

TEST_CASE("probability-of-causation bounds") {
  auto b = causation_bounds(2.0, 1.0);
  CHECK(b.lower == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b.upper == 1.0);
  // an outcome more likely without exposure says nothing
  CHECK(causation_bounds(1.0, 3.0).lower == 0.0);
  // an outcome impossible without exposure settles it
  CHECK(causation_bounds(1.5, 0.0).lower == 1.0);
  CHECK_THROWS_AS(causation_bounds(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(causation_bounds(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("ill-posed direct-effect requests are refused") {
  auto seq = builtin_scenario("seq_rand");
  CHECK_THROWS_WITH_AS(pde_mediation(population_table(seq)),
                       doctest::Contains("single covariate stratum"), std::invalid_argument);

  auto flip = builtin_scenario("psde_flip");
  CHECK_THROWS_WITH_AS(pde_mediation(population_table(flip)), doctest::Contains("empty cell"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cde(population_table(flip), 1), doctest::Contains("positivity"),
                       std::runtime_error);

  auto intrans = builtin_scenario("psde_intrans");
  CHECK_THROWS_AS(pde_bounds(intrans), std::invalid_argument);
  CHECK_THROWS_AS(pde_oracle(intrans), std::invalid_argument);
  CHECK_THROWS_AS(tie_oracle(intrans), std::invalid_argument);

  auto nc = builtin_scenario("no_confounding");
  CHECK_THROWS_AS(psde_oracle(nc, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(psde_oracle(nc, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(psde_oracle(nc, 0, 1, 5), std::invalid_argument);
  CHECK_THROWS_AS(cde(population_table(nc), 7), std::invalid_argument);

  // a bootstrap that keeps losing a one-record cell gives up loudly
  CellCounts tiny;
  tiny.init(2, 1, 2, 2);
  tiny.at(0, 0, 0, 0) = 30;
  tiny.at(0, 0, 0, 1) = 30;
  tiny.at(0, 0, 1, 0) = 20;
  tiny.at(0, 0, 1, 1) = 20;
  tiny.at(1, 0, 0, 0) = 40;
  tiny.at(1, 0, 0, 1) = 58;
  tiny.at(1, 0, 1, 1) = 1;
  tiny.total = 199;
  CHECK_THROWS_WITH_AS(cde(tiny, 1, NuisanceSpec::Saturated(), 200, 13),
                       doctest::Contains("degenerate bootstrap"), std::runtime_error);
}
