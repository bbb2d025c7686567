#include <algorithm>
#include <stdexcept>

#include "gmethods/rng.hpp"
#include "gmethods/scenario.hpp"

// Builtin scenarios. All stochastic primitives are uniform errors on
// {0,...,19} pushed through integer thresholds, so every conditional
// probability is a multiple of 1/20 and oracle values have short exact forms.

namespace gmethods {

namespace {

std::vector<double> u20() { return std::vector<double>(20, 1.0 / 20.0); }
std::vector<double> bern(double p1) { return {1.0 - p1, p1}; }

Variable hidden(const std::string& n, int support = 2) { return {n, Role::hidden, support}; }
Variable trt(const std::string& n, int support = 2) { return {n, Role::treatment, support}; }
Variable cov(const std::string& n, int support = 2) { return {n, Role::covariate, support}; }
Variable out(const std::string& n, int support = 2) { return {n, Role::outcome, support}; }

StructuralFn identity_of_error() { return {{}, {"eH"}, {0, 1}}; }

// Sequentially randomized trial with a hidden prognostic factor. The effect
// of the second treatment flips sign with l (helpful at l=0, harmful at l=1),
// so the optimal second-stage rule is dynamic: treat exactly when l == 0.
ScenarioSpec seq_rand() {
  ScenarioSpec s;
  s.name = "seq_rand";
  s.variables = {hidden("H"), trt("A1"), cov("L"), trt("A2"), out("Y")};
  s.errors = {{"eH", bern(0.5)}, {"eL", u20()}, {"eY", u20()}};
  s.functions["H"] = identity_of_error();
  s.functions["L"] = build_fn(s, {"H", "A1"}, {"eL"}, [](const auto& p, const auto& e) {
    return e[0] < 4 + 10 * p[0] + 3 * p[1] ? 1 : 0;
  });
  s.functions["Y"] = build_fn(s, {"H", "A1", "L", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    int t = 6 + 4 * p[0] + 2 * p[1] + p[3] * (p[2] == 0 ? 5 : -3);
    return e[0] < t ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  // rows (a1, l): P(A2=1) = (3 + 2 a1 + 12 l)/20, deliberately skewed at l=1
  s.treatments["A2"] = {{"A1", "L"},
                        {0.85, 0.15, 0.25, 0.75, 0.75, 0.25, 0.15, 0.85},
                        std::nullopt};
  return s;
}

// Occupational exposure with loss to employment: a baseline exposure A1, an
// intermediate employment state L confounded with the outcome through H2, and
// a second exposure A2 only workers can receive. Only the sequential
// conditions hold; neither treatment is marginally randomized with respect
// to everything.
ScenarioSpec formaldehyde(bool null_a2) {
  ScenarioSpec s;
  s.name = null_a2 ? "formaldehyde_null" : "formaldehyde";
  s.variables = {hidden("H1"), hidden("H2"), trt("A1"), cov("L"), trt("A2"), out("Y")};
  s.errors = {{"eH1", bern(0.5)}, {"eH2", bern(0.3)}, {"eL", u20()}, {"eY", u20()}};
  s.functions["H1"] = {{}, {"eH1"}, {0, 1}};
  s.functions["H2"] = {{}, {"eH2"}, {0, 1}};
  s.functions["L"] = build_fn(s, {"H1", "H2", "A1"}, {"eL"}, [](const auto& p, const auto& e) {
    return e[0] < 16 - 6 * p[0] - 6 * p[1] - 2 * p[2] ? 1 : 0;
  });
  if (null_a2) {
    s.functions["Y"] = build_fn(s, {"H2"}, {"eY"}, [](const auto& p, const auto& e) {
      return e[0] < 3 + 10 * p[0] ? 1 : 0;
    });
  } else {
    s.functions["Y"] = build_fn(s, {"H2", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
      return e[0] < 3 + 10 * p[0] + 4 * p[1] ? 1 : 0;
    });
  }
  s.treatments["A1"] = {{"H1"}, {0.3, 0.7, 0.7, 0.3}, std::nullopt};
  // leaving work (l=0) nearly precludes the second exposure
  s.treatments["A2"] = {{"A1", "L"}, {0.95, 0.05, 0.5, 0.5, 0.95, 0.05, 0.3, 0.7},
                        std::nullopt};
  return s;
}

// Unconfounded two-treatment world without covariates; the cross-world joint
// of A2's natural values comes from the implicit shared-uniform coupling.
ScenarioSpec no_confounding() {
  ScenarioSpec s;
  s.name = "no_confounding";
  s.variables = {trt("A1"), cov("L", 1), trt("A2"), out("Y")};
  s.errors = {{"eY", u20()}};
  s.functions["L"] = {{}, {}, {0}};
  s.functions["Y"] = build_fn(s, {"A1", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    return e[0] < 4 + 6 * p[0] + 5 * p[1] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{"A1"}, {0.7, 0.3, 0.4, 0.6}, std::nullopt};
  return s;
}

// Same observed law and same one-world counterfactual laws as
// no_confounding, but with explicit per-world errors and a coupling between
// the a1=0 natural value of A2 and the a1=1 outcome error. Every quantity a
// randomized trial can touch is unchanged; the cross-world joint is not.
ScenarioSpec no_confounding_coupled() {
  ScenarioSpec s;
  s.name = "no_confounding_coupled";
  s.variables = {trt("A1"), cov("L", 1), trt("A2"), out("Y")};
  s.errors = {{"eA0", u20()}, {"eA1", u20()}, {"eY0", u20()}, {"eY1", u20()}};
  std::vector<double> diag(400, 0.0);
  for (int i = 0; i < 20; ++i) diag[static_cast<std::size_t>(i * 20 + i)] = 1.0 / 20.0;
  s.couplings = {{{"eA0", "eY1"}, diag}};
  s.functions["L"] = {{}, {}, {0}};
  s.functions["Y"] = build_fn(s, {"A1", "A2"}, {"eY0", "eY1"},
                              [](const auto& p, const auto& e) {
                                int err = p[0] == 0 ? e[0] : e[1];
                                return err < 4 + 6 * p[0] + 5 * p[1] ? 1 : 0;
                              });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  TreatmentTable a2;
  a2.parents = {"A1"};
  a2.probs = {0.7, 0.3, 0.4, 0.6};
  a2.natural = build_fn(s, {"A1"}, {"eA0", "eA1"}, [](const auto& p, const auto& e) {
    return p[0] == 0 ? (e[0] < 6 ? 1 : 0) : (e[1] < 12 ? 1 : 0);
  });
  s.treatments["A2"] = a2;
  return s;
}

// The outcome ignores both treatments entirely, yet is associated with them
// through H and the collider at L in adjusted analyses.
ScenarioSpec sharp_null() {
  ScenarioSpec s;
  s.name = "sharp_null";
  s.variables = {hidden("H"), trt("A1"), cov("L"), trt("A2"), out("Y")};
  s.errors = {{"eH", bern(0.5)}, {"eL", u20()}, {"eY", u20()}};
  s.functions["H"] = identity_of_error();
  s.functions["L"] = build_fn(s, {"H", "A1"}, {"eL"}, [](const auto& p, const auto& e) {
    return e[0] < 6 + 6 * p[0] + 4 * p[1] ? 1 : 0;
  });
  s.functions["Y"] = build_fn(s, {"H"}, {"eY"}, [](const auto& p, const auto& e) {
    return e[0] < 5 + 10 * p[0] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{"A1", "L"}, {0.7, 0.3, 0.4, 0.6, 0.5, 0.5, 0.2, 0.8},
                        std::nullopt};
  return s;
}

// Four-level intermediate whose conditional law is a two-component mixture:
// no proportional-odds model in a1 fits f(l | a1), and no main-effects
// logistic fits E[Y | a1, l, a2]. The treatments still do nothing to Y.
ScenarioSpec null_paradox() {
  ScenarioSpec s;
  s.name = "null_paradox";
  s.variables = {hidden("H"), trt("A1"), cov("L", 4), trt("A2"), out("Y")};
  s.errors = {{"eH", bern(0.5)}, {"eL", u20()}, {"eY", u20()}};
  s.functions["H"] = identity_of_error();
  // cumulative cuts (twentieths) per (h, a1) row
  s.functions["L"] = build_fn(s, {"H", "A1"}, {"eL"}, [](const auto& p, const auto& e) {
    static const int cuts[4][3] = {{8, 14, 18}, {2, 6, 12}, {6, 8, 10}, {16, 18, 19}};
    const int* c = cuts[p[0] * 2 + p[1]];
    return e[0] < c[0] ? 0 : e[0] < c[1] ? 1 : e[0] < c[2] ? 2 : 3;
  });
  s.functions["Y"] = build_fn(s, {"H"}, {"eY"}, [](const auto& p, const auto& e) {
    return e[0] < 4 + 10 * p[0] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  // second treatment tracks l in opposite directions across the two arms, so
  // a shared-coefficient outcome model cannot collapse over l coherently
  std::vector<double> a2probs;
  for (int a1 = 0; a1 < 2; ++a1)
    for (int l = 0; l < 4; ++l) {
      double p1 = (a1 ? 6.0 + 2 * l : 9.0 - l) / 20.0;
      a2probs.push_back(1.0 - p1);
      a2probs.push_back(p1);
    }
  s.treatments["A2"] = {{"A1", "L"}, a2probs, std::nullopt};
  return s;
}

// A2 is loss to follow-up rather than a treatment: records with a2=1 carry no
// outcome. Censoring depends on a prognostic covariate, so a complete-case
// analysis is biased while weighting/g-formula corrections are not.
ScenarioSpec dep_censoring() {
  ScenarioSpec s;
  s.name = "dep_censoring";
  s.variables = {hidden("H"), trt("A1"), cov("L"), trt("C"), out("Y")};
  s.errors = {{"eH", bern(0.5)}, {"eL", u20()}, {"eY", u20()}};
  s.a2_is_censoring = true;
  s.functions["H"] = identity_of_error();
  s.functions["L"] = build_fn(s, {"H"}, {"eL"}, [](const auto& p, const auto& e) {
    return e[0] < 6 + 8 * p[0] ? 1 : 0;
  });
  s.functions["Y"] = build_fn(s, {"H", "A1"}, {"eY"}, [](const auto& p, const auto& e) {
    return e[0] < 4 + 8 * p[0] + 4 * p[1] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  // rows (a1, l): P(C=1) = (2 + 2 a1 + 6 l)/20
  s.treatments["C"] = {{"A1", "L"}, {0.9, 0.1, 0.6, 0.4, 0.8, 0.2, 0.5, 0.5},
                       std::nullopt};
  return s;
}

// Same world, but dropout ignores the covariate: complete-case means are
// unbiased here, weighting just changes efficiency.
ScenarioSpec indep_censoring() {
  // same world as dep_censoring, but loss to follow-up is a fair lottery:
  // the complete-case analysis stays unbiased and the weighted one merely
  // sharpens it
  ScenarioSpec s = dep_censoring();
  s.name = "indep_censoring";
  s.treatments["C"] = {{}, {0.75, 0.25}, std::nullopt};
  return s;
}

// Sharp null for the direct effect of A1 only: A1 moves L and A2, never Y.
// The alt variant adds a genuine A1 -> Y edge of +0.15.
ScenarioSpec direct_effect(bool with_a1_effect) {
  ScenarioSpec s;
  s.name = with_a1_effect ? "direct_alt" : "direct_null";
  s.variables = {hidden("H"), trt("A1"), cov("L"), trt("A2"), out("Y")};
  s.errors = {{"eH", bern(0.5)}, {"eL", u20()}, {"eY", u20()}};
  s.functions["H"] = identity_of_error();
  s.functions["L"] = build_fn(s, {"H", "A1"}, {"eL"}, [](const auto& p, const auto& e) {
    return e[0] < 5 + 8 * p[0] + 3 * p[1] ? 1 : 0;
  });
  if (with_a1_effect) {
    s.functions["Y"] = build_fn(s, {"H", "A1", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
      return e[0] < 5 + 8 * p[0] + 3 * p[1] + 4 * p[2] ? 1 : 0;
    });
  } else {
    s.functions["Y"] = build_fn(s, {"H", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
      return e[0] < 5 + 8 * p[0] + 4 * p[1] ? 1 : 0;
    });
  }
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  // rows (a1, l): P(A2=1) = (5 + 4 a1 + 5 l)/20
  s.treatments["A2"] = {{"A1", "L"}, {0.75, 0.25, 0.5, 0.5, 0.55, 0.45, 0.3, 0.7},
                        std::nullopt};
  return s;
}

// Point-treatment world for the robustness grid: A2 is the treatment, L a
// four-level covariate (two binary traits coded l = l1 + 2 l2), and both the
// propensity and the outcome regression are non-additive on the logit scale.
// A1 is an inert fair coin so the record format stays uniform.
ScenarioSpec dr_world() {
  ScenarioSpec s;
  s.name = "dr_world";
  s.variables = {trt("A1"), cov("L", 4), trt("A2"), out("Y")};
  s.errors = {{"eL", u20()}, {"eY", u20()}};
  s.functions["L"] = build_fn(s, {}, {"eL"}, [](const auto&, const auto& e) {
    return e[0] / 5;
  });
  s.functions["Y"] = build_fn(s, {"L", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    static const int t0[4] = {2, 4, 6, 8};
    static const int t1[4] = {5, 3, 11, 14};
    return e[0] < (p[1] ? t1 : t0)[p[0]] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  std::vector<double> pi = {0.15, 0.3, 0.65, 0.7};
  std::vector<double> probs;
  for (double p1 : pi) {
    probs.push_back(1.0 - p1);
    probs.push_back(p1);
  }
  s.treatments["A2"] = {{"L"}, probs, std::nullopt};
  return s;
}

// Deterministic additive outcome y = h + a1 + a2: every direct-effect notion
// that contrasts a1 at a fixed mediator value equals exactly 1.
ScenarioSpec additive() {
  ScenarioSpec s;
  s.name = "additive";
  s.variables = {hidden("H"), trt("A1"), cov("L", 1), trt("A2"), out("Y", 4)};
  s.errors = {{"eH", bern(0.5)}};
  s.functions["H"] = identity_of_error();
  s.functions["L"] = {{}, {}, {0}};
  s.functions["Y"] = build_fn(s, {"H", "A1", "A2"}, {}, [](const auto& p, const auto&) {
    return p[0] + p[1] + p[2];
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{"A1"}, {0.6, 0.4, 0.4, 0.6}, std::nullopt};
  return s;
}

// The mediator responds deterministically and oppositely to a1, so the
// principal stratum {A2(0) = A2(1)} is empty and its direct effect does not
// exist, while controlled and pure direct effects remain well defined.
ScenarioSpec psde_flip() {
  ScenarioSpec s;
  s.name = "psde_flip";
  s.variables = {trt("A1"), cov("L", 1), trt("A2"), out("Y")};
  s.errors = {{"eY", u20()}};
  s.functions["L"] = {{}, {}, {0}};
  s.functions["Y"] = build_fn(s, {"A1", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    return e[0] < 8 + 4 * p[0] + 4 * p[1] ? 1 : 0;
  });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  s.treatments["A2"] = {{"A1"}, {0.0, 1.0, 1.0, 0.0}, std::nullopt};
  return s;
}

// Three treatment arms whose pairwise principal-stratum direct effects are
// intransitive: 0->1 and 1->2 are both positive while 0->2 is negative.
ScenarioSpec psde_intrans() {
  ScenarioSpec s;
  s.name = "psde_intrans";
  s.variables = {trt("A1", 3), cov("L", 1), trt("A2"), out("Y")};
  s.errors = {{"eY", u20()}};
  s.functions["L"] = {{}, {}, {0}};
  s.functions["Y"] = build_fn(s, {"A1", "A2"}, {"eY"}, [](const auto& p, const auto& e) {
    static const int t[3][2] = {{6, 12}, {12, 4}, {4, 10}};
    return e[0] < t[p[0]][p[1]] ? 1 : 0;
  });
  double third = 1.0 / 3.0;
  s.treatments["A1"] = {{}, {third, third, third}, std::nullopt};
  s.treatments["A2"] = {{"A1"}, {0.8, 0.2, 0.5, 0.5, 0.2, 0.8}, std::nullopt};
  return s;
}

}  // namespace

std::vector<std::string> builtin_scenario_names() {
  return {"seq_rand",      "formaldehyde", "formaldehyde_null",
          "no_confounding", "no_confounding_coupled",
          "sharp_null",    "null_paradox", "dep_censoring",
          "indep_censoring",
          "direct_null",   "direct_alt",   "dr_world",
          "additive",      "psde_flip",    "psde_intrans"};
}

ScenarioSpec builtin_scenario(const std::string& name) {
  ScenarioSpec s;
  if (name == "seq_rand") s = seq_rand();
  else if (name == "formaldehyde") s = formaldehyde(false);
  else if (name == "formaldehyde_null") s = formaldehyde(true);
  else if (name == "no_confounding") s = no_confounding();
  else if (name == "no_confounding_coupled") s = no_confounding_coupled();
  else if (name == "sharp_null") s = sharp_null();
  else if (name == "null_paradox") s = null_paradox();
  else if (name == "dep_censoring") s = dep_censoring();
  else if (name == "indep_censoring") s = indep_censoring();
  else if (name == "direct_null") s = direct_effect(false);
  else if (name == "direct_alt") s = direct_effect(true);
  else if (name == "dr_world") s = dr_world();
  else if (name == "additive") s = additive();
  else if (name == "psde_flip") s = psde_flip();
  else if (name == "psde_intrans") s = psde_intrans();
  else throw std::invalid_argument("unknown builtin scenario '" + name + "'");
  s.validate();
  return s;
}

ScenarioSpec random_sequential_scenario(std::uint64_t seed) {
  SplitRng rng(seed, 0x5eedu);
  auto tw = [&](int lo, int hi) {  // uniform integer threshold in twentieths
    return lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
  };
  ScenarioSpec s;
  s.name = "random_seq_" + std::to_string(seed);
  s.variables = {hidden("H"), trt("A1"), cov("L"), trt("A2"), out("Y")};
  int ph = tw(6, 14);
  s.errors = {{"eH", bern(ph / 20.0)}, {"eL", u20()}, {"eY", u20()}};
  s.functions["H"] = identity_of_error();
  int lt[4];
  for (int& v : lt) v = tw(3, 17);
  s.functions["L"] = build_fn(s, {"H", "A1"}, {"eL"}, [&](const auto& p, const auto& e) {
    return e[0] < lt[p[0] * 2 + p[1]] ? 1 : 0;
  });
  int yt[16];
  for (int& v : yt) v = tw(2, 18);
  s.functions["Y"] = build_fn(s, {"H", "A1", "L", "A2"}, {"eY"},
                              [&](const auto& p, const auto& e) {
                                return e[0] < yt[((p[0] * 2 + p[1]) * 2 + p[2]) * 2 + p[3]] ? 1 : 0;
                              });
  s.treatments["A1"] = {{}, {0.5, 0.5}, std::nullopt};
  std::vector<double> a2probs;
  for (int r = 0; r < 4; ++r) {
    double p1 = tw(3, 17) / 20.0;
    a2probs.push_back(1.0 - p1);
    a2probs.push_back(p1);
  }
  s.treatments["A2"] = {{"A1", "L"}, a2probs, std::nullopt};
  s.validate();
  return s;
}

double RitovSpec::parity(const double* x) const {
  double s = 1.0;
  for (int j = 0; j < d; ++j) s *= x[j] > 0.5 ? 1.0 : -1.0;
  return s;
}

void RitovSpec::validate() const {
  if (d < 1 || d > 24) throw std::invalid_argument("ritov spec: d out of range");
  if (base - amp < 0.0 || base + amp > 1.0)
    throw std::invalid_argument("ritov spec: outcome mean leaves [0,1]");
  if (tilt < 0.0 || 0.5 + tilt >= 1.0 || 0.5 - tilt <= 0.0)
    throw std::invalid_argument("ritov spec: observation probability leaves (0,1)");
}

RitovSpec ritov_spec() {
  RitovSpec s;
  s.validate();
  return s;
}

ContinuousDataset sample_ritov(const RitovSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  ContinuousDataset out;
  out.scenario_id = "ritov_d" + std::to_string(spec.d);
  out.seed = seed;
  out.d = spec.d;
  out.x.resize(n * static_cast<std::size_t>(spec.d));
  out.a2.resize(n);
  out.y.resize(n);
  SplitRng root(seed, 0x717e);
  for (std::size_t i = 0; i < n; ++i) {
    SplitRng rng = root.child(i);
    double* row = out.x.data() + i * static_cast<std::size_t>(spec.d);
    for (int j = 0; j < spec.d; ++j) row[j] = rng.uniform();
    out.a2[i] = rng.bernoulli(spec.pi(row)) ? 1 : 0;
    out.y[i] = rng.bernoulli(spec.outcome_mean(row)) ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace gmethods
