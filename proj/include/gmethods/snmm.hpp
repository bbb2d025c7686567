#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gmethods/dataset.hpp"
#include "gmethods/scenario.hpp"

namespace gmethods {

// Additive two-stage blip model. Stage 2 is either saturated over (a1, l)
// with one parameter per nonzero a2 level, or a2 * (linear form in a1, l).
// Stage 1 is saturated over the nonzero a1 levels; both blips vanish
// identically at psi = 0 by construction.
struct BlipSpec {
  bool saturated = true;
  std::vector<std::string> stage2_terms;  // design over a1, l (formula mode)
  std::vector<std::string> instrument;    // d(L, A1); empty = stage-2 design

  static BlipSpec Saturated() { return BlipSpec{}; }
  static BlipSpec Linear(std::vector<std::string> terms, std::vector<std::string> d = {}) {
    BlipSpec b;
    b.saturated = false;
    b.stage2_terms = std::move(terms);
    b.instrument = std::move(d);
    return b;
  }
};

struct GEstimate {
  Eigen::VectorXd psi;  // stage-2 block, then stage-1 block
  Eigen::VectorXd se;   // sandwich, same order
  Eigen::MatrixXd cov;
  std::vector<std::string> labels;
  int stage2_dim = 0;
  bool saturated = true;
  bool known_probs = false;

  // fitted blips on every stratum
  std::vector<double> blip2;  // flat (a1*L + l)*A2 + a2
  std::vector<double> blip1;  // per a1, blip1[0] = 0
  int A1 = 2, L = 2, A2 = 2;

  double gamma2(int a1, int l, int a2) const {
    return blip2[static_cast<std::size_t>((a1 * L + l) * A2 + a2)];
  }
  double gamma1(int a1) const { return blip1[static_cast<std::size_t>(a1)]; }
};

// Sequential g-estimation: solve P_n[(Y - gamma2) d(L,A1) r(A2|L,A1)] = 0,
// then P_n[(Y - gamma2 - gamma1) r(A1)] = 0, residuals against known design
// tables (pass the scenario) or saturated frequencies (pass nullptr).
GEstimate g_estimate(const CellCounts& cells, const BlipSpec& spec, const ScenarioSpec* known);
GEstimate g_estimate(const LongitudinalDataset& data, const BlipSpec& spec,
                     const ScenarioSpec* known);

// Score test of the g-null mean hypothesis: the saturated estimating
// functions evaluated at psi = 0 should all be centered.
struct GNullReport {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool known_probs = false;

  bool rejects(double alpha) const { return alpha > 0.0 && p_value <= alpha; }
};

GNullReport gnull_mean_test(const CellCounts& cells, const ScenarioSpec* known);
GNullReport gnull_mean_test(const LongitudinalDataset& data, const ScenarioSpec* known);

// Dynamic-programming solution of the two-stage regime problem on fitted
// blips: stage 2 by argmax of gamma2 per (a1, l), stage 1 by comparing the
// blipped-up outcome across a1 arms. Ties break to the lower treatment.
struct OptimalRegime {
  std::vector<int> g2_opt;   // flat a1*L + l
  std::vector<bool> g2_tie;
  int a1_opt = 0;
  bool a1_tie = false;
  std::vector<double> value_by_a1;  // estimated E[Y(a1, g2_opt(a1, .))]
  std::vector<double> gamma1_opt;   // value_by_a1 centered at a1 = 0
  double value = 0.0;
  GEstimate fit;

  Regime regime() const;  // the chosen dynamic regime
};

OptimalRegime optimal_regime(const CellCounts& cells, const BlipSpec& spec,
                             const ScenarioSpec* known);
OptimalRegime optimal_regime(const LongitudinalDataset& data, const BlipSpec& spec,
                             const ScenarioSpec* known);

// Exact blips by counterfactual enumeration, for scenarios whose first
// treatment is marginally randomized: gamma2 conditions on the natural
// history {L(a1)=l, A2(a1)=a2}, gamma1 is the a2=0 contrast across a1 arms.
std::vector<double> oracle_blip2(const ScenarioSpec& spec);  // (a1*L + l)*A2 + a2
std::vector<double> oracle_blip1(const ScenarioSpec& spec);  // per a1

}  // namespace gmethods
