#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmethods/dataset.hpp"
#include "gmethods/scenario.hpp"

namespace gmethods {

// ---------------------------------------------------------------------------
// Nuisance models for mu = E[Y(1,1)]: pi(l) = P(A2=1 | A1=1, L=l) and
// b(l) = E[Y | A1=1, L=l, A2=1]. Both are fit within the a1=1 arm, either
// saturated in l or logit-linear in l terms. `declared_correct` is carried
// into reports so a misspecification study can label its own arms.

struct NuisanceModel {
  bool saturated = true;
  bool zero = false;               // outcome model only: b identically 0
  std::vector<std::string> terms;  // l factors; intercept implicit
  bool declared_correct = true;

  static NuisanceModel Saturated(bool declared = true) { return {true, false, {}, declared}; }
  static NuisanceModel Logistic(std::vector<std::string> t, bool declared = false) {
    return {false, false, std::move(t), declared};
  }
  static NuisanceModel Zero() { return {false, true, {}, false}; }
};

struct NuisancePair {
  NuisanceModel pi_hat = NuisanceModel::Saturated();
  NuisanceModel b_hat = NuisanceModel::Saturated();
  // >0 clips fitted pi from below (misspecification studies only); a clipped
  // fit is flagged in the report
  double pi_floor = 0.0;
};

struct DrReport {
  enum class Kind { aipw, regression, targeted };

  Kind kind = Kind::aipw;
  double value = 0.0;
  bool in_range = true;  // within the hull of observed outcome values
  bool pi_declared_correct = true;
  bool b_declared_correct = true;
  bool pi_floored = false;
  // regression only: the 1/pi column was inside the span of the outcome
  // design (e.g. a saturated model), so it was removed before fitting
  bool clever_dropped = false;
  double theta = 0.0;      // coefficient on 1/pi (regression, targeted)
  std::vector<double> pi;  // fitted values per l, NaN where the arm is empty
  std::vector<double> b;
};

// AIPW: {P_n[A1]}^{-1} P_n[A1 {(A2/pi(L)) Y - ((A2/pi(L)) - 1) b(L)}].
DrReport aipw(const CellCounts& cells, const NuisancePair& nuis);
DrReport aipw(const LongitudinalDataset& data, const NuisancePair& nuis);

// Same functional with nuisance values supplied directly, one per l level;
// used by the second-order study, where the errors are injected by hand.
double aipw_value(const CellCounts& cells, const std::vector<double>& pi,
                  const std::vector<double>& b);

// Plug-in regression estimator: joint logistic fit of Y on the b_hat terms
// plus the covariate 1/pi(L) among a1=1, a2=1 records, then
// {P_n[A1]}^{-1} P_n[A1 expit{m(L) + theta/pi(L)}]. Always inside [0,1].
DrReport regression_dr(const CellCounts& cells, const NuisancePair& nuis);
DrReport regression_dr(const LongitudinalDataset& data, const NuisancePair& nuis);

// Targeted variant: the b_hat model is fit first as a plain initial
// estimate, then frozen as an offset while a one-parameter fluctuation
// along 1/pi(L) is fit by maximum likelihood.
DrReport targeted_dr(const CellCounts& cells, const NuisancePair& nuis);
DrReport targeted_dr(const LongitudinalDataset& data, const NuisancePair& nuis);

// ---------------------------------------------------------------------------
// Misspecification grid: every estimator under {pi right/wrong} x
// {b right/wrong}, Monte Carlo over multinomial redraws of the n-scaled
// population table. "Wrong" is concrete: pi ignoring l entirely, b seeing
// only the low bit of l.

struct DrGridCell {
  bool pi_correct = true;
  bool b_correct = true;
  // indexed by DrReport::Kind
  double bias[3] = {0, 0, 0};
  double sd[3] = {0, 0, 0};
  double mc_se[3] = {0, 0, 0};
};

struct DrGrid {
  double oracle = 0.0;
  int n = 0;
  int replications = 0;
  std::vector<DrGridCell> cells;  // (T,T), (T,F), (F,T), (F,F)
  // pure weighting comparator (b = 0) under the wrong pi, same redraws
  double iptw_bias = 0.0;
  double iptw_sd = 0.0;
};

DrGrid dr_grid(const ScenarioSpec& spec, int n, int replications, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Second-order bias: inject nuisance errors c_l n^{-alpha} into pi and
// d_l n^{-beta} into b on the exact population table and watch the AIPW
// bias decay like n^{-(alpha+beta)}. No Monte Carlo noise is involved.

struct SecondOrderReport {
  std::vector<int> ns;
  std::vector<double> bias;  // exact population bias at each n
  double slope = 0.0;        // d log|bias| / d log n, fitted
  double alpha = 0.0;
  double beta = 0.0;
};

SecondOrderReport second_order_bias(const ScenarioSpec& spec, const std::vector<int>& ns,
                                    double alpha, double beta);

struct DrHarnessResult {
  DrGrid grid;  // at the largest n
  SecondOrderReport second_order;
};

DrHarnessResult dr_harness(const ScenarioSpec& spec, const std::vector<int>& n_grid,
                           int replications, std::uint64_t seed);

}  // namespace gmethods
