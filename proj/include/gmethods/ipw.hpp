#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gmethods/dataset.hpp"
#include "gmethods/scenario.hpp"

namespace gmethods {

// ---------------------------------------------------------------------------
// Weights. Probabilities are either taken from a known design (an exact
// scenario law) or estimated by saturated frequencies; which one was used is
// recorded, since that distinction is what separates a trial from an
// observational analysis.

struct WeightVector {
  enum class Kind { w, sw, censoring };

  Kind kind = Kind::w;
  bool known_probs = false;
  std::optional<double> truncation_quantile;  // default: no truncation

  std::vector<double> value;  // per record; 0 on censored records

  // weight as a function of the cell; (a1, l, a2) for w/sw, (a1, l) for
  // censoring weights
  std::vector<double> cell;
  int A1 = 2, L = 2, A2 = 2;

  double max_weight = 0.0;
  double cv = 0.0;                  // sd/mean over used records
  std::vector<double> mean_by_a1;   // per-stratum mean, ~1 for sw

  double at(int a1, int l, int a2) const {
    return cell[static_cast<std::size_t>((a1 * L + l) * A2 + a2)];
  }
  double at_censor(int a1, int l) const {
    return cell[static_cast<std::size_t>(a1 * L + l)];
  }
};

// W = 1/{f(A1) f(A2|A1,L)}. Pass the generating scenario for known-by-design
// probabilities, nullptr to estimate them by saturated frequencies.
WeightVector standard_weights(const LongitudinalDataset& data, const ScenarioSpec* known,
                              std::optional<double> truncation = std::nullopt);

// SW = f(A2|A1) / f(A2|A1,L).
WeightVector stabilized_weights(const LongitudinalDataset& data, const ScenarioSpec* known,
                                std::optional<double> truncation = std::nullopt);

// 1(C=0) / P(C=0|A1,L) for censored designs.
WeightVector censoring_weights(const LongitudinalDataset& data, const ScenarioSpec* known);

// ---------------------------------------------------------------------------
// Horvitz-Thompson counterfactual means with known treatment probabilities.

// Two-decision version: P_n[1{A1=a1, A2=a2} Y / {f(a1) f(a2|A1,L)}].
double horvitz_thompson(const LongitudinalDataset& data, int a1, int a2,
                        const ScenarioSpec& known);
double horvitz_thompson(const CellCounts& cells, int a1, int a2, const ScenarioSpec& known);

// Missing-data version: P_n[A2 Y / pi(X)] with a known observation law.
double horvitz_thompson(const ContinuousDataset& data,
                        const std::function<double(const double*)>& pi);

// ---------------------------------------------------------------------------
// IPCW estimate of the intention-to-treat contrast under censoring by A2:
// solve P_n[1(C=0) (Y - beta A1)(A1 - pi1) / Phat(C=0|A1,L)] = 0.

struct IpcwReport {
  double beta = 0.0;
  double se = 0.0;  // bootstrap
  double pi1 = 0.5;
  bool known_probs = false;
  int n_bootstrap = 0;
  double complete_case_beta = 0.0;  // unweighted comparator, same contrast
};

IpcwReport ipcw_itt(const LongitudinalDataset& data, const ScenarioSpec* known,
                    int n_bootstrap = 200, std::uint64_t seed = 0, double pi1 = 0.5);

// ---------------------------------------------------------------------------
// Marginal structural model for the counterfactual means E[Y(a1,a2)]:
// link(E[Y(a1,a2)]) = beta0 + gamma(a1,a2; beta1), gamma linear in beta1.

struct MsmSpec {
  enum class Link { identity, logit, log };
  Link link = Link::identity;
  std::vector<std::string> terms;  // over a1, a2 only; gamma(.;0) = 0 holds by linearity
  // instrument v(a1,a2) for the estimating equation; empty means "use the
  // design row". Must keep the system square: one term per design term.
  std::vector<std::string> instrument;
};

struct MsmReport {
  MsmSpec spec;
  Eigen::VectorXd beta;  // (beta0, beta1)
  Eigen::MatrixXd cov;   // sandwich
  std::vector<std::string> labels;
  WeightVector::Kind weight_kind = WeightVector::Kind::w;
  bool known_probs = false;
  double weight_max = 0.0;
  double weight_cv = 0.0;
  int newton_iterations = 0;

  double fitted(int a1, int a2) const;
};

MsmReport fit_msm(const LongitudinalDataset& data, const MsmSpec& spec,
                  const WeightVector& weights);

// ---------------------------------------------------------------------------
// Verma-constraint test: reweight by 1/f(A2|A1,L) and test Y independent of
// A1 within each A2 level of the reweighted law. The statistic is a weighted
// chi-square; its null law is nonstandard, so the p-value comes from a
// centered nonparametric bootstrap.

struct VermaReport {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> per_a2;  // statistic contribution per a2 level
  int n_bootstrap = 0;
  int n_bootstrap_used = 0;
  bool known_probs = false;
};

VermaReport verma_test(const LongitudinalDataset& data, const ScenarioSpec* known,
                       int n_bootstrap = 500, std::uint64_t seed = 0);
VermaReport verma_test(const CellCounts& cells, const ScenarioSpec* known,
                       int n_bootstrap = 500, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// The known-randomization-probability demonstration: with d continuous
// covariates and a parity-shaped observation law, the weighted estimator
// converges at root-n while an outcome-regression plug-in that ignores pi
// stalls at a fixed bias.

struct RitovRow {
  int n = 0;
  double ht_rmse = 0.0;
  double ht_mean_abs = 0.0;
  double plug_rmse = 0.0;
  double plug_mean_abs = 0.0;
};

struct RitovResult {
  std::vector<RitovRow> rows;
  double ht_slope = 0.0;             // d log2 rmse / d log2 n
  double plug_to_ht_ratio = 0.0;     // mean abs errors at the largest n
  int replications = 0;
};

RitovResult ritov_experiment(const RitovSpec& spec, const std::vector<int>& n_grid,
                             int replications, std::uint64_t seed);

}  // namespace gmethods
