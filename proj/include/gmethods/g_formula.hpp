#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmethods/dataset.hpp"
#include "gmethods/scenario.hpp"

namespace gmethods {

// Nuisance models for the two g-formula ingredients. Saturated fits use raw
// stratum frequencies. Parametric fits use a logistic outcome model over
// terms in (a1, l, a2) and a covariate model over terms in a1 (plain
// logistic when l is binary, proportional odds otherwise).
struct NuisanceSpec {
  bool saturated = true;
  std::vector<std::string> outcome_terms;
  std::vector<std::string> covariate_terms;

  static NuisanceSpec Saturated() { return {}; }
  static NuisanceSpec Parametric(std::vector<std::string> outcome,
                                 std::vector<std::string> covariate) {
    NuisanceSpec s;
    s.saturated = false;
    s.outcome_terms = std::move(outcome);
    s.covariate_terms = std::move(covariate);
    return s;
  }
};

struct GFormulaEstimate {
  double value = 0.0;
  Regime regime;
  bool saturated = true;
  std::vector<double> l_weights;         // fhat(l | a1 = g.a1)
  std::vector<double> strata_counts;     // mass at (g.a1, l, g(l)), per l
  std::vector<std::string> empty_strata; // extrapolated strata (parametric only)
};

// Point-treatment form of Robins' formula for a two-decision regime:
//   sum_l fhat(l | a1) Ehat[Y | a1, l, a2 = g(l)].
// Works on counts and on exact probability cells alike. Saturated fits with
// an empty positive-weight stratum throw std::runtime_error naming the
// strata; parametric fits extrapolate and record them instead.
GFormulaEstimate gformula(const CellCounts& cells, const Regime& g, const NuisanceSpec& nuis);
GFormulaEstimate gformula(const LongitudinalDataset& data, const Regime& g,
                          const NuisanceSpec& nuis);

GFormulaEstimate gformula_static(const CellCounts& cells, int a1, int a2,
                                 const NuisanceSpec& nuis);
GFormulaEstimate gformula_dynamic(const CellCounts& cells, int a1, std::vector<int> a2_by_l,
                                  const NuisanceSpec& nuis);

// Rejection-rate curve for the null paradox: a sharply null scenario where
// the confounder is also treatment-dependent, analyzed with parametric
// nuisance models that cannot both be correct under the null. The Wald test
// of "static (1,1) vs (0,0) contrast = 0" uses a bootstrap standard error.
struct NullParadoxRow {
  int n = 0;
  double rejection_rate = 0.0;
  double mc_se = 0.0;       // binomial Monte Carlo error of the rate
  double mean_contrast = 0.0;
};

struct NullParadoxResult {
  std::vector<NullParadoxRow> parametric;
  std::vector<NullParadoxRow> saturated;  // type-I error control arm
  int replications = 0;
  double alpha = 0.05;
};

NullParadoxResult null_paradox_experiment(const ScenarioSpec& spec,
                                          const NuisanceSpec& parametric,
                                          const std::vector<int>& n_grid, int replications,
                                          double alpha, std::uint64_t seed,
                                          int n_bootstrap = 200);

}  // namespace gmethods
