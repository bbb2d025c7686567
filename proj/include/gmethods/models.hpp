#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "gmethods/dataset.hpp"
#include "gmethods/rng.hpp"

namespace gmethods {

// ---------------------------------------------------------------------------
// Design terms. A term is a ':'-separated product of factors; valid factors:
//   a1, a2          treatment codes as numeric values
//   l               covariate code as a numeric value
//   l@K             indicator of l == K (dummy coding)
//   lbitJ           bit J of the covariate code (useful when l packs traits)
// The intercept is always included and is not written as a term.

struct Term {
  std::string label;
  std::vector<std::string> factors;
};

std::vector<Term> parse_terms(const std::vector<std::string>& specs);
double eval_term(const Term& t, int a1, int l, int a2);

// Design row: 1 followed by each term's value.
Eigen::VectorXd design_row(const std::vector<Term>& terms, int a1, int l, int a2);

// ---------------------------------------------------------------------------
// Weighted observations. `y` is the within-group mean response (any value in
// [0,1] is legal for the logistic likelihood; the fit only sees w and w*y).

struct WeightedObs {
  Eigen::VectorXd x;
  double w = 0.0;
  double y = 0.0;
};

struct GlmFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;  // inverse expected information at the optimum
  std::vector<std::string> labels;
  int iterations = 0;
  double score_norm = 0.0;
};

// IRLS logistic regression. Throws std::runtime_error naming the worst term
// on separation or when the score fails to reach `tol` within `max_iter`;
// throws std::invalid_argument naming the collinear terms on a singular
// design.
GlmFit fit_logistic(const std::vector<WeightedObs>& rows,
                    const std::vector<std::string>& labels, double tol = 1e-10,
                    int max_iter = 100);

// Same contract, identity link (weighted least squares, closed form).
GlmFit fit_wls(const std::vector<WeightedObs>& rows, const std::vector<std::string>& labels);

// Weighted logistic fit with a fixed per-row offset added to the linear
// predictor (used for one-parameter fluctuations and offset covariates).
GlmFit fit_logistic_offset(const std::vector<WeightedObs>& rows,
                           const std::vector<double>& offset,
                           const std::vector<std::string>& labels, double tol = 1e-10,
                           int max_iter = 100);

// ---------------------------------------------------------------------------
// Proportional-odds (cumulative logit) model for an ordinal response with K
// levels: P(Y <= j | x) = expit(theta_j - beta . x), theta increasing.

struct OrdinalObs {
  Eigen::VectorXd x;              // slope covariates (no intercept)
  std::vector<double> w;          // weight per response level, length K
};

struct PropOddsFit {
  Eigen::VectorXd theta;          // K-1 cutpoints, increasing
  Eigen::VectorXd beta;
  int iterations = 0;
  double score_norm = 0.0;

  // fitted category probabilities for covariates x
  std::vector<double> probs(const Eigen::VectorXd& x) const;
};

PropOddsFit fit_prop_odds(const std::vector<OrdinalObs>& rows, int n_levels,
                          double tol = 1e-10, int max_iter = 100);

// ---------------------------------------------------------------------------
// Generic damped Newton for estimating systems G(theta) = 0 with a numeric
// Jacobian (central differences, relative step 1e-6). Throws on singular
// Jacobian or non-convergence (message carries the final residual norm).

using VecFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::MatrixXd numeric_jacobian(const VecFn& g, const Eigen::VectorXd& at);
Eigen::VectorXd damped_newton(const VecFn& g, Eigen::VectorXd start, double tol = 1e-10,
                              int max_iter = 100);

// Sandwich covariance of sqrt(n)-normalized estimating-equation roots:
// cov(theta_hat) = J^{-1} M J^{-T} / n with J = d P_n[U]/d theta and
// M = P_n[U U^T].
Eigen::MatrixXd sandwich_cov(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& meat,
                             double n);

// ---------------------------------------------------------------------------
// Nonparametric bootstrap on collapsed cells: redraws counts from the
// empirical cell distribution (including the censored cells) with the same
// total. O(1) per draw via an alias table.

class CategoricalSampler {
 public:
  explicit CategoricalSampler(const std::vector<double>& weights);
  int draw(SplitRng& rng) const;

 private:
  std::vector<double> accept_;
  std::vector<int> alias_;
};

CellCounts resample_cells(const CellCounts& counts, SplitRng& rng);

// ---------------------------------------------------------------------------
// Tail utilities.

double chi_square_cdf(double x, double df);
double chi_square_pvalue(double stat, double df);
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace gmethods
