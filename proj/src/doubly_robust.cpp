#include "gmethods/doubly_robust.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gmethods/models.hpp"
#include "gmethods/rng.hpp"

namespace gmethods {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double expit(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// per-l sufficient statistics of the a1=1 arm
struct ArmData {
  int L = 0;
  std::vector<double> mass;   // a1=1 mass at l
  std::vector<double> mass1;  // a1=1, a2=1 mass at l
  std::vector<double> ybar1;  // outcome mean in (1, l, 1)
  std::vector<double> a2bar;  // saturated pi
  double total = 0.0;
  double ymin = 0.0, ymax = 0.0;
};

ArmData arm_data(const CellCounts& c) {
  if (c.A1 < 2) throw std::invalid_argument("the target E[Y(1,1)] needs a treated a1 arm");
  for (double v : c.wcens)
    if (v > 0.0) throw std::invalid_argument("dr estimators do not handle censored designs");
  ArmData a;
  a.L = c.L;
  a.mass.assign(static_cast<std::size_t>(c.L), 0.0);
  a.mass1.assign(static_cast<std::size_t>(c.L), 0.0);
  a.ybar1.assign(static_cast<std::size_t>(c.L), kNan);
  a.a2bar.assign(static_cast<std::size_t>(c.L), kNan);
  int lo = c.Y, hi = -1;
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l)
      for (int a2 = 0; a2 < c.A2; ++a2)
        for (int y = 0; y < c.Y; ++y) {
          double w = c.at(a1, l, a2, y);
          if (w <= 0.0) continue;
          lo = std::min(lo, y);
          hi = std::max(hi, y);
          if (a1 != 1) continue;
          a.mass[static_cast<std::size_t>(l)] += w;
          if (a2 == 1) a.mass1[static_cast<std::size_t>(l)] += w;
        }
  for (int l = 0; l < c.L; ++l) {
    double m = a.mass[static_cast<std::size_t>(l)];
    if (m <= 0.0) continue;
    double m1 = 0, s1 = 0, ma2 = 0;
    for (int y = 0; y < c.Y; ++y) {
      m1 += c.at(1, l, 1, y);
      s1 += y * c.at(1, l, 1, y);
      for (int a2 = 0; a2 < c.A2; ++a2) ma2 += a2 * c.at(1, l, a2, y);
    }
    a.a2bar[static_cast<std::size_t>(l)] = ma2 / m;
    if (m1 > 0.0) a.ybar1[static_cast<std::size_t>(l)] = s1 / m1;
    a.total += m;
  }
  if (a.total <= 0.0) throw std::runtime_error("no records with a1=1");
  if (hi < 0) throw std::invalid_argument("empty data");
  a.ymin = lo;
  a.ymax = hi;
  return a;
}

std::vector<Term> l_terms(const std::vector<std::string>& specs) {
  auto terms = parse_terms(specs);
  for (const auto& t : terms)
    for (const auto& f : t.factors)
      if (f == "a1" || f == "a2")
        throw std::invalid_argument("nuisance terms must be functions of l");
  return terms;
}

std::vector<std::string> labels_of(const std::vector<Term>& terms) {
  std::vector<std::string> lab{"(intercept)"};
  for (const auto& t : terms) lab.push_back(t.label);
  return lab;
}

std::vector<double> fit_pi(const ArmData& arm, const NuisanceModel& model, double floor,
                           bool* floored) {
  if (model.zero) throw std::invalid_argument("the treatment model cannot be identically zero");
  std::vector<double> pi(static_cast<std::size_t>(arm.L), kNan);
  if (model.saturated) {
    pi = arm.a2bar;
  } else {
    auto terms = l_terms(model.terms);
    std::vector<WeightedObs> rows;
    for (int l = 0; l < arm.L; ++l) {
      double m = arm.mass[static_cast<std::size_t>(l)];
      if (m <= 0.0) continue;
      rows.push_back({design_row(terms, 0, l, 0), m, arm.a2bar[static_cast<std::size_t>(l)]});
    }
    auto fit = fit_logistic(rows, labels_of(terms));
    for (int l = 0; l < arm.L; ++l)
      if (arm.mass[static_cast<std::size_t>(l)] > 0.0)
        pi[static_cast<std::size_t>(l)] = expit(design_row(terms, 0, l, 0).dot(fit.beta));
  }
  for (int l = 0; l < arm.L; ++l) {
    if (arm.mass[static_cast<std::size_t>(l)] <= 0.0) continue;
    double& p = pi[static_cast<std::size_t>(l)];
    if (p > 0.0) continue;
    if (floor > 0.0) {
      p = floor;
      if (floored) *floored = true;
    } else {
      throw std::runtime_error("positivity: estimated pi is zero in stratum l=" +
                               std::to_string(l));
    }
  }
  return pi;
}

// outcome-model rows: grouped (a1=1, a2=1) records per l
std::vector<WeightedObs> outcome_rows(const ArmData& arm, const std::vector<Term>& terms) {
  std::vector<WeightedObs> rows;
  for (int l = 0; l < arm.L; ++l) {
    double m = arm.mass1[static_cast<std::size_t>(l)];
    if (m <= 0.0) continue;
    rows.push_back({design_row(terms, 0, l, 0), m, arm.ybar1[static_cast<std::size_t>(l)]});
  }
  if (rows.empty()) throw std::runtime_error("no records with a1=1, a2=1 to fit the outcome model");
  return rows;
}

void require_saturated_cells(const ArmData& arm) {
  for (int l = 0; l < arm.L; ++l)
    if (arm.mass[static_cast<std::size_t>(l)] > 0.0 &&
        arm.mass1[static_cast<std::size_t>(l)] <= 0.0)
      throw std::runtime_error("cannot fit a saturated outcome model: no records with a1=1,l=" +
                               std::to_string(l) + ",a2=1");
}

std::vector<double> fit_b(const ArmData& arm, const NuisanceModel& model) {
  std::vector<double> b(static_cast<std::size_t>(arm.L), kNan);
  if (model.zero) {
    for (int l = 0; l < arm.L; ++l)
      if (arm.mass[static_cast<std::size_t>(l)] > 0.0) b[static_cast<std::size_t>(l)] = 0.0;
    return b;
  }
  if (model.saturated) {
    require_saturated_cells(arm);
    return arm.ybar1;
  }
  auto terms = l_terms(model.terms);
  auto fit = fit_logistic(outcome_rows(arm, terms), labels_of(terms));
  for (int l = 0; l < arm.L; ++l)
    if (arm.mass[static_cast<std::size_t>(l)] > 0.0)
      b[static_cast<std::size_t>(l)] = expit(design_row(terms, 0, l, 0).dot(fit.beta));
  return b;
}

// all-0 / all-1 fitting strata have their ML limit outside the parameter
// space; the plug-in limit itself is exact
bool pure_stratum_value(const ArmData& arm, double* value) {
  bool all0 = true, all1 = true;
  for (int l = 0; l < arm.L; ++l) {
    if (arm.mass1[static_cast<std::size_t>(l)] <= 0.0) continue;
    double yb = arm.ybar1[static_cast<std::size_t>(l)];
    all0 = all0 && yb == 0.0;
    all1 = all1 && yb == 1.0;
  }
  if (all0 == all1) return false;  // mixed (or nothing populated: caught later)
  *value = all1 ? 1.0 : 0.0;
  return true;
}

double plug_in_mean(const ArmData& arm, const std::vector<double>& b) {
  double v = 0.0;
  for (int l = 0; l < arm.L; ++l) {
    double m = arm.mass[static_cast<std::size_t>(l)];
    if (m > 0.0) v += m * b[static_cast<std::size_t>(l)];
  }
  return v / arm.total;
}

double logit_clipped(double p) {
  constexpr double kCap = 15.0;
  if (p <= 0.0) return -kCap;
  if (p >= 1.0) return kCap;
  return std::min(kCap, std::max(-kCap, std::log(p / (1.0 - p))));
}

}  // namespace

// ---------------------------------------------------------------------------

double aipw_value(const CellCounts& cells, const std::vector<double>& pi,
                  const std::vector<double>& b) {
  if (static_cast<int>(pi.size()) != cells.L || static_cast<int>(b.size()) != cells.L)
    throw std::invalid_argument("nuisance values must cover every l level");
  double num = 0.0, den = 0.0;
  for (int l = 0; l < cells.L; ++l)
    for (int a2 = 0; a2 < cells.A2; ++a2)
      for (int y = 0; y < cells.Y; ++y) {
        double w = cells.at(1, l, a2, y);
        if (w <= 0.0) continue;
        double p = pi[static_cast<std::size_t>(l)];
        if (!(p > 0.0))
          throw std::runtime_error("positivity: pi is zero in stratum l=" + std::to_string(l));
        double ratio = (a2 == 1 ? 1.0 : 0.0) / p;
        num += w * (ratio * y - (ratio - 1.0) * b[static_cast<std::size_t>(l)]);
        den += w;
      }
  if (den <= 0.0) throw std::runtime_error("no records with a1=1");
  return num / den;
}

DrReport aipw(const CellCounts& cells, const NuisancePair& nuis) {
  auto arm = arm_data(cells);
  DrReport r;
  r.kind = DrReport::Kind::aipw;
  r.pi_declared_correct = nuis.pi_hat.declared_correct;
  r.b_declared_correct = nuis.b_hat.declared_correct;
  r.pi = fit_pi(arm, nuis.pi_hat, nuis.pi_floor, &r.pi_floored);
  r.b = fit_b(arm, nuis.b_hat);
  r.value = aipw_value(cells, r.pi, r.b);
  r.in_range = r.value >= arm.ymin - 1e-12 && r.value <= arm.ymax + 1e-12;
  return r;
}

DrReport aipw(const LongitudinalDataset& data, const NuisancePair& nuis) {
  return aipw(CellCounts::from(data), nuis);
}

DrReport regression_dr(const CellCounts& cells, const NuisancePair& nuis) {
  if (cells.Y != 2)
    throw std::invalid_argument("the regression estimator needs a binary outcome");
  if (nuis.b_hat.zero)
    throw std::invalid_argument("the regression estimator needs an outcome model");
  auto arm = arm_data(cells);

  DrReport r;
  r.kind = DrReport::Kind::regression;
  r.pi_declared_correct = nuis.pi_hat.declared_correct;
  r.b_declared_correct = nuis.b_hat.declared_correct;
  r.pi = fit_pi(arm, nuis.pi_hat, nuis.pi_floor, &r.pi_floored);
  r.b.assign(static_cast<std::size_t>(arm.L), kNan);

  double pure;
  if (pure_stratum_value(arm, &pure)) {
    // the ML limit: every fitted probability is that constant
    for (int l = 0; l < arm.L; ++l)
      if (arm.mass[static_cast<std::size_t>(l)] > 0.0) r.b[static_cast<std::size_t>(l)] = pure;
    r.value = pure;
    r.in_range = true;
    return r;
  }

  if (nuis.b_hat.saturated) {
    // a saturated outcome design already spans 1/pi on the fitting strata:
    // the clever covariate changes nothing, so it is dropped and the fit is
    // the stratum means themselves
    require_saturated_cells(arm);
    r.clever_dropped = true;
    r.b = arm.ybar1;
    r.value = plug_in_mean(arm, r.b);
    r.in_range = true;
    return r;
  }

  auto terms = l_terms(nuis.b_hat.terms);
  auto rows = outcome_rows(arm, terms);

  // does 1/pi add a direction on the fitting strata?
  const auto p = static_cast<int>(rows.front().x.size());
  Eigen::MatrixXd base(static_cast<Eigen::Index>(rows.size()), p + 1);
  int ri = 0;
  std::vector<double> clever(rows.size());
  for (int l = 0; l < arm.L; ++l) {
    if (arm.mass1[static_cast<std::size_t>(l)] <= 0.0) continue;
    double sw = std::sqrt(arm.mass1[static_cast<std::size_t>(l)]);
    base.row(ri).head(p) = sw * rows[static_cast<std::size_t>(ri)].x.transpose();
    clever[static_cast<std::size_t>(ri)] = 1.0 / r.pi[static_cast<std::size_t>(l)];
    base(ri, p) = sw * clever[static_cast<std::size_t>(ri)];
    ++ri;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> with(base);
  with.setThreshold(1e-9);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> without(base.leftCols(p).eval());
  without.setThreshold(1e-9);

  GlmFit fit;
  std::vector<double> beta_clever;
  if (with.rank() == without.rank()) {
    r.clever_dropped = true;
    fit = fit_logistic(rows, labels_of(terms));
  } else {
    auto labels = labels_of(terms);
    labels.push_back("1/pi");
    auto wide = rows;
    for (std::size_t i = 0; i < wide.size(); ++i) {
      Eigen::VectorXd x(p + 1);
      x.head(p) = wide[i].x;
      x(p) = clever[i];
      wide[i].x = x;
    }
    fit = fit_logistic(wide, labels);
    r.theta = fit.beta(p);
  }
  for (int l = 0; l < arm.L; ++l) {
    if (arm.mass[static_cast<std::size_t>(l)] <= 0.0) continue;
    double eta = design_row(terms, 0, l, 0).dot(fit.beta.head(p));
    if (!r.clever_dropped) eta += r.theta / r.pi[static_cast<std::size_t>(l)];
    r.b[static_cast<std::size_t>(l)] = expit(eta);
  }
  r.value = plug_in_mean(arm, r.b);
  r.in_range = true;  // a mean of expits
  return r;
}

DrReport regression_dr(const LongitudinalDataset& data, const NuisancePair& nuis) {
  return regression_dr(CellCounts::from(data), nuis);
}

DrReport targeted_dr(const CellCounts& cells, const NuisancePair& nuis) {
  if (cells.Y != 2)
    throw std::invalid_argument("the targeted estimator needs a binary outcome");
  auto arm = arm_data(cells);

  DrReport r;
  r.kind = DrReport::Kind::targeted;
  r.pi_declared_correct = nuis.pi_hat.declared_correct;
  r.b_declared_correct = nuis.b_hat.declared_correct;
  r.pi = fit_pi(arm, nuis.pi_hat, nuis.pi_floor, &r.pi_floored);
  r.b.assign(static_cast<std::size_t>(arm.L), kNan);

  double pure;
  if (pure_stratum_value(arm, &pure)) {
    for (int l = 0; l < arm.L; ++l)
      if (arm.mass[static_cast<std::size_t>(l)] > 0.0) r.b[static_cast<std::size_t>(l)] = pure;
    r.value = pure;
    r.in_range = true;
    return r;
  }

  // the frozen initial estimate, on the logit scale
  std::vector<double> mhat(static_cast<std::size_t>(arm.L), 0.0);
  if (nuis.b_hat.zero) {
    // keep zeros: a deliberately poor initial guess of 1/2
  } else if (nuis.b_hat.saturated) {
    require_saturated_cells(arm);
    for (int l = 0; l < arm.L; ++l)
      if (arm.mass1[static_cast<std::size_t>(l)] > 0.0)
        mhat[static_cast<std::size_t>(l)] = logit_clipped(arm.ybar1[static_cast<std::size_t>(l)]);
  } else {
    auto terms = l_terms(nuis.b_hat.terms);
    auto fit = fit_logistic(outcome_rows(arm, terms), labels_of(terms));
    for (int l = 0; l < arm.L; ++l)
      mhat[static_cast<std::size_t>(l)] = design_row(terms, 0, l, 0).dot(fit.beta);
  }

  // one-parameter fluctuation along 1/pi with the initial fit as offset
  std::vector<WeightedObs> rows;
  std::vector<double> offsets;
  for (int l = 0; l < arm.L; ++l) {
    double m1 = arm.mass1[static_cast<std::size_t>(l)];
    if (m1 <= 0.0) continue;
    Eigen::VectorXd x(1);
    x(0) = 1.0 / r.pi[static_cast<std::size_t>(l)];
    rows.push_back({x, m1, arm.ybar1[static_cast<std::size_t>(l)]});
    offsets.push_back(mhat[static_cast<std::size_t>(l)]);
  }
  if (rows.empty()) throw std::runtime_error("no records with a1=1, a2=1 to fit the outcome model");
  auto fl = fit_logistic_offset(rows, offsets, {"1/pi"});
  r.theta = fl.beta(0);

  for (int l = 0; l < arm.L; ++l)
    if (arm.mass[static_cast<std::size_t>(l)] > 0.0)
      r.b[static_cast<std::size_t>(l)] =
          expit(mhat[static_cast<std::size_t>(l)] + r.theta / r.pi[static_cast<std::size_t>(l)]);
  r.value = plug_in_mean(arm, r.b);
  r.in_range = true;
  return r;
}

DrReport targeted_dr(const LongitudinalDataset& data, const NuisancePair& nuis) {
  return targeted_dr(CellCounts::from(data), nuis);
}

// ---------------------------------------------------------------------------

DrGrid dr_grid(const ScenarioSpec& spec, int n, int replications, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("n must be positive");
  if (replications <= 0) throw std::invalid_argument("at least one replication is needed");

  auto base = population_table(spec);
  for (auto& v : base.w) v *= n;
  for (auto& v : base.wcens) v *= n;
  base.total *= n;

  DrGrid grid;
  grid.oracle = oracle_mean(spec, Regime::fixed(1, 1));
  grid.n = n;
  grid.replications = replications;

  auto right_pi = NuisanceModel::Saturated(true);
  auto wrong_pi = NuisanceModel::Logistic({}, false);  // ignores l entirely
  auto right_b = NuisanceModel::Saturated(true);
  auto wrong_b = NuisanceModel::Logistic({"lbit0"}, false);

  const bool flags[4][2] = {{true, true}, {true, false}, {false, true}, {false, false}};
  std::vector<std::vector<std::vector<double>>> draws(
      4, std::vector<std::vector<double>>(3));
  std::vector<double> iptw_draws;

  SplitRng root(seed, 0xd5b1e);
  for (int rep = 0; rep < replications; ++rep) {
    auto rng = root.child(static_cast<std::uint64_t>(rep));
    auto redraw = resample_cells(base, rng);
    for (int cix = 0; cix < 4; ++cix) {
      NuisancePair nuis;
      nuis.pi_hat = flags[cix][0] ? right_pi : wrong_pi;
      nuis.b_hat = flags[cix][1] ? right_b : wrong_b;
      if (!flags[cix][0]) nuis.pi_floor = 1e-6;
      draws[static_cast<std::size_t>(cix)][0].push_back(aipw(redraw, nuis).value);
      draws[static_cast<std::size_t>(cix)][1].push_back(regression_dr(redraw, nuis).value);
      draws[static_cast<std::size_t>(cix)][2].push_back(targeted_dr(redraw, nuis).value);
    }
    NuisancePair ht{wrong_pi, NuisanceModel::Zero(), 1e-6};
    iptw_draws.push_back(aipw(redraw, ht).value);
  }

  auto summarize = [&](const std::vector<double>& v, double* bias, double* sd, double* mcse) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    s = std::sqrt(s / static_cast<double>(v.size() - 1));
    *bias = m - grid.oracle;
    *sd = s;
    if (mcse) *mcse = s / std::sqrt(static_cast<double>(v.size()));
  };

  for (int cix = 0; cix < 4; ++cix) {
    DrGridCell cell;
    cell.pi_correct = flags[cix][0];
    cell.b_correct = flags[cix][1];
    for (int e = 0; e < 3; ++e)
      summarize(draws[static_cast<std::size_t>(cix)][static_cast<std::size_t>(e)], &cell.bias[e],
                &cell.sd[e], &cell.mc_se[e]);
    grid.cells.push_back(cell);
  }
  double dummy;
  summarize(iptw_draws, &grid.iptw_bias, &grid.iptw_sd, &dummy);
  return grid;
}

SecondOrderReport second_order_bias(const ScenarioSpec& spec, const std::vector<int>& ns,
                                    double alpha, double beta) {
  if (ns.size() < 2) throw std::invalid_argument("the rate fit needs at least two sample sizes");
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("the error rates must be positive");

  auto pop = population_table(spec);
  auto arm = arm_data(pop);
  std::vector<double> pi_true = arm.a2bar;
  std::vector<double> b_true = arm.ybar1;
  for (int l = 0; l < arm.L; ++l)
    if (arm.mass[static_cast<std::size_t>(l)] > 0.0 &&
        !(pi_true[static_cast<std::size_t>(l)] > 0.0))
      throw std::runtime_error("positivity: pi is zero in stratum l=" + std::to_string(l));
  require_saturated_cells(arm);

  double mu = aipw_value(pop, pi_true, b_true);

  SecondOrderReport rep;
  rep.alpha = alpha;
  rep.beta = beta;
  rep.ns = ns;
  std::sort(rep.ns.begin(), rep.ns.end());

  for (int n : rep.ns) {
    if (n < 2) throw std::invalid_argument("n must be at least 2");
    auto pi = pi_true;
    auto b = b_true;
    for (int l = 0; l < arm.L; ++l) {
      if (arm.mass[static_cast<std::size_t>(l)] <= 0.0) continue;
      double cl = 0.10 * (1.0 + static_cast<double>(l) / arm.L);
      double dl = 0.08 * (1.0 + static_cast<double>(arm.L - l) / arm.L);
      auto& p = pi[static_cast<std::size_t>(l)];
      p = std::min(1.0 - 1e-9, p + cl * std::pow(n, -alpha));
      b[static_cast<std::size_t>(l)] += dl * std::pow(n, -beta);
    }
    rep.bias.push_back(aipw_value(pop, pi, b) - mu);
  }

  // least-squares slope of log |bias| on log n
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  auto m = static_cast<double>(rep.ns.size());
  for (std::size_t i = 0; i < rep.ns.size(); ++i) {
    double ab = std::abs(rep.bias[i]);
    if (ab <= 0.0) throw std::runtime_error("degenerate second-order bias: exactly zero");
    double x = std::log(static_cast<double>(rep.ns[i])), y = std::log(ab);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

DrHarnessResult dr_harness(const ScenarioSpec& spec, const std::vector<int>& n_grid,
                           int replications, std::uint64_t seed) {
  if (n_grid.empty()) throw std::invalid_argument("the harness needs at least one sample size");
  DrHarnessResult res;
  res.grid = dr_grid(spec, *std::max_element(n_grid.begin(), n_grid.end()), replications, seed);
  std::vector<int> ns = n_grid;
  if (ns.size() < 4) {
    ns.clear();
    for (int n = 1 << 10; n <= 1 << 16; n <<= 1) ns.push_back(n);
  }
  res.second_order = second_order_bias(spec, ns, 0.3, 0.2);
  return res;
}

}  // namespace gmethods
