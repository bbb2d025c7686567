#include "gmethods/g_formula.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmethods/models.hpp"
#include "gmethods/rng.hpp"

namespace gmethods {

namespace {

double expit(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

std::string stratum_label(int a1, int l, int a2) {
  return "a1=" + std::to_string(a1) + ",l=" + std::to_string(l) + ",a2=" + std::to_string(a2);
}

void check_regime(const CellCounts& cells, const Regime& g) {
  if (g.a1 < 0 || g.a1 >= cells.A1) throw std::invalid_argument("regime a1 out of range");
  if (g.is_static()) {
    int a2 = g.a2_for(0);
    if (a2 < 0 || a2 >= cells.A2) throw std::invalid_argument("regime a2 out of range");
  } else {
    if ((int)g.a2_by_l.size() != cells.L)
      throw std::invalid_argument("dynamic regime map must have one entry per l level");
    for (int a2 : g.a2_by_l)
      if (a2 < 0 || a2 >= cells.A2) throw std::invalid_argument("regime a2 out of range");
  }
}

// mass of (a1, l) including censored records (l is seen before censoring)
double stratum_mass(const CellCounts& cells, int a1, int l) {
  double m = 0.0;
  for (int a2 = 0; a2 < cells.A2; ++a2)
    for (int y = 0; y < cells.Y; ++y) m += cells.at(a1, l, a2, y);
  if (!cells.wcens.empty()) m += cells.wcens[static_cast<std::size_t>(a1 * cells.L + l)];
  return m;
}

struct OutcomeModel {
  bool saturated = true;
  std::vector<Term> terms;
  Eigen::VectorXd beta;

  double predict(const CellCounts& cells, int a1, int l, int a2, bool* empty) const {
    if (!saturated) {
      if (empty) {
        double m = 0.0;
        for (int y = 0; y < cells.Y; ++y) m += cells.at(a1, l, a2, y);
        *empty = m <= 0.0;
      }
      return expit(design_row(terms, a1, l, a2).dot(beta));
    }
    double m = 0.0, s = 0.0;
    for (int y = 0; y < cells.Y; ++y) {
      double w = cells.at(a1, l, a2, y);
      m += w;
      s += w * y;
    }
    if (empty) *empty = m <= 0.0;
    return m > 0.0 ? s / m : 0.0;
  }
};

OutcomeModel fit_outcome(const CellCounts& cells, const NuisanceSpec& nuis) {
  OutcomeModel m;
  if (nuis.saturated) return m;
  if (cells.Y != 2)
    throw std::invalid_argument("parametric outcome model requires binary y");
  m.saturated = false;
  m.terms = parse_terms(nuis.outcome_terms);
  std::vector<WeightedObs> rows;
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l)
      for (int a2 = 0; a2 < cells.A2; ++a2) {
        double w = cells.at(a1, l, a2, 0) + cells.at(a1, l, a2, 1);
        if (w <= 0.0) continue;
        WeightedObs o;
        o.x = design_row(m.terms, a1, l, a2);
        o.w = w;
        o.y = cells.at(a1, l, a2, 1) / w;
        rows.push_back(std::move(o));
      }
  m.beta = fit_logistic(rows, nuis.outcome_terms).beta;
  return m;
}

// fhat(l | a1) for the regime's arm
std::vector<double> fit_l_weights(const CellCounts& cells, int a1, const NuisanceSpec& nuis) {
  std::vector<double> out(static_cast<std::size_t>(cells.L), 0.0);
  if (nuis.saturated) {
    double tot = 0.0;
    for (int l = 0; l < cells.L; ++l) {
      out[static_cast<std::size_t>(l)] = stratum_mass(cells, a1, l);
      tot += out[static_cast<std::size_t>(l)];
    }
    if (tot <= 0.0)
      throw std::runtime_error("no records with a1=" + std::to_string(a1));
    for (double& v : out) v /= tot;
    return out;
  }

  auto terms = parse_terms(nuis.covariate_terms);
  for (const auto& t : terms)
    for (const auto& f : t.factors)
      if (f != "a1")
        throw std::invalid_argument("covariate model terms may only involve a1");

  if (cells.L == 2) {
    std::vector<WeightedObs> rows;
    for (int arm = 0; arm < cells.A1; ++arm) {
      double n0 = stratum_mass(cells, arm, 0), n1 = stratum_mass(cells, arm, 1);
      if (n0 + n1 <= 0.0) continue;
      WeightedObs o;
      o.x = design_row(terms, arm, 0, 0);
      o.w = n0 + n1;
      o.y = n1 / (n0 + n1);
      rows.push_back(std::move(o));
    }
    auto fit = fit_logistic(rows, nuis.covariate_terms);
    double p1 = expit(design_row(terms, a1, 0, 0).dot(fit.beta));
    out[0] = 1.0 - p1;
    out[1] = p1;
    return out;
  }

  // multi-level l: proportional odds with the a1 terms as slopes
  std::vector<OrdinalObs> rows;
  for (int arm = 0; arm < cells.A1; ++arm) {
    OrdinalObs r;
    Eigen::VectorXd full = design_row(terms, arm, 0, 0);
    r.x = full.tail(full.size() - 1);
    double tot = 0.0;
    for (int l = 0; l < cells.L; ++l) {
      r.w.push_back(stratum_mass(cells, arm, l));
      tot += r.w.back();
    }
    if (tot > 0.0) rows.push_back(std::move(r));
  }
  auto fit = fit_prop_odds(rows, cells.L);
  Eigen::VectorXd full = design_row(terms, a1, 0, 0);
  return fit.probs(full.tail(full.size() - 1));
}

}  // namespace

GFormulaEstimate gformula(const CellCounts& cells, const Regime& g, const NuisanceSpec& nuis) {
  check_regime(cells, g);
  GFormulaEstimate est;
  est.regime = g;
  est.saturated = nuis.saturated;
  est.l_weights = fit_l_weights(cells, g.a1, nuis);
  auto outcome = fit_outcome(cells, nuis);

  std::vector<std::string> missing;
  double value = 0.0;
  for (int l = 0; l < cells.L; ++l) {
    int a2 = g.a2_for(l);
    double fl = est.l_weights[static_cast<std::size_t>(l)];
    double mass = 0.0;
    for (int y = 0; y < cells.Y; ++y) mass += cells.at(g.a1, l, a2, y);
    est.strata_counts.push_back(mass);
    if (fl <= 0.0) continue;  // stratum has no probability under this arm
    bool empty = false;
    double ey = outcome.predict(cells, g.a1, l, a2, &empty);
    if (empty) missing.push_back(stratum_label(g.a1, l, a2));
    value += fl * ey;
  }

  if (!missing.empty()) {
    if (nuis.saturated) {
      std::string msg = "positivity violation, empty strata: ";
      for (std::size_t i = 0; i < missing.size(); ++i) {
        if (i) msg += "; ";
        msg += missing[i];
      }
      throw std::runtime_error(msg);
    }
    est.empty_strata = missing;
  }
  est.value = value;
  return est;
}

GFormulaEstimate gformula(const LongitudinalDataset& data, const Regime& g,
                          const NuisanceSpec& nuis) {
  return gformula(CellCounts::from(data), g, nuis);
}

GFormulaEstimate gformula_static(const CellCounts& cells, int a1, int a2,
                                 const NuisanceSpec& nuis) {
  return gformula(cells, Regime::fixed(a1, a2), nuis);
}

GFormulaEstimate gformula_dynamic(const CellCounts& cells, int a1, std::vector<int> a2_by_l,
                                  const NuisanceSpec& nuis) {
  return gformula(cells, Regime::dynamic(a1, std::move(a2_by_l)), nuis);
}

// ---------------------------------------------------------------------------
// Null paradox experiment

namespace {

double contrast(const CellCounts& cells, const NuisanceSpec& nuis) {
  return gformula(cells, Regime::fixed(1, 1), nuis).value -
         gformula(cells, Regime::fixed(0, 0), nuis).value;
}

NullParadoxRow run_arm(const ScenarioSpec& spec, const NuisanceSpec& nuis, int n,
                       int replications, double alpha, std::uint64_t seed, int n_bootstrap,
                       std::uint64_t arm_tag) {
  const double zcrit = normal_quantile(1.0 - alpha / 2.0);
  SplitRng arm_rng(seed, arm_tag);
  int rejections = 0;
  double sum_contrast = 0.0;
  for (int rep = 0; rep < replications; ++rep) {
    std::uint64_t data_seed = arm_rng.child(static_cast<std::uint64_t>(rep)).next_u64();
    auto data = sample(spec, static_cast<std::size_t>(n), data_seed);
    auto cells = CellCounts::from(data);
    double est = contrast(cells, nuis);
    sum_contrast += est;

    SplitRng boot_rng = arm_rng.child(0x9000 + static_cast<std::uint64_t>(rep));
    double s1 = 0.0, s2 = 0.0;
    int used = 0;
    for (int b = 0; b < n_bootstrap; ++b) {
      auto redraw = resample_cells(cells, boot_rng);
      double cb;
      try {
        cb = contrast(redraw, nuis);
      } catch (const std::runtime_error&) {
        continue;  // degenerate redraw (empty stratum); drop it
      }
      s1 += cb;
      s2 += cb * cb;
      ++used;
    }
    if (used < (3 * n_bootstrap) / 4)
      throw std::runtime_error("too many degenerate bootstrap replicates at n=" +
                               std::to_string(n));
    double var = (s2 - s1 * s1 / used) / (used - 1);
    double se = std::sqrt(std::max(var, 0.0));
    if (se > 0.0 && std::abs(est) / se > zcrit) ++rejections;
  }
  NullParadoxRow row;
  row.n = n;
  row.rejection_rate = static_cast<double>(rejections) / replications;
  row.mc_se = std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) / replications);
  row.mean_contrast = sum_contrast / replications;
  return row;
}

}  // namespace

NullParadoxResult null_paradox_experiment(const ScenarioSpec& spec,
                                          const NuisanceSpec& parametric,
                                          const std::vector<int>& n_grid, int replications,
                                          double alpha, std::uint64_t seed, int n_bootstrap) {
  if (replications <= 0) throw std::invalid_argument("replication count must be positive");
  if (n_grid.empty()) throw std::invalid_argument("empty sample-size grid");
  if (parametric.saturated)
    throw std::invalid_argument("the experiment's analysis arm must be parametric");
  if (!sharp_null_holds(spec))
    throw std::invalid_argument("scenario '" + spec.name +
                                "' is not sharply null; the experiment requires one");

  NullParadoxResult out;
  out.replications = replications;
  out.alpha = alpha;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    int n = n_grid[i];
    if (n < 50) throw std::invalid_argument("sample size too small");
    out.parametric.push_back(run_arm(spec, parametric, n, replications, alpha, seed,
                                     n_bootstrap, 2 * i));
    out.saturated.push_back(run_arm(spec, NuisanceSpec::Saturated(), n, replications, alpha,
                                    seed, n_bootstrap, 2 * i + 1));
  }
  return out;
}

}  // namespace gmethods
