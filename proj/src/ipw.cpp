#include "gmethods/ipw.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmethods/models.hpp"
#include "gmethods/rng.hpp"

namespace gmethods {

namespace {

double expit(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

struct ProbTables {
  int A1, L, A2;
  std::vector<double> a1;        // f(a1)
  std::vector<double> a2_cond;   // f(a2 | a1, l), flat (a1*L+l)*A2+a2
  std::vector<double> a2_marg;   // f(a2 | a1), flat a1*A2+a2
  std::vector<double> uncens;    // P(a2=0 | a1, l) with censored mass in the denominator

  double cond(int v_a1, int l, int a2) const {
    return a2_cond[static_cast<std::size_t>((v_a1 * L + l) * A2 + a2)];
  }
};

ProbTables prob_tables(const CellCounts& c) {
  ProbTables t;
  t.A1 = c.A1;
  t.L = c.L;
  t.A2 = c.A2;
  t.a1.assign(static_cast<std::size_t>(c.A1), 0.0);
  t.a2_cond.assign(static_cast<std::size_t>(c.A1) * c.L * c.A2, 0.0);
  t.a2_marg.assign(static_cast<std::size_t>(c.A1) * c.A2, 0.0);
  t.uncens.assign(static_cast<std::size_t>(c.A1) * c.L, 0.0);

  double grand = 0.0;
  for (int a1 = 0; a1 < c.A1; ++a1) {
    double n_arm = 0.0;
    std::vector<double> n_arm_a2(static_cast<std::size_t>(c.A2), 0.0);
    for (int l = 0; l < c.L; ++l) {
      double n_str = 0.0;
      for (int a2 = 0; a2 < c.A2; ++a2) {
        double m = 0.0;
        for (int y = 0; y < c.Y; ++y) m += c.at(a1, l, a2, y);
        t.a2_cond[static_cast<std::size_t>((a1 * c.L + l) * c.A2 + a2)] = m;
        n_arm_a2[static_cast<std::size_t>(a2)] += m;
        n_str += m;
      }
      double uncens_mass =
          t.a2_cond[static_cast<std::size_t>((a1 * c.L + l) * c.A2 + 0)];
      if (!c.wcens.empty()) n_str += c.wcens[static_cast<std::size_t>(a1 * c.L + l)];
      for (int a2 = 0; a2 < c.A2; ++a2) {
        auto idx = static_cast<std::size_t>((a1 * c.L + l) * c.A2 + a2);
        double denom = n_str - (c.wcens.empty()
                                    ? 0.0
                                    : c.wcens[static_cast<std::size_t>(a1 * c.L + l)]);
        t.a2_cond[idx] = denom > 0.0 ? t.a2_cond[idx] / denom : 0.0;
      }
      t.uncens[static_cast<std::size_t>(a1 * c.L + l)] =
          n_str > 0.0 ? uncens_mass / n_str : 0.0;
      n_arm += n_str;
    }
    for (int a2 = 0; a2 < c.A2; ++a2) {
      double denom = n_arm;
      if (!c.wcens.empty()) {
        // marginal of the recorded (uncensored) a2 values
        denom = 0.0;
        for (int l = 0; l < c.L; ++l)
          for (int a2b = 0; a2b < c.A2; ++a2b)
            for (int y = 0; y < c.Y; ++y) denom += c.at(a1, l, a2b, y);
      }
      t.a2_marg[static_cast<std::size_t>(a1 * c.A2 + a2)] =
          denom > 0.0 ? n_arm_a2[static_cast<std::size_t>(a2)] / denom : 0.0;
    }
    t.a1[static_cast<std::size_t>(a1)] = n_arm;
    grand += n_arm;
  }
  if (grand <= 0.0) throw std::invalid_argument("empty data");
  for (double& v : t.a1) v /= grand;
  return t;
}

void finish_diagnostics(WeightVector& wv, const LongitudinalDataset& data) {
  double s1 = 0.0, s2 = 0.0, n_used = 0.0;
  int max_a1 = 0;
  for (auto a : data.a1) max_a1 = std::max(max_a1, (int)a);
  std::vector<double> sum_by(static_cast<std::size_t>(max_a1) + 1, 0.0);
  std::vector<double> n_by(static_cast<std::size_t>(max_a1) + 1, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    double w = wv.value[i];
    if (w <= 0.0) continue;
    s1 += w;
    s2 += w * w;
    n_used += 1.0;
    wv.max_weight = std::max(wv.max_weight, w);
    sum_by[static_cast<std::size_t>(data.a1[i])] += w;
    n_by[static_cast<std::size_t>(data.a1[i])] += 1.0;
  }
  if (n_used == 0.0) throw std::runtime_error("no usable records for weighting");
  double mean = s1 / n_used;
  double var = s2 / n_used - mean * mean;
  wv.cv = mean > 0.0 ? std::sqrt(std::max(var, 0.0)) / mean : 0.0;
  for (std::size_t k = 0; k < sum_by.size(); ++k)
    wv.mean_by_a1.push_back(n_by[k] > 0.0 ? sum_by[k] / n_by[k] : 0.0);
}

void truncate_weights(WeightVector& wv, double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0))
    throw std::invalid_argument("truncation quantile must lie in (0, 1]");
  std::vector<double> used;
  for (double w : wv.value)
    if (w > 0.0) used.push_back(w);
  if (used.empty()) return;
  std::sort(used.begin(), used.end());
  auto idx = static_cast<std::size_t>(quantile * (static_cast<double>(used.size()) - 1.0));
  double cap = used[idx];
  for (double& w : wv.value) w = std::min(w, cap);
  for (double& w : wv.cell) w = std::min(w, cap);
  wv.truncation_quantile = quantile;
}

ProbTables tables_for(const LongitudinalDataset& data, const ScenarioSpec* known) {
  if (known) return prob_tables(population_table(*known));
  return prob_tables(CellCounts::from(data));
}

}  // namespace

WeightVector standard_weights(const LongitudinalDataset& data, const ScenarioSpec* known,
                              std::optional<double> truncation) {
  auto t = tables_for(data, known);
  WeightVector wv;
  wv.kind = WeightVector::Kind::w;
  wv.known_probs = known != nullptr;
  wv.A1 = t.A1;
  wv.L = t.L;
  wv.A2 = t.A2;
  wv.cell.assign(static_cast<std::size_t>(t.A1) * t.L * t.A2, 0.0);
  for (int a1 = 0; a1 < t.A1; ++a1)
    for (int l = 0; l < t.L; ++l)
      for (int a2 = 0; a2 < t.A2; ++a2) {
        double denom = t.a1[static_cast<std::size_t>(a1)] * t.cond(a1, l, a2);
        wv.cell[static_cast<std::size_t>((a1 * t.L + l) * t.A2 + a2)] =
            denom > 0.0 ? 1.0 / denom : 0.0;
      }
  wv.value.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double w = wv.at(data.a1[i], data.l[i], data.a2[i]);
    if (w <= 0.0)
      throw std::runtime_error("positivity violation: zero design probability at a1=" +
                               std::to_string(data.a1[i]) + ",l=" + std::to_string(data.l[i]) +
                               ",a2=" + std::to_string(data.a2[i]));
    wv.value[i] = w;
  }
  if (truncation) truncate_weights(wv, *truncation);
  finish_diagnostics(wv, data);
  return wv;
}

WeightVector stabilized_weights(const LongitudinalDataset& data, const ScenarioSpec* known,
                                std::optional<double> truncation) {
  auto t = tables_for(data, known);
  WeightVector wv;
  wv.kind = WeightVector::Kind::sw;
  wv.known_probs = known != nullptr;
  wv.A1 = t.A1;
  wv.L = t.L;
  wv.A2 = t.A2;
  wv.cell.assign(static_cast<std::size_t>(t.A1) * t.L * t.A2, 0.0);
  for (int a1 = 0; a1 < t.A1; ++a1)
    for (int l = 0; l < t.L; ++l)
      for (int a2 = 0; a2 < t.A2; ++a2) {
        double denom = t.cond(a1, l, a2);
        double numer = t.a2_marg[static_cast<std::size_t>(a1 * t.A2 + a2)];
        wv.cell[static_cast<std::size_t>((a1 * t.L + l) * t.A2 + a2)] =
            denom > 0.0 ? numer / denom : 0.0;
      }
  wv.value.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double w = wv.at(data.a1[i], data.l[i], data.a2[i]);
    if (w <= 0.0)
      throw std::runtime_error("positivity violation: zero design probability at a1=" +
                               std::to_string(data.a1[i]) + ",l=" + std::to_string(data.l[i]) +
                               ",a2=" + std::to_string(data.a2[i]));
    wv.value[i] = w;
  }
  if (truncation) truncate_weights(wv, *truncation);
  finish_diagnostics(wv, data);
  return wv;
}

WeightVector censoring_weights(const LongitudinalDataset& data, const ScenarioSpec* known) {
  auto t = tables_for(data, known);
  WeightVector wv;
  wv.kind = WeightVector::Kind::censoring;
  wv.known_probs = known != nullptr;
  wv.A1 = t.A1;
  wv.L = t.L;
  wv.A2 = t.A2;
  wv.cell.assign(static_cast<std::size_t>(t.A1) * t.L, 0.0);
  for (int a1 = 0; a1 < t.A1; ++a1)
    for (int l = 0; l < t.L; ++l) {
      double p = t.uncens[static_cast<std::size_t>(a1 * t.L + l)];
      wv.cell[static_cast<std::size_t>(a1 * t.L + l)] = p > 0.0 ? 1.0 / p : 0.0;
    }
  wv.value.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool censored = data.has_censoring() ? data.cens[i] != 0 : data.a2[i] != 0;
    if (censored) {
      wv.value[i] = 0.0;
      continue;
    }
    double w = wv.at_censor(data.a1[i], data.l[i]);
    if (w <= 0.0)
      throw std::runtime_error("positivity violation: stratum a1=" +
                               std::to_string(data.a1[i]) + ",l=" + std::to_string(data.l[i]) +
                               " is always censored");
    wv.value[i] = w;
  }
  finish_diagnostics(wv, data);
  return wv;
}

// ---------------------------------------------------------------------------

double horvitz_thompson(const CellCounts& cells, int a1, int a2, const ScenarioSpec& known) {
  if (a1 < 0 || a1 >= cells.A1 || a2 < 0 || a2 >= cells.A2)
    throw std::invalid_argument("target regime out of range");
  auto t = prob_tables(population_table(known));
  if (t.A1 != cells.A1 || t.L != cells.L || t.A2 != cells.A2)
    throw std::invalid_argument("known design does not match the data layout");
  double total = cells.total;
  if (total <= 0.0) throw std::invalid_argument("empty data");
  double acc = 0.0;
  for (int l = 0; l < cells.L; ++l) {
    double denom = t.a1[static_cast<std::size_t>(a1)] * t.cond(a1, l, a2);
    for (int y = 0; y < cells.Y; ++y) {
      double m = cells.at(a1, l, a2, y);
      if (m == 0.0 || y == 0) continue;
      if (denom <= 0.0)
        throw std::runtime_error("positivity violation: zero design probability at a1=" +
                                 std::to_string(a1) + ",l=" + std::to_string(l) +
                                 ",a2=" + std::to_string(a2));
      acc += m * y / denom;
    }
  }
  return acc / total;
}

double horvitz_thompson(const LongitudinalDataset& data, int a1, int a2,
                        const ScenarioSpec& known) {
  return horvitz_thompson(CellCounts::from(data), a1, a2, known);
}

double horvitz_thompson(const ContinuousDataset& data,
                        const std::function<double(const double*)>& pi) {
  if (data.size() == 0) throw std::invalid_argument("empty data");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double p = pi(data.row(i));
    if (!(p > 0.0 && p < 1.0))
      throw std::runtime_error("observation probability outside (0,1) at record " +
                               std::to_string(i));
    if (data.a2[i]) acc += data.y[i] / p;
  }
  return acc / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// IPCW ITT

namespace {

// closed-form root of P_n[w (Y - beta A1)(A1 - pi1)] = 0 on collapsed cells
double ipcw_beta(const CellCounts& c, const ProbTables& t, double pi1) {
  double num = 0.0, den = 0.0;
  std::vector<bool> arm_seen(static_cast<std::size_t>(c.A1), false);
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l) {
      double stratum = 0.0;
      for (int a2 = 0; a2 < c.A2; ++a2)
        for (int y = 0; y < c.Y; ++y) stratum += c.at(a1, l, a2, y);
      if (!c.wcens.empty()) stratum += c.wcens[static_cast<std::size_t>(a1 * c.L + l)];
      double uncens = 0.0;
      for (int y = 0; y < c.Y; ++y) uncens += c.at(a1, l, 0, y);
      if (stratum <= 0.0) continue;
      double p0 = t.uncens[static_cast<std::size_t>(a1 * c.L + l)];
      if (p0 <= 0.0) {
        if (uncens > 0.0 || stratum > 0.0)
          throw std::runtime_error("positivity violation: stratum a1=" + std::to_string(a1) +
                                   ",l=" + std::to_string(l) + " has no uncensored mass");
        continue;
      }
      double w = 1.0 / p0;
      for (int y = 0; y < c.Y; ++y) {
        double m = c.at(a1, l, 0, y);
        if (m == 0.0) continue;
        arm_seen[static_cast<std::size_t>(a1)] = true;
        num += m * w * y * (a1 - pi1);
        den += m * w * a1 * (a1 - pi1);
      }
    }
  for (bool seen : arm_seen)
    if (!seen) throw std::runtime_error("degenerate treatment arm in the ITT contrast");
  if (den == 0.0) throw std::runtime_error("degenerate treatment arm in the ITT contrast");
  return num / den;
}

double complete_case_beta(const CellCounts& c, double pi1) {
  double num = 0.0, den = 0.0;
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l)
      for (int y = 0; y < c.Y; ++y) {
        double m = c.at(a1, l, 0, y);
        num += m * y * (a1 - pi1);
        den += m * a1 * (a1 - pi1);
      }
  if (den == 0.0) throw std::runtime_error("degenerate treatment arm in the ITT contrast");
  return num / den;
}

}  // namespace

IpcwReport ipcw_itt(const LongitudinalDataset& data, const ScenarioSpec* known,
                    int n_bootstrap, std::uint64_t seed, double pi1) {
  if (!(pi1 > 0.0 && pi1 < 1.0)) throw std::invalid_argument("pi1 must lie in (0,1)");
  auto cells = CellCounts::from(data);
  IpcwReport rep;
  rep.pi1 = pi1;
  rep.known_probs = known != nullptr;
  rep.n_bootstrap = n_bootstrap;

  auto known_tables = known ? prob_tables(population_table(*known)) : ProbTables{};
  auto beta_of = [&](const CellCounts& c) {
    return known ? ipcw_beta(c, known_tables, pi1) : ipcw_beta(c, prob_tables(c), pi1);
  };
  rep.beta = beta_of(cells);
  rep.complete_case_beta = complete_case_beta(cells, pi1);

  if (n_bootstrap > 1) {
    SplitRng rng(seed, 0x19cc);
    double s1 = 0.0, s2 = 0.0;
    int used = 0;
    for (int b = 0; b < n_bootstrap; ++b) {
      auto redraw = resample_cells(cells, rng);
      double bb;
      try {
        bb = beta_of(redraw);
      } catch (const std::runtime_error&) {
        continue;
      }
      s1 += bb;
      s2 += bb * bb;
      ++used;
    }
    if (used < (3 * n_bootstrap) / 4)
      throw std::runtime_error("too many degenerate bootstrap replicates");
    rep.se = std::sqrt(std::max((s2 - s1 * s1 / used) / (used - 1), 0.0));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// MSM

namespace {

double apply_link_inverse(MsmSpec::Link link, double eta) {
  switch (link) {
    case MsmSpec::Link::identity: return eta;
    case MsmSpec::Link::logit: return expit(eta);
    case MsmSpec::Link::log: return std::exp(eta);
  }
  return eta;
}

}  // namespace

double MsmReport::fitted(int a1, int a2) const {
  auto terms = parse_terms(spec.terms);
  return apply_link_inverse(spec.link, design_row(terms, a1, 0, a2).dot(beta));
}

MsmReport fit_msm(const LongitudinalDataset& data, const MsmSpec& spec,
                  const WeightVector& weights) {
  if (weights.kind == WeightVector::Kind::censoring)
    throw std::invalid_argument("msm fitting expects treatment weights, not censoring weights");
  auto terms = parse_terms(spec.terms);
  auto check_scope = [](const std::vector<Term>& ts) {
    for (const auto& t : ts)
      for (const auto& f : t.factors)
        if (f != "a1" && f != "a2")
          throw std::invalid_argument("msm design terms may only involve a1 and a2");
  };
  check_scope(terms);
  auto instrument = terms;
  if (!spec.instrument.empty()) {
    if (spec.instrument.size() != spec.terms.size())
      throw std::invalid_argument("msm instrument must match the design dimension");
    instrument = parse_terms(spec.instrument);
    check_scope(instrument);
  }

  auto cells = CellCounts::from(data);
  const double n = cells.total;
  const int p = static_cast<int>(terms.size()) + 1;

  std::vector<std::string> labels = {"(intercept)"};
  for (const auto& t : terms) labels.push_back(t.label);

  // collapsed weighted rows per (a1, l, a2)
  struct Row {
    Eigen::VectorXd x;
    Eigen::VectorXd v;
    double w = 0.0;   // mass * weight
    double y = 0.0;   // cell mean
    int a1, l, a2;
  };
  std::vector<Row> rows;
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l)
      for (int a2 = 0; a2 < cells.A2; ++a2) {
        double mass = 0.0, sum = 0.0;
        for (int y = 0; y < cells.Y; ++y) {
          mass += cells.at(a1, l, a2, y);
          sum += y * cells.at(a1, l, a2, y);
        }
        if (mass <= 0.0) continue;
        Row r;
        r.x = design_row(terms, a1, 0, a2);
        r.v = design_row(instrument, a1, 0, a2);
        r.w = mass * weights.at(a1, l, a2);
        r.y = sum / mass;
        r.a1 = a1;
        r.l = l;
        r.a2 = a2;
        rows.push_back(std::move(r));
      }
  if (rows.empty()) throw std::invalid_argument("empty data");

  // rank check on the estimating system before any solver runs
  {
    Eigen::MatrixXd vxt = Eigen::MatrixXd::Zero(p, p);
    for (const auto& r : rows) vxt.noalias() += r.w * (r.v * r.x.transpose());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(vxt);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      Eigen::VectorXi perm = qr.colsPermutation().indices();
      std::string bad;
      for (int i = qr.rank(); i < p; ++i) {
        if (!bad.empty()) bad += ", ";
        bad += labels[static_cast<std::size_t>(perm[i])];
      }
      throw std::invalid_argument("singular msm design, collinear terms: " + bad);
    }
  }

  MsmReport rep;
  rep.spec = spec;
  rep.labels = labels;
  rep.weight_kind = weights.kind;
  rep.known_probs = weights.known_probs;
  rep.weight_max = weights.max_weight;
  rep.weight_cv = weights.cv;

  if (spec.link == MsmSpec::Link::identity) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (const auto& r : rows) {
      a.noalias() += r.w * (r.v * r.x.transpose());
      b.noalias() += (r.w * r.y) * r.v;
    }
    rep.beta = a.colPivHouseholderQr().solve(b);
  } else {
    int evals = 0;
    auto g = [&](const Eigen::VectorXd& b) {
      ++evals;
      Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
      for (const auto& r : rows)
        out.noalias() += (r.w * (r.y - apply_link_inverse(spec.link, r.x.dot(b)))) * r.v;
      return Eigen::VectorXd(out / n);
    };
    Eigen::VectorXd start = Eigen::VectorXd::Zero(p);
    if (spec.link == MsmSpec::Link::log) {
      double ybar = 0.0, wsum = 0.0;
      for (const auto& r : rows) {
        ybar += r.w * r.y;
        wsum += r.w;
      }
      start[0] = std::log(std::max(ybar / wsum, 1e-6));
    }
    rep.beta = damped_newton(g, start, 1e-10, 100);
    rep.newton_iterations = evals;
  }

  // sandwich: per-(cell, y) estimating contributions
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (const auto& r : rows) {
    double mu = apply_link_inverse(spec.link, r.x.dot(rep.beta));
    for (int y = 0; y < cells.Y; ++y) {
      double mass = cells.at(r.a1, r.l, r.a2, y);
      if (mass <= 0.0) continue;
      Eigen::VectorXd u = (weights.at(r.a1, r.l, r.a2) * (y - mu)) * r.v;
      meat.noalias() += (mass / n) * (u * u.transpose());
    }
  }
  auto g_at = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
    for (const auto& r : rows)
      out.noalias() += (r.w * (r.y - apply_link_inverse(spec.link, r.x.dot(b)))) * r.v;
    return Eigen::VectorXd(out / n);
  };
  Eigen::MatrixXd jac = numeric_jacobian(g_at, rep.beta);
  rep.cov = sandwich_cov(jac, meat, n);
  return rep;
}

// ---------------------------------------------------------------------------
// Verma-constraint test

namespace {

struct VermaStat {
  double total = 0.0;
  std::vector<double> per_a2;
  // dependence defects d(y, a1 | a2) so a bootstrap can recenter on them
  std::vector<double> defect;  // flat (a2*Y + y)*A1 + a1
};

// weighted chi-square of Y vs A1 within each a2 level of the reweighted law
VermaStat verma_statistic(const CellCounts& c, const ProbTables& t, double n,
                          const double* recenter) {
  // positivity: every observed (a1,l) stratum needs every a2 level
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l) {
      double mass = 0.0;
      for (int a2 = 0; a2 < c.A2; ++a2)
        for (int y = 0; y < c.Y; ++y) mass += c.at(a1, l, a2, y);
      if (mass <= 0.0) continue;
      for (int a2 = 0; a2 < c.A2; ++a2)
        if (t.cond(a1, l, a2) <= 0.0)
          throw std::runtime_error("positivity violation: empty cell a1=" +
                                   std::to_string(a1) + ",l=" + std::to_string(l) +
                                   ",a2=" + std::to_string(a2));
    }

  // reweighted joint r(y, a1 | a2) and level masses
  std::vector<double> joint(static_cast<std::size_t>(c.A2) * c.Y * c.A1, 0.0);
  std::vector<double> level(static_cast<std::size_t>(c.A2), 0.0);
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l)
      for (int a2 = 0; a2 < c.A2; ++a2)
        for (int y = 0; y < c.Y; ++y) {
          double m = c.at(a1, l, a2, y);
          if (m <= 0.0) continue;
          double r = m / t.cond(a1, l, a2);
          joint[static_cast<std::size_t>((a2 * c.Y + y) * c.A1 + a1)] += r;
          level[static_cast<std::size_t>(a2)] += r;
        }
  double grand = 0.0;
  for (double v : level) grand += v;

  VermaStat out;
  out.per_a2.assign(static_cast<std::size_t>(c.A2), 0.0);
  out.defect.assign(joint.size(), 0.0);
  for (int a2 = 0; a2 < c.A2; ++a2) {
    double mass = level[static_cast<std::size_t>(a2)];
    if (mass <= 0.0) continue;
    std::vector<double> py(static_cast<std::size_t>(c.Y), 0.0);
    std::vector<double> pa(static_cast<std::size_t>(c.A1), 0.0);
    for (int y = 0; y < c.Y; ++y)
      for (int a1 = 0; a1 < c.A1; ++a1) {
        double q = joint[static_cast<std::size_t>((a2 * c.Y + y) * c.A1 + a1)] / mass;
        py[static_cast<std::size_t>(y)] += q;
        pa[static_cast<std::size_t>(a1)] += q;
      }
    double chi = 0.0;
    for (int y = 0; y < c.Y; ++y)
      for (int a1 = 0; a1 < c.A1; ++a1) {
        auto idx = static_cast<std::size_t>((a2 * c.Y + y) * c.A1 + a1);
        double q = joint[idx] / mass;
        double expect = py[static_cast<std::size_t>(y)] * pa[static_cast<std::size_t>(a1)];
        double d = q - expect;
        out.defect[idx] = d;
        if (recenter) d -= recenter[idx];
        if (expect > 0.0) chi += d * d / expect;
      }
    double share = mass / grand;
    out.per_a2[static_cast<std::size_t>(a2)] = n * share * chi;
    out.total += n * share * chi;
  }
  return out;
}

}  // namespace

VermaReport verma_test(const CellCounts& cells, const ScenarioSpec* known, int n_bootstrap,
                       std::uint64_t seed) {
  if (n_bootstrap < 20) throw std::invalid_argument("verma test needs a real bootstrap");
  const double n = cells.total;
  auto tables_of = [&](const CellCounts& c) {
    return known ? prob_tables(population_table(*known)) : prob_tables(c);
  };
  auto base_tables = tables_of(cells);
  auto observed = verma_statistic(cells, base_tables, n, nullptr);

  VermaReport rep;
  rep.statistic = observed.total;
  rep.per_a2 = observed.per_a2;
  rep.n_bootstrap = n_bootstrap;
  rep.known_probs = known != nullptr;

  SplitRng rng(seed, 0xe19a);
  int exceed = 0, used = 0;
  for (int b = 0; b < n_bootstrap; ++b) {
    auto redraw = resample_cells(cells, rng);
    try {
      auto stat = verma_statistic(redraw, tables_of(redraw), n, observed.defect.data());
      if (stat.total >= rep.statistic) ++exceed;
      ++used;
    } catch (const std::runtime_error&) {
      continue;
    }
  }
  if (used < n_bootstrap / 2)
    throw std::runtime_error("too many degenerate bootstrap replicates in the verma test");
  rep.n_bootstrap_used = used;
  rep.p_value = (1.0 + exceed) / (1.0 + used);
  return rep;
}

VermaReport verma_test(const LongitudinalDataset& data, const ScenarioSpec* known,
                       int n_bootstrap, std::uint64_t seed) {
  if (data.has_censoring())
    throw std::invalid_argument("verma test does not apply to censored designs");
  return verma_test(CellCounts::from(data), known, n_bootstrap, seed);
}

// ---------------------------------------------------------------------------
// Robins-Ritov demonstration

RitovResult ritov_experiment(const RitovSpec& spec, const std::vector<int>& n_grid,
                             int replications, std::uint64_t seed) {
  if (replications < 2) throw std::invalid_argument("need at least 2 replications");
  if (n_grid.size() < 2) throw std::invalid_argument("need at least 2 sample sizes");
  spec.validate();
  const double mu = spec.oracle_mean();

  RitovResult out;
  out.replications = replications;
  SplitRng root(seed, 0x41707);

  std::vector<std::string> labels;
  for (int j = 0; j < spec.d; ++j) labels.push_back("x" + std::to_string(j + 1));

  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    int n = n_grid[gi];
    if (n < 100) throw std::invalid_argument("sample size too small");
    double ht_sq = 0.0, ht_abs = 0.0, plug_sq = 0.0, plug_abs = 0.0;
    for (int rep = 0; rep < replications; ++rep) {
      std::uint64_t s = root.child(gi * 100003 + static_cast<std::size_t>(rep)).next_u64();
      auto data = sample_ritov(spec, static_cast<std::size_t>(n), s);

      double ht = horvitz_thompson(data, [&](const double* x) { return spec.pi(x); });
      ht_sq += (ht - mu) * (ht - mu);
      ht_abs += std::abs(ht - mu);

      // pi-ignoring plug-in: main-effects logistic fit on the observed half,
      // averaged over everyone
      std::vector<WeightedObs> rows;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data.a2[i]) continue;
        WeightedObs o;
        o.x.resize(spec.d + 1);
        o.x[0] = 1.0;
        for (int j = 0; j < spec.d; ++j) o.x[j + 1] = data.row(i)[j];
        o.w = 1.0;
        o.y = data.y[i];
        rows.push_back(std::move(o));
      }
      auto fit = fit_logistic(rows, labels);
      double acc = 0.0;
      Eigen::VectorXd x(spec.d + 1);
      x[0] = 1.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        for (int j = 0; j < spec.d; ++j) x[j + 1] = data.row(i)[j];
        acc += expit(x.dot(fit.beta));
      }
      double plug = acc / static_cast<double>(data.size());
      plug_sq += (plug - mu) * (plug - mu);
      plug_abs += std::abs(plug - mu);
    }
    RitovRow row;
    row.n = n;
    row.ht_rmse = std::sqrt(ht_sq / replications);
    row.ht_mean_abs = ht_abs / replications;
    row.plug_rmse = std::sqrt(plug_sq / replications);
    row.plug_mean_abs = plug_abs / replications;
    out.rows.push_back(row);
  }

  // log-log slope of the weighted estimator's rmse
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  auto m = static_cast<double>(out.rows.size());
  for (const auto& r : out.rows) {
    double lx = std::log2(static_cast<double>(r.n));
    double ly = std::log2(r.ht_rmse);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  out.ht_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  const auto& last = out.rows.back();
  out.plug_to_ht_ratio = last.plug_mean_abs / last.ht_mean_abs;
  return out;
}

}  // namespace gmethods
