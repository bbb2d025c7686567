#include "gmethods/snmm.hpp"

#include <cmath>
#include <stdexcept>

#include "gmethods/models.hpp"

namespace gmethods {

namespace {

struct DesignProbs {
  std::vector<double> a1;       // P(A1 = a1)
  std::vector<double> a2_cond;  // P(A2 = a2 | a1, l), flat (a1*L + l)*A2 + a2
  int L = 2, A2 = 2;

  double cond(int v_a1, int l, int a2) const {
    return a2_cond[static_cast<std::size_t>((v_a1 * L + l) * A2 + a2)];
  }
};

DesignProbs design_probs(const CellCounts& c) {
  DesignProbs t;
  t.L = c.L;
  t.A2 = c.A2;
  t.a1.assign(static_cast<std::size_t>(c.A1), 0.0);
  t.a2_cond.assign(static_cast<std::size_t>(c.A1) * c.L * c.A2, 0.0);
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l) {
      double stratum = 0.0;
      for (int a2 = 0; a2 < c.A2; ++a2) {
        double m = 0.0;
        for (int y = 0; y < c.Y; ++y) m += c.at(a1, l, a2, y);
        t.a2_cond[static_cast<std::size_t>((a1 * c.L + l) * c.A2 + a2)] = m;
        stratum += m;
      }
      if (stratum > 0.0)
        for (int a2 = 0; a2 < c.A2; ++a2)
          t.a2_cond[static_cast<std::size_t>((a1 * c.L + l) * c.A2 + a2)] /= stratum;
      t.a1[static_cast<std::size_t>(a1)] += stratum;
    }
  double grand = 0.0;
  for (double v : t.a1) grand += v;
  if (grand <= 0.0) throw std::invalid_argument("empty data");
  for (double& v : t.a1) v /= grand;
  return t;
}

void reject_censoring(const CellCounts& c, const char* who) {
  for (double m : c.wcens)
    if (m > 0.0) throw std::invalid_argument(std::string(who) + " does not handle censored designs");
}

DesignProbs probs_for(const CellCounts& cells, const ScenarioSpec* known) {
  if (!known) return design_probs(cells);
  auto pop = population_table(*known);
  if (pop.A1 != cells.A1 || pop.L != cells.L || pop.A2 != cells.A2)
    throw std::invalid_argument("known design does not match the data layout");
  return design_probs(pop);
}

std::string stratum_name(int a1, int l) {
  return "a1=" + std::to_string(a1) + ",l=" + std::to_string(l);
}

// observed a2 must vary inside every populated stratum, or the stage-2
// residuals carry no information there
void check_a2_variation(const CellCounts& c) {
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l) {
      double stratum = 0.0;
      int seen = 0;
      for (int a2 = 0; a2 < c.A2; ++a2) {
        double m = 0.0;
        for (int y = 0; y < c.Y; ++y) m += c.at(a1, l, a2, y);
        stratum += m;
        if (m > 0.0) ++seen;
      }
      if (stratum <= 0.0)
        throw std::runtime_error("singular g-estimation system: empty stratum " +
                                 stratum_name(a1, l));
      if (seen < c.A2)
        throw std::runtime_error("singular g-estimation system: no variation in a2 in stratum " +
                                 stratum_name(a1, l));
    }
}

struct BlipDesign {
  bool saturated;
  std::vector<Term> x_terms;  // formula mode: gamma2 = a2 * x(a1,l)' psi2
  std::vector<Term> d_terms;  // instrument
  int m2 = 0;                 // stage-2 parameter count
  int A1, L, A2;

  double gamma2(const Eigen::VectorXd& psi2, int a1, int l, int a2) const {
    if (a2 == 0) return 0.0;
    if (saturated) return psi2[static_cast<std::size_t>((a1 * L + l) * (A2 - 1) + (a2 - 1))];
    return a2 * design_row(x_terms, a1, l, 0).dot(psi2);
  }
};

BlipDesign make_design(const CellCounts& c, const BlipSpec& spec) {
  BlipDesign d;
  d.saturated = spec.saturated;
  d.A1 = c.A1;
  d.L = c.L;
  d.A2 = c.A2;
  if (spec.saturated) {
    d.m2 = c.A1 * c.L * (c.A2 - 1);
    return d;
  }
  if (c.A2 != 2) throw std::invalid_argument("formula blips require a binary second treatment");
  auto check_scope = [](const std::vector<Term>& ts) {
    for (const auto& t : ts)
      for (const auto& f : t.factors)
        if (f == "a2") throw std::invalid_argument("stage-2 blip terms may not involve a2");
  };
  d.x_terms = parse_terms(spec.stage2_terms);
  check_scope(d.x_terms);
  if (spec.instrument.empty()) {
    d.d_terms = d.x_terms;
  } else {
    if (spec.instrument.size() != spec.stage2_terms.size())
      throw std::invalid_argument("blip instrument must match the stage-2 dimension");
    d.d_terms = parse_terms(spec.instrument);
    check_scope(d.d_terms);
  }
  d.m2 = static_cast<int>(d.x_terms.size()) + 1;
  return d;
}

std::vector<std::string> blip_labels(const BlipDesign& bd, const BlipSpec& spec) {
  std::vector<std::string> labels;
  if (bd.saturated) {
    for (int a1 = 0; a1 < bd.A1; ++a1)
      for (int l = 0; l < bd.L; ++l)
        for (int a2 = 1; a2 < bd.A2; ++a2)
          labels.push_back("g2(" + stratum_name(a1, l) + ",a2=" + std::to_string(a2) + ")");
  } else {
    labels.push_back("a2");
    for (const auto& t : spec.stage2_terms) labels.push_back("a2:" + t);
  }
  for (int a1 = 1; a1 < bd.A1; ++a1) labels.push_back("g1(a1=" + std::to_string(a1) + ")");
  return labels;
}

// stacked estimating function for one cell, evaluated at (psi2, psi1)
void cell_score(const BlipDesign& bd, const DesignProbs& t, int a1, int l, int a2, double y,
                const Eigen::VectorXd& psi2, const Eigen::VectorXd& psi1, Eigen::VectorXd& u) {
  u.setZero();
  double h2 = y - bd.gamma2(psi2, a1, l, a2);
  if (bd.saturated) {
    for (int k = 1; k < bd.A2; ++k) {
      double resid = (a2 == k ? 1.0 : 0.0) - t.cond(a1, l, k);
      u[static_cast<std::size_t>((a1 * bd.L + l) * (bd.A2 - 1) + (k - 1))] = h2 * resid;
    }
  } else {
    double e = t.cond(a1, l, 1);
    Eigen::VectorXd d = design_row(bd.d_terms, a1, l, 0);
    for (int j = 0; j < bd.m2; ++j) u[j] = h2 * d[j] * (a2 - e);
  }
  double g1 = a1 > 0 ? psi1[static_cast<std::size_t>(a1 - 1)] : 0.0;
  double h1 = h2 - g1;
  for (int k = 1; k < bd.A1; ++k)
    u[static_cast<std::size_t>(bd.m2 + k - 1)] =
        h1 * ((a1 == k ? 1.0 : 0.0) - t.a1[static_cast<std::size_t>(k)]);
}

Eigen::VectorXd solve_stage2(const CellCounts& c, const BlipDesign& bd, const DesignProbs& t,
                             const std::vector<std::string>& labels) {
  Eigen::VectorXd psi2(bd.m2);
  if (bd.saturated) {
    // the system decouples by stratum
    for (int a1 = 0; a1 < c.A1; ++a1)
      for (int l = 0; l < c.L; ++l) {
        int k1 = c.A2 - 1;
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k1, k1);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k1);
        for (int kp = 1; kp < c.A2; ++kp)
          for (int a2 = 0; a2 < c.A2; ++a2) {
            double mass = 0.0, ysum = 0.0;
            for (int y = 0; y < c.Y; ++y) {
              mass += c.at(a1, l, a2, y);
              ysum += y * c.at(a1, l, a2, y);
            }
            double resid = (a2 == kp ? 1.0 : 0.0) - t.cond(a1, l, kp);
            b[kp - 1] += ysum * resid;
            if (a2 > 0) m(kp - 1, a2 - 1) += mass * resid;
          }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
        qr.setThreshold(1e-12);
        if (qr.rank() < k1)
          throw std::runtime_error("singular g-estimation system in stratum " +
                                   stratum_name(a1, l));
        psi2.segment((a1 * c.L + l) * k1, k1) = qr.solve(b);
      }
    return psi2;
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(bd.m2, bd.m2);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(bd.m2);
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l) {
      Eigen::VectorXd x = design_row(bd.x_terms, a1, l, 0);
      Eigen::VectorXd d = design_row(bd.d_terms, a1, l, 0);
      double e = t.cond(a1, l, 1);
      for (int a2 = 0; a2 < c.A2; ++a2) {
        double mass = 0.0, ysum = 0.0;
        for (int y = 0; y < c.Y; ++y) {
          mass += c.at(a1, l, a2, y);
          ysum += y * c.at(a1, l, a2, y);
        }
        if (mass == 0.0) continue;
        m.noalias() += (mass * (a2 - e) * a2) * (d * x.transpose());
        b.noalias() += (ysum * (a2 - e)) * d;
      }
    }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()));
  if (qr.rank() < bd.m2) {
    Eigen::VectorXi perm = qr.colsPermutation().indices();
    std::string bad;
    for (int i = qr.rank(); i < bd.m2; ++i) {
      if (!bad.empty()) bad += ", ";
      bad += labels[static_cast<std::size_t>(perm[i])];
    }
    throw std::runtime_error("singular g-estimation system, collinear terms: " + bad);
  }
  return qr.solve(b);
}

Eigen::VectorXd solve_stage1(const CellCounts& c, const BlipDesign& bd, const DesignProbs& t,
                             const Eigen::VectorXd& psi2) {
  int k1 = c.A1 - 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k1, k1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k1);
  std::vector<double> arm_mass(static_cast<std::size_t>(c.A1), 0.0);
  for (int a1 = 0; a1 < c.A1; ++a1)
    for (int l = 0; l < c.L; ++l)
      for (int a2 = 0; a2 < c.A2; ++a2) {
        double g2 = bd.gamma2(psi2, a1, l, a2);
        for (int y = 0; y < c.Y; ++y) {
          double mass = c.at(a1, l, a2, y);
          if (mass == 0.0) continue;
          arm_mass[static_cast<std::size_t>(a1)] += mass;
          double h2 = y - g2;
          for (int kp = 1; kp < c.A1; ++kp) {
            double resid = (a1 == kp ? 1.0 : 0.0) - t.a1[static_cast<std::size_t>(kp)];
            b[kp - 1] += mass * h2 * resid;
            if (a1 > 0) m(kp - 1, a1 - 1) += mass * resid;
          }
        }
      }
  for (int a1 = 0; a1 < c.A1; ++a1)
    if (arm_mass[static_cast<std::size_t>(a1)] <= 0.0)
      throw std::runtime_error("no records with a1=" + std::to_string(a1));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-12);
  if (qr.rank() < k1) throw std::runtime_error("singular g-estimation system in stage 1");
  return qr.solve(b);
}

}  // namespace

GEstimate g_estimate(const CellCounts& cells, const BlipSpec& spec, const ScenarioSpec* known) {
  reject_censoring(cells, "g-estimation");
  if (cells.total <= 0.0) throw std::invalid_argument("empty data");
  auto bd = make_design(cells, spec);
  auto t = probs_for(cells, known);
  if (spec.saturated) check_a2_variation(cells);

  GEstimate est;
  est.saturated = spec.saturated;
  est.known_probs = known != nullptr;
  est.stage2_dim = bd.m2;
  est.A1 = cells.A1;
  est.L = cells.L;
  est.A2 = cells.A2;
  est.labels = blip_labels(bd, spec);

  Eigen::VectorXd psi2 = solve_stage2(cells, bd, t, est.labels);
  Eigen::VectorXd psi1 = solve_stage1(cells, bd, t, psi2);
  int p = bd.m2 + cells.A1 - 1;
  est.psi.resize(p);
  est.psi << psi2, psi1;

  est.blip2.assign(static_cast<std::size_t>(cells.A1) * cells.L * cells.A2, 0.0);
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l)
      for (int a2 = 1; a2 < cells.A2; ++a2)
        est.blip2[static_cast<std::size_t>((a1 * cells.L + l) * cells.A2 + a2)] =
            bd.gamma2(psi2, a1, l, a2);
  est.blip1.assign(static_cast<std::size_t>(cells.A1), 0.0);
  for (int a1 = 1; a1 < cells.A1; ++a1)
    est.blip1[static_cast<std::size_t>(a1)] = psi1[static_cast<std::size_t>(a1 - 1)];

  // sandwich over the stacked linear system
  const double n = cells.total;
  Eigen::VectorXd u(p);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l)
      for (int a2 = 0; a2 < cells.A2; ++a2)
        for (int y = 0; y < cells.Y; ++y) {
          double mass = cells.at(a1, l, a2, y);
          if (mass == 0.0) continue;
          cell_score(bd, t, a1, l, a2, y, psi2, psi1, u);
          meat.noalias() += (mass / n) * (u * u.transpose());
        }
  auto g_at = [&](const Eigen::VectorXd& psi) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd uu(p);
    Eigen::VectorXd p2 = psi.head(bd.m2);
    Eigen::VectorXd p1 = psi.tail(cells.A1 - 1);
    for (int a1 = 0; a1 < cells.A1; ++a1)
      for (int l = 0; l < cells.L; ++l)
        for (int a2 = 0; a2 < cells.A2; ++a2)
          for (int y = 0; y < cells.Y; ++y) {
            double mass = cells.at(a1, l, a2, y);
            if (mass == 0.0) continue;
            cell_score(bd, t, a1, l, a2, y, p2, p1, uu);
            acc.noalias() += mass * uu;
          }
    return Eigen::VectorXd(acc / n);
  };
  Eigen::MatrixXd jac = numeric_jacobian(g_at, est.psi);
  est.cov = sandwich_cov(jac, meat, n);
  est.se.resize(p);
  for (int j = 0; j < p; ++j) est.se[j] = std::sqrt(std::max(est.cov(j, j), 0.0));
  return est;
}

GEstimate g_estimate(const LongitudinalDataset& data, const BlipSpec& spec,
                     const ScenarioSpec* known) {
  return g_estimate(CellCounts::from(data), spec, known);
}

// ---------------------------------------------------------------------------

GNullReport gnull_mean_test(const CellCounts& cells, const ScenarioSpec* known) {
  reject_censoring(cells, "the g-null test");
  if (cells.total <= 0.0) throw std::invalid_argument("empty data");
  auto t = probs_for(cells, known);

  // saturated score components over populated strata only
  struct Comp {
    int a1, l, k;  // stage-2: indicator stratum x residual level; l = -1 for stage 1
  };
  std::vector<Comp> comps;
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l) {
      double mass = 0.0;
      for (int a2 = 0; a2 < cells.A2; ++a2)
        for (int y = 0; y < cells.Y; ++y) mass += cells.at(a1, l, a2, y);
      if (mass <= 0.0) continue;
      for (int k = 1; k < cells.A2; ++k) comps.push_back({a1, l, k});
    }
  for (int k = 1; k < cells.A1; ++k) comps.push_back({k, -1, 0});

  const auto p = static_cast<int>(comps.size());
  const double n = cells.total;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd vv = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd u(p);
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l)
      for (int a2 = 0; a2 < cells.A2; ++a2)
        for (int y = 0; y < cells.Y; ++y) {
          double mass = cells.at(a1, l, a2, y);
          if (mass == 0.0) continue;
          for (int j = 0; j < p; ++j) {
            const auto& cmp = comps[static_cast<std::size_t>(j)];
            if (cmp.l >= 0)
              u[j] = (a1 == cmp.a1 && l == cmp.l)
                         ? y * ((a2 == cmp.k ? 1.0 : 0.0) - t.cond(a1, l, cmp.k))
                         : 0.0;
            else
              u[j] = y * ((a1 == cmp.a1 ? 1.0 : 0.0) - t.a1[static_cast<std::size_t>(cmp.a1)]);
          }
          mean.noalias() += (mass / n) * u;
          vv.noalias() += (mass / n) * (u * u.transpose());
        }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(vv);
  qr.setThreshold(1e-12);
  if (qr.rank() < p) throw std::runtime_error("singular score covariance in the g-null test");

  GNullReport rep;
  rep.df = p;
  rep.known_probs = known != nullptr;
  rep.statistic = n * mean.dot(qr.solve(mean));
  rep.p_value = chi_square_pvalue(rep.statistic, p);
  return rep;
}

GNullReport gnull_mean_test(const LongitudinalDataset& data, const ScenarioSpec* known) {
  return gnull_mean_test(CellCounts::from(data), known);
}

// ---------------------------------------------------------------------------

namespace {
// blips agreeing to below this are structural ties surfacing linear-solve
// dust, not real preferences
constexpr double kTieEps = 1e-9;
}  // namespace

Regime OptimalRegime::regime() const {
  auto n_l = static_cast<int>(g2_opt.size()) / static_cast<int>(value_by_a1.size());
  std::vector<int> map;
  for (int l = 0; l < n_l; ++l) map.push_back(g2_opt[static_cast<std::size_t>(a1_opt * n_l + l)]);
  return Regime::dynamic(a1_opt, std::move(map));
}

OptimalRegime optimal_regime(const CellCounts& cells, const BlipSpec& spec,
                             const ScenarioSpec* known) {
  OptimalRegime out;
  out.fit = g_estimate(cells, spec, known);

  out.g2_opt.assign(static_cast<std::size_t>(cells.A1) * cells.L, 0);
  out.g2_tie.assign(static_cast<std::size_t>(cells.A1) * cells.L, false);
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l) {
      int best = 0;
      bool tie = false;
      for (int a2 = 1; a2 < cells.A2; ++a2) {
        double cur = out.fit.gamma2(a1, l, a2);
        double inc = out.fit.gamma2(a1, l, best);
        if (cur > inc + kTieEps) {
          best = a2;
          tie = false;
        } else if (cur > inc - kTieEps) {
          tie = true;
        }
      }
      out.g2_opt[static_cast<std::size_t>(a1 * cells.L + l)] = best;
      out.g2_tie[static_cast<std::size_t>(a1 * cells.L + l)] = tie;
    }

  // blip the observed outcome up to the stage-2 optimum, then average by arm
  std::vector<double> num(static_cast<std::size_t>(cells.A1), 0.0);
  std::vector<double> den(static_cast<std::size_t>(cells.A1), 0.0);
  for (int a1 = 0; a1 < cells.A1; ++a1)
    for (int l = 0; l < cells.L; ++l) {
      int opt = out.g2_opt[static_cast<std::size_t>(a1 * cells.L + l)];
      for (int a2 = 0; a2 < cells.A2; ++a2)
        for (int y = 0; y < cells.Y; ++y) {
          double mass = cells.at(a1, l, a2, y);
          if (mass == 0.0) continue;
          double bumped = y - out.fit.gamma2(a1, l, a2) + out.fit.gamma2(a1, l, opt);
          num[static_cast<std::size_t>(a1)] += mass * bumped;
          den[static_cast<std::size_t>(a1)] += mass;
        }
    }
  out.value_by_a1.resize(static_cast<std::size_t>(cells.A1));
  for (int a1 = 0; a1 < cells.A1; ++a1)
    out.value_by_a1[static_cast<std::size_t>(a1)] =
        num[static_cast<std::size_t>(a1)] / den[static_cast<std::size_t>(a1)];

  out.gamma1_opt.resize(out.value_by_a1.size());
  for (std::size_t k = 0; k < out.value_by_a1.size(); ++k)
    out.gamma1_opt[k] = out.value_by_a1[k] - out.value_by_a1[0];

  out.a1_opt = 0;
  out.a1_tie = false;
  for (int a1 = 1; a1 < cells.A1; ++a1) {
    double cur = out.value_by_a1[static_cast<std::size_t>(a1)];
    double inc = out.value_by_a1[static_cast<std::size_t>(out.a1_opt)];
    if (cur > inc + kTieEps) {
      out.a1_opt = a1;
      out.a1_tie = false;
    } else if (cur > inc - kTieEps) {
      out.a1_tie = true;
    }
  }
  out.value = out.value_by_a1[static_cast<std::size_t>(out.a1_opt)];
  return out;
}

OptimalRegime optimal_regime(const LongitudinalDataset& data, const BlipSpec& spec,
                             const ScenarioSpec* known) {
  return optimal_regime(CellCounts::from(data), spec, known);
}

// ---------------------------------------------------------------------------

std::vector<double> oracle_blip2(const ScenarioSpec& spec) {
  auto ct = oracle_counterfactual_table(spec);
  std::vector<double> num(
      static_cast<std::size_t>(ct.n_a1) * ct.n_l * ct.n_a2, 0.0);
  std::vector<double> den(num.size(), 0.0);
  ct.for_each([&](double p, const std::vector<int>& l, const std::vector<int>& s,
                  const std::vector<int>& y) {
    for (int a1 = 0; a1 < ct.n_a1; ++a1) {
      auto idx = static_cast<std::size_t>(
          (a1 * ct.n_l + l[static_cast<std::size_t>(a1)]) * ct.n_a2 +
          s[static_cast<std::size_t>(a1)]);
      den[idx] += p;
      num[idx] += p * (y[static_cast<std::size_t>(a1 * ct.n_a2 + s[static_cast<std::size_t>(a1)])] -
                       y[static_cast<std::size_t>(a1 * ct.n_a2)]);
    }
  });
  std::vector<double> blip(num.size(), 0.0);
  for (std::size_t i = 0; i < num.size(); ++i) {
    if (i % static_cast<std::size_t>(ct.n_a2) == 0) continue;  // a2 = 0 reference
    if (den[i] <= 0.0) throw std::runtime_error("empty natural stratum in the oracle blip");
    blip[i] = num[i] / den[i];
  }
  return blip;
}

std::vector<double> oracle_blip1(const ScenarioSpec& spec) {
  int n_a1 = spec.a1_var().support;
  std::vector<double> blip(static_cast<std::size_t>(n_a1), 0.0);
  double ref = oracle_mean(spec, Regime::fixed(0, 0));
  for (int a1 = 1; a1 < n_a1; ++a1)
    blip[static_cast<std::size_t>(a1)] = oracle_mean(spec, Regime::fixed(a1, 0)) - ref;
  return blip;
}

}  // namespace gmethods
