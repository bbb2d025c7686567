#include "gmethods/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gmethods {

namespace {

double expit(double t) {
  if (t >= 0.0) {
    double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(t);
  return e / (1.0 + e);
}

// Column indices that a column-pivoted QR left outside the numerical rank.
std::vector<int> deficient_columns(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                                   int cols) {
  std::vector<int> out;
  Eigen::VectorXi perm = qr.colsPermutation().indices();
  for (int i = qr.rank(); i < cols; ++i) out.push_back(perm[i]);
  std::sort(out.begin(), out.end());
  return out;
}

std::string join_labels(const std::vector<std::string>& labels, const std::vector<int>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ", ";
    s += labels[static_cast<std::size_t>(idx[i])];
  }
  return s;
}

// Solves info * step = score, flagging collinear columns by name.
Eigen::VectorXd solve_information(const Eigen::MatrixXd& info, const Eigen::VectorXd& score,
                                  const std::vector<std::string>& labels) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
  qr.setThreshold(1e-10);
  if (qr.rank() < info.cols()) {
    throw std::invalid_argument("singular design, collinear terms: " +
                                join_labels(labels, deficient_columns(qr, (int)info.cols())));
  }
  return qr.solve(score);
}

std::vector<std::string> full_labels(const std::vector<std::string>& labels, int p) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(p));
  out.push_back("(intercept)");
  for (const auto& s : labels) out.push_back(s);
  while ((int)out.size() < p) out.push_back("x" + std::to_string(out.size()));
  if ((int)out.size() != p) out.resize(static_cast<std::size_t>(p));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Terms

std::vector<Term> parse_terms(const std::vector<std::string>& specs) {
  std::vector<Term> out;
  for (const auto& spec : specs) {
    Term t;
    t.label = spec;
    std::string cur;
    std::stringstream ss(spec);
    while (std::getline(ss, cur, ':')) {
      if (cur.empty()) throw std::invalid_argument("empty factor in term '" + spec + "'");
      bool ok = cur == "a1" || cur == "a2" || cur == "l";
      if (!ok && cur.rfind("l@", 0) == 0) {
        ok = cur.size() > 2 && cur.find_first_not_of("0123456789", 2) == std::string::npos;
      }
      if (!ok && cur.rfind("lbit", 0) == 0) {
        ok = cur.size() > 4 && cur.find_first_not_of("0123456789", 4) == std::string::npos;
      }
      if (!ok) throw std::invalid_argument("unknown factor '" + cur + "' in term '" + spec + "'");
      t.factors.push_back(cur);
    }
    if (t.factors.empty()) throw std::invalid_argument("empty term");
    out.push_back(std::move(t));
  }
  return out;
}

double eval_term(const Term& t, int a1, int l, int a2) {
  double v = 1.0;
  for (const auto& f : t.factors) {
    if (f == "a1") {
      v *= a1;
    } else if (f == "a2") {
      v *= a2;
    } else if (f == "l") {
      v *= l;
    } else if (f.rfind("l@", 0) == 0) {
      v *= (l == std::stoi(f.substr(2))) ? 1.0 : 0.0;
    } else {  // lbitJ
      v *= (l >> std::stoi(f.substr(4))) & 1;
    }
    if (v == 0.0) return 0.0;
  }
  return v;
}

Eigen::VectorXd design_row(const std::vector<Term>& terms, int a1, int l, int a2) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(terms.size()) + 1);
  x[0] = 1.0;
  for (std::size_t i = 0; i < terms.size(); ++i)
    x[static_cast<Eigen::Index>(i) + 1] = eval_term(terms[i], a1, l, a2);
  return x;
}

// ---------------------------------------------------------------------------
// Logistic IRLS

static GlmFit irls_logistic(const std::vector<WeightedObs>& rows,
                            const std::vector<double>* offset,
                            const std::vector<std::string>& labels, double tol, int max_iter) {
  if (rows.empty()) throw std::invalid_argument("logistic fit: no observations");
  const int p = static_cast<int>(rows[0].x.size());
  for (const auto& r : rows)
    if ((int)r.x.size() != p) throw std::invalid_argument("logistic fit: ragged design");
  auto names = full_labels(labels, p);

  GlmFit fit;
  fit.labels = names;
  fit.beta = Eigen::VectorXd::Zero(p);

  Eigen::MatrixXd info(p, p);
  Eigen::VectorXd score(p);
  double wsum = 0.0;
  for (const auto& r : rows) wsum += r.w;
  if (wsum <= 0.0) throw std::invalid_argument("logistic fit: zero total weight");

  for (int iter = 1; iter <= max_iter; ++iter) {
    info.setZero();
    score.setZero();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.w == 0.0) continue;
      double eta = r.x.dot(fit.beta) + (offset ? (*offset)[i] : 0.0);
      double mu = expit(eta);
      score.noalias() += (r.w * (r.y - mu)) * r.x;
      info.noalias() += (r.w * mu * (1.0 - mu)) * (r.x * r.x.transpose());
    }
    fit.iterations = iter;
    fit.score_norm = score.norm();
    // A separated fit "converges": the score decays to zero while the
    // coefficients run off to infinity. Catch the runaway instead.
    int worst = 0;
    double big = fit.beta.cwiseAbs().maxCoeff(&worst);
    if (big > 15.0) {
      throw std::runtime_error("logistic fit: separation suspected on term '" +
                               names[static_cast<std::size_t>(worst)] + "' (|coef| " +
                               std::to_string(big) + ")");
    }
    if (fit.score_norm <= tol * std::max(1.0, wsum)) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
      qr.setThreshold(1e-12);
      if (qr.rank() == p)
        fit.cov = qr.inverse();
      else
        fit.cov = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
      return fit;
    }
    fit.beta += solve_information(info, score, names);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", fit.score_norm);
  throw std::runtime_error("logistic fit did not converge in " + std::to_string(max_iter) +
                           " iterations, score norm " + buf);
}

GlmFit fit_logistic(const std::vector<WeightedObs>& rows, const std::vector<std::string>& labels,
                    double tol, int max_iter) {
  return irls_logistic(rows, nullptr, labels, tol, max_iter);
}

GlmFit fit_logistic_offset(const std::vector<WeightedObs>& rows, const std::vector<double>& offset,
                           const std::vector<std::string>& labels, double tol, int max_iter) {
  if (offset.size() != rows.size())
    throw std::invalid_argument("offset length does not match observations");
  return irls_logistic(rows, &offset, labels, tol, max_iter);
}

// ---------------------------------------------------------------------------
// Weighted least squares

GlmFit fit_wls(const std::vector<WeightedObs>& rows, const std::vector<std::string>& labels) {
  if (rows.empty()) throw std::invalid_argument("wls fit: no observations");
  const int p = static_cast<int>(rows[0].x.size());
  auto names = full_labels(labels, p);

  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  double wsum = 0.0;
  for (const auto& r : rows) {
    if (r.w == 0.0) continue;
    xtx.noalias() += r.w * (r.x * r.x.transpose());
    xty.noalias() += (r.w * r.y) * r.x;
    wsum += r.w;
  }
  if (wsum <= 0.0) throw std::invalid_argument("wls fit: zero total weight");

  GlmFit fit;
  fit.labels = names;
  fit.beta = solve_information(xtx, xty, names);
  fit.iterations = 1;
  fit.score_norm = 0.0;

  double rss = 0.0;
  for (const auto& r : rows) {
    double e = r.y - r.x.dot(fit.beta);
    rss += r.w * e * e;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtx);
  fit.cov = (rss / wsum) * qr.inverse();
  return fit;
}

// ---------------------------------------------------------------------------
// Proportional odds

std::vector<double> PropOddsFit::probs(const Eigen::VectorXd& x) const {
  const int k = static_cast<int>(theta.size()) + 1;
  std::vector<double> out(static_cast<std::size_t>(k));
  double prev = 0.0;
  double bx = beta.size() ? beta.dot(x) : 0.0;
  for (int j = 0; j < k - 1; ++j) {
    double c = expit(theta[j] - bx);
    out[static_cast<std::size_t>(j)] = c - prev;
    prev = c;
  }
  out[static_cast<std::size_t>(k - 1)] = 1.0 - prev;
  return out;
}

namespace {

double prop_odds_loglik(const std::vector<OrdinalObs>& rows, const PropOddsFit& f) {
  double ll = 0.0;
  for (const auto& r : rows) {
    auto p = f.probs(r.x);
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (r.w[j] == 0.0) continue;
      if (p[j] <= 0.0) return -std::numeric_limits<double>::infinity();
      ll += r.w[j] * std::log(p[j]);
    }
  }
  return ll;
}

Eigen::VectorXd prop_odds_score(const std::vector<OrdinalObs>& rows, const PropOddsFit& f) {
  const int km1 = static_cast<int>(f.theta.size());
  const int q = static_cast<int>(f.beta.size());
  Eigen::VectorXd score = Eigen::VectorXd::Zero(km1 + q);
  for (const auto& r : rows) {
    double bx = q ? f.beta.dot(r.x) : 0.0;
    // c[j] = expit(theta_j - bx) for j=1..K-1 with c[0]=0, c[K]=1
    std::vector<double> c(static_cast<std::size_t>(km1) + 2, 0.0);
    c.back() = 1.0;
    for (int j = 0; j < km1; ++j) c[static_cast<std::size_t>(j) + 1] = expit(f.theta[j] - bx);
    for (int lev = 0; lev <= km1; ++lev) {
      double wl = r.w[static_cast<std::size_t>(lev)];
      if (wl == 0.0) continue;
      double pj = c[static_cast<std::size_t>(lev) + 1] - c[static_cast<std::size_t>(lev)];
      if (pj <= 0.0) pj = 1e-300;
      double inv = wl / pj;
      // d p_lev / d theta_j: +c'_j at j = lev+1, -c'_j at j = lev (1-based)
      if (lev + 1 <= km1) {
        double cp = c[lev + 1] * (1.0 - c[lev + 1]);
        score[lev] += inv * cp;
      }
      if (lev >= 1) {
        double cp = c[lev] * (1.0 - c[lev]);
        score[lev - 1] -= inv * cp;
      }
      if (q) {
        double dbx = 0.0;  // d p_lev / d (bx)
        if (lev + 1 <= km1) dbx -= c[lev + 1] * (1.0 - c[lev + 1]);
        if (lev >= 1) dbx += c[lev] * (1.0 - c[lev]);
        for (int t = 0; t < q; ++t) score[km1 + t] += inv * dbx * r.x[t];
      }
    }
  }
  return score;
}

}  // namespace

PropOddsFit fit_prop_odds(const std::vector<OrdinalObs>& rows, int n_levels, double tol,
                          int max_iter) {
  if (n_levels < 2) throw std::invalid_argument("prop odds: need at least 2 levels");
  if (rows.empty()) throw std::invalid_argument("prop odds: no observations");
  const int q = static_cast<int>(rows[0].x.size());
  const int km1 = n_levels - 1;

  // Cutpoint start values from the pooled cumulative distribution.
  std::vector<double> tot(static_cast<std::size_t>(n_levels), 0.0);
  double wsum = 0.0;
  for (const auto& r : rows) {
    if ((int)r.w.size() != n_levels) throw std::invalid_argument("prop odds: ragged weights");
    for (int j = 0; j < n_levels; ++j) {
      if (r.w[static_cast<std::size_t>(j)] < 0.0)
        throw std::invalid_argument("prop odds: negative weight");
      tot[static_cast<std::size_t>(j)] += r.w[static_cast<std::size_t>(j)];
      wsum += r.w[static_cast<std::size_t>(j)];
    }
  }
  if (wsum <= 0.0) throw std::invalid_argument("prop odds: zero total weight");

  PropOddsFit fit;
  fit.theta.resize(km1);
  fit.beta = Eigen::VectorXd::Zero(q);
  double acc = 0.0;
  for (int j = 0; j < km1; ++j) {
    acc += tot[static_cast<std::size_t>(j)];
    double f = std::min(1.0 - 1e-6, std::max(1e-6, acc / wsum));
    fit.theta[j] = std::log(f / (1.0 - f));
  }

  double ll = prop_odds_loglik(rows, fit);
  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd score = prop_odds_score(rows, fit);
    fit.iterations = iter;
    fit.score_norm = score.norm();
    if (fit.score_norm <= tol * std::max(1.0, wsum)) return fit;

    // Numeric Hessian of the log-likelihood via central differences of the
    // score, then a damped ascent step.
    const int p = km1 + q;
    Eigen::MatrixXd hess(p, p);
    PropOddsFit probe = fit;
    auto set_par = [&](PropOddsFit& f, int j, double v) {
      if (j < km1)
        f.theta[j] = v;
      else
        f.beta[j - km1] = v;
    };
    auto get_par = [&](const PropOddsFit& f, int j) {
      return j < km1 ? f.theta[j] : f.beta[j - km1];
    };
    for (int j = 0; j < p; ++j) {
      double v = get_par(fit, j);
      double h = 1e-6 * std::max(1.0, std::abs(v));
      set_par(probe, j, v + h);
      Eigen::VectorXd sp = prop_odds_score(rows, probe);
      set_par(probe, j, v - h);
      Eigen::VectorXd sm = prop_odds_score(rows, probe);
      set_par(probe, j, v);
      hess.col(j) = (sp - sm) / (2.0 * h);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(hess);
    qr.setThreshold(1e-12);
    if (qr.rank() < p) throw std::runtime_error("prop odds: singular Hessian");
    Eigen::VectorXd step = qr.solve(-score);

    double lam = 1.0;
    for (int half = 0; half < 40; ++half) {
      PropOddsFit trial = fit;
      trial.theta += lam * step.head(km1);
      if (q) trial.beta += lam * step.tail(q);
      bool ordered = true;
      for (int j = 1; j < km1; ++j)
        if (trial.theta[j] <= trial.theta[j - 1]) ordered = false;
      if (ordered) {
        double llt = prop_odds_loglik(rows, trial);
        if (llt >= ll - 1e-12) {
          fit.theta = trial.theta;
          fit.beta = trial.beta;
          ll = llt;
          break;
        }
      }
      lam *= 0.5;
      if (half == 39) throw std::runtime_error("prop odds: line search failed");
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", fit.score_norm);
  throw std::runtime_error("prop odds fit did not converge, score norm " + std::string(buf));
}

// ---------------------------------------------------------------------------
// Damped Newton on estimating systems

Eigen::MatrixXd numeric_jacobian(const VecFn& g, const Eigen::VectorXd& at) {
  Eigen::VectorXd base = g(at);
  const int m = static_cast<int>(base.size());
  const int p = static_cast<int>(at.size());
  Eigen::MatrixXd jac(m, p);
  Eigen::VectorXd probe = at;
  for (int j = 0; j < p; ++j) {
    double h = 1e-6 * std::max(1.0, std::abs(at[j]));
    probe[j] = at[j] + h;
    Eigen::VectorXd gp = g(probe);
    probe[j] = at[j] - h;
    Eigen::VectorXd gm = g(probe);
    probe[j] = at[j];
    jac.col(j) = (gp - gm) / (2.0 * h);
  }
  return jac;
}

Eigen::VectorXd damped_newton(const VecFn& g, Eigen::VectorXd start, double tol, int max_iter) {
  Eigen::VectorXd x = std::move(start);
  Eigen::VectorXd gx = g(x);
  if (gx.size() != x.size())
    throw std::invalid_argument("damped newton: system is not square");
  double norm = gx.norm();
  for (int iter = 1; iter <= max_iter; ++iter) {
    if (norm <= tol) return x;
    Eigen::MatrixXd jac = numeric_jacobian(g, x);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    qr.setThreshold(1e-13);
    if (qr.rank() < jac.cols()) throw std::runtime_error("damped newton: singular Jacobian");
    Eigen::VectorXd step = qr.solve(-gx);
    double lam = 1.0;
    while (true) {
      Eigen::VectorXd trial = x + lam * step;
      Eigen::VectorXd gt = g(trial);
      double nt = gt.norm();
      if (nt < norm * (1.0 - 1e-4 * lam) || nt <= tol) {
        x = trial;
        gx = gt;
        norm = nt;
        break;
      }
      lam *= 0.5;
      if (lam < 1e-10) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3g", norm);
        throw std::runtime_error("damped newton stalled, residual norm " + std::string(buf));
      }
    }
  }
  if (norm <= tol) return x;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", norm);
  throw std::runtime_error("damped newton did not converge, residual norm " + std::string(buf));
}

Eigen::MatrixXd sandwich_cov(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& meat,
                             double n) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jacobian);
  qr.setThreshold(1e-13);
  if (qr.rank() < jacobian.cols())
    throw std::runtime_error("sandwich: singular estimating-equation Jacobian");
  Eigen::MatrixXd jinv = qr.inverse();
  return jinv * meat * jinv.transpose() / n;
}

// ---------------------------------------------------------------------------
// Alias sampler and cell bootstrap

CategoricalSampler::CategoricalSampler(const std::vector<double>& weights) {
  const std::size_t k = weights.size();
  if (k == 0) throw std::invalid_argument("alias sampler: empty weights");
  double tot = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw std::invalid_argument("alias sampler: bad weight");
    tot += w;
  }
  if (tot <= 0.0) throw std::invalid_argument("alias sampler: zero total weight");

  accept_.assign(k, 1.0);
  alias_.assign(k, 0);
  std::vector<double> scaled(k);
  for (std::size_t i = 0; i < k; ++i) scaled[i] = weights[i] * static_cast<double>(k) / tot;

  std::vector<int> small, large;
  for (std::size_t i = 0; i < k; ++i)
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<int>(i));
  while (!small.empty() && !large.empty()) {
    int s = small.back();
    small.pop_back();
    int g = large.back();
    accept_[static_cast<std::size_t>(s)] = scaled[static_cast<std::size_t>(s)];
    alias_[static_cast<std::size_t>(s)] = g;
    scaled[static_cast<std::size_t>(g)] -= 1.0 - scaled[static_cast<std::size_t>(s)];
    if (scaled[static_cast<std::size_t>(g)] < 1.0) {
      large.pop_back();
      small.push_back(g);
    }
  }
  for (int s : small) accept_[static_cast<std::size_t>(s)] = 1.0;
  for (int g : large) accept_[static_cast<std::size_t>(g)] = 1.0;
}

int CategoricalSampler::draw(SplitRng& rng) const {
  const std::size_t k = accept_.size();
  double u = rng.uniform() * static_cast<double>(k);
  auto i = static_cast<std::size_t>(u);
  if (i >= k) i = k - 1;
  double frac = u - static_cast<double>(i);
  return frac < accept_[i] ? static_cast<int>(i) : alias_[i];
}

CellCounts resample_cells(const CellCounts& counts, SplitRng& rng) {
  double n_round = std::nearbyint(counts.total);
  if (std::abs(counts.total - n_round) > 1e-9 || n_round < 1.0)
    throw std::invalid_argument("bootstrap needs integer cell counts");
  auto n = static_cast<std::uint64_t>(n_round);

  std::vector<double> weights = counts.w;
  weights.insert(weights.end(), counts.wcens.begin(), counts.wcens.end());
  CategoricalSampler sampler(weights);

  CellCounts out;
  out.A1 = counts.A1;
  out.L = counts.L;
  out.A2 = counts.A2;
  out.Y = counts.Y;
  out.w.assign(counts.w.size(), 0.0);
  out.wcens.assign(counts.wcens.size(), 0.0);
  out.total = static_cast<double>(n);
  const auto n_plain = counts.w.size();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto c = static_cast<std::size_t>(sampler.draw(rng));
    if (c < n_plain)
      out.w[c] += 1.0;
    else
      out.wcens[c - n_plain] += 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tails

namespace {

// Regularized lower incomplete gamma P(a, x): series for x < a+1, continued
// fraction otherwise.
double reg_lower_gamma(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("reg_lower_gamma domain");
  if (x == 0.0) return 0.0;
  double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Lentz continued fraction for Q(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1.0 - q;
}

}  // namespace

double chi_square_cdf(double x, double df) {
  if (df <= 0.0) throw std::invalid_argument("chi-square df must be positive");
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(df / 2.0, x / 2.0);
}

double chi_square_pvalue(double stat, double df) {
  double p = 1.0 - chi_square_cdf(stat, df);
  return std::min(1.0, std::max(0.0, p));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal quantile domain");
  // Acklam's rational approximation, then one Halley refinement.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * 3.141592653589793238462643) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

}  // namespace gmethods
