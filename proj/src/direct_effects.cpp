#include "gmethods/direct_effects.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gmethods/models.hpp"
#include "gmethods/rng.hpp"

namespace gmethods {
namespace {

// ---------------------------------------------------------------------------
// Exact rational scalar. The coupling LPs are tiny but their verdicts feed
// sharpness claims, so small instances are re-solved exactly; any overflow
// falls back to the floating solve.

long long checked_ll(__int128 v, const char* what) {
  if (v > std::numeric_limits<long long>::max() || v < std::numeric_limits<long long>::min())
    throw std::runtime_error(std::string("rational overflow in ") + what);
  return static_cast<long long>(v);
}

struct Rat {
  long long num = 0;
  long long den = 1;

  Rat() = default;
  Rat(int v) : num(v) {}

  static Rat make(__int128 n, __int128 d) {
    if (d == 0) throw std::runtime_error("rational overflow in make");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 a = n < 0 ? -n : n;
    __int128 b = d;
    while (b != 0) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      n /= a;
      d /= a;
    }
    Rat r;
    r.num = checked_ll(n, "make");
    r.den = checked_ll(d, "make");
    return r;
  }

  Rat operator+(const Rat& o) const {
    return make(static_cast<__int128>(num) * o.den + static_cast<__int128>(o.num) * den,
                static_cast<__int128>(den) * o.den);
  }
  Rat operator-(const Rat& o) const {
    return make(static_cast<__int128>(num) * o.den - static_cast<__int128>(o.num) * den,
                static_cast<__int128>(den) * o.den);
  }
  Rat operator*(const Rat& o) const {
    return make(static_cast<__int128>(num) * o.num, static_cast<__int128>(den) * o.den);
  }
  Rat operator/(const Rat& o) const {
    if (o.num == 0) throw std::runtime_error("rational overflow in div");
    return make(static_cast<__int128>(num) * o.den, static_cast<__int128>(den) * o.num);
  }
  bool operator<(const Rat& o) const {
    return static_cast<__int128>(num) * o.den < static_cast<__int128>(o.num) * den;
  }
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// nearest small fraction by continued expansion; the enumerated tables are
// built from probabilities on coarse grids, so this recovers them exactly
Rat rationalize(double x) {
  if (!std::isfinite(x) || x < 0.0) throw std::runtime_error("rational overflow in input");
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double val = x;
  for (int it = 0; it < 48; ++it) {
    double fl = std::floor(val);
    if (fl > 1e15) throw std::runtime_error("rational overflow in expand");
    auto a = static_cast<long long>(fl);
    __int128 p2 = static_cast<__int128>(a) * p1 + p0;
    __int128 q2 = static_cast<__int128>(a) * q1 + q0;
    if (q2 > 2'000'000'000) break;
    p0 = p1;
    q0 = q1;
    p1 = checked_ll(p2, "expand");
    q1 = checked_ll(q2, "expand");
    double approx = static_cast<double>(p1) / static_cast<double>(q1);
    if (std::abs(x - approx) < 1e-12) return Rat::make(p1, q1);
    double rem = val - fl;
    if (rem < 1e-13) break;
    val = 1.0 / rem;
  }
  throw std::runtime_error("rational overflow in approximation");
}

template <typename T>
struct LpTraits;
template <>
struct LpTraits<double> {
  static bool pos(double v) { return v > 1e-9; }
};
template <>
struct LpTraits<Rat> {
  static bool pos(const Rat& v) { return v.num > 0; }
};

// Two-phase dense simplex, Bland's rule: maximize c.x over Ax = b, x >= 0
// with b >= 0. Throws on infeasible/unbounded programs.
template <typename T>
T lp_max(const std::vector<std::vector<T>>& a, const std::vector<T>& b,
         const std::vector<T>& c) {
  using Tr = LpTraits<T>;
  const auto m = static_cast<int>(a.size());
  const auto n = static_cast<int>(c.size());
  const int cols = n + m;

  std::vector<std::vector<T>> t(static_cast<std::size_t>(m),
                                std::vector<T>(static_cast<std::size_t>(cols + 1), T(0)));
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) t[i][static_cast<std::size_t>(j)] = a[i][static_cast<std::size_t>(j)];
    t[i][static_cast<std::size_t>(n + i)] = T(1);
    t[i][static_cast<std::size_t>(cols)] = b[static_cast<std::size_t>(i)];
    basis[static_cast<std::size_t>(i)] = n + i;
  }

  std::vector<T> obj(static_cast<std::size_t>(cols), T(0));

  auto pivot = [&](int r, int ccol) {
    T piv = t[r][static_cast<std::size_t>(ccol)];
    for (int j = 0; j <= cols; ++j) t[r][static_cast<std::size_t>(j)] = t[r][static_cast<std::size_t>(j)] / piv;
    for (int i = 0; i < m; ++i) {
      if (i == r) continue;
      T f = t[i][static_cast<std::size_t>(ccol)];
      if (Tr::pos(f) || Tr::pos(T(0) - f))
        for (int j = 0; j <= cols; ++j)
          t[i][static_cast<std::size_t>(j)] = t[i][static_cast<std::size_t>(j)] - f * t[r][static_cast<std::size_t>(j)];
    }
    T f = obj[static_cast<std::size_t>(ccol)];
    if (Tr::pos(f) || Tr::pos(T(0) - f))
      for (int j = 0; j < cols; ++j)
        obj[static_cast<std::size_t>(j)] = obj[static_cast<std::size_t>(j)] - f * t[r][static_cast<std::size_t>(j)];
    basis[static_cast<std::size_t>(r)] = ccol;
  };

  // entering restricted to the real columns; artificials may only leave.
  // Steepest reduced cost while the objective moves, switching to Bland's
  // rule for good after a long degenerate stall so termination is certain.
  auto run = [&]() {
    bool bland = false;
    int stall = 0;
    for (;;) {
      int enter = -1;
      if (bland) {
        for (int j = 0; j < n; ++j)
          if (Tr::pos(obj[static_cast<std::size_t>(j)])) {
            enter = j;
            break;
          }
      } else {
        for (int j = 0; j < n; ++j)
          if (Tr::pos(obj[static_cast<std::size_t>(j)]) &&
              (enter < 0 || obj[static_cast<std::size_t>(enter)] < obj[static_cast<std::size_t>(j)]))
            enter = j;
      }
      if (enter < 0) return;
      int leave = -1;
      for (int i = 0; i < m; ++i) {
        if (!Tr::pos(t[i][static_cast<std::size_t>(enter)])) continue;
        if (leave < 0) {
          leave = i;
          continue;
        }
        T lhs = t[i][static_cast<std::size_t>(cols)] * t[leave][static_cast<std::size_t>(enter)];
        T rhs = t[leave][static_cast<std::size_t>(cols)] * t[i][static_cast<std::size_t>(enter)];
        if (lhs < rhs ||
            (!(rhs < lhs) && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)]))
          leave = i;
      }
      if (leave < 0) throw std::runtime_error("unbounded coupling program");
      if (Tr::pos(t[leave][static_cast<std::size_t>(cols)])) {
        stall = 0;
      } else if (++stall > 4 * (m + 4)) {
        bland = true;
      }
      pivot(leave, enter);
    }
  };

  // phase 1: drive the artificial basis out
  for (int j = 0; j < n; ++j) {
    T s(0);
    for (int i = 0; i < m; ++i) s = s + a[i][static_cast<std::size_t>(j)];
    obj[static_cast<std::size_t>(j)] = s;
  }
  run();
  for (int i = 0; i < m; ++i)
    if (basis[static_cast<std::size_t>(i)] >= n && Tr::pos(t[i][static_cast<std::size_t>(cols)]))
      throw std::runtime_error("infeasible coupling program");

  // phase 2: the real objective, priced through the current basis
  for (int j = 0; j < cols; ++j) obj[static_cast<std::size_t>(j)] = T(0);
  for (int j = 0; j < n; ++j) obj[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j)];
  for (int i = 0; i < m; ++i) {
    int bi = basis[static_cast<std::size_t>(i)];
    if (bi >= n) continue;
    T cb = c[static_cast<std::size_t>(bi)];
    if (Tr::pos(cb) || Tr::pos(T(0) - cb))
      for (int j = 0; j < cols; ++j)
        obj[static_cast<std::size_t>(j)] = obj[static_cast<std::size_t>(j)] - cb * t[i][static_cast<std::size_t>(j)];
  }
  run();

  T value(0);
  for (int i = 0; i < m; ++i) {
    int bi = basis[static_cast<std::size_t>(i)];
    if (bi < n) value = value + c[static_cast<std::size_t>(bi)] * t[i][static_cast<std::size_t>(cols)];
  }
  return value;
}

// ---------------------------------------------------------------------------
// Coupling-space geometry shared by the bounds LP.

struct AtomSpace {
  int n_l, n_a2, n_y;
  std::vector<std::array<int, 8>> coords;  // l0 l1 s0 s1 y00 y01 y10 y11
  std::vector<double> objective;           // y[1][s0] - y[0][s0]
};

int margin_slot(int n_a2, int n_y, int l, int s, int y) { return (l * n_a2 + s) * n_y + y; }

double bootstrap_sd(std::vector<double>& vals) {
  if (vals.size() < 2) return 0.0;
  double m = 0;
  for (double v : vals) m += v;
  m /= static_cast<double>(vals.size());
  double s = 0;
  for (double v : vals) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(vals.size() - 1));
}

double cell_mass(const CellCounts& c, int a1, int a2) {
  double m = 0;
  for (int y = 0; y < c.Y; ++y) m += c.at(a1, 0, a2, y);
  return m;
}

double cell_mean(const CellCounts& c, int a1, int a2) {
  double m = 0, s = 0;
  for (int y = 0; y < c.Y; ++y) {
    m += c.at(a1, 0, a2, y);
    s += y * c.at(a1, 0, a2, y);
  }
  if (m <= 0.0)
    throw std::runtime_error("empty cell a1=" + std::to_string(a1) +
                             ",a2=" + std::to_string(a2));
  return s / m;
}

double mediation_pde_value(const CellCounts& cells) {
  if (cells.L != 1)
    throw std::invalid_argument(
        "the mediation formula needs the two-variable world (single covariate stratum)");
  for (double v : cells.wcens)
    if (v > 0.0) throw std::invalid_argument("the mediation formula does not handle censoring");
  double arm0 = 0;
  for (int a2 = 0; a2 < cells.A2; ++a2) arm0 += cell_mass(cells, 0, a2);
  if (arm0 <= 0.0) throw std::runtime_error("empty cell a1=0");
  double pde = 0;
  for (int a2 = 0; a2 < cells.A2; ++a2) {
    double w = cell_mass(cells, 0, a2) / arm0;
    if (w == 0.0) continue;
    pde += w * (cell_mean(cells, 1, a2) - cell_mean(cells, 0, a2));
  }
  return pde;
}

double total_effect_value(const CellCounts& cells) {
  double m[2] = {0, 0}, s[2] = {0, 0};
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < cells.A2; ++a2)
      for (int y = 0; y < cells.Y; ++y) {
        m[a1] += cells.at(a1, 0, a2, y);
        s[a1] += y * cells.at(a1, 0, a2, y);
      }
  if (m[0] <= 0.0) throw std::runtime_error("empty cell a1=0");
  if (m[1] <= 0.0) throw std::runtime_error("empty cell a1=1");
  return s[1] / m[1] - s[0] / m[0];
}

}  // namespace

// ---------------------------------------------------------------------------

DirectEffectReport cde(const CellCounts& cells, int a2, const NuisanceSpec& nuis, int n_bootstrap,
                       std::uint64_t seed) {
  if (a2 < 0 || a2 >= cells.A2) throw std::invalid_argument("a2 outside the data support");
  auto value = [&](const CellCounts& c) {
    return gformula_static(c, 1, a2, nuis).value - gformula_static(c, 0, a2, nuis).value;
  };
  DirectEffectReport r;
  r.kind = "CDE(a2=" + std::to_string(a2) + ")";
  r.value = value(cells);
  r.identified_from_data = true;
  r.assumptions = Assumptions::ffrcistg;
  if (n_bootstrap > 0) {
    SplitRng root(seed, 0xcde0);
    std::vector<double> draws;
    for (int bi = 0; bi < n_bootstrap; ++bi) {
      auto rng = root.child(static_cast<std::uint64_t>(bi));
      try {
        draws.push_back(value(resample_cells(cells, rng)));
      } catch (const std::runtime_error&) {
      }
    }
    if (static_cast<int>(draws.size()) < (3 * n_bootstrap) / 4)
      throw std::runtime_error("too many degenerate bootstrap replicates");
    r.se = bootstrap_sd(draws);
  }
  return r;
}

DirectEffectReport cde(const LongitudinalDataset& data, int a2, const NuisanceSpec& nuis,
                       int n_bootstrap, std::uint64_t seed) {
  return cde(CellCounts::from(data), a2, nuis, n_bootstrap, seed);
}

DirectEffectReport cde_oracle(const ScenarioSpec& spec, int a2) {
  DirectEffectReport r;
  r.kind = "CDE(a2=" + std::to_string(a2) + ")";
  r.value = oracle_mean(spec, Regime::fixed(1, a2)) - oracle_mean(spec, Regime::fixed(0, a2));
  r.identified_from_data = true;
  r.assumptions = Assumptions::ffrcistg;
  return r;
}

DirectEffectReport psde_oracle(const ScenarioSpec& spec, int a_from, int a_to,
                               std::optional<int> a2) {
  auto ct = oracle_counterfactual_table(spec);
  if (a_from < 0 || a_from >= ct.n_a1 || a_to < 0 || a_to >= ct.n_a1 || a_from == a_to)
    throw std::invalid_argument("psde needs two distinct a1 arms inside the support");
  if (a2 && (*a2 < 0 || *a2 >= ct.n_a2)) throw std::invalid_argument("a2 outside the support");

  double mass = 0.0, effect = 0.0;
  ct.for_each([&](double p, const std::vector<int>& l, const std::vector<int>& s,
                  const std::vector<int>& y) {
    (void)l;
    int sf = s[static_cast<std::size_t>(a_from)];
    int st = s[static_cast<std::size_t>(a_to)];
    if (sf != st) return;
    if (a2 && sf != *a2) return;
    mass += p;
    // on the stratum the joint-intervention and bare forms coincide:
    // Y(a_to, a2) = Y(a_to) because A2(a_to) = a2 there
    effect += p * (y[static_cast<std::size_t>(a_to * ct.n_a2 + st)] -
                   y[static_cast<std::size_t>(a_from * ct.n_a2 + sf)]);
  });

  DirectEffectReport r;
  r.kind = "PSDE(a1:" + std::to_string(a_from) + "->" + std::to_string(a_to) +
           (a2 ? ",a2=" + std::to_string(*a2) : "") + ")";
  r.identified_from_data = false;
  r.assumptions = Assumptions::ffrcistg;
  r.stratum_mass = mass;
  if (mass <= 0.0) {
    // the first treatment moves every subject's mediator: the stratum is
    // empty and its effect does not exist
    r.defined = false;
    r.value = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.value = effect / mass;
  }
  return r;
}

MediationReport pde_mediation(const CellCounts& cells, int n_bootstrap, std::uint64_t seed) {
  MediationReport rep;
  rep.pde.kind = "PDE";
  rep.pde.value = mediation_pde_value(cells);
  rep.pde.identified_from_data = true;
  rep.pde.assumptions = Assumptions::npsem_ie;
  rep.total = total_effect_value(cells);
  rep.tie.kind = "TIE";
  rep.tie.value = rep.total - rep.pde.value;
  rep.tie.identified_from_data = true;
  rep.tie.assumptions = Assumptions::npsem_ie;

  if (n_bootstrap > 0) {
    SplitRng root(seed, 0x9de0);
    std::vector<double> pdes, ties, totals;
    for (int bi = 0; bi < n_bootstrap; ++bi) {
      auto rng = root.child(static_cast<std::uint64_t>(bi));
      try {
        auto redraw = resample_cells(cells, rng);
        double p = mediation_pde_value(redraw);
        double t = total_effect_value(redraw);
        pdes.push_back(p);
        totals.push_back(t);
        ties.push_back(t - p);
      } catch (const std::runtime_error&) {
      }
    }
    if (static_cast<int>(pdes.size()) < (3 * n_bootstrap) / 4)
      throw std::runtime_error("too many degenerate bootstrap replicates");
    rep.pde.se = bootstrap_sd(pdes);
    rep.tie.se = bootstrap_sd(ties);
    rep.total_se = bootstrap_sd(totals);
  }
  return rep;
}

MediationReport pde_mediation(const LongitudinalDataset& data, int n_bootstrap,
                              std::uint64_t seed) {
  return pde_mediation(CellCounts::from(data), n_bootstrap, seed);
}

DirectEffectReport pde_oracle(const ScenarioSpec& spec) {
  auto ct = oracle_counterfactual_table(spec);
  if (ct.n_a1 != 2) throw std::invalid_argument("pde needs a binary first treatment");
  double v = 0.0;
  ct.for_each([&](double p, const std::vector<int>& l, const std::vector<int>& s,
                  const std::vector<int>& y) {
    (void)l;
    v += p * (y[static_cast<std::size_t>(ct.n_a2 + s[0])] - y[static_cast<std::size_t>(s[0])]);
  });
  DirectEffectReport r;
  r.kind = "PDE";
  r.value = v;
  r.identified_from_data = false;  // cross-world: depends on the coupling
  r.assumptions = Assumptions::ffrcistg;
  return r;
}

DirectEffectReport tie_oracle(const ScenarioSpec& spec) {
  auto ct = oracle_counterfactual_table(spec);
  if (ct.n_a1 != 2) throw std::invalid_argument("tie needs a binary first treatment");
  double v = 0.0;
  ct.for_each([&](double p, const std::vector<int>& l, const std::vector<int>& s,
                  const std::vector<int>& y) {
    (void)l;
    v += p * (y[static_cast<std::size_t>(ct.n_a2 + s[1])] -
              y[static_cast<std::size_t>(ct.n_a2 + s[0])]);
  });
  DirectEffectReport r;
  r.kind = "TIE";
  r.value = v;
  r.identified_from_data = false;
  r.assumptions = Assumptions::ffrcistg;
  return r;
}

PdeBounds pde_bounds(const ScenarioSpec& spec) {
  auto ct = oracle_counterfactual_table(spec);
  if (ct.n_a1 != 2) throw std::invalid_argument("pde bounds need a binary first treatment");
  if (ct.n_a2 != 2) throw std::invalid_argument("pde bounds need a binary second treatment");
  const int n_l = ct.n_l, n_a2 = ct.n_a2, n_y = ct.n_y;

  double raw = std::pow(n_l, 2) * std::pow(n_a2, 2) * std::pow(n_y, 4);
  if (raw > 200000.0) throw std::runtime_error("support too large for the coupling search");

  // single-world joints: one per intervention world (a1, a2), over that
  // world's (L(a1), A2(a1), Y(a1,a2))
  const int slots = n_l * n_a2 * n_y;
  std::vector<std::vector<double>> margin(4, std::vector<double>(static_cast<std::size_t>(slots), 0.0));
  ct.for_each([&](double p, const std::vector<int>& l, const std::vector<int>& s,
                  const std::vector<int>& y) {
    for (int a1 = 0; a1 < 2; ++a1)
      for (int a2 = 0; a2 < n_a2; ++a2)
        margin[static_cast<std::size_t>(a1 * n_a2 + a2)][static_cast<std::size_t>(margin_slot(
            n_a2, n_y, l[static_cast<std::size_t>(a1)], s[static_cast<std::size_t>(a1)],
            y[static_cast<std::size_t>(a1 * n_a2 + a2)]))] += p;
  });

  // atoms of the coupling space, pruned wherever a margin already forbids one
  AtomSpace atoms{n_l, n_a2, n_y, {}, {}};
  std::array<int, 8> co{};
  for (co[0] = 0; co[0] < n_l; ++co[0])
    for (co[1] = 0; co[1] < n_l; ++co[1])
      for (co[2] = 0; co[2] < n_a2; ++co[2])
        for (co[3] = 0; co[3] < n_a2; ++co[3])
          for (co[4] = 0; co[4] < n_y; ++co[4])
            for (co[5] = 0; co[5] < n_y; ++co[5])
              for (co[6] = 0; co[6] < n_y; ++co[6])
                for (co[7] = 0; co[7] < n_y; ++co[7]) {
                  bool alive = true;
                  for (int a1 = 0; a1 < 2 && alive; ++a1)
                    for (int a2 = 0; a2 < n_a2 && alive; ++a2)
                      if (margin[static_cast<std::size_t>(a1 * n_a2 + a2)][static_cast<std::size_t>(
                              margin_slot(n_a2, n_y, co[static_cast<std::size_t>(a1)],
                                          co[static_cast<std::size_t>(2 + a1)],
                                          co[static_cast<std::size_t>(4 + a1 * n_a2 + a2)]))] <=
                          0.0)
                        alive = false;
                  if (!alive) continue;
                  atoms.coords.push_back(co);
                  atoms.objective.push_back(
                      double(co[static_cast<std::size_t>(4 + n_a2 + co[2])]) -
                      double(co[static_cast<std::size_t>(4 + co[2])]));
                }
  const auto n = static_cast<int>(atoms.coords.size());
  if (n == 0) throw std::runtime_error("infeasible coupling program");

  // constraint rows: populated margin slots only
  struct Row {
    int world, slot;
    double mass;
  };
  std::vector<Row> rows;
  for (int w = 0; w < 4; ++w)
    for (int sl = 0; sl < slots; ++sl)
      if (margin[static_cast<std::size_t>(w)][static_cast<std::size_t>(sl)] > 0.0)
        rows.push_back({w, sl, margin[static_cast<std::size_t>(w)][static_cast<std::size_t>(sl)]});
  const auto m = static_cast<int>(rows.size());

  auto incidence = [&](int ri, int aj) {
    const auto& r = rows[static_cast<std::size_t>(ri)];
    const auto& cc = atoms.coords[static_cast<std::size_t>(aj)];
    int a1 = r.world / n_a2, a2 = r.world % n_a2;
    return margin_slot(n_a2, n_y, cc[static_cast<std::size_t>(a1)],
                       cc[static_cast<std::size_t>(2 + a1)],
                       cc[static_cast<std::size_t>(4 + a1 * n_a2 + a2)]) == r.slot;
  };

  PdeBounds out;
  out.n_atoms = n;
  out.n_constraints = m;

  {
    std::vector<std::vector<double>> a(static_cast<std::size_t>(m),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<double> b(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      b[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)].mass;
      for (int j = 0; j < n; ++j)
        if (incidence(i, j)) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1.0;
    }
    std::vector<double> cmax = atoms.objective, cmin(atoms.objective.size());
    for (std::size_t j = 0; j < cmin.size(); ++j) cmin[j] = -atoms.objective[j];
    out.upper = lp_max(a, b, cmax);
    out.lower = -lp_max(a, b, cmin);
  }

  if (n <= 4096) {
    try {
      // margins rebuilt from exactly rationalized table entries keep the
      // constraint system consistent
      std::vector<std::vector<Rat>> rmargin(
          4, std::vector<Rat>(static_cast<std::size_t>(slots), Rat(0)));
      ct.for_each([&](double p, const std::vector<int>& l, const std::vector<int>& s,
                      const std::vector<int>& y) {
        Rat rp = rationalize(p);
        for (int a1 = 0; a1 < 2; ++a1)
          for (int a2 = 0; a2 < n_a2; ++a2) {
            auto& slot = rmargin[static_cast<std::size_t>(a1 * n_a2 + a2)][static_cast<std::size_t>(
                margin_slot(n_a2, n_y, l[static_cast<std::size_t>(a1)],
                            s[static_cast<std::size_t>(a1)],
                            y[static_cast<std::size_t>(a1 * n_a2 + a2)]))];
            slot = slot + rp;
          }
      });
      std::vector<std::vector<Rat>> a(static_cast<std::size_t>(m),
                                      std::vector<Rat>(static_cast<std::size_t>(n), Rat(0)));
      std::vector<Rat> b(static_cast<std::size_t>(m), Rat(0));
      for (int i = 0; i < m; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(i)] =
            rmargin[static_cast<std::size_t>(r.world)][static_cast<std::size_t>(r.slot)];
        for (int j = 0; j < n; ++j)
          if (incidence(i, j)) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = Rat(1);
      }
      std::vector<Rat> cmax(static_cast<std::size_t>(n)), cmin(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) {
        cmax[static_cast<std::size_t>(j)] =
            rationalize(std::abs(atoms.objective[static_cast<std::size_t>(j)]));
        if (atoms.objective[static_cast<std::size_t>(j)] < 0)
          cmax[static_cast<std::size_t>(j)] = Rat(0) - cmax[static_cast<std::size_t>(j)];
        cmin[static_cast<std::size_t>(j)] = Rat(0) - cmax[static_cast<std::size_t>(j)];
      }
      Rat hi = lp_max(a, b, cmax);
      Rat lo = Rat(0) - lp_max(a, b, cmin);
      if (std::abs(hi.to_double() - out.upper) > 1e-7 ||
          std::abs(lo.to_double() - out.lower) > 1e-7)
        throw std::logic_error("coupling solver disagreement");
      out.upper = hi.to_double();
      out.lower = lo.to_double();
      out.exact = true;
    } catch (const std::runtime_error&) {
      // overflow or an unrationalizable margin: keep the floating verdict
    }
  }
  return out;
}

CausationBounds causation_bounds(double f1_t, double f0_t) {
  if (!(f1_t > 0.0)) throw std::invalid_argument("f1(t) must be positive");
  if (f0_t < 0.0) throw std::invalid_argument("f0(t) must be nonnegative");
  CausationBounds b;
  b.f1 = f1_t;
  b.f0 = f0_t;
  b.lower = std::max(0.0, (f1_t - f0_t) / f1_t);
  b.upper = 1.0;
  return b;
}

}  // namespace gmethods
