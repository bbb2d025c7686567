#include "gmethods/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gmethods/rng.hpp"
#include "json.hpp"

namespace gmethods {

namespace {

constexpr double kMaxEnumeration = 1e7;
constexpr double kProbTol = 1e-9;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double checked_product(const std::vector<int>& dims, const std::string& what) {
  double p = 1.0;
  for (int d : dims) p *= static_cast<double>(d);
  if (p > kMaxEnumeration)
    throw std::runtime_error(what + " would need " + std::to_string(p) +
                             " states, above the enumeration cap of 1e7");
  return p;
}

void check_prob_vector(const std::vector<double>& p, const std::string& what) {
  if (p.empty()) fail(what + " is empty");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) fail(what + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > kProbTol)
    fail(what + " sums to " + std::to_string(sum) + ", not 1");
}

// Independent blocks of the error vector: each declared coupling is one block
// with its joint table; errors in no coupling are singleton blocks.
struct ErrorGroup {
  std::vector<int> errs;           // error indices, declaration order of the block
  std::vector<int> dims;           // supports of those errors
  const std::vector<double>* probs;  // joint (or marginal) over dims, row-major
};

std::vector<ErrorGroup> build_groups(const ScenarioSpec& spec) {
  std::vector<int> owner(spec.errors.size(), -1);
  std::vector<ErrorGroup> groups;
  for (std::size_t c = 0; c < spec.couplings.size(); ++c) {
    ErrorGroup g;
    for (const auto& name : spec.couplings[c].errors) {
      int e = spec.error_index(name);
      g.errs.push_back(e);
      g.dims.push_back(spec.errors[static_cast<std::size_t>(e)].support());
      owner[static_cast<std::size_t>(e)] = static_cast<int>(c);
    }
    g.probs = &spec.couplings[c].joint;
    groups.push_back(std::move(g));
  }
  for (std::size_t e = 0; e < spec.errors.size(); ++e) {
    if (owner[e] >= 0) continue;
    ErrorGroup g;
    g.errs = {static_cast<int>(e)};
    g.dims = {spec.errors[e].support()};
    g.probs = &spec.errors[e].probs;
    groups.push_back(std::move(g));
  }
  // Deterministic enumeration order regardless of coupling declaration order.
  std::sort(groups.begin(), groups.end(),
            [](const ErrorGroup& a, const ErrorGroup& b) { return a.errs[0] < b.errs[0]; });
  return groups;
}

void decode_mixed_radix(std::size_t code, const std::vector<int>& dims, std::vector<int>* out) {
  out->resize(dims.size());
  for (std::size_t j = dims.size(); j-- > 0;) {
    (*out)[j] = static_cast<int>(code % static_cast<std::size_t>(dims[j]));
    code /= static_cast<std::size_t>(dims[j]);
  }
}

}  // namespace

std::string role_name(Role r) {
  switch (r) {
    case Role::hidden: return "hidden";
    case Role::treatment: return "treatment";
    case Role::covariate: return "covariate";
    case Role::outcome: return "outcome";
  }
  return "?";
}

Role role_from_name(const std::string& s) {
  if (s == "hidden") return Role::hidden;
  if (s == "treatment") return Role::treatment;
  if (s == "covariate") return Role::covariate;
  if (s == "outcome") return Role::outcome;
  fail("unknown role '" + s + "'");
}

std::string Regime::label() const {
  std::ostringstream out;
  out << "a1=" << a1;
  if (is_static()) {
    out << ",a2=" << a2_by_l[0];
  } else {
    out << ",a2(l)=[";
    for (std::size_t i = 0; i < a2_by_l.size(); ++i)
      out << (i ? "," : "") << a2_by_l[i];
    out << ']';
  }
  return out.str();
}

int ScenarioSpec::var_index(const std::string& n) const {
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (variables[i].name == n) return static_cast<int>(i);
  return -1;
}

int ScenarioSpec::error_index(const std::string& n) const {
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i].name == n) return static_cast<int>(i);
  return -1;
}

int ScenarioSpec::a1_index() const { return static_cast<int>(variables.size()) - 4; }
int ScenarioSpec::l_index() const { return static_cast<int>(variables.size()) - 3; }
int ScenarioSpec::a2_index() const { return static_cast<int>(variables.size()) - 2; }
int ScenarioSpec::y_index() const { return static_cast<int>(variables.size()) - 1; }

void ScenarioSpec::validate() const {
  if (variables.size() < 4) fail("scenario needs at least (A1, L, A2, Y)");
  int nv = static_cast<int>(variables.size());
  int n_hidden = nv - 4;
  for (int i = 0; i < nv; ++i) {
    const Variable& v = variables[static_cast<std::size_t>(i)];
    if (v.name.empty()) fail("variable " + std::to_string(i) + " has an empty name");
    for (int j = 0; j < i; ++j)
      if (variables[static_cast<std::size_t>(j)].name == v.name)
        fail("duplicate variable name '" + v.name + "'");
    Role expect = i < n_hidden ? Role::hidden
                  : (i == a1_index() || i == a2_index()) ? Role::treatment
                  : i == l_index() ? Role::covariate
                                    : Role::outcome;
    if (v.role != expect)
      fail("variable '" + v.name + "' must have role " + role_name(expect) +
           " given its position (order is hiddens..., A1, L, A2, Y)");
    int min_support = (v.role == Role::treatment || v.role == Role::outcome) ? 2 : 1;
    if (v.support < min_support)
      fail("variable '" + v.name + "' needs support of at least " + std::to_string(min_support));
  }
  for (std::size_t e = 0; e < errors.size(); ++e) {
    if (errors[e].name.empty()) fail("error variable with empty name");
    for (std::size_t j = 0; j < e; ++j)
      if (errors[j].name == errors[e].name) fail("duplicate error name '" + errors[e].name + "'");
    check_prob_vector(errors[e].probs, "error distribution '" + errors[e].name + "'");
  }

  // Couplings: disjoint groups whose joints reproduce the declared margins.
  std::vector<int> owner(errors.size(), -1);
  for (std::size_t c = 0; c < couplings.size(); ++c) {
    const Coupling& cp = couplings[c];
    if (cp.errors.size() < 2) fail("coupling needs at least two error variables");
    std::vector<int> dims;
    for (const auto& n : cp.errors) {
      int e = error_index(n);
      if (e < 0) fail("coupling references unknown error '" + n + "'");
      if (owner[static_cast<std::size_t>(e)] >= 0)
        fail("error '" + n + "' appears in more than one coupling");
      owner[static_cast<std::size_t>(e)] = static_cast<int>(c);
      dims.push_back(errors[static_cast<std::size_t>(e)].support());
    }
    std::size_t want = 1;
    for (int d : dims) want *= static_cast<std::size_t>(d);
    if (cp.joint.size() != want)
      fail("coupling joint over (" + std::to_string(cp.errors.size()) + " errors) has " +
           std::to_string(cp.joint.size()) + " entries, expected " + std::to_string(want));
    check_prob_vector(cp.joint, "coupling joint");
    // margins
    for (std::size_t m = 0; m < cp.errors.size(); ++m) {
      int e = error_index(cp.errors[m]);
      std::vector<double> marg(static_cast<std::size_t>(dims[m]), 0.0);
      std::vector<int> vals;
      for (std::size_t code = 0; code < cp.joint.size(); ++code) {
        decode_mixed_radix(code, dims, &vals);
        marg[static_cast<std::size_t>(vals[m])] += cp.joint[code];
      }
      for (int v = 0; v < dims[m]; ++v)
        if (std::fabs(marg[static_cast<std::size_t>(v)] -
                      errors[static_cast<std::size_t>(e)].probs[static_cast<std::size_t>(v)]) >
            kProbTol)
          fail("coupling margin for error '" + cp.errors[m] +
               "' contradicts its declared distribution");
    }
  }

  auto check_fn = [&](const StructuralFn& fn, int owner_var, const std::string& ctx,
                      const std::vector<int>& allowed_parents) {
    std::vector<int> dims;
    std::vector<int> seen;
    for (const auto& pn : fn.parents) {
      int p = var_index(pn);
      if (p < 0) fail(ctx + ": unknown parent '" + pn + "'");
      if (std::find(seen.begin(), seen.end(), p) != seen.end())
        fail(ctx + ": duplicate parent '" + pn + "'");
      seen.push_back(p);
      if (std::find(allowed_parents.begin(), allowed_parents.end(), p) == allowed_parents.end())
        fail(ctx + ": '" + pn + "' is not an allowed parent");
      dims.push_back(variables[static_cast<std::size_t>(p)].support);
    }
    std::vector<int> eseen;
    for (const auto& en : fn.errors) {
      int e = error_index(en);
      if (e < 0) fail(ctx + ": unknown error '" + en + "'");
      if (std::find(eseen.begin(), eseen.end(), e) != eseen.end())
        fail(ctx + ": duplicate error '" + en + "'");
      eseen.push_back(e);
      dims.push_back(errors[static_cast<std::size_t>(e)].support());
    }
    std::size_t want = 1;
    for (int d : dims) want *= static_cast<std::size_t>(d);
    if (fn.table.size() != want)
      fail(ctx + ": table has " + std::to_string(fn.table.size()) + " entries, expected " +
           std::to_string(want));
    int support = owner_var >= 0 ? variables[static_cast<std::size_t>(owner_var)].support
                                 : 0;
    if (owner_var >= 0)
      for (int v : fn.table)
        if (v < 0 || v >= support) fail(ctx + ": table value " + std::to_string(v) +
                                        " outside the variable's support");
  };

  std::vector<int> hidden_ids;
  for (int i = 0; i < n_hidden; ++i) hidden_ids.push_back(i);

  for (int i = 0; i < nv; ++i) {
    const Variable& v = variables[static_cast<std::size_t>(i)];
    if (v.role == Role::treatment) {
      auto it = treatments.find(v.name);
      if (it == treatments.end()) fail("treatment '" + v.name + "' has no treatment table");
      const TreatmentTable& t = it->second;
      std::vector<int> allowed = (i == a1_index())
                                     ? hidden_ids
                                     : std::vector<int>{a1_index(), l_index()};
      std::vector<int> dims;
      std::vector<int> seen;
      for (const auto& pn : t.parents) {
        int p = var_index(pn);
        if (p < 0) fail("treatment '" + v.name + "': unknown parent '" + pn + "'");
        if (std::find(seen.begin(), seen.end(), p) != seen.end())
          fail("treatment '" + v.name + "': duplicate parent '" + pn + "'");
        seen.push_back(p);
        if (std::find(allowed.begin(), allowed.end(), p) == allowed.end())
          fail("treatment '" + v.name + "': '" + pn + "' is not an allowed parent (A1 may " +
               "depend on hidden variables, A2 on A1 and L)");
        dims.push_back(variables[static_cast<std::size_t>(p)].support);
      }
      std::size_t rows = 1;
      for (int d : dims) rows *= static_cast<std::size_t>(d);
      if (t.probs.size() != rows * static_cast<std::size_t>(v.support))
        fail("treatment '" + v.name + "': probability table has " +
             std::to_string(t.probs.size()) + " entries, expected " +
             std::to_string(rows * static_cast<std::size_t>(v.support)));
      for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(t.probs.begin() + static_cast<std::ptrdiff_t>(r * v.support),
                                t.probs.begin() + static_cast<std::ptrdiff_t>((r + 1) * v.support));
        check_prob_vector(row, "treatment '" + v.name + "' row " + std::to_string(r));
      }
      if (t.natural) {
        if (t.natural->parents != t.parents)
          fail("treatment '" + v.name + "': natural mechanism must use the same parents as "
               "the probability table");
        check_fn(*t.natural, i, "treatment '" + v.name + "' natural mechanism", allowed);
      }
    } else {
      auto it = functions.find(v.name);
      if (it == functions.end()) fail("variable '" + v.name + "' has no structural function");
      std::vector<int> allowed;
      if (v.role == Role::hidden) {
        for (int h = 0; h < i; ++h) allowed.push_back(h);
      } else if (i == l_index()) {
        allowed = hidden_ids;
        allowed.push_back(a1_index());
      } else {  // outcome
        allowed = hidden_ids;
        allowed.push_back(a1_index());
        allowed.push_back(l_index());
        allowed.push_back(a2_index());
      }
      check_fn(it->second, i, "function for '" + v.name + "'", allowed);
    }
  }
  for (const auto& [name, fn] : functions) {
    (void)fn;
    int i = var_index(name);
    if (i < 0 || variables[static_cast<std::size_t>(i)].role == Role::treatment)
      fail("structural function declared for non-variable or treatment '" + name + "'");
  }
  for (const auto& [name, t] : treatments) {
    (void)t;
    int i = var_index(name);
    if (i != a1_index() && i != a2_index())
      fail("treatment table declared for non-treatment '" + name + "'");
  }
  if (a2_is_censoring && a2_var().support != 2)
    fail("a censoring indicator must be binary");

  // Natural mechanisms must reproduce their probability tables exactly: the
  // induced conditional law is computed over the joint of the referenced
  // error blocks.
  auto groups = build_groups(*this);
  for (const auto& [tname, t] : treatments) {
    if (!t.natural) continue;
    std::vector<const ErrorGroup*> touched;
    for (const auto& en : t.natural->errors) {
      int e = error_index(en);
      for (const auto& g : groups)
        if (std::find(g.errs.begin(), g.errs.end(), e) != g.errs.end() &&
            std::find(touched.begin(), touched.end(), &g) == touched.end())
          touched.push_back(&g);
    }
    std::vector<int> pdims;
    for (const auto& pn : t.parents)
      pdims.push_back(variables[static_cast<std::size_t>(var_index(pn))].support);
    std::size_t rows = 1;
    for (int d : pdims) rows *= static_cast<std::size_t>(d);
    int support = variables[static_cast<std::size_t>(var_index(tname))].support;

    std::vector<int> evals(errors.size(), 0);
    std::vector<double> induced(static_cast<std::size_t>(support));
    std::vector<int> pvals, gvals;
    for (std::size_t r = 0; r < rows; ++r) {
      decode_mixed_radix(r, pdims, &pvals);
      std::fill(induced.begin(), induced.end(), 0.0);
      // recursive product over the touched groups
      std::function<void(std::size_t, double)> rec = [&](std::size_t gi, double p) {
        if (p == 0.0) return;
        if (gi == touched.size()) {
          std::size_t idx = 0;
          for (std::size_t k = 0; k < t.natural->parents.size(); ++k)
            idx = idx * static_cast<std::size_t>(pdims[k]) + static_cast<std::size_t>(pvals[k]);
          for (const auto& en : t.natural->errors) {
            int e = error_index(en);
            idx = idx * static_cast<std::size_t>(errors[static_cast<std::size_t>(e)].support()) +
                  static_cast<std::size_t>(evals[static_cast<std::size_t>(e)]);
          }
          induced[static_cast<std::size_t>(t.natural->table[idx])] += p;
          return;
        }
        const ErrorGroup& g = *touched[gi];
        for (std::size_t code = 0; code < g.probs->size(); ++code) {
          decode_mixed_radix(code, g.dims, &gvals);
          for (std::size_t k = 0; k < g.errs.size(); ++k)
            evals[static_cast<std::size_t>(g.errs[k])] = gvals[k];
          rec(gi + 1, p * (*g.probs)[code]);
        }
      };
      rec(0, 1.0);
      for (int v = 0; v < support; ++v)
        if (std::fabs(induced[static_cast<std::size_t>(v)] -
                      t.probs[r * static_cast<std::size_t>(support) + static_cast<std::size_t>(v)]) >
            kProbTol)
          fail("treatment '" + tname + "': natural mechanism does not induce its declared "
               "probability table (row " + std::to_string(r) + ")");
    }
  }
}

StructuralFn build_fn(const ScenarioSpec& spec, std::vector<std::string> parents,
                      std::vector<std::string> errors,
                      const std::function<int(const std::vector<int>&, const std::vector<int>&)>& fn) {
  StructuralFn out;
  out.parents = std::move(parents);
  out.errors = std::move(errors);
  std::vector<int> pdims, edims;
  for (const auto& pn : out.parents) {
    int p = spec.var_index(pn);
    if (p < 0) fail("build_fn: unknown parent '" + pn + "'");
    pdims.push_back(spec.variables[static_cast<std::size_t>(p)].support);
  }
  for (const auto& en : out.errors) {
    int e = spec.error_index(en);
    if (e < 0) fail("build_fn: unknown error '" + en + "'");
    edims.push_back(spec.errors[static_cast<std::size_t>(e)].support());
  }
  std::size_t prows = 1, erows = 1;
  for (int d : pdims) prows *= static_cast<std::size_t>(d);
  for (int d : edims) erows *= static_cast<std::size_t>(d);
  out.table.resize(prows * erows);
  std::vector<int> pv, ev;
  for (std::size_t pr = 0; pr < prows; ++pr) {
    decode_mixed_radix(pr, pdims, &pv);
    for (std::size_t er = 0; er < erows; ++er) {
      decode_mixed_radix(er, edims, &ev);
      out.table[pr * erows + er] = fn(pv, ev);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compiled engine.

class ScenarioEngine {
 public:
  explicit ScenarioEngine(const ScenarioSpec& s) : spec(s) {
    nv = static_cast<int>(s.variables.size());
    n_hidden = nv - 4;
    n_a1 = s.a1_var().support;
    n_l = s.l_var().support;
    n_a2 = s.a2_var().support;
    n_y = s.y_var().support;
    groups = build_groups(s);
    fns.resize(static_cast<std::size_t>(nv));
    for (int i = 0; i < nv; ++i) {
      const Variable& v = s.variables[static_cast<std::size_t>(i)];
      if (v.role == Role::treatment) continue;
      fns[static_cast<std::size_t>(i)] = compile_fn(s.functions.at(v.name));
    }
    mech_a1 = compile_mech(s.treatments.at(s.a1_var().name));
    mech_a2 = compile_mech(s.treatments.at(s.a2_var().name));
  }

  struct CFn {
    std::vector<int> parents;      // variable indices
    std::vector<int> par_support;
    std::vector<int> errs;         // error indices
    std::vector<int> err_support;
    const std::vector<int>* table = nullptr;
  };
  struct CMech {
    std::vector<int> parents;
    std::vector<int> par_support;
    const std::vector<double>* probs = nullptr;
    std::optional<CFn> natural;
  };

  CFn compile_fn(const StructuralFn& f) const {
    CFn c;
    for (const auto& pn : f.parents) {
      int p = spec.var_index(pn);
      c.parents.push_back(p);
      c.par_support.push_back(spec.variables[static_cast<std::size_t>(p)].support);
    }
    for (const auto& en : f.errors) {
      int e = spec.error_index(en);
      c.errs.push_back(e);
      c.err_support.push_back(spec.errors[static_cast<std::size_t>(e)].support());
    }
    c.table = &f.table;
    return c;
  }
  CMech compile_mech(const TreatmentTable& t) const {
    CMech m;
    for (const auto& pn : t.parents) {
      int p = spec.var_index(pn);
      m.parents.push_back(p);
      m.par_support.push_back(spec.variables[static_cast<std::size_t>(p)].support);
    }
    m.probs = &t.probs;
    if (t.natural) m.natural = compile_fn(*t.natural);
    return m;
  }

  World make_world() const {
    World w;
    w.eng_ = this;
    return w;
  }
  std::size_t memo_size() const {
    return static_cast<std::size_t>(n_hidden + n_a1 + n_a1 * n_a2);
  }
  void bind(World& w, const std::vector<int>* evals) const {
    w.evals_ = evals;
    w.memo_.assign(memo_size(), -1);
  }

  template <typename Getter>
  int eval_fn(const CFn& f, const std::vector<int>& evals, Getter get) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < f.parents.size(); ++k)
      idx = idx * static_cast<std::size_t>(f.par_support[k]) +
            static_cast<std::size_t>(get(f.parents[k]));
    for (std::size_t k = 0; k < f.errs.size(); ++k)
      idx = idx * static_cast<std::size_t>(f.err_support[k]) +
            static_cast<std::size_t>(evals[static_cast<std::size_t>(f.errs[k])]);
    return (*f.table)[idx];
  }

  template <typename Getter>
  const double* mech_row(const CMech& m, int width, Getter get) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < m.parents.size(); ++k)
      idx = idx * static_cast<std::size_t>(m.par_support[k]) +
            static_cast<std::size_t>(get(m.parents[k]));
    return m.probs->data() + idx * static_cast<std::size_t>(width);
  }

  double enumeration_size() const {
    double p = 1.0;
    for (const auto& g : groups) p *= static_cast<double>(g.probs->size());
    return p;
  }

  void enumerate(const std::function<void(double, const std::vector<int>&)>& fn) const {
    if (enumeration_size() > kMaxEnumeration)
      throw std::runtime_error("scenario '" + spec.name + "': error enumeration needs " +
                               std::to_string(enumeration_size()) +
                               " configurations, above the cap of 1e7");
    std::vector<int> evals(spec.errors.size(), 0);
    std::vector<int> gvals;
    std::function<void(std::size_t, double)> rec = [&](std::size_t gi, double p) {
      if (p == 0.0) return;
      if (gi == groups.size()) {
        fn(p, evals);
        return;
      }
      const ErrorGroup& g = groups[gi];
      for (std::size_t code = 0; code < g.probs->size(); ++code) {
        double q = (*g.probs)[code];
        if (q == 0.0) continue;
        decode_mixed_radix(code, g.dims, &gvals);
        for (std::size_t k = 0; k < g.errs.size(); ++k)
          evals[static_cast<std::size_t>(g.errs[k])] = gvals[k];
        rec(gi + 1, p * q);
      }
    };
    rec(0, 1.0);
  }

  const ScenarioSpec& spec;
  int nv = 0, n_hidden = 0, n_a1 = 0, n_l = 0, n_a2 = 0, n_y = 0;
  std::vector<ErrorGroup> groups;
  std::vector<CFn> fns;  // empty entries for treatments
  CMech mech_a1, mech_a2;
};

// ---------------------------------------------------------------------------
// World: lazy counterfactual evaluation for one error configuration.

int World::hidden_value(int var_index) const {
  // hiddens are computed eagerly the first time any of them is needed
  if (memo_[static_cast<std::size_t>(var_index)] < 0) {
    for (int h = 0; h < eng_->n_hidden; ++h) {
      auto get = [&](int p) { return memo_[static_cast<std::size_t>(p)]; };
      memo_[static_cast<std::size_t>(h)] =
          eng_->eval_fn(eng_->fns[static_cast<std::size_t>(h)], *evals_, get);
    }
  }
  return memo_[static_cast<std::size_t>(var_index)];
}

int World::l_of(int a1) const {
  std::size_t slot = static_cast<std::size_t>(eng_->n_hidden + a1);
  if (memo_[slot] < 0) {
    const ScenarioSpec& s = eng_->spec;
    auto get = [&](int p) -> int {
      if (p < eng_->n_hidden) return hidden_value(p);
      if (p == s.a1_index()) return a1;
      throw std::logic_error("unexpected parent during L evaluation");
    };
    memo_[slot] = eng_->eval_fn(eng_->fns[static_cast<std::size_t>(s.l_index())], *evals_, get);
  }
  return memo_[slot];
}

int World::y_of(int a1, int a2) const {
  std::size_t slot =
      static_cast<std::size_t>(eng_->n_hidden + eng_->n_a1 + a1 * eng_->n_a2 + a2);
  if (memo_[slot] < 0) {
    const ScenarioSpec& s = eng_->spec;
    auto get = [&](int p) -> int {
      if (p < eng_->n_hidden) return hidden_value(p);
      if (p == s.a1_index()) return a1;
      if (p == s.l_index()) return l_of(a1);
      if (p == s.a2_index()) return a2;
      throw std::logic_error("unexpected parent during Y evaluation");
    };
    memo_[slot] = eng_->eval_fn(eng_->fns[static_cast<std::size_t>(s.y_index())], *evals_, get);
  }
  return memo_[slot];
}

int World::y_regime(const Regime& g) const {
  int l = l_of(g.a1);
  return y_of(g.a1, g.a2_for(l));
}

std::vector<double> World::a1_dist() const {
  const auto& m = eng_->mech_a1;
  auto get = [&](int p) { return hidden_value(p); };
  if (m.natural) {
    std::vector<double> out(static_cast<std::size_t>(eng_->n_a1), 0.0);
    out[static_cast<std::size_t>(eng_->eval_fn(*m.natural, *evals_, get))] = 1.0;
    return out;
  }
  const double* row = eng_->mech_row(m, eng_->n_a1, get);
  return std::vector<double>(row, row + eng_->n_a1);
}

std::vector<double> World::a2_dist(int a1) const {
  const ScenarioSpec& s = eng_->spec;
  const auto& m = eng_->mech_a2;
  auto get = [&](int p) -> int {
    if (p == s.a1_index()) return a1;
    if (p == s.l_index()) return l_of(a1);
    throw std::logic_error("unexpected parent during A2 evaluation");
  };
  if (m.natural) {
    std::vector<double> out(static_cast<std::size_t>(eng_->n_a2), 0.0);
    out[static_cast<std::size_t>(eng_->eval_fn(*m.natural, *evals_, get))] = 1.0;
    return out;
  }
  const double* row = eng_->mech_row(m, eng_->n_a2, get);
  return std::vector<double>(row, row + eng_->n_a2);
}

void World::a2_cross_world(const std::vector<int>& worlds,
                           const std::function<void(double, const std::vector<int>&)>& fn) const {
  const auto& m = eng_->mech_a2;
  std::vector<int> s(worlds.size());
  if (m.natural) {
    const ScenarioSpec& sp = eng_->spec;
    for (std::size_t k = 0; k < worlds.size(); ++k) {
      int a1 = worlds[k];
      auto get = [&](int p) -> int {
        if (p == sp.a1_index()) return a1;
        if (p == sp.l_index()) return l_of(a1);
        throw std::logic_error("unexpected parent during A2 evaluation");
      };
      s[k] = eng_->eval_fn(*m.natural, *evals_, get);
    }
    fn(1.0, s);
    return;
  }
  // Shared-uniform inverse-cdf coupling: one U drives every world's draw.
  std::vector<std::vector<double>> cum(worlds.size());
  std::vector<double> breaks{1.0};
  for (std::size_t k = 0; k < worlds.size(); ++k) {
    std::vector<double> dist = a2_dist(worlds[k]);
    cum[k].resize(dist.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < dist.size(); ++j) {
      acc += dist[j];
      cum[k][j] = acc;
      if (j + 1 < dist.size()) breaks.push_back(acc);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  double prev = 0.0;
  for (double b : breaks) {
    if (b - prev > 1e-15) {
      double mid = 0.5 * (prev + b);
      for (std::size_t k = 0; k < worlds.size(); ++k) {
        int v = 0;
        while (mid >= cum[k][static_cast<std::size_t>(v)]) ++v;
        s[k] = v;
      }
      fn(b - prev, s);
    }
    prev = b;
  }
}

// ---------------------------------------------------------------------------

void for_each_world(const ScenarioSpec& spec,
                    const std::function<void(double, const World&)>& fn) {
  ScenarioEngine eng(spec);
  World w = eng.make_world();
  eng.enumerate([&](double p, const std::vector<int>& evals) {
    eng.bind(w, &evals);
    fn(p, w);
  });
}

double enumeration_size(const ScenarioSpec& spec) {
  return ScenarioEngine(spec).enumeration_size();
}

LongitudinalDataset sample(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed) {
  ScenarioEngine eng(spec);
  LongitudinalDataset d;
  d.scenario_id = spec.name;
  d.seed = seed;
  d.a1_levels = eng.n_a1;
  d.l_levels = eng.n_l;
  d.a2_levels = eng.n_a2;
  d.y_levels = eng.n_y;
  d.a1.reserve(n);
  d.l.reserve(n);
  d.a2.reserve(n);
  d.y.reserve(n);
  if (spec.a2_is_censoring) d.cens.reserve(n);

  std::vector<int> evals(spec.errors.size());
  std::vector<int> gvals;
  World w = eng.make_world();
  for (std::size_t i = 0; i < n; ++i) {
    SplitRng rng(seed, i);
    for (const auto& g : eng.groups) {
      std::size_t code = static_cast<std::size_t>(rng.categorical(g.probs->data(),
                                                                  static_cast<int>(g.probs->size())));
      decode_mixed_radix(code, g.dims, &gvals);
      for (std::size_t k = 0; k < g.errs.size(); ++k)
        evals[static_cast<std::size_t>(g.errs[k])] = gvals[k];
    }
    eng.bind(w, &evals);
    std::vector<double> p1 = w.a1_dist();
    int a1 = eng.mech_a1.natural
                 ? static_cast<int>(std::max_element(p1.begin(), p1.end()) - p1.begin())
                 : rng.categorical(p1);
    int l = w.l_of(a1);
    std::vector<double> p2 = w.a2_dist(a1);
    int a2 = eng.mech_a2.natural
                 ? static_cast<int>(std::max_element(p2.begin(), p2.end()) - p2.begin())
                 : rng.categorical(p2);
    int y = w.y_of(a1, a2);
    if (spec.a2_is_censoring) {
      bool censored = a2 != 0;
      d.push(a1, l, a2, censored ? -1 : y);
      d.cens.push_back(censored ? 1 : 0);
    } else {
      d.push(a1, l, a2, y);
    }
  }
  return d;
}

CellCounts population_table(const ScenarioSpec& spec) {
  ScenarioEngine eng(spec);
  CellCounts out;
  out.init(eng.n_a1, eng.n_l, eng.n_a2, eng.n_y);
  if (spec.a2_is_censoring)
    out.wcens.assign(static_cast<std::size_t>(eng.n_a1) * eng.n_l, 0.0);
  for_each_world(spec, [&](double p, const World& w) {
    std::vector<double> p1 = w.a1_dist();
    for (int a1 = 0; a1 < eng.n_a1; ++a1) {
      if (p1[static_cast<std::size_t>(a1)] == 0.0) continue;
      int l = w.l_of(a1);
      std::vector<double> p2 = w.a2_dist(a1);
      for (int a2 = 0; a2 < eng.n_a2; ++a2) {
        double q = p * p1[static_cast<std::size_t>(a1)] * p2[static_cast<std::size_t>(a2)];
        if (q == 0.0) continue;
        if (spec.a2_is_censoring && a2 != 0) {
          out.wcens[static_cast<std::size_t>(a1) * eng.n_l + static_cast<std::size_t>(l)] += q;
        } else {
          out.at(a1, l, a2, w.y_of(a1, a2)) += q;
        }
      }
    }
  });
  out.total = 1.0;
  return out;
}

std::vector<double> oracle_outcome_law(const ScenarioSpec& spec, const Regime& g) {
  ScenarioEngine eng(spec);
  if (g.a1 < 0 || g.a1 >= eng.n_a1) fail("regime assigns a1 outside its support");
  for (int v : g.a2_by_l)
    if (v < 0 || v >= eng.n_a2) fail("regime assigns a2 outside its support");
  if (!g.is_static() && g.a2_by_l.size() != static_cast<std::size_t>(eng.n_l))
    fail("dynamic regime must map every l value (got " + std::to_string(g.a2_by_l.size()) +
         " entries for " + std::to_string(eng.n_l) + " levels)");
  std::vector<double> law(static_cast<std::size_t>(eng.n_y), 0.0);
  for_each_world(spec, [&](double p, const World& w) {
    law[static_cast<std::size_t>(w.y_regime(g))] += p;
  });
  return law;
}

double oracle_mean(const ScenarioSpec& spec, const Regime& g) {
  std::vector<double> law = oracle_outcome_law(spec, g);
  double m = 0.0;
  for (std::size_t y = 0; y < law.size(); ++y) m += static_cast<double>(y) * law[y];
  return m;
}

std::vector<Regime> all_regimes(const ScenarioSpec& spec) {
  int n_a1 = spec.a1_var().support, n_l = spec.l_var().support,
      n_a2 = spec.a2_var().support;
  std::vector<Regime> out;
  for (int a1 = 0; a1 < n_a1; ++a1)
    for (int a2 = 0; a2 < n_a2; ++a2) out.push_back(Regime::fixed(a1, a2));
  if (n_l < 2) return out;
  double maps = std::pow(static_cast<double>(n_a2), n_l);
  if (maps > 4096)
    throw std::runtime_error("regime family too large to enumerate (" + std::to_string(maps) +
                             " maps)");
  std::vector<int> map(static_cast<std::size_t>(n_l), 0);
  for (;;) {
    bool constant = true;
    for (int v : map)
      if (v != map[0]) constant = false;
    if (!constant)
      for (int a1 = 0; a1 < n_a1; ++a1) out.push_back(Regime::dynamic(a1, map));
    int j = n_l - 1;
    while (j >= 0 && map[static_cast<std::size_t>(j)] == n_a2 - 1) {
      map[static_cast<std::size_t>(j)] = 0;
      --j;
    }
    if (j < 0) break;
    ++map[static_cast<std::size_t>(j)];
  }
  return out;
}

bool regime_randomization_holds(const ScenarioSpec& spec, const Regime& g, double tol,
                                double* max_dev) {
  ScenarioEngine eng(spec);
  int NY = eng.n_y, NA1 = eng.n_a1, NL = eng.n_l, NA2 = eng.n_a2;
  std::vector<double> joint(static_cast<std::size_t>(NY) * NA1 * NL * NA2, 0.0);
  auto at = [&](int yg, int a1, int l, int a2) -> double& {
    return joint[static_cast<std::size_t>(((yg * NA1 + a1) * NL + l) * NA2 + a2)];
  };
  for_each_world(spec, [&](double p, const World& w) {
    int yg = w.y_regime(g);
    std::vector<double> p1 = w.a1_dist();
    for (int a1 = 0; a1 < NA1; ++a1) {
      if (p1[static_cast<std::size_t>(a1)] == 0.0) continue;
      int l = w.l_of(a1);
      std::vector<double> p2 = w.a2_dist(a1);
      for (int a2 = 0; a2 < NA2; ++a2)
        at(yg, a1, l, a2) += p * p1[static_cast<std::size_t>(a1)] *
                             p2[static_cast<std::size_t>(a2)];
    }
  });
  double worst = 0.0;
  // Y(g) independent of A1
  for (int yg = 0; yg < NY; ++yg)
    for (int a1 = 0; a1 < NA1; ++a1) {
      double pya = 0, py = 0, pa = 0;
      for (int l = 0; l < NL; ++l)
        for (int a2 = 0; a2 < NA2; ++a2) {
          pya += at(yg, a1, l, a2);
          for (int a1b = 0; a1b < NA1; ++a1b) py += at(yg, a1b, l, a2);
          for (int ygb = 0; ygb < NY; ++ygb) pa += at(ygb, a1, l, a2);
        }
      worst = std::max(worst, std::fabs(pya - py * pa));
    }
  // Y(g) independent of A2 given L within the regime-consistent stratum
  // A1 = g.a1; other a1 strata never feed the g-formula for this regime.
  {
    int a1 = g.a1;
    for (int l = 0; l < NL; ++l) {
      double pstr = 0;
      for (int yg = 0; yg < NY; ++yg)
        for (int a2 = 0; a2 < NA2; ++a2) pstr += at(yg, a1, l, a2);
      if (pstr < tol) continue;
      for (int yg = 0; yg < NY; ++yg)
        for (int a2 = 0; a2 < NA2; ++a2) {
          double pya = at(yg, a1, l, a2) / pstr;
          double py = 0, pa = 0;
          for (int a2b = 0; a2b < NA2; ++a2b) py += at(yg, a1, l, a2b);
          for (int ygb = 0; ygb < NY; ++ygb) pa += at(ygb, a1, l, a2);
          worst = std::max(worst, std::fabs(pya - (py / pstr) * (pa / pstr)));
        }
    }
  }
  if (max_dev) *max_dev = worst;
  return worst <= tol;
}

bool sharp_null_holds(const ScenarioSpec& spec) {
  const int na1 = spec.a1_var().support;
  const int na2 = spec.a2_var().support;
  bool sharp = true;
  for_each_world(spec, [&](double p, const World& w) {
    if (p <= 0.0 || !sharp) return;
    int base = w.y_of(0, 0);
    for (int a1 = 0; a1 < na1 && sharp; ++a1)
      for (int a2 = 0; a2 < na2; ++a2)
        if (w.y_of(a1, a2) != base) {
          sharp = false;
          break;
        }
  });
  return sharp;
}

CausalDag scenario_dag(const ScenarioSpec& spec) {
  CausalDag g;
  for (const auto& v : spec.variables) g.add_vertex(v.name, v.role == Role::hidden);
  for (const auto& [name, fn] : spec.functions)
    for (const auto& pn : fn.parents) g.add_edge(pn, name);
  for (const auto& [name, t] : spec.treatments)
    for (const auto& pn : t.parents) g.add_edge(pn, name);
  return g;
}

// ---------------------------------------------------------------------------
// Counterfactual bundle law.

std::size_t CounterfactualTable::index(const std::vector<int>& l, const std::vector<int>& s,
                                       const std::vector<int>& y) const {
  std::size_t idx = 0;
  for (int a1 = 0; a1 < n_a1; ++a1)
    idx = idx * static_cast<std::size_t>(n_l) + static_cast<std::size_t>(l[static_cast<std::size_t>(a1)]);
  for (int a1 = 0; a1 < n_a1; ++a1)
    idx = idx * static_cast<std::size_t>(n_a2) + static_cast<std::size_t>(s[static_cast<std::size_t>(a1)]);
  for (int k = 0; k < n_a1 * n_a2; ++k)
    idx = idx * static_cast<std::size_t>(n_y) + static_cast<std::size_t>(y[static_cast<std::size_t>(k)]);
  return idx;
}

void CounterfactualTable::for_each(
    const std::function<void(double, const std::vector<int>&, const std::vector<int>&,
                             const std::vector<int>&)>& fn) const {
  std::vector<int> l(static_cast<std::size_t>(n_a1)), s(static_cast<std::size_t>(n_a1)),
      y(static_cast<std::size_t>(n_a1 * n_a2));
  for (std::size_t idx = 0; idx < p.size(); ++idx) {
    if (p[idx] == 0.0) continue;
    std::size_t rem = idx;
    for (int k = n_a1 * n_a2; k-- > 0;) {
      y[static_cast<std::size_t>(k)] = static_cast<int>(rem % static_cast<std::size_t>(n_y));
      rem /= static_cast<std::size_t>(n_y);
    }
    for (int a1 = n_a1; a1-- > 0;) {
      s[static_cast<std::size_t>(a1)] = static_cast<int>(rem % static_cast<std::size_t>(n_a2));
      rem /= static_cast<std::size_t>(n_a2);
    }
    for (int a1 = n_a1; a1-- > 0;) {
      l[static_cast<std::size_t>(a1)] = static_cast<int>(rem % static_cast<std::size_t>(n_l));
      rem /= static_cast<std::size_t>(n_l);
    }
    fn(p[idx], l, s, y);
  }
}

CounterfactualTable oracle_counterfactual_table(const ScenarioSpec& spec) {
  ScenarioEngine eng(spec);
  CounterfactualTable t;
  t.n_a1 = eng.n_a1;
  t.n_l = eng.n_l;
  t.n_a2 = eng.n_a2;
  t.n_y = eng.n_y;
  std::vector<int> dims;
  for (int k = 0; k < t.n_a1; ++k) dims.push_back(t.n_l);
  for (int k = 0; k < t.n_a1; ++k) dims.push_back(t.n_a2);
  for (int k = 0; k < t.n_a1 * t.n_a2; ++k) dims.push_back(t.n_y);
  double size = checked_product(dims, "counterfactual bundle for '" + spec.name + "'");
  t.p.assign(static_cast<std::size_t>(size), 0.0);

  std::vector<int> worlds;
  for (int a1 = 0; a1 < t.n_a1; ++a1) worlds.push_back(a1);
  std::vector<int> l(static_cast<std::size_t>(t.n_a1)),
      y(static_cast<std::size_t>(t.n_a1 * t.n_a2));
  for_each_world(spec, [&](double p, const World& w) {
    for (int a1 = 0; a1 < t.n_a1; ++a1) {
      l[static_cast<std::size_t>(a1)] = w.l_of(a1);
      for (int a2 = 0; a2 < t.n_a2; ++a2)
        y[static_cast<std::size_t>(a1 * t.n_a2 + a2)] = w.y_of(a1, a2);
    }
    w.a2_cross_world(worlds, [&](double q, const std::vector<int>& s) {
      t.p[t.index(l, s, y)] += p * q;
    });
  });
  return t;
}

// ---------------------------------------------------------------------------
// JSON serialization.

using nlohmann::json;

std::string ScenarioSpec::to_json_string() const {
  json j;
  j["name"] = name;
  json vars = json::array();
  json supports = json::object();
  for (const auto& v : variables) {
    vars.push_back({{"name", v.name}, {"role", role_name(v.role)}});
    supports[v.name] = v.support;
  }
  j["variables"] = vars;
  j["supports"] = supports;
  // array, not object: declaration order fixes the sampling stream layout
  json errs = json::array();
  for (const auto& e : errors) errs.push_back({{"name", e.name}, {"probs", e.probs}});
  j["errors"] = errs;
  json fns = json::object();
  for (const auto& [n, f] : functions)
    fns[n] = {{"parents", f.parents}, {"errors", f.errors}, {"table", f.table}};
  j["functions"] = fns;
  json trts = json::object();
  for (const auto& [n, t] : treatments) {
    json jt = {{"parents", t.parents}, {"probs", t.probs}};
    if (t.natural)
      jt["natural"] = {{"parents", t.natural->parents},
                       {"errors", t.natural->errors},
                       {"table", t.natural->table}};
    trts[n] = jt;
  }
  j["treatment_tables"] = trts;
  if (!couplings.empty()) {
    json cps = json::array();
    for (const auto& c : couplings) cps.push_back({{"errors", c.errors}, {"joint", c.joint}});
    j["couplings"] = cps;
  }
  if (a2_is_censoring) j["censoring"] = true;
  return j.dump(2) + "\n";
}

ScenarioSpec ScenarioSpec::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("scenario json: ") + e.what());
  }
  for (const auto& [key, val] : j.items()) {
    (void)val;
    static const std::set<std::string> known{"name",      "variables",        "supports",
                                             "errors",    "functions",        "treatment_tables",
                                             "couplings", "censoring"};
    if (!known.count(key)) fail("scenario json: unknown key '" + key + "'");
  }
  ScenarioSpec s;
  s.name = j.value("name", "");
  if (!j.contains("variables") || !j.contains("supports") || !j.contains("errors") ||
      !j.contains("functions") || !j.contains("treatment_tables"))
    fail("scenario json: required keys are variables, supports, errors, functions, "
         "treatment_tables");
  for (const auto& jv : j.at("variables")) {
    Variable v;
    v.name = jv.at("name").get<std::string>();
    v.role = role_from_name(jv.at("role").get<std::string>());
    v.support = j.at("supports").value(v.name, 0);
    if (v.support <= 0) fail("scenario json: missing or bad support for '" + v.name + "'");
    s.variables.push_back(v);
  }
  for (const auto& je : j.at("errors"))
    s.errors.push_back({je.at("name").get<std::string>(),
                        je.at("probs").get<std::vector<double>>()});
  auto read_fn = [](const json& jf) {
    StructuralFn f;
    f.parents = jf.at("parents").get<std::vector<std::string>>();
    f.errors = jf.at("errors").get<std::vector<std::string>>();
    f.table = jf.at("table").get<std::vector<int>>();
    return f;
  };
  for (const auto& [n, jf] : j.at("functions").items()) s.functions[n] = read_fn(jf);
  for (const auto& [n, jt] : j.at("treatment_tables").items()) {
    TreatmentTable t;
    t.parents = jt.at("parents").get<std::vector<std::string>>();
    t.probs = jt.at("probs").get<std::vector<double>>();
    if (jt.contains("natural")) t.natural = read_fn(jt.at("natural"));
    s.treatments[n] = t;
  }
  if (j.contains("couplings"))
    for (const auto& jc : j.at("couplings"))
      s.couplings.push_back({jc.at("errors").get<std::vector<std::string>>(),
                             jc.at("joint").get<std::vector<double>>()});
  s.a2_is_censoring = j.value("censoring", false);
  s.validate();
  return s;
}

ScenarioSpec ScenarioSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

void ScenarioSpec::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << to_json_string();
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gmethods
