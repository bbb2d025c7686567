#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gmethods/causal_graph.hpp"
#include "gmethods/dataset.hpp"

namespace gmethods {

// Discrete structural scenarios over the two-time-point variable order
// (H..., A1, L, A2, Y). Non-treatment variables are deterministic functions of
// earlier variables and named exogenous errors with finite supports, so every
// counterfactual quantity can be computed exactly by enumerating error
// configurations. Treatments are given by conditional probability tables; the
// natural (uninterveneed-upon) value of a treatment is realized either by an
// optional structural function over named errors, or implicitly by a single
// uniform draw shared across worlds (inverse-cdf coupling), which leaves all
// single-world laws untouched and pins down cross-world joints canonically.
//
// Cross-world dependence beyond that default is declared through `couplings`:
// joint distributions over groups of error variables replacing the default
// independent product. Two scenarios can share every single-world law yet
// disagree on cross-world contrasts; that distinction is exactly what the
// oracles here are for.

enum class Role { hidden, treatment, covariate, outcome };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

struct Variable {
  std::string name;
  Role role = Role::hidden;
  int support = 2;
};

struct ErrorVar {
  std::string name;
  std::vector<double> probs;
  int support() const { return static_cast<int>(probs.size()); }
};

// Deterministic value table. Index layout is row-major with parent values
// first (slowest) and error values last (fastest), each in declaration order.
struct StructuralFn {
  std::vector<std::string> parents;
  std::vector<std::string> errors;
  std::vector<int> table;
};

struct TreatmentTable {
  std::vector<std::string> parents;
  std::vector<double> probs;  // row-major: parent config x value
  // Optional natural-value mechanism; must induce `probs` exactly. Errors
  // referenced here may participate in couplings, which is the only way the
  // natural value of a treatment can covary with outcome errors across worlds.
  std::optional<StructuralFn> natural;
};

struct Coupling {
  std::vector<std::string> errors;
  std::vector<double> joint;  // row-major over member supports, in order
};

// Static regimes assign a constant a2; dynamic regimes map the observed l to
// a2. a1 is always a constant.
struct Regime {
  int a1 = 0;
  std::vector<int> a2_by_l;  // size 1: static; size n_l: dynamic

  static Regime fixed(int a1, int a2) { return Regime{a1, {a2}}; }
  static Regime dynamic(int a1, std::vector<int> map) { return Regime{a1, std::move(map)}; }

  bool is_static() const { return a2_by_l.size() == 1; }
  int a2_for(int l) const {
    return a2_by_l[is_static() ? 0 : static_cast<std::size_t>(l)];
  }
  std::string label() const;
};

struct ScenarioSpec {
  std::string name;
  std::vector<Variable> variables;  // hiddens..., A1, L, A2, Y (order enforced)
  std::vector<ErrorVar> errors;
  std::vector<Coupling> couplings;
  std::map<std::string, StructuralFn> functions;      // non-treatment variables
  std::map<std::string, TreatmentTable> treatments;   // the two treatment variables
  bool a2_is_censoring = false;  // second treatment records loss to follow-up

  // Designated positions, fixed by the enforced ordering.
  int a1_index() const;
  int l_index() const;
  int a2_index() const;
  int y_index() const;
  const Variable& a1_var() const { return variables[static_cast<std::size_t>(a1_index())]; }
  const Variable& l_var() const { return variables[static_cast<std::size_t>(l_index())]; }
  const Variable& a2_var() const { return variables[static_cast<std::size_t>(a2_index())]; }
  const Variable& y_var() const { return variables[static_cast<std::size_t>(y_index())]; }

  int var_index(const std::string& name) const;    // -1 when absent
  int error_index(const std::string& name) const;  // -1 when absent

  // Structural validation; throws std::invalid_argument with a description of
  // the first problem found (bad ordering, missing tables, probabilities that
  // do not sum to one, couplings that contradict declared margins, natural
  // mechanisms that do not induce their probability table, ...).
  void validate() const;

  std::string to_json_string() const;
  static ScenarioSpec from_json_string(const std::string& text);
  static ScenarioSpec load(const std::string& path);
  void save(const std::string& path) const;
};

// Convenience builder: fills a StructuralFn table by evaluating `fn` on every
// (parent values, error values) combination. Supports are resolved from the
// spec, so variables and errors must already be declared.
StructuralFn build_fn(const ScenarioSpec& spec, std::vector<std::string> parents,
                      std::vector<std::string> errors,
                      const std::function<int(const std::vector<int>&, const std::vector<int>&)>& fn);

class ScenarioEngine;

// One error configuration during enumeration; evaluates counterfactuals by
// recursive substitution with memoization.
class World {
 public:
  int l_of(int a1) const;
  int y_of(int a1, int a2) const;
  int y_regime(const Regime& g) const;
  int hidden_value(int var_index) const;

  // P(A1 = a1 | hidden configuration); a point mass when A1 has a natural fn.
  std::vector<double> a1_dist() const;
  // P(A2 = a2 | A1 = a1, L = l_of(a1)); point mass under a natural fn.
  std::vector<double> a2_dist(int a1) const;
  // Joint law of the natural values (A2(a1) : a1 in worlds) for this error
  // configuration: deterministic under a natural fn, otherwise the shared-
  // uniform inverse-cdf coupling across the listed worlds.
  void a2_cross_world(const std::vector<int>& worlds,
                      const std::function<void(double, const std::vector<int>&)>& fn) const;

 private:
  friend class ScenarioEngine;
  World() = default;
  const ScenarioEngine* eng_ = nullptr;
  const std::vector<int>* evals_ = nullptr;  // current error configuration
  mutable std::vector<int> memo_;            // -1 = unset
  mutable std::vector<int> scratch_;
};

// Enumerates all error configurations; fn(probability, world). Throws when
// the configuration count exceeds the enumeration cap (10^7).
void for_each_world(const ScenarioSpec& spec,
                    const std::function<void(double, const World&)>& fn);

// Number of error configurations the enumeration visits.
double enumeration_size(const ScenarioSpec& spec);

LongitudinalDataset sample(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed);

// Exact observed-data law as probability-weighted cells (hiddens summed out;
// censored mass in wcens when the scenario censors).
CellCounts population_table(const ScenarioSpec& spec);

// Exact law and mean of Y(g) with integer codes as numeric values.
std::vector<double> oracle_outcome_law(const ScenarioSpec& spec, const Regime& g);
double oracle_mean(const ScenarioSpec& spec, const Regime& g);

// The regime family: all static assignments plus all dynamic maps l -> a2.
std::vector<Regime> all_regimes(const ScenarioSpec& spec);

// Exact check, by enumeration of the joint law of (Y(g), A1, L, A2), that the
// regime is randomized with respect to Y: Y(g) independent of A1, and Y(g)
// independent of A2 given L within the stratum A1 = g.a1. These are the
// conditions under which the g-formula identifies the law of Y(g).
bool regime_randomization_holds(const ScenarioSpec& spec, const Regime& g,
                                double tol = 1e-12, double* max_dev = nullptr);

// True when treatment is sharply null: Y(a1,a2) takes one value per world,
// the same across every (a1,a2), on all positive-probability worlds.
bool sharp_null_holds(const ScenarioSpec& spec);

CausalDag scenario_dag(const ScenarioSpec& spec);

// Exact joint law of the counterfactual bundle
//   (L(a1) : a1), (A2(a1) : a1), (Y(a1,a2) : a1,a2)
// under the scenario's declared cross-world structure.
struct CounterfactualTable {
  int n_a1 = 2, n_l = 2, n_a2 = 2, n_y = 2;
  std::vector<double> p;  // flat, layout below

  // Flat index layout, slowest to fastest: l[0..n_a1), s[0..n_a1),
  // y[0..n_a1*n_a2) with y[a1 * n_a2 + a2] = Y(a1,a2).
  std::size_t index(const std::vector<int>& l, const std::vector<int>& s,
                    const std::vector<int>& y) const;
  void for_each(const std::function<void(double, const std::vector<int>& l,
                                         const std::vector<int>& s,
                                         const std::vector<int>& y)>& fn) const;
};

CounterfactualTable oracle_counterfactual_table(const ScenarioSpec& spec);

// Named, fully parameterized example scenarios (see builtin_scenarios.cpp).
std::vector<std::string> builtin_scenario_names();
ScenarioSpec builtin_scenario(const std::string& name);

// Randomly parameterized sequentially randomized scenario (binary H, L; A1
// unconditionally randomized, A2 randomized within (A1, L) with probabilities
// in [0.15, 0.85]). Deterministic in the seed.
ScenarioSpec random_sequential_scenario(std::uint64_t seed);

// Continuous-covariate missing-data scenario: X uniform on (0,1)^d, A2 a
// known-probability observation indicator, Y Bernoulli. Both P(A2=1|x) and
// E[Y|x] move with the parity of the orthant of x, so no additive function
// of the coordinates tracks either one.
struct RitovSpec {
  int d = 5;
  double base = 0.5;  // E[Y]
  double amp = 0.4;   // E[Y|x] = base + amp * parity(x)
  double tilt = 0.3;  // P(A2=1|x) = 1/2 + tilt * parity(x)

  double parity(const double* x) const;  // product of sign(x_j - 1/2)
  double pi(const double* x) const { return 0.5 + tilt * parity(x); }
  double outcome_mean(const double* x) const { return base + amp * parity(x); }
  double oracle_mean() const { return base; }
  void validate() const;
};

RitovSpec ritov_spec();
ContinuousDataset sample_ritov(const RitovSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace gmethods
