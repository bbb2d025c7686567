#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmethods {

// Two-time-point longitudinal records (a1, l, a2, y), integer-coded.
// When a scenario treats the second "treatment" as loss to follow-up, the
// censor flag is present and censored records carry y == -1 (unobserved).
struct LongitudinalDataset {
  std::string scenario_id;
  std::uint64_t seed = 0;

  std::vector<std::int8_t> a1, l, a2, y;
  std::vector<std::uint8_t> cens;  // empty when the scenario has no censoring

  int a1_levels = 2, l_levels = 2, a2_levels = 2, y_levels = 2;

  std::size_t size() const { return a1.size(); }
  bool has_censoring() const { return !cens.empty(); }

  void push(int v_a1, int v_l, int v_a2, int v_y) {
    a1.push_back(static_cast<std::int8_t>(v_a1));
    l.push_back(static_cast<std::int8_t>(v_l));
    a2.push_back(static_cast<std::int8_t>(v_a2));
    y.push_back(static_cast<std::int8_t>(v_y));
  }

  // Throws std::runtime_error on out-of-support codes or censor mismatches.
  void validate() const;

  static LongitudinalDataset read_csv(const std::string& path);
  void write_csv(const std::string& path) const;
};

// Weighted contingency cells over (a1, l, a2, y). Both finite samples
// (weights = counts) and exact population laws (weights = probabilities)
// collapse to this form, so estimating equations can be evaluated on a few
// dozen cells instead of n records.
struct CellCounts {
  int A1 = 2, L = 2, A2 = 2, Y = 2;
  std::vector<double> w;      // flat over ((a1*L + l)*A2 + a2)*Y + y
  std::vector<double> wcens;  // flat over a1*L + l; censored mass, y unknown
  double total = 0.0;

  double& at(int a1, int l, int a2, int y) {
    return w[static_cast<std::size_t>(((a1 * L + l) * A2 + a2) * Y + y)];
  }
  double at(int a1, int l, int a2, int y) const {
    return w[static_cast<std::size_t>(((a1 * L + l) * A2 + a2) * Y + y)];
  }

  void init(int n_a1, int n_l, int n_a2, int n_y) {
    A1 = n_a1;
    L = n_l;
    A2 = n_a2;
    Y = n_y;
    w.assign(static_cast<std::size_t>(A1) * L * A2 * Y, 0.0);
    wcens.clear();
    total = 0.0;
  }

  static CellCounts from(const LongitudinalDataset& data);
};

// Records with a d-dimensional covariate in (0,1)^d; used by the known-design
// estimators where the covariate law is continuous.
struct ContinuousDataset {
  std::string scenario_id;
  std::uint64_t seed = 0;

  int d = 1;
  std::vector<double> x;  // row-major, size() * d
  std::vector<std::uint8_t> a2;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  const double* row(std::size_t i) const { return x.data() + i * d; }

  void validate() const;

  static ContinuousDataset read_csv(const std::string& path);
  void write_csv(const std::string& path) const;
};

}  // namespace gmethods
