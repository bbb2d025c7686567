#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gmethods/dataset.hpp"
#include "gmethods/g_formula.hpp"
#include "gmethods/scenario.hpp"

namespace gmethods {

enum class Assumptions { ffrcistg, npsem_ie };

// One direct-effect functional. `identified_from_data` is hard-wired false
// for the cross-world quantities (PSDE always, PDE without the independent-
// errors assumption): those values come from enumeration only and no
// experiment could check them.
struct DirectEffectReport {
  std::string kind;
  double value = 0.0;
  double se = 0.0;  // bootstrap, when requested; 0 otherwise
  bool identified_from_data = false;
  Assumptions assumptions = Assumptions::ffrcistg;
  bool defined = true;         // false when a principal stratum is empty
  double stratum_mass = -1.0;  // PSDE only
};

// Controlled direct effect at fixed a2: g-formula contrast of the static
// regimes (1, a2) and (0, a2). Optional bootstrap over cell redraws.
DirectEffectReport cde(const CellCounts& cells, int a2,
                       const NuisanceSpec& nuis = NuisanceSpec::Saturated(), int n_bootstrap = 0,
                       std::uint64_t seed = 0);
DirectEffectReport cde(const LongitudinalDataset& data, int a2,
                       const NuisanceSpec& nuis = NuisanceSpec::Saturated(), int n_bootstrap = 0,
                       std::uint64_t seed = 0);
DirectEffectReport cde_oracle(const ScenarioSpec& spec, int a2);

// Principal-stratum direct effect between arms a_from and a_to, by exact
// enumeration. With a2 given, the stratum is {A2(a_from)=A2(a_to)=a2};
// without, it is {A2(a_from)=A2(a_to)} and the effect compares the natural
// outcomes. An empty stratum yields defined=false, not an exception.
DirectEffectReport psde_oracle(const ScenarioSpec& spec, int a_from, int a_to,
                               std::optional<int> a2 = std::nullopt);

// Mediation formula: PDE under independent errors plus the total-effect
// decomposition TIE = total - PDE. Requires the two-variable world (single
// covariate stratum); both treatments assumed unconfounded.
struct MediationReport {
  DirectEffectReport pde;
  DirectEffectReport tie;
  double total = 0.0;
  double total_se = 0.0;
};
MediationReport pde_mediation(const CellCounts& cells, int n_bootstrap = 0,
                              std::uint64_t seed = 0);
MediationReport pde_mediation(const LongitudinalDataset& data, int n_bootstrap = 0,
                              std::uint64_t seed = 0);

// Cross-world PDE / TIE of the spec's own coupling, by enumeration.
DirectEffectReport pde_oracle(const ScenarioSpec& spec);
DirectEffectReport tie_oracle(const ScenarioSpec& spec);

// Sharp bounds on the PDE over every coupling that agrees with the spec's
// single-world joints (one joint per intervention world (a1, a2), over that
// world's covariate, natural mediator and outcome). Solved as a pair of
// linear programs over the finite coupling simplex; small problems are
// re-solved in exact rational arithmetic.
struct PdeBounds {
  double lower = 0.0;
  double upper = 0.0;
  bool exact = false;  // rational simplex confirmed the vertices
  int n_atoms = 0;
  int n_constraints = 0;
};
PdeBounds pde_bounds(const ScenarioSpec& spec);

// Pointwise probability-of-causation bounds from the two densities at the
// observed outcome value.
struct CausationBounds {
  double lower = 0.0;
  double upper = 1.0;
  double f1 = 0.0;
  double f0 = 0.0;
};
CausationBounds causation_bounds(double f1_t, double f0_t);

}  // namespace gmethods
