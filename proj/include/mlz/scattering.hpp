#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mlz/evolution.hpp"
#include "mlz/family.hpp"
#include "mlz/models.hpp"
#include "mlz/operators.hpp"

namespace mlz {

// Transition-probability matrix between incoming and outgoing diabatic
// states: entries(n, m) = P(m -> n) = |S_nm|^2. Construction validates that
// entries lie in [0, 1] within 1e-9 and that the matrix is doubly stochastic
// within 1e-6 (the underlying scattering matrix is unitary).
class TransitionMatrix {
  public:
    TransitionMatrix(RealMatrix entries, std::vector<std::string> labels,
                     std::string regime_tag = "");

    int dim() const { return static_cast<int>(entries_.rows()); }
    const RealMatrix& entries() const { return entries_; }
    double operator()(int to, int from) const { return entries_(to, from); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::string& regime_tag() const { return regime_; }
    // Largest deviation of any row or column sum from 1.
    double stochastic_defect() const;

  private:
    RealMatrix entries_;
    std::vector<std::string> labels_;
    std::string regime_;
};

// Largest entrywise difference; requires matching dimensions.
double max_entry_difference(const TransitionMatrix& a, const TransitionMatrix& b);

// Survival probability of a linear two-level crossing:
// exp(-2 pi coupling^2 / slope_diff), with slope_diff the difference of the
// two diabatic level slopes (must be positive).
double lz_probability(double coupling, double slope_diff);

// Sweep-velocity regimes of the four-state model, set by v against the two
// diabatic slope differences b1 - b2 and b1 + b2.
enum class FourStateRegime {
    Slow,   // v < b1 - b2: every crossing sits on the time leg
    Mixed,  // b1 - b2 < v < b1 + b2: the slow pair moves to the offset leg
    Fast,   // v > b1 + b2: every crossing sits on the offset leg
};

std::string to_string(FourStateRegime regime);

// Classifies the sweep; v exactly on a boundary is non-generic and rejected.
FourStateRegime four_state_regime(const FourStateParams& p);

// Closed-form transition matrix of the four-state model, assembled from the
// two pairwise survival probabilities p1 = lz(g, b1-b2), p2 = lz(gamma,
// b1+b2). The slow-regime result is independent of v.
TransitionMatrix four_state_closed_form(const FourStateParams& p);

// One pairwise Landau-Zener crossing encountered along a scattering path.
// The pair is stored higher-slope member first: the embedded 2x2 block is
//   S[i][i] = S[j][j] = sqrt(p),
//   S[i][j] = sign * i * sqrt(1-p) * e^{+i phase},
//   S[j][i] = sign * i * sqrt(1-p) * e^{-i phase},
// with i the member whose diabatic level has the larger slope at the
// crossing.
struct CrossingEvent {
    double location = 0.0;  // path coordinate; events are strictly ordered
    int i = 0;              // higher-slope member of the pair
    int j = 0;              // lower-slope member
    double p = 1.0;         // survival probability in (0, 1]
    double phase = 0.0;     // LZ phase on the off-diagonal amplitudes
    int sign = 1;           // +-1 orientation of the coupling
    int generator_slot = 0; // which family slot drives the crossing
};

// The unitary 2x2 block of one crossing embedded in a dim x dim identity.
Matrix embedded_crossing_block(int dim, const CrossingEvent& event);

enum class PhasePolicy { Keep, Drop };

// Ordered chain of pairwise crossings with the diagonal adiabatic phases
// accumulated between them. gap_phases[k] is applied before event k (and
// gap_phases[events.size()] after the last event); an empty vector means no
// adiabatic phases.
struct ChainScatteringPlan {
    int dim = 0;
    std::vector<CrossingEvent> events;
    PhasePolicy policy = PhasePolicy::Keep;
    std::vector<RealVector> gap_phases;
    std::string regime_tag;
};

// Ordered product of embedded 2x2 blocks (later events multiply from the
// left), interleaved with the diagonal phase factors when the policy keeps
// them. Returns the complex scattering matrix and P = |S|^2.
std::pair<Matrix, TransitionMatrix> chain_scatter(const ChainScatteringPlan& plan);

// Crossing sequence of the four-state model on the large rectangle: offset
// leg at t = -R from e0 - vR to e0 + vR, then time leg at e = e0 + vR from
// -R to R. Locations use the two-segment path coordinate (offset leg [0,1],
// time leg [1,2]); every crossing must land strictly inside a leg, which for
// valid regimes holds once R is large enough against e0. Gap phases are the
// exact integrals of the governing generator's diabatic energies.
ChainScatteringPlan four_state_event_sequence(const FourStateParams& p, double horizon);

// Replaces the plan's LZ and adiabatic phases with a random assignment drawn
// from the class the cancellation argument covers: one random phase per
// coupling type, and gap phases integrated from random linear level
// structures with the model's reflection symmetry. Only valid for plans
// produced by four_state_event_sequence.
void four_state_randomize_phases(ChainScatteringPlan& plan, unsigned seed);

// --- direct numerical scattering ---------------------------------------

// Produces the scattering path for a given horizon; numeric runs compare a
// horizon against twice the horizon to estimate the finite-R error.
using PathBuilder = std::function<ParamPath(double horizon)>;

// Straight sweep with slot `slot` running from -horizon to +horizon and the
// remaining coordinates pinned at `base`.
PathBuilder time_sweep_builder(const ParamPoint& base, int slot = 0);

// Four-state straight sweep (t, v t + e0) and its deformed counterpart along
// the rectangle's two legs, with matched endpoints.
PathBuilder four_state_sweep_builder(const FourStateParams& p);
PathBuilder four_state_rectangle_builder(const FourStateParams& p);

struct ScatterOptions {
    EvolveOptions evolve;
    // Compare each pair's endpoint diabatic gap against its coupling:
    // |H_nn - H_mm| > gap_factor * |H_nm|. Violations warn, or fail in
    // strict mode.
    double gap_factor = 20.0;
    bool strict = false;
    // Two diabatic overlaps within this of each other make the eigenstate
    // labeling ambiguous.
    double ambiguity_threshold = 0.1;
    // Rerun at twice the horizon and report the entrywise drift.
    bool check_drift = true;
    std::string regime_tag;
};

struct ScatterResult {
    TransitionMatrix matrix;
    double r_drift = -1.0;  // max entry |P(R) - P(2R)|; -1 when not computed
    double unitarity_defect = 0.0;
    long long steps_taken = 0;
    bool endpoint_gap_warning = false;
    std::string warning;
};

// Propagates the full basis along the path, projects onto the instantaneous
// eigenbasis of the physical Hamiltonian (family slot 0) at both endpoints,
// labels eigenstates by maximal overlap with the diabatic basis vectors, and
// reads off P(m -> n). The endpoints must be asymptotic: each coupled pair's
// diabatic gap must dominate its coupling (see ScatterOptions).
ScatterResult numeric_transition_matrix(const HamiltonianFamily& family,
                                        const PathBuilder& path_for_horizon, double horizon,
                                        const ScatterOptions& opts = {});

// Route between two parameter points for the path-deformation comparison.
enum class WaypointPolicy {
    Straight,        // single segment
    OffsetThenTime,  // move the non-time slots first at fixed start time,
                     // then sweep the time slot: the rectangle geometry
};

// Same scattering computation along an explicitly routed path; the family
// should have passed a curvature scan for the deformation argument to apply.
// No horizon rescaling is available here, so no drift estimate is produced.
ScatterResult deformed_path_transition_matrix(const HamiltonianFamily& family,
                                              const ParamPoint& start, const ParamPoint& end,
                                              WaypointPolicy policy,
                                              const ScatterOptions& opts = {});

}  // namespace mlz
