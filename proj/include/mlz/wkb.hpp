#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mlz/evolution.hpp"
#include "mlz/family.hpp"
#include "mlz/scattering.hpp"

namespace mlz {

// ---------------------------------------------------------------------------
// Adiabatic frames and momenta
// ---------------------------------------------------------------------------

// Instantaneous eigenframe of a commuting family at one parameter point.
// Level indices follow the energy-sorted spectrum of generator 0. Every
// generator is diagonal in this basis, so each acts on level a as
//   H_j |e_a> = -p_j^a |e_a>,
// and the momenta p_j^a form a gradient field: the action S^a accumulated
// along a path obeys dS^a = p_j^a dx^j. `action` carries the increments
// accumulated by the propagation that produced the frame (zero for a frame
// built in place).
struct AdiabaticFrame {
    ParamPoint x;
    RealVector energies;  // eigenvalues of generator 0, ascending
    Matrix basis;         // column a holds |e_a(x)>, gauge-fixed
    RealMatrix momenta;   // momenta(j, a) = p_j^a = -<e_a| H_j |e_a>
    RealVector action;    // accumulated action increments per level
};

// Diagonalizes generator 0 at x and reads off the momenta of every slot.
// Requires all spectral gaps > 1e-8 (frames are undefined at degeneracies)
// and verifies that every generator is actually diagonal in the frame
// (off-diagonal norm < 1e-9 relative to scale); a violation means the
// family does not commute at x.
AdiabaticFrame adiabatic_frame(const HamiltonianFamily& family, const ParamPoint& x);

// Unique assignment of frame levels to coordinate (diabatic) basis states by
// decreasing overlap: result[a] is the diabatic index of level a.
std::vector<int> diabatic_assignment(const Matrix& basis);

// ---------------------------------------------------------------------------
// Non-adiabatic couplings
// ---------------------------------------------------------------------------

// First-order couplings between frame levels at one point. For each slot j,
//   b[j](a, b) = <e_a | d_j e_b> = <e_a| d_j H_0 |e_b> / (E_b - E_a),
// an anti-Hermitian connection, and lambda[j](a, b) = p_j^a - p_j^b. The
// commutation structure makes the vectors (over j) b(a,b) and lambda(a,b)
// collinear, so their ratio kappa(a, b) is slot-independent; it is computed
// from the best-conditioned slot (largest |lambda_j|). Pairs whose lambda
// vanishes in every slot have no ratio: kappa is NaN there and the pair is
// listed in undefined_pairs. The diagonal of kappa is NaN by convention.
struct CouplingField {
    ParamPoint x;
    std::vector<Matrix> b;           // per slot, dim x dim, anti-Hermitian
    std::vector<RealMatrix> lambda;  // per slot, dim x dim, antisymmetric
    RealMatrix kappa;                // non-adiabaticity parameters
    double collinearity = 0.0;       // max |lambda_j b_k - lambda_k b_j|
    std::vector<std::pair<int, int>> undefined_pairs;
};

CouplingField coupling_field(const HamiltonianFamily& family, const ParamPoint& x);

// Central-difference curl d_j p_k^a - d_k p_j^a of the momentum field for
// level a; vanishes because the momenta are a gradient. The stencil shares
// one step h = step_scale * max(1, |x_j|, |x_k|); a level crossing inside
// the stencil (detected by overlap reordering against the center frame)
// fails rather than silently mixing branches.
double momentum_curl_check(const HamiltonianFamily& family, const ParamPoint& x, int j, int k,
                           int a, double step_scale = 1e-4);

// ---------------------------------------------------------------------------
// Non-adiabaticity maps and domain boundaries
// ---------------------------------------------------------------------------

// Straight boundary curve y = slope * x through the origin of the mapped
// plane (for the four-state model: e = (+-b2 +-b1) t).
struct BoundaryLine {
    double slope = 0.0;
    std::string label;
};

// kappa raster of one diabatic level pair over a two-slot plane, with the
// remaining slots pinned at the base point. kappa(iy, ix) is evaluated at
// (xs[ix], ys[iy]); grid points with a spectral gap below 1e-8 are masked
// (NaN). When boundary lines are attached, labels(iy, ix) numbers the
// angular sector of the point among the 2*lines rays from the origin
// (1-based counterclockwise; 0 without boundaries).
struct DomainMap {
    std::string model;
    int slot_x = 0;
    int slot_y = 1;
    int a = 0;
    int b = 1;
    RealVector xs, ys;
    RealMatrix kappa;
    Eigen::MatrixXi labels;
    std::vector<BoundaryLine> boundaries;
};

struct DomainMapOptions {
    std::vector<BoundaryLine> boundaries;
    std::string model;
    int threads = 0;
};

// Evaluates |kappa^{ab}| for the diabatic pair (a, b) over the grid; at
// each point the pair is matched to frame levels by dominant overlap.
DomainMap kappa_map(const HamiltonianFamily& family, const ParamPoint& base, int slot_x,
                    int slot_y, const RealVector& xs, const RealVector& ys, int a, int b,
                    const DomainMapOptions& opts = {});

// The four crossing lines e = (b1 - b2) t, e = (b1 + b2) t and their
// reflections, which bound the eight adiabatic domains of the four-state
// model.
std::vector<BoundaryLine> four_state_boundary_lines(const FourStateParams& p);

// Angular half-width (radians) of the region |kappa^{ab}| >= level around
// the line y = slope * x, measured at |x| = x_abs by bisecting outward from
// the line. The width shrinks as the crossing region is confined to an
// angle of order 1/x.
double kappa_half_width(const HamiltonianFamily& family, const ParamPoint& base, int slot_x,
                        int slot_y, int a, int b, double line_slope, double x_abs,
                        double level = 1.0);

// ---------------------------------------------------------------------------
// WKB propagation within an adiabatic domain
// ---------------------------------------------------------------------------

struct WkbOptions {
    double kappa_threshold = 0.05;  // largest |kappa| tolerated on the path
    int samples_per_segment = 400;  // trapezoid resolution and check points
};

struct WkbResult {
    Vector amplitudes;    // input amplitudes phased by e^{i DeltaS^a}
    RealVector action;    // DeltaS^a = integral of p_j^a dx^j
    AdiabaticFrame frame; // final frame, gauge-continued along the path
    double max_kappa = 0.0;
};

// Evolves level amplitudes along a path that stays inside one adiabatic
// domain: magnitudes are preserved and each level picks up e^{i DeltaS^a}
// with the action integrated by the trapezoid rule. Frames are tracked
// sequentially with gauge continuity (columns flipped to stay aligned);
// a level reordering on the path or a gap collapse fails, and any sampled
// point with max |kappa| >= threshold rejects the path as non-adiabatic.
WkbResult wkb_propagate(const HamiltonianFamily& family, const ParamPath& path,
                        const Vector& amplitudes, const WkbOptions& opts = {});

// ---------------------------------------------------------------------------
// Domain matching
// ---------------------------------------------------------------------------

// Pairwise Landau-Zener matching condition between two adiabatic domains.
struct CrossingMatch {
    int a = 0;               // higher-slope member of the crossing pair
    int b = 1;
    double coupling = 0.0;
    double slope_diff = 0.0;  // difference of the two diabatic slopes
    int sign = 1;
    double phase = 0.0;
};

// Embeds the 2x2 LZ block of the crossing on (a, b) and the identity on
// every other level, in the convention consumed by chain_scatter. The
// crossing must be the only near-degenerate pair: in both frames every
// other level pair's gap must exceed 10x the coupling.
Matrix match_domains(const AdiabaticFrame& incoming, const AdiabaticFrame& outgoing,
                     const CrossingMatch& match);

}  // namespace mlz
