#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mlz/family.hpp"
#include "mlz/operators.hpp"

namespace mlz {

// One straight-line piece of a parameter-space path. The segment is
// parameterized by path time tau in [0, 1]; velocity = end - start, so the
// physical scale of the traversal lives entirely in the velocity vector.
struct PathSegment {
    ParamPoint start;
    ParamPoint velocity;

    ParamPoint point_at(double tau) const { return start + tau * velocity; }
};

// Piecewise-linear path through parameter space. Every segment spans one
// unit of path time. Consecutive vertices must differ; a single-vertex path
// is accepted and denotes the zero-length path (identity evolution).
class ParamPath {
  public:
    explicit ParamPath(std::vector<ParamPoint> vertices);

    static ParamPath line(const ParamPoint& from, const ParamPoint& to);

    const std::vector<ParamPoint>& vertices() const { return vertices_; }
    int dimension() const { return static_cast<int>(vertices_.front().size()); }
    int segment_count() const { return static_cast<int>(vertices_.size()) - 1; }
    std::vector<PathSegment> segments() const;

  private:
    std::vector<ParamPoint> vertices_;
};

enum class StepMode {
    Adaptive,   // step length bounded so that ||h|| * dtau <= theta
    FixedStep,  // equal path-time steps per segment
};

std::string to_string(StepMode mode);

struct EvolveOptions {
    // Adaptive mode: per-step accuracy knob, bounds ||h(tau)|| * dtau.
    double theta = 0.1;
    // Setting a positive value selects fixed-step mode; the value is the
    // path-time step, rounded to an integer number of steps per segment.
    double fixed_step = 0.0;
    // Hard cap on total steps across the whole path; exceeding it aborts.
    long long max_steps = 200'000'000;
    // Optional per-step tap: called with the current parameter point and the
    // evolved state (only when an initial state is supplied, i.e. from
    // propagate); invoked once at the path start and after every step.
    std::function<void(const ParamPoint&, const Vector&)> trace;
};

struct Propagator {
    Matrix unitary;
    ParamPath path;
    long long steps_taken = 0;
    double unitarity_defect = 0.0;  // ||U^dag U - I||_F
    StepMode method = StepMode::Adaptive;
};

// Generator of path evolution at a point on a segment: sum_j v^j H_j(x(tau)).
// Hermitian by construction since the velocity weights are real.
HermitianOperator effective_hamiltonian(const HamiltonianFamily& family,
                                        const PathSegment& segment, double tau);

// Ordered product of exponential-midpoint steps exp(-i h(tau_mid) dtau) over
// the whole path, applied to the identity. Second-order accurate and exactly
// unitary up to rounding. Throws numerical_failure if the step size
// underflows or the accumulated unitarity defect exceeds 1e-8, and
// resource_limit if the step budget is exhausted.
Propagator propagate_matrix(const HamiltonianFamily& family, const ParamPath& path,
                            const EvolveOptions& opts = {});

// Same evolution applied to a normalized initial state. Global phase is
// meaningful only relative to the ordered product itself; comparisons between
// different propagations should use phase-insensitive measures.
std::pair<Vector, Propagator> propagate(const HamiltonianFamily& family, const ParamPath& path,
                                        const Vector& psi0, const EvolveOptions& opts = {});

// Self-convergence study in fixed-step mode. errors[k] is the state distance
// between the runs at steps[k] and steps[k]/2, so each entry isolates the
// O(h^2) increment; observed_order is the mean of log2 ratios of successive
// errors. errors_at_floor flags increments at rounding level (e.g. a
// time-independent generator, for which the midpoint rule is exact), where
// the order estimate carries no information.
struct RichardsonReport {
    std::vector<double> steps;
    std::vector<double> errors;
    double observed_order = 0.0;
    bool errors_at_floor = false;
};

RichardsonReport richardson_check(const HamiltonianFamily& family, const ParamPath& path,
                                  const Vector& psi0, const EvolveOptions& opts);

}  // namespace mlz
