#include "mlz/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "mlz/errors.hpp"

namespace mlz {

ParamPath::ParamPath(std::vector<ParamPoint> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.empty()) throw invalid_input("a path needs at least one vertex");
    const auto dim = vertices_.front().size();
    if (dim < 1) throw invalid_input("path vertices must have at least one coordinate");
    for (const auto& v : vertices_) {
        if (v.size() != dim) throw invalid_input("all path vertices must share one dimension");
        if (!v.allFinite()) throw invalid_input("path vertices must be finite");
    }
    for (std::size_t i = 1; i < vertices_.size(); ++i) {
        if ((vertices_[i] - vertices_[i - 1]).cwiseAbs().maxCoeff() == 0.0)
            throw invalid_input("consecutive path vertices must differ");
    }
}

ParamPath ParamPath::line(const ParamPoint& from, const ParamPoint& to) {
    return ParamPath({from, to});
}

std::vector<PathSegment> ParamPath::segments() const {
    std::vector<PathSegment> out;
    out.reserve(vertices_.size() - 1);
    for (std::size_t i = 1; i < vertices_.size(); ++i)
        out.push_back({vertices_[i - 1], vertices_[i] - vertices_[i - 1]});
    return out;
}

std::string to_string(StepMode mode) {
    switch (mode) {
        case StepMode::Adaptive: return "adaptive";
        case StepMode::FixedStep: return "fixed-step";
    }
    return "unknown";
}

namespace {

void require_options(const EvolveOptions& opts) {
    if (!(opts.theta > 0.0) || opts.theta > 10.0)
        throw invalid_input("theta must lie in (0, 10]");
    if (!(opts.fixed_step >= 0.0) || !std::isfinite(opts.fixed_step))
        throw invalid_input("fixed_step must be zero (adaptive) or a positive step");
    if (opts.max_steps < 1) throw invalid_input("max_steps must be positive");
}

// Effective generator as a bare matrix. Zero-velocity slots are skipped so
// axis-aligned legs only evaluate the generators that actually move.
Matrix effective_matrix(const HamiltonianFamily& family, const PathSegment& seg, double tau) {
    Matrix h = Matrix::Zero(family.dim(), family.dim());
    const ParamPoint x = seg.point_at(tau);
    for (int j = 0; j < family.n_slots(); ++j) {
        const double v = seg.velocity[j];
        if (v == 0.0) continue;
        h += v * family.generator(j, x).matrix();
    }
    return h;
}

// Applies u <- exp(-i h ds) u via eigendecomposition; the solvers are reused
// across the millions of steps a long sweep takes. Real-symmetric generators
// go through the cheaper real solver.
class MidpointStepper {
  public:
    explicit MidpointStepper(bool real_family) : real_(real_family) {}

    void apply(const Matrix& h, double ds, Matrix& u) {
        if (real_) {
            real_solver_.compute(h.real());
            if (real_solver_.info() != Eigen::Success)
                throw numerical_failure("eigendecomposition failed inside a propagation step");
            step(real_solver_.eigenvalues(), real_solver_.eigenvectors().cast<Complex>(), ds, u);
        } else {
            solver_.compute(h);
            if (solver_.info() != Eigen::Success)
                throw numerical_failure("eigendecomposition failed inside a propagation step");
            step(solver_.eigenvalues(), solver_.eigenvectors(), ds, u);
        }
    }

  private:
    void step(const RealVector& w, const Matrix& v, double ds, Matrix& u) {
        Vector phases(w.size());
        for (int i = 0; i < w.size(); ++i) phases[i] = std::exp(Complex(0.0, -w[i] * ds));
        u = v * (phases.asDiagonal() * (v.adjoint() * u));
    }

    bool real_;
    Eigen::SelfAdjointEigenSolver<RealMatrix> real_solver_;
    Eigen::SelfAdjointEigenSolver<Matrix> solver_;
};

// Each step multiplies by a unitary that is exact up to eigensolver rounding,
// so the ordered product drifts off the unitary manifold linearly in the step
// count; multi-million-step sweeps reach defects near 1e-8. Snapping to the
// polar factor at a fixed cadence bounds the defect by the per-interval drift
// while perturbing the product only at the size of the defect it removes.
constexpr long long kResnapInterval = 500'000;

void resnap_unitary(Matrix& u) {
    Eigen::JacobiSVD<Matrix> svd(u, Eigen::ComputeFullU | Eigen::ComputeFullV);
    u = svd.matrixU() * svd.matrixV().adjoint();
}

Propagator run_ordered_product(const HamiltonianFamily& family, const ParamPath& path,
                               const EvolveOptions& opts, const Vector* psi0) {
    require_options(opts);
    if (path.dimension() != family.n_slots())
        throw invalid_input("path dimension does not match the family's slot count");

    const int n = family.dim();
    const bool fixed = opts.fixed_step > 0.0;
    Matrix u = Matrix::Identity(n, n);
    long long steps = 0;
    MidpointStepper stepper(family.real_valued());

    const auto emit_trace = [&](const ParamPoint& x) {
        if (opts.trace && psi0) opts.trace(x, u * (*psi0));
    };
    emit_trace(path.vertices().front());

    const auto segs = path.segments();
    for (std::size_t s = 0; s < segs.size(); ++s) {
        const PathSegment& seg = segs[s];
        if (fixed) {
            const double raw = 1.0 / opts.fixed_step;
            if (raw > 9.0e17) throw resource_limit("fixed_step implies an absurd step count");
            const long long count = std::max<long long>(1, static_cast<long long>(std::ceil(raw - 1e-9)));
            const double ds = 1.0 / static_cast<double>(count);
            for (long long k = 0; k < count; ++k) {
                if (++steps > opts.max_steps)
                    throw resource_limit("propagation exceeded the step budget");
                stepper.apply(effective_matrix(family, seg, (k + 0.5) * ds), ds, u);
                if (steps % kResnapInterval == 0) resnap_unitary(u);
                emit_trace(seg.point_at(std::min((k + 1) * ds, 1.0)));
            }
        } else {
            double tau = 0.0;
            double norm_est = effective_matrix(family, seg, 0.0).norm();
            while (true) {
                const double remaining = 1.0 - tau;
                if (remaining <= 1e-13) break;  // leftover below the integral's resolution
                double ds = std::min(opts.theta / std::max(norm_est, 1e-300), 0.1);
                bool last = false;
                if (ds >= remaining) {
                    ds = remaining;
                    last = true;
                }
                if (!(tau + ds > tau)) {
                    std::ostringstream msg;
                    msg << "step size underflow on segment " << s << " at tau=" << tau;
                    throw numerical_failure(msg.str());
                }
                if (++steps > opts.max_steps)
                    throw resource_limit("propagation exceeded the step budget");
                const Matrix h = effective_matrix(family, seg, tau + 0.5 * ds);
                stepper.apply(h, ds, u);
                if (steps % kResnapInterval == 0) resnap_unitary(u);
                norm_est = h.norm();  // slowly varying; seeds the next step choice
                tau += ds;
                emit_trace(seg.point_at(std::min(tau, 1.0)));
                if (last) break;
            }
        }
    }

    Propagator out{std::move(u), path, steps, 0.0,
                   fixed ? StepMode::FixedStep : StepMode::Adaptive};
    out.unitarity_defect =
        (out.unitary.adjoint() * out.unitary - Matrix::Identity(n, n)).norm();
    if (!(out.unitarity_defect < 1e-8)) {
        std::ostringstream msg;
        msg << "unitarity defect " << out.unitarity_defect << " exceeds 1e-8";
        throw numerical_failure(msg.str());
    }
    return out;
}

}  // namespace

HermitianOperator effective_hamiltonian(const HamiltonianFamily& family,
                                        const PathSegment& segment, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw invalid_input("tau lies outside the segment range [0, 1]");
    if (segment.start.size() != family.n_slots() || segment.velocity.size() != family.n_slots())
        throw invalid_input("segment dimension does not match the family's slot count");
    return HermitianOperator(effective_matrix(family, segment, tau), "path generator");
}

Propagator propagate_matrix(const HamiltonianFamily& family, const ParamPath& path,
                            const EvolveOptions& opts) {
    return run_ordered_product(family, path, opts, nullptr);
}

std::pair<Vector, Propagator> propagate(const HamiltonianFamily& family, const ParamPath& path,
                                        const Vector& psi0, const EvolveOptions& opts) {
    if (psi0.size() != family.dim())
        throw invalid_input("initial state dimension does not match the family");
    if (std::abs(psi0.norm() - 1.0) > 1e-12)
        throw invalid_input("initial state must be normalized to 1 within 1e-12");
    Propagator prop = run_ordered_product(family, path, opts, &psi0);
    Vector psi = prop.unitary * psi0;
    return {std::move(psi), std::move(prop)};
}

RichardsonReport richardson_check(const HamiltonianFamily& family, const ParamPath& path,
                                  const Vector& psi0, const EvolveOptions& opts) {
    if (!(opts.fixed_step > 0.0))
        throw invalid_input("richardson_check requires fixed-step mode (fixed_step > 0)");
    EvolveOptions run = opts;
    run.trace = nullptr;
    std::vector<Vector> states;
    for (int k = 0; k < 4; ++k) {
        run.fixed_step = opts.fixed_step / static_cast<double>(1 << k);
        states.push_back(propagate(family, path, psi0, run).first);
    }
    RichardsonReport report;
    for (int k = 0; k < 3; ++k) {
        report.steps.push_back(opts.fixed_step / static_cast<double>(1 << k));
        report.errors.push_back((states[k] - states[k + 1]).norm());
    }
    report.errors_at_floor = report.errors.back() < 1e-13 ||
                             *std::min_element(report.errors.begin(), report.errors.end()) == 0.0;
    if (!report.errors_at_floor) {
        double sum = 0.0;
        for (int k = 0; k < 2; ++k) sum += std::log2(report.errors[k] / report.errors[k + 1]);
        report.observed_order = 0.5 * sum;
    }
    return report;
}

}  // namespace mlz
