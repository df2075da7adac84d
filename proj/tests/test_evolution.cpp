#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mlz/errors.hpp"
#include "mlz/evolution.hpp"
#include "mlz/models.hpp"
#include "oracles.hpp"

using namespace mlz;

namespace {

ParamPoint pt(double a) {
    ParamPoint x(1);
    x << a;
    return x;
}

ParamPoint pt(double a, double b) {
    ParamPoint x(2);
    x << a, b;
    return x;
}

// Straight sweep path for the four-state model: t from -r to r with the
// energy offset moving as v*t + e0.
ParamPath sweep_path(const FourStateParams& p, double r) {
    return ParamPath::line(pt(-r, -p.v * r + p.e0), pt(r, p.v * r + p.e0));
}

// Same endpoints reached around the corner: first the offset leg at fixed
// t = -r, then the time leg at fixed offset.
ParamPath rectangle_path(const FourStateParams& p, double r) {
    return ParamPath({pt(-r, -p.v * r + p.e0), pt(-r, p.v * r + p.e0), pt(r, p.v * r + p.e0)});
}

// Family with a constant (x-independent) generator, for closed-form checks.
std::shared_ptr<HamiltonianFamily> constant_family(const Matrix& h, bool real) {
    const int n = static_cast<int>(h.rows());
    return std::make_shared<FunctionFamily>(
        n, 1, [h](int, const ParamPoint&) -> Matrix { return h; },
        [n](int, int, const ParamPoint&) -> Matrix { return Matrix::Zero(n, n); }, real);
}

Matrix exact_exponential(const Matrix& h, double t) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    Vector phases(h.rows());
    for (int i = 0; i < h.rows(); ++i)
        phases[i] = std::exp(Complex(0.0, -es.eigenvalues()[i] * t));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

TEST_CASE("path validation and segment geometry") {
    CHECK_THROWS_AS(ParamPath({}), invalid_input);
    CHECK_THROWS_AS(ParamPath({pt(0.0), pt(1.0, 2.0)}), invalid_input);
    CHECK_THROWS_AS(ParamPath({pt(1.0), pt(1.0)}), invalid_input);
    CHECK_THROWS_AS(ParamPath({pt(0.0), pt(std::nan(""))}), invalid_input);

    const ParamPath single({pt(3.0, -1.0)});
    CHECK(single.segment_count() == 0);
    CHECK(single.dimension() == 2);
    CHECK(single.segments().empty());

    const ParamPath path({pt(0.0, 0.0), pt(2.0, 0.0), pt(2.0, 5.0)});
    CHECK(path.segment_count() == 2);
    const auto segs = path.segments();
    CHECK(segs[0].velocity[0] == 2.0);
    CHECK(segs[0].velocity[1] == 0.0);
    CHECK(segs[1].velocity[0] == 0.0);
    CHECK(segs[1].velocity[1] == 5.0);
    const ParamPoint mid = segs[1].point_at(0.5);
    CHECK(mid[0] == 2.0);
    CHECK(mid[1] == 2.5);

    const ParamPath line = ParamPath::line(pt(-1.0), pt(4.0));
    CHECK(line.segments()[0].velocity[0] == 5.0);
}

TEST_CASE("effective hamiltonian assembles velocity-weighted generators") {
    const FourStateParams p;
    const auto family = four_state_family(p);

    // Pure-time segment reproduces the time generator exactly.
    const PathSegment time_leg{pt(-5.0, 2.0), pt(1.0, 0.0)};
    const auto eff = effective_hamiltonian(*family, time_leg, 0.25);
    CHECK(eff.label() == "path generator");
    CHECK(max_abs(eff.matrix() - four_state_time_generator(p, -4.75, 2.0).matrix()) == 0.0);

    // A sweep segment matches the closed-form sweep generator scaled by the
    // traversal speed.
    const double r = 7.0;
    const auto seg = sweep_path(p, r).segments()[0];
    for (double tau : {0.0, 0.31, 1.0}) {
        const double t = -r + 2.0 * r * tau;
        const Matrix want = 2.0 * r * four_state_sweep_hamiltonian(p, t).matrix();
        const Matrix got = effective_hamiltonian(*family, seg, tau).matrix();
        CHECK(max_abs(got - want) < 1e-12 * max_abs(want));
    }

    // Reversing a segment negates the generator at the mirrored point. At
    // tau = 0.5 the two parameterizations land on bitwise-identical points;
    // elsewhere they differ by rounding in the endpoint arithmetic.
    const PathSegment rev{seg.start + seg.velocity, -seg.velocity};
    const Matrix f_half = effective_hamiltonian(*family, seg, 0.5).matrix();
    const Matrix b_half = effective_hamiltonian(*family, rev, 0.5).matrix();
    CHECK(max_abs(f_half + b_half) == 0.0);
    const Matrix forward = effective_hamiltonian(*family, seg, 0.3).matrix();
    const Matrix backward = effective_hamiltonian(*family, rev, 0.7).matrix();
    CHECK(max_abs(forward + backward) < 1e-12 * max_abs(forward));

    CHECK_THROWS_AS(effective_hamiltonian(*family, seg, 1.5), invalid_input);
    CHECK_THROWS_AS(effective_hamiltonian(*family, seg, -0.1), invalid_input);
    const PathSegment bad{pt(0.0), pt(1.0)};
    CHECK_THROWS_AS(effective_hamiltonian(*family, bad, 0.5), invalid_input);
}

TEST_CASE("zero-length path is the identity propagator") {
    const auto family = lz_two_state_family(0.5, 0.2);
    const ParamPath nowhere({pt(3.0)});

    const Propagator prop = propagate_matrix(*family, nowhere);
    CHECK(prop.steps_taken == 0);
    CHECK(prop.unitarity_defect == 0.0);
    CHECK(max_abs(prop.unitary - Matrix::Identity(2, 2)) == 0.0);

    Vector psi0(2);
    psi0 << Complex(0.6, 0.0), Complex(0.0, 0.8);
    const auto [psi, p2] = propagate(*family, nowhere, psi0);
    CHECK((psi - psi0).norm() == 0.0);
    CHECK(p2.steps_taken == 0);
}

TEST_CASE("time-independent generator matches the eigendecomposition oracle") {
    const Matrix h = oracle::random_hermitian(3, 71u);
    const auto family = constant_family(h, false);
    const double span = 2.5;
    const ParamPath path = ParamPath::line(pt(0.0), pt(span));

    SUBCASE("adaptive") {
        const Propagator prop = propagate_matrix(*family, path);
        CHECK(prop.method == StepMode::Adaptive);
        CHECK(prop.steps_taken > 1);
        CHECK((prop.unitary - exact_exponential(h, span)).norm() < 1e-12);
        CHECK(prop.unitarity_defect < 1e-12);
    }
    SUBCASE("fixed-step") {
        EvolveOptions opts;
        opts.fixed_step = 0.01;
        const Propagator prop = propagate_matrix(*family, path, opts);
        CHECK(prop.method == StepMode::FixedStep);
        CHECK(prop.steps_taken == 100);
        CHECK((prop.unitary - exact_exponential(h, span)).norm() < 1e-12);
    }
}

TEST_CASE("real families take the real eigensolver path and stay exact") {
    const FourStateParams p;
    const auto family = four_state_family(p);
    const ParamPath path = sweep_path(p, 3.0);

    EvolveOptions opts;
    opts.theta = 0.02;
    const Propagator prop = propagate_matrix(*family, path, opts);
    CHECK(prop.unitarity_defect < 1e-10);

    // Cross-check against a complex-solver run of the same generator values.
    const auto wrapped = std::make_shared<FunctionFamily>(
        4, 2,
        [family](int j, const ParamPoint& x) -> Matrix { return family->generator(j, x).matrix(); },
        nullptr, /*real=*/false);
    const Propagator other = propagate_matrix(*wrapped, path, opts);
    CHECK((prop.unitary - other.unitary).norm() < 1e-10);
}

TEST_CASE("reversal in fixed-step mode inverts the propagator") {
    const FourStateParams p;
    const auto family = four_state_family(p);
    const ParamPath fwd = sweep_path(p, 5.0);
    const ParamPath rev = ParamPath::line(fwd.vertices()[1], fwd.vertices()[0]);

    EvolveOptions opts;
    opts.fixed_step = 1e-3;
    const Matrix uf = propagate_matrix(*family, fwd, opts).unitary;
    const Matrix ur = propagate_matrix(*family, rev, opts).unitary;
    // The reversed leg hits the same midpoints, so each factor inverts exactly.
    CHECK((ur * uf - Matrix::Identity(4, 4)).norm() < 1e-10);
}

TEST_CASE("composition over a vertex equals the product of the pieces") {
    const FourStateParams p;
    const auto family = four_state_family(p);
    const ParamPoint a = pt(-6.0, -1.2);
    const ParamPoint b = pt(-6.0, 1.2);
    const ParamPoint c = pt(6.0, 1.2);

    EvolveOptions opts;
    opts.theta = 0.05;
    const Matrix u_full = propagate_matrix(*family, ParamPath({a, b, c}), opts).unitary;
    const Matrix u1 = propagate_matrix(*family, ParamPath::line(a, b), opts).unitary;
    const Matrix u2 = propagate_matrix(*family, ParamPath::line(b, c), opts).unitary;
    CHECK((u_full - u2 * u1).norm() < 1e-12);
}

TEST_CASE("path independence: straight sweep vs rectangle") {
    FourStateParams p;
    p.v = 0.2;
    const auto family = four_state_family(p);
    const double r = 20.0;

    EvolveOptions opts;
    opts.theta = 0.005;
    const Matrix ua = propagate_matrix(*family, sweep_path(p, r), opts).unitary;
    const Matrix ub = propagate_matrix(*family, rectangle_path(p, r), opts).unitary;
    CHECK((ua - ub).norm() < 1e-5);

    Vector psi0 = Vector::Zero(4);
    psi0[0] = 1.0;
    const Vector psi_a = ua * psi0;
    const Vector psi_b = ub * psi0;
    const double fidelity = std::norm(psi_a.dot(psi_b));
    CHECK(1.0 - fidelity < 1e-6);
}

TEST_CASE("richardson self-convergence shows second order") {
    SUBCASE("two-state linear crossing") {
        const auto family = lz_two_state_family(0.5, 0.2);
        Vector psi0(2);
        psi0 << 1.0, 0.0;
        EvolveOptions opts;
        opts.fixed_step = 1e-4;
        const auto report =
            richardson_check(*family, ParamPath::line(pt(-50.0), pt(50.0)), psi0, opts);
        REQUIRE(report.errors.size() == 3);
        CHECK(!report.errors_at_floor);
        CHECK(report.errors[0] > report.errors[1]);
        CHECK(report.errors[1] > report.errors[2]);
        CHECK(report.observed_order > 1.8);
        CHECK(report.observed_order < 2.2);
    }
    SUBCASE("four-state sweep") {
        FourStateParams p;
        p.v = 0.2;
        const auto family = four_state_family(p);
        Vector psi0 = Vector::Zero(4);
        psi0[1] = 1.0;
        EvolveOptions opts;
        opts.fixed_step = 1e-4;
        const auto report = richardson_check(*family, sweep_path(p, 20.0), psi0, opts);
        CHECK(!report.errors_at_floor);
        CHECK(report.observed_order > 1.8);
        CHECK(report.observed_order < 2.2);
    }
    SUBCASE("time-independent generator sits at the rounding floor") {
        const Matrix h = oracle::random_hermitian(2, 5u);
        const auto family = constant_family(h, false);
        Vector psi0(2);
        psi0 << 1.0, 0.0;
        EvolveOptions opts;
        opts.fixed_step = 0.05;
        const auto report = richardson_check(*family, ParamPath::line(pt(0.0), pt(1.0)), psi0, opts);
        CHECK(report.errors_at_floor);
    }
    SUBCASE("adaptive mode is rejected") {
        const auto family = lz_two_state_family(0.5, 0.2);
        Vector psi0(2);
        psi0 << 1.0, 0.0;
        CHECK_THROWS_AS(
            richardson_check(*family, ParamPath::line(pt(-1.0), pt(1.0)), psi0, EvolveOptions{}),
            invalid_input);
    }
}

TEST_CASE("option and input validation") {
    const auto family = lz_two_state_family(0.5, 0.2);
    const ParamPath path = ParamPath::line(pt(-10.0), pt(10.0));
    Vector psi0(2);
    psi0 << 1.0, 0.0;

    EvolveOptions opts;
    opts.theta = 0.0;
    CHECK_THROWS_AS(propagate(*family, path, psi0, opts), invalid_input);
    opts = {};
    opts.fixed_step = -1.0;
    CHECK_THROWS_AS(propagate(*family, path, psi0, opts), invalid_input);
    opts = {};
    opts.max_steps = 3;
    CHECK_THROWS_AS(propagate(*family, path, psi0, opts), resource_limit);

    Vector unnormalized(2);
    unnormalized << 1.0, 1.0;
    CHECK_THROWS_AS(propagate(*family, path, unnormalized, EvolveOptions{}), invalid_input);
    Vector wrong_size = Vector::Zero(3);
    wrong_size[0] = 1.0;
    CHECK_THROWS_AS(propagate(*family, path, wrong_size, EvolveOptions{}), invalid_input);

    const ParamPath two_dim({pt(0.0, 0.0), pt(1.0, 1.0)});
    CHECK_THROWS_AS(propagate_matrix(*family, two_dim), invalid_input);
}

TEST_CASE("per-step trace fires along the path") {
    const auto family = lz_two_state_family(0.5, 0.2);
    const ParamPath path = ParamPath::line(pt(-2.0), pt(2.0));
    Vector psi0(2);
    psi0 << 1.0, 0.0;

    std::vector<double> taus;
    std::vector<double> norms;
    EvolveOptions opts;
    opts.fixed_step = 0.05;  // 20 steps
    opts.trace = [&](const ParamPoint& x, const Vector& psi) {
        taus.push_back(x[0]);
        norms.push_back(psi.norm());
    };
    const auto [psi, prop] = propagate(*family, path, psi0, opts);
    CHECK(prop.steps_taken == 20);
    REQUIRE(taus.size() == 21);  // start plus one per step
    CHECK(taus.front() == -2.0);
    CHECK(taus.back() == doctest::Approx(2.0).epsilon(1e-12));
    for (double n : norms) CHECK(n == doctest::Approx(1.0).epsilon(1e-10));

    // Without an initial state there is nothing to trace.
    taus.clear();
    propagate_matrix(*family, path, opts);
    CHECK(taus.empty());
}

TEST_CASE("repeated adaptive runs are bitwise identical") {
    FourStateParams p;
    p.v = 0.3;
    const auto family = four_state_family(p);
    const ParamPath path = sweep_path(p, 10.0);

    const Propagator a = propagate_matrix(*family, path);
    const Propagator b = propagate_matrix(*family, path);
    CHECK(a.steps_taken == b.steps_taken);
    CHECK(max_abs(a.unitary - b.unitary) == 0.0);
}
