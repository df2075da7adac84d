#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <random>

#include "mlz/models.hpp"
#include "oracles.hpp"

using namespace mlz;

namespace {

ParamPoint point2(double a, double b) {
    ParamPoint x(2);
    x << a, b;
    return x;
}

FourStateParams standard_params() {
    FourStateParams p;
    p.b1 = 1.0;
    p.b2 = 0.5;
    p.g = 0.2;
    p.gamma = 0.3;
    return p;
}

}  // namespace

TEST_CASE("four-state parameter validation") {
    FourStateParams p = standard_params();
    CHECK_NOTHROW(p.validate());
    p.b2 = 1.5;  // violates b1 > b2
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p = standard_params();
    p.b2 = -0.5;
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p = standard_params();
    p.v = -0.1;
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p = standard_params();
    p.g = std::nan("");
    CHECK_THROWS_AS(p.validate(), invalid_input);
}

TEST_CASE("time generator matches the stated layout") {
    FourStateParams p = standard_params();
    // couplings off, origin: zero matrix
    FourStateParams bare = p;
    bare.g = bare.gamma = 0.0;
    CHECK(max_abs(four_state_time_generator(bare, 0.0, 0.0).matrix()) == 0.0);

    // t=0, e=5: diagonal (5, 5, 0, 0), couplings in the corner blocks
    const Matrix h = four_state_time_generator(p, 0.0, 5.0).matrix();
    CHECK(h(0, 0).real() == 5.0);
    CHECK(h(1, 1).real() == 5.0);
    CHECK(h(2, 2).real() == 0.0);
    CHECK(h(3, 3).real() == 0.0);
    CHECK(h(0, 1).real() == 0.0);
    CHECK(h(0, 2).real() == 0.2);
    CHECK(h(0, 3).real() == -0.3);
    CHECK(h(1, 2).real() == 0.3);
    CHECK(h(1, 3).real() == 0.2);
    CHECK(h(2, 3).real() == 0.0);
    CHECK(four_state_time_generator(p, 2.0, 1.0).is_real());

    const RealVector lv = four_state_diabatic_levels(p, 2.0, 1.0);
    CHECK(lv[0] == 3.0);
    CHECK(lv[1] == -1.0);
    CHECK(lv[2] == 1.0);
    CHECK(lv[3] == -1.0);
}

TEST_CASE("offset generator layout and commutation") {
    FourStateParams p = standard_params();
    // e=0, t=1: diagonal (1, 1, 0, 0) plus the constant coupling block
    const Matrix h1 = four_state_offset_generator(p, 1.0, 0.0).matrix();
    CHECK(h1(0, 0).real() == 1.0);
    CHECK(h1(1, 1).real() == 1.0);
    CHECK(h1(2, 2).real() == 0.0);
    CHECK(h1(3, 3).real() == 0.0);
    CHECK(h1(0, 2).real() == doctest::Approx(0.4).epsilon(1e-15));    // g/(b1-b2)
    CHECK(h1(0, 3).real() == doctest::Approx(-0.2).epsilon(1e-15));   // -gamma/(b1+b2)
    CHECK(h1(1, 2).real() == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(h1(1, 3).real() == doctest::Approx(-0.4).epsilon(1e-15));   // -g/(b1-b2)

    // the pair commutes at arbitrary (t, e)
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double t = u(gen), e = u(gen);
        const Matrix a = four_state_time_generator(p, t, e).matrix();
        const Matrix b = four_state_offset_generator(p, t, e).matrix();
        CHECK(commutator_norm(a, b) < 1e-13 * std::max(1.0, max_abs(a) * max_abs(b)));
    }
}

TEST_CASE("four-state family: analytic partials and flatness scan") {
    auto fam = four_state_family(standard_params());
    CHECK(fam->dim() == 4);
    CHECK(fam->n_slots() == 2);
    CHECK(fam->real_valued());
    CHECK(fam->has_analytic_partials());

    // cross partials are both diag(1,1,0,0): curl identically zero
    const ParamPoint x = point2(1.7, -2.3);
    const Matrix dt_h1 = fam->partial(1, 0, x);
    const Matrix de_h0 = fam->partial(0, 1, x);
    CHECK((dt_h1 - de_h0).norm() == 0.0);
    CHECK(dt_h1(0, 0).real() == 1.0);
    CHECK(dt_h1(2, 2).real() == 0.0);

    // analytic partials agree with central differences
    VerifyOptions central;
    central.mode = DerivativeMode::Central;
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
            CHECK((fam->partial(j, k, x) - family_partial(*fam, j, k, x, central)).norm() < 1e-9);

    ParamGrid grid;
    grid.mins = point2(-3.0, -3.0);
    grid.maxs = point2(3.0, 3.0);
    grid.counts = {5, 5};
    const auto report = scan_family(*fam, grid.points());
    CHECK(report.worst_full < 1e-13);
    CHECK(report.worst_curl == 0.0);

    VerifyOptions fd;
    fd.mode = DerivativeMode::Central;
    const auto fd_report = scan_family(*fam, grid.points(), fd);
    CHECK(fd_report.worst_full < 1e-9);

    // real family: exact pythagorean split
    const CurvatureResidual r = curvature_residual(*fam, x, 0, 1);
    CHECK(r.full_norm == doctest::Approx(std::hypot(r.commutator_norm, r.curl_norm))
                             .epsilon(1e-12));
}

TEST_CASE("sweep hamiltonian agrees with the generator combination") {
    // frozen coefficient spot checks at v=0.2: x=0.4, y=2/15, xy=4/75
    FourStateParams p = standard_params();
    p.v = 0.2;
    p.e0 = 0.0;
    const Matrix h = four_state_sweep_hamiltonian(p, 1.0).matrix();
    CHECK(h(0, 0).real() == doctest::Approx(0.4 + 1.0 * (1.0 + 4.0 / 75.0)).epsilon(1e-15));
    CHECK(h(0, 2).real() == doctest::Approx(0.2 * 1.4).epsilon(1e-15));
    CHECK(h(0, 3).real() == doctest::Approx(-0.3 * (1.0 + 2.0 / 15.0)).epsilon(1e-15));
    CHECK(h(1, 2).real() == doctest::Approx(0.3 * (1.0 - 2.0 / 15.0)).epsilon(1e-15));
    CHECK(h(1, 3).real() == doctest::Approx(0.2 * 0.6).epsilon(1e-15));

    // dual construction: explicit coefficients vs time + v * offset on the
    // sweep line, 100 random parameter draws
    std::mt19937_64 gen(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        FourStateParams q;
        q.b1 = 0.6 + 1.9 * u(gen);
        q.b2 = q.b1 * (0.1 + 0.8 * u(gen));
        q.g = -0.5 + u(gen);
        q.gamma = -0.5 + u(gen);
        q.e0 = -3.0 + 6.0 * u(gen);
        q.v = 3.0 * u(gen);
        const double tau = -10.0 + 20.0 * u(gen);

        const Matrix explicit_form = four_state_sweep_hamiltonian(q, tau).matrix();
        const double e = q.v * tau + q.e0;
        const Matrix combined = four_state_time_generator(q, tau, e).matrix() +
                                q.v * four_state_offset_generator(q, tau, e).matrix();
        CHECK(max_abs(explicit_form - combined) < 1e-13 * std::max(1.0, max_abs(combined)));
    }

    // v = 0 reduces to the time generator at fixed offset e0 (analytic limit)
    FourStateParams rest = standard_params();
    rest.v = 0.0;
    rest.e0 = 1.25;
    const Matrix at_rest = four_state_sweep_hamiltonian(rest, 2.0).matrix();
    const Matrix direct = four_state_time_generator(rest, 2.0, 1.25).matrix();
    CHECK(max_abs(at_rest - direct) == 0.0);
}

TEST_CASE("crossing lines carry the coupled pairs") {
    const auto lines = four_state_crossing_lines(standard_params());
    REQUIRE(lines.size() == 4);
    // pair (0,2) crosses on e = -(b1-b2) t, pair (1,2) on e = (b1+b2) t
    CHECK(lines[0].i == 0);
    CHECK(lines[0].j == 2);
    CHECK(lines[0].slope == -0.5);
    CHECK(lines[1].slope == 0.5);
    CHECK(lines[2].slope == -1.5);
    CHECK(lines[3].i == 1);
    CHECK(lines[3].j == 2);
    CHECK(lines[3].slope == 1.5);
    // each line really degenerates its diabatic pair
    const FourStateParams p = standard_params();
    for (const auto& line : lines) {
        const double t = 7.0;
        const RealVector lv = four_state_diabatic_levels(p, t, line.slope * t);
        CHECK(std::abs(lv[line.i] - lv[line.j]) < 1e-12);
    }
}

TEST_CASE("two-state model layout") {
    CHECK_THROWS_AS(lz_two_state_family(0.0, 0.2), invalid_input);
    auto fam = lz_two_state_family(0.5, 0.2);
    CHECK(fam->dim() == 2);
    CHECK(fam->n_slots() == 1);
    ParamPoint x(1);
    x << 4.0;
    const Matrix h = fam->generator(0, x).matrix();
    CHECK(h(0, 0).real() == 1.0);   // 0.5 * 0.5 * 4
    CHECK(h(1, 1).real() == -1.0);
    CHECK(h(0, 1).real() == 0.2);
    const Matrix d = fam->partial(0, 0, x);
    CHECK(d(0, 0).real() == 0.25);
    // zero coupling: stays diagonal
    auto bare = lz_two_state_family(0.5, 0.0);
    CHECK(std::abs(bare->generator(0, x).matrix()(0, 1)) == 0.0);
}

TEST_CASE("tavis-cummings parameter validation") {
    TCParams p;
    p.n_spins = 2;
    p.epsilons = {1.0, 0.8};
    CHECK_NOTHROW(p.validate());
    p.epsilons = {0.8, 1.0};  // not decreasing
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p.epsilons = {1.0};  // wrong count
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p.epsilons = {1.0, 1.0 - 1e-12};  // not distinct enough
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p.epsilons = {1.0, 0.8};
    p.boson_cutoff = 0;
    CHECK_THROWS_AS(p.validate(), invalid_input);
}

TEST_CASE("tavis-cummings single-spin partner and excitation identity") {
    TCParams p;
    p.n_spins = 1;
    p.epsilons = {0.9};
    p.g = 0.3;
    p.boson_cutoff = 3;
    auto fam = tavis_cummings_family(p);
    const SpinBosonSpace space = tavis_cummings_space(p);
    CHECK(fam->dim() == 8);
    CHECK(fam->n_slots() == 2);

    const double omega = 0.4;
    const ParamPoint x = tavis_cummings_point(p, omega);
    // single spin: partner is (eps + omega) s^z + g (a^dag s^- + a s^+)
    const Matrix h1 = fam->generator(1, x).matrix();
    const Matrix expected = (0.9 + 0.4) * spin_z(space, 0).matrix() +
                            0.3 * (boson_create(space) * spin_minus(space, 0) +
                                   boson_annihilate(space) * spin_plus(space, 0));
    CHECK(max_abs(h1 - expected) == 0.0);

    // H_TC + omega N equals the partner sum (here: the single partner)
    const Matrix n_op = boson_number(space).matrix() + spin_z(space, 0).matrix();
    const Matrix lhs = fam->generator(0, x).matrix() + omega * n_op;
    CHECK(max_abs(lhs - h1) < 1e-14);
}

TEST_CASE("tavis-cummings commutation holds outside the truncation block") {
    TCParams p;
    p.n_spins = 2;
    p.epsilons = {1.0, 0.8};
    p.g = 0.25;
    p.boson_cutoff = 4;
    auto fam = tavis_cummings_family(p);
    const SpinBosonSpace space = tavis_cummings_space(p);
    CHECK(fam->unreliable_indices() == space.truncation_indices());

    const ParamPoint x = tavis_cummings_point(p, 0.3);
    // masked commutators vanish; the unmasked ones are O(g^2): the truncated
    // ladder operators cannot close the algebra on the top boson block
    double masked_worst = 0.0, unmasked_worst = 0.0;
    for (int j = 0; j < 3; ++j) {
        for (int k = j + 1; k < 3; ++k) {
            masked_worst = std::max(masked_worst, check_commutation(*fam, x, j, k));
            Matrix c = commutator(fam->generator(j, x).matrix(), fam->generator(k, x).matrix());
            unmasked_worst = std::max(unmasked_worst, c.norm());
        }
    }
    CHECK(masked_worst < 1e-12);
    CHECK(unmasked_worst > 0.01);

    // excitation number commutes with every generator even when truncated
    Matrix n_op = boson_number(space).matrix();
    for (int j = 0; j < 2; ++j) n_op += spin_z(space, j).matrix();
    for (int j = 0; j < 3; ++j)
        CHECK(commutator_norm(n_op, fam->generator(j, x).matrix()) < 1e-12);

    // partner sum identity on the full (truncated) space
    const Matrix identity_gap = fam->generator(1, x).matrix() + fam->generator(2, x).matrix() -
                                fam->generator(0, x).matrix() - 0.3 * n_op;
    CHECK(max_abs(identity_gap) < 1e-12);

    // coincident epsilon slots are rejected at evaluation
    ParamPoint bad = x;
    bad[2] = bad[1];
    CHECK_THROWS_AS(fam->generator(1, bad), invalid_input);
}

TEST_CASE("tavis-cummings flatness scan with both derivative routes") {
    TCParams p;
    p.n_spins = 2;
    p.epsilons = {1.0, 0.6};
    p.g = 0.25;
    p.boson_cutoff = 3;
    auto fam = tavis_cummings_family(p);

    ParamGrid grid;
    grid.mins = ParamPoint(3);
    grid.maxs = ParamPoint(3);
    grid.mins << -1.0, 0.8, 0.4;
    grid.maxs << 1.0, 1.2, 0.7;
    grid.counts = {3, 3, 3};
    const auto pts = grid.points();

    const auto analytic = scan_family(*fam, pts);
    CHECK(analytic.worst_curl == 0.0);  // cross partials are bitwise equal
    CHECK(analytic.worst_full < 1e-12);

    VerifyOptions fd;
    fd.mode = DerivativeMode::Central;
    const auto central = scan_family(*fam, pts, fd);
    CHECK(central.worst_full < 1e-8);
}

TEST_CASE("quanta sectors and their invariance") {
    TCParams p;
    p.n_spins = 2;
    p.epsilons = {1.0, 0.8};
    p.g = 0.25;
    p.boson_cutoff = 2;
    const SpinBosonSpace space = tavis_cummings_space(p);
    CHECK(quanta_sector_indices(space, 0) == std::vector<int>{0});
    CHECK(quanta_sector_indices(space, 1) == std::vector<int>{1, 2, 4});
    CHECK_THROWS_AS(quanta_sector_indices(space, -1), invalid_input);

    // the one-quantum sector is exactly invariant: restriction succeeds and
    // reproduces the expected 3x3 block
    auto fam = tavis_cummings_family(p);
    auto sector = restrict_family(std::shared_ptr<const HamiltonianFamily>(fam),
                                  quanta_sector_indices(space, 1));
    const double omega = 0.15;
    const ParamPoint x = tavis_cummings_point(p, omega);
    const Matrix block = sector->generator(0, x).matrix();
    const double delta = 0.5 * (1.0 - 0.8);
    const double ebar = 0.5 * (1.0 + 0.8);
    CHECK(block(0, 0).real() == doctest::Approx(delta).epsilon(1e-15));
    CHECK(block(1, 1).real() == doctest::Approx(-delta).epsilon(1e-15));
    CHECK(block(2, 2).real() == doctest::Approx(-omega - ebar).epsilon(1e-14));
    CHECK(block(0, 2).real() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(block(1, 2).real() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::abs(block(0, 1)) == 0.0);
}

TEST_CASE("gaudin parameter validation") {
    GaudinParams p;
    p.n_spins = 3;
    p.epsilons = {1.0, 0.4, -0.2};
    CHECK_NOTHROW(p.validate());
    p.B = 0.0;
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p.B = 0.7;
    p.epsilons = {1.0, 0.4, 0.4};
    CHECK_THROWS_AS(p.validate(), invalid_input);
    p.epsilons = {1.0, 0.4};
    CHECK_THROWS_AS(p.validate(), invalid_input);
}

TEST_CASE("gaudin family: commutation, partner sum, and flatness") {
    GaudinParams p;
    p.n_spins = 3;
    p.epsilons = {1.1, 0.3, -0.6};
    p.B = 0.7;
    auto fam = gaudin_family(p);
    const SpinBosonSpace space = gaudin_space(p);
    CHECK(fam->dim() == 8);
    CHECK(fam->n_slots() == 4);
    CHECK(fam->unreliable_indices().empty());

    const ParamPoint x = gaudin_point(p);
    for (int j = 0; j < 4; ++j)
        for (int k = j + 1; k < 4; ++k) CHECK(check_commutation(*fam, x, j, k) < 1e-12);

    // partner sum: pairwise terms cancel, leaving 2B * total s^z; the
    // off-diagonal cancellation is exact because each entry pairs two
    // bitwise-negated contributions
    Matrix partner_sum = Matrix::Zero(8, 8);
    for (int j = 1; j < 4; ++j) partner_sum += fam->generator(j, x).matrix();
    Matrix sz_total = Matrix::Zero(8, 8);
    for (int j = 0; j < 3; ++j) sz_total += spin_z(space, j).matrix();
    const Matrix gap = partner_sum - 2.0 * p.B * sz_total;
    double off_diag = 0.0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (r != c) off_diag = std::max(off_diag, std::abs(gap(r, c)));
    CHECK(off_diag == 0.0);
    CHECK(max_abs(gap) < 1e-14);  // diagonal: accumulated rounding only

    // B = 0 slot is outside the domain
    ParamPoint singular = x;
    singular[0] = 0.0;
    CHECK_THROWS_AS(fam->generator(0, singular), invalid_input);

    ParamGrid grid;
    grid.mins = ParamPoint(4);
    grid.maxs = ParamPoint(4);
    grid.mins << 0.4, 0.9, 0.1, -0.8;
    grid.maxs << 1.0, 1.3, 0.5, -0.4;
    grid.counts = {3, 2, 2, 2};
    const auto analytic = scan_family(*fam, grid.points());
    CHECK(analytic.worst_full < 1e-12);
    CHECK(analytic.worst_curl == 0.0);

    VerifyOptions fd;
    fd.mode = DerivativeMode::Central;
    const auto central = scan_family(*fam, grid.points(), fd);
    CHECK(central.worst_full < 1e-8);

    // analytic partial of the pair-hopping term against central differences
    VerifyOptions fine;
    fine.mode = DerivativeMode::Central;
    fine.fd_step_scale = 1e-5;
    const Matrix a = fam->partial(0, 0, x);
    const Matrix c = family_partial(*fam, 0, 0, x, fine);
    CHECK((a - c).norm() < 1e-7 * std::max(1.0, a.norm()));
}
