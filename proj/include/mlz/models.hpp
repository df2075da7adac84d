#pragma once

#include <memory>
#include <vector>

#include "mlz/family.hpp"

namespace mlz {

// ---------------------------------------------------------------------------
// Four-state crossing model over slots (t, e)
// ---------------------------------------------------------------------------

// Two slope pairs (b1 > b2 > 0), two couplings, and the straight-sweep data
// e(t) = v t + e0. The sweep fields (v, e0) do not enter the family itself;
// they parameterize scattering paths built from it.
struct FourStateParams {
    double b1 = 1.0;
    double b2 = 0.5;
    double g = 0.2;
    double gamma = 0.3;
    double e0 = 0.0;
    double v = 0.2;

    void validate() const;  // b1 > b2 > 0, v >= 0, all fields finite
};

// Generator of time translations: diabatic levels (b1 t + e, -b1 t + e,
// b2 t, -b2 t) with couplings g between (1,3)/(2,4) and +-gamma between
// (1,4)/(2,3).
HermitianOperator four_state_time_generator(const FourStateParams& p, double t, double e);

// The unique nontrivial commuting partner; generates translations of the
// offset e. Couplings are rescaled by the slope sums/differences.
HermitianOperator four_state_offset_generator(const FourStateParams& p, double t, double e);

// Effective Hamiltonian for the straight sweep (t, e) = (tau, v*tau + e0),
// written in explicit closed coefficients. Must equal
//   time_generator + v * offset_generator
// evaluated on the sweep line; the v -> 0 limit is taken analytically.
HermitianOperator four_state_sweep_hamiltonian(const FourStateParams& p, double tau);

// Diabatic level energies (b1 t + e, -b1 t + e, b2 t, -b2 t).
RealVector four_state_diabatic_levels(const FourStateParams& p, double t, double e);

// The commuting two-slot family x = (t, e) with analytic partials.
std::shared_ptr<HamiltonianFamily> four_state_family(const FourStateParams& p);

// A diabatic-level crossing locus e = slope * t for the coupled pair (i, j)
// (0-based state indices). The four coupled pairs give four lines through
// the origin; pairs (0,1) and (2,3) are uncoupled and excluded.
struct CrossingLine {
    int i = 0;
    int j = 0;
    double slope = 0.0;
};

std::vector<CrossingLine> four_state_crossing_lines(const FourStateParams& p);

// ---------------------------------------------------------------------------
// Two-state Landau-Zener baseline
// ---------------------------------------------------------------------------

// Single-slot family H(t) = [[ b t / 2, g], [g, -b t / 2]] with relative
// slope b = slope_diff != 0.
std::shared_ptr<HamiltonianFamily> lz_two_state_family(double slope_diff, double coupling);

// ---------------------------------------------------------------------------
// Driven Tavis-Cummings family over slots (omega, eps_1 .. eps_n)
// ---------------------------------------------------------------------------

struct TCParams {
    int n_spins = 2;
    std::vector<double> epsilons;  // strictly decreasing
    double g = 0.25;
    int boson_cutoff = 4;  // largest representable occupation

    void validate() const;
};

// Generator 0 is the Tavis-Cummings Hamiltonian
//   sum_j eps_j s_j^z - omega n + g sum_j (a^dag s_j^- + a s_j^+),
// with omega in slot 0; generator j >= 1 is its commuting partner
//   (eps_j + omega) s_j^z + g (a^dag s_j^- + a s_j^+)
//     + 2 g^2 sum_{k != j} s_j.s_k / (eps_j - eps_k),
// with eps_j in slot j. Epsilon values are read from the evaluation point,
// not from the params (which supply defaults and the validity ordering).
// The top boson-occupation block is reported unreliable: the truncated
// ladder operators cannot close the algebra there.
std::shared_ptr<HamiltonianFamily> tavis_cummings_family(const TCParams& p);

SpinBosonSpace tavis_cummings_space(const TCParams& p);

// Parameter point (omega, eps_1 .. eps_n) using the params' epsilons.
ParamPoint tavis_cummings_point(const TCParams& p, double omega);

// Basis indices with occupation + (number of up spins) == quanta; the
// excitation number is conserved, so these sectors evolve independently.
std::vector<int> quanta_sector_indices(const SpinBosonSpace& space, int quanta);

// ---------------------------------------------------------------------------
// BCS / Gaudin family over slots (B, eps_1 .. eps_n)
// ---------------------------------------------------------------------------

struct GaudinParams {
    int n_spins = 3;
    std::vector<double> epsilons;  // pairwise distinct
    double B = 0.7;

    void validate() const;
};

// Generator 0 is the BCS Hamiltonian
//   sum_j 2 eps_j s_j^z - (1 / 2B) sum_{j,k} s_j^+ s_k^-,
// with B in slot 0 (B == 0 is outside the domain); generator j >= 1 is the
// Gaudin magnet 2 B s_j^z - sum_{k != j} s_j.s_k / (eps_j - eps_k).
std::shared_ptr<HamiltonianFamily> gaudin_family(const GaudinParams& p);

SpinBosonSpace gaudin_space(const GaudinParams& p);

// Parameter point (B, eps_1 .. eps_n) from the params.
ParamPoint gaudin_point(const GaudinParams& p);

}  // namespace mlz
