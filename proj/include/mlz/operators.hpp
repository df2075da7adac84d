#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "mlz/errors.hpp"

namespace mlz {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Hard cap on operator dimension; requests beyond it raise resource_limit.
inline constexpr int kMaxOperatorDim = 1 << 13;

// Relative tolerance used when validating Hermiticity of inputs.
inline constexpr double kHermTol = 1e-12;

double max_abs(const Matrix& m);
double frobenius_norm(const Matrix& m);

// [A, B] = AB - BA (anti-Hermitian for Hermitian A, B).
Matrix commutator(const Matrix& a, const Matrix& b);
double commutator_norm(const Matrix& a, const Matrix& b);

// A validated Hermitian matrix with an optional label. Construction enforces
// squareness, the dimension cap, finiteness, and Hermiticity to kHermTol
// (relative to the largest entry); the stored matrix is not symmetrized, so
// callers see exactly the bits they provided.
class HermitianOperator {
  public:
    HermitianOperator(Matrix m, std::string label = "");
    explicit HermitianOperator(const RealMatrix& m, std::string label = "");

    int dim() const { return static_cast<int>(mat_.rows()); }
    const Matrix& matrix() const { return mat_; }
    const std::string& label() const { return label_; }

    bool is_real() const;  // all imaginary parts exactly zero

  private:
    Matrix mat_;
    std::string label_;
};

// Eigendecomposition of a Hermitian operator. Eigenvalues ascend;
// eigenvector columns carry a deterministic gauge: the entry of largest
// magnitude (lowest index on ties) is made real and positive, so repeated
// runs on identical input bits reproduce identical output bits.
struct Eigensystem {
    RealVector values;  // ascending
    Matrix vectors;     // column a pairs with values[a]
};

Eigensystem hermitian_eigensystem(const Matrix& m);
Eigensystem hermitian_eigensystem(const HermitianOperator& op);

// Smallest gap between consecutive (sorted) eigenvalues; +inf for dim 1.
double min_eigenvalue_gap(const RealVector& ascending_values);

// Composite spin-boson state space. Basis index = occupation * 2^n_spins +
// spin bits, boson occupation major; spin bit j set means spin j up, so
// index 0 is the bosonic vacuum with every spin down. boson_cutoff is the
// largest representable occupation; 0 means no active boson mode (dimension
// collapses to 2^n_spins).
class SpinBosonSpace {
  public:
    SpinBosonSpace(int n_spins, int boson_cutoff);

    int n_spins() const { return n_spins_; }
    int boson_cutoff() const { return cutoff_; }
    int dim() const { return dim_; }

    int index(int occupation, std::uint32_t spin_bits) const;
    int occupation(int index) const;
    std::uint32_t spin_bits(int index) const;
    bool spin_up(int index, int j) const;

    // Basis indices with occupation == boson_cutoff: the row the canonical
    // commutation check must exclude, and the block truncated families
    // cannot vouch for.
    std::vector<int> truncation_indices() const;

  private:
    int n_spins_;
    int cutoff_;
    int dim_;
};

// Ladder operators are not Hermitian and are returned as raw matrices.
Matrix boson_annihilate(const SpinBosonSpace& space);
Matrix boson_create(const SpinBosonSpace& space);
HermitianOperator boson_number(const SpinBosonSpace& space);

HermitianOperator spin_z(const SpinBosonSpace& space, int j);
Matrix spin_plus(const SpinBosonSpace& space, int j);
Matrix spin_minus(const SpinBosonSpace& space, int j);

// Full spin-spin scalar product s_j . s_k (j != k).
HermitianOperator spin_dot(const SpinBosonSpace& space, int j, int k);

// Residual of [a, a_dagger] = 1 with the truncation row excluded (it is the
// one row a finite cutoff cannot represent).
double canonical_commutation_defect(const SpinBosonSpace& space);

}  // namespace mlz
