#include "mlz/operators.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mlz {

double max_abs(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().maxCoeff();
}

double frobenius_norm(const Matrix& m) { return m.norm(); }

Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }

double commutator_norm(const Matrix& a, const Matrix& b) {
    return commutator(a, b).norm();
}

HermitianOperator::HermitianOperator(Matrix m, std::string label)
    : mat_(std::move(m)), label_(std::move(label)) {
    if (mat_.rows() != mat_.cols() || mat_.rows() < 1)
        throw invalid_input("operator must be square and non-empty, got " +
                            std::to_string(mat_.rows()) + "x" + std::to_string(mat_.cols()));
    if (mat_.rows() > kMaxOperatorDim)
        throw resource_limit("operator dimension " + std::to_string(mat_.rows()) +
                             " exceeds cap " + std::to_string(kMaxOperatorDim));
    if (!mat_.allFinite()) throw invalid_input("operator has non-finite entries");
    const double defect = max_abs(mat_ - mat_.adjoint());
    const double scale = std::max(1.0, max_abs(mat_));
    if (defect > kHermTol * scale) {
        std::ostringstream os;
        os << "operator is not Hermitian: max |H - H^dag| = " << defect
           << " (tolerance " << kHermTol * scale << ")";
        throw invalid_input(os.str());
    }
}

HermitianOperator::HermitianOperator(const RealMatrix& m, std::string label)
    : HermitianOperator(Matrix(m.cast<Complex>()), std::move(label)) {}

bool HermitianOperator::is_real() const {
    return (mat_.imag().array() == 0.0).all();
}

namespace {

// Deterministic eigenvector gauge: rotate each column so its largest-modulus
// entry (lowest index on ties) is real and positive.
void fix_gauge(Matrix& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            const double a = std::abs(vectors(r, c));
            if (a > best) {
                best = a;
                arg = r;
            }
        }
        if (best <= 0.0) continue;
        const Complex phase = vectors(arg, c) / best;
        vectors.col(c) *= std::conj(phase);
        // Pin the anchor entry exactly real so the gauge contract is bitwise.
        vectors(arg, c) = Complex(std::abs(vectors(arg, c)), 0.0);
    }
}

}  // namespace

Eigensystem hermitian_eigensystem(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1)
        throw invalid_input("eigensystem requires a square non-empty matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
    if (solver.info() != Eigen::Success)
        throw numerical_failure("Hermitian eigensolver did not converge (dim " +
                                std::to_string(m.rows()) + ")");
    Eigensystem out{solver.eigenvalues(), solver.eigenvectors()};
    fix_gauge(out.vectors);
    return out;
}

Eigensystem hermitian_eigensystem(const HermitianOperator& op) {
    return hermitian_eigensystem(op.matrix());
}

double min_eigenvalue_gap(const RealVector& v) {
    if (v.size() < 2) return std::numeric_limits<double>::infinity();
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 1; i < v.size(); ++i) gap = std::min(gap, v[i] - v[i - 1]);
    return gap;
}

SpinBosonSpace::SpinBosonSpace(int n_spins, int boson_cutoff)
    : n_spins_(n_spins), cutoff_(boson_cutoff) {
    if (n_spins < 1 || n_spins > 20)
        throw invalid_input("n_spins must be in [1, 20], got " + std::to_string(n_spins));
    if (boson_cutoff < 0)
        throw invalid_input("boson_cutoff must be >= 0, got " + std::to_string(boson_cutoff));
    const std::int64_t d = static_cast<std::int64_t>(boson_cutoff + 1) * (std::int64_t{1} << n_spins);
    if (d > kMaxOperatorDim)
        throw resource_limit("state space dimension " + std::to_string(d) + " exceeds cap " +
                             std::to_string(kMaxOperatorDim));
    dim_ = static_cast<int>(d);
}

int SpinBosonSpace::index(int occupation, std::uint32_t bits) const {
    if (occupation < 0 || occupation > cutoff_ || bits >= (1u << n_spins_))
        throw invalid_input("basis coordinates out of range");
    return occupation * (1 << n_spins_) + static_cast<int>(bits);
}

int SpinBosonSpace::occupation(int index) const { return index >> n_spins_; }

std::uint32_t SpinBosonSpace::spin_bits(int index) const {
    return static_cast<std::uint32_t>(index) & ((1u << n_spins_) - 1u);
}

bool SpinBosonSpace::spin_up(int index, int j) const {
    return (spin_bits(index) >> j) & 1u;
}

std::vector<int> SpinBosonSpace::truncation_indices() const {
    std::vector<int> out;
    const int block = 1 << n_spins_;
    out.reserve(block);
    for (int s = 0; s < block; ++s) out.push_back(cutoff_ * block + s);
    return out;
}

Matrix boson_annihilate(const SpinBosonSpace& space) {
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    const int block = 1 << space.n_spins();
    for (int n = 1; n <= space.boson_cutoff(); ++n)
        for (int s = 0; s < block; ++s)
            m((n - 1) * block + s, n * block + s) = std::sqrt(static_cast<double>(n));
    return m;
}

Matrix boson_create(const SpinBosonSpace& space) {
    return boson_annihilate(space).adjoint();
}

HermitianOperator boson_number(const SpinBosonSpace& space) {
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int i = 0; i < space.dim(); ++i) m(i, i) = static_cast<double>(space.occupation(i));
    return HermitianOperator(std::move(m), "n");
}

namespace {

void check_spin_index(const SpinBosonSpace& space, int j) {
    if (j < 0 || j >= space.n_spins())
        throw invalid_input("spin index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(space.n_spins()) + ")");
}

}  // namespace

HermitianOperator spin_z(const SpinBosonSpace& space, int j) {
    check_spin_index(space, j);
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int i = 0; i < space.dim(); ++i) m(i, i) = space.spin_up(i, j) ? 0.5 : -0.5;
    return HermitianOperator(std::move(m), "sz_" + std::to_string(j));
}

Matrix spin_plus(const SpinBosonSpace& space, int j) {
    check_spin_index(space, j);
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int i = 0; i < space.dim(); ++i)
        if (!space.spin_up(i, j)) m(i | (1 << j), i) = 1.0;
    return m;
}

Matrix spin_minus(const SpinBosonSpace& space, int j) {
    return spin_plus(space, j).adjoint();
}

HermitianOperator spin_dot(const SpinBosonSpace& space, int j, int k) {
    check_spin_index(space, j);
    check_spin_index(space, k);
    if (j == k) throw invalid_input("spin_dot requires two distinct spins");
    const Matrix sp_j = spin_plus(space, j), sm_j = spin_minus(space, j);
    const Matrix sp_k = spin_plus(space, k), sm_k = spin_minus(space, k);
    const Matrix zz = spin_z(space, j).matrix() * spin_z(space, k).matrix();
    Matrix m = 0.5 * (sp_j * sm_k + sm_j * sp_k) + zz;
    return HermitianOperator(std::move(m),
                             "sdot_" + std::to_string(j) + "_" + std::to_string(k));
}

double canonical_commutation_defect(const SpinBosonSpace& space) {
    const Matrix a = boson_annihilate(space);
    Matrix c = commutator(a, Matrix(a.adjoint()));
    c -= Matrix::Identity(space.dim(), space.dim());
    double defect = 0.0;
    for (int i = 0; i < space.dim(); ++i) {
        if (space.occupation(i) == space.boson_cutoff()) continue;
        for (int k = 0; k < space.dim(); ++k) {
            if (space.occupation(k) == space.boson_cutoff()) continue;
            defect = std::max(defect, std::abs(c(i, k)));
        }
    }
    return defect;
}

}  // namespace mlz
