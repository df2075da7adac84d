#pragma once

// Independent verification routes used by the test suite. Everything here is
// deliberately written against different math than the library: eigenvalues
// via characteristic polynomial + simultaneous root iteration, commutators
// via naive index loops, derivatives via explicit stencils. Slow is fine.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

// Characteristic polynomial coefficients of A (monic, ascending order:
// p(x) = c[0] + c[1] x + ... + c[n-1] x^{n-1} + x^n) via the
// trace recurrence on powers of A.
inline std::vector<Complex> char_poly(const Matrix& a) {
    const int n = static_cast<int>(a.rows());
    std::vector<Complex> c(n + 1);
    c[n] = 1.0;
    Matrix m = Matrix::Zero(n, n);
    for (int k = 1; k <= n; ++k) {
        m = a * (m + c[n - k + 1] * Matrix::Identity(n, n));
        c[n - k] = -m.trace() / static_cast<double>(k);
    }
    return c;
}

// All roots of a monic polynomial by Durand-Kerner iteration.
inline std::vector<Complex> poly_roots(const std::vector<Complex>& coeff) {
    const int n = static_cast<int>(coeff.size()) - 1;
    if (n < 1) return {};
    double radius = 1.0;
    for (int i = 0; i < n; ++i) radius = std::max(radius, std::abs(coeff[i]));
    radius = 1.0 + radius;
    auto eval = [&](Complex x) {
        Complex p = coeff[n];
        for (int i = n - 1; i >= 0; --i) p = p * x + coeff[i];
        return p;
    };
    std::vector<Complex> r(n);
    const Complex seed(0.4, 0.9);
    Complex w = 1.0;
    for (int i = 0; i < n; ++i) {
        w *= seed;
        r[i] = radius * w;
    }
    for (int iter = 0; iter < 500; ++iter) {
        double moved = 0.0;
        for (int i = 0; i < n; ++i) {
            Complex denom = 1.0;
            for (int j = 0; j < n; ++j)
                if (j != i) denom *= (r[i] - r[j]);
            if (std::abs(denom) == 0.0) denom = 1e-300;
            const Complex step = eval(r[i]) / denom;
            r[i] -= step;
            moved = std::max(moved, std::abs(step));
        }
        if (moved < 1e-14 * radius) break;
    }
    return r;
}

// Eigenvalues of a Hermitian matrix through the characteristic polynomial,
// sorted ascending. Accurate to roughly 1e-9 for small well-scaled matrices;
// an entirely different route than any QR/QL-based solver.
inline std::vector<double> char_poly_eigenvalues(const Matrix& a) {
    auto roots = poly_roots(char_poly(a));
    std::vector<double> vals;
    vals.reserve(roots.size());
    for (const auto& r : roots) vals.push_back(r.real());
    std::sort(vals.begin(), vals.end());
    return vals;
}

// [A, B] via explicit index loops.
inline Matrix naive_commutator(const Matrix& a, const Matrix& b) {
    const int n = static_cast<int>(a.rows());
    Matrix c = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Complex s = 0.0;
            for (int k = 0; k < n; ++k) s += a(i, k) * b(k, j) - b(i, k) * a(k, j);
            c(i, j) = s;
        }
    return c;
}

inline double frob(const Matrix& m) {
    double s = 0.0;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) s += std::norm(m(i, j));
    return std::sqrt(s);
}

// Random Hermitian matrix with entries of order 1, reproducible by seed.
inline Matrix random_hermitian(int n, std::uint64_t seed, bool real_only = false) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        m(i, i) = u(gen);
        for (int j = i + 1; j < n; ++j) {
            const double re = u(gen);
            const double im = real_only ? 0.0 : u(gen);
            m(i, j) = Complex(re, im);
            m(j, i) = std::conj(m(i, j));
        }
    }
    return m;
}

}  // namespace oracle
