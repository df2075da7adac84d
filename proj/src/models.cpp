#include "mlz/models.hpp"

#include <cmath>
#include <string>

namespace mlz {

namespace {

void require_finite(double value, const char* name) {
    if (!std::isfinite(value))
        throw invalid_input(std::string(name) + " must be finite");
}

}  // namespace

// ---------------------------------------------------------------------------
// four-state model
// ---------------------------------------------------------------------------

void FourStateParams::validate() const {
    require_finite(b1, "b1");
    require_finite(b2, "b2");
    require_finite(g, "g");
    require_finite(gamma, "gamma");
    require_finite(e0, "e0");
    require_finite(v, "v");
    if (!(b1 > b2 && b2 > 0.0))
        throw invalid_input("four-state model requires slope ordering b1 > b2 > 0");
    if (v < 0.0) throw invalid_input("sweep rate v must be non-negative");
}

HermitianOperator four_state_time_generator(const FourStateParams& p, double t, double e) {
    p.validate();
    RealMatrix h(4, 4);
    h << p.b1 * t + e, 0.0, p.g, -p.gamma,
         0.0, -p.b1 * t + e, p.gamma, p.g,
         p.g, p.gamma, p.b2 * t, 0.0,
         -p.gamma, p.g, 0.0, -p.b2 * t;
    return HermitianOperator(h, "time");
}

HermitianOperator four_state_offset_generator(const FourStateParams& p, double t, double e) {
    p.validate();
    const double d = p.b1 * p.b1 - p.b2 * p.b2;
    const double gs = p.g / (p.b1 - p.b2);
    const double cs = -p.gamma / (p.b1 + p.b2);
    RealMatrix h(4, 4);
    h << t + p.b1 * e / d, 0.0, gs, cs,
         0.0, t - p.b1 * e / d, cs, -gs,
         gs, cs, -p.b2 * e / d, 0.0,
         cs, -gs, 0.0, p.b2 * e / d;
    return HermitianOperator(h, "offset");
}

HermitianOperator four_state_sweep_hamiltonian(const FourStateParams& p, double tau) {
    p.validate();
    const double x = p.v / (p.b1 - p.b2);
    const double y = p.v / (p.b1 + p.b2);
    const double xy = x * y;
    // xy / v has the finite limit v / (b1^2 - b2^2) at v = 0
    const double xy_over_v = p.v / ((p.b1 - p.b2) * (p.b1 + p.b2));
    const double beta1 = 2.0 * p.v + p.b1 * (1.0 + xy);
    const double beta2 = 2.0 * p.v - p.b1 * (1.0 + xy);
    const double beta3 = p.b2 * (1.0 - xy);
    const double beta4 = -p.b2 * (1.0 - xy);
    const double e1 = p.e0 * (1.0 + p.b1 * xy_over_v);
    const double e2 = p.e0 * (1.0 - p.b1 * xy_over_v);
    const double e3 = -p.e0 * p.b2 * xy_over_v;
    const double e4 = p.e0 * p.b2 * xy_over_v;
    RealMatrix h(4, 4);
    h << beta1 * tau + e1, 0.0, p.g * (1.0 + x), -p.gamma * (1.0 + y),
         0.0, beta2 * tau + e2, p.gamma * (1.0 - y), p.g * (1.0 - x),
         p.g * (1.0 + x), p.gamma * (1.0 - y), beta3 * tau + e3, 0.0,
         -p.gamma * (1.0 + y), p.g * (1.0 - x), 0.0, beta4 * tau + e4;
    return HermitianOperator(h, "sweep");
}

RealVector four_state_diabatic_levels(const FourStateParams& p, double t, double e) {
    RealVector levels(4);
    levels << p.b1 * t + e, -p.b1 * t + e, p.b2 * t, -p.b2 * t;
    return levels;
}

namespace {

class FourStateFamily : public HamiltonianFamily {
  public:
    explicit FourStateFamily(const FourStateParams& p) : p_(p) { p_.validate(); }

    int dim() const override { return 4; }
    int n_slots() const override { return 2; }
    bool real_valued() const override { return true; }
    bool has_analytic_partials() const override { return true; }

    HermitianOperator generator(int j, const ParamPoint& x) const override {
        require_slot(j);
        require_point(x);
        return j == 0 ? four_state_time_generator(p_, x[0], x[1])
                      : four_state_offset_generator(p_, x[0], x[1]);
    }

    Matrix partial(int j, int k, const ParamPoint& x) const override {
        require_slot(j);
        require_slot(k);
        require_point(x);
        const double d = p_.b1 * p_.b1 - p_.b2 * p_.b2;
        RealVector diag(4);
        if (j == 0 && k == 0)
            diag << p_.b1, -p_.b1, p_.b2, -p_.b2;
        else if (j == 1 && k == 1)
            diag << p_.b1 / d, -p_.b1 / d, -p_.b2 / d, p_.b2 / d;
        else
            diag << 1.0, 1.0, 0.0, 0.0;  // both mixed partials: the curl is zero
        return RealMatrix(diag.asDiagonal()).cast<Complex>();
    }

  private:
    FourStateParams p_;
};

}  // namespace

std::shared_ptr<HamiltonianFamily> four_state_family(const FourStateParams& p) {
    return std::make_shared<FourStateFamily>(p);
}

std::vector<CrossingLine> four_state_crossing_lines(const FourStateParams& p) {
    p.validate();
    return {
        { 0, 2, -(p.b1 - p.b2) },
        { 1, 3, p.b1 - p.b2 },
        { 0, 3, -(p.b1 + p.b2) },
        { 1, 2, p.b1 + p.b2 },
    };
}

// ---------------------------------------------------------------------------
// two-state Landau-Zener
// ---------------------------------------------------------------------------

std::shared_ptr<HamiltonianFamily> lz_two_state_family(double slope_diff, double coupling) {
    require_finite(slope_diff, "slope_diff");
    require_finite(coupling, "coupling");
    if (slope_diff == 0.0) throw invalid_input("two-state model needs a nonzero relative slope");
    auto eval = [slope_diff, coupling](int, const ParamPoint& x) {
        RealMatrix h(2, 2);
        h << 0.5 * slope_diff * x[0], coupling, coupling, -0.5 * slope_diff * x[0];
        return Matrix(h.cast<Complex>());
    };
    auto partial = [slope_diff](int, int, const ParamPoint&) {
        RealMatrix d(2, 2);
        d << 0.5 * slope_diff, 0.0, 0.0, -0.5 * slope_diff;
        return Matrix(d.cast<Complex>());
    };
    return std::make_shared<FunctionFamily>(2, 1, std::move(eval), std::move(partial), true);
}

// ---------------------------------------------------------------------------
// shared spin-model plumbing
// ---------------------------------------------------------------------------

namespace {

void require_distinct_epsilons(const std::vector<double>& eps) {
    for (size_t a = 0; a < eps.size(); ++a)
        for (size_t b = a + 1; b < eps.size(); ++b)
            if (std::abs(eps[a] - eps[b]) <= 1e-9)
                throw invalid_input("epsilon values " + std::to_string(a) + " and " +
                                    std::to_string(b) + " are not distinct");
}

// Base for the spin families: caches the fixed operator content so that
// generator evaluation is a linear combination.
class SpinFamilyBase : public HamiltonianFamily {
  public:
    SpinFamilyBase(SpinBosonSpace space) : space_(std::move(space)) {
        const int n = space_.n_spins();
        sz_.reserve(n);
        for (int j = 0; j < n; ++j) sz_.push_back(spin_z(space_, j).matrix());
        sdot_.assign(n * n, Matrix());
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                if (j != k) sdot_[j * n + k] = spin_dot(space_, j, k).matrix();
    }

    int dim() const override { return space_.dim(); }
    bool real_valued() const override { return true; }
    bool has_analytic_partials() const override { return true; }

    const SpinBosonSpace& space() const { return space_; }

  protected:
    // Epsilon slots start at 1; they must stay pairwise distinct wherever
    // the family is evaluated.
    void require_epsilons_distinct(const ParamPoint& x) const {
        const int n = space_.n_spins();
        for (int a = 1; a <= n; ++a)
            for (int b = a + 1; b <= n; ++b)
                if (std::abs(x[a] - x[b]) <= 1e-9)
                    throw invalid_input("family evaluated at coincident epsilon slots " +
                                        std::to_string(a) + " and " + std::to_string(b));
    }

    SpinBosonSpace space_;
    std::vector<Matrix> sz_;
    std::vector<Matrix> sdot_;  // j * n + k, empty on the diagonal
};

class TavisCummingsFamily : public SpinFamilyBase {
  public:
    explicit TavisCummingsFamily(const TCParams& p)
        : SpinFamilyBase(SpinBosonSpace(p.n_spins, p.boson_cutoff)), g_(p.g) {
        number_ = boson_number(space_).matrix();
        const Matrix create = boson_create(space_);
        const Matrix destroy = boson_annihilate(space_);
        const int n = space_.n_spins();
        coupling_.reserve(n);
        Matrix total = Matrix::Zero(dim(), dim());
        for (int j = 0; j < n; ++j) {
            coupling_.push_back(create * spin_minus(space_, j) + destroy * spin_plus(space_, j));
            total += coupling_.back();
        }
        coupling_total_ = std::move(total);
        unreliable_ = space_.truncation_indices();
    }

    int n_slots() const override { return space_.n_spins() + 1; }
    std::vector<int> unreliable_indices() const override { return unreliable_; }

    HermitianOperator generator(int j, const ParamPoint& x) const override {
        require_slot(j);
        require_point(x);
        require_epsilons_distinct(x);
        const int n = space_.n_spins();
        const double omega = x[0];
        Matrix h;
        if (j == 0) {
            h = -omega * number_ + g_ * coupling_total_;
            for (int k = 0; k < n; ++k) h += x[k + 1] * sz_[k];
            return HermitianOperator(std::move(h), "tc-drive");
        }
        const int s = j - 1;
        h = (x[j] + omega) * sz_[s] + g_ * coupling_[s];
        for (int k = 0; k < n; ++k)
            if (k != s) h += (2.0 * g_ * g_ / (x[j] - x[k + 1])) * sdot_[s * n + k];
        return HermitianOperator(std::move(h), "tc-partner-" + std::to_string(j));
    }

    Matrix partial(int j, int k, const ParamPoint& x) const override {
        require_slot(j);
        require_slot(k);
        require_point(x);
        require_epsilons_distinct(x);
        const int n = space_.n_spins();
        if (j == 0) return k == 0 ? Matrix(-number_) : sz_[k - 1];
        const int s = j - 1;
        if (k == 0) return sz_[s];
        if (k != j) {
            const double de = x[j] - x[k];
            return Matrix((2.0 * g_ * g_ / (de * de)) * sdot_[s * n + (k - 1)]);
        }
        Matrix d = sz_[s];
        for (int m = 0; m < n; ++m) {
            if (m == s) continue;
            const double de = x[j] - x[m + 1];
            d -= (2.0 * g_ * g_ / (de * de)) * sdot_[s * n + m];
        }
        return d;
    }

  private:
    double g_;
    Matrix number_;
    Matrix coupling_total_;
    std::vector<Matrix> coupling_;
    std::vector<int> unreliable_;
};

class GaudinFamily : public SpinFamilyBase {
  public:
    explicit GaudinFamily(const GaudinParams& p)
        : SpinFamilyBase(SpinBosonSpace(p.n_spins, 0)) {
        const int n = space_.n_spins();
        Matrix splus_total = Matrix::Zero(dim(), dim());
        Matrix sminus_total = Matrix::Zero(dim(), dim());
        for (int j = 0; j < n; ++j) {
            splus_total += spin_plus(space_, j);
            sminus_total += spin_minus(space_, j);
        }
        pair_hopping_ = splus_total * sminus_total;  // sum_{j,k} s_j^+ s_k^-
    }

    int n_slots() const override { return space_.n_spins() + 1; }

    HermitianOperator generator(int j, const ParamPoint& x) const override {
        require_slot(j);
        require_point(x);
        require_epsilons_distinct(x);
        const int n = space_.n_spins();
        if (j == 0) {
            const double b = require_field(x);
            Matrix h = (-0.5 / b) * pair_hopping_;
            for (int k = 0; k < n; ++k) h += 2.0 * x[k + 1] * sz_[k];
            return HermitianOperator(std::move(h), "bcs");
        }
        const int s = j - 1;
        Matrix h = 2.0 * x[0] * sz_[s];
        for (int k = 0; k < n; ++k)
            if (k != s) h -= (1.0 / (x[j] - x[k + 1])) * sdot_[s * n + k];
        return HermitianOperator(std::move(h), "gaudin-" + std::to_string(j));
    }

    Matrix partial(int j, int k, const ParamPoint& x) const override {
        require_slot(j);
        require_slot(k);
        require_point(x);
        require_epsilons_distinct(x);
        const int n = space_.n_spins();
        if (j == 0) {
            if (k == 0) {
                const double b = require_field(x);
                return Matrix((0.5 / (b * b)) * pair_hopping_);
            }
            return Matrix(2.0 * sz_[k - 1]);
        }
        const int s = j - 1;
        if (k == 0) return Matrix(2.0 * sz_[s]);
        if (k != j) {
            const double de = x[j] - x[k];
            return Matrix((-1.0 / (de * de)) * sdot_[s * n + (k - 1)]);
        }
        Matrix d = Matrix::Zero(dim(), dim());
        for (int m = 0; m < n; ++m) {
            if (m == s) continue;
            const double de = x[j] - x[m + 1];
            d += (1.0 / (de * de)) * sdot_[s * n + m];
        }
        return d;
    }

  private:
    static double require_field(const ParamPoint& x) {
        if (std::abs(x[0]) < 1e-12)
            throw invalid_input("BCS coupling 1/(2B) undefined at B = 0");
        return x[0];
    }

    Matrix pair_hopping_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Tavis-Cummings
// ---------------------------------------------------------------------------

void TCParams::validate() const {
    if (n_spins < 1) throw invalid_input("need at least one spin");
    if (static_cast<int>(epsilons.size()) != n_spins)
        throw invalid_input("expected " + std::to_string(n_spins) + " epsilon values, got " +
                            std::to_string(epsilons.size()));
    for (double e : epsilons) require_finite(e, "epsilon");
    require_finite(g, "g");
    for (int j = 0; j + 1 < n_spins; ++j)
        if (!(epsilons[j] > epsilons[j + 1] + 1e-9))
            throw invalid_input("epsilons must be strictly decreasing");
    if (boson_cutoff < 1) throw invalid_input("boson cutoff must be at least 1");
}

std::shared_ptr<HamiltonianFamily> tavis_cummings_family(const TCParams& p) {
    p.validate();
    return std::make_shared<TavisCummingsFamily>(p);
}

SpinBosonSpace tavis_cummings_space(const TCParams& p) {
    p.validate();
    return SpinBosonSpace(p.n_spins, p.boson_cutoff);
}

ParamPoint tavis_cummings_point(const TCParams& p, double omega) {
    p.validate();
    require_finite(omega, "omega");
    ParamPoint x(p.n_spins + 1);
    x[0] = omega;
    for (int j = 0; j < p.n_spins; ++j) x[j + 1] = p.epsilons[j];
    return x;
}

std::vector<int> quanta_sector_indices(const SpinBosonSpace& space, int quanta) {
    if (quanta < 0) throw invalid_input("quanta must be non-negative");
    std::vector<int> indices;
    for (int i = 0; i < space.dim(); ++i) {
        int ups = 0;
        for (int j = 0; j < space.n_spins(); ++j) ups += space.spin_up(i, j) ? 1 : 0;
        if (space.occupation(i) + ups == quanta) indices.push_back(i);
    }
    return indices;
}

// ---------------------------------------------------------------------------
// Gaudin
// ---------------------------------------------------------------------------

void GaudinParams::validate() const {
    if (n_spins < 2) throw invalid_input("Gaudin family needs at least two spins");
    if (static_cast<int>(epsilons.size()) != n_spins)
        throw invalid_input("expected " + std::to_string(n_spins) + " epsilon values, got " +
                            std::to_string(epsilons.size()));
    for (double e : epsilons) require_finite(e, "epsilon");
    require_finite(B, "B");
    require_distinct_epsilons(epsilons);
    if (std::abs(B) < 1e-12) throw invalid_input("BCS coupling 1/(2B) undefined at B = 0");
}

std::shared_ptr<HamiltonianFamily> gaudin_family(const GaudinParams& p) {
    p.validate();
    return std::make_shared<GaudinFamily>(p);
}

SpinBosonSpace gaudin_space(const GaudinParams& p) {
    p.validate();
    return SpinBosonSpace(p.n_spins, 0);
}

ParamPoint gaudin_point(const GaudinParams& p) {
    p.validate();
    ParamPoint x(p.n_spins + 1);
    x[0] = p.B;
    for (int j = 0; j < p.n_spins; ++j) x[j + 1] = p.epsilons[j];
    return x;
}

}  // namespace mlz
