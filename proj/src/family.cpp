#include "mlz/family.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mlz/parallel.hpp"

namespace mlz {

Matrix HamiltonianFamily::partial(int, int, const ParamPoint&) const {
    throw invalid_input("this family does not provide analytic partial derivatives");
}

void HamiltonianFamily::require_point(const ParamPoint& x) const {
    if (static_cast<int>(x.size()) != n_slots())
        throw invalid_input("parameter point has length " + std::to_string(x.size()) +
                            ", family has " + std::to_string(n_slots()) + " slots");
    if (!x.allFinite()) throw invalid_input("parameter point has non-finite entries");
}

void HamiltonianFamily::require_slot(int j) const {
    if (j < 0 || j >= n_slots())
        throw invalid_input("generator index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(n_slots()) + ")");
}

FunctionFamily::FunctionFamily(int dim, int n_slots, Evaluator eval, Partial partial, bool real,
                               std::vector<int> unreliable)
    : dim_(dim), slots_(n_slots), eval_(std::move(eval)), partial_(std::move(partial)),
      real_(real), unreliable_(std::move(unreliable)) {
    if (dim_ < 1) throw invalid_input("family dimension must be positive");
    if (slots_ < 1) throw invalid_input("family needs at least one parameter slot");
    if (!eval_) throw invalid_input("family evaluator must be callable");
}

HermitianOperator FunctionFamily::generator(int j, const ParamPoint& x) const {
    require_slot(j);
    require_point(x);
    return HermitianOperator(eval_(j, x));
}

Matrix FunctionFamily::partial(int j, int k, const ParamPoint& x) const {
    if (!partial_) return HamiltonianFamily::partial(j, k, x);
    require_slot(j);
    require_slot(k);
    require_point(x);
    return partial_(j, k, x);
}

const char* to_string(DerivativeMode mode) {
    return mode == DerivativeMode::Analytic ? "analytic" : "central";
}

namespace {

Matrix central_partial(const HamiltonianFamily& family, int j, int k, const ParamPoint& x,
                       double h) {
    ParamPoint xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    return (family.generator(j, xp).matrix() - family.generator(j, xm).matrix()) / (2.0 * h);
}

// Step for differentiating along slot k. Curl residuals pass the partner
// slot as well: a common step keeps the two mixed-partial truncation errors
// identical so they cancel in the difference.
double central_step(const VerifyOptions& opts, const ParamPoint& x, int k, int paired_slot) {
    if (opts.fd_step_scale <= 0.0) throw invalid_input("fd_step_scale must be positive");
    double scale = std::max(1.0, std::abs(x[k]));
    if (paired_slot >= 0) scale = std::max(scale, std::abs(x[paired_slot]));
    return opts.fd_step_scale * scale;
}

}  // namespace

Matrix family_partial(const HamiltonianFamily& family, int j, int k, const ParamPoint& x,
                      const VerifyOptions& opts) {
    if (opts.mode == DerivativeMode::Analytic) {
        if (!family.has_analytic_partials())
            throw invalid_input(
                "analytic derivative mode requested but the family has no analytic partials");
        return family.partial(j, k, x);
    }
    return central_partial(family, j, k, x, central_step(opts, x, k, -1));
}

namespace {

double masked_norm(Matrix m, const std::vector<int>& excluded) {
    for (int i : excluded) {
        m.row(i).setZero();
        m.col(i).setZero();
    }
    return m.norm();
}

// dH_k/dx_j - dH_j/dx_k with a shared finite-difference step in central mode.
Matrix curl_matrix(const HamiltonianFamily& family, int j, int k, const ParamPoint& x,
                   const VerifyOptions& opts) {
    if (opts.mode == DerivativeMode::Analytic)
        return family_partial(family, k, j, x, opts) - family_partial(family, j, k, x, opts);
    const double h = central_step(opts, x, j, k);
    return central_partial(family, k, j, x, h) - central_partial(family, j, k, x, h);
}

}  // namespace

double check_commutation(const HamiltonianFamily& family, const ParamPoint& x, int j, int k) {
    const Matrix hj = family.generator(j, x).matrix();
    const Matrix hk = family.generator(k, x).matrix();
    return masked_norm(commutator(hj, hk), family.unreliable_indices());
}

double check_curl(const HamiltonianFamily& family, const ParamPoint& x, int j, int k,
                  const VerifyOptions& opts) {
    return masked_norm(curl_matrix(family, j, k, x, opts), family.unreliable_indices());
}

CurvatureResidual curvature_residual(const HamiltonianFamily& family, const ParamPoint& x,
                                     int j, int k, const VerifyOptions& opts) {
    const auto excluded = family.unreliable_indices();
    const Matrix hj = family.generator(j, x).matrix();
    const Matrix hk = family.generator(k, x).matrix();
    const Matrix comm = commutator(hk, hj);
    const Matrix curl = curl_matrix(family, j, k, x, opts);
    CurvatureResidual out;
    out.commutator_norm = masked_norm(comm, excluded);
    out.curl_norm = masked_norm(curl, excluded);
    out.full_norm = masked_norm(curl - Complex(0.0, 1.0) * comm, excluded);
    return out;
}

std::vector<ParamPoint> ParamGrid::points() const {
    const int slots = static_cast<int>(counts.size());
    if (slots < 1 || mins.size() != slots || maxs.size() != slots)
        throw invalid_input("grid needs matching mins/maxs/counts of positive length");
    std::int64_t total = 1;
    for (int c : counts) {
        if (c < 1) throw invalid_input("grid counts must be >= 1");
        total *= c;
        if (total > 1000000) throw resource_limit("grid exceeds 1e6 points");
    }
    for (int s = 0; s < slots; ++s)
        if (maxs[s] < mins[s]) throw invalid_input("grid max below min in slot " + std::to_string(s));
    std::vector<ParamPoint> pts;
    pts.reserve(static_cast<size_t>(total));
    std::vector<int> idx(slots, 0);
    for (std::int64_t p = 0; p < total; ++p) {
        ParamPoint x(slots);
        for (int s = 0; s < slots; ++s)
            x[s] = counts[s] == 1 ? mins[s]
                                  : mins[s] + (maxs[s] - mins[s]) * idx[s] / (counts[s] - 1);
        pts.push_back(std::move(x));
        for (int s = slots - 1; s >= 0; --s) {  // last slot fastest
            if (++idx[s] < counts[s]) break;
            idx[s] = 0;
        }
    }
    return pts;
}

FamilyScanReport scan_family(const HamiltonianFamily& family,
                             const std::vector<ParamPoint>& points, const VerifyOptions& opts) {
    const int slots = family.n_slots();
    std::vector<std::pair<int, int>> pairs;
    for (int j = 0; j < slots; ++j)
        for (int k = j + 1; k < slots; ++k) pairs.emplace_back(j, k);
    if (pairs.empty()) {
        // single-generator family: the flatness conditions are vacuous
        FamilyScanReport empty;
        empty.mode = opts.mode;
        return empty;
    }

    FamilyScanReport report;
    report.mode = opts.mode;
    report.rows.resize(points.size() * pairs.size());
    parallel_for(static_cast<int>(points.size()), opts.threads, [&](int p) {
        for (size_t q = 0; q < pairs.size(); ++q) {
            ScanRow& row = report.rows[p * pairs.size() + q];
            row.x = points[p];
            row.j = pairs[q].first;
            row.k = pairs[q].second;
            row.residual = curvature_residual(family, points[p], row.j, row.k, opts);
        }
    });
    for (size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i].residual;
        report.worst_commutator = std::max(report.worst_commutator, r.commutator_norm);
        report.worst_curl = std::max(report.worst_curl, r.curl_norm);
        if (r.full_norm > report.worst_full) {
            report.worst_full = r.full_norm;
            report.worst_row = static_cast<int>(i);
        }
    }
    return report;
}

namespace {

class RestrictedFamily : public HamiltonianFamily {
  public:
    RestrictedFamily(std::shared_ptr<const HamiltonianFamily> base, std::vector<int> indices)
        : base_(std::move(base)), indices_(std::move(indices)) {
        if (!base_) throw invalid_input("restrict_family: null family");
        if (indices_.empty()) throw invalid_input("restrict_family: empty index set");
        std::set<int> seen;
        for (int i : indices_) {
            if (i < 0 || i >= base_->dim())
                throw invalid_input("restrict_family: index " + std::to_string(i) +
                                    " out of range");
            if (!seen.insert(i).second)
                throw invalid_input("restrict_family: duplicate index " + std::to_string(i));
        }
        const auto bad = base_->unreliable_indices();
        for (size_t p = 0; p < indices_.size(); ++p)
            if (std::find(bad.begin(), bad.end(), indices_[p]) != bad.end())
                unreliable_.push_back(static_cast<int>(p));
    }

    int dim() const override { return static_cast<int>(indices_.size()); }
    int n_slots() const override { return base_->n_slots(); }
    bool real_valued() const override { return base_->real_valued(); }
    bool has_analytic_partials() const override { return base_->has_analytic_partials(); }
    std::vector<int> unreliable_indices() const override { return unreliable_; }

    HermitianOperator generator(int j, const ParamPoint& x) const override {
        HermitianOperator full = base_->generator(j, x);
        return HermitianOperator(restrict(full.matrix(), true), full.label());
    }

    Matrix partial(int j, int k, const ParamPoint& x) const override {
        return restrict(base_->partial(j, k, x), true);
    }

  private:
    // Cut the block; when `verify`, insist the subspace is invariant.
    Matrix restrict(const Matrix& full, bool verify) const {
        const int m = dim();
        Matrix block(m, m);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) block(r, c) = full(indices_[r], indices_[c]);
        if (verify) {
            double leak = 0.0;
            for (int c = 0; c < m; ++c) {
                for (int r = 0; r < full.rows(); ++r) {
                    if (std::find(indices_.begin(), indices_.end(), r) != indices_.end())
                        continue;
                    leak = std::max(leak, std::abs(full(r, indices_[c])));
                }
            }
            if (leak > 1e-10 * std::max(1.0, max_abs(full))) {
                std::ostringstream os;
                os << "restricted subspace is not invariant: off-block amplitude " << leak;
                throw numerical_failure(os.str());
            }
        }
        return block;
    }

    std::shared_ptr<const HamiltonianFamily> base_;
    std::vector<int> indices_;
    std::vector<int> unreliable_;
};

}  // namespace

std::shared_ptr<HamiltonianFamily> restrict_family(
    std::shared_ptr<const HamiltonianFamily> family, std::vector<int> indices) {
    return std::make_shared<RestrictedFamily>(std::move(family), std::move(indices));
}

}  // namespace mlz
