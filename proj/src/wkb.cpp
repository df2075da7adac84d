#include "mlz/wkb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>
#include <utility>

#include "mlz/errors.hpp"
#include "mlz/models.hpp"
#include "mlz/parallel.hpp"

namespace mlz {

namespace {

constexpr double kGapFloor = 1e-8;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string point_string(const ParamPoint& x) {
    std::ostringstream os;
    os << "(";
    for (int j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
    os << ")";
    return os.str();
}

double smallest_gap(const RealVector& sorted_values) {
    double gap = std::numeric_limits<double>::infinity();
    for (int a = 0; a + 1 < sorted_values.size(); ++a)
        gap = std::min(gap, sorted_values[a + 1] - sorted_values[a]);
    return gap;
}

}  // namespace

AdiabaticFrame adiabatic_frame(const HamiltonianFamily& family, const ParamPoint& x) {
    const HermitianOperator h0 = family.generator(0, x);
    const Eigensystem sys = hermitian_eigensystem(h0);
    const int n = h0.dim();

    if (n > 1) {
        const double gap = smallest_gap(sys.values);
        if (!(gap > kGapFloor)) {
            std::ostringstream os;
            os << "adiabatic frame undefined at " << point_string(x)
               << ": smallest spectral gap " << gap << " is below " << kGapFloor;
            throw numerical_failure(os.str());
        }
    }

    RealMatrix momenta(family.n_slots(), n);
    for (int j = 0; j < family.n_slots(); ++j) {
        const Matrix hj = family.generator(j, x).matrix();
        const Matrix in_frame = sys.vectors.adjoint() * hj * sys.vectors;
        const double scale = std::max(1.0, max_abs(hj));
        const Matrix off = in_frame - Matrix(in_frame.diagonal().asDiagonal());
        const double worst = off.cwiseAbs().maxCoeff();
        if (worst > 1e-9 * scale) {
            std::ostringstream os;
            os << "generator " << j << " is not diagonal in the eigenframe of generator 0 at "
               << point_string(x) << " (off-diagonal " << worst
               << "): the family does not commute here";
            throw invalid_input(os.str());
        }
        momenta.row(j) = -in_frame.diagonal().real();
    }
    return AdiabaticFrame{x, sys.values, sys.vectors, std::move(momenta), RealVector::Zero(n)};
}

std::vector<int> diabatic_assignment(const Matrix& basis) {
    const int n = static_cast<int>(basis.rows());
    if (basis.cols() != n || n < 1) throw invalid_input("assignment needs a square basis");
    std::vector<std::tuple<double, int, int>> weights;  // (-overlap, level, diabatic)
    weights.reserve(n * n);
    for (int a = 0; a < n; ++a)
        for (int m = 0; m < n; ++m) weights.emplace_back(-std::norm(basis(m, a)), a, m);
    std::sort(weights.begin(), weights.end());
    std::vector<int> out(n, -1);
    std::vector<char> taken(n, 0);
    int assigned = 0;
    for (const auto& [neg, a, m] : weights) {
        if (out[a] >= 0 || taken[m]) continue;
        out[a] = m;
        taken[m] = 1;
        if (++assigned == n) break;
    }
    return out;
}

CouplingField coupling_field(const HamiltonianFamily& family, const ParamPoint& x) {
    const AdiabaticFrame frame = adiabatic_frame(family, x);
    const int n = static_cast<int>(frame.energies.size());
    const int slots = family.n_slots();

    VerifyOptions derivative;
    derivative.mode =
        family.has_analytic_partials() ? DerivativeMode::Analytic : DerivativeMode::Central;

    CouplingField field;
    field.x = x;
    field.b.reserve(slots);
    field.lambda.reserve(slots);
    for (int j = 0; j < slots; ++j) {
        const Matrix dh = family_partial(family, 0, j, x, derivative);
        const Matrix g = frame.basis.adjoint() * dh * frame.basis;
        Matrix bj = Matrix::Zero(n, n);
        RealMatrix lj = RealMatrix::Zero(n, n);
        for (int a = 0; a < n; ++a) {
            for (int c = 0; c < n; ++c) {
                if (a == c) continue;
                bj(a, c) = g(a, c) / (frame.energies[c] - frame.energies[a]);
                lj(a, c) = frame.momenta(j, a) - frame.momenta(j, c);
            }
        }
        const double asym = (bj + bj.adjoint()).cwiseAbs().maxCoeff();
        if (asym > 1e-9 * std::max(1.0, max_abs(bj)))
            throw numerical_failure("non-adiabatic connection lost anti-Hermiticity (defect " +
                                    std::to_string(asym) + ")");
        field.b.push_back(std::move(bj));
        field.lambda.push_back(std::move(lj));
    }

    field.collinearity = 0.0;
    for (int j = 0; j < slots; ++j)
        for (int k = j + 1; k < slots; ++k)
            for (int a = 0; a < n; ++a)
                for (int c = 0; c < n; ++c) {
                    if (a == c) continue;
                    const Complex r = field.lambda[j](a, c) * field.b[k](a, c) -
                                      field.lambda[k](a, c) * field.b[j](a, c);
                    field.collinearity = std::max(field.collinearity, std::abs(r));
                }

    field.kappa = RealMatrix::Constant(n, n, kNaN);
    for (int a = 0; a < n; ++a) {
        for (int c = a + 1; c < n; ++c) {
            int best = -1;
            double best_lambda = kGapFloor * 1e-2;  // 1e-10: below this the ratio is undefined
            for (int j = 0; j < slots; ++j) {
                const double l = std::abs(field.lambda[j](a, c));
                if (l > best_lambda) {
                    best_lambda = l;
                    best = j;
                }
            }
            if (best < 0) {
                field.undefined_pairs.emplace_back(a, c);
                continue;
            }
            const double value =
                std::real(field.b[best](a, c) / field.lambda[best](a, c));
            field.kappa(a, c) = value;
            field.kappa(c, a) = value;
        }
    }
    return field;
}

double momentum_curl_check(const HamiltonianFamily& family, const ParamPoint& x, int j, int k,
                           int a, double step_scale) {
    if (j < 0 || j >= family.n_slots() || k < 0 || k >= family.n_slots())
        throw invalid_input("slot index out of range");
    if (a < 0 || a >= family.dim()) throw invalid_input("level index out of range");
    if (!(step_scale > 0.0) || !std::isfinite(step_scale))
        throw invalid_input("step scale must be positive and finite");
    if (j == k) return 0.0;

    const AdiabaticFrame center = adiabatic_frame(family, x);
    const double h = step_scale * std::max({1.0, std::abs(x[j]), std::abs(x[k])});

    const auto frame_at = [&](int slot, double offset) {
        ParamPoint p = x;
        p[slot] += offset;
        AdiabaticFrame f = adiabatic_frame(family, p);
        // a reordering of the branches inside the stencil invalidates the
        // differences; require each level to track the center frame
        for (int lvl = 0; lvl < family.dim(); ++lvl) {
            const Complex overlap = (center.basis.col(lvl).adjoint() * f.basis.col(lvl))(0, 0);
            if (std::norm(overlap) < 0.5)
                throw numerical_failure(
                    "level crossing inside the finite-difference stencil at " + point_string(p));
        }
        return f;
    };

    const double d_j_pk =
        (frame_at(j, h).momenta(k, a) - frame_at(j, -h).momenta(k, a)) / (2.0 * h);
    const double d_k_pj =
        (frame_at(k, h).momenta(j, a) - frame_at(k, -h).momenta(j, a)) / (2.0 * h);
    return std::abs(d_j_pk - d_k_pj);
}

namespace {

// |kappa| of the diabatic pair (a, b) at one point; NaN when the frame is
// degenerate or the ratio is undefined there.
double diabatic_kappa(const HamiltonianFamily& family, const ParamPoint& p, int a, int b) {
    try {
        const AdiabaticFrame frame = adiabatic_frame(family, p);
        const CouplingField field = coupling_field(family, p);
        const std::vector<int> to_diabatic = diabatic_assignment(frame.basis);
        int la = -1, lb = -1;
        for (int lvl = 0; lvl < static_cast<int>(to_diabatic.size()); ++lvl) {
            if (to_diabatic[lvl] == a) la = lvl;
            if (to_diabatic[lvl] == b) lb = lvl;
        }
        if (la < 0 || lb < 0) return kNaN;
        return std::abs(field.kappa(la, lb));
    } catch (const numerical_failure&) {
        return kNaN;
    }
}

}  // namespace

DomainMap kappa_map(const HamiltonianFamily& family, const ParamPoint& base, int slot_x,
                    int slot_y, const RealVector& xs, const RealVector& ys, int a, int b,
                    const DomainMapOptions& opts) {
    if (base.size() != family.n_slots())
        throw invalid_input("base point dimension does not match the family");
    if (slot_x < 0 || slot_x >= family.n_slots() || slot_y < 0 || slot_y >= family.n_slots() ||
        slot_x == slot_y)
        throw invalid_input("map needs two distinct slots in range");
    if (a < 0 || a >= family.dim() || b < 0 || b >= family.dim() || a == b)
        throw invalid_input("map needs two distinct levels in range");
    if (xs.size() < 1 || ys.size() < 1) throw invalid_input("map axes must be non-empty");
    if (!xs.allFinite() || !ys.allFinite()) throw invalid_input("map axes must be finite");

    DomainMap map;
    map.model = opts.model;
    map.slot_x = slot_x;
    map.slot_y = slot_y;
    map.a = a;
    map.b = b;
    map.xs = xs;
    map.ys = ys;
    map.boundaries = opts.boundaries;
    const int nx = static_cast<int>(xs.size());
    const int ny = static_cast<int>(ys.size());
    map.kappa = RealMatrix::Constant(ny, nx, kNaN);
    map.labels = Eigen::MatrixXi::Zero(ny, nx);

    // rays of the boundary lines, sorted by angle, for sector labels
    std::vector<double> rays;
    for (const auto& line : map.boundaries) {
        rays.push_back(std::atan2(line.slope, 1.0));
        rays.push_back(std::atan2(-line.slope, -1.0));
    }
    std::sort(rays.begin(), rays.end());

    parallel_for(nx * ny, opts.threads, [&](int idx) {
        const int iy = idx / nx;
        const int ix = idx % nx;
        ParamPoint p = base;
        p[slot_x] = xs[ix];
        p[slot_y] = ys[iy];
        map.kappa(iy, ix) = diabatic_kappa(family, p, a, b);
        if (!rays.empty() && (xs[ix] != 0.0 || ys[iy] != 0.0)) {
            const double phi = std::atan2(ys[iy], xs[ix]);
            const auto it = std::upper_bound(rays.begin(), rays.end(), phi);
            const int sector = static_cast<int>(it - rays.begin());
            map.labels(iy, ix) = sector == 0 ? static_cast<int>(rays.size()) : sector;
        }
    });
    return map;
}

std::vector<BoundaryLine> four_state_boundary_lines(const FourStateParams& p) {
    std::vector<BoundaryLine> out;
    for (const auto& line : four_state_crossing_lines(p)) {
        std::ostringstream os;
        os << "(" << line.i << "," << line.j << ")";
        out.push_back(BoundaryLine{line.slope, os.str()});
    }
    return out;
}

double kappa_half_width(const HamiltonianFamily& family, const ParamPoint& base, int slot_x,
                        int slot_y, int a, int b, double line_slope, double x_abs,
                        double level) {
    if (!(x_abs > 0.0) || !std::isfinite(x_abs))
        throw invalid_input("half-width needs a positive finite |x|");
    if (!(level > 0.0) || !std::isfinite(level) || !std::isfinite(line_slope))
        throw invalid_input("half-width needs a positive finite level and slope");

    const auto kappa_at = [&](double offset) {
        ParamPoint p = base;
        p[slot_x] = x_abs;
        p[slot_y] = line_slope * x_abs - offset;
        return diabatic_kappa(family, p, a, b);
    };
    const auto above = [&](double offset) {
        const double k = kappa_at(offset);
        return std::isnan(k) || k >= level;  // masked points sit inside the crossing region
    };

    if (!above(0.0))
        throw invalid_input("kappa on the line is already below the requested level");
    double lo = 0.0;
    double hi = std::max(1.0, 1.0 / x_abs);
    int doublings = 0;
    while (above(hi)) {
        hi *= 2.0;
        if (++doublings > 60)
            throw numerical_failure("kappa never falls below the level away from the line");
    }
    for (int iter = 0; iter < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        (above(mid) ? lo : hi) = mid;
    }
    const double offset = 0.5 * (lo + hi);
    return std::atan(line_slope) - std::atan(line_slope - offset / x_abs);
}

WkbResult wkb_propagate(const HamiltonianFamily& family, const ParamPath& path,
                        const Vector& amplitudes, const WkbOptions& opts) {
    if (path.dimension() != family.n_slots())
        throw invalid_input("path dimension does not match the family");
    if (amplitudes.size() != family.dim())
        throw invalid_input("need one amplitude per level");
    if (!(opts.kappa_threshold > 0.0) || !std::isfinite(opts.kappa_threshold))
        throw invalid_input("kappa threshold must be positive and finite");
    if (opts.samples_per_segment < 2)
        throw invalid_input("need at least two samples per segment");

    const int n = family.dim();
    WkbResult result{amplitudes, RealVector::Zero(n), adiabatic_frame(family, path.vertices().front()),
                     0.0};

    const auto check_adiabatic = [&](const ParamPoint& p) {
        const CouplingField field = coupling_field(family, p);
        double worst = 0.0;
        for (int a = 0; a < n; ++a)
            for (int c = a + 1; c < n; ++c)
                if (!std::isnan(field.kappa(a, c)))
                    worst = std::max(worst, std::abs(field.kappa(a, c)));
        result.max_kappa = std::max(result.max_kappa, worst);
        if (worst >= opts.kappa_threshold) {
            std::ostringstream os;
            os << "path leaves the adiabatic domain at " << point_string(p) << ": max |kappa| "
               << worst << " exceeds " << opts.kappa_threshold;
            throw invalid_input(os.str());
        }
    };

    check_adiabatic(result.frame.x);
    for (const auto& segment : path.segments()) {
        for (int step = 1; step <= opts.samples_per_segment; ++step) {
            const double tau = static_cast<double>(step) / opts.samples_per_segment;
            const ParamPoint p = segment.point_at(tau);
            AdiabaticFrame next = adiabatic_frame(family, p);

            // gauge continuity: align each column with the previous frame,
            // and refuse to continue across a level reordering
            for (int a = 0; a < n; ++a) {
                const Complex overlap =
                    (result.frame.basis.col(a).adjoint() * next.basis.col(a))(0, 0);
                if (std::norm(overlap) < 0.5)
                    throw numerical_failure(
                        "levels reorder along the path near " + point_string(p) +
                        "; the path does not stay inside one adiabatic domain");
                next.basis.col(a) *= overlap / std::abs(overlap);
            }

            check_adiabatic(p);

            const ParamPoint dx = p - result.frame.x;
            for (int a = 0; a < n; ++a)
                result.action[a] +=
                    0.5 * (result.frame.momenta.col(a) + next.momenta.col(a)).dot(dx);
            result.frame = std::move(next);
        }
    }

    result.frame.action = result.action;
    for (int a = 0; a < n; ++a)
        result.amplitudes[a] *= std::exp(Complex(0.0, result.action[a]));
    return result;
}

Matrix match_domains(const AdiabaticFrame& incoming, const AdiabaticFrame& outgoing,
                     const CrossingMatch& match) {
    const int n = static_cast<int>(incoming.energies.size());
    if (static_cast<int>(outgoing.energies.size()) != n)
        throw invalid_input("frames differ in dimension");
    if (match.a < 0 || match.a >= n || match.b < 0 || match.b >= n || match.a == match.b)
        throw invalid_input("crossing pair indices must be distinct and in range");
    if (!(match.coupling >= 0.0) || !std::isfinite(match.coupling))
        throw invalid_input("coupling must be non-negative and finite");

    const int lo = std::min(match.a, match.b);
    const int hi = std::max(match.a, match.b);
    for (const AdiabaticFrame* frame : {&incoming, &outgoing}) {
        for (int c = 0; c < n; ++c) {
            for (int d = c + 1; d < n; ++d) {
                if (c == lo && d == hi) continue;
                const double gap = std::abs(frame->energies[c] - frame->energies[d]);
                if (gap <= 10.0 * match.coupling) {
                    std::ostringstream os;
                    os << "unsupported crossing: pair (" << c << "," << d << ") gap " << gap
                       << " does not dominate the coupling " << match.coupling
                       << "; only isolated pairwise crossings can be matched";
                    throw invalid_input(os.str());
                }
            }
        }
    }

    CrossingEvent event;
    event.i = match.a;
    event.j = match.b;
    event.p = lz_probability(match.coupling, match.slope_diff);
    event.phase = match.phase;
    event.sign = match.sign;
    return embedded_crossing_block(n, event);
}

}  // namespace mlz
