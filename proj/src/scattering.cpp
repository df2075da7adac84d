#include "mlz/scattering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <utility>

#include "mlz/errors.hpp"

namespace mlz {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<std::string> default_labels(int n) {
    std::vector<std::string> labels;
    labels.reserve(n);
    for (int i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    return labels;
}

}  // namespace

TransitionMatrix::TransitionMatrix(RealMatrix entries, std::vector<std::string> labels,
                                   std::string regime_tag)
    : entries_(std::move(entries)), labels_(std::move(labels)), regime_(std::move(regime_tag)) {
    const int n = static_cast<int>(entries_.rows());
    if (n < 1 || entries_.cols() != n) throw invalid_input("transition matrix must be square");
    if (static_cast<int>(labels_.size()) != n)
        throw invalid_input("transition matrix needs one label per diabatic state");
    if (!entries_.allFinite())
        throw numerical_failure("transition matrix has non-finite entries");
    if (entries_.minCoeff() < -1e-9 || entries_.maxCoeff() > 1.0 + 1e-9)
        throw numerical_failure("transition probabilities must lie in [0, 1] within 1e-9");
    if (stochastic_defect() > 1e-6)
        throw numerical_failure("transition matrix is not doubly stochastic within 1e-6");
}

double TransitionMatrix::stochastic_defect() const {
    const double row = (entries_.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double col = (entries_.colwise().sum().array() - 1.0).abs().maxCoeff();
    return std::max(row, col);
}

double max_entry_difference(const TransitionMatrix& a, const TransitionMatrix& b) {
    if (a.dim() != b.dim()) throw invalid_input("transition matrices differ in dimension");
    return (a.entries() - b.entries()).cwiseAbs().maxCoeff();
}

double lz_probability(double coupling, double slope_diff) {
    if (!std::isfinite(coupling) || !std::isfinite(slope_diff) || !(slope_diff > 0.0))
        throw invalid_input("slope difference must be positive and finite");
    return std::exp(-2.0 * kPi * coupling * coupling / slope_diff);
}

std::string to_string(FourStateRegime regime) {
    switch (regime) {
        case FourStateRegime::Slow: return "slow (v < b1 - b2)";
        case FourStateRegime::Mixed: return "mixed (b1 - b2 < v < b1 + b2)";
        case FourStateRegime::Fast: return "fast (v > b1 + b2)";
    }
    return "unknown";
}

FourStateRegime four_state_regime(const FourStateParams& p) {
    p.validate();
    const double lo = p.b1 - p.b2;
    const double hi = p.b1 + p.b2;
    if (std::abs(p.v - lo) <= 1e-12 * std::max(1.0, lo) ||
        std::abs(p.v - hi) <= 1e-12 * std::max(1.0, hi))
        throw invalid_input(
            "sweep velocity sits on a regime boundary; the crossing structure is non-generic");
    if (p.v < lo) return FourStateRegime::Slow;
    if (p.v < hi) return FourStateRegime::Mixed;
    return FourStateRegime::Fast;
}

TransitionMatrix four_state_closed_form(const FourStateParams& p) {
    const FourStateRegime regime = four_state_regime(p);
    const double p1 = lz_probability(p.g, p.b1 - p.b2);
    const double p2 = lz_probability(p.gamma, p.b1 + p.b2);
    const double q1 = 1.0 - p1;
    const double q2 = 1.0 - p2;
    RealMatrix m(4, 4);
    switch (regime) {
        case FourStateRegime::Slow:
            m << p1 * p2, 0.0, p2 * q1, q2,
                 0.0, p1 * p2, q2, p2 * q1,
                 p2 * q1, q2, p1 * p2, 0.0,
                 q2, p2 * q1, 0.0, p1 * p2;
            break;
        case FourStateRegime::Mixed:
            m << p1 * p2, q1 * q2, p2 * q1, p1 * q2,
                 q1 * q2, p1 * p2, p1 * q2, p2 * q1,
                 p2 * q1, p1 * q2, p1 * p2, q1 * q2,
                 p1 * q2, p2 * q1, q1 * q2, p1 * p2;
            break;
        case FourStateRegime::Fast:
            m << p1 * p2, 0.0, q1, p1 * q2,
                 0.0, p1 * p2, p1 * q2, q1,
                 q1, p1 * q2, p1 * p2, 0.0,
                 p1 * q2, q1, 0.0, p1 * p2;
            break;
    }
    return TransitionMatrix(std::move(m), default_labels(4), to_string(regime));
}

namespace {

// Static crossing data of the four-state model. Pairs are 0-based; `hi` is
// the member whose diabatic level has the larger slope at the crossing (the
// same member on either leg), and the coupling signs follow the off-diagonal
// structure of the two generators.
struct PairGeometry {
    int a, b;        // diabatic pair, a < b
    bool strong;     // true: slope difference b1 - b2 and coupling g
    int hi;          // higher-slope member
    int sign_time;   // block sign when the crossing sits on the time leg
    int sign_offset; // block sign when it sits on the offset leg
};

constexpr std::array<PairGeometry, 4> kFourStatePairs{{
    {0, 2, true, 0, +1, +1},
    {0, 3, false, 0, -1, -1},
    {1, 2, false, 2, +1, -1},
    {1, 3, true, 3, +1, -1},
}};

// Diabatic level structure along one rectangle leg, in the global path
// coordinate: level n runs as slope[n] * (s - center) + offset[n]. The
// reflection symmetry pairs levels (0,1) and (2,3) with opposite slopes and
// a shared offset.
struct LegEnergies {
    double center = 0.0;
    std::array<double, 4> slope{};
    std::array<double, 4> offset{};
};

double leg_piece(const LegEnergies& leg, int n, double a, double b) {
    const double da = a - leg.center;
    const double db = b - leg.center;
    return 0.5 * leg.slope[n] * (db * db - da * da) + leg.offset[n] * (b - a);
}

// Integral of level n over [a, b] in the global coordinate, where the offset
// leg occupies [0, 1] and the time leg [1, 2].
double span_integral(const LegEnergies& offset_leg, const LegEnergies& time_leg, int n, double a,
                     double b) {
    double out = 0.0;
    if (a < 1.0) out += leg_piece(offset_leg, n, a, std::min(b, 1.0));
    if (b > 1.0) out += leg_piece(time_leg, n, std::max(a, 1.0), b);
    return out;
}

std::vector<RealVector> gap_phases_from_legs(const std::vector<CrossingEvent>& events,
                                             const LegEnergies& offset_leg,
                                             const LegEnergies& time_leg) {
    std::vector<double> markers{0.0};
    for (const auto& ev : events) markers.push_back(ev.location);
    markers.push_back(2.0);
    std::vector<RealVector> phases;
    phases.reserve(markers.size() - 1);
    for (std::size_t k = 0; k + 1 < markers.size(); ++k) {
        RealVector th(4);
        for (int n = 0; n < 4; ++n)
            th[n] = span_integral(offset_leg, time_leg, n, markers[k], markers[k + 1]);
        phases.push_back(std::move(th));
    }
    return phases;
}

}  // namespace

ChainScatteringPlan four_state_event_sequence(const FourStateParams& p, double horizon) {
    const FourStateRegime regime = four_state_regime(p);
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw invalid_input("horizon must be positive and finite");

    const double r = horizon;
    const double d = (p.b1 - p.b2) * (p.b1 + p.b2);
    const double e_high = p.e0 + p.v * r;  // offset held on the time leg
    const double e_low = p.e0 - p.v * r;
    const double span = e_high - e_low;

    std::vector<CrossingEvent> events;
    for (const auto& pair : kFourStatePairs) {
        const double slope_diff = pair.strong ? p.b1 - p.b2 : p.b1 + p.b2;
        const double coupling = pair.strong ? p.g : p.gamma;
        // Crossing candidates: one on each leg, from equating the governing
        // generator's diabatic levels.
        double t_cross;  // on the time leg, e = e_high
        if (pair.a == 0 && pair.b == 2) t_cross = -e_high / (p.b1 - p.b2);
        else if (pair.a == 1 && pair.b == 3) t_cross = e_high / (p.b1 - p.b2);
        else if (pair.a == 0 && pair.b == 3) t_cross = -e_high / (p.b1 + p.b2);
        else t_cross = e_high / (p.b1 + p.b2);
        double e_cross;  // on the offset leg, t = -r
        if (pair.a == 0 && pair.b == 2) e_cross = r * (p.b1 - p.b2);
        else if (pair.a == 1 && pair.b == 3) e_cross = -r * (p.b1 - p.b2);
        else if (pair.a == 0 && pair.b == 3) e_cross = r * (p.b1 + p.b2);
        else e_cross = -r * (p.b1 + p.b2);

        const bool on_time = std::abs(t_cross) < r;
        const bool on_offset = span > 0.0 && e_cross > e_low && e_cross < e_high;
        if (on_time == on_offset)
            throw invalid_input(
                "crossing does not land on exactly one rectangle leg; increase the horizon "
                "relative to the offset");

        CrossingEvent ev;
        ev.i = pair.hi;
        ev.j = pair.hi == pair.a ? pair.b : pair.a;
        ev.p = lz_probability(coupling, slope_diff);
        ev.phase = 0.0;
        if (on_time) {
            ev.location = 1.0 + (t_cross + r) / (2.0 * r);
            ev.sign = pair.sign_time;
            ev.generator_slot = 0;
        } else {
            ev.location = (e_cross - e_low) / span;
            ev.sign = pair.sign_offset;
            ev.generator_slot = 1;
        }
        events.push_back(ev);
    }
    std::sort(events.begin(), events.end(),
              [](const CrossingEvent& x, const CrossingEvent& y) { return x.location < y.location; });
    for (std::size_t k = 1; k < events.size(); ++k)
        if (!(events[k].location > events[k - 1].location))
            throw numerical_failure("two crossings coincide on the path");

    // Diabatic diagonal of the effective path generator on each leg, as a
    // linear function of the global coordinate: velocity times the governing
    // generator's levels. Offset leg: span * (partner levels, slopes
    // (b1, -b1, -b2, b2)/D in e); time leg: 2r * (time levels, slopes
    // (b1, -b1, b2, -b2) in t). Integrating these gives the exact phases.
    LegEnergies offset_leg;
    if (span > 0.0) {
        offset_leg.center = (0.0 - e_low) / span;
        const std::array<double, 4> se{p.b1 / d, -p.b1 / d, -p.b2 / d, p.b2 / d};
        for (int n = 0; n < 4; ++n) offset_leg.slope[n] = se[n] * span * span;
        offset_leg.offset = {-r * span, -r * span, 0.0, 0.0};
    }
    LegEnergies time_leg;
    time_leg.center = 1.5;
    const std::array<double, 4> st{p.b1, -p.b1, p.b2, -p.b2};
    for (int n = 0; n < 4; ++n) time_leg.slope[n] = st[n] * 2.0 * r * 2.0 * r;
    time_leg.offset = {e_high * 2.0 * r, e_high * 2.0 * r, 0.0, 0.0};

    ChainScatteringPlan plan;
    plan.dim = 4;
    plan.events = std::move(events);
    plan.policy = PhasePolicy::Keep;
    plan.gap_phases = gap_phases_from_legs(plan.events, offset_leg, time_leg);
    plan.regime_tag = to_string(regime);
    return plan;
}

void four_state_randomize_phases(ChainScatteringPlan& plan, unsigned seed) {
    if (plan.dim != 4 || plan.events.size() != 4)
        throw invalid_input("phase randomization expects a four-state crossing plan");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);

    const double phi_strong = angle(rng);
    const double phi_weak = angle(rng);
    for (auto& ev : plan.events) {
        const int a = std::min(ev.i, ev.j);
        const int b = std::max(ev.i, ev.j);
        const bool strong = (a == 0 && b == 2) || (a == 1 && b == 3);
        const bool weak = (a == 0 && b == 3) || (a == 1 && b == 2);
        if (!strong && !weak)
            throw invalid_input("plan contains a pair outside the four-state crossing set");
        ev.phase = strong ? phi_strong : phi_weak;
    }

    // Random linear level structures with the model's reflection symmetry:
    // paired opposite slopes, shared offsets, centered on each leg's events.
    const auto random_leg = [&](int slot, double fallback_center) {
        LegEnergies leg;
        double sum = 0.0;
        int count = 0;
        for (const auto& ev : plan.events)
            if (ev.generator_slot == slot) {
                sum += ev.location;
                ++count;
            }
        leg.center = count > 0 ? sum / count : fallback_center;
        const double s01 = coef(rng), s23 = coef(rng);
        const double o01 = coef(rng), o23 = coef(rng);
        leg.slope = {s01, -s01, s23, -s23};
        leg.offset = {o01, o01, o23, o23};
        return leg;
    };
    const LegEnergies offset_leg = random_leg(1, 0.5);
    const LegEnergies time_leg = random_leg(0, 1.5);
    plan.gap_phases = gap_phases_from_legs(plan.events, offset_leg, time_leg);
    plan.policy = PhasePolicy::Keep;
}

Matrix embedded_crossing_block(int dim, const CrossingEvent& event) {
    if (dim < 2) throw invalid_input("crossing block needs dimension >= 2");
    if (event.i < 0 || event.i >= dim || event.j < 0 || event.j >= dim || event.i == event.j)
        throw invalid_input("crossing pair indices must be distinct and in range");
    if (!(event.p > 0.0) || event.p > 1.0)
        throw invalid_input("survival probability must lie in (0, 1]");
    if (event.sign != 1 && event.sign != -1) throw invalid_input("coupling sign must be +1 or -1");
    Matrix block = Matrix::Identity(dim, dim);
    block(event.i, event.i) = std::sqrt(event.p);
    block(event.j, event.j) = std::sqrt(event.p);
    const Complex amp(0.0, event.sign * std::sqrt(1.0 - event.p));
    block(event.i, event.j) = amp * std::exp(Complex(0.0, event.phase));
    block(event.j, event.i) = amp * std::exp(Complex(0.0, -event.phase));
    return block;
}

std::pair<Matrix, TransitionMatrix> chain_scatter(const ChainScatteringPlan& plan) {
    if (plan.dim < 2) throw invalid_input("chain plan needs dimension >= 2");
    if (!plan.gap_phases.empty() && plan.gap_phases.size() != plan.events.size() + 1)
        throw invalid_input("gap_phases must hold one vector per gap (events + 1)");
    for (const auto& th : plan.gap_phases)
        if (th.size() != plan.dim)
            throw invalid_input("each gap phase vector needs one entry per state");
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& ev : plan.events) {
        if (!(ev.location > prev))
            throw invalid_input("events must be strictly ordered by location");
        prev = ev.location;
    }

    Matrix s = Matrix::Identity(plan.dim, plan.dim);
    const auto apply_gap = [&](std::size_t k) {
        if (plan.policy == PhasePolicy::Drop || plan.gap_phases.empty()) return;
        Vector ph(plan.dim);
        for (int n = 0; n < plan.dim; ++n)
            ph[n] = std::exp(Complex(0.0, -plan.gap_phases[k][n]));
        s = ph.asDiagonal() * s;
    };
    apply_gap(0);
    for (std::size_t k = 0; k < plan.events.size(); ++k) {
        s = embedded_crossing_block(plan.dim, plan.events[k]) * s;
        apply_gap(k + 1);
    }

    TransitionMatrix tm(s.cwiseAbs2(), default_labels(plan.dim), plan.regime_tag);
    return {std::move(s), std::move(tm)};
}

PathBuilder time_sweep_builder(const ParamPoint& base, int slot) {
    if (slot < 0 || slot >= base.size()) throw invalid_input("sweep slot out of range");
    return [base, slot](double horizon) {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw invalid_input("horizon must be positive and finite");
        ParamPoint a = base;
        ParamPoint b = base;
        a[slot] = -horizon;
        b[slot] = horizon;
        return ParamPath::line(a, b);
    };
}

PathBuilder four_state_sweep_builder(const FourStateParams& p) {
    p.validate();
    return [p](double horizon) {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw invalid_input("horizon must be positive and finite");
        ParamPoint a(2), b(2);
        a << -horizon, p.e0 - p.v * horizon;
        b << horizon, p.e0 + p.v * horizon;
        return ParamPath::line(a, b);
    };
}

PathBuilder four_state_rectangle_builder(const FourStateParams& p) {
    p.validate();
    return [p](double horizon) {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw invalid_input("horizon must be positive and finite");
        ParamPoint a(2), w(2), b(2);
        a << -horizon, p.e0 - p.v * horizon;
        w << -horizon, p.e0 + p.v * horizon;
        b << horizon, p.e0 + p.v * horizon;
        if (p.v == 0.0) return ParamPath::line(a, b);
        return ParamPath({a, w, b});
    };
}

namespace {

struct EndpointFrame {
    Matrix vectors_by_label;  // column n holds the eigenvector labeled n
    std::string warning;
};

EndpointFrame endpoint_frame(const HamiltonianFamily& family, const ParamPoint& x,
                             const ScatterOptions& opts) {
    const HermitianOperator h = family.generator(0, x);
    const Eigensystem sys = hermitian_eigensystem(h);
    const int n = h.dim();

    Matrix by_label(n, n);
    std::vector<char> used(n, 0);
    for (int k = 0; k < n; ++k) {
        double best = -1.0, second = -1.0;
        int arg = 0;
        for (int m = 0; m < n; ++m) {
            const double overlap = std::norm(sys.vectors(m, k));
            if (overlap > best) {
                second = best;
                best = overlap;
                arg = m;
            } else if (overlap > second) {
                second = overlap;
            }
        }
        if (best - second < opts.ambiguity_threshold)
            throw numerical_failure(
                "ambiguous diabatic labeling at a path endpoint: two overlaps within the "
                "threshold; the horizon is likely too small");
        if (used[arg])
            throw numerical_failure("two endpoint eigenstates map to the same diabatic label");
        used[arg] = 1;
        by_label.col(arg) = sys.vectors.col(k);
    }

    std::string warning;
    const Matrix& hm = h.matrix();
    for (int a = 0; a < n && warning.empty(); ++a) {
        for (int b = a + 1; b < n; ++b) {
            const double coupling = std::abs(hm(a, b));
            if (coupling == 0.0) continue;
            const double gap = std::abs(std::real(hm(a, a)) - std::real(hm(b, b)));
            if (gap <= opts.gap_factor * coupling) {
                std::ostringstream os;
                os << "endpoint is not asymptotic: diabatic gap " << gap << " between states " << a
                   << " and " << b << " does not exceed " << opts.gap_factor << " x coupling "
                   << coupling << "; increase the horizon";
                warning = os.str();
                break;
            }
        }
    }
    return {std::move(by_label), std::move(warning)};
}

ScatterResult scatter_along(const HamiltonianFamily& family, const ParamPath& path,
                            const ScatterOptions& opts) {
    const EndpointFrame in = endpoint_frame(family, path.vertices().front(), opts);
    const EndpointFrame out = endpoint_frame(family, path.vertices().back(), opts);
    std::string warning = !in.warning.empty() ? in.warning : out.warning;
    if (!warning.empty() && opts.strict) throw invalid_input(warning);

    const Propagator prop = propagate_matrix(family, path, opts.evolve);
    const Matrix s = out.vectors_by_label.adjoint() * prop.unitary * in.vectors_by_label;
    TransitionMatrix tm(s.cwiseAbs2(), default_labels(family.dim()), opts.regime_tag);
    return ScatterResult{std::move(tm),     -1.0, prop.unitarity_defect, prop.steps_taken,
                         !warning.empty(),  std::move(warning)};
}

}  // namespace

ScatterResult numeric_transition_matrix(const HamiltonianFamily& family,
                                        const PathBuilder& path_for_horizon, double horizon,
                                        const ScatterOptions& opts) {
    if (!path_for_horizon) throw invalid_input("path builder must be callable");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw invalid_input("horizon must be positive and finite");
    ScatterResult result = scatter_along(family, path_for_horizon(horizon), opts);
    if (opts.check_drift) {
        ScatterOptions far_opts = opts;
        far_opts.check_drift = false;
        const ScatterResult far = scatter_along(family, path_for_horizon(2.0 * horizon), far_opts);
        result.r_drift = max_entry_difference(result.matrix, far.matrix);
    }
    return result;
}

ScatterResult deformed_path_transition_matrix(const HamiltonianFamily& family,
                                              const ParamPoint& start, const ParamPoint& end,
                                              WaypointPolicy policy, const ScatterOptions& opts) {
    if (start.size() != end.size()) throw invalid_input("endpoints must share a dimension");
    std::vector<ParamPoint> vertices{start};
    if (policy == WaypointPolicy::OffsetThenTime && start.size() > 1) {
        ParamPoint waypoint = end;
        waypoint[0] = start[0];
        if ((waypoint - start).cwiseAbs().maxCoeff() > 0.0 &&
            (waypoint - end).cwiseAbs().maxCoeff() > 0.0)
            vertices.push_back(waypoint);
    }
    vertices.push_back(end);
    return scatter_along(family, ParamPath(std::move(vertices)), opts);
}

}  // namespace mlz
