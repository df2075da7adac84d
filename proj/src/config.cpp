#include "mlz/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <sstream>

#include "mlz/evolution.hpp"
#include "mlz/family.hpp"
#include "mlz/models.hpp"
#include "mlz/operators.hpp"
#include "mlz/parallel.hpp"
#include "mlz/scattering.hpp"
#include "mlz/wkb.hpp"

namespace mlz {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Strict config readers
// ---------------------------------------------------------------------------

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object())
        throw invalid_input(where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        if (!known) throw invalid_input("unknown key \"" + it.key() + "\" in " + where);
    }
}

double number_or(const json& obj, const std::string& where, const char* key,
                 double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number())
        throw invalid_input(where + "." + key + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw invalid_input(where + "." + key + " must be finite");
    return x;
}

long long int_or(const json& obj, const std::string& where, const char* key,
                 long long fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
        const double x = v.get<double>();
        if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9.0e15)
            return static_cast<long long>(x);
    }
    throw invalid_input(where + "." + key + " must be an integer");
}

bool bool_or(const json& obj, const std::string& where, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw invalid_input(where + "." + key + " must be a boolean");
    return v.get<bool>();
}

std::string string_or(const json& obj, const std::string& where, const char* key,
                      const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw invalid_input(where + "." + key + " must be a string");
    return v.get<std::string>();
}

std::vector<double> number_list(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw invalid_input(where + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const json& v : arr) {
        if (!v.is_number()) throw invalid_input(where + " must contain only numbers");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw invalid_input(where + " entries must be finite");
        out.push_back(x);
    }
    return out;
}

ParamPoint read_point(const json& arr, const std::string& where, int expected) {
    const auto values = number_list(arr, where);
    if (static_cast<int>(values.size()) != expected)
        throw invalid_input(where + " must have " + std::to_string(expected) + " entries");
    ParamPoint x(expected);
    for (int i = 0; i < expected; ++i) x[i] = values[i];
    return x;
}

// ---------------------------------------------------------------------------
// Tabular output
// ---------------------------------------------------------------------------

// One tabular payload per task; serialized as CSV or as a JSON table.
// Cells are JSON values: numbers, integers, strings, or null for NaN.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<json>> rows;
};

json cell(double v) {
    if (!std::isfinite(v)) return json();  // null; renders as "nan" in CSV
    return json(v);
}

std::string render_cell(const json& c) {
    if (c.is_null()) return "nan";
    if (c.is_string()) return c.get<std::string>();
    if (c.is_number_integer()) return std::to_string(c.get<long long>());
    if (c.is_number()) return csv_number(c.get<double>());
    if (c.is_boolean()) return c.get<bool>() ? "1" : "0";
    return c.dump();
}

void write_table_csv(std::ostream& out, const Table& table) {
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        out << (i ? "," : "") << table.columns[i];
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << render_cell(row[i]);
        out << "\n";
    }
}

void write_table_json(std::ostream& out, const Table& table) {
    json doc;
    doc["columns"] = table.columns;
    doc["rows"] = json::array();
    for (const auto& row : table.rows) doc["rows"].push_back(row);
    out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Model block
// ---------------------------------------------------------------------------

struct ModelContext {
    std::string name;
    std::shared_ptr<const HamiltonianFamily> family;
    ParamPoint base;  // natural evaluation point (zeros, or the params' epsilons)
    FourStateParams four_state;
    double lz_slope = 1.0;
    double lz_coupling = 0.25;
    int quanta = -1;
};

ModelContext build_model(const json& model) {
    if (!model.is_object()) throw invalid_input("model must be a JSON object");
    const std::string name = string_or(model, "model", "name", "");
    if (name.empty()) throw invalid_input("model.name is required");

    ModelContext ctx;
    ctx.name = name;
    if (name == "four-state") {
        check_keys(model, "model", {"name", "b1", "b2", "g", "gamma", "e0", "v"});
        FourStateParams p;
        p.b1 = number_or(model, "model", "b1", p.b1);
        p.b2 = number_or(model, "model", "b2", p.b2);
        p.g = number_or(model, "model", "g", p.g);
        p.gamma = number_or(model, "model", "gamma", p.gamma);
        p.e0 = number_or(model, "model", "e0", p.e0);
        p.v = number_or(model, "model", "v", p.v);
        p.validate();
        ctx.four_state = p;
        ctx.family = four_state_family(p);
        ctx.base = ParamPoint::Zero(2);
    } else if (name == "lz2") {
        check_keys(model, "model", {"name", "slope_diff", "coupling"});
        ctx.lz_slope = number_or(model, "model", "slope_diff", 1.0);
        ctx.lz_coupling = number_or(model, "model", "coupling", 0.25);
        ctx.family = lz_two_state_family(ctx.lz_slope, ctx.lz_coupling);
        ctx.base = ParamPoint::Zero(1);
    } else if (name == "tavis-cummings") {
        check_keys(model, "model",
                   {"name", "n_spins", "epsilons", "g", "boson_cutoff", "sector_quanta"});
        TCParams p;
        p.n_spins = static_cast<int>(int_or(model, "model", "n_spins", p.n_spins));
        if (model.contains("epsilons"))
            p.epsilons = number_list(model.at("epsilons"), "model.epsilons");
        else
            throw invalid_input("model.epsilons is required for tavis-cummings");
        p.g = number_or(model, "model", "g", p.g);
        p.boson_cutoff = static_cast<int>(int_or(model, "model", "boson_cutoff", p.boson_cutoff));
        auto family = tavis_cummings_family(p);
        ctx.base = tavis_cummings_point(p, 0.0);
        const long long quanta = int_or(model, "model", "sector_quanta", -1);
        if (quanta >= 0) {
            const auto indices =
                quanta_sector_indices(tavis_cummings_space(p), static_cast<int>(quanta));
            if (indices.empty())
                throw invalid_input("model.sector_quanta selects an empty sector");
            ctx.quanta = static_cast<int>(quanta);
            ctx.family = restrict_family(std::move(family), indices);
        } else {
            ctx.family = std::move(family);
        }
    } else if (name == "gaudin") {
        check_keys(model, "model", {"name", "n_spins", "epsilons", "B"});
        GaudinParams p;
        p.n_spins = static_cast<int>(int_or(model, "model", "n_spins", p.n_spins));
        if (model.contains("epsilons"))
            p.epsilons = number_list(model.at("epsilons"), "model.epsilons");
        else
            throw invalid_input("model.epsilons is required for gaudin");
        p.B = number_or(model, "model", "B", p.B);
        ctx.family = gaudin_family(p);
        ctx.base = gaudin_point(p);
    } else {
        throw invalid_input("unknown model name \"" + name +
                            "\" (expected four-state, lz2, tavis-cummings, or gaudin)");
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Shared option blocks
// ---------------------------------------------------------------------------

struct GridSpec {
    int slot_x = 0;
    int slot_y = 1;
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    int x_count = 0, y_count = 0;

    RealVector xs() const { return RealVector::LinSpaced(x_count, x_min, x_max); }
    RealVector ys() const { return RealVector::LinSpaced(y_count, y_min, y_max); }
};

GridSpec read_grid(const json& options, const std::string& where, const ModelContext& model,
                   double def_min, double def_max, int def_count) {
    GridSpec grid;
    grid.x_min = grid.y_min = def_min;
    grid.x_max = grid.y_max = def_max;
    grid.x_count = grid.y_count = def_count;
    if (options.contains("grid")) {
        const json& g = options.at("grid");
        check_keys(g, where, {"slot_x", "slot_y", "x_min", "x_max", "x_count", "y_min",
                              "y_max", "y_count"});
        grid.slot_x = static_cast<int>(int_or(g, where, "slot_x", grid.slot_x));
        grid.slot_y = static_cast<int>(int_or(g, where, "slot_y", grid.slot_y));
        grid.x_min = number_or(g, where, "x_min", grid.x_min);
        grid.x_max = number_or(g, where, "x_max", grid.x_max);
        grid.x_count = static_cast<int>(int_or(g, where, "x_count", grid.x_count));
        grid.y_min = number_or(g, where, "y_min", grid.y_min);
        grid.y_max = number_or(g, where, "y_max", grid.y_max);
        grid.y_count = static_cast<int>(int_or(g, where, "y_count", grid.y_count));
    }
    const int slots = model.family->n_slots();
    if (grid.slot_x < 0 || grid.slot_x >= slots || grid.slot_y < 0 || grid.slot_y >= slots)
        throw invalid_input(where + ": slot out of range for a family with " +
                            std::to_string(slots) + " slots");
    if (grid.slot_x == grid.slot_y)
        throw invalid_input(where + ": slot_x and slot_y must differ");
    if (grid.x_count < 1 || grid.y_count < 1)
        throw invalid_input(where + ": grid counts must be at least 1");
    if (grid.x_min > grid.x_max || grid.y_min > grid.y_max)
        throw invalid_input(where + ": grid bounds must be ordered");
    return grid;
}

ParamPoint read_base(const json& options, const std::string& where, const ModelContext& model) {
    if (!options.contains("base")) return model.base;
    return read_point(options.at("base"), where + ".base", model.family->n_slots());
}

std::string format_scientific(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*e", digits, v);
    return buf;
}

std::string format_point(const ParamPoint& x) {
    std::ostringstream out;
    out << "(";
    for (int i = 0; i < x.size(); ++i) out << (i ? ", " : "") << x[i];
    out << ")";
    return out.str();
}

// Everything a task run produces before serialization.
struct TaskOutcome {
    Table table;
    json results;
    json diagnostics;
    std::string summary;
    int exit_code = 0;
};

// ---------------------------------------------------------------------------
// verify-family
// ---------------------------------------------------------------------------

struct VerifySpec {
    GridSpec grid;
    ParamPoint base;
    VerifyOptions opts;
    double tolerance = 1e-8;
};

VerifySpec read_verify(const json& options, const ModelContext& model, int threads) {
    check_keys(options, "verify_family", {"grid", "base", "mode", "fd_step_scale", "tolerance"});
    VerifySpec spec;
    spec.grid = read_grid(options, "verify_family.grid", model, -3.0, 3.0, 10);
    spec.base = read_base(options, "verify_family", model);
    const std::string mode = string_or(options, "verify_family", "mode", "analytic");
    if (mode == "analytic")
        spec.opts.mode = DerivativeMode::Analytic;
    else if (mode == "central")
        spec.opts.mode = DerivativeMode::Central;
    else
        throw invalid_input("verify_family.mode must be \"analytic\" or \"central\"");
    spec.opts.fd_step_scale = number_or(options, "verify_family", "fd_step_scale", 1e-4);
    if (spec.opts.fd_step_scale <= 0)
        throw invalid_input("verify_family.fd_step_scale must be positive");
    spec.opts.threads = threads;
    spec.tolerance = number_or(options, "verify_family", "tolerance", 1e-8);
    if (spec.tolerance <= 0) throw invalid_input("verify_family.tolerance must be positive");
    return spec;
}

TaskOutcome run_verify(const ModelContext& model, const VerifySpec& spec, bool strict) {
    const RealVector xs = spec.grid.xs(), ys = spec.grid.ys();
    std::vector<ParamPoint> points;
    points.reserve(static_cast<std::size_t>(xs.size()) * ys.size());
    for (int iy = 0; iy < ys.size(); ++iy)
        for (int ix = 0; ix < xs.size(); ++ix) {
            ParamPoint x = spec.base;
            x[spec.grid.slot_x] = xs[ix];
            x[spec.grid.slot_y] = ys[iy];
            points.push_back(std::move(x));
        }

    const FamilyScanReport report = scan_family(*model.family, points, spec.opts);
    const bool pass = report.passes(spec.tolerance);

    TaskOutcome out;
    const int slots = model.family->n_slots();
    for (int s = 0; s < slots; ++s) out.table.columns.push_back("x" + std::to_string(s));
    for (const char* c : {"j", "k", "commutator_norm", "curl_norm", "full_norm", "method"})
        out.table.columns.push_back(c);
    out.table.rows.reserve(report.rows.size());
    for (const ScanRow& row : report.rows) {
        std::vector<json> cells;
        cells.reserve(out.table.columns.size());
        for (int s = 0; s < slots; ++s) cells.push_back(cell(row.x[s]));
        cells.push_back(row.j);
        cells.push_back(row.k);
        cells.push_back(cell(row.residual.commutator_norm));
        cells.push_back(cell(row.residual.curl_norm));
        cells.push_back(cell(row.residual.full_norm));
        cells.push_back(to_string(report.mode));
        out.table.rows.push_back(std::move(cells));
    }

    out.results["mode"] = to_string(report.mode);
    out.results["points"] = points.size();
    out.results["rows"] = report.rows.size();
    out.results["worst_commutator"] = cell(report.worst_commutator);
    out.results["worst_curl"] = cell(report.worst_curl);
    out.results["worst_full"] = cell(report.worst_full);
    if (report.worst_row >= 0) {
        const ScanRow& worst = report.rows[report.worst_row];
        out.results["worst_point"] = std::vector<double>(worst.x.data(), worst.x.data() + worst.x.size());
        out.results["worst_pair"] = {worst.j, worst.k};
    }
    out.results["tolerance"] = spec.tolerance;
    out.results["pass"] = pass;
    out.diagnostics["worst_commutator"] = cell(report.worst_commutator);
    out.diagnostics["worst_curl"] = cell(report.worst_curl);
    out.diagnostics["worst_full"] = cell(report.worst_full);

    std::ostringstream summary;
    summary << "verify-family[" << model.name << "]: worst full residual "
            << format_scientific(report.worst_full) << " over " << points.size() << " points ("
            << to_string(report.mode) << ") - " << (pass ? "pass" : "FAIL");
    out.summary = summary.str();
    if (strict && !pass) out.exit_code = 4;
    return out;
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

struct EvolveSpec {
    std::vector<ParamPoint> vertices;
    EvolveOptions opts;
    bool has_initial = false;
    Vector initial;
    bool trace_spectrum = false;
    int trace_samples = 400;
};

EvolveSpec read_evolve(const json& options, const ModelContext& model, bool trace_flag) {
    check_keys(options, "evolve",
               {"path", "theta", "fixed_step", "max_steps", "initial", "trace_spectrum",
                "trace_samples"});
    EvolveSpec spec;
    if (!options.contains("path")) throw invalid_input("evolve.path is required");
    const json& path = options.at("path");
    if (!path.is_array() || path.empty())
        throw invalid_input("evolve.path must be a non-empty array of points");
    const int slots = model.family->n_slots();
    for (std::size_t i = 0; i < path.size(); ++i)
        spec.vertices.push_back(
            read_point(path.at(i), "evolve.path[" + std::to_string(i) + "]", slots));

    spec.opts.theta = number_or(options, "evolve", "theta", spec.opts.theta);
    if (spec.opts.theta <= 0) throw invalid_input("evolve.theta must be positive");
    spec.opts.fixed_step = number_or(options, "evolve", "fixed_step", 0.0);
    if (spec.opts.fixed_step < 0) throw invalid_input("evolve.fixed_step must be >= 0");
    spec.opts.max_steps = int_or(options, "evolve", "max_steps", spec.opts.max_steps);
    if (spec.opts.max_steps < 1) throw invalid_input("evolve.max_steps must be positive");

    if (options.contains("initial")) {
        const json& init = options.at("initial");
        const int dim = model.family->dim();
        if (!init.is_array() || static_cast<int>(init.size()) != dim)
            throw invalid_input("evolve.initial must be an array of " + std::to_string(dim) +
                                " amplitudes");
        spec.initial = Vector(dim);
        for (int i = 0; i < dim; ++i) {
            const json& a = init.at(i);
            const std::string where = "evolve.initial[" + std::to_string(i) + "]";
            if (a.is_number()) {
                const double re = a.get<double>();
                if (!std::isfinite(re)) throw invalid_input(where + " must be finite");
                spec.initial[i] = Complex(re, 0.0);
            } else if (a.is_array() && a.size() == 2) {
                const auto parts = number_list(a, where);
                spec.initial[i] = Complex(parts[0], parts[1]);
            } else {
                throw invalid_input(where + " must be a number or an [re, im] pair");
            }
        }
        const double norm = spec.initial.norm();
        if (std::abs(norm - 1.0) > 1e-9)
            throw invalid_input("evolve.initial is not normalized (norm = " +
                                format_scientific(norm, 6) + ")");
        spec.has_initial = true;
    }

    spec.trace_spectrum = bool_or(options, "evolve", "trace_spectrum", false) || trace_flag;
    spec.trace_samples =
        static_cast<int>(int_or(options, "evolve", "trace_samples", spec.trace_samples));
    if (spec.trace_samples < 2) throw invalid_input("evolve.trace_samples must be at least 2");
    return spec;
}

TaskOutcome run_evolve(const ModelContext& model, const EvolveSpec& spec) {
    const ParamPath path(spec.vertices);
    const int dim = model.family->dim();

    std::optional<Propagator> evolved;
    Vector psi;
    if (spec.has_initial) {
        auto [state, p] = propagate(*model.family, path, spec.initial, spec.opts);
        psi = std::move(state);
        evolved.emplace(std::move(p));
    } else {
        evolved.emplace(propagate_matrix(*model.family, path, spec.opts));
    }
    const Propagator& prop = *evolved;

    TaskOutcome out;
    if (spec.trace_spectrum) {
        // adiabatic levels of the physical Hamiltonian, sampled uniformly in
        // path time
        const auto segs = path.segments();
        out.table.columns.push_back("tau");
        for (int s = 0; s < path.dimension(); ++s)
            out.table.columns.push_back("x" + std::to_string(s));
        for (int a = 0; a < dim; ++a) out.table.columns.push_back("E" + std::to_string(a));
        const int samples = segs.empty() ? 1 : spec.trace_samples;
        for (int i = 0; i < samples; ++i) {
            double tau = segs.empty()
                             ? 0.0
                             : static_cast<double>(segs.size()) * i / (samples - 1);
            ParamPoint x;
            if (segs.empty()) {
                x = path.vertices().front();
            } else {
                int seg = std::min(static_cast<int>(tau), static_cast<int>(segs.size()) - 1);
                x = segs[seg].point_at(tau - seg);
            }
            const auto eig = hermitian_eigensystem(model.family->generator(0, x));
            std::vector<json> cells;
            cells.push_back(cell(tau));
            for (int s = 0; s < x.size(); ++s) cells.push_back(cell(x[s]));
            for (int a = 0; a < dim; ++a) cells.push_back(cell(eig.values[a]));
            out.table.rows.push_back(std::move(cells));
        }
    } else if (spec.has_initial) {
        out.table.columns = {"level", "re", "im", "population"};
        for (int a = 0; a < dim; ++a)
            out.table.rows.push_back(
                {a, cell(psi[a].real()), cell(psi[a].imag()), cell(std::norm(psi[a]))});
    } else {
        out.table.columns = {"row", "col", "re", "im"};
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c)
                out.table.rows.push_back(
                    {r, c, cell(prop.unitary(r, c).real()), cell(prop.unitary(r, c).imag())});
    }

    out.results["steps"] = prop.steps_taken;
    out.results["unitarity_defect"] = cell(prop.unitarity_defect);
    out.results["method"] = to_string(prop.method);
    if (spec.has_initial) {
        json state = json::array(), pops = json::array();
        for (int a = 0; a < dim; ++a) {
            state.push_back({psi[a].real(), psi[a].imag()});
            pops.push_back(std::norm(psi[a]));
        }
        out.results["final_state"] = std::move(state);
        out.results["populations"] = std::move(pops);
    } else {
        json u = json::array();
        for (int r = 0; r < dim; ++r) {
            json row = json::array();
            for (int c = 0; c < dim; ++c)
                row.push_back({prop.unitary(r, c).real(), prop.unitary(r, c).imag()});
            u.push_back(std::move(row));
        }
        out.results["unitary"] = std::move(u);
    }
    out.diagnostics["unitarity_defect"] = cell(prop.unitarity_defect);
    out.diagnostics["steps"] = prop.steps_taken;

    std::ostringstream summary;
    summary << "evolve[" << model.name << "]: " << prop.steps_taken << " steps ("
            << to_string(prop.method) << "), unitarity defect "
            << format_scientific(prop.unitarity_defect);
    out.summary = summary.str();
    return out;
}

// ---------------------------------------------------------------------------
// scatter
// ---------------------------------------------------------------------------

struct ScatterSpec {
    std::string method = "numeric";  // numeric | closed | chain
    std::string shape = "straight";  // numeric only: straight | rectangle
    double horizon = 400.0;
    double theta = 0.1;
    bool check_drift = true;
    bool randomize_phases = false;
};

ScatterSpec read_scatter(const json& options, const ModelContext& model) {
    check_keys(options, "scatter",
               {"method", "shape", "horizon", "theta", "check_drift", "randomize_phases"});
    ScatterSpec spec;
    spec.method = string_or(options, "scatter", "method", spec.method);
    if (spec.method != "numeric" && spec.method != "closed" && spec.method != "chain")
        throw invalid_input("scatter.method must be \"numeric\", \"closed\", or \"chain\"");
    spec.shape = string_or(options, "scatter", "shape", spec.shape);
    if (spec.shape != "straight" && spec.shape != "rectangle")
        throw invalid_input("scatter.shape must be \"straight\" or \"rectangle\"");
    spec.horizon = number_or(options, "scatter", "horizon", spec.horizon);
    if (spec.horizon <= 0) throw invalid_input("scatter.horizon must be positive");
    spec.theta = number_or(options, "scatter", "theta", spec.theta);
    if (spec.theta <= 0) throw invalid_input("scatter.theta must be positive");
    spec.check_drift = bool_or(options, "scatter", "check_drift", spec.check_drift);
    spec.randomize_phases = bool_or(options, "scatter", "randomize_phases", false);
    if (spec.randomize_phases && spec.method != "chain")
        throw invalid_input("scatter.randomize_phases applies to the chain method only");
    if (spec.shape == "rectangle" && (model.name != "four-state" || spec.method != "numeric"))
        throw invalid_input("scatter.shape \"rectangle\" requires the four-state model "
                            "and the numeric method");
    if (model.name == "gaudin")
        throw invalid_input("scatter is not defined for the gaudin model: the B slot has "
                            "no crossing sweep");
    if (spec.method != "numeric" && model.name == "tavis-cummings")
        throw invalid_input("no closed scattering form for the tavis-cummings model; "
                            "use the numeric method");
    if (spec.method == "chain" && model.name != "four-state")
        throw invalid_input("the chain method requires the four-state model");
    return spec;
}

TaskOutcome run_scatter(const ModelContext& model, const ScatterSpec& spec, bool strict,
                        unsigned long long seed) {
    ScatterOptions sopts;
    sopts.evolve.theta = spec.theta;
    sopts.strict = strict;
    sopts.check_drift = spec.check_drift;

    std::unique_ptr<TransitionMatrix> tm;
    double r_drift = -1.0;
    double unitarity_defect = 0.0;
    long long steps = 0;
    std::string warning;
    int events = -1;

    if (model.name == "four-state") {
        const FourStateParams& p = model.four_state;
        sopts.regime_tag = to_string(four_state_regime(p));  // rejects boundary sweeps
        if (spec.method == "closed") {
            tm = std::make_unique<TransitionMatrix>(four_state_closed_form(p));
        } else if (spec.method == "chain") {
            ChainScatteringPlan plan = four_state_event_sequence(p, spec.horizon);
            if (spec.randomize_phases)
                four_state_randomize_phases(plan, static_cast<unsigned>(seed));
            events = static_cast<int>(plan.events.size());
            tm = std::make_unique<TransitionMatrix>(chain_scatter(plan).second);
        } else {
            const PathBuilder builder = spec.shape == "rectangle"
                                            ? four_state_rectangle_builder(p)
                                            : four_state_sweep_builder(p);
            ScatterResult res =
                numeric_transition_matrix(*model.family, builder, spec.horizon, sopts);
            r_drift = res.r_drift;
            unitarity_defect = res.unitarity_defect;
            steps = res.steps_taken;
            warning = res.warning;
            tm = std::make_unique<TransitionMatrix>(std::move(res.matrix));
        }
    } else if (model.name == "lz2") {
        if (spec.method == "closed") {
            const double p = lz_probability(model.lz_coupling, std::abs(model.lz_slope));
            RealMatrix entries(2, 2);
            entries << p, 1.0 - p, 1.0 - p, p;
            tm = std::make_unique<TransitionMatrix>(entries,
                                                    std::vector<std::string>{"0", "1"});
        } else {
            ScatterResult res = numeric_transition_matrix(
                *model.family, time_sweep_builder(model.base, 0), spec.horizon, sopts);
            r_drift = res.r_drift;
            unitarity_defect = res.unitarity_defect;
            steps = res.steps_taken;
            warning = res.warning;
            tm = std::make_unique<TransitionMatrix>(std::move(res.matrix));
        }
    } else {  // tavis-cummings, numeric only
        ScatterResult res = numeric_transition_matrix(
            *model.family, time_sweep_builder(model.base, 0), spec.horizon, sopts);
        r_drift = res.r_drift;
        unitarity_defect = res.unitarity_defect;
        steps = res.steps_taken;
        warning = res.warning;
        tm = std::make_unique<TransitionMatrix>(std::move(res.matrix));
    }

    TaskOutcome out;
    const int dim = tm->dim();
    out.table.columns = {"from", "to", "probability"};
    for (int m = 0; m < dim; ++m)
        for (int n = 0; n < dim; ++n)
            out.table.rows.push_back({m, n, cell((*tm)(n, m))});

    json probs = json::array();
    for (int n = 0; n < dim; ++n) {
        json row = json::array();
        for (int m = 0; m < dim; ++m) row.push_back(tm->entries()(n, m));
        probs.push_back(std::move(row));
    }
    out.results["method"] = spec.method;
    if (spec.method == "numeric") out.results["shape"] = spec.shape;
    if (spec.method != "closed") out.results["horizon"] = spec.horizon;
    if (!tm->regime_tag().empty()) out.results["regime"] = tm->regime_tag();
    out.results["labels"] = tm->labels();
    out.results["probabilities"] = std::move(probs);
    out.results["stochastic_defect"] = cell(tm->stochastic_defect());
    if (events >= 0) out.results["events"] = events;
    if (spec.method == "numeric") {
        out.results["unitarity_defect"] = cell(unitarity_defect);
        out.results["r_drift"] = r_drift < 0 ? json() : json(r_drift);
        out.results["steps"] = steps;
        if (!warning.empty()) out.results["warning"] = warning;
    }
    out.diagnostics["stochastic_defect"] = cell(tm->stochastic_defect());
    if (spec.method == "numeric") {
        out.diagnostics["unitarity_defect"] = cell(unitarity_defect);
        out.diagnostics["r_drift"] = r_drift < 0 ? json() : json(r_drift);
        if (!warning.empty()) out.diagnostics["warning"] = warning;
    }

    std::ostringstream summary;
    summary << "scatter[" << model.name << "/" << spec.method << "]: ";
    if (!tm->regime_tag().empty()) summary << "regime " << tm->regime_tag() << ", ";
    summary << "stochastic defect " << format_scientific(tm->stochastic_defect());
    if (spec.method == "numeric") {
        summary << ", unitarity defect " << format_scientific(unitarity_defect);
        if (r_drift >= 0) summary << ", R-drift " << format_scientific(r_drift);
    }
    out.summary = summary.str();
    return out;
}

// ---------------------------------------------------------------------------
// kappa-map
// ---------------------------------------------------------------------------

struct KappaSpec {
    GridSpec grid;
    ParamPoint base;
    int a = 0;
    int b = 1;
    int threads = 0;
};

KappaSpec read_kappa(const json& options, const ModelContext& model, int threads) {
    check_keys(options, "kappa_map", {"grid", "base", "pair"});
    KappaSpec spec;
    spec.grid = read_grid(options, "kappa_map.grid", model, -30.0, 30.0, 61);
    spec.base = read_base(options, "kappa_map", model);
    const int dim = model.family->dim();
    spec.a = dim > 2 ? 1 : 0;
    spec.b = dim > 2 ? 2 : 1;
    if (options.contains("pair")) {
        const json& pair = options.at("pair");
        if (!pair.is_array() || pair.size() != 2 || !pair.at(0).is_number_integer() ||
            !pair.at(1).is_number_integer())
            throw invalid_input("kappa_map.pair must be a two-entry array of level indices");
        spec.a = pair.at(0).get<int>();
        spec.b = pair.at(1).get<int>();
    }
    spec.threads = threads;
    return spec;
}

TaskOutcome run_kappa(const ModelContext& model, const KappaSpec& spec) {
    DomainMapOptions opts;
    opts.model = model.name;
    opts.threads = spec.threads;
    if (model.name == "four-state") opts.boundaries = four_state_boundary_lines(model.four_state);

    const DomainMap map = kappa_map(*model.family, spec.base, spec.grid.slot_x,
                                    spec.grid.slot_y, spec.grid.xs(), spec.grid.ys(), spec.a,
                                    spec.b, opts);

    TaskOutcome out;
    out.table.columns = {"x", "y", "kappa", "masked", "sector"};
    int masked = 0;
    double best = -1.0;
    int bx = -1, by = -1;
    for (int iy = 0; iy < map.ys.size(); ++iy)
        for (int ix = 0; ix < map.xs.size(); ++ix) {
            const double value = map.kappa(iy, ix);
            const bool is_masked = !std::isfinite(value);
            if (is_masked) {
                ++masked;
            } else if (value > best) {
                best = value;
                bx = ix;
                by = iy;
            }
            out.table.rows.push_back({cell(map.xs[ix]), cell(map.ys[iy]), cell(value),
                                      is_masked ? 1 : 0, map.labels(iy, ix)});
        }

    out.results["pair"] = {spec.a, spec.b};
    out.results["grid"] = {map.xs.size(), map.ys.size()};
    out.results["masked"] = masked;
    out.results["max_kappa"] = bx < 0 ? json() : json(best);
    out.results["argmax"] = bx < 0 ? json() : json({map.xs[bx], map.ys[by]});
    json lines = json::array();
    for (const BoundaryLine& line : map.boundaries)
        lines.push_back({{"slope", line.slope}, {"label", line.label}});
    out.results["boundaries"] = std::move(lines);
    out.diagnostics["masked"] = masked;
    out.diagnostics["max_kappa"] = bx < 0 ? json() : json(best);

    std::ostringstream summary;
    summary << "kappa-map[" << model.name << "]: " << map.xs.size() << "x" << map.ys.size()
            << " grid, ";
    if (bx >= 0)
        summary << "max |kappa| " << format_scientific(best) << " at (" << map.xs[bx] << ", "
                << map.ys[by] << "), ";
    summary << masked << " masked";
    out.summary = summary.str();
    return out;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepSpec {
    std::string parameter;
    double from = 0.0;
    double to = 0.0;
    int count = 0;
    std::string task;
};

SweepSpec read_sweep(const json& options) {
    check_keys(options, "sweep", {"parameter", "from", "to", "count", "task"});
    SweepSpec spec;
    spec.parameter = string_or(options, "sweep", "parameter", "");
    if (spec.parameter.empty()) throw invalid_input("sweep.parameter is required");
    if (!options.contains("from") || !options.contains("to"))
        throw invalid_input("sweep.from and sweep.to are required");
    spec.from = number_or(options, "sweep", "from", 0.0);
    spec.to = number_or(options, "sweep", "to", 0.0);
    spec.count = static_cast<int>(int_or(options, "sweep", "count", 0));
    if (spec.count < 2) throw invalid_input("sweep.count must be at least 2");
    spec.task = string_or(options, "sweep", "task", "");
    if (spec.task != "verify-family" && spec.task != "evolve" && spec.task != "scatter" &&
        spec.task != "kappa-map")
        throw invalid_input("sweep.task must name a non-sweep task");
    return spec;
}

void set_by_path(json& root, const std::string& dotted, double value) {
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot - start);
        if (key.empty()) throw invalid_input("sweep.parameter has an empty path component");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &((*node)[key]);
        start = dot + 1;
    }
}

const char* options_key_for(const std::string& task) {
    if (task == "verify-family") return "verify_family";
    if (task == "kappa-map") return "kappa_map";
    return task.c_str();  // evolve, scatter, sweep match their keys
}

// Forward declaration: sweeps re-enter the dispatcher per value.
TaskOutcome dispatch_task(const std::string& task, const json& config, int threads,
                          bool strict, unsigned long long seed, bool trace_flag);

TaskOutcome run_sweep(const json& config, const SweepSpec& spec, int threads, bool strict,
                      unsigned long long seed) {
    json inner = config;
    inner.erase("sweep");
    inner.erase("output");
    inner.erase("task");

    std::vector<double> values(spec.count);
    for (int i = 0; i < spec.count; ++i)
        values[i] = spec.from + (spec.to - spec.from) * i / (spec.count - 1);

    // Preflight: a misspelled swept key or broken inner config is a config
    // error for the whole sweep, not a per-value failure.
    {
        json probe = inner;
        set_by_path(probe, spec.parameter, values.front());
        const ModelContext model = build_model(probe.at("model"));
        const json options = probe.value(options_key_for(spec.task), json::object());
        if (spec.task == "verify-family")
            read_verify(options, model, 1);
        else if (spec.task == "evolve")
            read_evolve(options, model, false);
        else if (spec.task == "scatter")
            read_scatter(options, model);
        else
            read_kappa(options, model, 1);
        check_keys(probe, "config",
                   {"model", "verify_family", "evolve", "scatter", "kappa_map", "seed",
                    "threads", "strict"});
    }

    // Column layout must not depend on which values succeed.
    const ModelContext layout_model = build_model(inner.at("model"));
    const int dim = layout_model.family->dim();
    const bool has_initial = inner.contains("evolve") && inner.at("evolve").contains("initial");

    TaskOutcome out;
    out.table.columns = {spec.parameter, "status"};
    std::vector<std::string> scalar_keys;
    if (spec.task == "scatter") {
        for (int m = 0; m < dim; ++m)
            for (int n = 0; n < dim; ++n)
                scalar_keys.push_back("p_" + std::to_string(m) + "_" + std::to_string(n));
        scalar_keys.push_back("unitarity_defect");
        scalar_keys.push_back("r_drift");
    } else if (spec.task == "verify-family") {
        scalar_keys = {"worst_commutator", "worst_curl", "worst_full"};
    } else if (spec.task == "evolve") {
        scalar_keys = {"steps", "unitarity_defect"};
        if (has_initial)
            for (int a = 0; a < dim; ++a) scalar_keys.push_back("pop_" + std::to_string(a));
    } else {
        scalar_keys = {"max_kappa", "masked"};
    }
    for (const std::string& key : scalar_keys) out.table.columns.push_back(key);

    struct RowResult {
        std::string status = "ok";
        std::string message;
        std::vector<json> scalars;
    };
    std::vector<RowResult> rows(spec.count);

    parallel_for(spec.count, threads, [&](int i) {
        RowResult& row = rows[i];
        try {
            json patched = inner;
            set_by_path(patched, spec.parameter, values[i]);
            const TaskOutcome one = dispatch_task(spec.task, patched, 1, strict, seed, false);
            const json& res = one.results;
            if (spec.task == "scatter") {
                for (int m = 0; m < dim; ++m)
                    for (int n = 0; n < dim; ++n)
                        row.scalars.push_back(res.at("probabilities").at(n).at(m));
                row.scalars.push_back(res.value("unitarity_defect", json()));
                row.scalars.push_back(res.value("r_drift", json()));
            } else if (spec.task == "verify-family") {
                for (const char* key : {"worst_commutator", "worst_curl", "worst_full"})
                    row.scalars.push_back(res.at(key));
            } else if (spec.task == "evolve") {
                row.scalars.push_back(res.at("steps"));
                row.scalars.push_back(res.at("unitarity_defect"));
                if (has_initial)
                    for (int a = 0; a < dim; ++a)
                        row.scalars.push_back(res.at("populations").at(a));
            } else {
                row.scalars.push_back(res.at("max_kappa"));
                row.scalars.push_back(res.at("masked"));
            }
            if (one.exit_code == 4) row.status = "threshold_exceeded";
        } catch (const invalid_input& err) {
            row.status = "invalid_input";
            row.message = err.what();
        } catch (const numerical_failure& err) {
            row.status = "numerical_failure";
            row.message = err.what();
        } catch (const resource_limit& err) {
            row.status = "resource_limit";
            row.message = err.what();
        }
        row.scalars.resize(scalar_keys.size(), json());
    });

    int ok = 0;
    json record_rows = json::array();
    for (int i = 0; i < spec.count; ++i) {
        const RowResult& row = rows[i];
        std::vector<json> cells = {cell(values[i]), row.status};
        cells.insert(cells.end(), row.scalars.begin(), row.scalars.end());
        out.table.rows.push_back(std::move(cells));

        json record;
        record["value"] = values[i];
        record["status"] = row.status;
        if (!row.message.empty()) record["message"] = row.message;
        for (std::size_t s = 0; s < scalar_keys.size(); ++s)
            record[scalar_keys[s]] = row.scalars[s];
        record_rows.push_back(std::move(record));
        if (row.status == "ok" || row.status == "threshold_exceeded") ++ok;
    }

    out.results["parameter"] = spec.parameter;
    out.results["task"] = spec.task;
    out.results["from"] = spec.from;
    out.results["to"] = spec.to;
    out.results["count"] = spec.count;
    out.results["values"] = values;
    out.results["rows"] = std::move(record_rows);
    out.results["ok"] = ok;
    out.results["failed"] = spec.count - ok;
    out.diagnostics["ok"] = ok;
    out.diagnostics["failed"] = spec.count - ok;

    std::ostringstream summary;
    summary << "sweep " << spec.parameter << " in [" << spec.from << ", " << spec.to << "] x "
            << spec.count << " -> " << spec.task << ": " << ok << " ok, " << spec.count - ok
            << " failed";
    out.summary = summary.str();
    return out;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

TaskOutcome dispatch_task(const std::string& task, const json& config, int threads,
                          bool strict, unsigned long long seed, bool trace_flag) {
    const ModelContext model = build_model(config.at("model"));
    const json options = config.value(options_key_for(task), json::object());
    if (task == "verify-family") return run_verify(model, read_verify(options, model, threads), strict);
    if (task == "evolve") return run_evolve(model, read_evolve(options, model, trace_flag));
    if (task == "scatter") return run_scatter(model, read_scatter(options, model), strict, seed);
    if (task == "kappa-map") return run_kappa(model, read_kappa(options, model, threads));
    throw invalid_input("unknown task \"" + task +
                        "\" (expected verify-family, evolve, scatter, kappa-map, or sweep)");
}

void write_output(const std::string& path, const std::string& format, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot open output file: " + path);
    if (format == "csv")
        write_table_csv(out, table);
    else
        write_table_json(out, table);
    out.flush();
    if (!out) throw invalid_input("failed while writing output file: " + path);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int exit_code_for(const std::exception& err) {
    if (dynamic_cast<const numerical_failure*>(&err)) return 3;
    return 2;  // invalid input, resource limits, parse errors
}

json RunRecord::to_json() const {
    json doc;
    doc["version"] = version;
    doc["task"] = task;
    doc["config"] = config_echo;
    doc["summary"] = summary;
    doc["timings"] = {{"wall_seconds", wall_seconds}};
    doc["results"] = results;
    doc["diagnostics"] = diagnostics;
    doc["exit_code"] = exit_code;
    return doc;
}

RunRecord run_experiment(const json& config, const CliOverrides& overrides) {
    if (!config.is_object()) throw invalid_input("config must be a JSON object");
    check_keys(config, "config",
               {"model", "task", "output", "seed", "threads", "strict", "verify_family",
                "evolve", "scatter", "kappa_map", "sweep"});
    if (!config.contains("model")) throw invalid_input("missing required key \"model\"");

    std::string task = string_or(config, "config", "task", "");
    if (!overrides.task.empty()) {
        if (!task.empty() && task != overrides.task)
            throw invalid_input("task mismatch: config says \"" + task +
                                "\" but the command line says \"" + overrides.task + "\"");
        task = overrides.task;
    }
    if (task.empty()) throw invalid_input("no task selected (config field or subcommand)");

    int threads = static_cast<int>(int_or(config, "config", "threads", 0));
    if (overrides.threads > 0) threads = overrides.threads;
    const long long config_seed = int_or(config, "config", "seed", 0);
    if (config_seed < 0) throw invalid_input("config.seed must be non-negative");
    unsigned long long seed = static_cast<unsigned long long>(config_seed);
    if (overrides.seed_set) seed = overrides.seed;
    const bool strict = bool_or(config, "config", "strict", false) || overrides.strict;

    std::string out_path, out_format;
    if (config.contains("output")) {
        const json& output = config.at("output");
        check_keys(output, "output", {"path", "format"});
        out_path = string_or(output, "output", "path", "");
        out_format = string_or(output, "output", "format", "");
    }
    if (!overrides.out.empty()) out_path = overrides.out;
    if (out_format.empty() && !out_path.empty()) {
        const bool json_ext =
            out_path.size() >= 5 && out_path.compare(out_path.size() - 5, 5, ".json") == 0;
        out_format = json_ext ? "json-text" : "csv";
    }
    if (!out_format.empty() && out_format != "csv" && out_format != "json-text")
        throw invalid_input("output.format must be \"csv\" or \"json-text\"");

    RunRecord record;
    record.task = task;
    record.config_echo = config;
    record.config_echo["task"] = task;
    record.config_echo["threads"] = threads;
    record.config_echo["seed"] = seed;
    record.config_echo["strict"] = strict;
    if (!out_path.empty())
        record.config_echo["output"] = {{"path", out_path}, {"format", out_format}};

    const auto start = std::chrono::steady_clock::now();
    TaskOutcome outcome;
    if (task == "sweep") {
        const SweepSpec spec = read_sweep(config.value("sweep", json::object()));
        outcome = run_sweep(config, spec, threads, strict, seed);
    } else {
        outcome = dispatch_task(task, config, threads, strict, seed, overrides.trace_spectrum);
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!out_path.empty()) write_output(out_path, out_format, outcome.table);

    record.summary = outcome.summary;
    record.results = std::move(outcome.results);
    record.diagnostics = std::move(outcome.diagnostics);
    record.exit_code = outcome.exit_code;
    return record;
}

RunRecord run_experiment_file(const std::string& config_path, const CliOverrides& overrides) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw invalid_input("cannot read config file: " + config_path);
    json config;
    try {
        config = json::parse(in);
    } catch (const json::parse_error& err) {
        throw invalid_input(std::string("config parse error: ") + err.what());
    }
    return run_experiment(config, overrides);
}

}  // namespace mlz
