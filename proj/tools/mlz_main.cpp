#include <CLI11.hpp>
#include <exception>
#include <iostream>
#include <json.hpp>
#include <string>

#include "mlz/config.hpp"
#include "mlz/errors.hpp"

namespace {

const char* error_kind(const std::exception& err) {
    if (dynamic_cast<const mlz::invalid_input*>(&err)) return "invalid_input";
    if (dynamic_cast<const mlz::numerical_failure*>(&err)) return "numerical_failure";
    if (dynamic_cast<const mlz::resource_limit*>(&err)) return "resource_limit";
    return "error";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mlz - commuting Hamiltonian families: verification, evolution, "
                 "scattering, and adiabatic maps"};
    app.require_subcommand(0, 1);

    std::string config_path, out_path;
    int threads = 0;
    unsigned long long seed = 0;
    bool strict = false;
    app.add_option("--config", config_path, "experiment config file (JSON)");
    app.add_option("--out", out_path, "output file path (overrides the config)");
    app.add_option("--threads", threads, "worker cap; 0 = hardware (MLZ_MAX_THREADS caps)");
    auto* seed_opt = app.add_option("--seed", seed, "seed for randomized options");
    app.add_flag("--strict", strict, "escalate warnings and enforce verification gates");

    bool trace_spectrum = false;
    CLI::App* verify = app.add_subcommand("verify-family", "scan flatness residuals on a grid");
    CLI::App* evolve = app.add_subcommand("evolve", "propagate along a parameter path");
    evolve->add_flag("--trace-spectrum", trace_spectrum,
                     "emit adiabatic levels along the path instead of the state");
    CLI::App* scatter = app.add_subcommand("scatter", "transition matrix of a sweep");
    CLI::App* kappa = app.add_subcommand("kappa-map", "non-adiabaticity raster over a plane");
    CLI::App* sweep = app.add_subcommand("sweep", "repeat a task over one swept scalar");
    for (CLI::App* sub : {verify, evolve, scatter, kappa, sweep}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : 2;
    }

    if (app.get_subcommands().empty() && config_path.empty()) {
        std::cout << app.help();
        return 0;
    }
    if (config_path.empty()) {
        std::cerr << "error: --config is required\n";
        return 2;
    }

    mlz::CliOverrides overrides;
    if (!app.get_subcommands().empty())
        overrides.task = app.get_subcommands().front()->get_name();
    overrides.out = out_path;
    overrides.threads = threads;
    overrides.seed_set = seed_opt->count() > 0;
    overrides.seed = seed;
    overrides.strict = strict;
    overrides.trace_spectrum = trace_spectrum;

    try {
        const mlz::RunRecord record = mlz::run_experiment_file(config_path, overrides);
        std::cerr << record.summary << "\n";
        std::cout << record.to_json().dump(2) << "\n";
        return record.exit_code;
    } catch (const std::exception& err) {
        nlohmann::json doc;
        doc["error"] = {{"kind", error_kind(err)}, {"message", err.what()}};
        std::cerr << "error: " << err.what() << "\n";
        std::cout << doc.dump(2) << "\n";
        return mlz::exit_code_for(err);
    }
}
