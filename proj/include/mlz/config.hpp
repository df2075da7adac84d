#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "mlz/errors.hpp"

namespace mlz {

// Version stamp written into every run record so result files can be traced
// back to the code that produced them.
inline constexpr const char* kArtifactVersion = "0.3.0";

// Command-line settings layered over the config file; the file supplies the
// experiment, the flags supply the session (paths, parallelism, strictness).
struct CliOverrides {
    std::string task;  // subcommand; must agree with the config's task if both set
    std::string out;   // overrides output.path
    int threads = 0;   // > 0 overrides the config's thread count
    bool seed_set = false;
    unsigned long long seed = 0;
    bool strict = false;          // ORed with the config flag
    bool trace_spectrum = false;  // evolve --trace-spectrum
};

// Everything one invocation produced. `results` and the output file are
// deterministic for a fixed config and seed; timings live only here.
struct RunRecord {
    nlohmann::json config_echo;  // effective config after overrides
    std::string version = kArtifactVersion;
    std::string task;
    std::string summary;  // the one-line human report
    double wall_seconds = 0.0;
    nlohmann::json results;      // task payload, never contains timings
    nlohmann::json diagnostics;  // defects, drifts, worst residual norms
    int exit_code = 0;           // 4 when a strict verification gate failed

    nlohmann::json to_json() const;
};

// Parse the config strictly (unknown keys are errors), dispatch the task,
// write the output file if one is requested, and return the record.
RunRecord run_experiment(const nlohmann::json& config, const CliOverrides& overrides = {});

// Same, reading and parsing the config file first.
RunRecord run_experiment_file(const std::string& config_path,
                              const CliOverrides& overrides = {});

// Locale-independent decimal formatting with 17 significant digits, enough
// to round-trip any double bit-exactly.
std::string csv_number(double v);

// Exit code for a thrown library error (2 bad input or resource limit,
// 3 numerical failure, 2 for anything else such as a config parse error).
int exit_code_for(const std::exception& err);

}  // namespace mlz
