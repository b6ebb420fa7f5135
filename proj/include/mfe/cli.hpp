#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mfe {

/// Parsed command-line options shared by all subcommands.
struct CliOptions {
    std::string scenario_path;
    std::string baseline_path;  // compare: second scenario
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;  // 0 = --threads absent and MFE_THREADS unset
    std::string percentile_convention;  // "", "node-index", "probability"
    bool path_mode = false;
    std::vector<int> np_list{100, 1000, 10000};
    int replications = 200;
    double tail_upper = 1.6;
    double tail_lower = 0.625;
};

/// Subcommand bodies. Each validates inputs, runs the pipeline, and writes its
/// output files under options.out_dir; failures are reported by throwing
/// (mfe::Error for domain errors). Returns the process exit code (always 0).
int cmd_solve(const CliOptions& options);
int cmd_analyze(const CliOptions& options);
int cmd_converge(const CliOptions& options);
int cmd_compare(const CliOptions& options);

/// Full argv entry point: parses flags, dispatches, and maps errors to the
/// exit-code contract (0 success, 2 validation/input error, 3 numerical error).
int run_cli(int argc, const char* const* argv);

}  // namespace mfe
