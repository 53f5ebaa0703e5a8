#pragma once

#include <cstdint>
#include <string>

namespace riskplan {

inline constexpr const char* kToolVersion = "0.1.0";

// Options shared by all subcommands plus the per-command extras; the binary
// fills this from flags, tests construct it directly. Commands return the
// process exit code: 0 ok, 2 config error, 3 missing input artifact, 4
// runtime failure. Failures print a one-line JSON detail to stderr and leave
// no partial artifacts behind (outputs are staged and renamed into place).
struct CliOptions {
    std::string config_path;
    bool has_seed = false;
    std::uint64_t seed = 0; // overrides the relevant section seed
    int threads = 0;        // 0 = library default (all cores)
    bool oracle = false;    // closed-loop integrator instead of the learned model
    std::string out;        // primary output path; per-command default

    std::string data_path = "dataset.csv"; // train input
    std::string model_path;                // estimate/plan/heatmap input
    int n_traj_override = -1;              // gen-data; negative = use config
    bool has_suite_seed = false;
    std::uint64_t suite_seed = 0; // bench override
};

int cmd_gen_data(const CliOptions& opt);
int cmd_train(const CliOptions& opt);
int cmd_estimate(const CliOptions& opt);
int cmd_plan(const CliOptions& opt);
int cmd_bench(const CliOptions& opt);
int cmd_heatmap(const CliOptions& opt);

// Sibling manifest path for an artifact: extension replaced by .manifest.json.
std::string manifest_path(const std::string& artifact_path);

} // namespace riskplan
