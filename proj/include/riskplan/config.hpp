#pragma once

#include "riskplan/bench.hpp"
#include "riskplan/learner.hpp"
#include "riskplan/planner.hpp"
#include "riskplan/trajopt.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskplan {

// Heatmap export grid: a square-cell auto grid fitted to the pushed cloud.
struct HeatmapSpec {
    int t_index = 0;
    int nx = 60;
    int ny = 60;
};

struct BenchSection {
    int n_envs = 10;
    std::uint64_t suite_seed = 0;
    EnvGenConfig gen;
    int mc_rollouts = 100000;
    int mc_substeps = 1;
    std::uint64_t mc_seed = 0;
    std::vector<double> distance_margins_m{0.1};
};

// Parsed, fully resolved configuration file. Physical quantities carry their
// unit in the JSON field name (dt_s, radius_m, sigma_theta_rad, ...); unknown
// keys anywhere in the file are rejected.
struct ConfigFile {
    int schema_version = 1;
    Scenario scenario;

    // "model" section: dataset generation plus training hyperparameters.
    DataGenConfig datagen;
    int n_traj = 2000;
    TrainConfig training;

    PlannerConfig planner;
    HeatmapSpec heatmap;
    BenchSection bench;

    std::uint64_t config_hash = 0; // FNV-1a of the canonical JSON dump
};

// Both throw ConfigError on parse failures, unknown keys, or bad values.
ConfigFile parse_config(const std::string& json_text);
ConfigFile load_config(const std::string& path);

} // namespace riskplan
