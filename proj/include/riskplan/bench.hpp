#pragma once

#include "riskplan/planner.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskplan {

// Random-environment generator knobs. Obstacle count and radius are drawn
// uniformly; layouts are rejection-sampled until obstacles are pairwise
// disjoint, clear of the origin/destination keep-out discs, and the initial
// NLP passes. Defaults sized for a 10x10 workspace; desk-scale suites shrink
// them via config.
struct EnvGenConfig {
    int min_obstacles = 4;
    int max_obstacles = 8;
    double min_radius = 0.3;
    double max_radius = 0.8;
    double keepout = 0.3; // extra clearance around origin and destination
    NlpOptions nlp;       // feasibility screen
    void validate() const;
};

struct EnvSuite {
    std::vector<Scenario> envs;
    std::vector<char> nlp_feasible; // per env; all 1 by construction
    std::uint64_t seed = 0;
};

// Rejection-samples n environments from the template scenario. Throws
// GenerationExhausted after 100 n layout attempts.
EnvSuite gen_envs(int n, const Scenario& tmpl, const EnvGenConfig& gen, std::uint64_t seed);

// Planner variants under comparison: the raw NLP reference, distance-based
// segment acceptance (min nominal clearance >= d), worst-case reachability
// (the density check with gamma = 0, so any estimated contact rejects), and
// the full density method.
struct BenchVariant {
    enum class Kind { Original, Distance, Reach, Density };
    Kind kind = Kind::Density;
    double d = 0.0; // clearance threshold, Distance only
};
std::string variant_name(const BenchVariant& v);

struct BenchConfig {
    PlannerConfig planner;    // shared by density/reach/distance runs
    int mc_rollouts = 100000; // safety re-check per feasible plan
    int mc_substeps = 1;
    std::uint64_t mc_seed = 0;
    void validate(VehicleModel m, const ControlBounds& bounds) const;
};

struct BenchRun {
    int env = -1;
    bool feasible = false;
    double mc_collision = 0.0; // any-timestep MC frequency; 0 when infeasible
    double runtime_s = 0.0;
    int nlp_solves = 0;
    int repairs = 0;
};

struct BenchResult {
    BenchVariant variant;
    std::vector<BenchRun> runs; // fixed env order
    double feasibility = 0.0;   // fraction of envs with a returned plan
    double safety = 0.0;        // mean MC collision over feasible runs
    double runtime_s = 0.0;     // summed planning time
};

// Runs one variant over the whole suite. Planning failures (PlanFailed,
// InfeasibleNlp) count against feasibility, they do not propagate.
BenchResult run_variant(const BenchVariant& v, const EnvSuite& suite, const Predictor& pred,
                        const BenchConfig& cfg);

// Sample-efficiency comparison: density estimator vs plain Monte Carlo on the
// scenario's NLP reference, medians and spreads over seeds per sample count,
// against a large-N Monte Carlo oracle.
struct EfficiencyRow {
    int n = 0; // samples for the estimator, rollouts for MC
    double density_median = 0.0, density_lo = 0.0, density_hi = 0.0;
    double mc_median = 0.0, mc_lo = 0.0, mc_hi = 0.0;
};
struct EfficiencyStudy {
    double oracle_risk = 0.0; // MC at cfg.oracle_rollouts
    std::vector<EfficiencyRow> rows;
};
struct EfficiencyConfig {
    EstimatorOptions estimator;
    int oracle_rollouts = 1000000;
    std::uint64_t oracle_seed = 9001;
    int mc_substeps = 1;
    NlpOptions nlp;
};
EfficiencyStudy sample_efficiency_study(const Predictor& pred, const Scenario& sc,
                                        const std::vector<int>& sizes,
                                        const std::vector<std::uint64_t>& seeds,
                                        const EfficiencyConfig& cfg);

} // namespace riskplan
