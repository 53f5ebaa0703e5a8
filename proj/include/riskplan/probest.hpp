#pragma once

#include "riskplan/distributions.hpp"
#include "riskplan/hull.hpp"
#include "riskplan/predictor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace riskplan {

struct Obstacle {
    std::array<double, 3> center{}; // z ignored for planar models
    double radius = 0.0;
};

// Initial draws for the estimator: states uniform over the support of the
// initial error distribution (their density goes into the weight, per the
// ratio estimator), one disturbance draw per sample, also uniform over the
// disturbance support with its density folded into the weight.
struct InitialSamples {
    std::vector<ErrorVec> e0;
    std::vector<ControlVec> dist;
    std::vector<double> log_weight0; // log rho0(e0) + log p(d)
};
InitialSamples sample_initial(const BoxDistribution& init, const BoxDistribution& dist_dist,
                              int n, std::uint64_t seed);

// Sample cloud pushed to one timestep.
struct PushedCloud {
    VehicleModel model = VehicleModel::Car;
    int t_index = 0;
    StateVec q_ref{};
    std::vector<ErrorVec> errors;
    std::vector<StateVec> states;    // errors mapped through the reference
    std::vector<double> log_density; // log_weight0 + g
    int size() const { return static_cast<int>(errors.size()); }
};

// One-shot push of fresh samples to step t (the incremental path used by
// total_risk() walks a Propagation instead).
PushedCloud push_forward(const Predictor& pred, const InitialSamples& init,
                         const ReferenceTrajectory& ref, VehicleModel m, int t);

// Build the cloud for the propagation's current step.
PushedCloud cloud_at(const Propagation& prop, const InitialSamples& init,
                     const ReferenceTrajectory& ref, VehicleModel m);

// Nearest-neighbor density at a raw error query (linear scale).
double interp_density(const PushedCloud& cloud, const ErrorVec& query);

struct EstimatorOptions {
    int n_queries = 4000;
    double r_override = 0.0; // > 0: inflation radius, in the active metric
    bool normalize = true;   // per-dim std normalization of error coords
    std::uint64_t seed = 0;
};

// Query points drawn once per timestep and shared by every region evaluated
// there, so that partition masses add up to the denominator exactly.
struct QuerySet {
    std::vector<ErrorVec> errors;  // raw error coordinates
    std::vector<StateVec> states;  // mapped world states
    std::vector<double> weight;    // NN density, rescaled by exp(-shift)
    double r = 0.0;                // inflation radius used (active metric)
};
QuerySet make_queries(const PushedCloud& cloud, const EstimatorOptions& opt);

using RegionPred = std::function<bool(const ErrorVec& e, const StateVec& q)>;

double reach_prob(const QuerySet& qs, const RegionPred& in_region);
double estimate_reach_prob(const PushedCloud& cloud, const RegionPred& in_region,
                           const EstimatorOptions& opt);

bool inside_obstacle(VehicleModel m, const StateVec& q, const Obstacle& obs);
double collision_prob(const PushedCloud& cloud, const Obstacle& obs, const EstimatorOptions& opt);

struct RiskReport {
    std::string variant;             // "density" | "monte-carlo"
    int n_samples = 0;               // pushed samples or rollouts
    int n_queries = 0;               // density variant only
    int T = 0;
    int n_obstacles = 0;
    std::vector<double> per_entry;   // T x n_obstacles, rows are t = 1..T
    double total_raw = 0.0;          // Eq. 2 sum; can exceed 1
    double total = 0.0;              // clamped to [0, 1]
    double any_timestep = -1.0;      // MC only: any-collision frequency
    double entry(int t, int i) const { return per_entry[(t - 1) * n_obstacles + i]; }
};

RiskReport total_risk(const Predictor& pred, const ReferenceTrajectory& ref, int T,
                      const std::vector<Obstacle>& obstacles, const BoxDistribution& init,
                      const BoxDistribution& dist_dist, int n_samples,
                      const EstimatorOptions& opt);

struct GridSpec {
    double origin_x = 0.0, origin_y = 0.0;
    double cell = 0.1;
    int nx = 1, ny = 1;
};
struct Heatmap {
    GridSpec grid;
    int t_index = 0;
    std::vector<double> mass; // row-major: iy * nx + ix
};
// Square-cell grid covering the projected samples plus the inflation margin.
GridSpec auto_grid(const PushedCloud& cloud, const EstimatorOptions& opt, int nx, int ny);
Heatmap make_heatmap(const PushedCloud& cloud, const GridSpec& grid, const EstimatorOptions& opt);

// Monte Carlo baseline: closed-loop rollouts in world coordinates, collision
// frequencies per (t, obstacle) plus the any-timestep frequency.
RiskReport mc_collision_prob(VehicleModel m, const ReferenceTrajectory& ref,
                             const ClosedLoopParams& cl, const BoxDistribution& init,
                             const BoxDistribution& dist_dist,
                             const std::vector<Obstacle>& obstacles, int T, int n_rollouts,
                             std::uint64_t seed, int rollout_substeps = 1);

// Projected extent of the reach-set approximation, for export and plotting.
struct ReachSetApprox {
    int t_index = 0;
    double r = 0.0;
    std::vector<int> hull2d; // CCW indices into cloud.states
    Hull3D hull3d;           // filled for the 3D model
};
ReachSetApprox reach_set(const PushedCloud& cloud, const EstimatorOptions& opt);

} // namespace riskplan
