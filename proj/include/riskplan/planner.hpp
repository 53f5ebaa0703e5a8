#pragma once

#include "riskplan/probest.hpp"
#include "riskplan/trajopt.hpp"

#include <cstdint>
#include <vector>

namespace riskplan {

// Knobs for segment-wise verification and repair.
struct PlannerConfig {
    double gamma = 1e-4;  // per-segment risk threshold; 0 degenerates to
                          // worst-case reachability (any contact rejects)
    int n_samples = 1000; // pushed samples per segment check
    ControlVec perturb_range{0.5, 0.5, 0.5}; // half-range of du per control dim
    int levels = 5;        // grid levels per dim, odd so du = 0 is a grid point
    int max_attempts = 100; // candidates tried per repair before giving up
    std::uint64_t seed = 0;
    // Entry uncertainty for segment j > 0: re-center the scenario's initial
    // error distribution at the segment start (the tracking controller
    // re-contracts each segment), or push the previous segment's terminal
    // sample cloud through instead.
    bool propagate_entry = false;
    int substeps = 10;          // RK4 substeps for segment references
    EstimatorOptions estimator; // per-check knobs; seed is derived, not read
    NlpOptions nlp;             // used by the re-solves

    void validate(VehicleModel m, const ControlBounds& bounds) const;
};

struct SegmentCheck {
    double risk = 0.0; // summed collision probability over steps x obstacles
    bool safe = false; // risk <= gamma
};

// Risk of one trajectory segment under the closed-loop tracking model, entry
// uncertainty given as a distribution at the segment's first state. Uses
// cfg.seed; deterministic.
SegmentCheck check_segment(const Predictor& pred, const ReferenceTrajectory& segment,
                           const std::vector<Obstacle>& obstacles, const BoxDistribution& entry,
                           const BoxDistribution& dist_dist, const PlannerConfig& cfg);

// Control-perturbation candidates: the R-level grid over the perturbation
// range, du = 0 excluded, sorted by ascending |du| (ties keep grid order).
std::vector<ControlVec> perturb_segment(VehicleModel m, const PlannerConfig& cfg);

struct SegmentReport {
    enum class Verdict { Safe, Repaired, Failed };
    Verdict verdict = Verdict::Safe;
    double risk = 0.0; // recorded risk at accept time
    int attempts = 0;  // candidates checked during repair (0 when safe as planned)
    ControlVec delta{}; // accepted perturbation after clamping (zero when safe)
    // Distance between the perturbed and originally planned segment endpoints
    // (position dims). Recorded, not thresholded.
    double endpoint_deviation = 0.0;
};

struct PlanTrace {
    SegmentedPlan plan; // final controls; states by the Euler contract
    std::vector<SegmentReport> segments;
    int nlp_solves = 0;
    double total_risk = 0.0; // sum of recorded per-segment risks
};

// Segment-by-segment verification with perturbation repair: solve the NLP,
// check segments in order, and on an unsafe segment scan candidates until
// one passes, substitute it, advance the anchor to its endpoint and re-solve
// the remainder. Throws PlanFailed{segment} when a repair exhausts its
// attempts; InfeasibleNlp propagates from the re-solves.
PlanTrace plan(const Scenario& sc, const Predictor& pred, const PlannerConfig& cfg);

} // namespace riskplan
