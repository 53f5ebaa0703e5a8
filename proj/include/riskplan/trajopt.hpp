#pragma once

#include <vector>

#include "riskplan/distributions.hpp"
#include "riskplan/dynamics.hpp"
#include "riskplan/probest.hpp"

namespace riskplan {

// Planning problem: reach q_dest from q_origin in T steps of dt seconds,
// split into N segments of L = ceil(T/N) steps (the horizon is padded up to
// N*L when T is not a multiple of N).
struct Scenario {
    VehicleModel model = VehicleModel::Car;
    StateVec q_origin{};
    StateVec q_dest{};
    std::vector<Obstacle> obstacles;
    int T = 50;
    int N = 5;
    double dt = 0.02;
    ControlBounds bounds;
    ControllerGains gains;   // closed-loop tracking gains used downstream
    BoxDistribution init;    // initial tracking-error distribution
    BoxDistribution dist;    // disturbance distribution
    double gamma = 1e-4;     // per-segment collision risk threshold
    std::array<double, 3> workspace_lo{-50.0, -50.0, -50.0};
    std::array<double, 3> workspace_hi{50.0, 50.0, 50.0};

    int L() const { return N > 0 ? (T + N - 1) / N : 0; }
    int steps() const { return N * L(); } // padded horizon
    void validate() const;                // throws ConfigError
};

// Open-loop plan: one control per segment, states rolled out by forward
// Euler. The Euler recurrence is the defining one for plan states; RK4
// references for density propagation are built from the controls downstream.
struct SegmentedPlan {
    VehicleModel model = VehicleModel::Car;
    double dt = 0.02;
    int L = 1;
    std::vector<ControlVec> controls; // one per segment
    std::vector<StateVec> states;     // segments()*L + 1

    int segments() const { return static_cast<int>(controls.size()); }
    int steps() const { return segments() * L; }
    // Segment j owns steps [j*L, (j+1)*L); this is the control driving step k.
    const ControlVec& control_at(int k) const { return controls[k / L]; }
    // Per-step controls (each segment's value repeated L times).
    std::vector<ControlVec> per_step_controls() const;
};

// Euler rollout of per-segment controls. Controls must be within bounds.
SegmentedPlan rollout(const std::vector<ControlVec>& controls, const Scenario& sc);

struct NlpOptions {
    int outer_rounds = 5;
    int inner_iters = 2000;
    double step = 0.01;    // step size at mu = mu0; scaled by mu0/mu as mu grows
    double momentum = 0.9;
    double mu0 = 10.0;     // terminal penalty weight, times mu_factor per round
    double mu_factor = 1.0; // fixed by default: the Gauss-Newton step does the enforcing
    double tol_end = 0.1;  // feasibility: terminal position error
    double tol_obs = 1e-3; // feasibility: max obstacle penetration depth
    double heading_weight = 0.1;
};

struct NlpReport {
    double terminal_error = 0.0; // Euclidean position error at the horizon end
    double penetration = 0.0;    // max over (obstacle, step) of radius - distance, floored at 0
    double objective = 0.0;      // penalty objective at the final mu
    std::vector<double> round_terminal_error; // one entry per outer round
};

struct NlpResult {
    SegmentedPlan plan;
    NlpReport report;
};

// Penalty objective and its analytic gradient (reverse mode through the
// Euler rollout). Exposed for the finite-difference test; these do not
// project to bounds, the solver clamps before calling.
double penalty_objective(const Scenario& sc, const std::vector<ControlVec>& controls,
                         double mu_end, double heading_weight = 0.1);
std::vector<ControlVec> penalty_gradient(const Scenario& sc, const std::vector<ControlVec>& controls,
                                         double mu_end, double heading_weight = 0.1);

// Reference generation. Each iteration takes a damped Gauss-Newton step on
// the terminal residual and descends the squared obstacle-clearance hinge in
// its null space (momentum, projected to bounds), so clearance never trades
// against goal-reaching. Several detour initializations are tried; the first
// feasible one wins. Throws InfeasibleNlp when every start ends with terminal
// error > tol_end or penetration > tol_obs.
NlpResult solve_nlp(const Scenario& sc, const SegmentedPlan* warm_start = nullptr,
                    const NlpOptions& opt = {});

} // namespace riskplan
