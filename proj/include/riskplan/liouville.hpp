#pragma once

#include "riskplan/dynamics.hpp"
#include "riskplan/reference.hpp"

#include <vector>

namespace riskplan {

struct ClosedLoopParams {
    ControllerGains gains;
    ControlBounds bounds;
};

// One trajectory at step resolution. For density-free rollouts
// (simulate_rollout) log_densities is all zeros.
struct TrajectorySample {
    std::vector<double> times;         // T+1, k·dt
    std::vector<ErrorVec> errors;      // T+1
    std::vector<StateVec> states;      // T+1, world coordinates
    std::vector<double> log_densities; // T+1
};

struct AugmentedState {
    ErrorVec e{};
    double log_rho = 0.0;
};

// RK4 on the augmented ODE [ė; d(log ρ)/dt] = [f(e); −∇·f(e)] for an
// arbitrary autonomous field, n_steps fixed steps over [0, t]. The divergence
// is re-evaluated at every RK4 stage.
AugmentedState integrate_field_augmented(const FieldFn& field, int dim, const ErrorVec& e0,
                                         double log_rho0, double t, int n_steps);

// Advance one augmented sample by `steps` whole reference steps starting at
// step k0 (ref.substeps RK4 substeps each, heading wrapped after every
// substep). Throws NonFiniteState on divergence.
AugmentedState advance_augmented(VehicleModel m, const AugmentedState& s,
                                 const ReferenceTrajectory& ref, const ClosedLoopParams& cl,
                                 const ControlVec& dist, int k0, int steps);

// Closed-loop version along a reference: T steps of ref.dt, each split into
// ref.substeps RK4 substeps. Heading error wrapped after every substep.
// Throws NonFiniteState if any component diverges, HorizonExceeded if
// T > ref.steps().
TrajectorySample integrate_augmented(VehicleModel m, const ErrorVec& e0, double rho0,
                                     const ReferenceTrajectory& ref, const ClosedLoopParams& cl,
                                     const ControlVec& dist, int T);

// Error-space flow map Φ(e0, t); t may land inside a step (the trailing
// fraction is integrated with proportionally many substeps).
ErrorVec flow_map(VehicleModel m, const ErrorVec& e0, const ReferenceTrajectory& ref,
                  const ClosedLoopParams& cl, const ControlVec& dist, double t);

// Closed-loop rollout in world coordinates: the vehicle and the nominal
// reference state are integrated jointly, so a rollout started on the
// reference stays on it to machine precision. No density bookkeeping.
TrajectorySample simulate_rollout(VehicleModel m, const StateVec& q0,
                                  const ReferenceTrajectory& ref, const ClosedLoopParams& cl,
                                  const ControlVec& dist, int T);

} // namespace riskplan
