#pragma once

#include "riskplan/dynamics.hpp"

#include <vector>

namespace riskplan {

// Piecewise-constant reference: controls[k] is held on [k·dt, (k+1)·dt).
// Nominal states are integrated once at construction with RK4 using
// `substeps` subdivisions per step, so states[k] = q_ref(k·dt).
struct ReferenceTrajectory {
    VehicleModel model = VehicleModel::Car;
    double dt = 0.02;
    int substeps = 10;
    std::vector<ControlVec> controls; // size T
    std::vector<StateVec> states;     // size T+1

    int steps() const { return static_cast<int>(controls.size()); }
    double horizon() const { return steps() * dt; }
};

ReferenceTrajectory make_reference(VehicleModel model, const StateVec& q0,
                                   std::vector<ControlVec> controls, double dt,
                                   int substeps = 10);

// The same reference restricted to steps [from, T); its t=0 state is the
// original states[from]. Used to re-index time when composing flows and when
// checking plan segments one at a time.
ReferenceTrajectory tail_from(const ReferenceTrajectory& ref, int from);

// One RK4 step of the open-loop vehicle dynamics under constant control;
// heading wrapped afterwards.
StateVec rk4_vehicle_step(VehicleModel m, const StateVec& q, const ControlVec& u, double h);

} // namespace riskplan
