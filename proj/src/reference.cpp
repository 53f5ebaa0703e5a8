#include "riskplan/reference.hpp"

#include "riskplan/errors.hpp"

namespace riskplan {

StateVec rk4_vehicle_step(VehicleModel m, const StateVec& q, const ControlVec& u, double h) {
    const StateVec k1 = vehicle_dynamics(m, q, u);
    StateVec q2{}, q3{}, q4{};
    for (int i = 0; i < 4; ++i) q2[i] = q[i] + 0.5 * h * k1[i];
    const StateVec k2 = vehicle_dynamics(m, q2, u);
    for (int i = 0; i < 4; ++i) q3[i] = q[i] + 0.5 * h * k2[i];
    const StateVec k3 = vehicle_dynamics(m, q3, u);
    for (int i = 0; i < 4; ++i) q4[i] = q[i] + h * k3[i];
    const StateVec k4 = vehicle_dynamics(m, q4, u);
    StateVec out{};
    for (int i = 0; i < 4; ++i) out[i] = q[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    const int hi = state_dim(m) - 1;
    out[hi] = wrap_angle(out[hi]);
    return out;
}

ReferenceTrajectory make_reference(VehicleModel model, const StateVec& q0,
                                   std::vector<ControlVec> controls, double dt, int substeps) {
    if (dt <= 0.0 || substeps < 1) throw ConfigError("reference: dt and substeps must be positive");
    ReferenceTrajectory ref;
    ref.model = model;
    ref.dt = dt;
    ref.substeps = substeps;
    ref.controls = std::move(controls);
    ref.states.reserve(ref.controls.size() + 1);
    ref.states.push_back(q0);
    const double h = dt / substeps;
    StateVec q = q0;
    for (const ControlVec& u : ref.controls) {
        for (int s = 0; s < substeps; ++s) q = rk4_vehicle_step(model, q, u, h);
        ref.states.push_back(q);
    }
    return ref;
}

ReferenceTrajectory tail_from(const ReferenceTrajectory& ref, int from) {
    if (from < 0 || from > ref.steps()) throw ConfigError("tail_from: step index out of range");
    ReferenceTrajectory out;
    out.model = ref.model;
    out.dt = ref.dt;
    out.substeps = ref.substeps;
    out.controls.assign(ref.controls.begin() + from, ref.controls.end());
    out.states.assign(ref.states.begin() + from, ref.states.end());
    return out;
}

} // namespace riskplan
