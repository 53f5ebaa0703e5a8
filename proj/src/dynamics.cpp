#include "riskplan/dynamics.hpp"

#include <algorithm>

namespace riskplan {

StateVec car_dynamics(const StateVec& q, const ControlVec& u) {
    const double theta = q[2];
    return {u[0] * std::cos(theta), u[0] * std::sin(theta), u[1], 0.0};
}

StateVec hovercraft_dynamics(const StateVec& q, const ControlVec& u) {
    const double theta = q[3];
    return {u[0] * std::cos(theta), u[0] * std::sin(theta), u[1], u[2]};
}

StateVec vehicle_dynamics(VehicleModel m, const StateVec& q, const ControlVec& u) {
    return m == VehicleModel::Car ? car_dynamics(q, u) : hovercraft_dynamics(q, u);
}

ErrorVec tracking_error(VehicleModel m, const StateVec& q, const StateVec& q_ref) {
    const int hi = state_dim(m) - 1; // heading index
    const double theta = q[hi];
    const double c = std::cos(theta), s = std::sin(theta);
    const double dx = q_ref[0] - q[0];
    const double dy = q_ref[1] - q[1];
    ErrorVec e{};
    e[0] = c * dx + s * dy;
    e[1] = -s * dx + c * dy;
    if (m == VehicleModel::Car) {
        e[2] = wrap_angle(q_ref[2] - q[2]);
    } else {
        e[2] = q_ref[2] - q[2]; // e_z
        e[3] = wrap_angle(q_ref[3] - q[3]);
    }
    return e;
}

StateVec world_from_error(VehicleModel m, const ErrorVec& e, const StateVec& q_ref) {
    const int hi = state_dim(m) - 1;
    const double e_theta = (m == VehicleModel::Car) ? e[2] : e[3];
    const double theta = wrap_angle(q_ref[hi] - e_theta);
    const double c = std::cos(theta), s = std::sin(theta);
    StateVec q{};
    // invert e_planar = R(theta) (q_ref - q)  =>  q = q_ref - R(theta)^T e_planar
    q[0] = q_ref[0] - (c * e[0] - s * e[1]);
    q[1] = q_ref[1] - (s * e[0] + c * e[1]);
    if (m == VehicleModel::Car) {
        q[2] = theta;
    } else {
        q[2] = q_ref[2] - e[2];
        q[3] = theta;
    }
    return q;
}

ControlVec tracking_controller(VehicleModel m, const ErrorVec& e, const ControlVec& u_ref,
                               const ControllerGains& gains, const ControlVec& dist,
                               const ControlBounds& bounds) {
    ControlVec u{};
    if (m == VehicleModel::Car) {
        const double v_ref = u_ref[0], omega_ref = u_ref[1];
        u[0] = v_ref * std::cos(e[2]) + gains.k1 * e[0] + dist[0];
        u[1] = omega_ref + v_ref * (gains.k2 * e[1] + gains.k3 * std::sin(e[2])) + dist[1];
    } else {
        const double v_ref = u_ref[0], vz_ref = u_ref[1], omega_ref = u_ref[2];
        u[0] = v_ref * std::cos(e[3]) + gains.k1 * e[0] + dist[0];
        u[1] = vz_ref + gains.k4 * e[2] + dist[1];
        u[2] = omega_ref + v_ref * (gains.k2 * e[1] + gains.k3 * std::sin(e[3])) + dist[2];
    }
    for (int i = 0; i < control_dim(m); ++i) u[i] = std::clamp(u[i], bounds.lo[i], bounds.hi[i]);
    return u;
}

ErrorVec closed_loop_error_field(VehicleModel m, const ErrorVec& e, const ControlVec& u_ref,
                                 const ControllerGains& gains, const ControlVec& dist,
                                 const ControlBounds& bounds) {
    const ControlVec u = tracking_controller(m, e, u_ref, gains, dist, bounds);
    ErrorVec de{};
    if (m == VehicleModel::Car) {
        const double v_ref = u_ref[0], omega_ref = u_ref[1];
        const double v = u[0], omega = u[1];
        de[0] = omega * e[1] + v_ref * std::cos(e[2]) - v;
        de[1] = -omega * e[0] + v_ref * std::sin(e[2]);
        de[2] = omega_ref - omega;
    } else {
        const double v_ref = u_ref[0], vz_ref = u_ref[1], omega_ref = u_ref[2];
        const double v = u[0], vz = u[1], omega = u[2];
        de[0] = omega * e[1] + v_ref * std::cos(e[3]) - v;
        de[1] = -omega * e[0] + v_ref * std::sin(e[3]);
        de[2] = vz_ref - vz;
        de[3] = omega_ref - omega;
    }
    return de;
}

double divergence_fd(const FieldFn& field, const ErrorVec& at, int dim, double h) {
    double div = 0.0;
    for (int i = 0; i < dim; ++i) {
        ErrorVec lo = at, hi = at;
        lo[i] -= h;
        hi[i] += h;
        div += (field(hi)[i] - field(lo)[i]) / (2.0 * h);
    }
    return div;
}

double closed_loop_divergence(VehicleModel m, const ErrorVec& e, const ControlVec& u_ref,
                              const ControllerGains& gains, const ControlVec& dist,
                              const ControlBounds& bounds, double h) {
    const int d = error_dim(m);
    double div = 0.0;
    for (int i = 0; i < d; ++i) {
        ErrorVec lo = e, hi = e;
        lo[i] -= h;
        hi[i] += h;
        div += (closed_loop_error_field(m, hi, u_ref, gains, dist, bounds)[i] -
                closed_loop_error_field(m, lo, u_ref, gains, dist, bounds)[i]) /
               (2.0 * h);
    }
    return div;
}

void vehicle_jacobians(VehicleModel m, const StateVec& q, const ControlVec& u,
                       std::array<double, 16>& J_q, std::array<double, 12>& J_u) {
    J_q.fill(0.0);
    J_u.fill(0.0);
    if (m == VehicleModel::Car) {
        const double c = std::cos(q[2]), s = std::sin(q[2]);
        // rows: dx, dy, dtheta over columns x, y, theta (stride 4)
        J_q[0 * 4 + 2] = -u[0] * s;
        J_q[1 * 4 + 2] = u[0] * c;
        // columns v, omega (stride 3)
        J_u[0 * 3 + 0] = c;
        J_u[1 * 3 + 0] = s;
        J_u[2 * 3 + 1] = 1.0;
    } else {
        const double c = std::cos(q[3]), s = std::sin(q[3]);
        J_q[0 * 4 + 3] = -u[0] * s;
        J_q[1 * 4 + 3] = u[0] * c;
        J_u[0 * 3 + 0] = c;
        J_u[1 * 3 + 0] = s;
        J_u[2 * 3 + 1] = 1.0; // dz/dv_z
        J_u[3 * 3 + 2] = 1.0; // dtheta/domega
    }
}

} // namespace riskplan
