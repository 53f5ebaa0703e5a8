#pragma once

#include <array>
#include <cmath>
#include <functional>

namespace riskplan {

// Fixed-capacity component vectors; the active dimension comes from the model.
// Car:        q = (x, y, theta),    e = (e_x, e_y, e_theta),      u = (v, omega)
// Hovercraft: q = (x, y, z, theta), e = (e_x, e_y, e_z, e_theta), u = (v, v_z, omega)
using StateVec = std::array<double, 4>;
using ErrorVec = std::array<double, 4>;
using ControlVec = std::array<double, 3>;

enum class VehicleModel { Car, Hovercraft };

constexpr int state_dim(VehicleModel m) { return m == VehicleModel::Car ? 3 : 4; }
constexpr int error_dim(VehicleModel m) { return state_dim(m); }
constexpr int control_dim(VehicleModel m) { return m == VehicleModel::Car ? 2 : 3; }
constexpr int position_dim(VehicleModel m) { return m == VehicleModel::Car ? 2 : 3; }

struct ControllerGains {
    double k1 = 1.0;
    double k2 = 1.0;
    double k3 = 1.0;
    double k4 = 1.0; // hovercraft vertical gain
};

struct ControlBounds {
    ControlVec lo{-4.0, -2.0, -2.0};
    ControlVec hi{4.0, 2.0, 2.0};
};

// Wrap angle into (-pi, pi]. Already-canonical values pass through unchanged.
inline double wrap_angle(double a) {
    if (a > -M_PI && a <= M_PI) return a;
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

// Kinematic rearwheel car: (v cos theta, v sin theta, omega).
StateVec car_dynamics(const StateVec& q, const ControlVec& u);

// Hovercraft: (v cos theta, v sin theta, v_z, omega).
StateVec hovercraft_dynamics(const StateVec& q, const ControlVec& u);

StateVec vehicle_dynamics(VehicleModel m, const StateVec& q, const ControlVec& u);

// Body-frame tracking error. Positions rotate into the vehicle frame, so a
// reference ahead of the vehicle along its heading gives positive e_x;
// e_theta = theta_ref - theta wrapped to (-pi, pi].
ErrorVec tracking_error(VehicleModel m, const StateVec& q, const StateVec& q_ref);

// Inverse of tracking_error: recover the world state from an error and the
// reference it was taken against.
StateVec world_from_error(VehicleModel m, const ErrorVec& e, const StateVec& q_ref);

// Lyapunov tracking controller with additive disturbances, clamped to bounds:
//   v   = v_ref cos(e_theta) + k1 e_x + d_v
//   omega = omega_ref + v_ref (k2 e_y + k3 sin e_theta) + d_omega
//   v_z = v_z_ref + k4 e_z + d_vz            (hovercraft)
ControlVec tracking_controller(VehicleModel m, const ErrorVec& e, const ControlVec& u_ref,
                               const ControllerGains& gains, const ControlVec& dist,
                               const ControlBounds& bounds);

// Closed-loop error dynamics: the autonomous field obtained by composing the
// vehicle dynamics, the error transform, and the clamped controller.
ErrorVec closed_loop_error_field(VehicleModel m, const ErrorVec& e, const ControlVec& u_ref,
                                 const ControllerGains& gains, const ControlVec& dist,
                                 const ControlBounds& bounds);

// Central finite-difference divergence of an arbitrary field at a point.
using FieldFn = std::function<ErrorVec(const ErrorVec&)>;
double divergence_fd(const FieldFn& field, const ErrorVec& at, int dim, double h = 1e-4);

// Divergence of the closed-loop error field.
double closed_loop_divergence(VehicleModel m, const ErrorVec& e, const ControlVec& u_ref,
                              const ControllerGains& gains, const ControlVec& dist,
                              const ControlBounds& bounds, double h = 1e-4);

// Jacobians of the vehicle dynamics, used by the trajectory optimizer's
// adjoint pass. J_q is state_dim x state_dim, J_u is state_dim x control_dim,
// both row-major in fixed 4x4 / 4x3 storage.
void vehicle_jacobians(VehicleModel m, const StateVec& q, const ControlVec& u,
                       std::array<double, 16>& J_q, std::array<double, 12>& J_u);

} // namespace riskplan
