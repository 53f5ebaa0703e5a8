#include "riskplan/liouville.hpp"

#include "riskplan/errors.hpp"

#include <cmath>
#include <string>

namespace riskplan {

namespace {

struct Aug {
    ErrorVec e{};
    double lr = 0.0; // log density
};

Aug aug_rhs(const FieldFn& field, int dim, const Aug& s) {
    Aug d;
    d.e = field(s.e);
    double div = 0.0;
    const double h = 1e-4;
    for (int i = 0; i < dim; ++i) {
        ErrorVec lo = s.e, hi = s.e;
        lo[i] -= h;
        hi[i] += h;
        div += (field(hi)[i] - field(lo)[i]) / (2.0 * h);
    }
    d.lr = -div;
    return d;
}

Aug aug_rk4_step(const FieldFn& field, int dim, const Aug& s, double h) {
    auto axpy = [&](const Aug& a, double c, const Aug& b) {
        Aug r;
        for (int i = 0; i < 4; ++i) r.e[i] = a.e[i] + c * b.e[i];
        r.lr = a.lr + c * b.lr;
        return r;
    };
    const Aug k1 = aug_rhs(field, dim, s);
    const Aug k2 = aug_rhs(field, dim, axpy(s, 0.5 * h, k1));
    const Aug k3 = aug_rhs(field, dim, axpy(s, 0.5 * h, k2));
    const Aug k4 = aug_rhs(field, dim, axpy(s, h, k3));
    Aug out;
    for (int i = 0; i < 4; ++i)
        out.e[i] = s.e[i] + h / 6.0 * (k1.e[i] + 2 * k2.e[i] + 2 * k3.e[i] + k4.e[i]);
    out.lr = s.lr + h / 6.0 * (k1.lr + 2 * k2.lr + 2 * k3.lr + k4.lr);
    return out;
}

bool aug_finite(const Aug& s, int dim) {
    for (int i = 0; i < dim; ++i)
        if (!std::isfinite(s.e[i])) return false;
    return std::isfinite(s.lr);
}

} // namespace

AugmentedState integrate_field_augmented(const FieldFn& field, int dim, const ErrorVec& e0,
                                         double log_rho0, double t, int n_steps) {
    Aug s{e0, log_rho0};
    const double h = t / n_steps;
    for (int k = 0; k < n_steps; ++k) s = aug_rk4_step(field, dim, s, h);
    if (!aug_finite(s, dim)) throw NonFiniteState("integrate_field_augmented: state diverged");
    return {s.e, s.lr};
}

AugmentedState advance_augmented(VehicleModel m, const AugmentedState& in,
                                 const ReferenceTrajectory& ref, const ClosedLoopParams& cl,
                                 const ControlVec& dist, int k0, int steps) {
    const int dim = error_dim(m);
    const int ei = dim - 1;
    const double h = ref.dt / ref.substeps;
    Aug s{in.e, in.log_rho};
    for (int k = k0; k < k0 + steps; ++k) {
        const ControlVec& u_ref = ref.controls[k];
        FieldFn field = [&](const ErrorVec& e) {
            return closed_loop_error_field(m, e, u_ref, cl.gains, dist, cl.bounds);
        };
        for (int sub = 0; sub < ref.substeps; ++sub) {
            s = aug_rk4_step(field, dim, s, h);
            s.e[ei] = wrap_angle(s.e[ei]);
        }
        if (!aug_finite(s, dim))
            throw NonFiniteState("advance_augmented: diverged at step " + std::to_string(k + 1));
    }
    return {s.e, s.lr};
}

TrajectorySample integrate_augmented(VehicleModel m, const ErrorVec& e0, double rho0,
                                     const ReferenceTrajectory& ref, const ClosedLoopParams& cl,
                                     const ControlVec& dist, int T) {
    if (T > ref.steps())
        throw HorizonExceeded("integrate_augmented: T=" + std::to_string(T) + " beyond reference");
    if (!(rho0 > 0.0)) throw NonFiniteState("integrate_augmented: rho0 must be positive");
    const int ei = error_dim(m) - 1; // heading error index

    TrajectorySample out;
    out.times.reserve(T + 1);
    out.errors.reserve(T + 1);
    out.states.reserve(T + 1);
    out.log_densities.reserve(T + 1);

    AugmentedState s{e0, std::log(rho0)};
    s.e[ei] = wrap_angle(s.e[ei]);
    auto record = [&](int k) {
        out.times.push_back(k * ref.dt);
        out.errors.push_back(s.e);
        out.states.push_back(world_from_error(m, s.e, ref.states[k]));
        out.log_densities.push_back(s.log_rho);
    };
    record(0);
    for (int k = 0; k < T; ++k) {
        s = advance_augmented(m, s, ref, cl, dist, k, 1);
        record(k + 1);
    }
    return out;
}

ErrorVec flow_map(VehicleModel m, const ErrorVec& e0, const ReferenceTrajectory& ref,
                  const ClosedLoopParams& cl, const ControlVec& dist, double t) {
    if (t < 0.0 || t > ref.horizon() + 1e-9)
        throw HorizonExceeded("flow_map: t outside [0, horizon]");
    const int dim = error_dim(m);
    const int ei = dim - 1;
    const double h = ref.dt / ref.substeps;

    int whole = static_cast<int>(std::floor(t / ref.dt + 1e-9));
    whole = std::min(whole, ref.steps());
    const double rem = t - whole * ref.dt;

    Aug s{e0, 0.0};
    s.e[ei] = wrap_angle(s.e[ei]);
    for (int k = 0; k < whole; ++k) {
        const ControlVec& u_ref = ref.controls[k];
        FieldFn field = [&](const ErrorVec& e) {
            return closed_loop_error_field(m, e, u_ref, cl.gains, dist, cl.bounds);
        };
        for (int sub = 0; sub < ref.substeps; ++sub) {
            s = aug_rk4_step(field, dim, s, h);
            s.e[ei] = wrap_angle(s.e[ei]);
        }
    }
    if (rem > 1e-9) {
        const ControlVec& u_ref = ref.controls[whole];
        FieldFn field = [&](const ErrorVec& e) {
            return closed_loop_error_field(m, e, u_ref, cl.gains, dist, cl.bounds);
        };
        const int n = std::max(1, static_cast<int>(std::ceil(rem / h - 1e-9)));
        const double hp = rem / n;
        for (int sub = 0; sub < n; ++sub) {
            s = aug_rk4_step(field, dim, s, hp);
            s.e[ei] = wrap_angle(s.e[ei]);
        }
    }
    if (!aug_finite(s, dim)) throw NonFiniteState("flow_map: state diverged");
    return s.e;
}

TrajectorySample simulate_rollout(VehicleModel m, const StateVec& q0,
                                  const ReferenceTrajectory& ref, const ClosedLoopParams& cl,
                                  const ControlVec& dist, int T) {
    if (T > ref.steps())
        throw HorizonExceeded("simulate_rollout: T=" + std::to_string(T) + " beyond reference");
    const int hi = state_dim(m) - 1;
    const double h = ref.dt / ref.substeps;

    // Joint state (q, q_ref) so that the tracked reference and the vehicle see
    // identical integration error.
    struct Pair {
        StateVec q, r;
    };
    auto rhs = [&](const Pair& p, const ControlVec& u_ref) {
        const ErrorVec e = tracking_error(m, p.q, p.r);
        const ControlVec u = tracking_controller(m, e, u_ref, cl.gains, dist, cl.bounds);
        return Pair{vehicle_dynamics(m, p.q, u), vehicle_dynamics(m, p.r, u_ref)};
    };
    auto axpy = [](const Pair& a, double c, const Pair& b) {
        Pair r;
        for (int i = 0; i < 4; ++i) {
            r.q[i] = a.q[i] + c * b.q[i];
            r.r[i] = a.r[i] + c * b.r[i];
        }
        return r;
    };

    TrajectorySample out;
    out.times.reserve(T + 1);
    out.errors.reserve(T + 1);
    out.states.reserve(T + 1);
    out.log_densities.assign(T + 1, 0.0);

    Pair p{q0, ref.states[0]};
    auto record = [&](int k) {
        out.times.push_back(k * ref.dt);
        out.states.push_back(p.q);
        out.errors.push_back(tracking_error(m, p.q, p.r));
    };
    record(0);
    for (int k = 0; k < T; ++k) {
        const ControlVec& u_ref = ref.controls[k];
        for (int sub = 0; sub < ref.substeps; ++sub) {
            const Pair k1 = rhs(p, u_ref);
            const Pair k2 = rhs(axpy(p, 0.5 * h, k1), u_ref);
            const Pair k3 = rhs(axpy(p, 0.5 * h, k2), u_ref);
            const Pair k4 = rhs(axpy(p, h, k3), u_ref);
            for (int i = 0; i < 4; ++i) {
                p.q[i] += h / 6.0 * (k1.q[i] + 2 * k2.q[i] + 2 * k3.q[i] + k4.q[i]);
                p.r[i] += h / 6.0 * (k1.r[i] + 2 * k2.r[i] + 2 * k3.r[i] + k4.r[i]);
            }
            p.q[hi] = wrap_angle(p.q[hi]);
            p.r[hi] = wrap_angle(p.r[hi]);
        }
        for (int i = 0; i <= hi; ++i)
            if (!std::isfinite(p.q[i]))
                throw NonFiniteState("simulate_rollout: diverged at step " + std::to_string(k + 1));
        record(k + 1);
    }
    return out;
}

} // namespace riskplan
