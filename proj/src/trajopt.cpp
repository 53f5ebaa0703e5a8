#include "riskplan/trajopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "riskplan/errors.hpp"

namespace riskplan {

namespace {

double clampd(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

// Forward Euler over the padded horizon. This exact recurrence (same
// expression, same order) is the plan-state contract.
std::vector<StateVec> euler_states(const Scenario& sc, const std::vector<ControlVec>& u) {
    const int L = sc.L();
    const int T = sc.steps();
    std::vector<StateVec> q(T + 1);
    q[0] = sc.q_origin;
    for (int k = 0; k < T; ++k) {
        const StateVec f = vehicle_dynamics(sc.model, q[k], u[k / L]);
        for (int i = 0; i < 4; ++i) q[k + 1][i] = q[k][i] + f[i] * sc.dt;
    }
    return q;
}

double pos_error(VehicleModel m, const StateVec& q, const StateVec& dest) {
    double s = 0.0;
    for (int p = 0; p < position_dim(m); ++p) s += (q[p] - dest[p]) * (q[p] - dest[p]);
    return std::sqrt(s);
}

double max_penetration(VehicleModel m, const std::vector<StateVec>& q,
                       const std::vector<Obstacle>& obstacles) {
    const int pd = position_dim(m);
    double worst = 0.0;
    for (const Obstacle& o : obstacles) {
        for (const StateVec& s : q) {
            double d2 = 0.0;
            for (int p = 0; p < pd; ++p) d2 += (s[p] - o.center[p]) * (s[p] - o.center[p]);
            worst = std::max(worst, o.radius - std::sqrt(d2));
        }
    }
    return worst;
}

} // namespace

void Scenario::validate() const {
    if (N < 1 || T < 1) throw ConfigError("scenario: need T >= 1 and N >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("scenario: dt must be positive");
    if (!(gamma > 0.0)) throw ConfigError("scenario: risk threshold must be positive");
    const int sd = state_dim(model);
    const int cd = control_dim(model);
    const int pd = position_dim(model);
    for (int i = 0; i < sd; ++i)
        if (!std::isfinite(q_origin[i]) || !std::isfinite(q_dest[i]))
            throw ConfigError("scenario: non-finite origin/destination");
    for (int a = 0; a < cd; ++a)
        if (!(bounds.lo[a] <= bounds.hi[a]))
            throw ConfigError("scenario: control bounds inverted");
    for (int p = 0; p < pd; ++p) {
        if (!(workspace_lo[p] < workspace_hi[p]))
            throw ConfigError("scenario: workspace box inverted");
        if (q_origin[p] < workspace_lo[p] || q_origin[p] > workspace_hi[p] ||
            q_dest[p] < workspace_lo[p] || q_dest[p] > workspace_hi[p])
            throw ConfigError("scenario: origin/destination outside the workspace box");
    }
    for (const Obstacle& o : obstacles) {
        if (!(o.radius >= 0.0) || !std::isfinite(o.radius))
            throw ConfigError("scenario: obstacle radius must be finite and non-negative");
        for (int p = 0; p < 3; ++p)
            if (!std::isfinite(o.center[p])) throw ConfigError("scenario: non-finite obstacle center");
    }
    // A point mass at zero is the "no uncertainty" default and is accepted at
    // any dimension; anything else must match the model's layout.
    auto noop = [](const BoxDistribution& b) {
        if (!b.is_point()) return false;
        for (int i = 0; i < b.dim; ++i)
            if (b.center[i] != 0.0) return false;
        return true;
    };
    if (!noop(init) && init.dim != sd)
        throw ConfigError("scenario: initial distribution dimension mismatch");
    if (!noop(dist) && dist.dim != cd)
        throw ConfigError("scenario: disturbance distribution dimension mismatch");
}

std::vector<ControlVec> SegmentedPlan::per_step_controls() const {
    std::vector<ControlVec> out;
    out.reserve(static_cast<size_t>(steps()));
    for (const ControlVec& u : controls) out.insert(out.end(), static_cast<size_t>(L), u);
    return out;
}

SegmentedPlan rollout(const std::vector<ControlVec>& controls, const Scenario& sc) {
    sc.validate();
    if (static_cast<int>(controls.size()) != sc.N)
        throw ConfigError("rollout: need one control vector per segment");
    const int cd = control_dim(sc.model);
    for (const ControlVec& u : controls)
        for (int a = 0; a < cd; ++a)
            if (!(u[a] >= sc.bounds.lo[a] && u[a] <= sc.bounds.hi[a]))
                throw ConfigError("rollout: control outside bounds");
    SegmentedPlan plan;
    plan.model = sc.model;
    plan.dt = sc.dt;
    plan.L = sc.L();
    plan.controls = controls;
    plan.states = euler_states(sc, controls);
    return plan;
}

double penalty_objective(const Scenario& sc, const std::vector<ControlVec>& controls,
                         double mu_end, double heading_weight) {
    const std::vector<StateVec> q = euler_states(sc, controls);
    const int pd = position_dim(sc.model);
    const int hd = state_dim(sc.model) - 1;
    double obj = 0.0;
    for (const Obstacle& o : sc.obstacles) {
        const double r2 = o.radius * o.radius;
        // Normalize by r^2 so the hinge force scale is radius-invariant; a
        // raw r^4-scaled hinge is too weak to deflect the terminal pull for
        // sub-unit radii. The zero set (and so the minimizer) is unchanged.
        const double w = 5.0 / std::max(r2, 1e-12);
        for (const StateVec& s : q) {
            double d2 = 0.0;
            for (int p = 0; p < pd; ++p) d2 += (s[p] - o.center[p]) * (s[p] - o.center[p]);
            const double h = r2 - d2;
            if (h > 0.0) obj += w * h * h;
        }
    }
    double term = 0.0;
    for (int p = 0; p < pd; ++p) {
        const double d = q.back()[p] - sc.q_dest[p];
        term += d * d;
    }
    const double dth = wrap_angle(q.back()[hd] - sc.q_dest[hd]);
    term += heading_weight * dth * dth;
    return obj + mu_end * term;
}

namespace {

// Gradient of hinge(u) + lambda^T c(u) + mu_end * |c(u)|^2_weighted, where c
// is the terminal residual (positions, then heading; the heading component
// carries heading_weight). lambda = 0 gives the plain penalty gradient.
std::vector<ControlVec> gradient_core(const Scenario& sc, const std::vector<ControlVec>& controls,
                                      double mu_end, double heading_weight, const StateVec& lambda) {
    const int sd = state_dim(sc.model);
    const int cd = control_dim(sc.model);
    const int pd = position_dim(sc.model);
    const int hd = sd - 1;
    const int L = sc.L();
    const int T = sc.steps();
    const std::vector<StateVec> q = euler_states(sc, controls);

    // d/dq of the clearance hinge at one state, accumulated into g.
    auto hinge_grad = [&](const StateVec& s, StateVec& g) {
        for (const Obstacle& o : sc.obstacles) {
            const double r2 = o.radius * o.radius;
            const double w = 5.0 / std::max(r2, 1e-12); // matches penalty_objective
            double d2 = 0.0;
            for (int p = 0; p < pd; ++p) d2 += (s[p] - o.center[p]) * (s[p] - o.center[p]);
            const double h = r2 - d2;
            if (h <= 0.0) continue;
            for (int p = 0; p < pd; ++p) g[p] -= 4.0 * w * h * (s[p] - o.center[p]);
        }
    };

    std::vector<ControlVec> grad(controls.size(), ControlVec{});
    StateVec lam{};
    hinge_grad(q[T], lam);
    for (int p = 0; p < pd; ++p) lam[p] += lambda[p] + 2.0 * mu_end * (q[T][p] - sc.q_dest[p]);
    lam[hd] += lambda[hd] +
               2.0 * mu_end * heading_weight * wrap_angle(q[T][hd] - sc.q_dest[hd]);

    std::array<double, 16> J_q{};
    std::array<double, 12> J_u{};
    for (int k = T - 1; k >= 0; --k) {
        const int seg = k / L;
        vehicle_jacobians(sc.model, q[k], controls[seg], J_q, J_u);
        for (int a = 0; a < cd; ++a) {
            double acc = 0.0;
            for (int b = 0; b < sd; ++b) acc += J_u[b * 3 + a] * lam[b];
            grad[seg][a] += sc.dt * acc;
        }
        StateVec prev{};
        for (int i = 0; i < sd; ++i) {
            double acc = lam[i];
            for (int b = 0; b < sd; ++b) acc += sc.dt * J_q[b * 4 + i] * lam[b];
            prev[i] = acc;
        }
        hinge_grad(q[k], prev);
        lam = prev;
    }
    return grad;
}

} // namespace

std::vector<ControlVec> penalty_gradient(const Scenario& sc, const std::vector<ControlVec>& controls,
                                         double mu_end, double heading_weight) {
    return gradient_core(sc, controls, mu_end, heading_weight, StateVec{});
}

namespace {

// Backward (adjoint) pass for one terminal-residual component: gradient of
// seed . q_T with respect to the flattened controls, written into row.
void terminal_row(const Scenario& sc, const std::vector<StateVec>& q,
                  const std::vector<ControlVec>& u, const StateVec& seed, double* row) {
    const int sd = state_dim(sc.model);
    const int cd = control_dim(sc.model);
    const int L = sc.L();
    const int T = sc.steps();
    StateVec lam = seed;
    std::array<double, 16> J_q{};
    std::array<double, 12> J_u{};
    for (int k = T - 1; k >= 0; --k) {
        const int seg = k / L;
        vehicle_jacobians(sc.model, q[k], u[seg], J_q, J_u);
        for (int a = 0; a < cd; ++a) {
            double acc = 0.0;
            for (int b = 0; b < sd; ++b) acc += J_u[b * 3 + a] * lam[b];
            row[seg * cd + a] += sc.dt * acc;
        }
        StateVec prev{};
        for (int i = 0; i < sd; ++i) {
            double acc = lam[i];
            for (int b = 0; b < sd; ++b) acc += sc.dt * J_q[b * 4 + i] * lam[b];
            prev[i] = acc;
        }
        lam = prev;
    }
}

// Solve the m x m system A x = b in place by Gaussian elimination with
// partial pivoting (m <= 4).
void solve_small(int m, double* A, double* b) {
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::fabs(A[r * m + col]) > std::fabs(A[piv * m + col])) piv = r;
        if (piv != col) {
            for (int c = 0; c < m; ++c) std::swap(A[col * m + c], A[piv * m + c]);
            std::swap(b[col], b[piv]);
        }
        const double d = A[col * m + col];
        for (int r = col + 1; r < m; ++r) {
            const double f = A[r * m + col] / d;
            for (int c = col; c < m; ++c) A[r * m + c] -= f * A[col * m + c];
            b[r] -= f * b[col];
        }
    }
    for (int r = m - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < m; ++c) acc -= A[r * m + c] * b[c];
        b[r] = acc / A[r * m + r];
    }
}

// One full run from a given start point. Each iteration takes a
// task-priority step: a damped Gauss-Newton correction on the terminal
// residual (reach the goal), plus momentum descent on the clearance hinge
// projected onto the Gauss-Newton null space (avoid obstacles without
// trading reach away). A plain penalty gradient couples the two and stalls
// in a long valley with the path pinned just inside an obstacle rim.
NlpResult solve_from(const Scenario& sc, std::vector<ControlVec> u, const NlpOptions& opt) {
    const int cd = control_dim(sc.model);
    const int pd = position_dim(sc.model);
    const int hd = state_dim(sc.model) - 1;
    const int m = pd + 1;               // terminal residual components
    const int n = sc.N * cd;            // flattened control dimension
    const double sqrt_hw = std::sqrt(opt.heading_weight);
    const double gn_cap = 0.1;          // per-iteration reach-step cap

    NlpReport rep;
    rep.round_terminal_error.reserve(static_cast<size_t>(opt.outer_rounds));
    std::vector<double> J(static_cast<size_t>(m) * n);
    std::vector<double> row(static_cast<size_t>(n));
    std::vector<double> vel(static_cast<size_t>(n), 0.0);
    std::vector<double> du(static_cast<size_t>(n));
    double A[16];
    double rhs[4];
    double c[4];
    double mu = opt.mu0;
    for (int round = 0; round < opt.outer_rounds; ++round) {
        std::fill(vel.begin(), vel.end(), 0.0);
        for (int it = 0; it < opt.inner_iters; ++it) {
            const std::vector<StateVec> q = euler_states(sc, u);

            // Terminal residual (heading weighted into it) and its Jacobian.
            for (int p = 0; p < pd; ++p) c[p] = q.back()[p] - sc.q_dest[p];
            c[m - 1] = sqrt_hw * wrap_angle(q.back()[hd] - sc.q_dest[hd]);
            std::fill(J.begin(), J.end(), 0.0);
            for (int i = 0; i < m; ++i) {
                StateVec seed{};
                if (i < pd) seed[i] = 1.0;
                else seed[hd] = sqrt_hw;
                std::fill(row.begin(), row.end(), 0.0);
                terminal_row(sc, q, u, seed, row.data());
                for (int a = 0; a < n; ++a) J[i * n + a] = row[a];
            }

            // A = J J^T + eps I.
            double tr = 0.0;
            for (int i = 0; i < m; ++i) {
                for (int k = i; k < m; ++k) {
                    double acc = 0.0;
                    for (int a = 0; a < n; ++a) acc += J[i * n + a] * J[k * n + a];
                    A[i * m + k] = acc;
                    A[k * m + i] = acc;
                }
                tr += A[i * m + i];
            }
            const double eps = 1e-10 * (1.0 + tr / m);
            for (int i = 0; i < m; ++i) A[i * m + i] += eps;

            // Min-norm Gauss-Newton step toward c = 0, capped per iteration.
            double A1[16];
            std::copy(A, A + m * m, A1);
            std::copy(c, c + m, rhs);
            solve_small(m, A1, rhs);
            double du_max = 0.0;
            for (int a = 0; a < n; ++a) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += J[i * n + a] * rhs[i];
                du[a] = -acc;
                du_max = std::max(du_max, std::fabs(acc));
            }
            const double scale = du_max > gn_cap ? gn_cap / du_max : 1.0;

            // Hinge gradient projected onto the Gauss-Newton null space.
            const std::vector<ControlVec> g_full =
                gradient_core(sc, u, 0.0, opt.heading_weight, StateVec{});
            double Jg[4];
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < sc.N; ++j)
                    for (int a = 0; a < cd; ++a) acc += J[i * n + j * cd + a] * g_full[j][a];
                Jg[i] = acc;
            }
            std::copy(A, A + m * m, A1);
            solve_small(m, A1, Jg);

            double step_max = 0.0;
            for (int j = 0; j < sc.N; ++j) {
                for (int a = 0; a < cd; ++a) {
                    const int idx = j * cd + a;
                    double gp = g_full[j][a];
                    for (int i = 0; i < m; ++i) gp -= J[i * n + idx] * Jg[i];
                    vel[idx] = opt.momentum * vel[idx] - opt.step * gp;
                    const double delta = scale * du[idx] + vel[idx];
                    u[j][a] = clampd(u[j][a] + delta, sc.bounds.lo[a], sc.bounds.hi[a]);
                    step_max = std::max(step_max, std::fabs(delta));
                }
            }
            if (step_max < 1e-14) break;
        }
        rep.round_terminal_error.push_back(
            pos_error(sc.model, euler_states(sc, u).back(), sc.q_dest));
        if (round + 1 < opt.outer_rounds) mu *= opt.mu_factor;
    }

    NlpResult res;
    res.plan.model = sc.model;
    res.plan.dt = sc.dt;
    res.plan.L = sc.L();
    res.plan.controls = std::move(u);
    res.plan.states = euler_states(sc, res.plan.controls);
    rep.terminal_error = rep.round_terminal_error.back();
    rep.penetration = max_penetration(sc.model, res.plan.states, sc.obstacles);
    rep.objective = penalty_objective(sc, res.plan.controls, mu, opt.heading_weight);
    res.report = std::move(rep);
    return res;
}

} // namespace

NlpResult solve_nlp(const Scenario& sc, const SegmentedPlan* warm_start, const NlpOptions& opt) {
    sc.validate();
    if (opt.outer_rounds < 1 || opt.inner_iters < 1 || !(opt.step > 0.0) || !(opt.mu0 > 0.0) ||
        !(opt.mu_factor >= 1.0))
        throw ConfigError("solve_nlp: bad optimizer options");
    const int cd = control_dim(sc.model);

    // Start points, tried in order until one ends feasible. Gradient descent
    // cannot leave the centerline when an obstacle sits dead ahead (the
    // lateral clearance force is proportional to the lateral offset, a
    // symmetric saddle), so after the plain starts we seed coarse detour
    // bumps to either side and let the optimizer tighten whichever clears.
    std::vector<std::vector<ControlVec>> starts;
    if (warm_start) {
        if (warm_start->model != sc.model || warm_start->segments() != sc.N)
            throw ConfigError("solve_nlp: warm start does not match the scenario");
        std::vector<ControlVec> u = warm_start->controls;
        for (ControlVec& ui : u)
            for (int a = 0; a < cd; ++a) ui[a] = clampd(ui[a], sc.bounds.lo[a], sc.bounds.hi[a]);
        starts.push_back(std::move(u));
    }
    starts.emplace_back(static_cast<size_t>(sc.N), ControlVec{});
    if (!sc.obstacles.empty()) {
        const double horizon = sc.steps() * sc.dt;
        const double v = clampd(pos_error(sc.model, sc.q_origin, sc.q_dest) / horizon,
                                sc.bounds.lo[0], sc.bounds.hi[0]);
        const double vz = sc.model == VehicleModel::Hovercraft
                              ? clampd((sc.q_dest[2] - sc.q_origin[2]) / horizon, sc.bounds.lo[1],
                                       sc.bounds.hi[1])
                              : 0.0;
        // Four-phase turn pattern (out, back, back, out): heading and lateral
        // offset both return to ~0, so the start is already near the
        // destination and the terminal pull cannot drag it through the rim.
        const double wmax = std::min(-sc.bounds.lo[cd - 1], sc.bounds.hi[cd - 1]);
        for (const double amp : {wmax, 0.5 * wmax}) {
            for (const double side : {1.0, -1.0}) {
                std::vector<ControlVec> u(static_cast<size_t>(sc.N), ControlVec{});
                for (int j = 0; j < sc.N; ++j) {
                    u[j][0] = v;
                    if (sc.model == VehicleModel::Hovercraft) u[j][1] = vz;
                    const int quarter = (4 * j) / sc.N;
                    const double w = (quarter == 0 || quarter == 3) ? side * amp : -side * amp;
                    u[j][cd - 1] = w;
                }
                starts.push_back(std::move(u));
            }
        }
    }

    NlpResult best;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::vector<ControlVec>& u0 : starts) {
        NlpResult res = solve_from(sc, std::move(u0), opt);
        const bool ok =
            res.report.terminal_error <= opt.tol_end && res.report.penetration <= opt.tol_obs;
        if (ok) return res;
        const double score = res.report.penetration +
                             std::max(0.0, res.report.terminal_error - opt.tol_end);
        if (score < best_score) {
            best_score = score;
            best = std::move(res);
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "solve_nlp: infeasible after %d rounds (terminal error %.4g, penetration %.4g)",
                  opt.outer_rounds, best.report.terminal_error, best.report.penetration);
    throw InfeasibleNlp(buf, best.report.terminal_error, best.report.penetration);
}

} // namespace riskplan
