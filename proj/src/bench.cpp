#include "riskplan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>

#include "riskplan/errors.hpp"
#include "riskplan/hull.hpp"
#include "riskplan/reference.hpp"
#include "riskplan/rng.hpp"

namespace riskplan {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Min over segment states and obstacles of (center distance - radius).
double nominal_clearance(VehicleModel m, const ReferenceTrajectory& seg,
                         const std::vector<Obstacle>& obstacles) {
    const int pd = position_dim(m);
    double c = std::numeric_limits<double>::infinity();
    for (const StateVec& q : seg.states) {
        for (const Obstacle& o : obstacles) {
            double d2 = 0.0;
            for (int p = 0; p < pd; ++p) {
                const double d = q[static_cast<size_t>(p)] - o.center[static_cast<size_t>(p)];
                d2 += d * d;
            }
            c = std::min(c, std::sqrt(d2) - o.radius);
        }
    }
    return c;
}

struct VariantPlan {
    SegmentedPlan plan;
    int nlp_solves = 0;
    int repairs = 0;
};

// Algorithm 1 with a pluggable segment acceptance test: same segment walk as
// the density planner, |du|-ordered candidate scan, anchor advance and
// warm-started re-solve of the remainder.
template <typename SafeFn>
VariantPlan variant_plan(const Scenario& sc, const PlannerConfig& cfg, const char* name,
                         SafeFn&& safe) {
    const int N = sc.N;
    const int L = sc.L();

    VariantPlan out;
    std::vector<ControlVec> final_controls(static_cast<size_t>(N));
    int anchor = 0;
    SegmentedPlan cur = solve_nlp(sc, nullptr, cfg.nlp).plan;
    out.nlp_solves = 1;
    StateVec cur_q = sc.q_origin;
    const int cd = control_dim(sc.model);

    for (int j = 0; j < N; ++j) {
        const ControlVec u_j = cur.controls[static_cast<size_t>(j - anchor)];
        ReferenceTrajectory seg = make_reference(
            sc.model, cur_q, std::vector<ControlVec>(static_cast<size_t>(L), u_j), sc.dt,
            cfg.substeps);
        bool repaired = false;
        if (!safe(j, seg)) {
            bool found = false;
            int tried = 0;
            for (const ControlVec& du : perturb_segment(sc.model, cfg)) {
                if (tried >= cfg.max_attempts) break;
                ++tried;
                ControlVec cand{};
                for (int a = 0; a < cd; ++a)
                    cand[static_cast<size_t>(a)] =
                        std::clamp(u_j[static_cast<size_t>(a)] + du[static_cast<size_t>(a)],
                                   sc.bounds.lo[static_cast<size_t>(a)],
                                   sc.bounds.hi[static_cast<size_t>(a)]);
                ReferenceTrajectory cref = make_reference(
                    sc.model, cur_q, std::vector<ControlVec>(static_cast<size_t>(L), cand),
                    sc.dt, cfg.substeps);
                if (safe(j, cref)) {
                    seg = std::move(cref);
                    final_controls[static_cast<size_t>(j)] = cand;
                    found = true;
                    break;
                }
            }
            if (!found)
                throw PlanFailed(std::string(name) + ": segment " + std::to_string(j) +
                                     ": exhausted " + std::to_string(tried) +
                                     " perturbation candidates",
                                 j);
            repaired = true;
            ++out.repairs;
        } else {
            final_controls[static_cast<size_t>(j)] = u_j;
        }

        cur_q = seg.states.back();
        if (repaired && j + 1 < N) {
            Scenario sub = sc;
            sub.q_origin = cur_q;
            sub.N = N - (j + 1);
            sub.T = sub.N * L;
            SegmentedPlan warm;
            warm.model = sc.model;
            warm.dt = sc.dt;
            warm.L = L;
            warm.controls.assign(cur.controls.begin() + (j + 1 - anchor), cur.controls.end());
            cur = solve_nlp(sub, &warm, cfg.nlp).plan;
            ++out.nlp_solves;
            anchor = j + 1;
        }
    }
    out.plan = rollout(final_controls, sc);
    return out;
}

// Worst-case reachability acceptance: convex hull of the segment's pushed
// sample tube (all timesteps pooled), inflated by the estimator's margin,
// must stay clear of every obstacle. Convexifying the tube is what makes
// this conservative on curved segments — the hull fills the inside of the
// bend.
bool reach_tube_clear(const Predictor& pred, const ReferenceTrajectory& seg,
                      const std::vector<Obstacle>& obstacles, const InitialSamples& entry,
                      const EstimatorOptions& opt) {
    const VehicleModel m = pred.model();
    const int T = seg.steps();
    PushedCloud tube;
    tube.model = m;
    auto prop = pred.propagate(seg, entry.e0, entry.dist);
    for (int t = 1; t <= T; ++t) {
        prop->advance(1);
        const PushedCloud cloud = cloud_at(*prop, entry, seg, m);
        tube.q_ref = cloud.q_ref;
        tube.t_index = cloud.t_index;
        tube.errors.insert(tube.errors.end(), cloud.errors.begin(), cloud.errors.end());
        tube.states.insert(tube.states.end(), cloud.states.begin(), cloud.states.end());
        tube.log_density.insert(tube.log_density.end(), cloud.log_density.begin(),
                                cloud.log_density.end());
    }
    const ReachSetApprox rs = reach_set(tube, opt);
    if (m == VehicleModel::Car) {
        std::vector<std::array<double, 2>> xy(tube.states.size());
        for (size_t i = 0; i < tube.states.size(); ++i)
            xy[i] = {tube.states[i][0], tube.states[i][1]};
        for (const Obstacle& o : obstacles) {
            const double sd = hull_2d_signed_distance(xy, rs.hull2d, {o.center[0], o.center[1]});
            if (sd <= o.radius + rs.r) return false;
        }
    } else {
        std::vector<std::array<double, 3>> xyz(tube.states.size());
        for (size_t i = 0; i < tube.states.size(); ++i)
            xyz[i] = {tube.states[i][0], tube.states[i][1], tube.states[i][2]};
        for (const Obstacle& o : obstacles) {
            const double sd = hull_3d_max_violation(xyz, rs.hull3d, o.center);
            if (sd <= o.radius + rs.r) return false;
        }
    }
    return true;
}

} // namespace

void EnvGenConfig::validate() const {
    if (min_obstacles < 0 || max_obstacles < min_obstacles)
        throw ConfigError("gen_envs: obstacle count range is empty");
    if (!(min_radius > 0.0) || !(max_radius >= min_radius))
        throw ConfigError("gen_envs: obstacle radius range is empty");
    if (!(keepout >= 0.0)) throw ConfigError("gen_envs: keepout must be non-negative");
}

void BenchConfig::validate(VehicleModel m, const ControlBounds& bounds) const {
    planner.validate(m, bounds);
    if (mc_rollouts < 1) throw ConfigError("bench: need at least one rollout");
    if (mc_substeps < 1) throw ConfigError("bench: rollout substeps must be positive");
}

EnvSuite gen_envs(int n, const Scenario& tmpl, const EnvGenConfig& gen, std::uint64_t seed) {
    if (n < 1) throw ConfigError("gen_envs: need at least one environment");
    gen.validate();
    {
        Scenario probe = tmpl;
        probe.obstacles.clear();
        probe.validate();
    }
    const int pd = position_dim(tmpl.model);

    EnvSuite suite;
    suite.seed = seed;
    suite.envs.reserve(static_cast<size_t>(n));
    Rng rng(Rng::derive(seed, 0xbe9cull));
    long long budget = 100LL * n;

    while (static_cast<int>(suite.envs.size()) < n) {
        if (budget-- <= 0)
            throw GenerationExhausted("gen_envs: no feasible layout in 100n attempts");

        Scenario sc = tmpl;
        sc.obstacles.clear();
        const int count =
            gen.min_obstacles +
            static_cast<int>(rng.uniform01() * (gen.max_obstacles - gen.min_obstacles + 1));
        bool placed_all = true;
        for (int i = 0; i < count && placed_all; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
                Obstacle o;
                o.radius = rng.uniform(gen.min_radius, gen.max_radius);
                for (int p = 0; p < pd; ++p)
                    o.center[static_cast<size_t>(p)] =
                        rng.uniform(sc.workspace_lo[static_cast<size_t>(p)] + o.radius,
                                    sc.workspace_hi[static_cast<size_t>(p)] - o.radius);
                auto clear_of = [&](const StateVec& q, double margin) {
                    double d2 = 0.0;
                    for (int p = 0; p < pd; ++p) {
                        const double d =
                            o.center[static_cast<size_t>(p)] - q[static_cast<size_t>(p)];
                        d2 += d * d;
                    }
                    return std::sqrt(d2) >= o.radius + margin;
                };
                if (!clear_of(sc.q_origin, gen.keepout) || !clear_of(sc.q_dest, gen.keepout))
                    continue;
                bool disjoint = true;
                for (const Obstacle& other : sc.obstacles) {
                    double d2 = 0.0;
                    for (int p = 0; p < pd; ++p) {
                        const double d = o.center[static_cast<size_t>(p)] -
                                         other.center[static_cast<size_t>(p)];
                        d2 += d * d;
                    }
                    if (std::sqrt(d2) < o.radius + other.radius) {
                        disjoint = false;
                        break;
                    }
                }
                if (!disjoint) continue;
                sc.obstacles.push_back(o);
                placed = true;
            }
            placed_all = placed;
        }
        if (!placed_all) continue;

        try {
            (void)solve_nlp(sc, nullptr, gen.nlp);
        } catch (const InfeasibleNlp&) {
            continue;
        }
        suite.envs.push_back(std::move(sc));
        suite.nlp_feasible.push_back(1);
    }
    return suite;
}

std::string variant_name(const BenchVariant& v) {
    switch (v.kind) {
    case BenchVariant::Kind::Original: return "original";
    case BenchVariant::Kind::Distance: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "d=%g", v.d);
        return buf;
    }
    case BenchVariant::Kind::Reach: return "reach";
    case BenchVariant::Kind::Density: return "density";
    }
    return "?";
}

BenchResult run_variant(const BenchVariant& v, const EnvSuite& suite, const Predictor& pred,
                        const BenchConfig& cfg) {
    if (v.kind == BenchVariant::Kind::Distance && !(v.d > 0.0))
        throw ConfigError("bench: distance variant needs d > 0");

    BenchResult res;
    res.variant = v;
    res.runs.reserve(suite.envs.size());

    int feasible = 0;
    double safety_sum = 0.0;
    for (size_t i = 0; i < suite.envs.size(); ++i) {
        const Scenario& sc = suite.envs[i];
        cfg.validate(sc.model, sc.bounds);
        if (pred.model() != sc.model)
            throw ConfigError("bench: predictor model does not match the suite");

        BenchRun run;
        run.env = static_cast<int>(i);
        const auto t0 = std::chrono::steady_clock::now();
        SegmentedPlan planned;
        try {
            switch (v.kind) {
            case BenchVariant::Kind::Original:
                planned = solve_nlp(sc, nullptr, cfg.planner.nlp).plan;
                run.nlp_solves = 1;
                break;
            case BenchVariant::Kind::Distance: {
                VariantPlan vp =
                    variant_plan(sc, cfg.planner, "distance", [&](int, const ReferenceTrajectory& seg) {
                        return nominal_clearance(sc.model, seg, sc.obstacles) >= v.d;
                    });
                planned = std::move(vp.plan);
                run.nlp_solves = vp.nlp_solves;
                run.repairs = vp.repairs;
                break;
            }
            case BenchVariant::Kind::Reach: {
                VariantPlan vp =
                    variant_plan(sc, cfg.planner, "reach", [&](int j, const ReferenceTrajectory& seg) {
                        const InitialSamples entry = sample_initial(
                            sc.init, sc.dist, cfg.planner.n_samples,
                            Rng::derive(cfg.planner.seed,
                                        0x5e91ull + static_cast<std::uint64_t>(j)));
                        return reach_tube_clear(pred, seg, sc.obstacles, entry,
                                                cfg.planner.estimator);
                    });
                planned = std::move(vp.plan);
                run.nlp_solves = vp.nlp_solves;
                run.repairs = vp.repairs;
                break;
            }
            case BenchVariant::Kind::Density: {
                PlanTrace tr = plan(sc, pred, cfg.planner);
                planned = std::move(tr.plan);
                run.nlp_solves = tr.nlp_solves;
                for (const SegmentReport& sr : tr.segments)
                    run.repairs += sr.verdict == SegmentReport::Verdict::Repaired;
                break;
            }
            }
            run.feasible = true;
        } catch (const PlanFailed&) {
            run.feasible = false;
        } catch (const InfeasibleNlp&) {
            run.feasible = false;
        }
        run.runtime_s = seconds_since(t0);

        if (run.feasible) {
            const ReferenceTrajectory ref = make_reference(
                sc.model, sc.q_origin, planned.per_step_controls(), sc.dt, cfg.planner.substeps);
            const RiskReport mc = mc_collision_prob(
                sc.model, ref, {sc.gains, sc.bounds}, sc.init, sc.dist, sc.obstacles, sc.T,
                cfg.mc_rollouts, Rng::derive(cfg.mc_seed, 0x3c17ull + i), cfg.mc_substeps);
            run.mc_collision = mc.any_timestep;
            ++feasible;
            safety_sum += run.mc_collision;
        }
        res.runtime_s += run.runtime_s;
        res.runs.push_back(run);
    }

    res.feasibility =
        suite.envs.empty() ? 0.0 : static_cast<double>(feasible) / suite.envs.size();
    res.safety = feasible > 0 ? safety_sum / feasible : 0.0;
    return res;
}

EfficiencyStudy sample_efficiency_study(const Predictor& pred, const Scenario& sc,
                                        const std::vector<int>& sizes,
                                        const std::vector<std::uint64_t>& seeds,
                                        const EfficiencyConfig& cfg) {
    if (sizes.empty()) throw ConfigError("efficiency: need at least one sample size");
    if (seeds.empty()) throw ConfigError("efficiency: need at least one seed");
    for (int n : sizes)
        if (n < 1) throw ConfigError("efficiency: sample sizes must be positive");
    sc.validate();
    if (pred.model() != sc.model)
        throw ConfigError("efficiency: predictor model does not match the scenario");

    const SegmentedPlan plan = solve_nlp(sc, nullptr, cfg.nlp).plan;
    const ReferenceTrajectory ref =
        make_reference(sc.model, sc.q_origin, plan.per_step_controls(), sc.dt, 10);

    EfficiencyStudy study;
    study.oracle_risk =
        mc_collision_prob(sc.model, ref, {sc.gains, sc.bounds}, sc.init, sc.dist, sc.obstacles,
                          sc.T, cfg.oracle_rollouts, cfg.oracle_seed, cfg.mc_substeps)
            .total;

    for (int n : sizes) {
        EfficiencyRow row;
        row.n = n;
        std::vector<double> dens, mc;
        dens.reserve(seeds.size());
        mc.reserve(seeds.size());
        for (std::uint64_t s : seeds) {
            EstimatorOptions opt = cfg.estimator;
            opt.seed = s;
            dens.push_back(
                total_risk(pred, ref, sc.T, sc.obstacles, sc.init, sc.dist, n, opt).total);
            mc.push_back(mc_collision_prob(sc.model, ref, {sc.gains, sc.bounds}, sc.init,
                                           sc.dist, sc.obstacles, sc.T, n, s, cfg.mc_substeps)
                             .total);
        }
        row.density_median = median_of(dens);
        row.density_lo = *std::min_element(dens.begin(), dens.end());
        row.density_hi = *std::max_element(dens.begin(), dens.end());
        row.mc_median = median_of(mc);
        row.mc_lo = *std::min_element(mc.begin(), mc.end());
        row.mc_hi = *std::max_element(mc.begin(), mc.end());
        study.rows.push_back(row);
    }
    return study;
}

} // namespace riskplan
