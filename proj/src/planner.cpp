#include "riskplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "riskplan/errors.hpp"
#include "riskplan/reference.hpp"
#include "riskplan/rng.hpp"

namespace riskplan {

namespace {

double clampd(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

struct CloudCheck {
    double risk = 0.0;
    bool safe = false;
    InitialSamples exit; // terminal cloud, filled when want_exit
};

// Shared check loop: walk the propagation step by step, query shared points
// per timestep, and sum the per-(step, obstacle) collision probabilities.
// Query seeds are derived exactly as in total_risk, so a re-centered check
// reproduces its numbers bit for bit.
CloudCheck check_cloud(const Predictor& pred, const ReferenceTrajectory& seg,
                       const std::vector<Obstacle>& obstacles, const InitialSamples& entry,
                       const PlannerConfig& cfg, std::uint64_t seed, bool want_exit) {
    const VehicleModel m = pred.model();
    const int T = seg.steps();
    if (T > pred.max_steps(seg))
        throw HorizonExceeded("check_segment: segment beyond the predictor's horizon");

    CloudCheck out;
    auto prop = pred.propagate(seg, entry.e0, entry.dist);
    for (int t = 1; t <= T; ++t) {
        prop->advance(1);
        if (obstacles.empty() && !(want_exit && t == T)) continue;
        const PushedCloud cloud = cloud_at(*prop, entry, seg, m);
        if (!obstacles.empty()) {
            EstimatorOptions o = cfg.estimator;
            o.seed = Rng::derive(seed, 0x9d4cull * static_cast<std::uint64_t>(t));
            const QuerySet qs = make_queries(cloud, o);
            for (const Obstacle& obs : obstacles)
                out.risk += reach_prob(qs, [&](const ErrorVec&, const StateVec& q) {
                    return inside_obstacle(m, q, obs);
                });
        }
        if (want_exit && t == T) {
            out.exit.e0 = cloud.errors;
            out.exit.dist = entry.dist;
            out.exit.log_weight0 = cloud.log_density;
        }
    }
    out.safe = out.risk <= cfg.gamma;
    return out;
}

struct Repair {
    ReferenceTrajectory seg;
    CloudCheck check;
    ControlVec control{};
    ControlVec delta{};
    int attempts = 0;
};

// Scan perturbation candidates in |du| order until one checks safe.
Repair repair_segment(const Scenario& sc, const Predictor& pred, const PlannerConfig& cfg,
                      const ControlVec& u_j, const InitialSamples& entry, const StateVec& from,
                      std::uint64_t seg_seed) {
    const int cd = control_dim(sc.model);
    const std::vector<ControlVec> deltas = perturb_segment(sc.model, cfg);
    int tried = 0;
    for (const ControlVec& du : deltas) {
        if (tried >= cfg.max_attempts) break;
        ++tried;
        ControlVec cand{};
        for (int a = 0; a < cd; ++a)
            cand[a] = clampd(u_j[a] + du[a], sc.bounds.lo[a], sc.bounds.hi[a]);
        ReferenceTrajectory cref = make_reference(
            sc.model, from, std::vector<ControlVec>(static_cast<size_t>(sc.L()), cand), sc.dt,
            cfg.substeps);
        CloudCheck cc =
            check_cloud(pred, cref, sc.obstacles, entry, cfg,
                        Rng::derive(seg_seed, 0xd0c5ull + static_cast<std::uint64_t>(tried)),
                        cfg.propagate_entry);
        if (!cc.safe) continue;
        Repair r;
        r.seg = std::move(cref);
        r.check = std::move(cc);
        r.control = cand;
        r.attempts = tried;
        for (int a = 0; a < cd; ++a) r.delta[a] = cand[a] - u_j[a];
        return r;
    }
    throw RepairFailed("exhausted " + std::to_string(tried) + " perturbation candidates");
}

} // namespace

void PlannerConfig::validate(VehicleModel m, const ControlBounds& bounds) const {
    if (!(gamma >= 0.0)) throw ConfigError("planner: risk threshold must be non-negative");
    if (n_samples < 1) throw ConfigError("planner: need at least one sample per check");
    if (levels < 3 || levels % 2 == 0)
        throw ConfigError("planner: perturbation levels must be odd and at least 3");
    if (max_attempts < 1) throw ConfigError("planner: need at least one repair attempt");
    if (substeps < 1) throw ConfigError("planner: substeps must be positive");
    if (estimator.n_queries < 1) throw ConfigError("planner: need at least one query point");
    const int cd = control_dim(m);
    for (int a = 0; a < cd; ++a) {
        if (!(perturb_range[a] >= 0.0))
            throw ConfigError("planner: perturbation range must be non-negative");
        if (perturb_range[a] > bounds.hi[a] - bounds.lo[a])
            throw ConfigError("planner: perturbation range exceeds the control bounds");
    }
}

SegmentCheck check_segment(const Predictor& pred, const ReferenceTrajectory& segment,
                           const std::vector<Obstacle>& obstacles, const BoxDistribution& entry,
                           const BoxDistribution& dist_dist, const PlannerConfig& cfg) {
    if (!(cfg.gamma >= 0.0)) throw ConfigError("planner: risk threshold must be non-negative");
    if (cfg.n_samples < 1) throw ConfigError("planner: need at least one sample per check");
    const InitialSamples samples = sample_initial(entry, dist_dist, cfg.n_samples, cfg.seed);
    const CloudCheck c = check_cloud(pred, segment, obstacles, samples, cfg, cfg.seed, false);
    return {c.risk, c.safe};
}

std::vector<ControlVec> perturb_segment(VehicleModel m, const PlannerConfig& cfg) {
    const int cd = control_dim(m);
    const int R = cfg.levels;
    if (R < 3 || R % 2 == 0)
        throw ConfigError("planner: perturbation levels must be odd and at least 3");
    int total = 1;
    for (int a = 0; a < cd; ++a) total *= R;

    std::vector<ControlVec> out;
    out.reserve(static_cast<size_t>(total - 1));
    for (int idx = 0; idx < total; ++idx) {
        ControlVec du{};
        int rem = idx;
        bool zero = true;
        for (int a = 0; a < cd; ++a) {
            const int k = rem % R;
            rem /= R;
            du[a] = cfg.perturb_range[a] * (2.0 * k / (R - 1) - 1.0);
            if (du[a] != 0.0) zero = false;
        }
        if (!zero) out.push_back(du); // du = 0 is the plan that already failed
    }
    std::stable_sort(out.begin(), out.end(), [cd](const ControlVec& a, const ControlVec& b) {
        double na = 0.0, nb = 0.0;
        for (int i = 0; i < cd; ++i) {
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return na < nb;
    });
    // A zero range on some dimension collapses its levels onto one value;
    // drop the resulting duplicates, keeping first (grid-order) occurrences.
    std::vector<ControlVec> unique;
    unique.reserve(out.size());
    for (const ControlVec& du : out) {
        bool seen = false;
        for (const ControlVec& v : unique) {
            bool eq = true;
            for (int i = 0; i < cd; ++i) eq = eq && v[i] == du[i];
            if (eq) {
                seen = true;
                break;
            }
        }
        if (!seen) unique.push_back(du);
    }
    return unique;
}

PlanTrace plan(const Scenario& sc, const Predictor& pred, const PlannerConfig& cfg) {
    sc.validate();
    cfg.validate(sc.model, sc.bounds);
    if (pred.model() != sc.model)
        throw ConfigError("plan: predictor model does not match the scenario");

    const int N = sc.N;
    const int L = sc.L();
    const int pd = position_dim(sc.model);

    PlanTrace trace;
    trace.segments.reserve(static_cast<size_t>(N));
    std::vector<ControlVec> final_controls(static_cast<size_t>(N));

    int anchor = 0;
    SegmentedPlan cur = solve_nlp(sc, nullptr, cfg.nlp).plan;
    trace.nlp_solves = 1;

    StateVec cur_q = sc.q_origin;
    InitialSamples carried;
    if (cfg.propagate_entry)
        carried = sample_initial(sc.init, sc.dist, cfg.n_samples, cfg.seed);

    for (int j = 0; j < N; ++j) {
        const ControlVec u_j = cur.controls[static_cast<size_t>(j - anchor)];
        const std::uint64_t seg_seed =
            Rng::derive(cfg.seed, 0x5e91ull + static_cast<std::uint64_t>(j));
        const InitialSamples entry =
            cfg.propagate_entry ? std::move(carried)
                                : sample_initial(sc.init, sc.dist, cfg.n_samples, seg_seed);

        ReferenceTrajectory seg = make_reference(
            sc.model, cur_q, std::vector<ControlVec>(static_cast<size_t>(L), u_j), sc.dt,
            cfg.substeps);
        CloudCheck c =
            check_cloud(pred, seg, sc.obstacles, entry, cfg, seg_seed, cfg.propagate_entry);

        SegmentReport report;
        if (c.safe) {
            report.risk = c.risk;
            final_controls[static_cast<size_t>(j)] = u_j;
        } else {
            const StateVec planned_end = seg.states.back();
            Repair r;
            try {
                r = repair_segment(sc, pred, cfg, u_j, entry, cur_q, seg_seed);
            } catch (const RepairFailed& e) {
                throw PlanFailed("plan: segment " + std::to_string(j) + ": " + e.what(), j);
            }
            report.verdict = SegmentReport::Verdict::Repaired;
            report.risk = r.check.risk;
            report.attempts = r.attempts;
            report.delta = r.delta;
            double dev = 0.0;
            for (int p = 0; p < pd; ++p) {
                const double d = r.seg.states.back()[p] - planned_end[p];
                dev += d * d;
            }
            report.endpoint_deviation = std::sqrt(dev);
            final_controls[static_cast<size_t>(j)] = r.control;
            seg = std::move(r.seg);
            c = std::move(r.check);
        }

        trace.total_risk += report.risk;
        trace.segments.push_back(report);
        cur_q = seg.states.back();
        if (cfg.propagate_entry) carried = std::move(c.exit);

        // A repair moved the segment endpoint, so the rest of the plan aims
        // at a stale entry state: advance the anchor and re-solve from here.
        if (report.verdict == SegmentReport::Verdict::Repaired && j + 1 < N) {
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
            ++trace.nlp_solves;
            anchor = j + 1;
        }
    }

    trace.plan = rollout(final_controls, sc);
    return trace;
}

} // namespace riskplan
