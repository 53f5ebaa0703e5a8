#include "riskplan/probest.hpp"

#include "riskplan/errors.hpp"
#include "riskplan/nn_index.hpp"
#include "riskplan/parallel.hpp"
#include "riskplan/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace riskplan {

namespace {

// Cloud geometry in (optionally) per-dim normalized coordinates, plus the
// inflation radius of the union-of-balls reach approximation.
struct CloudGeometry {
    int dim = 0;
    Vec4 mean{}, scale{};
    std::vector<Vec4> pts; // normalized errors
    double r = 0.0;
};

CloudGeometry prepare_geometry(const PushedCloud& cloud, const EstimatorOptions& opt) {
    const int n = cloud.size();
    CloudGeometry g;
    g.dim = error_dim(cloud.model);
    int live = 0;
    for (int i = 0; i < 4; ++i) {
        g.mean[i] = 0;
        g.scale[i] = 1;
    }
    for (int i = 0; i < g.dim; ++i) {
        double m = 0;
        for (const ErrorVec& e : cloud.errors) m += e[i];
        m /= n;
        double v = 0;
        for (const ErrorVec& e : cloud.errors) v += (e[i] - m) * (e[i] - m);
        if (v > 0) ++live;
        if (opt.normalize) {
            g.mean[i] = m;
            g.scale[i] = std::max(std::sqrt(v / n), 1e-12);
        }
    }
    // d counts spanned directions only, so degenerate (point/line/plane)
    // clouds keep the hand-computable low-dimensional examples valid
    if (n < live + 1) throw ConfigError("estimator: need at least d+1 pushed samples");
    g.pts.resize(n);
    for (int p = 0; p < n; ++p)
        for (int i = 0; i < g.dim; ++i) g.pts[p][i] = (cloud.errors[p][i] - g.mean[i]) / g.scale[i];
    return g;
}

double inflation_radius(const CloudGeometry& g, const NnIndex& index,
                        const EstimatorOptions& opt) {
    if (opt.r_override > 0) return opt.r_override;
    const int n = static_cast<int>(g.pts.size());
    const int k = std::min(3, n - 1);
    double sum = 0;
    std::vector<double> dists(n);
    parallel_for(n, [&](std::int64_t i) { dists[i] = index.kth_nearest_dist(static_cast<int>(i), k); });
    for (double d : dists) sum += d;
    const double r = sum / n;
    if (!(r > 0) || !std::isfinite(r))
        throw EmptySupport("estimator: degenerate sample cloud, inflation radius is zero");
    return r;
}

} // namespace

InitialSamples sample_initial(const BoxDistribution& init, const BoxDistribution& dist_dist,
                              int n, std::uint64_t seed) {
    InitialSamples out;
    out.e0.resize(n);
    out.dist.resize(n);
    out.log_weight0.resize(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const Vec4 e = init.sample_support_uniform(rng);
        const Vec4 d = dist_dist.sample_support_uniform(rng);
        out.e0[i] = e;
        out.dist[i] = {d[0], d[1], d[2]};
        out.log_weight0[i] = std::log(init.density_at(e)) + std::log(dist_dist.density_at(d));
    }
    return out;
}

PushedCloud cloud_at(const Propagation& prop, const InitialSamples& init,
                     const ReferenceTrajectory& ref, VehicleModel m) {
    PushedCloud cloud;
    cloud.model = m;
    cloud.t_index = prop.step();
    cloud.q_ref = ref.states[prop.step()];
    cloud.errors = prop.errors();
    const int n = cloud.size();
    cloud.states.resize(n);
    cloud.log_density.resize(n);
    const std::vector<double>& g = prop.log_ratios();
    parallel_for(n, [&](std::int64_t i) {
        cloud.states[i] = world_from_error(m, cloud.errors[i], cloud.q_ref);
        cloud.log_density[i] = init.log_weight0[i] + g[i];
    });
    return cloud;
}

PushedCloud push_forward(const Predictor& pred, const InitialSamples& init,
                         const ReferenceTrajectory& ref, VehicleModel m, int t) {
    if (t > pred.max_steps(ref))
        throw HorizonExceeded("push_forward: t beyond predictor horizon");
    auto prop = pred.propagate(ref, init.e0, init.dist);
    prop->advance(t);
    return cloud_at(*prop, init, ref, m);
}

double interp_density(const PushedCloud& cloud, const ErrorVec& query) {
    EstimatorOptions opt; // defaults: normalized metric
    CloudGeometry g = prepare_geometry(cloud, opt);
    Vec4 z{};
    for (int i = 0; i < g.dim; ++i) z[i] = (query[i] - g.mean[i]) / g.scale[i];
    const int nn = nearest_brute(g.pts, g.dim, z);
    return std::exp(cloud.log_density[nn]);
}

QuerySet make_queries(const PushedCloud& cloud, const EstimatorOptions& opt) {
    const CloudGeometry g = prepare_geometry(cloud, opt);
    const NnIndex index(g.pts, g.dim);
    const double r = inflation_radius(g, index, opt);

    Vec4 lo{}, hi{};
    for (int i = 0; i < g.dim; ++i) {
        lo[i] = g.pts[0][i];
        hi[i] = g.pts[0][i];
    }
    for (const Vec4& p : g.pts)
        for (int i = 0; i < g.dim; ++i) {
            lo[i] = std::min(lo[i], p[i]);
            hi[i] = std::max(hi[i], p[i]);
        }
    for (int i = 0; i < g.dim; ++i) {
        lo[i] -= r;
        hi[i] += r;
    }

    // rejection sampling from the bounding box of the inflated support
    const int n_q = opt.n_queries;
    const long long max_attempts = 1000LL * n_q; // acceptance-rate floor 0.1%
    std::vector<Vec4> accepted;
    accepted.reserve(n_q);
    Rng rng(opt.seed);
    long long attempts = 0;
    while (static_cast<int>(accepted.size()) < n_q && attempts < max_attempts) {
        ++attempts;
        Vec4 z{};
        for (int i = 0; i < g.dim; ++i) z[i] = rng.uniform(lo[i], hi[i]);
        if (index.any_within(z, r)) accepted.push_back(z);
    }
    if (static_cast<int>(accepted.size()) < n_q)
        throw EmptySupport("estimator: query acceptance below 0.1%, reach approximation is "
                           "degenerate (r too small)");

    double shift = -std::numeric_limits<double>::infinity();
    for (double ld : cloud.log_density) shift = std::max(shift, ld);

    QuerySet qs;
    qs.r = r;
    qs.errors.resize(n_q);
    qs.states.resize(n_q);
    qs.weight.resize(n_q);
    parallel_for(n_q, [&](std::int64_t qi) {
        const Vec4& z = accepted[qi];
        const int nn = index.nearest(z);
        ErrorVec e{};
        for (int i = 0; i < g.dim; ++i) e[i] = g.mean[i] + g.scale[i] * z[i];
        qs.errors[qi] = e;
        qs.states[qi] = world_from_error(cloud.model, e, cloud.q_ref);
        qs.weight[qi] = std::exp(cloud.log_density[nn] - shift);
    });
    return qs;
}

double reach_prob(const QuerySet& qs, const RegionPred& in_region) {
    double num = 0, den = 0;
    for (size_t i = 0; i < qs.weight.size(); ++i) {
        den += qs.weight[i];
        if (in_region(qs.errors[i], qs.states[i])) num += qs.weight[i];
    }
    return num / den;
}

double estimate_reach_prob(const PushedCloud& cloud, const RegionPred& in_region,
                           const EstimatorOptions& opt) {
    return reach_prob(make_queries(cloud, opt), in_region);
}

bool inside_obstacle(VehicleModel m, const StateVec& q, const Obstacle& obs) {
    double d2 = 0;
    for (int i = 0; i < position_dim(m); ++i) {
        const double d = q[i] - obs.center[i];
        d2 += d * d;
    }
    return d2 <= obs.radius * obs.radius;
}

double collision_prob(const PushedCloud& cloud, const Obstacle& obs, const EstimatorOptions& opt) {
    const VehicleModel m = cloud.model;
    return estimate_reach_prob(
        cloud, [&](const ErrorVec&, const StateVec& q) { return inside_obstacle(m, q, obs); }, opt);
}

RiskReport total_risk(const Predictor& pred, const ReferenceTrajectory& ref, int T,
                      const std::vector<Obstacle>& obstacles, const BoxDistribution& init,
                      const BoxDistribution& dist_dist, int n_samples,
                      const EstimatorOptions& opt) {
    if (T > pred.max_steps(ref) || T > ref.steps())
        throw HorizonExceeded("total_risk: horizon beyond predictor or reference");
    const VehicleModel m = pred.model();
    const int M = static_cast<int>(obstacles.size());

    RiskReport rep;
    rep.variant = "density";
    rep.n_samples = n_samples;
    rep.n_queries = opt.n_queries;
    rep.T = T;
    rep.n_obstacles = M;
    rep.per_entry.assign(static_cast<size_t>(T) * M, 0.0);

    const InitialSamples samples = sample_initial(init, dist_dist, n_samples, opt.seed);
    auto prop = pred.propagate(ref, samples.e0, samples.dist);
    for (int t = 1; t <= T; ++t) {
        prop->advance(1);
        const PushedCloud cloud = cloud_at(*prop, samples, ref, m);
        EstimatorOptions o = opt;
        o.seed = Rng::derive(opt.seed, 0x9d4cull * t);
        const QuerySet qs = make_queries(cloud, o);
        for (int i = 0; i < M; ++i) {
            const Obstacle& obs = obstacles[i];
            rep.per_entry[(t - 1) * static_cast<size_t>(M) + i] = reach_prob(
                qs, [&](const ErrorVec&, const StateVec& q) { return inside_obstacle(m, q, obs); });
        }
    }
    for (double p : rep.per_entry) rep.total_raw += p;
    rep.total = std::min(1.0, rep.total_raw);
    return rep;
}

GridSpec auto_grid(const PushedCloud& cloud, const EstimatorOptions& opt, int nx, int ny) {
    const CloudGeometry g = prepare_geometry(cloud, opt);
    const NnIndex index(g.pts, g.dim);
    const double r = inflation_radius(g, index, opt);
    const double pad = r * std::max(g.scale[0], g.scale[1]);

    double xlo = cloud.states[0][0], xhi = xlo, ylo = cloud.states[0][1], yhi = ylo;
    for (const StateVec& s : cloud.states) {
        xlo = std::min(xlo, s[0]);
        xhi = std::max(xhi, s[0]);
        ylo = std::min(ylo, s[1]);
        yhi = std::max(yhi, s[1]);
    }
    xlo -= pad;
    xhi += pad;
    ylo -= pad;
    yhi += pad;
    GridSpec spec;
    spec.nx = nx;
    spec.ny = ny;
    spec.cell = std::max((xhi - xlo) / nx, (yhi - ylo) / ny);
    spec.origin_x = 0.5 * (xlo + xhi) - 0.5 * nx * spec.cell;
    spec.origin_y = 0.5 * (ylo + yhi) - 0.5 * ny * spec.cell;
    return spec;
}

Heatmap make_heatmap(const PushedCloud& cloud, const GridSpec& grid, const EstimatorOptions& opt) {
    const QuerySet qs = make_queries(cloud, opt);
    Heatmap hm;
    hm.grid = grid;
    hm.t_index = cloud.t_index;
    hm.mass.assign(static_cast<size_t>(grid.nx) * grid.ny, 0.0);
    double den = 0;
    for (size_t q = 0; q < qs.weight.size(); ++q) {
        const double x = qs.states[q][0], y = qs.states[q][1];
        const int ix = static_cast<int>(std::floor((x - grid.origin_x) / grid.cell));
        const int iy = static_cast<int>(std::floor((y - grid.origin_y) / grid.cell));
        if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny) continue;
        hm.mass[static_cast<size_t>(iy) * grid.nx + ix] += qs.weight[q];
        den += qs.weight[q];
    }
    if (den == 0) throw EmptySupport("heatmap: no query lands inside the grid");
    for (double& m : hm.mass) m /= den;
    return hm;
}

RiskReport mc_collision_prob(VehicleModel m, const ReferenceTrajectory& ref,
                             const ClosedLoopParams& cl, const BoxDistribution& init,
                             const BoxDistribution& dist_dist,
                             const std::vector<Obstacle>& obstacles, int T, int n_rollouts,
                             std::uint64_t seed, int rollout_substeps) {
    if (T > ref.steps()) throw HorizonExceeded("mc_collision_prob: T beyond reference");
    ReferenceTrajectory rref = ref;
    rref.substeps = std::max(1, rollout_substeps);
    const int M = static_cast<int>(obstacles.size());

    std::vector<long long> counts(static_cast<size_t>(T) * M, 0);
    long long any_count = 0;

    const int batch = 1 << 15;
    std::vector<std::vector<int>> hits(batch);
    std::vector<char> any(batch);
    std::atomic<long long> first_bad{std::numeric_limits<long long>::max()};
    for (int base = 0; base < n_rollouts; base += batch) {
        const int nb = std::min(batch, n_rollouts - base);
        parallel_for(nb, [&](std::int64_t j) {
            hits[j].clear();
            any[j] = 0;
            try {
                Rng rng = Rng::child(seed, static_cast<std::uint64_t>(base) + j);
                const Vec4 e0v = init.sample(rng);
                const Vec4 dv = dist_dist.sample(rng);
                const ErrorVec e0{e0v[0], e0v[1], e0v[2], e0v[3]};
                const ControlVec d{dv[0], dv[1], dv[2]};
                const StateVec q0 = world_from_error(m, e0, rref.states[0]);
                const TrajectorySample tr = simulate_rollout(m, q0, rref, cl, d, T);
                for (int t = 1; t <= T; ++t)
                    for (int i = 0; i < M; ++i)
                        if (inside_obstacle(m, tr.states[t], obstacles[i])) {
                            hits[j].push_back((t - 1) * M + i);
                            any[j] = 1;
                        }
            } catch (const NonFiniteState&) {
                long long cur = first_bad.load();
                const long long idx = base + j;
                while (idx < cur && !first_bad.compare_exchange_weak(cur, idx)) {
                }
            }
        });
        if (first_bad.load() != std::numeric_limits<long long>::max())
            throw NonFiniteState("mc_collision_prob: rollout " + std::to_string(first_bad.load()) +
                                 " diverged");
        for (int j = 0; j < nb; ++j) {
            for (int c : hits[j]) ++counts[c];
            any_count += any[j];
        }
    }

    RiskReport rep;
    rep.variant = "monte-carlo";
    rep.n_samples = n_rollouts;
    rep.T = T;
    rep.n_obstacles = M;
    rep.per_entry.resize(counts.size());
    for (size_t c = 0; c < counts.size(); ++c)
        rep.per_entry[c] = static_cast<double>(counts[c]) / n_rollouts;
    for (double p : rep.per_entry) rep.total_raw += p;
    rep.total = std::min(1.0, rep.total_raw);
    rep.any_timestep = static_cast<double>(any_count) / n_rollouts;
    return rep;
}

ReachSetApprox reach_set(const PushedCloud& cloud, const EstimatorOptions& opt) {
    const CloudGeometry g = prepare_geometry(cloud, opt);
    const NnIndex index(g.pts, g.dim);
    ReachSetApprox rs;
    rs.t_index = cloud.t_index;
    rs.r = inflation_radius(g, index, opt);
    std::vector<std::array<double, 2>> xy(cloud.size());
    for (int i = 0; i < cloud.size(); ++i) xy[i] = {cloud.states[i][0], cloud.states[i][1]};
    rs.hull2d = convex_hull_2d(xy);
    if (cloud.model == VehicleModel::Hovercraft) {
        std::vector<std::array<double, 3>> xyz(cloud.size());
        for (int i = 0; i < cloud.size(); ++i)
            xyz[i] = {cloud.states[i][0], cloud.states[i][1], cloud.states[i][2]};
        rs.hull3d = convex_hull_3d(xyz);
    }
    return rs;
}

} // namespace riskplan
