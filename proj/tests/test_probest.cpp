#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "riskplan/errors.hpp"
#include "riskplan/parallel.hpp"
#include "riskplan/probest.hpp"
#include "riskplan/reference.hpp"

#include <algorithm>
#include <cmath>

using namespace riskplan;

namespace {

BoxDistribution gauss_init(double sigma) {
    BoxDistribution d;
    d.kind = BoxDistribution::Kind::GaussianTruncated;
    d.dim = 3;
    d.center = {0, 0, 0, 0};
    d.scale = {sigma, sigma, 0, 0};
    return d;
}

BoxDistribution point_dist() {
    BoxDistribution d;
    d.kind = BoxDistribution::Kind::UniformBox;
    d.dim = 3;
    d.center = {0, 0, 0, 0};
    d.scale = {0, 0, 0, 0};
    return d;
}

// Zero-dynamics cloud: a truncated standard 2D gaussian in (e_x, e_y) taken
// against a stationary reference at the origin, so |world position| = |e|.
PushedCloud static_cloud(int n, std::uint64_t seed) {
    const InitialSamples init = sample_initial(gauss_init(1.0), point_dist(), n, seed);
    PushedCloud cloud;
    cloud.model = VehicleModel::Car;
    cloud.t_index = 0;
    cloud.q_ref = {0, 0, 0, 0};
    cloud.errors = init.e0;
    cloud.log_density = init.log_weight0;
    cloud.states.resize(n);
    for (int i = 0; i < n; ++i)
        cloud.states[i] = world_from_error(cloud.model, cloud.errors[i], cloud.q_ref);
    return cloud;
}

// Hand cloud on a line: x positions with given densities, everything else 0.
PushedCloud line_cloud(const std::vector<double>& xs, const std::vector<double>& densities) {
    PushedCloud cloud;
    cloud.model = VehicleModel::Car;
    cloud.q_ref = {0, 0, 0, 0};
    for (size_t i = 0; i < xs.size(); ++i) {
        const ErrorVec e{xs[i], 0, 0, 0};
        cloud.errors.push_back(e);
        cloud.states.push_back(world_from_error(cloud.model, e, cloud.q_ref));
        cloud.log_density.push_back(std::log(densities[i]));
    }
    return cloud;
}

// P(|X| <= r) for X ~ N(0, I2) truncated to the +-3 sigma box.
double rayleigh_truncated(double r) {
    const double box = std::pow(std::erf(3.0 / std::sqrt(2.0)), 2.0);
    return (1.0 - std::exp(-0.5 * r * r)) / box;
}

ReferenceTrajectory stationary_ref(int T) {
    return make_reference(VehicleModel::Car, {0, 0, 0, 0},
                          std::vector<ControlVec>(T, ControlVec{0, 0, 0}), 0.02);
}

ReferenceTrajectory straight_ref(int T) {
    return make_reference(VehicleModel::Car, {0, 0, 0, 0},
                          std::vector<ControlVec>(T, ControlVec{1, 0, 0}), 0.02);
}

// Gains small enough that the closed loop is static over a few steps.
ClosedLoopParams frozen_loop() {
    ClosedLoopParams cl;
    cl.gains = {1e-12, 1e-12, 1e-12, 1e-12};
    return cl;
}

double mean_pairwise_dist(const std::vector<ErrorVec>& es, int limit) {
    const int n = std::min<int>(limit, static_cast<int>(es.size()));
    double sum = 0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d2 = 0;
            for (int k = 0; k < 4; ++k) d2 += (es[i][k] - es[j][k]) * (es[i][k] - es[j][k]);
            sum += std::sqrt(d2);
            ++cnt;
        }
    return sum / cnt;
}

} // namespace

TEST_CASE("initial samples are uniform over the support") {
    BoxDistribution init;
    init.kind = BoxDistribution::Kind::UniformBox;
    init.dim = 3;
    init.center = {0.5, 0.5, 0, 0};
    init.scale = {0.5, 0.5, 0, 0};
    const InitialSamples s = sample_initial(init, point_dist(), 10000, 11);
    double mx = 0, my = 0;
    for (const ErrorVec& e : s.e0) {
        mx += e[0];
        my += e[1];
        CHECK(e[0] >= 0.0);
        CHECK(e[0] <= 1.0);
        CHECK(e[2] == 0.0);
    }
    CHECK(std::abs(mx / 10000 - 0.5) < 0.02);
    CHECK(std::abs(my / 10000 - 0.5) < 0.02);
    // unit box, uniform density 1 -> zero log weight; point disturbance adds 0
    for (double lw : s.log_weight0) CHECK(lw == 0.0);
    for (const ControlVec& d : s.dist) CHECK(d == ControlVec{0, 0, 0});
}

TEST_CASE("degenerate initial support and seed determinism") {
    BoxDistribution init = gauss_init(1.0);
    init.scale = {0, 0, 0, 0};
    init.center = {0.3, -0.2, 0.1, 0};
    const InitialSamples s = sample_initial(init, point_dist(), 50, 4);
    for (const ErrorVec& e : s.e0) CHECK(e == ErrorVec{0.3, -0.2, 0.1, 0});

    const InitialSamples a = sample_initial(gauss_init(0.5), point_dist(), 200, 7);
    const InitialSamples b = sample_initial(gauss_init(0.5), point_dist(), 200, 7);
    const InitialSamples c = sample_initial(gauss_init(0.5), point_dist(), 200, 8);
    CHECK(a.e0 == b.e0);
    CHECK(a.log_weight0 == b.log_weight0);
    CHECK(a.e0 != c.e0);
}

TEST_CASE("push_forward at t=0 is the identity") {
    const ReferenceTrajectory ref = straight_ref(20);
    const ClosedLoopParams cl;
    const OraclePredictor pred(VehicleModel::Car, cl);
    const InitialSamples init = sample_initial(gauss_init(0.05), point_dist(), 100, 2);

    const PushedCloud cloud = push_forward(pred, init, ref, VehicleModel::Car, 0);
    CHECK(cloud.t_index == 0);
    REQUIRE(cloud.size() == 100);
    for (int i = 0; i < 100; ++i) {
        CHECK(cloud.errors[i] == init.e0[i]);
        CHECK(cloud.log_density[i] == init.log_weight0[i]);
        CHECK(cloud.states[i] == world_from_error(VehicleModel::Car, init.e0[i], ref.states[0]));
    }
    CHECK_THROWS_AS(push_forward(pred, init, ref, VehicleModel::Car, 21), HorizonExceeded);
}

TEST_CASE("incremental propagation matches the one-shot push") {
    const ReferenceTrajectory ref = straight_ref(20);
    const ClosedLoopParams cl;
    const OraclePredictor pred(VehicleModel::Car, cl);
    const InitialSamples init = sample_initial(gauss_init(0.1), point_dist(), 64, 3);

    auto prop = pred.propagate(ref, init.e0, init.dist);
    for (int k = 0; k < 5; ++k) prop->advance(1);
    const PushedCloud inc = cloud_at(*prop, init, ref, VehicleModel::Car);
    const PushedCloud oneshot = push_forward(pred, init, ref, VehicleModel::Car, 5);
    CHECK(inc.t_index == oneshot.t_index);
    CHECK(inc.errors == oneshot.errors);
    CHECK(inc.log_density == oneshot.log_density);
    CHECK(inc.states == oneshot.states);
}

TEST_CASE("contraction shrinks dispersion and raises density") {
    const ReferenceTrajectory ref = straight_ref(60);
    const ClosedLoopParams cl;
    const OraclePredictor pred(VehicleModel::Car, cl);
    const InitialSamples init = sample_initial(gauss_init(0.1), point_dist(), 120, 6);

    const PushedCloud c0 = push_forward(pred, init, ref, VehicleModel::Car, 0);
    const PushedCloud c1 = push_forward(pred, init, ref, VehicleModel::Car, 25);
    const PushedCloud c2 = push_forward(pred, init, ref, VehicleModel::Car, 50);
    const double d0 = mean_pairwise_dist(c0.errors, 100);
    const double d1 = mean_pairwise_dist(c1.errors, 100);
    const double d2 = mean_pairwise_dist(c2.errors, 100);
    CHECK(d1 < d0);
    CHECK(d2 < d1);
    // contraction concentrates mass: log densities go up relative to t=0
    double mean_gain = 0;
    for (int i = 0; i < c2.size(); ++i) mean_gain += c2.log_density[i] - c0.log_density[i];
    CHECK(mean_gain / c2.size() > 0.5);
}

TEST_CASE("nearest-neighbor density interpolation") {
    const PushedCloud cloud = line_cloud({0, 1, 2}, {1, 1, 2});
    CHECK(interp_density(cloud, {0.4, 0, 0, 0}) == doctest::Approx(1.0));
    CHECK(interp_density(cloud, {1.6, 0, 0, 0}) == doctest::Approx(2.0));
    CHECK(interp_density(cloud, {2.0, 0, 0, 0}) == doctest::Approx(2.0)); // on a sample
    // midpoint tie between samples 1 and 2 -> lowest index wins
    CHECK(interp_density(cloud, {1.5, 0, 0, 0}) == doctest::Approx(1.0));

    // exact duplicate positions with different densities: index 0 wins
    const PushedCloud dup = line_cloud({1, 1, 3}, {5, 7, 1});
    CHECK(interp_density(dup, {1.2, 0, 0, 0}) == doctest::Approx(5.0));

    const PushedCloud flat = line_cloud({0, 0.5, 1, 1.5}, {0.7, 0.7, 0.7, 0.7});
    CHECK(interp_density(flat, {0.33, 0, 0, 0}) == doctest::Approx(0.7));
    CHECK(interp_density(flat, {9.0, 0, 0, 0}) == doctest::Approx(0.7));
}

TEST_CASE("reach probability: extremes, zero property, 1D partition example") {
    const PushedCloud cloud = static_cloud(500, 12);
    EstimatorOptions opt;
    opt.n_queries = 2000;
    opt.seed = 1;
    CHECK(estimate_reach_prob(cloud, [](const ErrorVec&, const StateVec&) { return true; }, opt) ==
          1.0);
    CHECK(estimate_reach_prob(cloud, [](const ErrorVec&, const StateVec&) { return false; }, opt) ==
          0.0);
    // region disjoint from the inflated support -> exactly zero
    CHECK(estimate_reach_prob(
              cloud, [](const ErrorVec& e, const StateVec&) { return e[0] > 100.0; }, opt) == 0.0);

    // 3 samples at x = 0, 1, 2 with densities 1, 1, 2 and balls of radius
    // 1/2: the region x > 3/2 is exactly the third sample's cell, so its
    // mass is 2 of the total 4
    const PushedCloud line = line_cloud({0, 1, 2}, {1, 1, 2});
    EstimatorOptions lopt;
    lopt.n_queries = 40000;
    lopt.seed = 3;
    lopt.normalize = false;
    lopt.r_override = 0.5;
    const double p = estimate_reach_prob(
        line, [](const ErrorVec& e, const StateVec&) { return e[0] > 1.5; }, lopt);
    CHECK(std::abs(p - 0.5) < 0.02);
}

TEST_CASE("monotonicity of the estimate in the region") {
    const PushedCloud cloud = static_cloud(800, 17);
    EstimatorOptions opt;
    opt.n_queries = 3000;
    opt.seed = 5;
    const QuerySet qs = make_queries(cloud, opt);
    double prev = 0.0;
    for (double radius = 0.2; radius < 2.6; radius += 0.2) {
        const double p = reach_prob(qs, [radius](const ErrorVec& e, const StateVec&) {
            return e[0] * e[0] + e[1] * e[1] <= radius * radius;
        });
        CHECK(p >= prev);
        CHECK(p <= 1.0);
        prev = p;
    }
}

TEST_CASE("estimator input validation") {
    // three samples spanning three directions cannot seed a hull
    PushedCloud tiny;
    tiny.model = VehicleModel::Car;
    tiny.q_ref = {0, 0, 0, 0};
    for (const ErrorVec& e :
         {ErrorVec{0, 0, 0, 0}, ErrorVec{1, 0, 0.1, 0}, ErrorVec{0, 1, -0.1, 0}}) {
        tiny.errors.push_back(e);
        tiny.states.push_back(world_from_error(tiny.model, e, tiny.q_ref));
        tiny.log_density.push_back(0.0);
    }
    EstimatorOptions opt;
    opt.n_queries = 100;
    CHECK_THROWS_AS(make_queries(tiny, opt), ConfigError);

    // vanishing inflation radius starves the rejection sampler
    const PushedCloud cloud = static_cloud(200, 23);
    EstimatorOptions degenerate;
    degenerate.n_queries = 500;
    degenerate.r_override = 1e-9;
    CHECK_THROWS_AS(make_queries(cloud, degenerate), EmptySupport);
}

TEST_CASE("collision probability matches the Rayleigh oracle") {
    const double truth = rayleigh_truncated(1.0);
    CHECK(std::abs(truth - 0.3956) < 5e-4); // the analytic value itself

    std::vector<double> ests;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PushedCloud cloud = static_cloud(1000, 100 + seed);
        EstimatorOptions opt;
        opt.n_queries = 10000;
        opt.seed = 200 + seed;
        ests.push_back(collision_prob(cloud, Obstacle{{0, 0, 0}, 1.0}, opt));
    }
    std::sort(ests.begin(), ests.end());
    CHECK(std::abs(ests[2] - truth) < 0.02);
    for (double e : ests) {
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
    }

    const PushedCloud cloud = static_cloud(600, 31);
    EstimatorOptions opt;
    opt.n_queries = 2000;
    opt.seed = 8;
    const double huge = collision_prob(
        cloud, Obstacle{{0, 0, 0}, std::numeric_limits<double>::infinity()}, opt);
    CHECK(huge == 1.0);
    CHECK(collision_prob(cloud, Obstacle{{50, 0, 0}, 1.0}, opt) == 0.0);
}

TEST_CASE("estimate converges as the query count grows") {
    const PushedCloud cloud = static_cloud(2000, 77);
    const Obstacle obs{{0, 0, 0}, 1.0};

    EstimatorOptions ref_opt;
    ref_opt.n_queries = 400000;
    ref_opt.seed = 9990;
    const double limit = collision_prob(cloud, obs, ref_opt);
    CHECK(std::abs(limit - rayleigh_truncated(1.0)) < 0.02);

    std::vector<double> med;
    for (int n_q : {1000, 10000, 100000}) {
        std::vector<double> errs;
        for (std::uint64_t trial = 0; trial < 20; ++trial) {
            EstimatorOptions opt;
            opt.n_queries = n_q;
            opt.seed = 500 + trial;
            errs.push_back(std::abs(collision_prob(cloud, obs, opt) - limit));
        }
        std::sort(errs.begin(), errs.end());
        med.push_back(0.5 * (errs[9] + errs[10]));
    }
    CHECK(med[1] < med[0]);
    CHECK(med[2] < med[1]);
}

TEST_CASE("risk report bookkeeping over timesteps and obstacles") {
    const ReferenceTrajectory ref = stationary_ref(10);
    const OraclePredictor pred(VehicleModel::Car, frozen_loop());
    const std::vector<Obstacle> two{{{0, 0, 0}, 1.0}, {{0, 0, 0}, 1.0}};
    EstimatorOptions opt;
    opt.n_queries = 6000;
    opt.seed = 21;

    const RiskReport rep =
        total_risk(pred, ref, 5, two, gauss_init(1.0), point_dist(), 1000, opt);
    CHECK(rep.variant == "density");
    CHECK(rep.T == 5);
    CHECK(rep.n_obstacles == 2);
    REQUIRE(rep.per_entry.size() == 10);

    double sum = 0;
    for (int t = 1; t <= 5; ++t) {
        // identical obstacles share the per-timestep query set exactly
        CHECK(rep.entry(t, 0) == rep.entry(t, 1));
        // static cloud: entries differ across t only by query noise
        CHECK(std::abs(rep.entry(t, 0) - rep.entry(1, 0)) < 0.05);
        sum += rep.entry(t, 0) + rep.entry(t, 1);
    }
    CHECK(rep.total_raw == sum);
    CHECK(rep.total == 1.0); // raw ~ 4, clamped for reporting
    CHECK(std::abs(rep.total_raw / 10 - rayleigh_truncated(1.0)) < 0.03);

    const RiskReport none =
        total_risk(pred, ref, 5, {}, gauss_init(1.0), point_dist(), 500, opt);
    CHECK(none.total_raw == 0.0);
    CHECK(none.total == 0.0);
    CHECK(none.per_entry.empty());

    const RiskReport single =
        total_risk(pred, ref, 1, {two[0]}, gauss_init(1.0), point_dist(), 500, opt);
    CHECK(single.total_raw == single.entry(1, 0));

    CHECK_THROWS_AS(total_risk(pred, ref, 11, two, gauss_init(1.0), point_dist(), 100, opt),
                    HorizonExceeded);
}

TEST_CASE("heatmap mass is normalized and symmetric") {
    const PushedCloud cloud = static_cloud(1500, 5);
    EstimatorOptions opt;
    opt.n_queries = 20000;
    opt.seed = 13;

    GridSpec one;
    one.origin_x = -10;
    one.origin_y = -10;
    one.cell = 20;
    one.nx = 1;
    one.ny = 1;
    const Heatmap single = make_heatmap(cloud, one, opt);
    CHECK(single.mass[0] == 1.0);

    const GridSpec grid = auto_grid(cloud, opt, 20, 20);
    const Heatmap hm = make_heatmap(cloud, grid, opt);
    CHECK(hm.t_index == cloud.t_index);
    REQUIRE(hm.mass.size() == 400);
    double total = 0;
    for (double m : hm.mass) {
        CHECK(m >= 0.0);
        total += m;
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);

    // symmetric cloud on a symmetric grid: halves carry equal mass
    GridSpec sym;
    sym.origin_x = -4;
    sym.origin_y = -4;
    sym.cell = 0.4;
    sym.nx = 20;
    sym.ny = 20;
    const Heatmap hs = make_heatmap(cloud, sym, opt);
    double left = 0, right = 0, down = 0, up = 0;
    for (int iy = 0; iy < 20; ++iy)
        for (int ix = 0; ix < 20; ++ix) {
            const double m = hs.mass[iy * 20 + ix];
            (ix < 10 ? left : right) += m;
            (iy < 10 ? down : up) += m;
        }
    CHECK(std::abs(left - right) < 0.02);
    CHECK(std::abs(down - up) < 0.02);
}

TEST_CASE("monte carlo baseline: clear scenario and Rayleigh oracle") {
    // zero uncertainty, obstacle far away -> exactly zero
    BoxDistribution point_init = gauss_init(1.0);
    point_init.scale = {0, 0, 0, 0};
    const ReferenceTrajectory ref = straight_ref(50);
    const ClosedLoopParams cl;
    const RiskReport clear = mc_collision_prob(VehicleModel::Car, ref, cl, point_init,
                                               point_dist(), {{{50, 50, 0}, 1.0}}, 50, 100, 1);
    CHECK(clear.variant == "monte-carlo");
    CHECK(clear.total_raw == 0.0);
    CHECK(clear.any_timestep == 0.0);

    // static gaussian vs the analytic disk mass, within binomial 3 sigma
    const ReferenceTrajectory still = stationary_ref(2);
    const RiskReport mc =
        mc_collision_prob(VehicleModel::Car, still, frozen_loop(), gauss_init(1.0), point_dist(),
                          {{{0, 0, 0}, 1.0}}, 2, 20000, 9);
    const double truth = rayleigh_truncated(1.0);
    const double sigma3 = 3 * std::sqrt(truth * (1 - truth) / 20000);
    CHECK(std::abs(mc.entry(1, 0) - truth) < sigma3);
    CHECK(mc.entry(2, 0) == mc.entry(1, 0)); // frozen loop: same hits every step
    CHECK(mc.any_timestep == mc.entry(1, 0));
    CHECK(mc.total_raw == doctest::Approx(mc.entry(1, 0) + mc.entry(2, 0)));
}

TEST_CASE("rare event: small-sample MC misses what the density variant sees") {
    // ~8e-4 of mass sits in a small disk out in the tail
    const ReferenceTrajectory still = stationary_ref(1);
    const std::vector<Obstacle> obs{{{2.8, 0, 0}, 0.3}};
    const RiskReport mc = mc_collision_prob(VehicleModel::Car, still, frozen_loop(),
                                            gauss_init(1.0), point_dist(), obs, 1, 500, 4);
    CHECK(mc.total_raw == 0.0);

    const OraclePredictor pred(VehicleModel::Car, frozen_loop());
    EstimatorOptions opt;
    opt.n_queries = 10000;
    opt.seed = 4;
    const RiskReport density =
        total_risk(pred, still, 1, obs, gauss_init(1.0), point_dist(), 1000, opt);
    CHECK(density.total_raw > 1e-4);
    CHECK(density.total_raw < 5e-3);
}

TEST_CASE("estimators are deterministic under seeds and thread counts") {
    const ReferenceTrajectory ref = stationary_ref(3);
    const OraclePredictor pred(VehicleModel::Car, frozen_loop());
    const std::vector<Obstacle> obs{{{0.5, 0.2, 0}, 0.8}};
    EstimatorOptions opt;
    opt.n_queries = 3000;
    opt.seed = 42;

    const int saved = thread_count();
    set_thread_count(1);
    const RiskReport a = total_risk(pred, ref, 3, obs, gauss_init(1.0), point_dist(), 400, opt);
    const RiskReport mc_a = mc_collision_prob(VehicleModel::Car, ref, frozen_loop(),
                                              gauss_init(1.0), point_dist(), obs, 3, 4000, 7);
    set_thread_count(4);
    const RiskReport b = total_risk(pred, ref, 3, obs, gauss_init(1.0), point_dist(), 400, opt);
    const RiskReport mc_b = mc_collision_prob(VehicleModel::Car, ref, frozen_loop(),
                                              gauss_init(1.0), point_dist(), obs, 3, 4000, 7);
    set_thread_count(saved);

    CHECK(a.per_entry == b.per_entry);
    CHECK(a.total_raw == b.total_raw);
    CHECK(mc_a.per_entry == mc_b.per_entry);
    CHECK(mc_a.any_timestep == mc_b.any_timestep);

    const RiskReport c = total_risk(pred, ref, 3, obs, gauss_init(1.0), point_dist(), 400, opt);
    CHECK(c.per_entry == a.per_entry);
}

TEST_CASE("reach set hulls contain every projected sample") {
    const ReferenceTrajectory ref = straight_ref(40);
    const OraclePredictor pred(VehicleModel::Car, ClosedLoopParams{});
    const InitialSamples init = sample_initial(gauss_init(0.2), point_dist(), 300, 14);
    const PushedCloud cloud = push_forward(pred, init, ref, VehicleModel::Car, 30);

    EstimatorOptions opt;
    const ReachSetApprox rs = reach_set(cloud, opt);
    CHECK(rs.t_index == 30);
    CHECK(rs.r > 0.0);
    REQUIRE(rs.hull2d.size() >= 3);
    std::vector<std::array<double, 2>> xy(cloud.size());
    for (int i = 0; i < cloud.size(); ++i) xy[i] = {cloud.states[i][0], cloud.states[i][1]};
    for (const auto& p : xy) CHECK(hull_2d_signed_distance(xy, rs.hull2d, p) <= 1e-9);

    // hovercraft: 3D hull over projected positions
    BoxDistribution hinit;
    hinit.dim = 4;
    hinit.scale = {0.2, 0.2, 0.2, 0};
    const ReferenceTrajectory href =
        make_reference(VehicleModel::Hovercraft, {0, 0, 0, 0},
                       std::vector<ControlVec>(40, ControlVec{1, 0.2, 0}), 0.02);
    const OraclePredictor hpred(VehicleModel::Hovercraft, ClosedLoopParams{});
    const InitialSamples hs = sample_initial(hinit, point_dist(), 300, 15);
    const PushedCloud hcloud = push_forward(hpred, hs, href, VehicleModel::Hovercraft, 30);
    const ReachSetApprox hrs = reach_set(hcloud, opt);
    REQUIRE(!hrs.hull3d.faces.empty());
    std::vector<std::array<double, 3>> xyz(hcloud.size());
    for (int i = 0; i < hcloud.size(); ++i)
        xyz[i] = {hcloud.states[i][0], hcloud.states[i][1], hcloud.states[i][2]};
    for (const auto& p : xyz) CHECK(hull_3d_max_violation(xyz, hrs.hull3d, p) <= 1e-9);
}
