#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "riskplan/errors.hpp"
#include "riskplan/trajopt.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace riskplan;

namespace {

Scenario car_scenario() {
    Scenario sc;
    sc.model = VehicleModel::Car;
    sc.q_origin = {0.0, 0.0, 0.0, 0.0};
    sc.q_dest = {1.0, 0.0, 0.0, 0.0};
    sc.T = 50;
    sc.N = 5;
    sc.dt = 0.02;
    return sc;
}

// Same reduction as NlpReport.penetration, recomputed from the states.
double penetration_of(const Scenario& sc, const std::vector<StateVec>& states) {
    const int pd = position_dim(sc.model);
    double worst = 0.0;
    for (const Obstacle& o : sc.obstacles) {
        for (const StateVec& s : states) {
            double d2 = 0.0;
            for (int p = 0; p < pd; ++p) d2 += (s[p] - o.center[p]) * (s[p] - o.center[p]);
            worst = std::max(worst, o.radius - std::sqrt(d2));
        }
    }
    return worst;
}

double min_obstacle_distance(const Scenario& sc, const std::vector<StateVec>& states) {
    const int pd = position_dim(sc.model);
    double best = std::numeric_limits<double>::infinity();
    for (const Obstacle& o : sc.obstacles) {
        for (const StateVec& s : states) {
            double d2 = 0.0;
            for (int p = 0; p < pd; ++p) d2 += (s[p] - o.center[p]) * (s[p] - o.center[p]);
            best = std::min(best, std::sqrt(d2));
        }
    }
    return best;
}

} // namespace

TEST_CASE("rollout follows the Euler recurrence exactly") {
    Scenario sc = car_scenario();
    std::vector<ControlVec> controls(5, ControlVec{});
    for (int j = 0; j < 5; ++j) {
        controls[j][0] = 0.5 + 0.1 * j;
        controls[j][1] = 0.2 - 0.1 * j;
    }
    SegmentedPlan plan = rollout(controls, sc);
    REQUIRE(plan.L == 10);
    REQUIRE(plan.steps() == 50);
    REQUIRE(plan.states.size() == 51);

    // Recompute the recurrence here; every state must match bit for bit.
    StateVec q = sc.q_origin;
    CHECK(plan.states[0] == q);
    for (int k = 0; k < 50; ++k) {
        const StateVec f = vehicle_dynamics(sc.model, q, controls[k / 10]);
        for (int i = 0; i < 4; ++i) q[i] = q[i] + f[i] * sc.dt;
        CHECK(plan.states[k + 1] == q);
        CHECK(plan.control_at(k) == controls[k / 10]);
    }

    const std::vector<ControlVec> per_step = plan.per_step_controls();
    REQUIRE(per_step.size() == 50);
    for (int k = 0; k < 50; ++k) CHECK(per_step[k] == controls[k / 10]);

    // Zero controls hold the vehicle in place.
    SegmentedPlan still = rollout(std::vector<ControlVec>(5, ControlVec{}), sc);
    for (const StateVec& s : still.states) CHECK(s == sc.q_origin);

    // Unit speed, zero turn rate: 50 Euler steps of +0.02 in x, y and theta
    // untouched (sin 0 contributes exact zeros).
    SegmentedPlan straight = rollout(std::vector<ControlVec>(5, ControlVec{1.0, 0.0, 0.0}), sc);
    CHECK(straight.states.back()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(straight.states.back()[1] == 0.0);
    CHECK(straight.states.back()[2] == 0.0);
}

TEST_CASE("horizon is padded up to a whole number of segments") {
    Scenario sc = car_scenario();
    sc.T = 48;
    CHECK(sc.L() == 10);
    CHECK(sc.steps() == 50);
    SegmentedPlan plan = rollout(std::vector<ControlVec>(5, ControlVec{}), sc);
    CHECK(plan.states.size() == 51);
}

TEST_CASE("scenario validation rejects malformed inputs") {
    auto bad = [](void (*tweak)(Scenario&)) {
        Scenario sc = car_scenario();
        tweak(sc);
        CHECK_THROWS_AS(sc.validate(), ConfigError);
    };
    bad([](Scenario& sc) { sc.T = 0; });
    bad([](Scenario& sc) { sc.N = 0; });
    bad([](Scenario& sc) { sc.dt = 0.0; });
    bad([](Scenario& sc) { sc.gamma = 0.0; });
    bad([](Scenario& sc) { sc.bounds.lo[0] = 1.0, sc.bounds.hi[0] = -1.0; });
    bad([](Scenario& sc) { sc.q_origin[0] = -60.0; });
    bad([](Scenario& sc) { sc.workspace_lo[1] = 1.0, sc.workspace_hi[1] = -1.0; });
    bad([](Scenario& sc) {
        sc.obstacles.push_back({{std::nan(""), 0.0, 0.0}, 0.1});
    });
    bad([](Scenario& sc) { sc.obstacles.push_back({{0.5, 0.0, 0.0}, -0.1}); });
    bad([](Scenario& sc) {
        sc.init.dim = 2; // car error is 3-dimensional
        sc.init.scale = {0.1, 0.1, 0.0, 0.0};
    });
    bad([](Scenario& sc) {
        sc.dist.dim = 3; // car control is 2-dimensional
        sc.dist.scale = {0.1, 0.1, 0.1, 0.0};
    });

    // The defaulted distributions are point masses at zero and pass.
    CHECK_NOTHROW(car_scenario().validate());

    Scenario sc = car_scenario();
    CHECK_THROWS_AS(rollout(std::vector<ControlVec>(4, ControlVec{}), sc), ConfigError);
    std::vector<ControlVec> fast(5, ControlVec{});
    fast[2][0] = 10.0; // v bound is 4
    CHECK_THROWS_AS(rollout(fast, sc), ConfigError);
}

TEST_CASE("analytic penalty gradient matches finite differences") {
    auto check_model = [](Scenario sc, std::vector<ControlVec> u) {
        const int cd = control_dim(sc.model);
        const double mu = 7.0;
        const double hw = 0.1;
        // The check only means something if the clearance hinge is active.
        REQUIRE(penalty_objective(sc, u, 0.0, hw) > 0.0);

        const std::vector<ControlVec> g = penalty_gradient(sc, u, mu, hw);
        const double h = 1e-6;
        for (int j = 0; j < sc.N; ++j) {
            for (int a = 0; a < cd; ++a) {
                std::vector<ControlVec> up = u, dn = u;
                up[j][a] += h;
                dn[j][a] -= h;
                const double fd =
                    (penalty_objective(sc, up, mu, hw) - penalty_objective(sc, dn, mu, hw)) /
                    (2.0 * h);
                CAPTURE(j);
                CAPTURE(a);
                CHECK(g[j][a] == doctest::Approx(fd).epsilon(1e-4));
            }
        }
    };

    Scenario car = car_scenario();
    car.T = 20;
    car.N = 4;
    car.q_dest = {0.5, 0.2, 0.0, 0.0};
    car.obstacles.push_back({{0.25, 0.05, 0.0}, 0.12});
    std::vector<ControlVec> cu(4, ControlVec{});
    for (int j = 0; j < 4; ++j) {
        cu[j][0] = 0.9 - 0.1 * j;
        cu[j][1] = 0.3 - 0.2 * j;
    }
    check_model(car, cu);

    Scenario hov = car_scenario();
    hov.model = VehicleModel::Hovercraft;
    hov.T = 16;
    hov.N = 4;
    hov.q_dest = {0.4, 0.3, 0.2, 0.0};
    hov.obstacles.push_back({{0.15, 0.0, 0.05}, 0.1});
    std::vector<ControlVec> hu(4, ControlVec{});
    for (int j = 0; j < 4; ++j) {
        hu[j][0] = 0.8 - 0.1 * j;
        hu[j][1] = 0.4 - 0.15 * j;
        hu[j][2] = 0.25 - 0.2 * j;
    }
    check_model(hov, hu);
}

TEST_CASE("obstacle-free scenario reaches the destination") {
    Scenario sc = car_scenario();
    NlpResult res = solve_nlp(sc);
    CHECK(res.report.terminal_error < 1e-6);
    CHECK(res.report.penetration == 0.0);
    CHECK(res.report.objective < 1e-12);

    REQUIRE(res.report.round_terminal_error.size() == 5);
    for (size_t r = 0; r + 1 < res.report.round_terminal_error.size(); ++r)
        CHECK(res.report.round_terminal_error[r + 1] <=
              res.report.round_terminal_error[r] + 1e-12);

    for (const ControlVec& u : res.plan.controls) {
        CHECK(u[0] >= sc.bounds.lo[0]);
        CHECK(u[0] <= sc.bounds.hi[0]);
        CHECK(u[1] >= sc.bounds.lo[1]);
        CHECK(u[1] <= sc.bounds.hi[1]);
    }

    // The returned states are exactly the rollout of the returned controls.
    SegmentedPlan re = rollout(res.plan.controls, sc);
    REQUIRE(re.states.size() == res.plan.states.size());
    for (size_t k = 0; k < re.states.size(); ++k) CHECK(re.states[k] == res.plan.states[k]);

    // An obstacle well off the straight path changes nothing: the straight
    // plan is already feasible, so no detour is introduced.
    Scenario off = car_scenario();
    off.obstacles.push_back({{0.5, 1.0, 0.0}, 0.2});
    NlpResult res_off = solve_nlp(off);
    CHECK(res_off.report.terminal_error < 1e-6);
    double ymax = 0.0;
    for (const StateVec& s : res_off.plan.states) ymax = std::max(ymax, std::fabs(s[1]));
    CHECK(ymax < 0.01);
}

TEST_CASE("already at the destination yields identically zero controls") {
    Scenario sc = car_scenario();
    sc.q_origin = {0.3, -0.2, 0.0, 0.0};
    sc.q_dest = sc.q_origin;
    NlpResult res = solve_nlp(sc);
    CHECK(res.report.terminal_error == 0.0);
    for (const ControlVec& u : res.plan.controls) {
        CHECK(u[0] == 0.0);
        CHECK(u[1] == 0.0);
    }
}

TEST_CASE("a blocking disc forces a detour that stays clear") {
    Scenario sc = car_scenario();
    sc.obstacles.push_back({{0.5, 0.0, 0.0}, 0.15});
    NlpResult res = solve_nlp(sc);
    CHECK(res.report.terminal_error <= 0.1);
    CHECK(res.report.penetration <= 1e-3);

    const double pen = penetration_of(sc, res.plan.states);
    CHECK(pen == doctest::Approx(res.report.penetration).epsilon(1e-12));
    CHECK(min_obstacle_distance(sc, res.plan.states) >= 0.15 - 1.1e-3);

    // The obstacle sits dead ahead, so clearing it requires leaving the
    // centerline by about a radius.
    double ymax = 0.0;
    for (const StateVec& s : res.plan.states) ymax = std::max(ymax, std::fabs(s[1]));
    CHECK(ymax > 0.1);
}

TEST_CASE("a wider horizon clears a larger disc") {
    Scenario sc = car_scenario();
    sc.T = 100;
    sc.N = 10;
    sc.q_dest = {2.0, 0.0, 0.0, 0.0};
    sc.obstacles.push_back({{1.0, 0.0, 0.0}, 0.3});
    NlpResult res = solve_nlp(sc);
    CHECK(res.report.terminal_error <= 0.1);
    CHECK(res.report.penetration == 0.0);
    CHECK(min_obstacle_distance(sc, res.plan.states) > 0.3);
}

TEST_CASE("hovercraft detours in three dimensions") {
    Scenario sc;
    sc.model = VehicleModel::Hovercraft;
    sc.q_origin = {0.0, 0.0, 0.0, 0.0};
    sc.q_dest = {0.8, 0.4, 0.3, 0.0};
    sc.T = 50;
    sc.N = 5;
    sc.obstacles.push_back({{0.4, 0.2, 0.15}, 0.12});
    NlpResult res = solve_nlp(sc);
    CHECK(res.report.terminal_error <= 0.1);
    CHECK(res.report.penetration <= 1e-3);
    CHECK(min_obstacle_distance(sc, res.plan.states) > 0.12);
}

TEST_CASE("solves are deterministic and warm starts are honored") {
    Scenario sc = car_scenario();
    sc.obstacles.push_back({{0.5, 0.0, 0.0}, 0.15});
    NlpResult a = solve_nlp(sc);
    NlpResult b = solve_nlp(sc);
    REQUIRE(a.plan.controls.size() == b.plan.controls.size());
    for (size_t j = 0; j < a.plan.controls.size(); ++j)
        CHECK(a.plan.controls[j] == b.plan.controls[j]);
    for (size_t k = 0; k < a.plan.states.size(); ++k) CHECK(a.plan.states[k] == b.plan.states[k]);

    NlpResult warm = solve_nlp(sc, &a.plan);
    CHECK(warm.report.terminal_error <= 0.1);
    CHECK(warm.report.penetration <= 1e-3);

    SegmentedPlan wrong_count = a.plan;
    wrong_count.controls.resize(4);
    CHECK_THROWS_AS(solve_nlp(sc, &wrong_count), ConfigError);
    SegmentedPlan wrong_model = a.plan;
    wrong_model.model = VehicleModel::Hovercraft;
    CHECK_THROWS_AS(solve_nlp(sc, &wrong_model), ConfigError);
}

TEST_CASE("infeasible scenarios are reported, not papered over") {
    // Too far: 0.2 s at v <= 4 covers at most 0.8 of the 10 required.
    Scenario far = car_scenario();
    far.q_dest = {10.0, 0.0, 0.0, 0.0};
    far.T = 10;
    far.N = 2;
    bool threw = false;
    try {
        solve_nlp(far);
    } catch (const InfeasibleNlp& e) {
        threw = true;
        CHECK(e.terminal_error > 5.0);
    }
    CHECK(threw);

    // Enough speed but not enough turning: swerving around a 0.3 disc
    // centered on a 1.0-long, 1.0 s leg needs more heading change than the
    // rate bound allows within the horizon.
    Scenario tight = car_scenario();
    tight.obstacles.push_back({{0.5, 0.0, 0.0}, 0.3});
    CHECK_THROWS_AS(solve_nlp(tight), InfeasibleNlp);

    NlpOptions bad_opt;
    bad_opt.inner_iters = 0;
    CHECK_THROWS_AS(solve_nlp(car_scenario(), nullptr, bad_opt), ConfigError);
}
