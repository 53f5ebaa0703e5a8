#include "riskplan/config.hpp"

#include "riskplan/errors.hpp"
#include "riskplan/hash.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

namespace riskplan {
namespace {

using nlohmann::json;

const json& expect_object(const json& j, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string("config: ") + where + " must be an object");
    return j;
}

void expect_keys(const json& o, const char* where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : o.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError(std::string("config: unknown key '") + key + "' in " + where);
    }
}

double get_num(const json& o, const char* key, double def) {
    if (!o.contains(key)) return def;
    const json& v = o.at(key);
    if (!v.is_number()) throw ConfigError(std::string("config: ") + key + " must be a number");
    return v.get<double>();
}

int get_int(const json& o, const char* key, int def) {
    if (!o.contains(key)) return def;
    const json& v = o.at(key);
    if (!v.is_number_integer())
        throw ConfigError(std::string("config: ") + key + " must be an integer");
    return v.get<int>();
}

std::uint64_t get_seed(const json& o, const char* key, std::uint64_t def) {
    if (!o.contains(key)) return def;
    const json& v = o.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0))
        throw ConfigError(std::string("config: ") + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& o, const char* key, bool def) {
    if (!o.contains(key)) return def;
    const json& v = o.at(key);
    if (!v.is_boolean()) throw ConfigError(std::string("config: ") + key + " must be a boolean");
    return v.get<bool>();
}

VehicleModel parse_model(const json& o) {
    if (!o.contains("vehicle")) return VehicleModel::Car;
    const json& v = o.at("vehicle");
    if (v == "car") return VehicleModel::Car;
    if (v == "hovercraft") return VehicleModel::Hovercraft;
    throw ConfigError("config: vehicle must be \"car\" or \"hovercraft\"");
}

StateVec parse_pose(const json& j, VehicleModel m, const char* where) {
    const json& o = expect_object(j, where);
    if (m == VehicleModel::Car) {
        expect_keys(o, where, {"x_m", "y_m", "theta_rad"});
        return {get_num(o, "x_m", 0.0), get_num(o, "y_m", 0.0), get_num(o, "theta_rad", 0.0),
                0.0};
    }
    expect_keys(o, where, {"x_m", "y_m", "z_m", "theta_rad"});
    return {get_num(o, "x_m", 0.0), get_num(o, "y_m", 0.0), get_num(o, "z_m", 0.0),
            get_num(o, "theta_rad", 0.0)};
}

BoxDistribution::Kind parse_kind(const json& o, const char* where) {
    if (!o.contains("kind")) return BoxDistribution::Kind::GaussianTruncated;
    const json& v = o.at("kind");
    if (v == "gaussian_truncated") return BoxDistribution::Kind::GaussianTruncated;
    if (v == "uniform_box") return BoxDistribution::Kind::UniformBox;
    throw ConfigError(std::string("config: ") + where +
                      ".kind must be \"gaussian_truncated\" or \"uniform_box\"");
}

// Error-space distribution: sigma per tracking-error coordinate. For the
// uniform kind the same fields are read as half-widths.
BoxDistribution parse_error_dist(const json& j, VehicleModel m, const char* where) {
    const json& o = expect_object(j, where);
    BoxDistribution d;
    d.kind = parse_kind(o, where);
    d.dim = error_dim(m);
    d.support_sigma = get_num(o, "support_sigma", 3.0);
    if (m == VehicleModel::Car) {
        expect_keys(o, where, {"kind", "sigma_x_m", "sigma_y_m", "sigma_theta_rad",
                               "support_sigma"});
        d.scale = {get_num(o, "sigma_x_m", 0.0), get_num(o, "sigma_y_m", 0.0),
                   get_num(o, "sigma_theta_rad", 0.0), 0.0};
    } else {
        expect_keys(o, where, {"kind", "sigma_x_m", "sigma_y_m", "sigma_z_m",
                               "sigma_theta_rad", "support_sigma"});
        d.scale = {get_num(o, "sigma_x_m", 0.0), get_num(o, "sigma_y_m", 0.0),
                   get_num(o, "sigma_z_m", 0.0), get_num(o, "sigma_theta_rad", 0.0)};
    }
    return d;
}

// Control-space distribution: sigma per control channel, mapped onto the
// model's control ordering (car: v, omega; hovercraft: v, vz, omega).
BoxDistribution parse_control_dist(const json& j, VehicleModel m, const char* where) {
    const json& o = expect_object(j, where);
    BoxDistribution d;
    d.kind = parse_kind(o, where);
    d.dim = control_dim(m);
    d.support_sigma = get_num(o, "support_sigma", 3.0);
    if (m == VehicleModel::Car) {
        expect_keys(o, where, {"kind", "sigma_v_mps", "sigma_omega_radps", "support_sigma"});
        d.scale = {get_num(o, "sigma_v_mps", 0.0), get_num(o, "sigma_omega_radps", 0.0), 0.0,
                   0.0};
    } else {
        expect_keys(o, where,
                    {"kind", "sigma_v_mps", "sigma_vz_mps", "sigma_omega_radps",
                     "support_sigma"});
        d.scale = {get_num(o, "sigma_v_mps", 0.0), get_num(o, "sigma_vz_mps", 0.0),
                   get_num(o, "sigma_omega_radps", 0.0), 0.0};
    }
    return d;
}

ControlVec parse_control_vec(const json& j, VehicleModel m, const char* where) {
    const json& o = expect_object(j, where);
    if (m == VehicleModel::Car) {
        expect_keys(o, where, {"v_mps", "omega_radps"});
        return {get_num(o, "v_mps", 0.0), get_num(o, "omega_radps", 0.0), 0.0};
    }
    expect_keys(o, where, {"v_mps", "vz_mps", "omega_radps"});
    return {get_num(o, "v_mps", 0.0), get_num(o, "vz_mps", 0.0),
            get_num(o, "omega_radps", 0.0)};
}

ControlBounds parse_bounds(const json& j, VehicleModel m) {
    const json& o = expect_object(j, "scenario.bounds");
    ControlBounds b;
    if (m == VehicleModel::Car) {
        expect_keys(o, "scenario.bounds",
                    {"v_lo_mps", "v_hi_mps", "omega_lo_radps", "omega_hi_radps"});
        b.lo = {get_num(o, "v_lo_mps", b.lo[0]), get_num(o, "omega_lo_radps", b.lo[1]),
                b.lo[2]};
        b.hi = {get_num(o, "v_hi_mps", b.hi[0]), get_num(o, "omega_hi_radps", b.hi[1]),
                b.hi[2]};
    } else {
        expect_keys(o, "scenario.bounds",
                    {"v_lo_mps", "v_hi_mps", "vz_lo_mps", "vz_hi_mps", "omega_lo_radps",
                     "omega_hi_radps"});
        b.lo = {get_num(o, "v_lo_mps", b.lo[0]), get_num(o, "vz_lo_mps", b.lo[1]),
                get_num(o, "omega_lo_radps", b.lo[2])};
        b.hi = {get_num(o, "v_hi_mps", b.hi[0]), get_num(o, "vz_hi_mps", b.hi[1]),
                get_num(o, "omega_hi_radps", b.hi[2])};
    }
    return b;
}

// Constant reference-control box for dataset generation, given as explicit
// lo/hi per channel and stored as a uniform distribution.
BoxDistribution parse_uref_box(const json& j, VehicleModel m) {
    const json& o = expect_object(j, "model.uref");
    BoxDistribution d;
    d.kind = BoxDistribution::Kind::UniformBox;
    d.dim = control_dim(m);
    auto axis = [&](const char* lo_key, const char* hi_key, int i) {
        const double lo = get_num(o, lo_key, 0.0);
        const double hi = get_num(o, hi_key, 0.0);
        if (hi < lo)
            throw ConfigError(std::string("config: model.uref ") + hi_key + " < " + lo_key);
        d.center[static_cast<size_t>(i)] = 0.5 * (lo + hi);
        d.scale[static_cast<size_t>(i)] = 0.5 * (hi - lo);
    };
    if (m == VehicleModel::Car) {
        expect_keys(o, "model.uref",
                    {"v_lo_mps", "v_hi_mps", "omega_lo_radps", "omega_hi_radps"});
        axis("v_lo_mps", "v_hi_mps", 0);
        axis("omega_lo_radps", "omega_hi_radps", 1);
    } else {
        expect_keys(o, "model.uref",
                    {"v_lo_mps", "v_hi_mps", "vz_lo_mps", "vz_hi_mps", "omega_lo_radps",
                     "omega_hi_radps"});
        axis("v_lo_mps", "v_hi_mps", 0);
        axis("vz_lo_mps", "vz_hi_mps", 1);
        axis("omega_lo_radps", "omega_hi_radps", 2);
    }
    return d;
}

void parse_scenario(const json& j, Scenario& sc) {
    const json& o = expect_object(j, "scenario");
    expect_keys(o, "scenario",
                {"vehicle", "origin", "dest", "n_steps", "n_segments", "dt_s", "gamma",
                 "workspace", "obstacles", "init", "disturbance", "gains", "bounds"});
    sc.model = parse_model(o);
    if (o.contains("origin")) sc.q_origin = parse_pose(o.at("origin"), sc.model, "scenario.origin");
    if (o.contains("dest")) sc.q_dest = parse_pose(o.at("dest"), sc.model, "scenario.dest");
    sc.T = get_int(o, "n_steps", sc.T);
    sc.N = get_int(o, "n_segments", sc.N);
    sc.dt = get_num(o, "dt_s", sc.dt);
    sc.gamma = get_num(o, "gamma", sc.gamma);
    if (o.contains("workspace")) {
        const json& w = expect_object(o.at("workspace"), "scenario.workspace");
        expect_keys(w, "scenario.workspace",
                    {"x_lo_m", "x_hi_m", "y_lo_m", "y_hi_m", "z_lo_m", "z_hi_m"});
        sc.workspace_lo = {get_num(w, "x_lo_m", sc.workspace_lo[0]),
                           get_num(w, "y_lo_m", sc.workspace_lo[1]),
                           get_num(w, "z_lo_m", sc.workspace_lo[2])};
        sc.workspace_hi = {get_num(w, "x_hi_m", sc.workspace_hi[0]),
                           get_num(w, "y_hi_m", sc.workspace_hi[1]),
                           get_num(w, "z_hi_m", sc.workspace_hi[2])};
    }
    if (o.contains("obstacles")) {
        const json& arr = o.at("obstacles");
        if (!arr.is_array()) throw ConfigError("config: scenario.obstacles must be an array");
        for (const json& e : arr) {
            const json& ob = expect_object(e, "scenario.obstacles[]");
            expect_keys(ob, "scenario.obstacles[]", {"x_m", "y_m", "z_m", "radius_m"});
            Obstacle obs;
            obs.center = {get_num(ob, "x_m", 0.0), get_num(ob, "y_m", 0.0),
                          get_num(ob, "z_m", 0.0)};
            obs.radius = get_num(ob, "radius_m", 0.0);
            sc.obstacles.push_back(obs);
        }
    }
    if (o.contains("init")) sc.init = parse_error_dist(o.at("init"), sc.model, "scenario.init");
    else sc.init.dim = error_dim(sc.model);
    if (o.contains("disturbance"))
        sc.dist = parse_control_dist(o.at("disturbance"), sc.model, "scenario.disturbance");
    else {
        sc.dist.dim = control_dim(sc.model);
        sc.dist.scale = {};
    }
    if (o.contains("gains")) {
        const json& g = expect_object(o.at("gains"), "scenario.gains");
        expect_keys(g, "scenario.gains", {"k1", "k2", "k3", "k4"});
        sc.gains.k1 = get_num(g, "k1", sc.gains.k1);
        sc.gains.k2 = get_num(g, "k2", sc.gains.k2);
        sc.gains.k3 = get_num(g, "k3", sc.gains.k3);
        sc.gains.k4 = get_num(g, "k4", sc.gains.k4);
    }
    if (o.contains("bounds")) sc.bounds = parse_bounds(o.at("bounds"), sc.model);
}

void parse_model_section(const json& j, const Scenario& sc, DataGenConfig& gen, int& n_traj,
                         TrainConfig& tc) {
    const json& o = expect_object(j, "model");
    expect_keys(o, "model",
                {"n_traj", "n_steps", "dt_s", "substeps", "epochs", "batch_size",
                 "learning_rate", "momentum", "w_state", "w_density", "seed", "init",
                 "disturbance", "uref"});
    gen.model = sc.model;
    gen.cl = {sc.gains, sc.bounds};
    n_traj = get_int(o, "n_traj", n_traj);
    gen.steps = get_int(o, "n_steps", gen.steps);
    gen.dt = get_num(o, "dt_s", gen.dt);
    gen.substeps = get_int(o, "substeps", gen.substeps);
    if (o.contains("init")) gen.init = parse_error_dist(o.at("init"), sc.model, "model.init");
    else gen.init = sc.init;
    if (o.contains("disturbance"))
        gen.dist_dist = parse_control_dist(o.at("disturbance"), sc.model, "model.disturbance");
    else gen.dist_dist = sc.dist;
    if (o.contains("uref")) gen.uref_box = parse_uref_box(o.at("uref"), sc.model);
    else {
        gen.uref_box.kind = BoxDistribution::Kind::UniformBox;
        gen.uref_box.dim = control_dim(sc.model);
        gen.uref_box.center = {1.0, 0.0, 0.0};
        gen.uref_box.scale = {0.5, 1.0, 0.0};
        if (sc.model == VehicleModel::Hovercraft) {
            gen.uref_box.center = {1.0, 0.0, 0.0};
            gen.uref_box.scale = {0.5, 0.5, 1.0};
        }
    }
    tc.epochs = get_int(o, "epochs", tc.epochs);
    tc.batch_size = get_int(o, "batch_size", tc.batch_size);
    tc.lr = get_num(o, "learning_rate", tc.lr);
    tc.momentum = get_num(o, "momentum", tc.momentum);
    tc.w_state = get_num(o, "w_state", tc.w_state);
    tc.w_density = get_num(o, "w_density", tc.w_density);
    tc.seed = get_seed(o, "seed", tc.seed);
}

void parse_planner_section(const json& j, const Scenario& sc, PlannerConfig& pc,
                           HeatmapSpec& hm) {
    const json& o = expect_object(j, "planner");
    expect_keys(o, "planner",
                {"n_samples", "n_queries", "levels", "max_attempts", "substeps", "seed",
                 "propagate_entry", "perturb", "heatmap"});
    pc.gamma = sc.gamma;
    pc.n_samples = get_int(o, "n_samples", pc.n_samples);
    pc.estimator.n_queries = get_int(o, "n_queries", pc.estimator.n_queries);
    pc.levels = get_int(o, "levels", pc.levels);
    pc.max_attempts = get_int(o, "max_attempts", pc.max_attempts);
    pc.substeps = get_int(o, "substeps", pc.substeps);
    pc.seed = get_seed(o, "seed", pc.seed);
    pc.propagate_entry = get_bool(o, "propagate_entry", pc.propagate_entry);
    if (o.contains("perturb"))
        pc.perturb_range = parse_control_vec(o.at("perturb"), sc.model, "planner.perturb");
    if (o.contains("heatmap")) {
        const json& h = expect_object(o.at("heatmap"), "planner.heatmap");
        expect_keys(h, "planner.heatmap", {"t_index", "nx", "ny"});
        hm.t_index = get_int(h, "t_index", hm.t_index);
        hm.nx = get_int(h, "nx", hm.nx);
        hm.ny = get_int(h, "ny", hm.ny);
    }
}

void parse_bench_section(const json& j, BenchSection& b) {
    const json& o = expect_object(j, "bench");
    expect_keys(o, "bench",
                {"n_envs", "suite_seed", "min_obstacles", "max_obstacles", "min_radius_m",
                 "max_radius_m", "keepout_m", "mc_rollouts", "mc_substeps", "mc_seed",
                 "distance_margins_m"});
    b.n_envs = get_int(o, "n_envs", b.n_envs);
    b.suite_seed = get_seed(o, "suite_seed", b.suite_seed);
    b.gen.min_obstacles = get_int(o, "min_obstacles", b.gen.min_obstacles);
    b.gen.max_obstacles = get_int(o, "max_obstacles", b.gen.max_obstacles);
    b.gen.min_radius = get_num(o, "min_radius_m", b.gen.min_radius);
    b.gen.max_radius = get_num(o, "max_radius_m", b.gen.max_radius);
    b.gen.keepout = get_num(o, "keepout_m", b.gen.keepout);
    b.mc_rollouts = get_int(o, "mc_rollouts", b.mc_rollouts);
    b.mc_substeps = get_int(o, "mc_substeps", b.mc_substeps);
    b.mc_seed = get_seed(o, "mc_seed", b.mc_seed);
    if (o.contains("distance_margins_m")) {
        const json& arr = o.at("distance_margins_m");
        if (!arr.is_array())
            throw ConfigError("config: bench.distance_margins_m must be an array");
        b.distance_margins_m.clear();
        for (const json& e : arr) {
            if (!e.is_number())
                throw ConfigError("config: bench.distance_margins_m entries must be numbers");
            const double d = e.get<double>();
            if (!(d > 0.0))
                throw ConfigError("config: bench.distance_margins_m entries must be > 0");
            b.distance_margins_m.push_back(d);
        }
    }
}

} // namespace

ConfigFile parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    expect_object(root, "the top level");
    expect_keys(root, "the top level", {"schema_version", "scenario", "model", "planner",
                                        "bench"});
    if (!root.contains("schema_version"))
        throw ConfigError("config: schema_version is required");
    ConfigFile cfg;
    cfg.schema_version = get_int(root, "schema_version", 0);
    if (cfg.schema_version != 1)
        throw ConfigError("config: unsupported schema_version " +
                          std::to_string(cfg.schema_version));

    if (root.contains("scenario")) parse_scenario(root.at("scenario"), cfg.scenario);
    else {
        cfg.scenario.init.dim = error_dim(cfg.scenario.model);
        cfg.scenario.dist.dim = control_dim(cfg.scenario.model);
    }
    cfg.datagen.init = cfg.scenario.init;
    cfg.datagen.dist_dist = cfg.scenario.dist;
    if (root.contains("model"))
        parse_model_section(root.at("model"), cfg.scenario, cfg.datagen, cfg.n_traj,
                            cfg.training);
    else {
        cfg.datagen.model = cfg.scenario.model;
        cfg.datagen.cl = {cfg.scenario.gains, cfg.scenario.bounds};
        cfg.datagen.uref_box.kind = BoxDistribution::Kind::UniformBox;
        cfg.datagen.uref_box.dim = control_dim(cfg.scenario.model);
        cfg.datagen.uref_box.center = {1.0, 0.0, 0.0};
        cfg.datagen.uref_box.scale = {0.5, 1.0, 0.0};
        if (cfg.scenario.model == VehicleModel::Hovercraft)
            cfg.datagen.uref_box.scale = {0.5, 0.5, 1.0};
    }
    if (root.contains("planner"))
        parse_planner_section(root.at("planner"), cfg.scenario, cfg.planner, cfg.heatmap);
    cfg.planner.gamma = cfg.scenario.gamma;
    if (root.contains("bench")) parse_bench_section(root.at("bench"), cfg.bench);

    cfg.scenario.validate();
    cfg.planner.validate(cfg.scenario.model, cfg.scenario.bounds);
    cfg.bench.gen.validate();
    if (cfg.n_traj < 1) throw ConfigError("config: model.n_traj must be positive");
    if (cfg.training.epochs < 1) throw ConfigError("config: model.epochs must be positive");
    if (cfg.training.batch_size < 1)
        throw ConfigError("config: model.batch_size must be positive");
    if (!(cfg.training.lr > 0.0))
        throw ConfigError("config: model.learning_rate must be positive");
    if (cfg.datagen.steps < 1) throw ConfigError("config: model.n_steps must be positive");
    if (cfg.heatmap.nx < 1 || cfg.heatmap.ny < 1)
        throw ConfigError("config: planner.heatmap grid must be at least 1x1");
    if (cfg.heatmap.t_index < 0 || cfg.heatmap.t_index > cfg.scenario.T)
        throw ConfigError("config: planner.heatmap.t_index outside the horizon");
    if (cfg.bench.n_envs < 1) throw ConfigError("config: bench.n_envs must be positive");
    if (cfg.bench.mc_rollouts < 1)
        throw ConfigError("config: bench.mc_rollouts must be positive");
    if (cfg.bench.mc_substeps < 1)
        throw ConfigError("config: bench.mc_substeps must be positive");

    cfg.config_hash = fnv1a64(root.dump());
    return cfg;
}

ConfigFile load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

} // namespace riskplan
