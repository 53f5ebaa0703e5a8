#include "riskplan/cli.hpp"

#include "riskplan/bench.hpp"
#include "riskplan/config.hpp"
#include "riskplan/errors.hpp"
#include "riskplan/hash.hpp"
#include "riskplan/learner.hpp"
#include "riskplan/parallel.hpp"
#include "riskplan/planner.hpp"
#include "riskplan/predictor.hpp"
#include "riskplan/probest.hpp"
#include "riskplan/reference.hpp"
#include "riskplan/rng.hpp"
#include "riskplan/trajopt.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <utility>
#include <vector>

namespace riskplan {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string num17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string hex64(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Outputs are staged next to their final paths and renamed only once every
// file of the command has been written, so a failure never leaves a partial
// or torn artifact.
class StagedWrites {
public:
    ~StagedWrites() {
        for (const auto& [tmp, _] : pending_) {
            std::error_code ec;
            fs::remove(tmp, ec);
        }
    }

    void add(const std::string& path, const std::string& content) {
        const std::string tmp = path + ".tmp";
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp);
        out.close();
        pending_.emplace_back(tmp, path);
    }

    // Adopt a file some other writer already produced at tmp.
    void adopt(const std::string& tmp, const std::string& path) {
        pending_.emplace_back(tmp, path);
    }

    void commit() {
        for (const auto& [tmp, path] : pending_) fs::rename(tmp, path);
        pending_.clear();
    }

private:
    std::vector<std::pair<std::string, std::string>> pending_;
};

void err_json(const char* command, const char* kind, const std::string& detail,
              const json& extra = json::object()) {
    json e = extra;
    e["command"] = command;
    e["error"] = kind;
    e["detail"] = detail;
    std::fprintf(stderr, "%s\n", e.dump().c_str());
}

template <typename Fn>
int run_guarded(const char* command, Fn&& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        err_json(command, "ConfigError", e.what());
        return 2;
    } catch (const MissingArtifact& e) {
        err_json(command, "MissingArtifact", e.what());
        return 3;
    } catch (const PlanFailed& e) {
        err_json(command, "PlanFailed", e.what(), json{{"segment", e.segment}});
        return 4;
    } catch (const InfeasibleNlp& e) {
        err_json(command, "InfeasibleNlp", e.what(),
                 json{{"terminal_error", e.terminal_error}, {"penetration", e.penetration}});
        return 4;
    } catch (const std::exception& e) {
        err_json(command, "RuntimeError", e.what());
        return 4;
    }
}

ConfigFile load_cfg(const CliOptions& opt) {
    if (opt.config_path.empty()) throw ConfigError("config: --config is required");
    ConfigFile cfg = load_config(opt.config_path);
    set_thread_count(opt.threads);
    return cfg;
}

std::string file_bytes(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(std::string(what) + ": " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json manifest_base(const char* command, const ConfigFile& cfg, std::uint64_t seed) {
    json m;
    m["schema_version"] = 1;
    m["tool_version"] = kToolVersion;
    m["command"] = command;
    m["config_hash"] = hex64(cfg.config_hash);
    m["seed"] = seed;
    return m;
}

std::string dump_manifest(const json& m) { return m.dump(2) + "\n"; }

std::string provenance_line(const ConfigFile& cfg, std::uint64_t seed) {
    return "# config_hash=" + std::string(hex64(cfg.config_hash)) +
           " seed=" + std::to_string(seed) + "\n";
}

std::string out_or(const CliOptions& opt, const char* def) {
    return opt.out.empty() ? def : opt.out;
}

std::unique_ptr<Predictor> make_predictor(const CliOptions& opt, const Scenario& sc) {
    if (opt.oracle)
        return std::make_unique<OraclePredictor>(sc.model,
                                                 ClosedLoopParams{sc.gains, sc.bounds});
    if (opt.model_path.empty())
        throw ConfigError("predictor: pass --model <file> or --oracle");
    if (!fs::exists(opt.model_path))
        throw MissingArtifact("model file: " + opt.model_path);
    MlpModel net = load_model(opt.model_path);
    if (net.model != sc.model)
        throw ConfigError("predictor: model file was trained for the other vehicle");
    return std::make_unique<ModelPredictor>(std::move(net));
}

const char* vehicle_name(VehicleModel m) {
    return m == VehicleModel::Car ? "car" : "hovercraft";
}

json control_json(VehicleModel m, const ControlVec& u) {
    json o;
    o["v_mps"] = u[0];
    if (m == VehicleModel::Car) {
        o["omega_radps"] = u[1];
    } else {
        o["vz_mps"] = u[1];
        o["omega_radps"] = u[2];
    }
    return o;
}

json state_json(VehicleModel m, const StateVec& q) {
    json o;
    o["x_m"] = q[0];
    o["y_m"] = q[1];
    if (m == VehicleModel::Car) {
        o["theta_rad"] = q[2];
    } else {
        o["z_m"] = q[2];
        o["theta_rad"] = q[3];
    }
    return o;
}

// Reference trajectory for the scenario's NLP solution at the planner's
// substep resolution — the common front half of estimate and heatmap.
ReferenceTrajectory scenario_reference(const ConfigFile& cfg) {
    const NlpResult nlp = solve_nlp(cfg.scenario, nullptr, cfg.planner.nlp);
    return make_reference(cfg.scenario.model, cfg.scenario.q_origin,
                          nlp.plan.per_step_controls(), cfg.scenario.dt, cfg.planner.substeps);
}

} // namespace

std::string manifest_path(const std::string& artifact_path) {
    fs::path p(artifact_path);
    p.replace_extension();
    return p.string() + ".manifest.json";
}

int cmd_gen_data(const CliOptions& opt) {
    return run_guarded("gen-data", [&] {
        const ConfigFile cfg = load_cfg(opt);
        const int n_traj = opt.n_traj_override >= 0 ? opt.n_traj_override : cfg.n_traj;
        if (n_traj < 1) throw ConfigError("gen-data: n_traj must be positive");
        const std::uint64_t seed = opt.has_seed ? opt.seed : cfg.training.seed;

        const Dataset ds = build_dataset(cfg.datagen, n_traj, seed);
        const int tgt_dim = ds.state_dim + 1;

        std::vector<char> is_eval(static_cast<size_t>(ds.rows()), 0);
        for (int r : ds.eval_rows) is_eval[static_cast<size_t>(r)] = 1;

        std::string csv = provenance_line(cfg, seed);
        for (int c = 0; c < ds.in_dim; ++c) csv += "in_" + std::to_string(c) + ",";
        for (int c = 0; c < tgt_dim; ++c) csv += "tgt_" + std::to_string(c) + ",";
        csv += "eval\n";
        for (int r = 0; r < ds.rows(); ++r) {
            for (int c = 0; c < ds.in_dim; ++c) {
                csv += num17(ds.inputs[static_cast<size_t>(r * ds.in_dim + c)]);
                csv += ',';
            }
            for (int c = 0; c < tgt_dim; ++c) {
                csv += num17(ds.targets[static_cast<size_t>(r * tgt_dim + c)]);
                csv += ',';
            }
            csv += is_eval[static_cast<size_t>(r)] ? '1' : '0';
            csv += '\n';
        }

        const std::string out = out_or(opt, "dataset.csv");
        json man = manifest_base("gen-data", cfg, seed);
        man["vehicle"] = vehicle_name(ds.model);
        man["n_traj"] = n_traj;
        man["n_steps"] = cfg.datagen.steps;
        man["n_rows"] = ds.rows();
        man["in_dim"] = ds.in_dim;
        man["state_dim"] = ds.state_dim;
        man["dt_s"] = ds.dt;
        man["t_max_s"] = ds.t_max;
        man["discarded"] = ds.discarded;
        man["n_train_rows"] = static_cast<int>(ds.train_rows.size());
        man["n_eval_rows"] = static_cast<int>(ds.eval_rows.size());
        man["data_file"] = fs::path(out).filename().string();
        man["data_hash"] = hex64(fnv1a64(csv));

        StagedWrites w;
        w.add(out, csv);
        w.add(manifest_path(out), dump_manifest(man));
        w.commit();
        std::printf("wrote %s\n", out.c_str());
    });
}

namespace {

Dataset load_dataset(const std::string& csv_path) {
    const std::string man_path = manifest_path(csv_path);
    if (!fs::exists(csv_path)) throw MissingArtifact("dataset: " + csv_path);
    if (!fs::exists(man_path)) throw MissingArtifact("dataset manifest: " + man_path);

    json man;
    try {
        man = json::parse(file_bytes(man_path, "dataset manifest"));
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset manifest: " + std::string(e.what()));
    }

    Dataset ds;
    ds.model = man.at("vehicle") == "hovercraft" ? VehicleModel::Hovercraft : VehicleModel::Car;
    ds.in_dim = man.at("in_dim").get<int>();
    ds.state_dim = man.at("state_dim").get<int>();
    ds.dt = man.at("dt_s").get<double>();
    ds.t_max = man.at("t_max_s").get<double>();
    ds.discarded = man.at("discarded").get<int>();
    const int tgt_dim = ds.state_dim + 1;

    std::istringstream in(file_bytes(csv_path, "dataset"));
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("in_0", 0) == 0) continue;
        const char* p = line.c_str();
        char* end = nullptr;
        for (int c = 0; c < ds.in_dim + tgt_dim + 1; ++c) {
            const double v = std::strtod(p, &end);
            if (end == p) throw std::runtime_error("dataset: bad row " + std::to_string(row));
            if (c < ds.in_dim) ds.inputs.push_back(v);
            else if (c < ds.in_dim + tgt_dim) ds.targets.push_back(v);
            else (v != 0.0 ? ds.eval_rows : ds.train_rows).push_back(row);
            p = *end == ',' ? end + 1 : end;
        }
        ++row;
    }
    if (row != man.at("n_rows").get<int>())
        throw std::runtime_error("dataset: row count disagrees with the manifest");
    return ds;
}

} // namespace

int cmd_train(const CliOptions& opt) {
    return run_guarded("train", [&] {
        const ConfigFile cfg = load_cfg(opt);
        const Dataset ds = load_dataset(opt.data_path);
        if (ds.model != cfg.scenario.model)
            throw ConfigError("train: dataset vehicle does not match the config");

        TrainConfig tc = cfg.training;
        if (opt.has_seed) tc.seed = opt.seed;

        TrainResult res = train(ds, tc);
        res.model.config_hash = cfg.config_hash;

        const std::string out = out_or(opt, "model.bin");
        const std::string tmp = out + ".tmp";
        StagedWrites w;
        save_model(res.model, tmp);
        w.adopt(tmp, out);

        json man = manifest_base("train", cfg, tc.seed);
        man["vehicle"] = vehicle_name(ds.model);
        man["epochs"] = tc.epochs;
        man["train_loss"] = res.train_loss;
        man["eval_loss"] = res.eval_loss;
        man["n_params"] = res.model.n_params();
        man["model_file"] = fs::path(out).filename().string();
        man["model_hash"] = hex64(fnv1a64(file_bytes(tmp, "model")));
        man["dataset_hash"] = hex64(fnv1a64(file_bytes(opt.data_path, "dataset")));

        w.add(manifest_path(out), dump_manifest(man));
        w.commit();
        std::printf("wrote %s\n", out.c_str());
    });
}

int cmd_estimate(const CliOptions& opt) {
    return run_guarded("estimate", [&] {
        const ConfigFile cfg = load_cfg(opt);
        const Scenario& sc = cfg.scenario;
        const std::uint64_t seed = opt.has_seed ? opt.seed : cfg.planner.seed;
        const auto pred = make_predictor(opt, sc);

        const ReferenceTrajectory ref = scenario_reference(cfg);
        EstimatorOptions est = cfg.planner.estimator;
        est.seed = seed;
        const RiskReport rep = total_risk(*pred, ref, sc.T, sc.obstacles, sc.init, sc.dist,
                                          cfg.planner.n_samples, est);

        json out_doc = manifest_base("estimate", cfg, seed);
        out_doc["vehicle"] = vehicle_name(sc.model);
        out_doc["predictor"] = opt.oracle ? "oracle" : "model";
        out_doc["variant"] = rep.variant;
        out_doc["n_samples"] = rep.n_samples;
        out_doc["n_queries"] = rep.n_queries;
        out_doc["horizon_steps"] = rep.T;
        out_doc["n_obstacles"] = rep.n_obstacles;
        out_doc["total"] = rep.total;
        out_doc["total_raw"] = rep.total_raw;
        out_doc["gamma"] = sc.gamma;
        out_doc["safe"] = rep.total <= sc.gamma;
        out_doc["per_entry"] = rep.per_entry;

        StagedWrites w;
        w.add(out_or(opt, "risk.json"), dump_manifest(out_doc));
        w.commit();
        std::printf("wrote %s\n", out_or(opt, "risk.json").c_str());
    });
}

int cmd_plan(const CliOptions& opt) {
    return run_guarded("plan", [&] {
        const ConfigFile cfg = load_cfg(opt);
        const Scenario& sc = cfg.scenario;
        PlannerConfig pc = cfg.planner;
        if (opt.has_seed) pc.seed = opt.seed;
        const auto pred = make_predictor(opt, sc);

        const PlanTrace tr = plan(sc, *pred, pc);

        json doc = manifest_base("plan", cfg, pc.seed);
        doc["vehicle"] = vehicle_name(sc.model);
        doc["predictor"] = opt.oracle ? "oracle" : "model";
        doc["gamma"] = sc.gamma;
        doc["nlp_solves"] = tr.nlp_solves;
        doc["total_risk"] = tr.total_risk;
        json segs = json::array();
        for (const SegmentReport& s : tr.segments) {
            json e;
            e["verdict"] = s.verdict == SegmentReport::Verdict::Safe ? "safe" : "repaired";
            e["risk"] = s.risk;
            e["attempts"] = s.attempts;
            e["delta"] = control_json(sc.model, s.delta);
            e["endpoint_deviation_m"] = s.endpoint_deviation;
            segs.push_back(std::move(e));
        }
        doc["segments"] = std::move(segs);
        json controls = json::array();
        for (const ControlVec& u : tr.plan.controls)
            controls.push_back(control_json(sc.model, u));
        doc["controls"] = std::move(controls);
        json states = json::array();
        for (const StateVec& q : tr.plan.states) states.push_back(state_json(sc.model, q));
        doc["states"] = std::move(states);

        StagedWrites w;
        w.add(out_or(opt, "plan.json"), dump_manifest(doc));
        w.commit();
        std::printf("wrote %s\n", out_or(opt, "plan.json").c_str());
    });
}

int cmd_bench(const CliOptions& opt) {
    return run_guarded("bench", [&] {
        const ConfigFile cfg = load_cfg(opt);
        Scenario tmpl = cfg.scenario;
        tmpl.obstacles.clear();
        const std::uint64_t suite_seed =
            opt.has_suite_seed ? opt.suite_seed : cfg.bench.suite_seed;

        BenchConfig bc;
        bc.planner = cfg.planner;
        if (opt.has_seed) bc.planner.seed = opt.seed;
        bc.mc_rollouts = cfg.bench.mc_rollouts;
        bc.mc_substeps = cfg.bench.mc_substeps;
        bc.mc_seed = cfg.bench.mc_seed;

        EnvGenConfig gen = cfg.bench.gen;
        gen.nlp = bc.planner.nlp;
        const EnvSuite suite = gen_envs(cfg.bench.n_envs, tmpl, gen, suite_seed);
        const auto pred = make_predictor(opt, tmpl);

        std::vector<BenchVariant> variants;
        variants.push_back({BenchVariant::Kind::Original, 0.0});
        for (double d : cfg.bench.distance_margins_m)
            variants.push_back({BenchVariant::Kind::Distance, d});
        variants.push_back({BenchVariant::Kind::Reach, 0.0});
        variants.push_back({BenchVariant::Kind::Density, 0.0});

        const std::string prov = provenance_line(cfg, bc.planner.seed);
        std::string summary = prov + "variant,n_envs,feasibility,safety\n";
        std::string runs = prov + "variant,env,feasible,mc_collision,nlp_solves,repairs\n";
        for (const BenchVariant& v : variants) {
            const BenchResult r = run_variant(v, suite, *pred, bc);
            summary += variant_name(v) + "," + std::to_string(suite.envs.size()) + "," +
                       num17(r.feasibility) + "," + num17(r.safety) + "\n";
            for (const BenchRun& run : r.runs)
                runs += variant_name(v) + "," + std::to_string(run.env) + "," +
                        (run.feasible ? "1" : "0") + "," + num17(run.mc_collision) + "," +
                        std::to_string(run.nlp_solves) + "," + std::to_string(run.repairs) +
                        "\n";
        }

        const std::string out = out_or(opt, "bench.csv");
        fs::path runs_path(out);
        runs_path.replace_extension();
        const std::string runs_out = runs_path.string() + ".runs.csv";

        json man = manifest_base("bench", cfg, bc.planner.seed);
        man["vehicle"] = vehicle_name(tmpl.model);
        man["predictor"] = opt.oracle ? "oracle" : "model";
        man["suite_seed"] = suite_seed;
        man["n_envs"] = cfg.bench.n_envs;
        man["mc_rollouts"] = bc.mc_rollouts;
        man["summary_file"] = fs::path(out).filename().string();
        man["summary_hash"] = hex64(fnv1a64(summary));
        man["runs_file"] = fs::path(runs_out).filename().string();
        man["runs_hash"] = hex64(fnv1a64(runs));

        StagedWrites w;
        w.add(out, summary);
        w.add(runs_out, runs);
        w.add(manifest_path(out), dump_manifest(man));
        w.commit();
        std::printf("wrote %s\n", out.c_str());
    });
}

int cmd_heatmap(const CliOptions& opt) {
    return run_guarded("heatmap", [&] {
        const ConfigFile cfg = load_cfg(opt);
        const Scenario& sc = cfg.scenario;
        const std::uint64_t seed = opt.has_seed ? opt.seed : cfg.planner.seed;
        const auto pred = make_predictor(opt, sc);

        const ReferenceTrajectory ref = scenario_reference(cfg);
        const InitialSamples samples =
            sample_initial(sc.init, sc.dist, cfg.planner.n_samples, seed);
        const PushedCloud cloud =
            push_forward(*pred, samples, ref, sc.model, cfg.heatmap.t_index);
        EstimatorOptions est = cfg.planner.estimator;
        est.seed = seed;
        const GridSpec grid = auto_grid(cloud, est, cfg.heatmap.nx, cfg.heatmap.ny);
        const Heatmap hm = make_heatmap(cloud, grid, est);

        std::string csv = "origin_x,origin_y,cell,nx,ny\n";
        csv += num17(grid.origin_x) + "," + num17(grid.origin_y) + "," + num17(grid.cell) +
               "," + std::to_string(grid.nx) + "," + std::to_string(grid.ny) + "\n";
        for (int iy = 0; iy < grid.ny; ++iy) {
            for (int ix = 0; ix < grid.nx; ++ix) {
                csv += num17(hm.mass[static_cast<size_t>(iy) * grid.nx + ix]);
                csv += ix + 1 < grid.nx ? ',' : '\n';
            }
        }

        double mass_total = 0.0;
        for (double m : hm.mass) mass_total += m;

        const std::string out = out_or(opt, "heatmap.csv");
        json man = manifest_base("heatmap", cfg, seed);
        man["vehicle"] = vehicle_name(sc.model);
        man["predictor"] = opt.oracle ? "oracle" : "model";
        man["t_index"] = cfg.heatmap.t_index;
        man["nx"] = grid.nx;
        man["ny"] = grid.ny;
        man["mass_total"] = mass_total;
        man["heatmap_file"] = fs::path(out).filename().string();
        man["heatmap_hash"] = hex64(fnv1a64(csv));

        StagedWrites w;
        w.add(out, csv);
        w.add(manifest_path(out), dump_manifest(man));
        w.commit();
        std::printf("wrote %s\n", out.c_str());
    });
}

} // namespace riskplan
