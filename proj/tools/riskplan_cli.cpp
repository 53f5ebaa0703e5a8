#include "riskplan/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"density-aware reachability and safe planning toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    riskplan::CliOptions opt;
    app.add_option("-c,--config", opt.config_path, "configuration file (JSON)");
    auto* seed_opt = app.add_option("--seed", opt.seed, "override the section seed");
    app.add_option("--threads", opt.threads, "worker threads (0 = all cores)");
    app.add_flag("--oracle", opt.oracle,
                 "use the closed-loop integrator instead of a trained model");
    app.add_option("-o,--out", opt.out, "primary output path");

    auto* gen = app.add_subcommand("gen-data", "simulate trajectories into a dataset");
    gen->add_option("--n-traj", opt.n_traj_override, "trajectory count (overrides config)");

    auto* train = app.add_subcommand("train", "fit the flow-map/density surrogate");
    train->add_option("--data", opt.data_path, "dataset CSV from gen-data");

    auto* estimate = app.add_subcommand("estimate", "collision probability for the scenario");
    auto* plan = app.add_subcommand("plan", "check-and-perturb planning");
    auto* bench = app.add_subcommand("bench", "randomized-environment variant study");
    auto* heatmap = app.add_subcommand("heatmap", "density heatmap at one timestep");

    for (CLI::App* sub : {estimate, plan, bench, heatmap})
        sub->add_option("--model", opt.model_path, "trained model file");
    auto* suite_seed_opt =
        bench->add_option("--suite-seed", opt.suite_seed, "environment generation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // flag/usage problems count as config errors
    }
    opt.has_seed = seed_opt->count() > 0;
    opt.has_suite_seed = suite_seed_opt->count() > 0;

    if (gen->parsed()) return riskplan::cmd_gen_data(opt);
    if (train->parsed()) return riskplan::cmd_train(opt);
    if (estimate->parsed()) return riskplan::cmd_estimate(opt);
    if (plan->parsed()) return riskplan::cmd_plan(opt);
    if (bench->parsed()) return riskplan::cmd_bench(opt);
    if (heatmap->parsed()) return riskplan::cmd_heatmap(opt);
    std::fprintf(stderr, "no subcommand\n");
    return 2;
}
