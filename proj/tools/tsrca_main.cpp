#include "tsrca/io.hpp"
#include "tsrca/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

struct CommonArgs {
    std::string config_path;
    int jobs = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string output_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "run config JSON")->required();
    cmd->add_option("-j,--jobs", args.jobs, "worker threads (overrides config and TSRCA_JOBS)");
    cmd->add_option("--seed", args.seed, "override config seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("-o,--output-dir", args.output_dir, "override config output_dir");
}

tsrca::RunConfig resolve_config(const CommonArgs& args) {
    tsrca::RunConfig config = tsrca::load_config(args.config_path);
    if (const char* env = std::getenv("TSRCA_JOBS")) {
        const int env_jobs = std::atoi(env);
        if (env_jobs > 0) config.jobs = env_jobs;
    }
    if (args.jobs > 0) config.jobs = args.jobs;
    if (args.seed_set) config.seed = args.seed;
    if (!args.output_dir.empty()) config.output_dir = args.output_dir;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional-attribution root cause analysis benchmark"};
    app.require_subcommand(1);

    CommonArgs inject_args, train_args, attr_args, eval_args, sweep_args, probe_args, bound_args;

    CLI::App* inject = app.add_subcommand("inject", "write a perturbed series CSV + labels JSON");
    add_common(inject, inject_args);

    CLI::App* train = app.add_subcommand("train", "train and persist detector/embedding");
    add_common(train, train_args);

    CLI::App* attribute =
        app.add_subcommand("attribute", "export attribution heatmaps and rankings");
    add_common(attribute, attr_args);
    int event_index = -1;
    attribute->add_option("-e,--event", event_index, "event index (default: all)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "end-to-end metric report");
    add_common(evaluate, eval_args);
    std::string report_path;
    evaluate->add_option("--report", report_path, "write report JSON here");

    CLI::App* sweep = app.add_subcommand("sweep", "ablation sweep along one axis");
    add_common(sweep, sweep_args);
    std::string axis = "window_size";
    std::vector<std::string> sweep_values;
    sweep->add_option("--axis", axis,
                      "window_size | attribution_size | retrieval_space | conditioning");
    sweep->add_option("--values", sweep_values, "axis values (defaults per axis)");

    CLI::App* probe = app.add_subcommand("probe-cost", "input vs embedded retrieval timing");
    add_common(probe, probe_args);
    int probe_queries = 20;
    int probe_reps = 5;
    probe->add_option("--queries", probe_queries, "number of query windows");
    probe->add_option("--repetitions", probe_reps, "timing repetitions");

    CLI::App* bound = app.add_subcommand("check-bound", "attribution bias bound verifier");
    add_common(bound, bound_args);
    int bound_trials = 100;
    bound->add_option("--trials", bound_trials, "number of random linear detector trials");

    CLI11_PARSE(app, argc, argv);

    try {
        if (inject->parsed()) {
            const tsrca::RunConfig config = resolve_config(inject_args);
            tsrca::cmd_inject(config);
            std::cout << "wrote " << config.output_dir << "/series.csv and labels.json\n";
        } else if (train->parsed()) {
            tsrca::cmd_train(resolve_config(train_args));
            std::cout << "artifacts written\n";
        } else if (attribute->parsed()) {
            const tsrca::RunConfig config = resolve_config(attr_args);
            tsrca::cmd_attribute(config, event_index);
            std::cout << "heatmaps written to " << config.output_dir << "\n";
        } else if (evaluate->parsed()) {
            const tsrca::RunConfig config = resolve_config(eval_args);
            const tsrca::RunReport report = tsrca::cmd_evaluate(config);
            std::cout << report.render_table();
            if (!report_path.empty()) {
                std::ofstream out(report_path);
                out << report.to_json().dump(2) << "\n";
                std::cout << "report written to " << report_path << "\n";
            }
        } else if (sweep->parsed()) {
            const tsrca::RunConfig config = resolve_config(sweep_args);
            const auto rows = tsrca::cmd_sweep(config, axis, sweep_values);
            std::printf("%-16s %-10s %-10s %s\n", axis.c_str(), "Top@KR", "CW@K", "TempHM@K");
            for (const auto& row : rows) {
                std::printf("%-16s %-10.3f %-10.3f %.3f\n", row.axis_value.c_str(), row.top_r,
                            row.cw, row.temp_hm);
            }
        } else if (probe->parsed()) {
            const auto report =
                tsrca::cmd_probe_cost(resolve_config(probe_args), probe_queries, probe_reps);
            std::printf("N=%d input_dim=%d embedded_dim=%d\n", report.reference_count,
                        report.input_dim, report.embedded_dim);
            std::printf("input:    %.1f us/query\n", report.input_mean_us);
            std::printf("embedded: %.1f us/query\n", report.embedded_mean_us);
            std::printf("speedup:  %.1fx\n", report.speedup);
        } else if (bound->parsed()) {
            const auto report = tsrca::cmd_check_bound(resolve_config(bound_args), bound_trials);
            std::printf("bound holds in %d/%d trials\n", report.holds, report.trials);
            if (report.holds != report.trials) return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
