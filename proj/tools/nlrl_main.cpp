// Command-line entry points for the oracle, the two experiment protocols,
// replay, and report emission. The CLI is a thin dispatcher over the library.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "nlrl/report.hpp"
#include "nlrl/runner.hpp"

namespace {

using namespace nlrl;

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::string aggregator;
    std::string cache_mode;
    std::string cache_dir;
    int iterations = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool config_required) {
    auto* config = cmd->add_option("--config", opts.config_path, "experiment config JSON");
    if (config_required) config->required();
    cmd->add_option("--out", opts.out_dir, "output directory override");
    cmd->add_option("--aggregator", opts.aggregator, "deterministic|llm");
    cmd->add_option("--cache", opts.cache_mode, "live|cache_first|replay_only");
    cmd->add_option("--cache-dir", opts.cache_dir, "transcript cache directory");
    cmd->add_option("--iterations", opts.iterations, "iteration count override");
    cmd->add_option("--seed", opts.seed, "sampling seed override")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

ExperimentConfig load_with_overrides(const CommonOptions& opts) {
    ExperimentConfig config = load_experiment_config(opts.config_path);
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    if (!opts.aggregator.empty()) config.aggregator = aggregator_kind_from_name(opts.aggregator);
    if (!opts.cache_mode.empty()) config.cache.mode = cache_mode_from_name(opts.cache_mode);
    if (!opts.cache_dir.empty()) config.cache.cache_dir = opts.cache_dir;
    if (opts.iterations > 0) config.iterations = opts.iterations;
    if (opts.seed_set) {
        config.seed = opts.seed;
        config.estimate.seed = opts.seed;
    }
    return config;
}

int cmd_oracle(const CommonOptions& opts) {
    ExperimentConfig config = load_with_overrides(opts);
    EnvModel env = build_env(config.env);
    ValueIterationResult optimal = value_iteration(env.mdp, 1e-10);
    PolicyTable uniform = PolicyTable::uniform(env.mdp);
    MetricsReport optimal_metrics = policy_value_metrics(env.mdp, optimal.greedy);
    MetricsReport uniform_metrics = policy_value_metrics(env.mdp, uniform);

    nlohmann::json j;
    nlohmann::json values;
    nlohmann::json greedy;
    nlohmann::json uniform_values;
    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        const std::string& name = env.lexicon.name(s);
        values[name] = optimal.values.at(s);
        uniform_values[name] = uniform_metrics.per_state_value.at(static_cast<size_t>(s));
        if (!env.mdp.is_terminal(s)) {
            nlohmann::json ties = nlohmann::json::array();
            const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
            for (size_t ai = 0; ai < actions.size(); ++ai) {
                if (optimal.greedy.dist.at(static_cast<size_t>(s)).at(ai) > 0.0)
                    ties.push_back(env.mdp.action_name(actions[ai]));
            }
            greedy[name] = ties;
        }
    }
    j["optimal_values"] = values;
    j["greedy_policy"] = greedy;
    j["uniform_policy_values"] = uniform_values;
    j["optimal_average"] = optimal_metrics.average_value;
    j["uniform_average"] = uniform_metrics.average_value;

    std::filesystem::path out = config.out_dir.empty() ? "." : config.out_dir;
    std::filesystem::create_directories(out);
    write_text_file(out / "oracle.json", j.dump(1) + "\n");

    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        std::printf("V*%s = %s", env.lexicon.name(s).c_str(),
                    format_value_3dp(optimal.values.at(s)).c_str());
        if (!env.mdp.is_terminal(s)) {
            std::printf("  greedy:");
            const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
            for (size_t ai = 0; ai < actions.size(); ++ai) {
                if (optimal.greedy.dist.at(static_cast<size_t>(s)).at(ai) > 0.0)
                    std::printf(" %s", env.mdp.action_name(actions[ai]).c_str());
            }
        }
        std::printf("\n");
    }
    std::printf("optimal average value: %s\n",
                format_value_3dp(optimal_metrics.average_value).c_str());
    std::printf("uniform policy average value: %s\n",
                format_value_3dp(uniform_metrics.average_value).c_str());
    return 0;
}

int cmd_eval_grid(const CommonOptions& opts) {
    ExperimentConfig config = load_with_overrides(opts);
    RunArtifacts artifacts = run_policy_evaluation_experiment(config);
    for (int k = 1; k <= artifacts.iterations_completed; ++k) {
        std::printf("iteration %d: %s\n", k,
                    artifacts.converged.at(static_cast<size_t>(k)) ? "converged" : "updated");
    }
    return 0;
}

int cmd_gpi_lake(const CommonOptions& opts) {
    ExperimentConfig config = load_with_overrides(opts);
    RunArtifacts artifacts = run_language_gpi(config);
    for (size_t k = 0; k < artifacts.metrics.size(); ++k) {
        std::printf("Iter %zu Average Value %s\n", k,
                    format_value_3dp(artifacts.metrics[k].average_value).c_str());
    }
    std::printf("Optimal %s\n", format_value_3dp(artifacts.optimal_average).c_str());
    return 0;
}

int cmd_replay(const std::string& run_dir, const std::string& out_dir) {
    ExperimentConfig config =
        load_experiment_config(std::filesystem::path(run_dir) / "config.json");
    config.cache.mode = CachePolicy::Mode::replay_only;
    if (config.cache.cache_dir.empty()) config.cache.cache_dir = run_dir;
    config.out_dir = out_dir;
    RunArtifacts artifacts = config.improvement_enabled
                                 ? run_language_gpi(config)
                                 : run_policy_evaluation_experiment(config);
    std::printf("replayed %d iterations into %s\n", artifacts.iterations_completed,
                artifacts.run_dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Language-value generalized policy iteration on tabular MDPs"};
    app.require_subcommand(1);

    CommonOptions oracle_opts;
    CLI::App* oracle = app.add_subcommand("oracle", "optimal values and greedy policy via DP");
    add_common(oracle, oracle_opts, true);

    CommonOptions grid_opts;
    CLI::App* eval_grid =
        app.add_subcommand("eval-grid", "language policy evaluation with a fixed policy");
    add_common(eval_grid, grid_opts, true);

    CommonOptions lake_opts;
    CLI::App* gpi_lake =
        app.add_subcommand("gpi-lake", "alternating language evaluation and improvement");
    add_common(gpi_lake, lake_opts, true);

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "emit report.md and heatmap CSVs");
    report->add_option("--run", report_dir, "finished run directory")->required();

    std::string replay_dir;
    std::string replay_out;
    CLI::App* replay = app.add_subcommand("replay", "re-run a finished run from its transcripts");
    replay->add_option("--run", replay_dir, "finished run directory")->required();
    replay->add_option("--out", replay_out, "output directory for the replay")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (oracle->parsed()) return cmd_oracle(oracle_opts);
        if (eval_grid->parsed()) return cmd_eval_grid(grid_opts);
        if (gpi_lake->parsed()) return cmd_gpi_lake(lake_opts);
        if (report->parsed()) return nlrl::write_run_report(report_dir);
        if (replay->parsed()) return cmd_replay(replay_dir, replay_out);
    } catch (const nlrl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlrl::ReplayMissError& e) {
        std::cerr << "replay miss: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
