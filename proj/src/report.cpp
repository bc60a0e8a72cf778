#include "nlrl/report.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "nlrl/runner.hpp"

namespace nlrl {

std::string format_value_3dp(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", value);
    // Normalize negative zero.
    if (std::string(buf) == "-0.000") return "0.000";
    return buf;
}

std::string emit_markdown_table(const std::vector<double>& averages,
                                std::optional<double> optimal) {
    std::string header = "| |";
    std::string rule = "| --- |";
    std::string row = "| Average Value |";
    for (size_t i = 0; i < averages.size(); ++i) {
        header += " Iter " + std::to_string(i) + " |";
        rule += " --- |";
        row += " " + format_value_3dp(averages[i]) + " |";
    }
    if (optimal) {
        header += " Optimal |";
        rule += " --- |";
        row += " " + format_value_3dp(*optimal) + " |";
    }
    return header + "\n" + rule + "\n" + row + "\n";
}

std::string emit_heatmap_csv(const std::vector<double>& per_state, int width, int height) {
    std::string out = "row,col,value\n";
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            size_t s = static_cast<size_t>(r * width + c);
            double v = s < per_state.size() ? per_state[s] : 0.0;
            out += std::to_string(r) + "," + std::to_string(c) + "," + format_value_3dp(v) + "\n";
        }
    }
    return out;
}

int write_run_report(const std::filesystem::path& run_dir) {
    std::vector<std::string> missing;
    const auto metrics_path = run_dir / "metrics.json";
    const auto config_path = run_dir / "config.json";
    if (!std::filesystem::exists(metrics_path)) missing.push_back("metrics.json");
    if (!std::filesystem::exists(config_path)) missing.push_back("config.json");
    if (!missing.empty()) {
        std::cerr << "missing run artifacts in " << run_dir.string() << ":";
        for (const std::string& m : missing) std::cerr << " " << m;
        std::cerr << "\n";
        return 2;
    }

    std::ifstream metrics_in(metrics_path);
    nlohmann::json metrics = nlohmann::json::parse(metrics_in, nullptr, false);
    std::ifstream config_in(config_path);
    nlohmann::json config = nlohmann::json::parse(config_in, nullptr, false);
    if (metrics.is_discarded() || config.is_discarded()) {
        std::cerr << "corrupt metrics.json or config.json in " << run_dir.string() << "\n";
        return 2;
    }

    const int width = metrics.value("width", 0);
    const int height = metrics.value("height", 0);

    std::vector<double> averages;
    for (const auto& row : metrics.at("iterations")) {
        averages.push_back(row.at("average_value").get<double>());
    }
    std::optional<double> optimal;
    if (metrics.contains("optimal_average"))
        optimal = metrics.at("optimal_average").get<double>();

    std::string report = "# Run report\n\n";
    report += "Environment: " + config.at("env").at("kind").get<std::string>() + " " +
              std::to_string(width) + "x" + std::to_string(height) + "\n";
    report += "Aggregator: " + config.value("aggregator", "deterministic") + "\n";
    report += "Iterations: " + std::to_string(averages.empty() ? 0 : averages.size() - 1) + "\n\n";
    report += "Average state value (non-terminal states) per iteration:\n\n";
    report += emit_markdown_table(averages, optimal);

    write_text_file(run_dir / "report.md", report);

    // One heatmap per iteration from the per-state values.
    EnvSpec spec = parse_env_spec(config.at("env"));
    EnvModel env = build_env(spec);
    for (const auto& row : metrics.at("iterations")) {
        std::vector<double> per_state(static_cast<size_t>(env.mdp.state_count()), 0.0);
        const auto& values = row.at("per_state");
        for (StateId s = 0; s < env.mdp.state_count(); ++s) {
            per_state[static_cast<size_t>(s)] = values.at(env.lexicon.name(s)).get<double>();
        }
        int k = row.at("iteration").get<int>();
        write_text_file(run_dir / ("heatmap_iter_" + std::to_string(k) + ".csv"),
                        emit_heatmap_csv(per_state, width, height));
    }
    return 0;
}

}  // namespace nlrl
