#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nlrl {

/// Fixed three-decimal rendering (round-half-even, matching the result
/// tables).
std::string format_value_3dp(double value);

/// Markdown table with one column per iteration plus the optimal column.
std::string emit_markdown_table(const std::vector<double>& averages,
                                std::optional<double> optimal);

/// row,col,value CSV over the full grid (terminals included).
std::string emit_heatmap_csv(const std::vector<double>& per_state, int width, int height);

/// Renders report.md and heatmap_iter_{k}.csv from a finished run directory.
/// Returns 0 on success, 2 when artifacts are missing (message on stderr).
int write_run_report(const std::filesystem::path& run_dir);

}  // namespace nlrl
