#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlrl/aggregator.hpp"
#include "nlrl/env.hpp"
#include "nlrl/gateway.hpp"
#include "nlrl/language.hpp"

namespace nlrl {

enum class AggregatorKind { deterministic, llm };
AggregatorKind aggregator_kind_from_name(const std::string& name);
std::string aggregator_kind_name(AggregatorKind kind);

enum class EstimateKind { td_exhaustive, td_sampled, mc };

struct EstimateMode {
    EstimateKind kind = EstimateKind::td_exhaustive;
    int samples = 0;        // K for sampled/mc modes
    std::uint64_t seed = 0;
};

/// How V^L is produced each sweep: one combined estimate over policy-weighted
/// outcomes, or per-action documents joined across actions.
enum class ValueProtocol { combined_v, per_action_q };

struct ExperimentConfig {
    int schema_version = 1;
    EnvSpec env;
    int iterations = 4;
    AggregatorKind aggregator = AggregatorKind::deterministic;
    EstimateMode estimate;
    bool improvement_enabled = false;
    std::optional<ValueProtocol> protocol;  // defaults from improvement_enabled
    TaskInstruction task{"Reach a terminal state along the shortest path."};
    CachePolicy cache;
    int parallelism = 1;
    std::filesystem::path out_dir;
    std::string model = "gpt-4-1106-preview";
    double temperature = 1.0;
    bool fresh_table_each_iteration = false;
    std::uint64_t seed = 0;

    ValueProtocol effective_protocol() const {
        if (protocol) return *protocol;
        return improvement_enabled ? ValueProtocol::per_action_q : ValueProtocol::combined_v;
    }
    void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

struct SweepResult {
    LanguageValueTable table;
    LanguageQTable q;  // populated in per_action_q protocol
};

/// One synchronous evaluation pass. Every estimate reads from a snapshot of
/// the incoming table, so any visit order produces the same result. On a
/// per-state failure the partial table is attached to the thrown SweepError.
struct SweepError : std::runtime_error {
    SweepError(const std::string& what, std::string state, LanguageValueTable partial)
        : std::runtime_error(what), state_name(std::move(state)), partial_table(std::move(partial)) {}
    std::string state_name;
    LanguageValueTable partial_table;
};

SweepResult evaluation_sweep(const EnvModel& env, const PolicyTable& policy,
                             const LanguageValueTable& table, Aggregator& agg,
                             const EstimateMode& mode, ValueProtocol protocol,
                             std::span<const StateId> visit_order = {}, int parallelism = 1);

struct ImprovementSweepResult {
    PolicyTable policy;
    std::vector<std::string> thoughts;  // indexed by state, empty for terminals
};

ImprovementSweepResult improvement_sweep(const EnvModel& env, const LanguageQTable& q,
                                         Improver& improver, const TaskInstruction& task);

MetricsReport compute_iteration_metrics(const TabularMdp& mdp, const PolicyTable& policy,
                                        int iteration_index);

struct RunArtifacts {
    std::filesystem::path run_dir;
    std::vector<MetricsReport> metrics;      // one per iteration, 0-based
    std::vector<bool> converged;             // table content equality vs previous iteration
    double optimal_average = 0.0;
    int iterations_completed = 0;
};

/// Evaluation-only protocol: repeated sweeps under a fixed uniform policy.
RunArtifacts run_policy_evaluation_experiment(const ExperimentConfig& config);

/// Alternating evaluation and improvement with per-iteration oracle metrics.
RunArtifacts run_language_gpi(const ExperimentConfig& config);

// Artifact helpers shared with the report command and tests.
nlohmann::json value_table_to_json(const EnvModel& env, const LanguageValueTable& table);
LanguageValueTable value_table_from_json(const EnvModel& env, const nlohmann::json& j);
nlohmann::json policy_to_json(const EnvModel& env, const PolicyTable& policy);
nlohmann::json metrics_to_json(const EnvModel& env, const std::vector<MetricsReport>& metrics,
                               double optimal_average);
void write_text_file(const std::filesystem::path& file, const std::string& content);

}  // namespace nlrl
