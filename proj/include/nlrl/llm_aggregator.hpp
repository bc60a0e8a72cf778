#pragma once

#include <string>
#include <vector>

#include "nlrl/aggregator.hpp"
#include "nlrl/gateway.hpp"

namespace nlrl {

struct LlmCallConfig {
    std::string model;
    double temperature = 0.0;
    int retry_budget = 2;  // corrective retries after the first attempt
};

/// Builds the improvement prompt; exposed so replay fixtures can reproduce
/// the exact request bytes.
PromptBundle assemble_improvement_prompt(const std::string& state_name,
                                         const std::vector<ActionValueDoc>& action_values,
                                         const TaskInstruction& task);

/// Chat-backed aggregation. Grid-style states use the combined free-text
/// evaluation prompt; lake-style states use the per-action and across-action
/// concept prompts with JSON replies.
class LlmAggregator : public Aggregator {
public:
    LlmAggregator(ChatGateway& gateway, LlmCallConfig config)
        : gateway_(gateway), config_(std::move(config)) {}

    std::string kind() const override { return "llm"; }
    LanguageValue evaluate_state(const std::string& state_name,
                                 const std::vector<OneStepOutcome>& outcomes) override;
    LanguageValue evaluate_action(const std::string& state_name, const std::string& action_name,
                                  const std::vector<OneStepOutcome>& outcomes) override;
    LanguageValue evaluate_policy_from_actions(
        const std::string& state_name, const std::vector<ActionValueDoc>& action_values) override;
    LanguageValue evaluate_from_trajectories(
        const std::string& state_name, const std::vector<TrajectoryRecord>& trajectories) override;

private:
    ConceptEvaluation chat_for_concepts(const PromptBundle& bundle, const std::string& state_name,
                                        const std::string& tag);

    ChatGateway& gateway_;
    LlmCallConfig config_;
};

class LlmImprover : public Improver {
public:
    LlmImprover(ChatGateway& gateway, LlmCallConfig config)
        : gateway_(gateway), config_(std::move(config)) {}

    std::string kind() const override { return "llm"; }
    ImprovementResult improve(const std::string& state_name,
                              const std::vector<ActionValueDoc>& action_values,
                              const TaskInstruction& task) override;

private:
    ChatGateway& gateway_;
    LlmCallConfig config_;
};

/// Matches the final "Action: <name>" line against the legal menu; returns
/// the index into `action_names` or -1.
int parse_action_choice(const std::string& response, const std::vector<std::string>& action_names);

}  // namespace nlrl
