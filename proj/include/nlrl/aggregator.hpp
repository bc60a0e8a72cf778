#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlrl/language.hpp"

namespace nlrl {

/// Information-aggregation contract: fuse one-step changes with successor
/// evaluations (the add), then join across samples (the expectation).
class Aggregator {
public:
    virtual ~Aggregator() = default;
    virtual std::string kind() const = 0;

    /// Combined state estimate from one-step outcomes drawn under the policy.
    virtual LanguageValue evaluate_state(const std::string& state_name,
                                         const std::vector<OneStepOutcome>& outcomes) = 0;

    /// Per-action estimate; outcomes all share one action.
    virtual LanguageValue evaluate_action(const std::string& state_name,
                                          const std::string& action_name,
                                          const std::vector<OneStepOutcome>& outcomes) = 0;

    /// State estimate from the per-action documents (the lake protocol).
    virtual LanguageValue evaluate_policy_from_actions(
        const std::string& state_name, const std::vector<ActionValueDoc>& action_values) = 0;

    /// Trajectory estimate; never consults a value table.
    virtual LanguageValue evaluate_from_trajectories(
        const std::string& state_name, const std::vector<TrajectoryRecord>& trajectories) = 0;
};

struct ImprovementResult {
    std::vector<double> dist;  // aligned with the action_values input order
    std::string thought;
};

/// Policy-improvement contract: action distribution plus thought trace from
/// the per-action evaluations and the task instruction.
class Improver {
public:
    virtual ~Improver() = default;
    virtual std::string kind() const = 0;
    virtual ImprovementResult improve(const std::string& state_name,
                                      const std::vector<ActionValueDoc>& action_values,
                                      const TaskInstruction& task) = 0;
};

// ── Deterministic symbolic aggregation ──────────────────────────────────────

/// Machine-comparable summary of a concept document.
struct ConceptScore {
    enum Rank {
        immediate_risk = 0,
        future_risk = 1,
        unknown = 2,
        safe_progress = 3,
        reaches_goal = 4,
    };
    Rank rank = unknown;
    std::optional<int> path_length;  // moves along safest_path
    bool warning = false;            // safest_path present but unparseable

    bool operator==(const ConceptScore&) const = default;
};

ConceptScore score_concepts(const ConceptEvaluation& c);

/// Deterministic G2: one fused document per outcome.
ConceptEvaluation concept_fuse(const OneStepOutcome& outcome);

struct FusedItem {
    double probability = 0.0;
    ConceptEvaluation eval;
};

/// Deterministic G1: set unions for states and risks, minimum-length safe
/// path with first-wins tie-breaking, rendered final evaluation.
ConceptEvaluation concept_join(const std::string& state_name, const std::vector<FusedItem>& items);

/// Deterministic improvement: uniform over the argmax of (rank, then shortest
/// path length). All-unknown input falls back to uniform over all actions.
ImprovementResult improve_policy_deterministic(
    const std::string& state_name,
    const std::vector<std::pair<std::string, ConceptEvaluation>>& action_values);

class DeterministicAggregator : public Aggregator {
public:
    std::string kind() const override { return "deterministic"; }
    LanguageValue evaluate_state(const std::string& state_name,
                                 const std::vector<OneStepOutcome>& outcomes) override;
    LanguageValue evaluate_action(const std::string& state_name, const std::string& action_name,
                                  const std::vector<OneStepOutcome>& outcomes) override;
    LanguageValue evaluate_policy_from_actions(
        const std::string& state_name, const std::vector<ActionValueDoc>& action_values) override;
    LanguageValue evaluate_from_trajectories(
        const std::string& state_name, const std::vector<TrajectoryRecord>& trajectories) override;
};

class DeterministicImprover : public Improver {
public:
    std::string kind() const override { return "deterministic"; }
    ImprovementResult improve(const std::string& state_name,
                              const std::vector<ActionValueDoc>& action_values,
                              const TaskInstruction& task) override;
};

// Path-grammar helpers shared with tests.
struct ParsedPath {
    std::vector<std::string> states;   // visited display names, annotations stripped
    std::vector<std::string> actions;  // move labels between states
    bool ends_at_goal = false;         // goal or grid terminal suffix
    bool ends_at_hole = false;
    bool grid_terminal = false;  // which success suffix matched
    int moves() const { return static_cast<int>(actions.size()); }
};
std::optional<ParsedPath> parse_concept_path(const std::string& path_text);

}  // namespace nlrl
