#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nlrl/mdp.hpp"
#include "nlrl/textify.hpp"

namespace nlrl {

inline constexpr const char* kNoEvaluation = "No evaluation information";

enum class Provenance { initial, terminal, td_update, mc_update };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

/// A language evaluation of one state (or state-action pair): either free
/// text or a structured concept document.
struct LanguageValue {
    enum class Kind { free_text, concepts };
    Kind kind = Kind::free_text;
    std::string text;             // free-text payload or initial/terminal marker
    ConceptEvaluation concepts;   // kind == concepts
    Provenance provenance = Provenance::initial;
    int iteration = 0;
    bool non_conforming = false;  // freeform reply lacked the marker sentence

    static LanguageValue initial_value();
    static LanguageValue terminal_value(const std::string& label);
    static LanguageValue from_concepts(ConceptEvaluation c, Provenance p, int iteration);
    static LanguageValue from_text(std::string t, Provenance p, int iteration,
                                   bool non_conforming = false);

    bool is_initial() const;
    bool is_terminal_marker() const { return provenance == Provenance::terminal; }
    /// Payload comparison that ignores provenance and iteration stamps.
    bool content_equal(const LanguageValue& other) const;
    /// Text to embed when this value appears inside a prompt.
    std::string display_text() const;
};

/// Per-state language value table, versioned by sweep iteration.
struct LanguageValueTable {
    std::vector<LanguageValue> entries;
    int iteration = 0;

    bool content_equal(const LanguageValueTable& other) const;
};

/// Per-(state, action) language values, aligned with TabularMdp::actions.
struct LanguageQTable {
    std::vector<std::vector<LanguageValue>> entries;
};

using TableSnapshot = std::shared_ptr<const LanguageValueTable>;

/// Immutable view of the table at call time (Jacobi sweep support).
TableSnapshot snapshot(const LanguageValueTable& table);
TableSnapshot snapshot(const TableSnapshot& view);

/// One-step sample enriched with everything an aggregator needs; the value
/// snapshot comes from the previous iteration, never the in-progress table.
struct OneStepOutcome {
    ActionId action = 0;
    std::string action_name;
    double reward = 0.0;
    StateId next = 0;
    std::string next_name;
    std::string next_label;  // "", "start", "hole", "goal", "terminal"
    bool next_terminal = false;
    bool intended = true;  // realized state is the action's intended target
    double probability = 0.0;
    std::string description;  // render_transition output
    LanguageValue next_value;
    std::string state_name;  // current state display name
};

/// One whole episode rendered for Monte-Carlo aggregation. Carries both the
/// transition sentences and the structure the symbolic aggregator needs.
struct TrajectoryRecord {
    StateId start = 0;
    std::string start_name;
    struct Step {
        ActionId action;
        std::string action_name;
        StateId next;
        std::string next_name;
        std::string next_label;
        double reward;
        std::string text;
    };
    std::vector<Step> steps;
    bool terminated = false;
};

struct TaskInstruction {
    std::string text;
    void validate() const {
        if (text.empty()) throw ConfigError("task instruction must be non-empty");
    }
};

/// Per-action evaluation handed to across-action aggregation and improvement.
struct ActionValueDoc {
    std::string action_name;
    ActionId action = 0;
    double policy_probability = 0.0;
    LanguageValue value;
};

class Aggregator;  // see aggregator.hpp

/// Fresh table: terminals hold their fixed descriptions, everything else the
/// initial marker; iteration 0.
LanguageValueTable init_value_table(const TabularMdp& mdp);

/// One-step estimate (G2 per outcome, then G1 across outcomes).
LanguageValue td_language_estimate(StateId s, const std::vector<OneStepOutcome>& outcomes,
                                   Aggregator& agg);

/// Trajectory estimate (G1 once over the whole-trajectory renderings). Never
/// reads a value table.
LanguageValue mc_language_estimate(StateId s, const std::vector<TrajectoryRecord>& trajectories,
                                   Aggregator& agg);

/// Per-action one-step estimate; all outcomes must share the action.
LanguageValue language_q_estimate(StateId s, ActionId a,
                                  const std::vector<OneStepOutcome>& outcomes, Aggregator& agg);

/// Renders a sampled trajectory into a TrajectoryRecord.
TrajectoryRecord render_trajectory(const TabularMdp& mdp, const StateLexicon& lexicon,
                                   StateId start, const TrajectorySample& sample);

}  // namespace nlrl
