#pragma once

#include <string>
#include <vector>

#include "nlrl/mdp.hpp"

namespace nlrl {

namespace prompts {

// Shortest-path grid strings.
extern const std::string kTerminalStateDescription;
extern const std::string kGridSystemPrompt;
extern const std::string kGridRolloutPrompt;   // contains {current_state}
extern const std::string kGridTriggerPrompt;   // contains {current_state}

// Lake terminal markers (these are ours; the lake protocol only fixes the
// chat prompts, not the stored terminal texts).
extern const std::string kHoleStateDescription;
extern const std::string kGoalStateDescription;
extern const std::string kTruncationSentence;

// Lake aggregation prompts.
extern const std::string kLakeActionSystemPrompt;   // per-action evaluation
extern const std::string kLakeActionInputFormat;    // {state} {action} {agg_str}
extern const std::string kLakePolicySystemPrompt;   // across-action evaluation
extern const std::string kLakePolicyInputFormat;    // {state} {agg_str}

extern const std::string kFreeformMarker;  // "Final evaluation of the current state"

}  // namespace prompts

/// Bijection from states to their display names. Grid cells render as
/// "(letter)"; lake cells as "(row,col)".
struct StateLexicon {
    enum class Style { letters, coordinates };
    Style style = Style::letters;
    std::vector<std::string> names;

    const std::string& name(StateId s) const;
    void validate() const;
};

StateLexicon make_gridworld_lexicon(const GridWorldSpec& spec);
StateLexicon make_frozenlake_lexicon(const FrozenLakeSpec& spec);

std::string render_state(const StateLexicon& lexicon, StateId s);

/// One transition sentence. The grid format is fixed; the terminal sentence is
/// appended when the move ends the episode.
std::string render_transition(const TabularMdp& mdp, const StateLexicon& lexicon, StateId s,
                              ActionId a, double reward, StateId next);

enum class ResponseFormatHint { free_text, json_object };

/// Assembled chat prompt. Concatenation order is system, user, trigger; no
/// whitespace is added or stripped between the parts.
struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::string trigger_text;
    ResponseFormatHint response_format_hint = ResponseFormatHint::free_text;
};

struct RolloutLine {
    std::string transition_text;
    std::string next_state_name;
    std::string next_value_text;
};

PromptBundle assemble_gridworld_eval_prompt(const std::string& state_name,
                                            const std::vector<RolloutLine>& rollouts);

struct OutcomeLine {
    double probability = 0.0;
    std::string transition_text;
    std::string next_state_name;
    std::string next_value_text;  // concept JSON or terminal/initial marker
};

PromptBundle assemble_frozenlake_q_prompt(const std::string& state_name,
                                          const std::string& action_name,
                                          const std::vector<OutcomeLine>& outcomes);

struct ActionEvalLine {
    std::string action_name;
    std::string value_text;
};

PromptBundle assemble_frozenlake_v_prompt(const std::string& state_name,
                                          const std::vector<ActionEvalLine>& evals);

/// The five-field structured evaluation. Fields may hold the literal "None".
struct ConceptEvaluation {
    std::string important_states = "None";
    std::string immediate_risk = "None";
    std::string future_risk = "None";
    std::string safest_path = "None";
    std::string final_evaluation = "None";

    bool operator==(const ConceptEvaluation&) const = default;
};

/// Canonical JSON form with the concept names as keys.
std::string serialize_concepts(const ConceptEvaluation& c);

/// Extracts the first JSON object and maps the five concept keys, tolerating
/// the spelling variants used across the two lake prompts. Throws ParseError.
ConceptEvaluation parse_concept_document(const std::string& text);

struct FreeformEvaluation {
    std::string text;
    bool non_conforming = false;
};

/// Returns the substring from the marker sentence onward; if the marker is
/// absent the whole text is kept and flagged.
FreeformEvaluation parse_freeform_evaluation(const std::string& text);

}  // namespace nlrl
