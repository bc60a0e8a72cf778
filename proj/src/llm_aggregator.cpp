#include "nlrl/llm_aggregator.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace nlrl {

namespace {

// Retry prompts carry the attempt number so each retry is a distinct request
// rather than a cache hit on the previous failure.
std::string corrective_suffix(const ParseError& err, int attempt) {
    std::string tag = "\n\n(Retry " + std::to_string(attempt) + ") ";
    if (err.kind == ParseError::Kind::no_object) {
        return tag +
               "Your previous reply did not contain a JSON object. Reply again with a single "
               "JSON object holding exactly these keys: Important states, Immediate Risk, Future "
               "Risk, Safest, Final evaluation.";
    }
    return tag + "Your previous reply was missing the key '" + err.concept_name +
           "'. Reply again with a single JSON object holding all five keys: Important states, "
           "Immediate Risk, Future Risk, Safest, Final evaluation.";
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

LanguageValue LlmAggregator::evaluate_state(const std::string& state_name,
                                            const std::vector<OneStepOutcome>& outcomes) {
    std::vector<RolloutLine> rollouts;
    rollouts.reserve(outcomes.size());
    for (const OneStepOutcome& o : outcomes) {
        rollouts.push_back(RolloutLine{o.description, o.next_name, o.next_value.display_text()});
    }
    PromptBundle bundle = assemble_gridworld_eval_prompt(state_name, rollouts);
    ChatRequest req = make_chat_request(bundle, config_.model, config_.temperature,
                                        "eval_state " + state_name);
    std::string response = gateway_.chat(req);
    FreeformEvaluation parsed = parse_freeform_evaluation(response);
    return LanguageValue::from_text(parsed.text, Provenance::td_update, 0, parsed.non_conforming);
}

ConceptEvaluation LlmAggregator::chat_for_concepts(const PromptBundle& bundle,
                                                   const std::string& state_name,
                                                   const std::string& tag) {
    PromptBundle attempt_bundle = bundle;
    std::string transcripts;
    for (int attempt = 0; attempt <= config_.retry_budget; ++attempt) {
        ChatRequest req = make_chat_request(attempt_bundle, config_.model, config_.temperature, tag);
        std::string response = gateway_.chat(req);
        transcripts += "--- attempt " + std::to_string(attempt + 1) + " ---\n" + response + "\n";
        try {
            return parse_concept_document(response);
        } catch (const ParseError& err) {
            if (attempt == config_.retry_budget) {
                throw StateEvaluationFailedError(
                    "evaluation at " + state_name + " failed after " +
                        std::to_string(config_.retry_budget + 1) + " attempts (" + err.what() +
                        ")\n" + transcripts,
                    state_name);
            }
            attempt_bundle.user_text = bundle.user_text + corrective_suffix(err, attempt + 1);
        }
    }
    throw StateEvaluationFailedError("unreachable", state_name);
}

LanguageValue LlmAggregator::evaluate_action(const std::string& state_name,
                                             const std::string& action_name,
                                             const std::vector<OneStepOutcome>& outcomes) {
    std::vector<OutcomeLine> lines;
    lines.reserve(outcomes.size());
    for (const OneStepOutcome& o : outcomes) {
        lines.push_back(
            OutcomeLine{o.probability, o.description, o.next_name, o.next_value.display_text()});
    }
    PromptBundle bundle = assemble_frozenlake_q_prompt(state_name, action_name, lines);
    ConceptEvaluation c =
        chat_for_concepts(bundle, state_name, "eval_action " + state_name + " " + action_name);
    return LanguageValue::from_concepts(std::move(c), Provenance::td_update, 0);
}

LanguageValue LlmAggregator::evaluate_policy_from_actions(
    const std::string& state_name, const std::vector<ActionValueDoc>& action_values) {
    std::vector<ActionEvalLine> lines;
    lines.reserve(action_values.size());
    for (const ActionValueDoc& doc : action_values) {
        lines.push_back(ActionEvalLine{doc.action_name, doc.value.display_text()});
    }
    PromptBundle bundle = assemble_frozenlake_v_prompt(state_name, lines);
    ConceptEvaluation c = chat_for_concepts(bundle, state_name, "eval_policy " + state_name);
    return LanguageValue::from_concepts(std::move(c), Provenance::td_update, 0);
}

LanguageValue LlmAggregator::evaluate_from_trajectories(
    const std::string& state_name, const std::vector<TrajectoryRecord>& trajectories) {
    // The trajectory estimate reuses the rollout prompt family: each rollout
    // line carries a full episode and the fixed end-state marker, never a
    // value-table entry.
    std::vector<RolloutLine> rollouts;
    rollouts.reserve(trajectories.size());
    for (const TrajectoryRecord& traj : trajectories) {
        std::string text;
        for (const auto& step : traj.steps) {
            if (!text.empty()) text += " ";
            text += step.text;
        }
        std::string end_name = traj.steps.empty() ? traj.start_name : traj.steps.back().next_name;
        std::string end_marker =
            traj.terminated
                ? LanguageValue::terminal_value(
                      traj.steps.empty() ? "" : traj.steps.back().next_label)
                      .text
                : prompts::kTruncationSentence;
        rollouts.push_back(RolloutLine{text, end_name, end_marker});
    }
    PromptBundle bundle = assemble_gridworld_eval_prompt(state_name, rollouts);
    ChatRequest req =
        make_chat_request(bundle, config_.model, config_.temperature, "eval_mc " + state_name);
    std::string response = gateway_.chat(req);
    FreeformEvaluation parsed = parse_freeform_evaluation(response);
    return LanguageValue::from_text(parsed.text, Provenance::mc_update, 0, parsed.non_conforming);
}

PromptBundle assemble_improvement_prompt(const std::string& state_name,
                                         const std::vector<ActionValueDoc>& action_values,
                                         const TaskInstruction& task) {
    if (action_values.empty()) throw UsageError("improvement prompt needs at least one action");
    task.validate();
    PromptBundle bundle;
    bundle.system_text =
        "You are helping a player pick the single best next action in a grid-based environment.\n"
        "The task: " + task.text + "\n"
        "You will see the player's current state, the legal actions, and an evaluation of each "
        "action. Reason about which action best serves the task, then finish your reply with one "
        "final line of the form 'Action: <name>' where <name> is exactly one of the legal "
        "actions.";
    std::string user = "State: " + state_name + "\nLegal actions:";
    for (const ActionValueDoc& doc : action_values) user += " " + doc.action_name + ";";
    user += "\n\nAction evaluations:\n";
    for (const ActionValueDoc& doc : action_values) {
        user += "\nAction: " + doc.action_name + "\nEvaluation: " + doc.value.display_text() + "\n";
    }
    bundle.user_text = user;
    bundle.trigger_text = "";
    bundle.response_format_hint = ResponseFormatHint::free_text;
    return bundle;
}

int parse_action_choice(const std::string& response,
                        const std::vector<std::string>& action_names) {
    // Take the last "Action:" line.
    std::string chosen;
    std::istringstream stream(response);
    std::string line;
    while (std::getline(stream, line)) {
        std::string lower = lowercase(line);
        size_t pos = lower.find("action:");
        if (pos != std::string::npos) chosen = line.substr(pos + 7);
    }
    if (chosen.empty()) return -1;
    std::string needle = lowercase(chosen);
    // Trim whitespace and trailing punctuation.
    auto issp = [](char c) { return std::isspace(static_cast<unsigned char>(c)); };
    while (!needle.empty() && issp(needle.front())) needle.erase(needle.begin());
    while (!needle.empty() && (issp(needle.back()) || needle.back() == '.' ||
                               needle.back() == '\'' || needle.back() == '"'))
        needle.pop_back();
    if (needle.empty()) return -1;

    for (size_t i = 0; i < action_names.size(); ++i) {
        if (lowercase(action_names[i]) == needle) return static_cast<int>(i);
    }
    // Fall back to the direction word ("go down" matches "Move down").
    static const char* kDirections[] = {"up", "left", "down", "right"};
    for (const char* dir : kDirections) {
        if (needle.find(dir) == std::string::npos) continue;
        for (size_t i = 0; i < action_names.size(); ++i) {
            if (lowercase(action_names[i]).find(dir) != std::string::npos)
                return static_cast<int>(i);
        }
    }
    return -1;
}

ImprovementResult LlmImprover::improve(const std::string& state_name,
                                       const std::vector<ActionValueDoc>& action_values,
                                       const TaskInstruction& task) {
    PromptBundle bundle = assemble_improvement_prompt(state_name, action_values, task);
    std::vector<std::string> names;
    for (const ActionValueDoc& doc : action_values) names.push_back(doc.action_name);

    PromptBundle attempt_bundle = bundle;
    std::string transcripts;
    for (int attempt = 0; attempt <= config_.retry_budget; ++attempt) {
        ChatRequest req =
            make_chat_request(attempt_bundle, config_.model, config_.temperature,
                              "improve " + state_name);
        std::string response = gateway_.chat(req);
        transcripts += "--- attempt " + std::to_string(attempt + 1) + " ---\n" + response + "\n";
        int idx = parse_action_choice(response, names);
        if (idx >= 0) {
            ImprovementResult result;
            result.dist.assign(action_values.size(), 0.0);
            result.dist[static_cast<size_t>(idx)] = 1.0;
            result.thought = response;
            return result;
        }
        attempt_bundle.user_text =
            bundle.user_text + "\n\n(Retry " + std::to_string(attempt + 1) +
            ") Your previous reply did not end with a legal action. Finish with one line "
            "'Action: <name>' choosing exactly one of the legal actions listed above.";
    }
    throw ImprovementFailedError("improvement at " + state_name + " failed after " +
                                     std::to_string(config_.retry_budget + 1) +
                                     " attempts\n" + transcripts,
                                 state_name);
}

}  // namespace nlrl
