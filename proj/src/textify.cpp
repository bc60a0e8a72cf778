#include "nlrl/textify.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace nlrl {

namespace prompts {

const std::string kTerminalStateDescription =
    "The state is the terminal state. Your move ends here so you will not receive any negative "
    "path cost anymore in the future.";

const std::string kGridSystemPrompt =
    "You are a helpful assistant that strictly follows the user’s instructions.\n"
    "We are finding the shortest path towards the terminal state in gridworld. We use (letter) to "
    "represent different grids.\n"
    "To help us evaluate a given grid position in the shortest path finding task, we have an agent "
    "that can conduct actions to move to other grids. The agent has 4 actions: go up, move left, "
    "go down and move right. The agent conducts several one-step rollouts to explore such grid "
    "world.\n"
    "For each one-step rollout starting from a given grid, it contains two sources of information, "
    "one about the descrption of intermediate change of action, state and reward, while the other "
    "one is about our evaluation of the new grid state.\n"
    "I need you to help me aggregate/summarize on these rollout information to concisely evaluate "
    "the given grid position.";

const std::string kGridRolloutPrompt =
    "The current grid state is {current_state}. And here are several one-step rollout results "
    "starting from the current state {current_state}:\n\n";

const std::string kGridTriggerPrompt =
    "By aggregating the above rollout results, please concisely generate your evaluation of the "
    "current state {current_state}. Start your answer with the sentence 'Final evaluation of the "
    "current state:'.";

const std::string kHoleStateDescription =
    "The state is a hole. The episode has ended here, so no reward can be collected anymore.";

const std::string kGoalStateDescription =
    "The state is the goal. The episode has ended here with the goal reached and the reward "
    "collected.";

const std::string kTruncationSentence =
    "The episode was truncated at the step limit before reaching a terminal state.";

const std::string kLakeActionSystemPrompt =
    R"__(You are a highly skilled assistant, committed to following user instructions precisely. Our task involves a player navigating a stochastic environment known as 'Frozen Lake,' with the ultimate goal of reaching the goal position while avoiding all holes. Your role is to assist in evaluating the player's action on the given state.
In this environment, the player makes decisions in each state, leading to potentially varied subsequent states due to the stochastic nature of the environment. We will provide you with a set of possible outcomes resulting from one action.
For each outcome, you will receive two key pieces of information:

1. A detailed description of the immediate changes in state and the accompanying reward. This narrative will offer insights into the direct consequences of the player's actions.
2. An assessment of the player's policy at the newly reached state. This evaluation will include a future analysis of potential outcomes stemming from the new state.

### Your task
Your task is to synthesize these elements - the future state evaluations and the intermediate state descriptions - to construct a comprehensive evaluation of the player's action given current state.

### Json keys
You need to generate the analysis in the json format, here are the keys:
    1. Important states: Record the important state positions such as goal position, hole positions or other important states.
    2. Immediate Risk: Identify one-step failure (the action can directly result in failure). Generate None if no paths found. Here is an example if you are evaluating over state (4,1): (4,1) -> Move left -> (4,0) (hole), distance is 1.
    3. Future Risk: Identify potential future failure paths (more than one step) or future bad states. Generate None if no paths found.
    4. Safest: Generate the safest path starting from the given state and action. Output None if there are no safe paths. Here is an example if you are evaluating over state (4,1): (4,1) -> Move right -> (4,2) -> Move down -> (6,2), this is the goal.
    5. Final evaluation: Based on the above infomation, generate your final evaluation of the policy in the given state.

Make your analysis and evaluation concise and short.
One criteria is that a good action should not result in immediate risk.
)__";

const std::string kLakeActionInputFormat =
    "State: {state}\nAction: {action}\nPossible outcomes:\n{agg_str}";

const std::string kLakePolicySystemPrompt =
    R"__(Our task involves a player navigating a stochastic environment known as 'Frozen Lake,' with the ultimate goal of reaching an unknown destination. Your role is to assist in evaluating the player's action.
In this environment, the player makes decisions in each state, leading to potentially varied subsequent states due to the stochastic nature of the environment.
You are tasked with evaluating a player's stochastic policy in 'Frozen Lake'. The player has multiple actions to choose from in each state.
You will be provided with current state infromation and action choices with their corresponding action evaluations (in json format).

### Your task
Your task is to synthesize the effectiveness of different actions and combine these insights to assess the overall effectiveness of the player's policy in the current state.

### Json keys
You need to generate the analysis in the json format, here are the keys:
    1. Important states: Record the important state positions such as goal position, hole positions or other important states.
    2. Immediate Risk: Identify one-step failure (the action can directly result in failure). Here is an example if you are evaluating over state (4,1): (4,1) -> Move left -> (4,0) (hole), distance is 1.
    3. Future Risk: Identify potential future failure paths (more than one step) or future bad states.
    4. Safest path: Generate the safest path starting from the given state. Output None if there are no safe paths. Here is an example: (4,1) -> Move right -> (4,2) -> Move down -> (6,2), this is the goal.
    5. Final evaluation: Based on the above infomation, generate your final evaluation of the policy in the given state.

Make your analysis and evaluation concise and short.
One criteria is that a good action should not result in immediate failure and hole.
)__";

const std::string kLakePolicyInputFormat =
    "State: {state}\nPossible actions and evaluations:\n\n{agg_str}";

const std::string kFreeformMarker = "Final evaluation of the current state";

}  // namespace prompts

namespace {

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string format_reward(double r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", r);
    return buf;
}

std::string format_probability(double p) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", p);
    return buf;
}

}  // namespace

const std::string& StateLexicon::name(StateId s) const {
    if (s < 0 || static_cast<size_t>(s) >= names.size())
        throw UsageError("lexicon: state id out of range");
    return names[static_cast<size_t>(s)];
}

void StateLexicon::validate() const {
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) throw ConfigError("lexicon names are not a bijection");
}

StateLexicon make_gridworld_lexicon(const GridWorldSpec& spec) {
    spec.validate();
    StateLexicon lex;
    lex.style = StateLexicon::Style::letters;
    lex.names.reserve(spec.letters.size());
    for (const std::string& l : spec.letters) lex.names.push_back("(" + l + ")");
    lex.validate();
    return lex;
}

StateLexicon make_frozenlake_lexicon(const FrozenLakeSpec& spec) {
    spec.validate();
    StateLexicon lex;
    lex.style = StateLexicon::Style::coordinates;
    const int height = static_cast<int>(spec.rows.size());
    const int width = static_cast<int>(spec.rows.front().size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            lex.names.push_back("(" + std::to_string(r) + "," + std::to_string(c) + ")");
        }
    }
    lex.validate();
    return lex;
}

std::string render_state(const StateLexicon& lexicon, StateId s) { return lexicon.name(s); }

std::string render_transition(const TabularMdp& mdp, const StateLexicon& lexicon, StateId s,
                              ActionId a, double reward, StateId next) {
    (void)s;
    const std::string& action = mdp.action_name(a);
    const std::string& dest = lexicon.name(next);
    const std::string& label = mdp.labels.at(static_cast<size_t>(next));
    if (lexicon.style == StateLexicon::Style::letters) {
        std::string text = "You choose the " + action + " action. You receive a negative reward " +
                           format_reward(reward) + " as the path penalty. Now you are at a new state " +
                           dest + ".";
        if (mdp.is_terminal(next)) text += " " + prompts::kTerminalStateDescription;
        return text;
    }
    std::string text = "You choose the " + action + " action. You reach state " + dest +
                       " and receive a reward of " + format_reward(reward) + ".";
    if (label == "hole") {
        text += " This state is a hole; the episode ends here.";
    } else if (label == "goal") {
        text += " This state is the goal; the episode ends here.";
    }
    return text;
}

PromptBundle assemble_gridworld_eval_prompt(const std::string& state_name,
                                            const std::vector<RolloutLine>& rollouts) {
    if (rollouts.empty()) throw UsageError("assemble_gridworld_eval_prompt: no rollouts");
    PromptBundle bundle;
    bundle.system_text = prompts::kGridSystemPrompt;
    bundle.user_text = replace_all(prompts::kGridRolloutPrompt, "{current_state}", state_name);
    for (size_t i = 0; i < rollouts.size(); ++i) {
        bundle.user_text += "Rollout " + std::to_string(i) + ": " + rollouts[i].transition_text +
                            "\nEvaluation of the new state " + rollouts[i].next_state_name + ": " +
                            rollouts[i].next_value_text + "\n\n";
    }
    bundle.trigger_text = replace_all(prompts::kGridTriggerPrompt, "{current_state}", state_name);
    bundle.response_format_hint = ResponseFormatHint::free_text;
    return bundle;
}

PromptBundle assemble_frozenlake_q_prompt(const std::string& state_name,
                                          const std::string& action_name,
                                          const std::vector<OutcomeLine>& outcomes) {
    if (outcomes.empty()) throw UsageError("assemble_frozenlake_q_prompt: no outcomes");
    std::string agg;
    for (size_t i = 0; i < outcomes.size(); ++i) {
        if (i > 0) agg += "\n\n";
        agg += "Outcome " + std::to_string(i + 1) + " (probability " +
               format_probability(outcomes[i].probability) + "): " + outcomes[i].transition_text +
               "\nEvaluation of the player's policy at state " + outcomes[i].next_state_name +
               ": " + outcomes[i].next_value_text;
    }
    PromptBundle bundle;
    bundle.system_text = prompts::kLakeActionSystemPrompt;
    std::string user = replace_all(prompts::kLakeActionInputFormat, "{state}", state_name);
    user = replace_all(user, "{action}", action_name);
    bundle.user_text = replace_all(user, "{agg_str}", agg);
    bundle.trigger_text = "";
    bundle.response_format_hint = ResponseFormatHint::json_object;
    return bundle;
}

PromptBundle assemble_frozenlake_v_prompt(const std::string& state_name,
                                          const std::vector<ActionEvalLine>& evals) {
    if (evals.empty()) throw UsageError("assemble_frozenlake_v_prompt: no action evaluations");
    std::string agg;
    for (size_t i = 0; i < evals.size(); ++i) {
        if (i > 0) agg += "\n\n";
        agg += "Action: " + evals[i].action_name + "\nEvaluation: " + evals[i].value_text;
    }
    PromptBundle bundle;
    bundle.system_text = prompts::kLakePolicySystemPrompt;
    std::string user = replace_all(prompts::kLakePolicyInputFormat, "{state}", state_name);
    bundle.user_text = replace_all(user, "{agg_str}", agg);
    bundle.trigger_text = "";
    bundle.response_format_hint = ResponseFormatHint::json_object;
    return bundle;
}

std::string serialize_concepts(const ConceptEvaluation& c) {
    nlohmann::ordered_json j;
    j["Important state"] = c.important_states;
    j["Immediate risk"] = c.immediate_risk;
    j["Future risk"] = c.future_risk;
    j["Safest path"] = c.safest_path;
    j["Final evaluation"] = c.final_evaluation;
    return j.dump();
}

namespace {

// Lowercases and collapses whitespace/underscores so that the key spellings
// used across the two lake prompts land on one canonical form.
std::string normalize_key(const std::string& key) {
    std::string out;
    for (char ch : key) {
        if (ch == '_' || std::isspace(static_cast<unsigned char>(ch))) {
            if (!out.empty() && out.back() != ' ') out += ' ';
        } else {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string json_value_to_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return "None";
    return v.dump();
}

// Finds the first balanced top-level JSON object in `text`.
std::string extract_first_object(const std::string& text) {
    size_t start = text.find('{');
    while (start != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < text.size(); ++i) {
            char ch = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (ch == '\\') {
                    escaped = true;
                } else if (ch == '"') {
                    in_string = false;
                }
                continue;
            }
            if (ch == '"') {
                in_string = true;
            } else if (ch == '{') {
                ++depth;
            } else if (ch == '}') {
                --depth;
                if (depth == 0) {
                    std::string candidate = text.substr(start, i - start + 1);
                    nlohmann::json parsed =
                        nlohmann::json::parse(candidate, nullptr, /*allow_exceptions=*/false);
                    if (!parsed.is_discarded() && parsed.is_object()) return candidate;
                    break;
                }
            }
        }
        start = text.find('{', start + 1);
    }
    return "";
}

}  // namespace

ConceptEvaluation parse_concept_document(const std::string& text) {
    std::string object_text = extract_first_object(text);
    if (object_text.empty())
        throw ParseError(ParseError::Kind::no_object, "", "no JSON object found in response");
    nlohmann::json j = nlohmann::json::parse(object_text);

    static const std::map<std::string, int> kFields = {
        {"important state", 0}, {"important states", 0},
        {"immediate risk", 1},
        {"future risk", 2},
        {"safest", 3},          {"safest path", 3},
        {"final evaluation", 4},
    };
    ConceptEvaluation c;
    bool found[5] = {false, false, false, false, false};
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto field = kFields.find(normalize_key(it.key()));
        if (field == kFields.end()) continue;  // unknown extra keys ignored
        std::string value = json_value_to_text(it.value());
        switch (field->second) {
            case 0: c.important_states = value; break;
            case 1: c.immediate_risk = value; break;
            case 2: c.future_risk = value; break;
            case 3: c.safest_path = value; break;
            case 4: c.final_evaluation = value; break;
        }
        found[field->second] = true;
    }
    static const char* kNames[5] = {"Important state", "Immediate risk", "Future risk",
                                    "Safest path", "Final evaluation"};
    for (int i = 0; i < 5; ++i) {
        if (!found[i])
            throw ParseError(ParseError::Kind::missing_concept, kNames[i],
                             std::string("concept missing from response: ") + kNames[i]);
    }
    return c;
}

FreeformEvaluation parse_freeform_evaluation(const std::string& text) {
    size_t pos = text.find(prompts::kFreeformMarker);
    if (pos == std::string::npos) return FreeformEvaluation{text, true};
    return FreeformEvaluation{text.substr(pos), false};
}

}  // namespace nlrl
