#include "nlrl/aggregator.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace nlrl {

namespace {

constexpr const char* kNone = "None";
constexpr const char* kEntrySeparator = "; ";
constexpr const char* kGoalSuffix = ", this is the goal";
constexpr const char* kTerminalSuffix = ", this is the terminal state";
constexpr const char* kHoleSuffix = " (hole)";
constexpr const char* kDistancePrefix = ", distance is ";

bool is_none(const std::string& s) { return s.empty() || s == kNone; }

bool ends_with(const std::string& text, const std::string& suffix) {
    return text.size() >= suffix.size() &&
           text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> split_entries(const std::string& field) {
    std::vector<std::string> out;
    if (is_none(field)) return out;
    size_t pos = 0;
    const std::string sep = kEntrySeparator;
    while (pos <= field.size()) {
        size_t next = field.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(field.substr(pos));
            break;
        }
        out.push_back(field.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

std::string join_entries(const std::set<std::string>& entries) {
    if (entries.empty()) return kNone;
    std::string out;
    for (const std::string& e : entries) {
        if (!out.empty()) out += kEntrySeparator;
        out += e;
    }
    return out;
}

// Strips a trailing ", distance is N" annotation if present.
std::string strip_distance(const std::string& entry) {
    size_t pos = entry.rfind(kDistancePrefix);
    if (pos == std::string::npos) return entry;
    size_t digits_from = pos + std::string(kDistancePrefix).size();
    if (digits_from >= entry.size()) return entry;
    for (size_t i = digits_from; i < entry.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(entry[i]))) return entry;
    }
    return entry.substr(0, pos);
}

std::string risk_entry_with_distance(const std::string& path) {
    auto parsed = parse_concept_path(path);
    if (!parsed) return path;
    return path + kDistancePrefix + std::to_string(parsed->moves());
}

// Risk entries keyed by their failure endpoint: one shortest route per hole
// keeps the fields bounded and lets tables reach a fixed point.
class RiskSet {
public:
    void add(const std::string& entry) {
        auto parsed = parse_concept_path(entry);
        std::string endpoint = parsed && !parsed->states.empty() ? parsed->states.back() : entry;
        int moves = parsed ? parsed->moves() : 0;
        auto it = entries_.find(endpoint);
        if (it == entries_.end() || moves < it->second.first ||
            (moves == it->second.first && entry < it->second.second)) {
            entries_[endpoint] = {moves, entry};
        }
    }
    void add_field(const std::string& field) {
        for (const std::string& entry : split_entries(field)) add(entry);
    }
    std::vector<std::string> endpoints() const {
        std::vector<std::string> out;
        for (const auto& [endpoint, entry] : entries_) out.push_back(endpoint);
        return out;
    }
    // Entries ordered by (route length, text) for a canonical rendering.
    std::string render() const {
        std::vector<std::pair<int, std::string>> ordered;
        for (const auto& [endpoint, entry] : entries_) ordered.push_back(entry);
        std::sort(ordered.begin(), ordered.end());
        std::string out;
        for (const auto& [moves, entry] : ordered) {
            if (!out.empty()) out += kEntrySeparator;
            out += entry;
        }
        return out.empty() ? kNone : out;
    }
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, std::pair<int, std::string>> entries_;
};

// Important states derived from the document's own content: terminals the
// step revealed, the plan's endpoint, and the failure endpoints of the risks.
void add_path_endpoint(std::set<std::string>& important, const std::string& path) {
    auto parsed = parse_concept_path(path);
    if (!parsed || parsed->states.empty()) return;
    if (parsed->ends_at_goal) {
        important.insert(parsed->states.back() +
                         (parsed->grid_terminal ? " (terminal)" : " (goal)"));
    } else if (parsed->ends_at_hole) {
        important.insert(parsed->states.back() + " (hole)");
    }
}

}  // namespace

std::optional<ParsedPath> parse_concept_path(const std::string& path_text) {
    if (is_none(path_text)) return std::nullopt;
    std::string text = strip_distance(path_text);
    ParsedPath parsed;
    if (ends_with(text, kGoalSuffix)) {
        parsed.ends_at_goal = true;
        text = text.substr(0, text.size() - std::string(kGoalSuffix).size());
    } else if (ends_with(text, kTerminalSuffix)) {
        parsed.ends_at_goal = true;
        parsed.grid_terminal = true;
        text = text.substr(0, text.size() - std::string(kTerminalSuffix).size());
    } else if (ends_with(text, kHoleSuffix)) {
        parsed.ends_at_hole = true;
        text = text.substr(0, text.size() - std::string(kHoleSuffix).size());
    }
    std::vector<std::string> tokens;
    size_t pos = 0;
    const std::string arrow = " -> ";
    while (pos <= text.size()) {
        size_t next = text.find(arrow, pos);
        if (next == std::string::npos) {
            tokens.push_back(text.substr(pos));
            break;
        }
        tokens.push_back(text.substr(pos, next - pos));
        pos = next + arrow.size();
    }
    // A path is at least one move: state -> action -> state.
    if (tokens.size() < 3 || tokens.size() % 2 == 0) return std::nullopt;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].empty()) return std::nullopt;
        if (i % 2 == 0) {
            parsed.states.push_back(tokens[i]);
        } else {
            parsed.actions.push_back(tokens[i]);
        }
    }
    return parsed;
}

ConceptScore score_concepts(const ConceptEvaluation& c) {
    ConceptScore score;
    std::optional<ParsedPath> path = parse_concept_path(c.safest_path);
    if (path) score.path_length = path->moves();
    if (!is_none(c.immediate_risk)) {
        score.rank = ConceptScore::immediate_risk;
        return score;
    }
    if (!is_none(c.safest_path)) {
        if (!path) {
            score.rank = ConceptScore::unknown;
            score.warning = true;
            return score;
        }
        if (path->ends_at_goal) {
            score.rank = ConceptScore::reaches_goal;
        } else if (path->ends_at_hole) {
            score.rank = ConceptScore::future_risk;
        } else {
            score.rank = ConceptScore::safe_progress;
        }
        return score;
    }
    score.rank = is_none(c.future_risk) ? ConceptScore::unknown : ConceptScore::future_risk;
    return score;
}

namespace {

std::string rank_label(ConceptScore::Rank rank) {
    switch (rank) {
        case ConceptScore::immediate_risk: return "immediate risk";
        case ConceptScore::future_risk: return "future risk";
        case ConceptScore::unknown: return "unknown";
        case ConceptScore::safe_progress: return "safe progress";
        case ConceptScore::reaches_goal: return "reaches goal";
    }
    return "unknown";
}

std::string render_final(const ConceptEvaluation& joined, ConceptScore::Rank best_rank,
                         const std::vector<std::string>& best_paths) {
    switch (best_rank) {
        case ConceptScore::reaches_goal: {
            if (best_paths.empty()) {
                return "A route to the goal was reported but it crosses known risk, so no safe "
                       "path is recorded.";
            }
            auto parsed = parse_concept_path(best_paths.front());
            int moves = parsed ? parsed->moves() : 0;
            std::string steps = std::to_string(moves) + (moves == 1 ? " step" : " steps");
            if (best_paths.size() == 1) {
                return "A safe route reaches the goal in " + steps + ": " + best_paths.front();
            }
            std::string out = "There are " + std::to_string(best_paths.size()) +
                              " equally short safe routes to the goal (" + steps + " each): ";
            for (size_t i = 0; i < best_paths.size(); ++i) {
                if (i > 0) out += " | ";
                out += best_paths[i];
            }
            return out;
        }
        case ConceptScore::immediate_risk:
            return "This choice can fail in one step: " + split_entries(joined.immediate_risk).front();
        case ConceptScore::future_risk: {
            std::string detail = is_none(joined.future_risk)
                                     ? joined.immediate_risk
                                     : split_entries(joined.future_risk).front();
            return "No safe route to the goal is known; recorded risk: " + detail;
        }
        case ConceptScore::safe_progress:
            return "No terminal state reached along the safest known path: " + joined.safest_path;
        case ConceptScore::unknown:
            return "No evaluation information is available beyond this step.";
    }
    return "No evaluation information is available beyond this step.";
}

}  // namespace

ConceptEvaluation concept_fuse(const OneStepOutcome& outcome) {
    ConceptEvaluation c;
    std::set<std::string> important;
    const std::string prefix = outcome.state_name + " -> " + outcome.action_name + " -> ";

    // Risks and revealed states come from every outcome; the safest path is a
    // plan, so it only extends through the action's intended target (a slip
    // that happened to land well is not a route the player can choose).
    if (outcome.next_terminal) {
        if (outcome.next_label == "hole") {
            std::string hole_path = prefix + outcome.next_name + kHoleSuffix;
            c.immediate_risk = hole_path + kDistancePrefix + "1";
            important.insert(outcome.next_name + " (hole)");
            if (outcome.intended) c.safest_path = hole_path;
        } else {
            const bool lake_goal = outcome.next_label == "goal";
            important.insert(outcome.next_name + (lake_goal ? " (goal)" : " (terminal)"));
            if (outcome.intended) {
                c.safest_path =
                    prefix + outcome.next_name + (lake_goal ? kGoalSuffix : kTerminalSuffix);
            }
        }
    } else if (outcome.next_value.is_initial()) {
        // Nothing to propagate: forward-looking fields stay None.
    } else if (outcome.next_value.kind == LanguageValue::Kind::concepts) {
        const ConceptEvaluation& succ = outcome.next_value.concepts;
        if (outcome.intended && !is_none(succ.safest_path)) {
            // Only goal-terminated successor paths extend into a plan; a
            // recorded failure continuation already flows through the risks.
            auto parsed = parse_concept_path(succ.safest_path);
            if (parsed && parsed->ends_at_goal) c.safest_path = prefix + succ.safest_path;
        }
        RiskSet future;
        for (const std::string& field : {succ.immediate_risk, succ.future_risk}) {
            for (const std::string& entry : split_entries(field)) {
                future.add(risk_entry_with_distance(prefix + strip_distance(entry)));
            }
        }
        if (!future.empty()) c.future_risk = future.render();
    } else {
        throw ModeMismatchError("deterministic fuse received a free-text successor value at " +
                                outcome.state_name);
    }

    // Important states cover what this step revealed: terminals reached
    // directly plus the failure endpoints of the recorded risks. Path
    // endpoints are added at join time from the minimal plans, which keeps
    // the field stable once routes stop changing.
    for (const std::string& field : {c.immediate_risk, c.future_risk}) {
        for (const std::string& entry : split_entries(field)) {
            add_path_endpoint(important, entry);
        }
    }
    c.important_states = join_entries(important);
    ConceptScore score = score_concepts(c);
    std::vector<std::string> paths;
    if (score.rank == ConceptScore::reaches_goal) paths.push_back(c.safest_path);
    c.final_evaluation = render_final(c, score.rank, paths);
    return c;
}

ConceptEvaluation concept_join(const std::string& state_name,
                               const std::vector<FusedItem>& items) {
    if (items.empty()) throw UsageError("concept_join: empty item list at " + state_name);

    ConceptEvaluation joined;
    std::set<std::string> important;
    RiskSet immediate;
    RiskSet future;
    for (const FusedItem& item : items) {
        for (const std::string& e : split_entries(item.eval.important_states)) important.insert(e);
        immediate.add_field(item.eval.immediate_risk);
        future.add_field(item.eval.future_risk);
    }
    joined.immediate_risk = immediate.empty() ? kNone : immediate.render();
    joined.future_risk = future.empty() ? kNone : future.render();

    // States known to be holes: tagged important entries plus risk-path ends.
    std::set<std::string> holes;
    for (const std::string& e : important) {
        if (ends_with(e, kHoleSuffix))
            holes.insert(e.substr(0, e.size() - std::string(kHoleSuffix).size()));
    }
    for (const std::string& e : immediate.endpoints()) holes.insert(e);
    for (const std::string& e : future.endpoints()) holes.insert(e);

    // Minimum-length goal-terminated path whose every step avoids known holes;
    // the first minimal item wins, which fixes ties by input (action) order.
    // When no goal plan survives but the position carries immediate risk, the
    // shortest recorded failure path stands in as the best-known continuation.
    struct Candidate {
        int moves;
        std::string text;
    };
    std::vector<Candidate> candidates;
    std::vector<Candidate> failure_paths;
    for (const FusedItem& item : items) {
        if (is_none(item.eval.safest_path)) continue;
        auto parsed = parse_concept_path(item.eval.safest_path);
        if (!parsed) continue;
        if (parsed->ends_at_hole) {
            failure_paths.push_back({parsed->moves(), item.eval.safest_path});
            continue;
        }
        if (!parsed->ends_at_goal) continue;
        bool crosses_hole = false;
        for (const std::string& st : parsed->states) {
            if (holes.count(st)) {
                crosses_hole = true;
                break;
            }
        }
        if (crosses_hole) continue;
        candidates.push_back({parsed->moves(), item.eval.safest_path});
    }
    int best_moves = std::numeric_limits<int>::max();
    for (const Candidate& cand : candidates) best_moves = std::min(best_moves, cand.moves);
    std::vector<std::string> best_paths;
    for (const Candidate& cand : candidates) {
        if (cand.moves == best_moves && std::find(best_paths.begin(), best_paths.end(),
                                                  cand.text) == best_paths.end()) {
            best_paths.push_back(cand.text);
        }
    }
    if (best_paths.empty() && !is_none(joined.immediate_risk)) {
        const Candidate* shortest = nullptr;
        for (const Candidate& cand : failure_paths) {
            if (!shortest || cand.moves < shortest->moves) shortest = &cand;
        }
        if (shortest) {
            joined.safest_path = shortest->text;
        } else {
            joined.safest_path = kNone;
        }
    } else {
        joined.safest_path = best_paths.empty() ? kNone : best_paths.front();
    }

    // The minimal plans name the terminals this evaluation actually reaches.
    for (const std::string& path : best_paths) add_path_endpoint(important, path);
    joined.important_states = join_entries(important);

    // The sentence reflects the best item-level score; ties are all recorded.
    ConceptScore best;
    best.rank = ConceptScore::immediate_risk;
    bool first = true;
    for (const FusedItem& item : items) {
        ConceptScore s = score_concepts(item.eval);
        bool better = false;
        if (first) {
            better = true;
        } else if (s.rank != best.rank) {
            better = s.rank > best.rank;
        } else if (s.path_length && best.path_length) {
            better = *s.path_length < *best.path_length;
        } else if (s.path_length && !best.path_length) {
            better = true;
        }
        if (better) best = s;
        first = false;
    }
    joined.final_evaluation = render_final(joined, best.rank, best_paths);
    return joined;
}

ImprovementResult improve_policy_deterministic(
    const std::string& state_name,
    const std::vector<std::pair<std::string, ConceptEvaluation>>& action_values) {
    if (action_values.empty())
        throw UsageError("improve_policy_deterministic: no actions at " + state_name);

    constexpr int kNoPath = std::numeric_limits<int>::max();
    std::vector<ConceptScore> scores;
    scores.reserve(action_values.size());
    for (const auto& [name, eval] : action_values) scores.push_back(score_concepts(eval));

    auto length_of = [&](const ConceptScore& s) { return s.path_length ? *s.path_length : kNoPath; };
    int best_rank = -1;
    int best_len = kNoPath;
    for (const ConceptScore& s : scores) {
        if (static_cast<int>(s.rank) > best_rank ||
            (static_cast<int>(s.rank) == best_rank && length_of(s) < best_len)) {
            best_rank = static_cast<int>(s.rank);
            best_len = length_of(s);
        }
    }

    std::vector<size_t> chosen;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (static_cast<int>(scores[i].rank) == best_rank && length_of(scores[i]) == best_len)
            chosen.push_back(i);
    }

    ImprovementResult result;
    result.dist.assign(action_values.size(), 0.0);
    for (size_t i : chosen) result.dist[i] = 1.0 / static_cast<double>(chosen.size());

    bool all_unknown = std::all_of(scores.begin(), scores.end(), [](const ConceptScore& s) {
        return s.rank == ConceptScore::unknown && !s.path_length;
    });
    std::ostringstream thought;
    thought << "At state " << state_name << ": ";
    for (size_t i = 0; i < action_values.size(); ++i) {
        if (i > 0) thought << "; ";
        thought << action_values[i].first << " is " << rank_label(scores[i].rank);
        if (scores[i].path_length) thought << " with path length " << *scores[i].path_length;
        if (scores[i].warning) thought << " (unparseable path)";
    }
    if (all_unknown) {
        thought << ". Insufficient information to prefer any action; keeping a uniform choice.";
    } else {
        thought << ". Preferred:";
        for (size_t i : chosen) thought << " " << action_values[i].first;
        thought << ".";
    }
    result.thought = thought.str();
    return result;
}

// ── DeterministicAggregator ─────────────────────────────────────────────────

namespace {

std::vector<FusedItem> fuse_all(const std::vector<OneStepOutcome>& outcomes) {
    std::vector<FusedItem> items;
    items.reserve(outcomes.size());
    for (const OneStepOutcome& o : outcomes) {
        items.push_back(FusedItem{o.probability, concept_fuse(o)});
    }
    return items;
}

}  // namespace

LanguageValue DeterministicAggregator::evaluate_state(const std::string& state_name,
                                                      const std::vector<OneStepOutcome>& outcomes) {
    return LanguageValue::from_concepts(concept_join(state_name, fuse_all(outcomes)),
                                        Provenance::td_update, 0);
}

LanguageValue DeterministicAggregator::evaluate_action(const std::string& state_name,
                                                       const std::string& action_name,
                                                       const std::vector<OneStepOutcome>& outcomes) {
    (void)action_name;
    return LanguageValue::from_concepts(concept_join(state_name, fuse_all(outcomes)),
                                        Provenance::td_update, 0);
}

LanguageValue DeterministicAggregator::evaluate_policy_from_actions(
    const std::string& state_name, const std::vector<ActionValueDoc>& action_values) {
    if (action_values.empty())
        throw UsageError("evaluate_policy_from_actions: no actions at " + state_name);
    std::vector<FusedItem> items;
    items.reserve(action_values.size());
    for (const ActionValueDoc& doc : action_values) {
        if (doc.value.kind != LanguageValue::Kind::concepts) {
            if (doc.value.is_initial()) {
                items.push_back(FusedItem{doc.policy_probability, ConceptEvaluation{}});
                continue;
            }
            throw ModeMismatchError("deterministic join received a free-text action value at " +
                                    state_name);
        }
        items.push_back(FusedItem{doc.policy_probability, doc.value.concepts});
    }
    return LanguageValue::from_concepts(concept_join(state_name, items), Provenance::td_update, 0);
}

LanguageValue DeterministicAggregator::evaluate_from_trajectories(
    const std::string& state_name, const std::vector<TrajectoryRecord>& trajectories) {
    if (trajectories.empty())
        throw UsageError("evaluate_from_trajectories: no trajectories at " + state_name);
    std::vector<FusedItem> items;
    const double weight = 1.0 / static_cast<double>(trajectories.size());
    for (const TrajectoryRecord& traj : trajectories) {
        ConceptEvaluation c;
        std::set<std::string> important;
        if (!traj.steps.empty()) {
            std::string path = traj.start_name;
            for (const auto& step : traj.steps) {
                path += " -> " + step.action_name + " -> " + step.next_name;
            }
            const auto& last = traj.steps.back();
            if (last.next_label == "hole") {
                path += kHoleSuffix;
                std::string entry = path + kDistancePrefix + std::to_string(traj.steps.size());
                if (traj.steps.size() == 1) {
                    c.immediate_risk = entry;
                } else {
                    c.future_risk = entry;
                }
                important.insert(last.next_name + " (hole)");
            } else if (last.next_label == "goal" || last.next_label == "terminal") {
                path += last.next_label == "goal" ? kGoalSuffix : kTerminalSuffix;
                c.safest_path = path;
                important.insert(last.next_name +
                                 (last.next_label == "goal" ? " (goal)" : " (terminal)"));
            }
            // Truncated episodes contribute nothing forward-looking.
        }
        c.important_states = join_entries(important);
        ConceptScore score = score_concepts(c);
        std::vector<std::string> paths;
        if (score.rank == ConceptScore::reaches_goal) paths.push_back(c.safest_path);
        c.final_evaluation = render_final(c, score.rank, paths);
        items.push_back(FusedItem{weight, c});
    }
    return LanguageValue::from_concepts(concept_join(state_name, items), Provenance::mc_update, 0);
}

ImprovementResult DeterministicImprover::improve(const std::string& state_name,
                                                 const std::vector<ActionValueDoc>& action_values,
                                                 const TaskInstruction& task) {
    task.validate();
    std::vector<std::pair<std::string, ConceptEvaluation>> pairs;
    pairs.reserve(action_values.size());
    for (const ActionValueDoc& doc : action_values) {
        if (doc.value.kind != LanguageValue::Kind::concepts) {
            if (doc.value.is_initial()) {
                pairs.emplace_back(doc.action_name, ConceptEvaluation{});
                continue;
            }
            throw ModeMismatchError("deterministic improver received a free-text value at " +
                                    state_name);
        }
        pairs.emplace_back(doc.action_name, doc.value.concepts);
    }
    return improve_policy_deterministic(state_name, pairs);
}

}  // namespace nlrl
