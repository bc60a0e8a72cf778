#include "nlrl/language.hpp"

#include <algorithm>

#include "nlrl/aggregator.hpp"

namespace nlrl {

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::initial: return "initial";
        case Provenance::terminal: return "terminal";
        case Provenance::td_update: return "td_update";
        case Provenance::mc_update: return "mc_update";
    }
    return "initial";
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "terminal") return Provenance::terminal;
    if (name == "td_update") return Provenance::td_update;
    if (name == "mc_update") return Provenance::mc_update;
    if (name == "initial") return Provenance::initial;
    throw ConfigError("unknown provenance: " + name);
}

LanguageValue LanguageValue::initial_value() {
    LanguageValue v;
    v.kind = Kind::free_text;
    v.text = kNoEvaluation;
    v.provenance = Provenance::initial;
    v.iteration = 0;
    return v;
}

LanguageValue LanguageValue::terminal_value(const std::string& label) {
    LanguageValue v;
    v.kind = Kind::free_text;
    if (label == "hole") {
        v.text = prompts::kHoleStateDescription;
    } else if (label == "goal") {
        v.text = prompts::kGoalStateDescription;
    } else {
        v.text = prompts::kTerminalStateDescription;
    }
    v.provenance = Provenance::terminal;
    v.iteration = 0;
    return v;
}

LanguageValue LanguageValue::from_concepts(ConceptEvaluation c, Provenance p, int iteration) {
    LanguageValue v;
    v.kind = Kind::concepts;
    v.concepts = std::move(c);
    v.provenance = p;
    v.iteration = iteration;
    return v;
}

LanguageValue LanguageValue::from_text(std::string t, Provenance p, int iteration,
                                       bool non_conforming) {
    LanguageValue v;
    v.kind = Kind::free_text;
    v.text = std::move(t);
    v.provenance = p;
    v.iteration = iteration;
    v.non_conforming = non_conforming;
    return v;
}

bool LanguageValue::is_initial() const {
    return provenance == Provenance::initial && kind == Kind::free_text && text == kNoEvaluation;
}

bool LanguageValue::content_equal(const LanguageValue& other) const {
    return kind == other.kind && text == other.text && concepts == other.concepts &&
           non_conforming == other.non_conforming;
}

std::string LanguageValue::display_text() const {
    if (kind == Kind::concepts) return serialize_concepts(concepts);
    return text;
}

bool LanguageValueTable::content_equal(const LanguageValueTable& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].content_equal(other.entries[i])) return false;
    }
    return true;
}

TableSnapshot snapshot(const LanguageValueTable& table) {
    return std::make_shared<const LanguageValueTable>(table);
}

TableSnapshot snapshot(const TableSnapshot& view) { return view; }

LanguageValueTable init_value_table(const TabularMdp& mdp) {
    LanguageValueTable table;
    table.iteration = 0;
    table.entries.reserve(static_cast<size_t>(mdp.state_count()));
    for (StateId s = 0; s < mdp.state_count(); ++s) {
        if (mdp.is_terminal(s)) {
            table.entries.push_back(
                LanguageValue::terminal_value(mdp.labels[static_cast<size_t>(s)]));
        } else {
            table.entries.push_back(LanguageValue::initial_value());
        }
    }
    return table;
}

namespace {

// All outcomes must read from one previous-iteration snapshot; terminal
// entries keep iteration 0 forever so only non-terminal ones are compared.
int snapshot_iteration(const std::vector<OneStepOutcome>& outcomes) {
    int iter = -1;
    for (const OneStepOutcome& o : outcomes) {
        if (o.next_terminal) continue;
        if (iter == -1) {
            iter = o.next_value.iteration;
        } else if (iter != o.next_value.iteration) {
            throw UsageError("outcome snapshots span multiple iterations");
        }
    }
    return iter < 0 ? 0 : iter;
}

}  // namespace

LanguageValue td_language_estimate(StateId s, const std::vector<OneStepOutcome>& outcomes,
                                   Aggregator& agg) {
    if (outcomes.empty()) throw UsageError("td_language_estimate: no outcomes");
    int snap_iter = snapshot_iteration(outcomes);
    LanguageValue v = agg.evaluate_state(outcomes.front().state_name, outcomes);
    v.provenance = Provenance::td_update;
    v.iteration = snap_iter + 1;
    (void)s;
    return v;
}

LanguageValue mc_language_estimate(StateId s, const std::vector<TrajectoryRecord>& trajectories,
                                   Aggregator& agg) {
    if (trajectories.empty()) throw UsageError("mc_language_estimate: no trajectories");
    for (const TrajectoryRecord& t : trajectories) {
        if (t.start != s) throw UsageError("mc_language_estimate: trajectory start mismatch");
    }
    LanguageValue v = agg.evaluate_from_trajectories(trajectories.front().start_name, trajectories);
    v.provenance = Provenance::mc_update;
    return v;
}

LanguageValue language_q_estimate(StateId s, ActionId a,
                                  const std::vector<OneStepOutcome>& outcomes, Aggregator& agg) {
    if (outcomes.empty()) throw UsageError("language_q_estimate: no outcomes");
    for (const OneStepOutcome& o : outcomes) {
        if (o.action != a) throw UsageError("language_q_estimate: outcome action mismatch");
    }
    int snap_iter = snapshot_iteration(outcomes);
    LanguageValue v =
        agg.evaluate_action(outcomes.front().state_name, outcomes.front().action_name, outcomes);
    v.provenance = Provenance::td_update;
    v.iteration = snap_iter + 1;
    (void)s;
    return v;
}

TrajectoryRecord render_trajectory(const TabularMdp& mdp, const StateLexicon& lexicon,
                                   StateId start, const TrajectorySample& sample) {
    TrajectoryRecord record;
    record.start = start;
    record.start_name = lexicon.name(start);
    record.terminated = sample.terminated;
    for (const TrajectorySample::Step& step : sample.steps) {
        TrajectoryRecord::Step out;
        out.action = step.action;
        out.action_name = mdp.action_name(step.action);
        out.next = step.next;
        out.next_name = lexicon.name(step.next);
        out.next_label = mdp.labels.at(static_cast<size_t>(step.next));
        out.reward = step.reward;
        out.text = render_transition(mdp, lexicon, step.state, step.action, step.reward, step.next);
        record.steps.push_back(std::move(out));
    }
    return record;
}

}  // namespace nlrl
