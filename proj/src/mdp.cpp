#include "nlrl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace nlrl {

namespace {

constexpr long kDpSweepCap = 100000;
constexpr double kProbTol = 1e-12;

struct GridGeometry {
    int width;
    int height;
    StateId id(int r, int c) const { return r * width + c; }
    bool inside(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
};

// Displacements in canonical action order: up, left, down, right.
constexpr int kDr[4] = {-1, 0, 1, 0};
constexpr int kDc[4] = {0, -1, 0, 1};

// Perpendicular action pairs for the slip model.
constexpr ActionId kPerp[4][2] = {{kActionLeft, kActionRight},
                                  {kActionUp, kActionDown},
                                  {kActionLeft, kActionRight},
                                  {kActionUp, kActionDown}};

StateId move_or_stay(const GridGeometry& g, int r, int c, ActionId a) {
    int nr = r + kDr[a];
    int nc = c + kDc[a];
    if (!g.inside(nr, nc)) return g.id(r, c);
    return g.id(nr, nc);
}

void make_absorbing(TabularMdp& mdp, StateId s) {
    mdp.actions[s] = {kActionUp, kActionLeft, kActionDown, kActionRight};
    mdp.outcomes[s].assign(4, {Outcome{s, 1.0, 0.0, true, true}});
}

// Merges duplicate next states so each (s, a) outcome list has unique entries.
// A merged entry counts as intended when any of its pieces was.
std::vector<Outcome> merge_outcomes(const std::vector<Outcome>& raw) {
    std::vector<Outcome> merged;
    for (const Outcome& o : raw) {
        auto it = std::find_if(merged.begin(), merged.end(), [&](const Outcome& m) {
            return m.next == o.next && m.reward == o.reward;
        });
        if (it != merged.end()) {
            it->probability += o.probability;
            it->intended = it->intended || o.intended;
        } else {
            merged.push_back(o);
        }
    }
    return merged;
}

}  // namespace

bool TabularMdp::is_terminal(StateId s) const {
    if (s < 0 || s >= state_count()) throw UsageError("state id out of range");
    return terminal[static_cast<size_t>(s)];
}

int TabularMdp::action_index(StateId s, ActionId a) const {
    const auto& list = actions.at(static_cast<size_t>(s));
    auto it = std::find(list.begin(), list.end(), a);
    if (it == list.end()) return -1;
    return static_cast<int>(it - list.begin());
}

const std::string& TabularMdp::action_name(ActionId a) const {
    return action_names.at(static_cast<size_t>(a));
}

void TabularMdp::validate() const {
    const int n = state_count();
    if (static_cast<int>(labels.size()) != n || static_cast<int>(actions.size()) != n ||
        static_cast<int>(outcomes.size()) != n) {
        throw ConfigError("mdp arrays disagree on state count");
    }
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma outside [0, 1]");
    for (StateId s = 0; s < n; ++s) {
        if (actions[s].size() != outcomes[s].size())
            throw ConfigError("action/outcome lists disagree");
        for (size_t ai = 0; ai < actions[s].size(); ++ai) {
            double total = 0.0;
            for (const Outcome& o : outcomes[s][ai]) {
                if (o.next < 0 || o.next >= n) throw ConfigError("outcome next state out of range");
                if (o.probability <= 0.0) throw ConfigError("non-positive outcome probability");
                if (o.terminal != terminal[static_cast<size_t>(o.next)])
                    throw ConfigError("outcome terminal flag disagrees with state set");
                total += o.probability;
            }
            if (std::abs(total - 1.0) > kProbTol)
                throw ConfigError("outcome probabilities do not sum to 1");
            if (terminal[static_cast<size_t>(s)]) {
                if (outcomes[s][ai].size() != 1 || outcomes[s][ai][0].next != s ||
                    outcomes[s][ai][0].reward != 0.0) {
                    throw ConfigError("terminal state is not absorbing with zero reward");
                }
            }
        }
    }
    for (StateId s : start_states) {
        if (s < 0 || s >= n) throw ConfigError("start state out of range");
    }
}

void GridWorldSpec::validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("grid dimensions must be positive");
    if (step_penalty >= 0.0) throw ConfigError("step_penalty must be negative");
    const size_t cells = static_cast<size_t>(width) * static_cast<size_t>(height);
    if (letters.size() != cells) throw ConfigError("letter list does not cover the grid");
    std::set<std::string> seen(letters.begin(), letters.end());
    if (seen.size() != cells) throw ConfigError("letter names are not a bijection");
    for (const std::string& l : letters) {
        if (l.empty()) throw ConfigError("empty cell name");
    }
    for (const auto& [r, c] : terminal_cells) {
        if (r < 0 || r >= height || c < 0 || c >= width)
            throw ConfigError("terminal cell outside the grid");
    }
}

void FrozenLakeSpec::validate() const {
    if (rows.empty()) throw ConfigError("empty lake map");
    const size_t w = rows.front().size();
    if (w == 0) throw ConfigError("empty lake map row");
    int starts = 0;
    int goals = 0;
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != w)
            throw ConfigError("lake map row " + std::to_string(r) + " has inconsistent width");
        for (char ch : rows[r]) {
            switch (ch) {
                case 'S': ++starts; break;
                case 'G': ++goals; break;
                case 'F':
                case 'H': break;
                default:
                    throw ConfigError(std::string("lake map row ") + std::to_string(r) +
                                      " has invalid tile '" + ch + "'");
            }
        }
    }
    if (starts != 1) throw ConfigError("lake map must contain exactly one S tile");
    if (goals < 1) throw ConfigError("lake map must contain at least one G tile");
    if (std::abs(p_forward + 2.0 * p_perpendicular - 1.0) > kProbTol)
        throw ConfigError("slip probabilities must sum to 1");
    if (p_forward <= 0.0 || p_perpendicular < 0.0)
        throw ConfigError("slip probabilities must be positive");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma outside [0, 1]");
    if (step_limit < 1) throw ConfigError("step_limit must be at least 1");
}

PolicyTable PolicyTable::uniform(const TabularMdp& mdp) {
    PolicyTable p;
    p.dist.resize(static_cast<size_t>(mdp.state_count()));
    for (StateId s = 0; s < mdp.state_count(); ++s) {
        const size_t na = mdp.actions[static_cast<size_t>(s)].size();
        if (mdp.is_terminal(s) || na == 0) continue;
        p.dist[static_cast<size_t>(s)].assign(na, 1.0 / static_cast<double>(na));
    }
    return p;
}

void PolicyTable::validate(const TabularMdp& mdp) const {
    if (dist.size() != static_cast<size_t>(mdp.state_count()))
        throw UsageError("policy table size mismatch");
    for (StateId s = 0; s < mdp.state_count(); ++s) {
        if (mdp.is_terminal(s)) continue;
        const auto& d = dist[static_cast<size_t>(s)];
        if (d.size() != mdp.actions[static_cast<size_t>(s)].size())
            throw UsageError("policy missing actions at state " + std::to_string(s));
        double total = 0.0;
        for (double v : d) {
            if (v < 0.0) throw UsageError("negative policy probability");
            total += v;
        }
        if (std::abs(total - 1.0) > kProbTol)
            throw UsageError("policy distribution off the simplex at state " + std::to_string(s));
    }
}

double PolicyTable::probability(const TabularMdp& mdp, StateId s, ActionId a) const {
    int ai = mdp.action_index(s, a);
    if (ai < 0) throw UsageError("action not legal at state");
    const auto& d = dist.at(static_cast<size_t>(s));
    if (d.empty()) return 0.0;
    return d[static_cast<size_t>(ai)];
}

TabularMdp build_gridworld(const GridWorldSpec& spec) {
    spec.validate();
    GridGeometry g{spec.width, spec.height};
    const int n = spec.width * spec.height;

    TabularMdp mdp;
    mdp.gamma = 1.0;
    mdp.terminal.assign(static_cast<size_t>(n), false);
    mdp.labels.assign(static_cast<size_t>(n), "");
    mdp.action_names = {"Go Up", "Move Left", "Go Down", "Move Right"};
    mdp.actions.resize(static_cast<size_t>(n));
    mdp.outcomes.resize(static_cast<size_t>(n));
    for (const auto& [r, c] : spec.terminal_cells) {
        mdp.terminal[static_cast<size_t>(g.id(r, c))] = true;
        mdp.labels[static_cast<size_t>(g.id(r, c))] = "terminal";
    }

    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            StateId s = g.id(r, c);
            if (mdp.terminal[static_cast<size_t>(s)]) {
                make_absorbing(mdp, s);
                continue;
            }
            mdp.actions[static_cast<size_t>(s)] = {kActionUp, kActionLeft, kActionDown,
                                                   kActionRight};
            for (ActionId a = 0; a < 4; ++a) {
                StateId next = move_or_stay(g, r, c, a);
                bool term = mdp.terminal[static_cast<size_t>(next)];
                mdp.outcomes[static_cast<size_t>(s)].push_back(
                    {Outcome{next, 1.0, spec.step_penalty, term, true}});
            }
        }
    }
    for (int s = 0; s < n; ++s) {
        if (!mdp.terminal[static_cast<size_t>(s)]) mdp.start_states.push_back(s);
    }
    mdp.validate();
    return mdp;
}

TabularMdp build_frozenlake(const FrozenLakeSpec& spec) {
    spec.validate();
    const int height = static_cast<int>(spec.rows.size());
    const int width = static_cast<int>(spec.rows.front().size());
    GridGeometry g{width, height};
    const int n = width * height;

    TabularMdp mdp;
    mdp.gamma = spec.gamma;
    mdp.terminal.assign(static_cast<size_t>(n), false);
    mdp.labels.assign(static_cast<size_t>(n), "");
    mdp.action_names = {"Move up", "Move left", "Move down", "Move right"};
    mdp.actions.resize(static_cast<size_t>(n));
    mdp.outcomes.resize(static_cast<size_t>(n));

    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            StateId s = g.id(r, c);
            char tile = spec.rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
            if (tile == 'H') {
                mdp.terminal[static_cast<size_t>(s)] = true;
                mdp.labels[static_cast<size_t>(s)] = "hole";
            } else if (tile == 'G') {
                mdp.terminal[static_cast<size_t>(s)] = true;
                mdp.labels[static_cast<size_t>(s)] = "goal";
            } else if (tile == 'S') {
                mdp.labels[static_cast<size_t>(s)] = "start";
                mdp.start_states.push_back(s);
            }
        }
    }

    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            StateId s = g.id(r, c);
            if (mdp.terminal[static_cast<size_t>(s)]) {
                make_absorbing(mdp, s);
                continue;
            }
            mdp.actions[static_cast<size_t>(s)] = {kActionUp, kActionLeft, kActionDown,
                                                   kActionRight};
            for (ActionId a = 0; a < 4; ++a) {
                std::vector<Outcome> raw;
                auto add = [&](ActionId dir, double p, bool intended) {
                    if (p <= 0.0) return;
                    StateId next = move_or_stay(g, r, c, dir);
                    bool term = mdp.terminal[static_cast<size_t>(next)];
                    double reward =
                        mdp.labels[static_cast<size_t>(next)] == "goal" ? spec.goal_reward : 0.0;
                    raw.push_back(Outcome{next, p, reward, term, intended});
                };
                add(a, spec.p_forward, true);
                add(kPerp[a][0], spec.p_perpendicular, false);
                add(kPerp[a][1], spec.p_perpendicular, false);
                mdp.outcomes[static_cast<size_t>(s)].push_back(merge_outcomes(raw));
            }
        }
    }
    mdp.validate();
    return mdp;
}

std::vector<Outcome> enumerate_outcomes(const TabularMdp& mdp, StateId s, ActionId a) {
    if (mdp.is_terminal(s)) throw UsageError("enumerate_outcomes: state is terminal");
    int ai = mdp.action_index(s, a);
    if (ai < 0) throw UsageError("enumerate_outcomes: action not legal at state");
    return mdp.outcomes[static_cast<size_t>(s)][static_cast<size_t>(ai)];
}

TrajectorySample sample_trajectory(const TabularMdp& mdp, const PolicyTable& policy, StateId s0,
                                   std::uint64_t seed, int max_len) {
    if (s0 < 0 || s0 >= mdp.state_count()) throw UsageError("sample_trajectory: bad start state");
    if (max_len < 1) throw UsageError("sample_trajectory: max_len must be at least 1");
    TrajectorySample traj;
    if (mdp.is_terminal(s0)) {
        traj.terminated = true;
        return traj;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    StateId s = s0;
    for (int step = 0; step < max_len; ++step) {
        const auto& acts = mdp.actions[static_cast<size_t>(s)];
        const auto& d = policy.dist.at(static_cast<size_t>(s));
        double u = unit(rng);
        size_t ai = 0;
        double acc = 0.0;
        for (size_t i = 0; i < d.size(); ++i) {
            if (d[i] == 0.0) continue;
            ai = i;
            acc += d[i];
            if (u <= acc) break;
        }
        const auto& outs = mdp.outcomes[static_cast<size_t>(s)][ai];
        double v = unit(rng);
        const Outcome* chosen = &outs.back();
        acc = 0.0;
        for (const Outcome& o : outs) {
            acc += o.probability;
            if (v <= acc) {
                chosen = &o;
                break;
            }
        }
        traj.steps.push_back({s, acts[ai], chosen->reward, chosen->next});
        s = chosen->next;
        if (chosen->terminal) {
            traj.terminated = true;
            break;
        }
    }
    return traj;
}

namespace {

// One synchronous expectation sweep; returns the sup-norm change.
double expectation_sweep(const TabularMdp& mdp, const PolicyTable& policy,
                         std::vector<double>& values) {
    double delta = 0.0;
    std::vector<double> next(values.size(), 0.0);
    for (StateId s = 0; s < mdp.state_count(); ++s) {
        if (mdp.is_terminal(s)) continue;
        const auto& d = policy.dist[static_cast<size_t>(s)];
        double v = 0.0;
        for (size_t ai = 0; ai < d.size(); ++ai) {
            if (d[ai] == 0.0) continue;
            double q = 0.0;
            for (const Outcome& o : mdp.outcomes[static_cast<size_t>(s)][ai]) {
                q += o.probability *
                     (o.reward + (o.terminal ? 0.0 : mdp.gamma * values[static_cast<size_t>(o.next)]));
            }
            v += d[ai] * q;
        }
        next[static_cast<size_t>(s)] = v;
        delta = std::max(delta, std::abs(v - values[static_cast<size_t>(s)]));
    }
    values.swap(next);
    return delta;
}

}  // namespace

NumericValueTable exact_policy_evaluation(const TabularMdp& mdp, const PolicyTable& policy,
                                          double tol) {
    if (tol <= 0.0) throw UsageError("exact_policy_evaluation: tol must be positive");
    policy.validate(mdp);
    std::vector<double> values(static_cast<size_t>(mdp.state_count()), 0.0);
    for (long sweep = 0; sweep < kDpSweepCap; ++sweep) {
        std::vector<double> prev = values;
        double delta = expectation_sweep(mdp, policy, values);
        if (delta < tol) {
            // `prev` has Bellman residual `delta` < tol; return it.
            return NumericValueTable{std::move(prev)};
        }
    }
    throw DivergenceError("policy evaluation did not converge within " +
                              std::to_string(kDpSweepCap) + " sweeps",
                          kDpSweepCap);
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol) {
    if (tol <= 0.0) throw UsageError("value_iteration: tol must be positive");
    const int n = mdp.state_count();
    std::vector<double> values(static_cast<size_t>(n), 0.0);
    auto q_value = [&](StateId s, size_t ai) {
        double q = 0.0;
        for (const Outcome& o : mdp.outcomes[static_cast<size_t>(s)][ai]) {
            q += o.probability *
                 (o.reward + (o.terminal ? 0.0 : mdp.gamma * values[static_cast<size_t>(o.next)]));
        }
        return q;
    };

    bool converged = false;
    for (long sweep = 0; sweep < kDpSweepCap; ++sweep) {
        double delta = 0.0;
        std::vector<double> next(values.size(), 0.0);
        for (StateId s = 0; s < n; ++s) {
            if (mdp.is_terminal(s)) continue;
            double best = -std::numeric_limits<double>::infinity();
            for (size_t ai = 0; ai < mdp.actions[static_cast<size_t>(s)].size(); ++ai) {
                best = std::max(best, q_value(s, ai));
            }
            if (mdp.actions[static_cast<size_t>(s)].empty()) best = 0.0;
            next[static_cast<size_t>(s)] = best;
            delta = std::max(delta, std::abs(best - values[static_cast<size_t>(s)]));
        }
        values.swap(next);
        if (delta < tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw DivergenceError("value iteration did not converge within " +
                                  std::to_string(kDpSweepCap) + " sweeps",
                              kDpSweepCap);

    // Greedy extraction with uniform mass over argmax ties.
    constexpr double kTieTol = 1e-9;
    PolicyTable greedy;
    greedy.dist.resize(static_cast<size_t>(n));
    for (StateId s = 0; s < n; ++s) {
        if (mdp.is_terminal(s)) continue;
        const size_t na = mdp.actions[static_cast<size_t>(s)].size();
        std::vector<double> qs(na);
        double best = -std::numeric_limits<double>::infinity();
        for (size_t ai = 0; ai < na; ++ai) {
            qs[ai] = q_value(s, ai);
            best = std::max(best, qs[ai]);
        }
        std::vector<double> d(na, 0.0);
        int ties = 0;
        for (size_t ai = 0; ai < na; ++ai) {
            if (qs[ai] >= best - kTieTol) ++ties;
        }
        for (size_t ai = 0; ai < na; ++ai) {
            if (qs[ai] >= best - kTieTol) d[ai] = 1.0 / ties;
        }
        greedy.dist[static_cast<size_t>(s)] = std::move(d);
    }
    return ValueIterationResult{NumericValueTable{std::move(values)}, std::move(greedy)};
}

MetricsReport policy_value_metrics(const TabularMdp& mdp, const PolicyTable& policy) {
    NumericValueTable table = exact_policy_evaluation(mdp, policy, 1e-10);
    MetricsReport report;
    report.per_state_value = table.values;
    double sum = 0.0;
    int count = 0;
    for (StateId s = 0; s < mdp.state_count(); ++s) {
        if (mdp.is_terminal(s)) continue;
        sum += table.at(s);
        ++count;
    }
    if (count == 0) {
        report.average_value = 0.0;
        report.warnings.push_back("no non-terminal states; average defined as 0");
    } else {
        report.average_value = sum / count;
    }
    report.average_value_all_states =
        mdp.state_count() == 0 ? 0.0 : sum / static_cast<double>(mdp.state_count());
    return report;
}

}  // namespace nlrl
