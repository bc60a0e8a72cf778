#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nlrl/errors.hpp"

namespace nlrl {

using StateId = int;
using ActionId = int;

/// One weighted branch of a (state, action) transition.
struct Outcome {
    StateId next = 0;
    double probability = 0.0;
    double reward = 0.0;
    bool terminal = false;  // whether `next` is terminal
    bool intended = true;   // whether `next` is the action's intended target
};

/// Finite MDP with explicit outcome lists. Immutable after construction.
///
/// Terminal states are absorbing: every action self-loops with probability 1
/// and zero reward. `labels` carries the environment role of special states
/// ("terminal", "hole", "goal", "start"); plain states have an empty label.
struct TabularMdp {
    double gamma = 1.0;
    std::vector<bool> terminal;
    std::vector<std::string> labels;
    std::vector<std::string> action_names;             // global action menu
    std::vector<std::vector<ActionId>> actions;        // legal actions per state
    std::vector<std::vector<std::vector<Outcome>>> outcomes;  // [s][action index]
    std::vector<StateId> start_states;

    int state_count() const { return static_cast<int>(terminal.size()); }
    bool is_terminal(StateId s) const;
    int action_index(StateId s, ActionId a) const;  // -1 when a is not legal at s
    const std::string& action_name(ActionId a) const;

    /// Checks construction invariants; throws ConfigError on violation.
    void validate() const;
};

/// Shortest-path grid with letter-named cells and terminal corners.
struct GridWorldSpec {
    int width = 4;
    int height = 4;
    std::set<std::pair<int, int>> terminal_cells = {{0, 0}, {3, 3}};
    double step_penalty = -1.0;
    /// Row-major single-letter cell names; must be a bijection over cells.
    std::vector<std::string> letters = {"f", "b", "k", "g", "z", "t", "m", "w",
                                        "r", "y", "q", "n", "j", "d", "e", "x"};
    void validate() const;
};

/// Slippery lake grid loaded from S/F/H/G rows.
struct FrozenLakeSpec {
    std::vector<std::string> rows = {"SFFF", "FHFH", "FFFH", "HFFG"};
    double p_forward = 1.0 / 3.0;
    double p_perpendicular = 1.0 / 3.0;  // each side
    double goal_reward = 1.0;
    double gamma = 1.0;
    int step_limit = 200;
    void validate() const;
};

/// Per-state action distribution, index-aligned with TabularMdp::actions.
struct PolicyTable {
    std::vector<std::vector<double>> dist;

    static PolicyTable uniform(const TabularMdp& mdp);
    void validate(const TabularMdp& mdp) const;
    double probability(const TabularMdp& mdp, StateId s, ActionId a) const;
};

/// Scalar value table; terminal states hold 0 by the episodic convention.
struct NumericValueTable {
    std::vector<double> values;
    double at(StateId s) const { return values.at(static_cast<size_t>(s)); }
};

/// Policy quality summary used for the per-iteration experiment rows.
struct MetricsReport {
    std::vector<double> per_state_value;
    double average_value = 0.0;             // mean over non-terminal states
    double average_value_all_states = 0.0;  // supplementary, terminals included
    int iteration_index = 0;
    std::vector<std::string> warnings;
};

/// One sampled episode: (state, action, reward) steps plus termination flag.
struct TrajectorySample {
    struct Step {
        StateId state;
        ActionId action;
        double reward;
        StateId next;
    };
    std::vector<Step> steps;
    bool terminated = false;
};

// Canonical action order shared by both environments.
inline constexpr ActionId kActionUp = 0;
inline constexpr ActionId kActionLeft = 1;
inline constexpr ActionId kActionDown = 2;
inline constexpr ActionId kActionRight = 3;

TabularMdp build_gridworld(const GridWorldSpec& spec);
TabularMdp build_frozenlake(const FrozenLakeSpec& spec);

/// Exhaustive outcome list for a non-terminal state and legal action.
std::vector<Outcome> enumerate_outcomes(const TabularMdp& mdp, StateId s, ActionId a);

/// Seeded episode rollout; identical seed implies identical trajectory.
TrajectorySample sample_trajectory(const TabularMdp& mdp, const PolicyTable& policy,
                                   StateId s0, std::uint64_t seed, int max_len);

/// Iterative solve of the one-step expectation fixed point; the returned
/// table's Bellman residual sup-norm is below `tol`.
NumericValueTable exact_policy_evaluation(const TabularMdp& mdp, const PolicyTable& policy,
                                          double tol);

struct ValueIterationResult {
    NumericValueTable values;
    PolicyTable greedy;  // uniform mass over argmax ties
};

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol);

MetricsReport policy_value_metrics(const TabularMdp& mdp, const PolicyTable& policy);

}  // namespace nlrl
