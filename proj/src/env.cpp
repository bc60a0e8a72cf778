#include "nlrl/env.hpp"

#include <algorithm>

namespace nlrl {

namespace {

GridWorldSpec gridworld_from_json(const nlohmann::json& j) {
    GridWorldSpec spec;
    spec.width = j.value("width", spec.width);
    spec.height = j.value("height", spec.height);
    spec.step_penalty = j.value("step_penalty", spec.step_penalty);
    if (j.contains("terminal_cells")) {
        spec.terminal_cells.clear();
        for (const auto& cell : j.at("terminal_cells")) {
            if (!cell.is_array() || cell.size() != 2)
                throw ConfigError("terminal_cells entries must be [row, col] pairs");
            spec.terminal_cells.insert({cell[0].get<int>(), cell[1].get<int>()});
        }
    }
    if (j.contains("letters")) {
        spec.letters = j.at("letters").get<std::vector<std::string>>();
    } else if (spec.width * spec.height != 16) {
        throw ConfigError("non-default grid sizes require an explicit letter list");
    }
    return spec;
}

FrozenLakeSpec frozenlake_from_json(const nlohmann::json& j) {
    FrozenLakeSpec spec;
    if (j.contains("map")) {
        spec.rows.clear();
        const auto& map = j.at("map");
        if (map.is_string()) {
            // One row per line.
            std::string text = map.get<std::string>();
            std::string row;
            for (char ch : text) {
                if (ch == '\n') {
                    if (!row.empty()) spec.rows.push_back(row);
                    row.clear();
                } else {
                    row += ch;
                }
            }
            if (!row.empty()) spec.rows.push_back(row);
        } else if (map.is_array()) {
            for (const auto& r : map) spec.rows.push_back(r.get<std::string>());
        } else {
            throw ConfigError("frozenlake map must be a string or an array of row strings");
        }
    }
    spec.p_forward = j.value("p_forward", spec.p_forward);
    spec.p_perpendicular = j.value("p_perpendicular", spec.p_perpendicular);
    spec.goal_reward = j.value("goal_reward", spec.goal_reward);
    spec.gamma = j.value("gamma", spec.gamma);
    spec.step_limit = j.value("step_limit", spec.step_limit);
    return spec;
}

}  // namespace

EnvSpec parse_env_spec(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw ConfigError("environment spec must be an object with a \"kind\" field");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gridworld") return EnvSpec{gridworld_from_json(j)};
    if (kind == "frozenlake") return EnvSpec{frozenlake_from_json(j)};
    throw ConfigError("unknown environment kind: " + kind);
}

nlohmann::json env_spec_to_json(const EnvSpec& spec) {
    nlohmann::json j;
    if (const auto* grid = std::get_if<GridWorldSpec>(&spec.spec)) {
        j["kind"] = "gridworld";
        j["width"] = grid->width;
        j["height"] = grid->height;
        j["step_penalty"] = grid->step_penalty;
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& [r, c] : grid->terminal_cells) cells.push_back({r, c});
        j["terminal_cells"] = cells;
        j["letters"] = grid->letters;
    } else {
        const auto& lake = std::get<FrozenLakeSpec>(spec.spec);
        j["kind"] = "frozenlake";
        j["map"] = lake.rows;
        j["p_forward"] = lake.p_forward;
        j["p_perpendicular"] = lake.p_perpendicular;
        j["goal_reward"] = lake.goal_reward;
        j["gamma"] = lake.gamma;
        j["step_limit"] = lake.step_limit;
    }
    return j;
}

EnvModel build_env(const EnvSpec& spec) {
    EnvModel env;
    env.kind = spec.kind();
    if (const auto* grid = std::get_if<GridWorldSpec>(&spec.spec)) {
        env.mdp = build_gridworld(*grid);
        env.lexicon = make_gridworld_lexicon(*grid);
        env.width = grid->width;
        env.height = grid->height;
    } else {
        const auto& lake = std::get<FrozenLakeSpec>(spec.spec);
        env.mdp = build_frozenlake(lake);
        env.lexicon = make_frozenlake_lexicon(lake);
        env.width = static_cast<int>(lake.rows.front().size());
        env.height = static_cast<int>(lake.rows.size());
        env.step_limit = lake.step_limit;
    }
    return env;
}

StateId EnvModel::state_by_name(const std::string& name) const {
    auto it = std::find(lexicon.names.begin(), lexicon.names.end(), name);
    if (it == lexicon.names.end()) throw UsageError("unknown state name: " + name);
    return static_cast<StateId>(it - lexicon.names.begin());
}

}  // namespace nlrl
