#pragma once

#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "nlrl/mdp.hpp"
#include "nlrl/textify.hpp"

namespace nlrl {

/// Environment spec parsed from the {"kind": ...} JSON document.
struct EnvSpec {
    std::variant<GridWorldSpec, FrozenLakeSpec> spec;
    std::string kind() const {
        return std::holds_alternative<GridWorldSpec>(spec) ? "gridworld" : "frozenlake";
    }
};

EnvSpec parse_env_spec(const nlohmann::json& j);
nlohmann::json env_spec_to_json(const EnvSpec& spec);

/// Built environment: the MDP, its display-name lexicon, and grid geometry
/// for reports.
struct EnvModel {
    TabularMdp mdp;
    StateLexicon lexicon;
    std::string kind;
    int width = 0;
    int height = 0;
    int step_limit = 200;  // trajectory horizon for sampled estimates
    StateId state_by_name(const std::string& name) const;
};

EnvModel build_env(const EnvSpec& spec);

}  // namespace nlrl
