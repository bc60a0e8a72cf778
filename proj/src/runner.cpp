#include "nlrl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "nlrl/llm_aggregator.hpp"

namespace nlrl {

namespace {

// Seed mixer for per-(iteration, state, draw) sampling streams.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t x = base ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xbf58476d1ce4e5b9ULL) ^
                      (c * 0x94d049bb133111ebULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

OneStepOutcome make_outcome(const EnvModel& env, const TableSnapshot& snap, StateId s, ActionId a,
                            const Outcome& o, double probability) {
    OneStepOutcome out;
    out.action = a;
    out.action_name = env.mdp.action_name(a);
    out.reward = o.reward;
    out.next = o.next;
    out.next_name = env.lexicon.name(o.next);
    out.next_label = env.mdp.labels.at(static_cast<size_t>(o.next));
    out.next_terminal = o.terminal;
    out.intended = o.intended;
    out.probability = probability;
    out.description = render_transition(env.mdp, env.lexicon, s, a, o.reward, o.next);
    out.next_value = snap->entries.at(static_cast<size_t>(o.next));
    out.state_name = env.lexicon.name(s);
    return out;
}

// Policy-weighted exhaustive outcome enumeration for the combined estimate.
std::vector<OneStepOutcome> outcomes_under_policy(const EnvModel& env, const PolicyTable& policy,
                                                  const TableSnapshot& snap, StateId s) {
    std::vector<OneStepOutcome> outcomes;
    const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
    const auto& dist = policy.dist.at(static_cast<size_t>(s));
    for (size_t ai = 0; ai < actions.size(); ++ai) {
        if (dist.at(ai) == 0.0) continue;
        for (const Outcome& o : env.mdp.outcomes[static_cast<size_t>(s)][ai]) {
            outcomes.push_back(
                make_outcome(env, snap, s, actions[ai], o, dist[ai] * o.probability));
        }
    }
    return outcomes;
}

std::vector<OneStepOutcome> outcomes_for_action(const EnvModel& env, const TableSnapshot& snap,
                                                StateId s, ActionId a) {
    std::vector<OneStepOutcome> outcomes;
    for (const Outcome& o : enumerate_outcomes(env.mdp, s, a)) {
        outcomes.push_back(make_outcome(env, snap, s, a, o, o.probability));
    }
    return outcomes;
}

// K seeded draws of (action, next) pairs under the policy; each draw carries
// weight 1/K.
std::vector<OneStepOutcome> sampled_outcomes_under_policy(const EnvModel& env,
                                                          const PolicyTable& policy,
                                                          const TableSnapshot& snap, StateId s,
                                                          int k, std::uint64_t seed) {
    std::vector<OneStepOutcome> outcomes;
    const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
    const auto& dist = policy.dist.at(static_cast<size_t>(s));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int n = 0; n < k; ++n) {
        double u = unit(rng);
        size_t ai = 0;
        double acc = 0.0;
        for (size_t i = 0; i < dist.size(); ++i) {
            if (dist[i] == 0.0) continue;
            ai = i;
            acc += dist[i];
            if (u <= acc) break;
        }
        const auto& outs = env.mdp.outcomes[static_cast<size_t>(s)][ai];
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
        outcomes.push_back(
            make_outcome(env, snap, s, actions[ai], *chosen, 1.0 / static_cast<double>(k)));
    }
    return outcomes;
}

std::vector<OneStepOutcome> sampled_outcomes_for_action(const EnvModel& env,
                                                        const TableSnapshot& snap, StateId s,
                                                        ActionId a, int k, std::uint64_t seed) {
    std::vector<OneStepOutcome> outcomes;
    const auto& outs = enumerate_outcomes(env.mdp, s, a);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int n = 0; n < k; ++n) {
        double v = unit(rng);
        const Outcome* chosen = &outs.back();
        double acc = 0.0;
        for (const Outcome& o : outs) {
            acc += o.probability;
            if (v <= acc) {
                chosen = &o;
                break;
            }
        }
        outcomes.push_back(make_outcome(env, snap, s, a, *chosen, 1.0 / static_cast<double>(k)));
    }
    return outcomes;
}

int env_step_limit(const EnvModel& env) { return env.step_limit; }

// Runs fn(s) for every listed state, optionally across worker threads.
// Results land in pre-sized slots, so parallel execution stays deterministic.
template <typename Fn>
void for_each_state(const std::vector<StateId>& states, int parallelism, Fn&& fn) {
    if (parallelism <= 1 || states.size() <= 1) {
        for (StateId s : states) fn(s);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(states.size());
    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= states.size()) return;
            try {
                fn(states[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    int threads = std::min<int>(parallelism, static_cast<int>(states.size()));
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

AggregatorKind aggregator_kind_from_name(const std::string& name) {
    if (name == "deterministic") return AggregatorKind::deterministic;
    if (name == "llm") return AggregatorKind::llm;
    throw ConfigError("unknown aggregator kind: " + name);
}

std::string aggregator_kind_name(AggregatorKind kind) {
    return kind == AggregatorKind::deterministic ? "deterministic" : "llm";
}

void ExperimentConfig::validate() const {
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
    if (estimate.kind != EstimateKind::td_exhaustive && estimate.samples < 1)
        throw ConfigError("sampled estimate modes require a positive sample count");
    task.validate();
    if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig config;
    config.schema_version = j.value("schema_version", 1);
    if (config.schema_version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(config.schema_version));
    config.env = parse_env_spec(j.at("env"));
    config.iterations = j.value("iterations", config.iterations);
    config.aggregator = aggregator_kind_from_name(j.value("aggregator", "deterministic"));
    if (j.contains("estimate")) {
        const auto& e = j.at("estimate");
        const std::string mode = e.value("mode", "td_exhaustive");
        if (mode == "td_exhaustive") {
            config.estimate.kind = EstimateKind::td_exhaustive;
        } else if (mode == "td_sampled") {
            config.estimate.kind = EstimateKind::td_sampled;
        } else if (mode == "mc") {
            config.estimate.kind = EstimateKind::mc;
        } else {
            throw ConfigError("unknown estimate mode: " + mode);
        }
        config.estimate.samples = e.value("k", 0);
        config.estimate.seed = e.value("seed", 0ULL);
    }
    config.improvement_enabled = j.value("improvement_enabled", false);
    if (j.contains("protocol")) {
        const std::string p = j.at("protocol").get<std::string>();
        if (p == "combined_v") {
            config.protocol = ValueProtocol::combined_v;
        } else if (p == "per_action_q") {
            config.protocol = ValueProtocol::per_action_q;
        } else {
            throw ConfigError("unknown value protocol: " + p);
        }
    }
    if (j.contains("task")) config.task.text = j.at("task").get<std::string>();
    if (j.contains("cache")) {
        const auto& c = j.at("cache");
        config.cache.mode = cache_mode_from_name(c.value("mode", "cache_first"));
        if (c.contains("dir")) config.cache.cache_dir = c.at("dir").get<std::string>();
    }
    config.parallelism = j.value("parallelism", 1);
    if (j.contains("out_dir")) config.out_dir = j.at("out_dir").get<std::string>();
    config.model = j.value("model", config.model);
    config.temperature = j.value("temperature", config.temperature);
    config.fresh_table_each_iteration =
        j.value("fresh_table_each_iteration", config.fresh_table_each_iteration);
    config.seed = j.value("seed", 0ULL);
    return config;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& config) {
    nlohmann::json j;
    j["schema_version"] = config.schema_version;
    j["env"] = env_spec_to_json(config.env);
    j["iterations"] = config.iterations;
    j["aggregator"] = aggregator_kind_name(config.aggregator);
    nlohmann::json estimate;
    switch (config.estimate.kind) {
        case EstimateKind::td_exhaustive: estimate["mode"] = "td_exhaustive"; break;
        case EstimateKind::td_sampled: estimate["mode"] = "td_sampled"; break;
        case EstimateKind::mc: estimate["mode"] = "mc"; break;
    }
    if (config.estimate.kind != EstimateKind::td_exhaustive) {
        estimate["k"] = config.estimate.samples;
        estimate["seed"] = config.estimate.seed;
    }
    j["estimate"] = estimate;
    j["improvement_enabled"] = config.improvement_enabled;
    if (config.protocol) {
        j["protocol"] = *config.protocol == ValueProtocol::combined_v ? "combined_v"
                                                                      : "per_action_q";
    }
    j["task"] = config.task.text;
    j["cache"] = {{"mode", cache_mode_name(config.cache.mode)},
                  {"dir", config.cache.cache_dir.string()}};
    j["parallelism"] = config.parallelism;
    j["out_dir"] = config.out_dir.string();
    j["model"] = config.model;
    j["temperature"] = config.temperature;
    j["fresh_table_each_iteration"] = config.fresh_table_each_iteration;
    j["seed"] = config.seed;
    return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file: " + file.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + file.string());
    return experiment_config_from_json(j);
}

SweepResult evaluation_sweep(const EnvModel& env, const PolicyTable& policy,
                             const LanguageValueTable& table, Aggregator& agg,
                             const EstimateMode& mode, ValueProtocol protocol,
                             std::span<const StateId> visit_order, int parallelism) {
    policy.validate(env.mdp);
    TableSnapshot snap = snapshot(table);
    const int n = env.mdp.state_count();

    SweepResult result;
    result.table.iteration = table.iteration + 1;
    result.table.entries = snap->entries;  // terminals copied through
    result.q.entries.assign(static_cast<size_t>(n), {});

    std::vector<StateId> order;
    if (visit_order.empty()) {
        order.resize(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
    } else {
        order.assign(visit_order.begin(), visit_order.end());
    }
    std::vector<StateId> work;
    for (StateId s : order) {
        if (s < 0 || s >= n) throw UsageError("visit order names an unknown state");
        if (!env.mdp.is_terminal(s)) work.push_back(s);
    }
    if (work.size() != static_cast<size_t>(std::count(env.mdp.terminal.begin(),
                                                      env.mdp.terminal.end(), false)))
        throw UsageError("visit order must cover every non-terminal state exactly once");

    auto evaluate_one = [&](StateId s) {
        const std::string name = env.lexicon.name(s);
        if (protocol == ValueProtocol::combined_v) {
            if (mode.kind == EstimateKind::mc) {
                std::vector<TrajectoryRecord> records;
                for (int i = 0; i < mode.samples; ++i) {
                    std::uint64_t seed = mix_seed(mode.seed, table.iteration,
                                                  static_cast<std::uint64_t>(s),
                                                  static_cast<std::uint64_t>(i));
                    TrajectorySample sample =
                        sample_trajectory(env.mdp, policy, s, seed, env_step_limit(env));
                    records.push_back(render_trajectory(env.mdp, env.lexicon, s, sample));
                }
                LanguageValue v = mc_language_estimate(s, records, agg);
                v.iteration = result.table.iteration;
                result.table.entries[static_cast<size_t>(s)] = v;
                return;
            }
            std::vector<OneStepOutcome> outcomes =
                mode.kind == EstimateKind::td_exhaustive
                    ? outcomes_under_policy(env, policy, snap, s)
                    : sampled_outcomes_under_policy(
                          env, policy, snap, s, mode.samples,
                          mix_seed(mode.seed, table.iteration, static_cast<std::uint64_t>(s), 0));
            LanguageValue v = td_language_estimate(s, outcomes, agg);
            v.iteration = result.table.iteration;
            result.table.entries[static_cast<size_t>(s)] = v;
            return;
        }

        // per_action_q: Q^L for every legal action, then the across-action join.
        const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
        std::vector<ActionValueDoc> docs;
        docs.reserve(actions.size());
        std::vector<LanguageValue> q_row;
        q_row.reserve(actions.size());
        for (size_t ai = 0; ai < actions.size(); ++ai) {
            ActionId a = actions[ai];
            std::vector<OneStepOutcome> outcomes =
                mode.kind == EstimateKind::td_exhaustive
                    ? outcomes_for_action(env, snap, s, a)
                    : sampled_outcomes_for_action(env, snap, s, a, mode.samples,
                                                  mix_seed(mode.seed, table.iteration,
                                                           static_cast<std::uint64_t>(s),
                                                           static_cast<std::uint64_t>(a) + 1));
            LanguageValue q = language_q_estimate(s, a, outcomes, agg);
            q.iteration = result.table.iteration;
            ActionValueDoc doc;
            doc.action_name = env.mdp.action_name(a);
            doc.action = a;
            doc.policy_probability = policy.dist.at(static_cast<size_t>(s)).at(ai);
            doc.value = q;
            docs.push_back(doc);
            q_row.push_back(std::move(q));
        }
        LanguageValue v = agg.evaluate_policy_from_actions(name, docs);
        v.provenance = Provenance::td_update;
        v.iteration = result.table.iteration;
        result.table.entries[static_cast<size_t>(s)] = v;
        result.q.entries[static_cast<size_t>(s)] = std::move(q_row);
    };

    try {
        for_each_state(work, parallelism, evaluate_one);
    } catch (const SweepError&) {
        throw;
    } catch (const std::exception& e) {
        // The failing state is named in the nested message where available.
        std::string state = "unknown";
        if (const auto* failed = dynamic_cast<const StateEvaluationFailedError*>(&e))
            state = failed->state_name;
        throw SweepError(std::string("evaluation sweep aborted: ") + e.what(), state,
                         result.table);
    }
    return result;
}

ImprovementSweepResult improvement_sweep(const EnvModel& env, const LanguageQTable& q,
                                         Improver& improver, const TaskInstruction& task) {
    const int n = env.mdp.state_count();
    ImprovementSweepResult result;
    result.policy.dist.resize(static_cast<size_t>(n));
    result.thoughts.assign(static_cast<size_t>(n), "");
    for (StateId s = 0; s < n; ++s) {
        if (env.mdp.is_terminal(s)) continue;
        const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
        const auto& q_row = q.entries.at(static_cast<size_t>(s));
        if (q_row.size() != actions.size())
            throw UsageError("improvement_sweep: Q documents missing at state " +
                             env.lexicon.name(s));
        std::vector<ActionValueDoc> docs;
        docs.reserve(actions.size());
        for (size_t ai = 0; ai < actions.size(); ++ai) {
            ActionValueDoc doc;
            doc.action_name = env.mdp.action_name(actions[ai]);
            doc.action = actions[ai];
            doc.policy_probability = 0.0;
            doc.value = q_row[ai];
            docs.push_back(doc);
        }
        ImprovementResult improved = improver.improve(env.lexicon.name(s), docs, task);
        if (improved.dist.size() != actions.size())
            throw UsageError("improver returned a distribution of the wrong arity");
        result.policy.dist[static_cast<size_t>(s)] = improved.dist;
        result.thoughts[static_cast<size_t>(s)] = improved.thought;
    }
    result.policy.validate(env.mdp);
    return result;
}

MetricsReport compute_iteration_metrics(const TabularMdp& mdp, const PolicyTable& policy,
                                        int iteration_index) {
    MetricsReport report = policy_value_metrics(mdp, policy);
    report.iteration_index = iteration_index;
    return report;
}

// ── Artifact serialization ──────────────────────────────────────────────────

namespace {

nlohmann::json concepts_to_json(const ConceptEvaluation& c) {
    return nlohmann::json{{"Important state", c.important_states},
                          {"Immediate risk", c.immediate_risk},
                          {"Future risk", c.future_risk},
                          {"Safest path", c.safest_path},
                          {"Final evaluation", c.final_evaluation}};
}

ConceptEvaluation concepts_from_json(const nlohmann::json& j) {
    ConceptEvaluation c;
    c.important_states = j.at("Important state").get<std::string>();
    c.immediate_risk = j.at("Immediate risk").get<std::string>();
    c.future_risk = j.at("Future risk").get<std::string>();
    c.safest_path = j.at("Safest path").get<std::string>();
    c.final_evaluation = j.at("Final evaluation").get<std::string>();
    return c;
}

nlohmann::json language_value_to_json(const LanguageValue& v) {
    nlohmann::json j;
    j["provenance"] = provenance_name(v.provenance);
    j["iteration"] = v.iteration;
    if (v.kind == LanguageValue::Kind::concepts) {
        j["variant"] = "concepts";
        j["concepts"] = concepts_to_json(v.concepts);
    } else {
        j["variant"] = "free_text";
        j["text"] = v.text;
        if (v.non_conforming) j["non_conforming"] = true;
    }
    return j;
}

LanguageValue language_value_from_json(const nlohmann::json& j) {
    LanguageValue v;
    v.provenance = provenance_from_name(j.at("provenance").get<std::string>());
    v.iteration = j.at("iteration").get<int>();
    if (j.at("variant").get<std::string>() == "concepts") {
        v.kind = LanguageValue::Kind::concepts;
        v.concepts = concepts_from_json(j.at("concepts"));
    } else {
        v.kind = LanguageValue::Kind::free_text;
        v.text = j.at("text").get<std::string>();
        v.non_conforming = j.value("non_conforming", false);
    }
    return v;
}

}  // namespace

nlohmann::json value_table_to_json(const EnvModel& env, const LanguageValueTable& table) {
    nlohmann::json entries;
    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        entries[env.lexicon.name(s)] = language_value_to_json(table.entries.at(static_cast<size_t>(s)));
    }
    return nlohmann::json{{"iteration", table.iteration}, {"entries", entries}};
}

LanguageValueTable value_table_from_json(const EnvModel& env, const nlohmann::json& j) {
    LanguageValueTable table;
    table.iteration = j.at("iteration").get<int>();
    table.entries.resize(static_cast<size_t>(env.mdp.state_count()));
    const auto& entries = j.at("entries");
    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        table.entries[static_cast<size_t>(s)] =
            language_value_from_json(entries.at(env.lexicon.name(s)));
    }
    return table;
}

nlohmann::json policy_to_json(const EnvModel& env, const PolicyTable& policy) {
    nlohmann::json j;
    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        if (env.mdp.is_terminal(s)) continue;
        nlohmann::json row;
        const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
        for (size_t ai = 0; ai < actions.size(); ++ai) {
            row[env.mdp.action_name(actions[ai])] = policy.dist.at(static_cast<size_t>(s)).at(ai);
        }
        j[env.lexicon.name(s)] = row;
    }
    return j;
}

nlohmann::json metrics_to_json(const EnvModel& env, const std::vector<MetricsReport>& metrics,
                               double optimal_average) {
    nlohmann::json iterations = nlohmann::json::array();
    for (const MetricsReport& m : metrics) {
        nlohmann::json per_state;
        for (StateId s = 0; s < env.mdp.state_count(); ++s) {
            per_state[env.lexicon.name(s)] = m.per_state_value.at(static_cast<size_t>(s));
        }
        nlohmann::json row{{"iteration", m.iteration_index},
                           {"average_value", m.average_value},
                           {"average_value_all_states", m.average_value_all_states},
                           {"per_state", per_state}};
        if (!m.warnings.empty()) row["warnings"] = m.warnings;
        iterations.push_back(row);
    }
    return nlohmann::json{{"iterations", iterations},
                          {"optimal_average", optimal_average},
                          {"width", env.width},
                          {"height", env.height}};
}

void write_text_file(const std::filesystem::path& file, const std::string& content) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write file: " + file.string());
    out << content;
}

namespace {

void write_json_file(const std::filesystem::path& file, const nlohmann::json& j) {
    write_text_file(file, j.dump(1) + "\n");
}

struct RunContext {
    EnvModel env;
    std::unique_ptr<ChatGateway> gateway;
    std::unique_ptr<Aggregator> aggregator;
    std::unique_ptr<Improver> improver;
};

RunContext make_run_context(const ExperimentConfig& config) {
    RunContext ctx;
    ctx.env = build_env(config.env);
    if (config.aggregator == AggregatorKind::deterministic) {
        ctx.aggregator = std::make_unique<DeterministicAggregator>();
        ctx.improver = std::make_unique<DeterministicImprover>();
    } else {
        CachePolicy cache = config.cache;
        if (cache.cache_dir.empty()) cache.cache_dir = config.out_dir;
        ctx.gateway = std::make_unique<ChatGateway>(cache);
        LlmCallConfig call{config.model, config.temperature, 2};
        ctx.aggregator = std::make_unique<LlmAggregator>(*ctx.gateway, call);
        ctx.improver = std::make_unique<LlmImprover>(*ctx.gateway, call);
    }
    return ctx;
}

nlohmann::json q_table_to_json(const EnvModel& env, const LanguageQTable& q) {
    nlohmann::json j;
    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        if (env.mdp.is_terminal(s)) continue;
        const auto& row = q.entries.at(static_cast<size_t>(s));
        if (row.empty()) continue;
        nlohmann::json state_row;
        const auto& actions = env.mdp.actions.at(static_cast<size_t>(s));
        for (size_t ai = 0; ai < row.size(); ++ai) {
            state_row[env.mdp.action_name(actions[ai])] = language_value_to_json(row[ai]);
        }
        j[env.lexicon.name(s)] = state_row;
    }
    return j;
}

nlohmann::json thoughts_to_json(const EnvModel& env, const std::vector<std::string>& thoughts) {
    nlohmann::json j;
    for (StateId s = 0; s < env.mdp.state_count(); ++s) {
        if (env.mdp.is_terminal(s)) continue;
        j[env.lexicon.name(s)] = thoughts.at(static_cast<size_t>(s));
    }
    return j;
}

// Wall-clock per iteration lives in its own file; the byte-compared
// artifacts (values, metrics, report) must stay identical across replays.
class IterationTimer {
public:
    explicit IterationTimer(std::filesystem::path file) : file_(std::move(file)) {}
    void start() { begin_ = std::chrono::steady_clock::now(); }
    void record(int iteration) {
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - begin_).count();
        timings_["iteration_" + std::to_string(iteration) + "_seconds"] = seconds;
        write_json_file(file_, timings_);
    }

private:
    std::filesystem::path file_;
    nlohmann::json timings_ = nlohmann::json::object();
    std::chrono::steady_clock::time_point begin_;
};

}  // namespace

RunArtifacts run_policy_evaluation_experiment(const ExperimentConfig& config) {
    config.validate();
    if (config.improvement_enabled)
        throw ConfigError("policy evaluation experiment requires improvement_enabled = false");
    RunContext ctx = make_run_context(config);
    std::filesystem::create_directories(config.out_dir);
    write_json_file(config.out_dir / "config.json", experiment_config_to_json(config));

    PolicyTable policy = PolicyTable::uniform(ctx.env.mdp);
    LanguageValueTable table = init_value_table(ctx.env.mdp);
    write_json_file(config.out_dir / "values_iter_0.json", value_table_to_json(ctx.env, table));
    write_json_file(config.out_dir / "policy_iter_0.json", policy_to_json(ctx.env, policy));

    RunArtifacts artifacts;
    artifacts.run_dir = config.out_dir;
    double optimal_average =
        policy_value_metrics(ctx.env.mdp, value_iteration(ctx.env.mdp, 1e-10).greedy).average_value;
    artifacts.optimal_average = optimal_average;
    artifacts.metrics.push_back(compute_iteration_metrics(ctx.env.mdp, policy, 0));
    artifacts.converged.push_back(false);

    IterationTimer timer(config.out_dir / "timing.json");
    for (int k = 1; k <= config.iterations; ++k) {
        timer.start();
        SweepResult sweep;
        try {
            sweep = evaluation_sweep(ctx.env, policy, table, *ctx.aggregator, config.estimate,
                                     config.effective_protocol(), {}, config.parallelism);
        } catch (const SweepError& e) {
            write_json_file(config.out_dir / ("values_iter_" + std::to_string(k) + "_partial.json"),
                            value_table_to_json(ctx.env, e.partial_table));
            write_json_file(config.out_dir / "metrics.json",
                            metrics_to_json(ctx.env, artifacts.metrics, optimal_average));
            throw;
        }
        bool converged = sweep.table.content_equal(table);
        table = std::move(sweep.table);
        write_json_file(config.out_dir / ("values_iter_" + std::to_string(k) + ".json"),
                        value_table_to_json(ctx.env, table));
        artifacts.metrics.push_back(compute_iteration_metrics(ctx.env.mdp, policy, k));
        artifacts.converged.push_back(converged);
        artifacts.iterations_completed = k;
        timer.record(k);
    }
    write_json_file(config.out_dir / "metrics.json",
                    metrics_to_json(ctx.env, artifacts.metrics, optimal_average));
    return artifacts;
}

RunArtifacts run_language_gpi(const ExperimentConfig& config) {
    config.validate();
    if (!config.improvement_enabled)
        throw ConfigError("language GPI requires improvement_enabled = true");
    RunContext ctx = make_run_context(config);
    std::filesystem::create_directories(config.out_dir);
    write_json_file(config.out_dir / "config.json", experiment_config_to_json(config));

    PolicyTable policy = PolicyTable::uniform(ctx.env.mdp);
    LanguageValueTable table = init_value_table(ctx.env.mdp);
    write_json_file(config.out_dir / "values_iter_0.json", value_table_to_json(ctx.env, table));
    write_json_file(config.out_dir / "policy_iter_0.json", policy_to_json(ctx.env, policy));

    RunArtifacts artifacts;
    artifacts.run_dir = config.out_dir;
    artifacts.optimal_average =
        policy_value_metrics(ctx.env.mdp, value_iteration(ctx.env.mdp, 1e-10).greedy).average_value;
    artifacts.metrics.push_back(compute_iteration_metrics(ctx.env.mdp, policy, 0));
    artifacts.converged.push_back(false);

    IterationTimer timer(config.out_dir / "timing.json");
    for (int k = 1; k <= config.iterations; ++k) {
        timer.start();
        if (config.fresh_table_each_iteration && k > 1) {
            table = init_value_table(ctx.env.mdp);
            table.iteration = k - 1;
        }
        SweepResult sweep;
        try {
            sweep = evaluation_sweep(ctx.env, policy, table, *ctx.aggregator, config.estimate,
                                     config.effective_protocol(), {}, config.parallelism);
        } catch (const SweepError& e) {
            write_json_file(config.out_dir / ("values_iter_" + std::to_string(k) + "_partial.json"),
                            value_table_to_json(ctx.env, e.partial_table));
            write_json_file(config.out_dir / "metrics.json",
                            metrics_to_json(ctx.env, artifacts.metrics, artifacts.optimal_average));
            throw;
        }
        bool converged = sweep.table.content_equal(table);
        table = std::move(sweep.table);
        write_json_file(config.out_dir / ("values_iter_" + std::to_string(k) + ".json"),
                        value_table_to_json(ctx.env, table));
        write_json_file(config.out_dir / ("qvalues_iter_" + std::to_string(k) + ".json"),
                        q_table_to_json(ctx.env, sweep.q));

        ImprovementSweepResult improved =
            improvement_sweep(ctx.env, sweep.q, *ctx.improver, config.task);
        policy = improved.policy;
        write_json_file(config.out_dir / ("policy_iter_" + std::to_string(k) + ".json"),
                        policy_to_json(ctx.env, policy));
        write_json_file(config.out_dir / ("thoughts_iter_" + std::to_string(k) + ".json"),
                        thoughts_to_json(ctx.env, improved.thoughts));

        artifacts.metrics.push_back(compute_iteration_metrics(ctx.env.mdp, policy, k));
        artifacts.converged.push_back(converged);
        artifacts.iterations_completed = k;
        write_json_file(config.out_dir / "metrics.json",
                        metrics_to_json(ctx.env, artifacts.metrics, artifacts.optimal_average));
        timer.record(k);
    }
    return artifacts;
}

}  // namespace nlrl
