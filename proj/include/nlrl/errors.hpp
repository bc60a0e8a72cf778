#pragma once

#include <stdexcept>
#include <string>

namespace nlrl {

/// Malformed environment spec or experiment config.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Precondition violation on an operation (bad state id, empty input, ...).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A dynamic-programming loop exceeded its sweep cap without converging.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, long cap)
        : std::runtime_error(what), sweep_cap(cap) {}
    long sweep_cap;
};

/// Failure to extract a structured document from model output.
struct ParseError : std::runtime_error {
    enum class Kind { no_object, missing_concept };
    ParseError(Kind k, const std::string& concept_name_, const std::string& what)
        : std::runtime_error(what), kind(k), concept_name(concept_name_) {}
    Kind kind;
    std::string concept_name;  // set for missing_concept
};

/// Free-text value fed to the deterministic concept aggregator (or vice versa).
struct ModeMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// replay_only cache lookup missed.
struct ReplayMissError : std::runtime_error {
    ReplayMissError(const std::string& hash)
        : std::runtime_error("replay_only cache miss for prompt hash " + hash),
          prompt_hash(hash) {}
    std::string prompt_hash;
};

/// Chat endpoint kept failing after the retry schedule ran out.
struct UpstreamUnavailableError : std::runtime_error {
    UpstreamUnavailableError(const std::string& what, int status)
        : std::runtime_error(what), last_status(status) {}
    int last_status;  // 0 for transport-level failures
};

/// Corrupt line hit while loading transcripts in strict mode.
struct PersistenceCorruptError : std::runtime_error {
    PersistenceCorruptError(const std::string& what, long line)
        : std::runtime_error(what), line_number(line) {}
    long line_number;
};

/// A state's LLM evaluation could not be completed within the retry budget.
struct StateEvaluationFailedError : std::runtime_error {
    StateEvaluationFailedError(const std::string& what, const std::string& state)
        : std::runtime_error(what), state_name(state) {}
    std::string state_name;
};

/// The LLM improver never named a legal action within the retry budget.
struct ImprovementFailedError : std::runtime_error {
    ImprovementFailedError(const std::string& what, const std::string& state)
        : std::runtime_error(what), state_name(state) {}
    std::string state_name;
};

}  // namespace nlrl
