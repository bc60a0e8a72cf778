#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlrl/errors.hpp"
#include "nlrl/textify.hpp"

namespace nlrl {

struct ChatMessage {
    std::string role;  // "system" or "user"
    std::string content;
};

struct ChatRequest {
    std::string model;
    double temperature = 0.0;
    std::vector<ChatMessage> messages;
    ResponseFormatHint response_format = ResponseFormatHint::free_text;
    std::string request_tag;  // experiment/state/action context, excluded from the hash

    void validate() const;
};

/// SHA-256 over the canonical request form: model, temperature at fixed
/// precision, response format, and the exact message bytes in order. Tags and
/// timestamps are excluded so identical prompts share cache entries.
std::string prompt_hash(const ChatRequest& req);

ChatRequest make_chat_request(const PromptBundle& bundle, const std::string& model,
                              double temperature, const std::string& tag);

struct TranscriptEntry {
    std::string prompt_hash;
    ChatRequest request;
    std::string response_text;
    long latency_ms = 0;
    int attempt = 1;
    std::string timestamp;  // UTC, ISO 8601
};

void persist_transcript(const std::filesystem::path& file, const TranscriptEntry& entry);

/// Loads a JSONL transcript file in order. In strict mode a corrupt line
/// raises PersistenceCorruptError naming the line; in lenient mode corrupt
/// lines are reported through `warnings` and skipped.
std::vector<TranscriptEntry> load_transcripts(const std::filesystem::path& file, bool strict,
                                              std::vector<std::string>* warnings = nullptr);

struct CachePolicy {
    enum class Mode { live, cache_first, replay_only };
    Mode mode = Mode::cache_first;
    std::filesystem::path cache_dir;  // holds transcripts.jsonl
};

CachePolicy::Mode cache_mode_from_name(const std::string& name);
std::string cache_mode_name(CachePolicy::Mode mode);

struct GatewayConfig {
    std::string base_url;      // from env when empty
    std::string api_key;       // from env when empty
    std::string organization;  // optional
    int max_tokens = 2048;
    int max_attempts = 5;
    long backoff_base_ms = 1000;  // doubles per attempt
    long timeout_seconds = 120;
};

/// Chat-completion client with hash-keyed transcript caching. Counters make
/// the cache contract testable.
class ChatGateway {
public:
    ChatGateway(CachePolicy policy, GatewayConfig config = {});

    std::string chat(const ChatRequest& req);

    long network_calls() const { return network_calls_; }
    long cache_hits() const { return cache_hits_; }
    const std::filesystem::path& transcript_file() const { return transcript_file_; }

private:
    std::string perform_request(const ChatRequest& req, int* attempts_used);

    CachePolicy policy_;
    GatewayConfig config_;
    std::filesystem::path transcript_file_;
    std::unordered_map<std::string, std::string> cache_;
    std::mutex mutex_;
    long network_calls_ = 0;
    long cache_hits_ = 0;
};

}  // namespace nlrl
