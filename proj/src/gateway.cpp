#include "nlrl/gateway.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <openssl/evp.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

namespace nlrl {

namespace {

std::string format_temperature(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    return buf;
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string format_name(ResponseFormatHint f) {
    return f == ResponseFormatHint::json_object ? "json_object" : "text";
}

ResponseFormatHint format_from_name(const std::string& name) {
    if (name == "json_object") return ResponseFormatHint::json_object;
    if (name == "text") return ResponseFormatHint::free_text;
    throw ConfigError("unknown response format: " + name);
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string env_or(const char* primary, const char* fallback) {
    if (const char* v = std::getenv(primary); v && *v) return v;
    if (fallback) {
        if (const char* v = std::getenv(fallback); v && *v) return v;
    }
    return "";
}

nlohmann::json entry_to_json(const TranscriptEntry& e) {
    nlohmann::json messages = nlohmann::json::array();
    for (const ChatMessage& m : e.request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return nlohmann::json{{"prompt_hash", e.prompt_hash},
                          {"model", e.request.model},
                          {"temperature", e.request.temperature},
                          {"response_format", format_name(e.request.response_format)},
                          {"messages", messages},
                          {"request_tag", e.request.request_tag},
                          {"response_text", e.response_text},
                          {"latency_ms", e.latency_ms},
                          {"attempt", e.attempt},
                          {"timestamp", e.timestamp}};
}

TranscriptEntry entry_from_json(const nlohmann::json& j) {
    TranscriptEntry e;
    e.prompt_hash = j.at("prompt_hash").get<std::string>();
    e.request.model = j.at("model").get<std::string>();
    e.request.temperature = j.at("temperature").get<double>();
    e.request.response_format = format_from_name(j.at("response_format").get<std::string>());
    for (const auto& m : j.at("messages")) {
        e.request.messages.push_back(
            {m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    e.request.request_tag = j.value("request_tag", "");
    e.response_text = j.at("response_text").get<std::string>();
    e.latency_ms = j.value("latency_ms", 0L);
    e.attempt = j.value("attempt", 1);
    e.timestamp = j.value("timestamp", "");
    return e;
}

}  // namespace

void ChatRequest::validate() const {
    if (messages.empty()) throw UsageError("chat request must carry at least one message");
    for (size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].role != "system" && messages[i].role != "user")
            throw UsageError("chat message role must be system or user");
        if (messages[i].role == "system" && i != 0)
            throw UsageError("system message must come first");
    }
    if (temperature < 0.0) throw UsageError("temperature must be non-negative");
}

std::string prompt_hash(const ChatRequest& req) {
    std::string canon;
    canon += "v1\n";
    canon += "model:" + req.model + "\n";
    canon += "temperature:" + format_temperature(req.temperature) + "\n";
    canon += "format:" + format_name(req.response_format) + "\n";
    canon += "messages:" + std::to_string(req.messages.size()) + "\n";
    for (const ChatMessage& m : req.messages) {
        canon += "role:" + m.role + "\n";
        canon += std::to_string(m.content.size()) + "\n";
        canon += m.content;
        canon += "\n";
    }
    return sha256_hex(canon);
}

ChatRequest make_chat_request(const PromptBundle& bundle, const std::string& model,
                              double temperature, const std::string& tag) {
    ChatRequest req;
    req.model = model;
    req.temperature = temperature;
    req.response_format = bundle.response_format_hint;
    req.request_tag = tag;
    req.messages.push_back({"system", bundle.system_text});
    req.messages.push_back({"user", bundle.user_text + bundle.trigger_text});
    return req;
}

void persist_transcript(const std::filesystem::path& file, const TranscriptEntry& entry) {
    std::ofstream out(file, std::ios::app | std::ios::binary);
    if (!out) throw ConfigError("cannot open transcript file for append: " + file.string());
    out << entry_to_json(entry).dump() << "\n";
}

std::vector<TranscriptEntry> load_transcripts(const std::filesystem::path& file, bool strict,
                                              std::vector<std::string>* warnings) {
    std::vector<TranscriptEntry> entries;
    std::ifstream in(file, std::ios::binary);
    if (!in) return entries;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            if (strict)
                throw PersistenceCorruptError(
                    "corrupt transcript line " + std::to_string(line_no) + " in " + file.string(),
                    line_no);
            if (warnings)
                warnings->push_back("skipped corrupt transcript line " + std::to_string(line_no));
            continue;
        }
        try {
            entries.push_back(entry_from_json(j));
        } catch (const std::exception& e) {
            if (strict)
                throw PersistenceCorruptError("transcript line " + std::to_string(line_no) +
                                                  " missing fields: " + e.what(),
                                              line_no);
            if (warnings)
                warnings->push_back("skipped incomplete transcript line " +
                                    std::to_string(line_no));
        }
    }
    return entries;
}

CachePolicy::Mode cache_mode_from_name(const std::string& name) {
    if (name == "live") return CachePolicy::Mode::live;
    if (name == "cache_first") return CachePolicy::Mode::cache_first;
    if (name == "replay_only") return CachePolicy::Mode::replay_only;
    throw ConfigError("unknown cache mode: " + name);
}

std::string cache_mode_name(CachePolicy::Mode mode) {
    switch (mode) {
        case CachePolicy::Mode::live: return "live";
        case CachePolicy::Mode::cache_first: return "cache_first";
        case CachePolicy::Mode::replay_only: return "replay_only";
    }
    return "cache_first";
}

ChatGateway::ChatGateway(CachePolicy policy, GatewayConfig config)
    : policy_(std::move(policy)), config_(std::move(config)) {
    if (config_.base_url.empty()) config_.base_url = env_or("NLRL_BASE_URL", "OPENAI_BASE_URL");
    if (config_.base_url.empty()) config_.base_url = "https://api.openai.com/v1";
    if (config_.api_key.empty()) config_.api_key = env_or("NLRL_API_KEY", "OPENAI_API_KEY");
    if (config_.organization.empty()) config_.organization = env_or("NLRL_ORG", "OPENAI_ORG");

    if (!policy_.cache_dir.empty()) {
        std::filesystem::create_directories(policy_.cache_dir);
        transcript_file_ = policy_.cache_dir / "transcripts.jsonl";
        for (const TranscriptEntry& e : load_transcripts(transcript_file_, /*strict=*/false)) {
            cache_.emplace(e.prompt_hash, e.response_text);  // first entry wins
        }
    } else if (policy_.mode != CachePolicy::Mode::live) {
        throw ConfigError("cache mode " + cache_mode_name(policy_.mode) +
                          " requires a cache directory");
    }
}

std::string ChatGateway::chat(const ChatRequest& req) {
    req.validate();
    const std::string hash = prompt_hash(req);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (policy_.mode != CachePolicy::Mode::live) {
            auto it = cache_.find(hash);
            if (it != cache_.end()) {
                ++cache_hits_;
                return it->second;
            }
            if (policy_.mode == CachePolicy::Mode::replay_only) throw ReplayMissError(hash);
        }
    }

    auto start = std::chrono::steady_clock::now();
    int attempts_used = 1;
    std::string text = perform_request(req, &attempts_used);
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();

    std::lock_guard<std::mutex> lock(mutex_);
    ++network_calls_;
    cache_.emplace(hash, text);
    if (!transcript_file_.empty()) {
        TranscriptEntry entry;
        entry.prompt_hash = hash;
        entry.request = req;
        entry.response_text = text;
        entry.latency_ms = elapsed;
        entry.attempt = attempts_used;
        entry.timestamp = utc_timestamp();
        persist_transcript(transcript_file_, entry);
    }
    return text;
}

std::string ChatGateway::perform_request(const ChatRequest& req, int* attempts_used) {
    if (config_.api_key.empty() && config_.base_url.rfind("https://", 0) == 0) {
        throw UpstreamUnavailableError("no API key configured (set NLRL_API_KEY)", 0);
    }

    nlohmann::json body;
    body["model"] = req.model;
    body["temperature"] = req.temperature;
    if (req.response_format == ResponseFormatHint::json_object) {
        body["response_format"] = {{"type", "json_object"}};
    }
    if (config_.max_tokens > 0) body["max_tokens"] = config_.max_tokens;
    nlohmann::json messages = nlohmann::json::array();
    for (const ChatMessage& m : req.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    body["messages"] = messages;
    const std::string payload = body.dump();

    // Split base_url into host part and path prefix.
    std::string base = config_.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    std::string host = base;
    std::string prefix;
    size_t scheme = base.find("://");
    size_t path_start = base.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start != std::string::npos) {
        host = base.substr(0, path_start);
        prefix = base.substr(path_start);
    }
    const std::string path = prefix + "/chat/completions";

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    if (!config_.organization.empty()) headers.emplace("OpenAI-Organization", config_.organization);

    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        *attempts_used = attempt;
        httplib::Client client(host);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_write_timeout(config_.timeout_seconds, 0);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        auto res = client.Post(path, headers, payload, "application/json");
        if (res) {
            last_status = res->status;
            if (res->status >= 200 && res->status < 300) {
                nlohmann::json reply =
                    nlohmann::json::parse(res->body, nullptr, /*allow_exceptions=*/false);
                if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
                    throw UpstreamUnavailableError("malformed chat completion response body",
                                                   res->status);
                }
                return reply["choices"][0]["message"]["content"].get<std::string>();
            }
            if (res->status != 429 && res->status < 500) {
                throw UpstreamUnavailableError(
                    "chat endpoint rejected the request with status " +
                        std::to_string(res->status) + ": " + res->body,
                    res->status);
            }
            last_error = "status " + std::to_string(res->status);
        } else {
            last_status = 0;
            last_error = httplib::to_string(res.error());
        }
        if (attempt < config_.max_attempts) {
            long delay = config_.backoff_base_ms << (attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
    throw UpstreamUnavailableError("chat endpoint unavailable after " +
                                       std::to_string(config_.max_attempts) +
                                       " attempts; last error: " + last_error,
                                   last_status);
}

}  // namespace nlrl
