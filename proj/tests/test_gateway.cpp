#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "nlrl/gateway.hpp"

using namespace nlrl;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("nlrl_gateway_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

ChatRequest simple_request(const std::string& tag = "") {
    ChatRequest req;
    req.model = "m";
    req.temperature = 0.5;
    req.messages = {{"system", "sys"}, {"user", "hi"}};
    req.request_tag = tag;
    return req;
}

// Minimal chat-completions stand-in with scriptable status codes.
class StubServer {
public:
    explicit StubServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            size_t n = request_count_.fetch_add(1);
            last_body_ = req.body;
            int status = n < statuses_.size() ? statuses_[n] : 200;
            if (status != 200) {
                res.status = status;
                res.set_content("busy", "text/plain");
                return;
            }
            nlohmann::json reply = {
                {"choices",
                 {{{"message", {{"role", "assistant"}, {"content", "reply #" + std::to_string(n)}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    size_t request_count() const { return request_count_.load(); }
    std::string last_body() const { return last_body_; }

private:
    httplib::Server server_;
    std::vector<int> statuses_;
    std::atomic<size_t> request_count_{0};
    std::string last_body_;
    int port_ = 0;
    std::thread thread_;
};

GatewayConfig fast_config(const std::string& base_url) {
    GatewayConfig config;
    config.base_url = base_url;
    config.api_key = "test-key";
    config.backoff_base_ms = 1;
    return config;
}

}  // namespace

TEST_CASE("prompt hash is stable and canonical") {
    ChatRequest req = simple_request();
    // Frozen digest of the canonical form; a change here is a cache-breaking
    // change for every stored transcript.
    CHECK(prompt_hash(req) == "aaabbf04a883919e0d7c4d770e6a71a0f2f170687f0d659329161ae080a20832");

    ChatRequest tagged = simple_request("some/tag");
    CHECK(prompt_hash(tagged) == prompt_hash(req));  // tags excluded

    ChatRequest other_model = simple_request();
    other_model.model = "m2";
    CHECK(prompt_hash(other_model) != prompt_hash(req));

    ChatRequest other_temp = simple_request();
    other_temp.temperature = 0.6;
    CHECK(prompt_hash(other_temp) != prompt_hash(req));

    // Fixed-precision canonicalization: sub-precision jitter shares the hash.
    ChatRequest jitter = simple_request();
    jitter.temperature = 0.5000000001;
    CHECK(prompt_hash(jitter) == prompt_hash(req));

    ChatRequest other_format = simple_request();
    other_format.response_format = ResponseFormatHint::json_object;
    CHECK(prompt_hash(other_format) != prompt_hash(req));

    ChatRequest other_text = simple_request();
    other_text.messages[1].content = "hi!";
    CHECK(prompt_hash(other_text) != prompt_hash(req));
}

TEST_CASE("chat request validation") {
    ChatRequest empty;
    empty.model = "m";
    CHECK_THROWS_AS(empty.validate(), UsageError);

    ChatRequest misordered;
    misordered.model = "m";
    misordered.messages = {{"user", "hi"}, {"system", "sys"}};
    CHECK_THROWS_AS(misordered.validate(), UsageError);

    PromptBundle bundle;
    bundle.system_text = "S";
    bundle.user_text = "U";
    bundle.trigger_text = "T";
    ChatRequest req = make_chat_request(bundle, "m", 1.0, "tag");
    REQUIRE(req.messages.size() == 2);
    CHECK(req.messages[0].role == "system");
    CHECK(req.messages[0].content == "S");
    CHECK(req.messages[1].content == "UT");  // user then trigger, nothing added
}

TEST_CASE("transcripts persist append-only and reload in order") {
    auto dir = temp_dir("persist");
    auto file = dir / "transcripts.jsonl";
    for (int i = 0; i < 3; ++i) {
        TranscriptEntry entry;
        entry.request = simple_request();
        entry.request.messages[1].content = "msg " + std::to_string(i);
        entry.prompt_hash = prompt_hash(entry.request);
        entry.response_text = "resp " + std::to_string(i);
        entry.attempt = i + 1;
        entry.timestamp = "2026-01-01T00:00:0" + std::to_string(i) + "Z";
        persist_transcript(file, entry);
    }
    auto entries = load_transcripts(file, /*strict=*/true);
    REQUIRE(entries.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(entries[static_cast<size_t>(i)].response_text == "resp " + std::to_string(i));
        // Stored hash recomputes from the stored request.
        CHECK(entries[static_cast<size_t>(i)].prompt_hash ==
              prompt_hash(entries[static_cast<size_t>(i)].request));
    }
}

TEST_CASE("corrupt transcript lines are fatal in strict mode, skipped in lenient") {
    auto dir = temp_dir("corrupt");
    auto file = dir / "transcripts.jsonl";
    TranscriptEntry entry;
    entry.request = simple_request();
    entry.prompt_hash = prompt_hash(entry.request);
    entry.response_text = "ok";
    persist_transcript(file, entry);
    {
        std::ofstream out(file, std::ios::app | std::ios::binary);
        out << "{\"truncated\": \n";  // broken line
    }
    persist_transcript(file, entry);

    try {
        load_transcripts(file, /*strict=*/true);
        FAIL("expected PersistenceCorruptError");
    } catch (const PersistenceCorruptError& e) {
        CHECK(e.line_number == 2);
    }

    std::vector<std::string> warnings;
    auto entries = load_transcripts(file, /*strict=*/false, &warnings);
    CHECK(entries.size() == 2);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("2") != std::string::npos);
}

TEST_CASE("cache_first serves repeats without the network") {
    StubServer server({200});
    auto dir = temp_dir("cache_first");
    ChatGateway gateway(CachePolicy{CachePolicy::Mode::cache_first, dir},
                        fast_config(server.base_url()));

    std::string first = gateway.chat(simple_request("a"));
    CHECK(first == "reply #0");
    CHECK(server.request_count() == 1);
    CHECK(gateway.network_calls() == 1);

    // Identical prompt, different tag: zero further network traffic.
    std::string second = gateway.chat(simple_request("b"));
    CHECK(second == "reply #0");
    CHECK(server.request_count() == 1);
    CHECK(gateway.cache_hits() == 1);

    // A fresh gateway over the same directory replays from disk.
    ChatGateway reloaded(CachePolicy{CachePolicy::Mode::replay_only, dir});
    CHECK(reloaded.chat(simple_request()) == "reply #0");
    CHECK(reloaded.network_calls() == 0);

    // The request body carries the response_format only when JSON is asked for.
    CHECK(server.last_body().find("response_format") == std::string::npos);
}

TEST_CASE("replay_only misses raise ReplayMissError") {
    auto dir = temp_dir("replay_miss");
    ChatGateway gateway(CachePolicy{CachePolicy::Mode::replay_only, dir});
    try {
        gateway.chat(simple_request());
        FAIL("expected ReplayMissError");
    } catch (const ReplayMissError& e) {
        CHECK(e.prompt_hash == prompt_hash(simple_request()));
    }
}

TEST_CASE("rate limits retry with backoff and record the attempt count") {
    StubServer server({429, 200});
    auto dir = temp_dir("retry");
    ChatGateway gateway(CachePolicy{CachePolicy::Mode::cache_first, dir},
                        fast_config(server.base_url()));
    std::string reply = gateway.chat(simple_request());
    CHECK(reply == "reply #1");
    CHECK(server.request_count() == 2);

    auto entries = load_transcripts(dir / "transcripts.jsonl", true);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].attempt == 2);
}

TEST_CASE("exhausted retries raise UpstreamUnavailableError with the last status") {
    StubServer server({500, 500, 500, 500, 500});
    auto dir = temp_dir("fail");
    GatewayConfig config = fast_config(server.base_url());
    config.max_attempts = 3;
    ChatGateway gateway(CachePolicy{CachePolicy::Mode::cache_first, dir}, config);
    try {
        gateway.chat(simple_request());
        FAIL("expected UpstreamUnavailableError");
    } catch (const UpstreamUnavailableError& e) {
        CHECK(e.last_status == 500);
    }
    CHECK(server.request_count() == 3);
}

TEST_CASE("client errors other than 429 fail immediately") {
    StubServer server({401});
    auto dir = temp_dir("auth");
    ChatGateway gateway(CachePolicy{CachePolicy::Mode::cache_first, dir},
                        fast_config(server.base_url()));
    CHECK_THROWS_AS(gateway.chat(simple_request()), UpstreamUnavailableError);
    CHECK(server.request_count() == 1);
}

TEST_CASE("live mode skips the cache on reads but still records transcripts") {
    StubServer server({200, 200});
    auto dir = temp_dir("live");
    {
        ChatGateway warmup(CachePolicy{CachePolicy::Mode::cache_first, dir},
                           fast_config(server.base_url()));
        warmup.chat(simple_request());
    }
    ChatGateway live(CachePolicy{CachePolicy::Mode::live, dir}, fast_config(server.base_url()));
    std::string reply = live.chat(simple_request());
    CHECK(reply == "reply #1");  // went to the network despite the cached entry
    CHECK(server.request_count() == 2);
    CHECK(load_transcripts(dir / "transcripts.jsonl", true).size() == 2);
}

TEST_CASE("json_object requests carry the response_format field") {
    StubServer server({200});
    auto dir = temp_dir("format");
    ChatGateway gateway(CachePolicy{CachePolicy::Mode::cache_first, dir},
                        fast_config(server.base_url()));
    ChatRequest req = simple_request();
    req.response_format = ResponseFormatHint::json_object;
    gateway.chat(req);
    CHECK(server.last_body().find("\"response_format\"") != std::string::npos);
    CHECK(server.last_body().find("json_object") != std::string::npos);
}
