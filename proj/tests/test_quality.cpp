#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fifa/hash.hpp"
#include "fifa/quality.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("fifa_quality_test_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

/// Loopback chat-completions endpoint; the handler gets the 0-based call
/// index so tests can script failure sequences.
class MockEndpoint {
public:
    using Handler = std::function<void(int call, const httplib::Request&, httplib::Response&)>;

    explicit MockEndpoint(Handler handler) : handler_(std::move(handler)) {
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handler_(calls_++, req, res);
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockEndpoint() {
        server_.stop();
        thread_.join();
    }

    std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }
    int calls() const { return calls_.load(); }

    static void reply(httplib::Response& res, const std::string& text) {
        nlohmann::json body;
        body["choices"][0]["message"]["content"] = text;
        res.set_content(body.dump(), "application/json");
    }

private:
    httplib::Server server_;
    std::thread thread_;
    Handler handler_;
    int port_ = 0;
    std::atomic<int> calls_{0};
};

fifa::ChatClientConfig fast_config(const std::string& url) {
    fifa::ChatClientConfig c;
    c.url = url;
    c.requests_per_second = 500.0;
    c.timeout_seconds = 5;
    return c;
}

std::vector<std::pair<std::uint64_t, std::string>> prompts_of(
    const std::vector<std::string>& texts) {
    std::vector<std::pair<std::uint64_t, std::string>> out;
    for (const std::string& t : texts) out.emplace_back(fifa::prompt_id_of(t), t);
    return out;
}

}  // namespace

TEST_CASE("the judge template carries the literal format example") {
    std::string tpl(fifa::kQualityPromptTemplate);
    CHECK(tpl.find("Rating: [[5]]") != std::string::npos);
    CHECK(tpl.find("{text prompt}") != std::string::npos);
}

TEST_CASE("render_quality_prompt substitutes the prompt exactly once") {
    std::string out = fifa::render_quality_prompt("a cat");
    CHECK(out.find("a cat") != std::string::npos);
    CHECK(out.find("Rating: [[5]]") != std::string::npos);
    CHECK(out.find("{text prompt}") == std::string::npos);
    CHECK(out == fifa::render_quality_prompt("a cat"));  // purity

    // bracket-bearing prompts pass through verbatim, no request-side escaping
    std::string brackets = fifa::render_quality_prompt("weird [[ prompt ]]");
    CHECK(brackets.find("weird [[ prompt ]]") != std::string::npos);

    CHECK_THROWS_AS(fifa::render_quality_prompt(""), fifa::EmptyPromptError);
    CHECK_THROWS_AS(fifa::render_quality_prompt("   \n"), fifa::EmptyPromptError);
}

TEST_CASE("parse_rating extracts the last in-range rating") {
    CHECK(fifa::parse_rating("detailed and creative prompt. Rating: [[5]]") == 5);
    CHECK(fifa::parse_rating("Rating: [[3]] ... on reflection Rating: [[9]]") == 9);
    CHECK(fifa::parse_rating("Rating: [[0]]") == 0);
    CHECK(fifa::parse_rating("Rating: [[10]]") == 10);
    CHECK_THROWS_AS(fifa::parse_rating("I refuse."), fifa::NoRatingError);
    CHECK_THROWS_AS(fifa::parse_rating("Rating: [[11]]"), fifa::OutOfRangeError);
    CHECK_THROWS_AS(fifa::parse_rating("Rating: [[-1]]"), fifa::OutOfRangeError);
    CHECK_THROWS_AS(fifa::parse_rating("Rating: [[99999999999999999999]]"),
                    fifa::OutOfRangeError);
    CHECK_THROWS_AS(fifa::parse_rating("Rating: [[five]]"), fifa::NoRatingError);
    // guard against template/parser drift: the rendered request's example
    // line itself parses as 5
    CHECK(fifa::parse_rating(fifa::render_quality_prompt("x")) == 5);
}

TEST_CASE("cache freezes the first score and survives reload") {
    TempDir dir;
    fs::path f = dir.path / "cache.jsonl";
    {
        fifa::QualityCache cache(f);
        fifa::QualityCacheEntry e;
        e.prompt_hash = 42;
        e.score = 7;
        e.raw_response = "Rating: [[7]]";
        e.model_tag = "judge-a";
        e.timestamp = 1700000000;
        CHECK(cache.insert(e));
        e.score = 3;
        CHECK_FALSE(cache.insert(e));  // first score is frozen
        auto hit = cache.lookup(42, "judge-a");
        REQUIRE(hit.has_value());
        CHECK(hit->score == 7);
        CHECK_FALSE(cache.lookup(42, "judge-b").has_value());  // model_tag keys too
        CHECK_FALSE(cache.lookup(41, "judge-a").has_value());
    }
    fifa::QualityCache reloaded(f);
    CHECK(reloaded.size() == 1);
    auto hit = reloaded.lookup(42, "judge-a");
    REQUIRE(hit.has_value());
    CHECK(hit->score == 7);
    CHECK(hit->raw_response == "Rating: [[7]]");
    CHECK(hit->timestamp == 1700000000);
}

TEST_CASE("cache load skips torn lines and takes the last duplicate") {
    TempDir dir;
    fs::path f = dir.path / "cache.jsonl";
    std::ofstream out(f);
    out << R"({"prompt_hash": 1, "score": 4, "raw_response": "r", "model_tag": "m", "timestamp": 5})"
        << "\n";
    out << R"({"prompt_hash": 1, "score": 6, "raw_response": "r2", "model_tag": "m", "timestamp": 9})"
        << "\n";
    out << R"({"prompt_hash": 2, "score": 99, "raw_response": "bad", "model_tag": "m", "timestamp": 1})"
        << "\n";                            // invalid score: dropped
    out << R"({"prompt_hash": 3, "sco)";    // torn tail after a crash
    out.close();

    fifa::QualityCache cache(f);
    CHECK(cache.size() == 1);
    auto hit = cache.lookup(1, "m");
    REQUIRE(hit.has_value());
    CHECK(hit->score == 6);  // last writer wins
}

TEST_CASE("merge_files folds caches last-writer-wins") {
    TempDir dir;
    fs::path a = dir.path / "a.jsonl";
    fs::path b = dir.path / "b.jsonl";
    {
        fifa::QualityCache ca(a);
        fifa::QualityCacheEntry e;
        e.model_tag = "m";
        e.prompt_hash = 10;
        e.score = 1;
        ca.insert(e);
        e.prompt_hash = 11;
        e.score = 2;
        ca.insert(e);
        fifa::QualityCache cb(b);
        e.prompt_hash = 11;
        e.score = 9;  // later file overrides
        cb.insert(e);
        e.prompt_hash = 12;
        e.score = 3;
        cb.insert(e);
    }
    fs::path merged = dir.path / "merged.jsonl";
    std::vector<fs::path> inputs = {a, b};
    fifa::QualityCache::merge_files(inputs, merged);
    fifa::QualityCache m(merged);
    CHECK(m.size() == 3);
    CHECK(m.lookup(10, "m")->score == 1);
    CHECK(m.lookup(11, "m")->score == 9);
    CHECK(m.lookup(12, "m")->score == 3);
}

TEST_CASE("a fully warmed cache answers without any network") {
    TempDir dir;
    fifa::QualityCache cache(dir.path / "cache.jsonl");
    auto prompts = prompts_of({"alpha", "beta"});
    for (const auto& [id, text] : prompts) {
        fifa::QualityCacheEntry e;
        e.prompt_hash = id;
        e.score = 8;
        e.model_tag = fifa::ChatClientConfig{}.model_tag;
        cache.insert(e);
    }
    // no endpoint configured at all: cache completeness must suffice
    fifa::ChatClientConfig config;
    fifa::QualityResult r = fifa::score_prompts(prompts, config, cache);
    CHECK(r.requests_made == 0);
    CHECK(r.cache_hits == 2);
    CHECK(r.unscored.empty());
    CHECK(r.scores.at(prompts[0].first) == 8);
    CHECK(r.scores.at(prompts[1].first) == 8);
}

TEST_CASE("offline mode never throws; misses just stay unscored") {
    fifa::QualityCache cache;  // memory-only, empty
    auto prompts = prompts_of({"alpha", "beta"});
    fifa::ChatClientConfig config;
    config.offline = true;
    fifa::QualityResult r = fifa::score_prompts(prompts, config, cache);
    CHECK(r.requests_made == 0);
    CHECK(r.scores.empty());
    REQUIRE(r.unscored.size() == 2);
    CHECK(r.unscored[0] < r.unscored[1]);  // reported in sorted order
}

TEST_CASE("mock endpoint scores flow into the result and the cache") {
    TempDir dir;
    std::mutex seen_mu;
    std::vector<std::string> seen_bodies;
    MockEndpoint mock([&](int, const httplib::Request& req, httplib::Response& res) {
        {
            std::lock_guard<std::mutex> lock(seen_mu);
            seen_bodies.push_back(req.body);
        }
        MockEndpoint::reply(res, "Thoughtful analysis. Rating: [[7]]");
    });
    fifa::QualityCache cache(dir.path / "cache.jsonl");
    auto prompts = prompts_of({"alpha", "beta", "gamma"});
    fifa::QualityResult r = fifa::score_prompts(prompts, fast_config(mock.url()), cache);
    CHECK(r.unscored.empty());
    CHECK(r.requests_made == 3);
    for (const auto& [id, text] : prompts) CHECK(r.scores.at(id) == 7);
    CHECK(mock.calls() == 3);

    // every request body carried the rendered template as a user message
    REQUIRE(seen_bodies.size() == 3);
    for (const std::string& body : seen_bodies) {
        nlohmann::json j = nlohmann::json::parse(body);
        CHECK(j.at("messages").at(0).at("role") == "user");
        std::string content = j.at("messages").at(0).at("content");
        CHECK(content.find("Rating: [[5]]") != std::string::npos);
    }

    // idempotence: a second run over the warmed cache issues zero requests
    fifa::QualityResult again = fifa::score_prompts(prompts, fast_config(mock.url()), cache);
    CHECK(again.requests_made == 0);
    CHECK(again.cache_hits == 3);
    CHECK(mock.calls() == 3);
}

TEST_CASE("duplicate prompt texts collapse to one request") {
    MockEndpoint mock([](int, const httplib::Request&, httplib::Response& res) {
        MockEndpoint::reply(res, "Rating: [[4]]");
    });
    fifa::QualityCache cache;
    std::vector<std::pair<std::uint64_t, std::string>> prompts =
        prompts_of({"same", "same", " same "});
    fifa::QualityResult r = fifa::score_prompts(prompts, fast_config(mock.url()), cache);
    CHECK(mock.calls() == 1);
    CHECK(r.scores.size() == 1);
    CHECK(r.scores.begin()->second == 4);
}

TEST_CASE("retries recover from transient failures per the attempt budget") {
    auto fail_twice = [](int call, const httplib::Request&, httplib::Response& res) {
        if (call < 2) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
        } else {
            MockEndpoint::reply(res, "Rating: [[6]]");
        }
    };
    auto prompts = prompts_of({"alpha"});

    {
        MockEndpoint mock(fail_twice);
        fifa::QualityCache cache;
        fifa::ChatClientConfig config = fast_config(mock.url());
        config.retries = 3;
        fifa::QualityResult r = fifa::score_prompts(prompts, config, cache);
        CHECK(r.unscored.empty());
        CHECK(r.scores.at(prompts[0].first) == 6);
        CHECK(mock.calls() == 3);
    }
    {
        MockEndpoint mock(fail_twice);
        fifa::QualityCache cache;
        fifa::ChatClientConfig config = fast_config(mock.url());
        config.retries = 1;
        fifa::QualityResult r = fifa::score_prompts(prompts, config, cache);
        CHECK(r.scores.empty());
        CHECK(r.unscored == std::vector<std::uint64_t>{prompts[0].first});
        CHECK(mock.calls() == 1);
    }
}

TEST_CASE("out-of-range and absent ratings are retried, never clamped") {
    MockEndpoint mock([](int, const httplib::Request&, httplib::Response& res) {
        MockEndpoint::reply(res, "Rating: [[11]]");
    });
    fifa::QualityCache cache;
    auto prompts = prompts_of({"alpha"});
    fifa::ChatClientConfig config = fast_config(mock.url());
    config.retries = 3;
    fifa::QualityResult r = fifa::score_prompts(prompts, config, cache);
    CHECK(r.scores.empty());                 // 11 is a failure, not an 11 and not a 10
    CHECK(r.unscored.size() == 1);
    CHECK(mock.calls() == 3);                // each attempt was spent
    CHECK(cache.size() == 0);                // nothing invalid is cached
}

TEST_CASE("an endpoint that never answers raises EndpointUnreachable") {
    fifa::QualityCache cache;
    auto prompts = prompts_of({"alpha"});
    fifa::ChatClientConfig config = fast_config("http://127.0.0.1:9/v1/chat/completions");
    config.retries = 2;
    config.timeout_seconds = 1;
    CHECK_THROWS_AS(fifa::score_prompts(prompts, config, cache), fifa::EndpointUnreachable);
}
