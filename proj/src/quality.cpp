#include "fifa/quality.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fifa/errors.hpp"
#include "fifa/hash.hpp"
#include "fifa/io.hpp"

namespace fifa {

using nlohmann::ordered_json;

const std::string_view kQualityPromptTemplate =
    "Please act as an impartial judge and assess the quality of the given text prompt for "
    "fine-tuning a text-to-image diffusion model. Use the following criteria to determine if a "
    "pair scores highly:\n\n"
    "1. The text prompt should demonstrate high learnability. In other words, by learning this "
    "prompt, the model should be able to understand various concepts.\n"
    "2. The prompt should contain no NSFW content; prompts with NSFW content should receive a "
    "score of 0.\n"
    "3. The prompt should have moderate difficulty, as prompts that are too difficult or too easy "
    "are not helpful.\n"
    "4. Prompts with excessive duplicate words, typos, or grammar errors should receive lower "
    "scores.\n\n"
    "Begin your evaluation by providing a short and brief explanation. Be as objective as "
    "possible. After providing your explanation, please rate the response on a scale of 1 to 10 "
    "by strictly following this format: \"[[rating]]\", for example: \"Rating: [[5]]\".\n\n"
    "[Text Prompt]\n"
    "{text prompt}\n";

std::string render_quality_prompt(std::string_view prompt_text) {
    if (trim(prompt_text).empty()) throw EmptyPromptError("cannot render an empty prompt");
    std::string out(kQualityPromptTemplate);
    const std::string slot = "{text prompt}";
    std::size_t pos = out.find(slot);
    out.replace(pos, slot.size(), std::string(prompt_text));
    return out;
}

int parse_rating(std::string_view response_text) {
    static const std::regex pattern(R"(Rating: \[\[(-?[0-9]+)\]\])");
    std::cregex_iterator it(response_text.data(), response_text.data() + response_text.size(),
                            pattern);
    std::cregex_iterator end;
    std::optional<std::string> last;
    for (; it != end; ++it) last = (*it)[1].str();
    if (!last) throw NoRatingError("no 'Rating: [[n]]' pattern in response");
    long long value = 0;
    try {
        value = std::stoll(*last);
    } catch (const std::out_of_range&) {
        throw OutOfRangeError("rating '" + *last + "' outside 0..10");
    }
    if (value < 0 || value > 10)
        throw OutOfRangeError("rating " + std::to_string(value) + " outside 0..10");
    return static_cast<int>(value);
}

QualityCache::QualityCache(std::filesystem::path path) : path_(std::move(path)) { load(); }

void QualityCache::load() {
    std::ifstream in(path_);
    if (!in.is_open()) return;  // first run: file appears on first append
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (!j.is_object()) continue;
        if (!j.contains("prompt_hash") || !j.contains("score") || !j.contains("model_tag"))
            continue;
        QualityCacheEntry e;
        if (!j["prompt_hash"].is_number_unsigned() || !j["score"].is_number_integer() ||
            !j["model_tag"].is_string())
            continue;
        e.prompt_hash = j["prompt_hash"].get<std::uint64_t>();
        e.score = j["score"].get<int>();
        e.model_tag = j["model_tag"].get<std::string>();
        if (e.score < 0 || e.score > 10) continue;
        if (j.contains("raw_response") && j["raw_response"].is_string())
            e.raw_response = j["raw_response"].get<std::string>();
        if (j.contains("timestamp") && j["timestamp"].is_number_integer())
            e.timestamp = j["timestamp"].get<std::int64_t>();
        entries_[{e.prompt_hash, e.model_tag}] = e;  // last writer wins
    }
}

std::optional<QualityCacheEntry> QualityCache::lookup(std::uint64_t prompt_hash,
                                                      std::string_view model_tag) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find({prompt_hash, std::string(model_tag)});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void QualityCache::append_line(const QualityCacheEntry& e) {
    ordered_json j;
    j["prompt_hash"] = e.prompt_hash;
    j["score"] = e.score;
    j["raw_response"] = e.raw_response;
    j["model_tag"] = e.model_tag;
    j["timestamp"] = e.timestamp;
    std::ofstream out(path_, std::ios::app);
    if (!out.is_open()) throw IOError("cannot append to cache file " + path_.string());
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw IOError("failed writing cache file " + path_.string());
}

bool QualityCache::insert(const QualityCacheEntry& entry) {
    if (entry.score < 0 || entry.score > 10)
        throw OutOfRangeError("cache score " + std::to_string(entry.score) + " outside 0..10");
    std::lock_guard<std::mutex> lock(mu_);
    Key key{entry.prompt_hash, entry.model_tag};
    auto [it, inserted] = entries_.emplace(key, entry);
    if (!inserted) return false;  // first score stays frozen
    if (!path_.empty()) append_line(entry);
    return true;
}

std::vector<QualityCacheEntry> QualityCache::entries_sorted() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<QualityCacheEntry> out;
    out.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) out.push_back(entry);
    return out;
}

void QualityCache::merge_files(std::span<const std::filesystem::path> inputs,
                               const std::filesystem::path& output) {
    QualityCache merged;
    for (const auto& path : inputs) {
        QualityCache part(path);
        std::lock_guard<std::mutex> lock(part.mu_);
        for (const auto& [key, entry] : part.entries_) merged.entries_[key] = entry;
    }
    std::string body;
    for (const auto& [key, entry] : merged.entries_) {
        ordered_json j;
        j["prompt_hash"] = entry.prompt_hash;
        j["score"] = entry.score;
        j["raw_response"] = entry.raw_response;
        j["model_tag"] = entry.model_tag;
        j["timestamp"] = entry.timestamp;
        body += j.dump();
        body += '\n';
    }
    io::atomic_write(output, body);
}

namespace {

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // /v1/...
};

ParsedUrl split_url(const std::string& url) {
    std::size_t scheme = url.find("://");
    if (scheme == std::string::npos)
        throw ConfigError("endpoint url must start with http:// or https://: " + url);
    std::size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

// Spaces POST calls so at most `rps` start per second across all workers.
class RateGate {
public:
    explicit RateGate(double rps) {
        if (rps > 0.0)
            interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(1.0 / rps));
    }
    void acquire() {
        if (interval_.count() == 0) return;
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::mutex mu_;
    std::chrono::steady_clock::duration interval_{0};
    std::chrono::steady_clock::time_point next_{};
};

std::string extract_content(const std::string& body) {
    ordered_json j = ordered_json::parse(body, nullptr, false);
    if (!j.is_object()) throw ParseError(0, "response body is not a JSON object");
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const auto& first = j["choices"][0];
        if (first.is_object() && first.contains("message") && first["message"].is_object() &&
            first["message"].contains("content") && first["message"]["content"].is_string())
            return first["message"]["content"].get<std::string>();
    }
    if (j.contains("content") && j["content"].is_string()) return j["content"].get<std::string>();
    throw ParseError(0, "no text content field in response");
}

}  // namespace

QualityResult score_prompts(std::span<const std::pair<std::uint64_t, std::string>> prompts,
                            const ChatClientConfig& config, QualityCache& cache) {
    QualityResult result;

    // Deduplicate by trimmed-prompt hash; each unique text is scored once.
    struct Pending {
        std::uint64_t hash;
        std::string text;
        std::vector<std::uint64_t> ids;
    };
    std::vector<Pending> pending;
    std::unordered_map<std::uint64_t, std::size_t> slot_of;
    for (const auto& [id, text] : prompts) {
        std::uint64_t hash = prompt_id_of(text);
        auto it = slot_of.find(hash);
        if (it == slot_of.end()) {
            slot_of.emplace(hash, pending.size());
            pending.push_back({hash, text, {id}});
        } else {
            pending[it->second].ids.push_back(id);
        }
    }

    std::vector<Pending*> misses;
    for (auto& p : pending) {
        if (auto hit = cache.lookup(p.hash, config.model_tag)) {
            ++result.cache_hits;
            for (std::uint64_t id : p.ids) result.scores.emplace(id, hit->score);
        } else {
            misses.push_back(&p);
        }
    }
    if (misses.empty()) return result;

    if (config.offline) {
        for (Pending* p : misses)
            for (std::uint64_t id : p->ids) result.unscored.push_back(id);
        std::sort(result.unscored.begin(), result.unscored.end());
        return result;
    }
    if (config.url.empty())
        throw ConfigError("no endpoint url configured and cache does not cover all prompts");

    ParsedUrl url = split_url(config.url);
    const char* key = config.api_key_env.empty() ? nullptr : std::getenv(config.api_key_env.c_str());
    int attempts = std::max(1, config.retries);

    RateGate gate(config.requests_per_second);
    std::atomic<std::size_t> cursor{0};
    std::atomic<std::uint64_t> requests{0};
    std::atomic<bool> transport_ok{false};
    std::atomic<bool> dead{false};
    std::mutex results_mu;
    std::vector<std::pair<Pending*, int>> fresh;      // scored this run
    std::vector<Pending*> failed;                     // exhausted retries

    auto worker = [&] {
        httplib::Client client(url.base);
        client.set_connection_timeout(config.timeout_seconds, 0);
        client.set_read_timeout(config.timeout_seconds, 0);
        httplib::Headers headers;
        if (key != nullptr) headers.emplace("Authorization", std::string("Bearer ") + key);
        while (true) {
            std::size_t i = cursor.fetch_add(1);
            if (i >= misses.size() || dead.load()) return;
            Pending* p = misses[i];
            ordered_json req;
            req["model"] = config.model_tag;
            req["messages"] = ordered_json::array();
            ordered_json msg;
            msg["role"] = "user";
            msg["content"] = render_quality_prompt(p->text);
            req["messages"].push_back(msg);
            std::string body = req.dump();

            bool any_response = false;
            std::optional<int> score;
            std::string raw;
            for (int attempt = 0; attempt < attempts && !score; ++attempt) {
                gate.acquire();
                requests.fetch_add(1);
                auto res = client.Post(url.path, headers, body, "application/json");
                if (!res) continue;  // transport-level failure
                any_response = true;
                transport_ok.store(true);
                if (res->status != 200) continue;
                try {
                    raw = extract_content(res->body);
                    score = parse_rating(raw);
                } catch (const Error&) {
                    score.reset();
                }
            }
            std::lock_guard<std::mutex> lock(results_mu);
            if (score) {
                QualityCacheEntry entry;
                entry.prompt_hash = p->hash;
                entry.score = *score;
                entry.raw_response = raw;
                entry.model_tag = config.model_tag;
                entry.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                                      std::chrono::system_clock::now().time_since_epoch())
                                      .count();
                cache.insert(entry);
                fresh.emplace_back(p, *score);
            } else if (!any_response && !transport_ok.load()) {
                // Endpoint never answered anyone: stop hammering it.
                dead.store(true);
                failed.push_back(p);
            } else {
                failed.push_back(p);
            }
        }
    };

    std::size_t workers =
        std::min<std::size_t>(std::max(1, config.max_in_flight), misses.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    result.requests_made = requests.load();
    if (dead.load() && !transport_ok.load())
        throw EndpointUnreachable("endpoint " + config.url + " not responding and " +
                                  std::to_string(misses.size()) + " prompts are uncached");
    for (auto& [p, score] : fresh)
        for (std::uint64_t id : p->ids) result.scores.emplace(id, score);
    for (Pending* p : failed)
        for (std::uint64_t id : p->ids) result.unscored.push_back(id);
    std::sort(result.unscored.begin(), result.unscored.end());
    return result;
}

}  // namespace fifa
