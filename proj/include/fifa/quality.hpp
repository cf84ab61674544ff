#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fifa {

/// The verbatim judge instruction template sent to the chat endpoint. The
/// `{text prompt}` slot is filled by render_quality_prompt. Treat this as
/// protocol data: scores are only comparable if the instructions match
/// byte for byte.
extern const std::string_view kQualityPromptTemplate;

struct QualityRequest {
    std::string prompt_text;
    std::string rendered_request;
};

struct QualityCacheEntry {
    std::uint64_t prompt_hash = 0;  // FNV-1a of the trimmed prompt
    int score = 0;                  // 0..10
    std::string raw_response;
    std::string model_tag;
    std::int64_t timestamp = 0;  // seconds since epoch
};

/// Renders the judge request for one prompt; byte-exact for identical
/// inputs. Throws EmptyPromptError when the prompt is empty after trimming.
std::string render_quality_prompt(std::string_view prompt_text);

/// Extracts the LAST occurrence of `Rating: [[<integer>]]` from a judge
/// response. Throws NoRatingError when absent, OutOfRangeError when the
/// integer falls outside 0..10 (never clamps).
int parse_rating(std::string_view response_text);

/// Append-only JSONL scoring cache keyed by (prompt_hash, model_tag).
/// Duplicate keys on disk resolve last-writer-wins at load; within a run
/// the first inserted score is frozen. Appends are serialized; lookups are
/// plain map reads. Unparseable lines (e.g. a torn final line after a
/// crash) are skipped at load.
class QualityCache {
public:
    QualityCache() = default;  // memory-only
    explicit QualityCache(std::filesystem::path path);

    std::optional<QualityCacheEntry> lookup(std::uint64_t prompt_hash,
                                            std::string_view model_tag) const;
    /// Returns false (and keeps the existing entry) when the key is
    /// already present.
    bool insert(const QualityCacheEntry& entry);

    std::size_t size() const { return entries_.size(); }
    const std::filesystem::path& path() const { return path_; }
    std::vector<QualityCacheEntry> entries_sorted() const;

    /// Last-writer-wins merge of several cache files into one, written
    /// atomically in sorted key order.
    static void merge_files(std::span<const std::filesystem::path> inputs,
                            const std::filesystem::path& output);

private:
    using Key = std::pair<std::uint64_t, std::string>;
    void load();
    void append_line(const QualityCacheEntry& entry);

    std::filesystem::path path_;  // empty => memory-only
    std::map<Key, QualityCacheEntry> entries_;
    mutable std::mutex mu_;
};

struct ChatClientConfig {
    std::string url;  // e.g. http://127.0.0.1:8080/v1/chat/completions
    std::string model_tag = "gpt-3.5-turbo-0125";
    std::string api_key_env = "FIFA_LLM_API_KEY";
    int retries = 3;  // total attempts per prompt
    int max_in_flight = 8;
    double requests_per_second = 5.0;
    int timeout_seconds = 30;
    bool offline = false;  // never touch the network; misses become unscored
};

struct QualityResult {
    std::unordered_map<std::uint64_t, int> scores;  // prompt_id -> 0..10
    std::vector<std::uint64_t> unscored;            // ids still missing after retries
    std::uint64_t requests_made = 0;
    std::uint64_t cache_hits = 0;
};

/// Scores each unique prompt at most once: cache first, then the endpoint
/// with `retries` attempts under the configured rate/concurrency limits.
/// Fresh scores are appended to the cache as they arrive. Throws
/// EndpointUnreachable only when the endpoint never answered at the
/// transport level while uncached prompts remained (and offline is off).
QualityResult score_prompts(std::span<const std::pair<std::uint64_t, std::string>> prompts,
                            const ChatClientConfig& config, QualityCache& cache);

}  // namespace fifa
