#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "fifa/quality.hpp"
#include "fifa/types.hpp"

namespace fifa {

struct RunPaths {
    std::filesystem::path pairs;
    std::filesystem::path embeddings;  // required when gamma != 0
    std::filesystem::path cache;       // empty => in-memory cache
    std::filesystem::path output_dir = ".";
};

/// Fully resolved run settings: filtering hyperparameters, file locations,
/// and LLM endpoint access.
struct RunConfig {
    FilterConfig filter;
    RunPaths paths;
    ChatClientConfig llm;
    unsigned threads = 0;  // 0 = logical cores
    bool dry_run = false;
    std::uint64_t histogram_bins = 20;
};

struct SelectOutcome {
    SelectionManifest manifest;
    std::filesystem::path subset_path;    // empty on dry runs
    std::filesystem::path manifest_path;  // empty on dry runs
    bool dry_run = false;
    std::uint64_t cache_hits = 0;
    std::uint64_t planned_requests = 0;  // dry run: cache misses that would hit the endpoint
    std::uint64_t requests_made = 0;
};

/// End-to-end selection: ingest -> margins -> quality -> diversity ->
/// importance -> capped top-K -> subset + manifest. Dry runs stop after
/// validation and scoring-plan resolution with zero writes and zero
/// network calls. Failures surface as fifa::Error subclasses.
SelectOutcome run_select(const RunConfig& config);

/// Loads a flat `key = value` config file (comments with #, optional
/// quotes around strings). Unknown keys are rejected; relative paths are
/// resolved against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& file);

struct StatsConfig {
    std::filesystem::path pairs;
    std::filesystem::path embeddings;  // optional
    std::filesystem::path cache;       // optional; source of llm scores
    std::string model_tag = ChatClientConfig{}.model_tag;
    std::uint64_t knn_k = 1;
    double distance_floor = 1e-12;
    unsigned threads = 0;
    std::uint64_t histogram_bins = 20;
};

/// Dataset report: margin histogram, the corpus diversity metrics, and the
/// llm-score histogram. Metrics whose inputs are absent come out null,
/// with a note appended to the "warnings" array. Deterministic: identical
/// inputs yield byte-identical JSON.
nlohmann::ordered_json run_stats(const StatsConfig& config);

/// Count / min / mean / max plus a uniform [min, max] histogram
/// (right-inclusive last bin). Empty input yields count = 0 and no bins.
SummaryStats summarize_values(std::span<const double> values, std::uint64_t bins);

}  // namespace fifa
