#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fifa/errors.hpp"

namespace fifa {

inline constexpr const char* kToolVersion = "0.1.0";

/// One labeled comparison: a prompt plus winner/loser image references.
/// Image payloads are never stored; the refs are opaque strings.
struct PreferencePair {
    std::uint64_t pair_id = 0;
    std::uint64_t prompt_id = 0;
    std::string prompt_text;
    std::string winner_ref;
    std::string loser_ref;
    std::optional<double> reward_w;
    std::optional<double> reward_l;
    std::optional<double> precomputed_loss;

    bool operator==(const PreferencePair&) const = default;
};

/// Dense prompt embeddings, keyed by prompt_id. Entry order is preserved
/// from the source file; lookups go through an id index.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::uint32_t dim) : dim_(dim) {}

    std::uint32_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }

    std::uint64_t id_at(std::size_t i) const { return ids_[i]; }
    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    const std::vector<float>& raw() const { return data_; }
    const std::vector<std::uint64_t>& ids() const { return ids_; }

    /// Index of prompt_id, or npos when absent.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t find(std::uint64_t prompt_id) const {
        auto it = index_.find(prompt_id);
        return it == index_.end() ? npos : it->second;
    }

    /// Appends one row. Throws DuplicateIdError on repeated id and
    /// FormatError on dimension mismatch or non-finite components.
    void add(std::uint64_t prompt_id, std::span<const float> vec);

    void reserve(std::size_t n) {
        ids_.reserve(n);
        data_.reserve(n * dim_);
        index_.reserve(n);
    }

    /// Sub-table restricted to the given prompt ids (first occurrence order,
    /// ids missing from the table are skipped).
    EmbeddingTable subset(std::span<const std::uint64_t> prompt_ids) const;

private:
    std::uint32_t dim_ = 0;
    std::vector<std::uint64_t> ids_;
    std::vector<float> data_;  // row-major, size() * dim_
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// A pair annotated with its score components and combined importance.
struct ScoredPair {
    std::uint64_t pair_id = 0;
    std::uint64_t prompt_id = 0;
    double margin = 0.0;
    std::optional<double> llm_score;
    double diversity_term = 0.0;  // natural-log k-NN distance
    double importance = 0.0;
    bool reward_disagrees_label = false;
};

/// Filtering hyperparameters. Canonically serializable; see canonical.hpp.
struct FilterConfig {
    double alpha = 0.5;
    double gamma = 0.5;
    std::uint64_t k_select = 5000;
    std::uint64_t knn_k = 1;
    std::uint64_t prompt_cap = 5;
    std::uint64_t seed = 0;
    double distance_floor = 1e-12;

    bool operator==(const FilterConfig&) const = default;
};

struct Histogram {
    std::vector<double> edges;          // size counts.size() + 1 except degenerate single bin
    std::vector<std::uint64_t> counts;
};

struct SummaryStats {
    std::uint64_t count = 0;
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
    Histogram histogram;
};

/// Corpus-level diversity metrics; unset values mean "not computable"
/// (e.g. no embeddings were provided).
struct DiversityMetrics {
    std::optional<double> word_entropy_bits;
    std::optional<double> semantic_diversity;
    std::optional<double> singular_entropy_bits;
    std::optional<double> knn_entropy_nat;
};

/// Reproducibility record written next to every subset.
struct SelectionManifest {
    std::uint64_t config_hash = 0;
    FilterConfig config;
    std::string tool_version = kToolVersion;
    std::uint64_t input_count = 0;
    std::uint64_t selected_count = 0;
    std::uint64_t n_reward_disagreements = 0;
    std::uint64_t excluded_unscored = 0;
    std::uint64_t cap_in_effect = 0;
    std::uint64_t cap_doublings = 0;
    bool shortfall = false;  // fewer than k_select pairs admissible
    SummaryStats margin_stats;
    SummaryStats llm_score_stats;
    SummaryStats diversity_stats;
    SummaryStats importance_stats;
    DiversityMetrics selected_diversity;  // metrics over the selected subset's prompts
};

/// Per-invariant violation counts from validate_pairs. Reporting only;
/// offending pair ids are listed per category.
struct ValidationReport {
    std::uint64_t duplicate_ids = 0;
    std::uint64_t partial_rewards = 0;
    std::uint64_t missing_rewards = 0;  // both rewards absent
    std::uint64_t empty_prompts = 0;
    std::uint64_t equal_refs = 0;
    std::vector<std::uint64_t> duplicate_id_pairs;
    std::vector<std::uint64_t> partial_reward_pairs;
    std::vector<std::uint64_t> empty_prompt_pairs;
    std::vector<std::uint64_t> equal_ref_pairs;

    bool clean() const {
        return duplicate_ids == 0 && partial_rewards == 0 && empty_prompts == 0 &&
               equal_refs == 0;
    }
};

}  // namespace fifa
