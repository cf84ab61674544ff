#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>

#include "fifa/types.hpp"

namespace fifa {

/// Per-prompt log k-NN distances plus their mean, the corpus entropy
/// estimate. The per-pair distance order is fixed, so results do not
/// depend on blocking or worker count.
struct DiversityScores {
    std::unordered_map<std::uint64_t, double> per_prompt;  // ln Euclidean k-NN distance
    double entropy_estimate = 0.0;
    std::uint64_t k = 1;
};

/// Exact brute-force k-NN log distances over the whole table. For each
/// prompt: Euclidean distance to its k-th nearest other entry, floored at
/// distance_floor before the natural log. threads = 0 picks the hardware
/// count.
DiversityScores knn_log_distances(const EmbeddingTable& table, std::uint64_t k,
                                  double distance_floor = 1e-12, unsigned threads = 0);

/// Shannon entropy in bits of the pooled unigram distribution. Tokens are
/// whitespace-separated (ASCII + common Unicode spaces), ASCII-lowercased.
double word_entropy(std::span<const std::string> prompts);

/// 1 - mean pairwise cosine similarity over unordered pairs; in [0, 2],
/// higher = more diverse.
double semantic_diversity(const EmbeddingTable& table);

/// Base-2 entropy of the normalized singular values of the N x d embedding
/// matrix. Zero singular values contribute nothing.
double singular_entropy(const EmbeddingTable& table);

/// Metrics bundle for reporting; knn entropy computed only when the table
/// has at least k+1 entries.
DiversityMetrics corpus_diversity_metrics(std::span<const std::string> prompts,
                                          const EmbeddingTable& table, std::uint64_t knn_k,
                                          double distance_floor, unsigned threads = 0);

}  // namespace fifa
