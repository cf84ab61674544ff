#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "fifa/types.hpp"

namespace fifa {

struct SelectionResult {
    std::vector<std::uint64_t> selected;  // pair_ids, descending importance
    std::uint64_t cap_in_effect = 0;
    std::uint64_t cap_doublings = 0;
    std::uint64_t excluded_unscored = 0;
    bool shortfall = false;  // fewer than K admissible pairs existed
};

struct ImportanceResult {
    std::vector<ScoredPair> scored;
    std::vector<std::uint64_t> excluded_unscored;  // pair_ids skipped for lack of an llm score
};

/// importance = margin + alpha * llm_score + gamma * diversity_term.
/// margins are keyed by pair_id; llm_scores and diversity by prompt_id.
/// A missing llm score with alpha > 0 excludes the pair (never invents a
/// default); a missing margin, or missing diversity with gamma != 0,
/// throws MissingScoreError. With alpha = 0 (resp. gamma = 0) the llm
/// (resp. diversity) input is optional and contributes exactly 0.
ImportanceResult importance_scores(std::span<const PreferencePair> pairs,
                                   const std::unordered_map<std::uint64_t, double>& margins,
                                   const std::unordered_map<std::uint64_t, int>& llm_scores,
                                   const std::unordered_map<std::uint64_t, double>& diversity,
                                   double alpha, double gamma);

/// Greedy capped top-K: scan in (importance desc, pair_id asc) order,
/// admitting a pair only while its prompt holds fewer than cap admitted
/// pairs. If a full scan admits fewer than K, the cap doubles and the scan
/// restarts from scratch; once the cap reaches the pair count the scan
/// admits everything and a shortfall is flagged instead of thrown. Pure
/// function of (scored, k, cap); input order never matters.
SelectionResult select_top_k(std::span<const ScoredPair> scored, std::uint64_t k,
                             std::uint64_t cap);

enum class BaselineMethod { kRandom, kHighReward, kLoss, kCoreset };

/// Reference selectors: seeded uniform sample, top-K by reward_w, top-K by
/// stored loss, or k-center coreset over prompt embeddings with the
/// highest-reward pair representing each chosen prompt. Only the random
/// method reads the seed. Throws MissingInputError when a method's inputs
/// (rewards, losses, embeddings) are absent.
SelectionResult select_baseline(std::span<const PreferencePair> pairs, BaselineMethod method,
                                std::uint64_t k, std::uint64_t seed,
                                const EmbeddingTable* embeddings = nullptr);

/// Farthest-point k-center over the table: start from seed_index (default:
/// the entry with the smallest id), repeatedly add the point farthest from
/// the chosen set, ties to the smaller id. Returns ids in pick order.
std::vector<std::uint64_t> kcenter_greedy(const EmbeddingTable& table, std::uint64_t k,
                                          std::optional<std::size_t> seed_index = std::nullopt);

}  // namespace fifa
