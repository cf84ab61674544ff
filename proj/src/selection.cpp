#include "fifa/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "fifa/errors.hpp"

namespace fifa {
namespace {

// Canonical scan order shared by selection and its tests.
void sort_by_importance(std::vector<const ScoredPair*>& v) {
    std::sort(v.begin(), v.end(), [](const ScoredPair* a, const ScoredPair* b) {
        if (a->importance != b->importance) return a->importance > b->importance;
        return a->pair_id < b->pair_id;
    });
}

double require_finite(double value, const char* what, std::uint64_t id) {
    if (!std::isfinite(value))
        throw NonFiniteError(std::string(what) + " for id " + std::to_string(id) +
                             " is not finite");
    return value;
}

}  // namespace

ImportanceResult importance_scores(std::span<const PreferencePair> pairs,
                                   const std::unordered_map<std::uint64_t, double>& margins,
                                   const std::unordered_map<std::uint64_t, int>& llm_scores,
                                   const std::unordered_map<std::uint64_t, double>& diversity,
                                   double alpha, double gamma) {
    if (!std::isfinite(alpha) || !std::isfinite(gamma))
        throw ConfigError("alpha and gamma must be finite");
    ImportanceResult result;
    result.scored.reserve(pairs.size());
    for (const PreferencePair& pair : pairs) {
        ScoredPair sp;
        sp.pair_id = pair.pair_id;
        sp.prompt_id = pair.prompt_id;

        auto margin_it = margins.find(pair.pair_id);
        if (margin_it == margins.end())
            throw MissingScoreError("no margin for pair " + std::to_string(pair.pair_id));
        sp.margin = require_finite(margin_it->second, "margin", pair.pair_id);

        double llm_term = 0.0;
        if (alpha != 0.0) {
            auto llm_it = llm_scores.find(pair.prompt_id);
            if (llm_it == llm_scores.end()) {
                result.excluded_unscored.push_back(pair.pair_id);
                continue;
            }
            sp.llm_score = llm_it->second;
            llm_term = alpha * static_cast<double>(llm_it->second);
        } else if (auto llm_it = llm_scores.find(pair.prompt_id); llm_it != llm_scores.end()) {
            sp.llm_score = llm_it->second;
        }

        double div_term = 0.0;
        auto div_it = diversity.find(pair.prompt_id);
        if (div_it != diversity.end()) {
            sp.diversity_term = require_finite(div_it->second, "diversity term", pair.prompt_id);
            div_term = gamma * sp.diversity_term;
        } else if (gamma != 0.0) {
            throw MissingScoreError("no diversity term for prompt " +
                                    std::to_string(pair.prompt_id));
        }

        sp.importance = sp.margin + llm_term + div_term;
        require_finite(sp.importance, "importance", pair.pair_id);
        sp.reward_disagrees_label =
            pair.reward_w.has_value() && pair.reward_l.has_value() && *pair.reward_w < *pair.reward_l;
        result.scored.push_back(std::move(sp));
    }
    return result;
}

SelectionResult select_top_k(std::span<const ScoredPair> scored, std::uint64_t k,
                             std::uint64_t cap) {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (cap < 1) throw ConfigError("prompt cap must be at least 1");

    std::vector<const ScoredPair*> order;
    order.reserve(scored.size());
    for (const ScoredPair& sp : scored) order.push_back(&sp);
    sort_by_importance(order);

    SelectionResult result;
    std::unordered_map<std::uint64_t, std::uint64_t> admitted;
    std::uint64_t cap_eff = cap;
    while (true) {
        admitted.clear();
        result.selected.clear();
        for (const ScoredPair* sp : order) {
            std::uint64_t& count = admitted[sp->prompt_id];
            if (count >= cap_eff) continue;
            ++count;
            result.selected.push_back(sp->pair_id);
            if (result.selected.size() == k) break;
        }
        if (result.selected.size() == k) break;
        if (cap_eff >= scored.size()) {
            result.shortfall = true;  // every pair already admissible
            break;
        }
        cap_eff *= 2;
        ++result.cap_doublings;
    }
    result.cap_in_effect = cap_eff;
    return result;
}

std::vector<std::uint64_t> kcenter_greedy(const EmbeddingTable& table, std::uint64_t k,
                                          std::optional<std::size_t> seed_index) {
    const std::size_t n = table.size();
    const std::size_t d = table.dim();
    if (k < 1) throw ConfigError("k must be at least 1");
    if (n < k)
        throw TooFewPointsError("k-center with k=" + std::to_string(k) + " needs at least " +
                                std::to_string(k) + " points, got " + std::to_string(n));

    std::size_t seed = 0;
    if (seed_index) {
        if (*seed_index >= n) throw ConfigError("seed index out of range");
        seed = *seed_index;
    } else {
        for (std::size_t i = 1; i < n; ++i)
            if (table.ids()[i] < table.ids()[seed]) seed = i;
    }

    auto dist2 = [&](std::size_t a, std::size_t b) {
        const float* pa = table.row(a).data();
        const float* pb = table.row(b).data();
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            double diff = static_cast<double>(pa[t]) - static_cast<double>(pb[t]);
            s += diff * diff;
        }
        return s;
    };

    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::vector<std::uint64_t> chosen;
    chosen.reserve(k);
    std::size_t current = seed;
    chosen.push_back(table.ids()[current]);
    min_d2[current] = -1.0;  // marks membership
    while (chosen.size() < k) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (min_d2[i] < 0.0) continue;
            double d2v = dist2(i, current);
            if (d2v < min_d2[i]) min_d2[i] = d2v;
            if (best == n || min_d2[i] > min_d2[best] ||
                (min_d2[i] == min_d2[best] && table.ids()[i] < table.ids()[best]))
                best = i;
        }
        current = best;
        chosen.push_back(table.ids()[current]);
        min_d2[current] = -1.0;
    }
    return chosen;
}

SelectionResult select_baseline(std::span<const PreferencePair> pairs, BaselineMethod method,
                                std::uint64_t k, std::uint64_t seed,
                                const EmbeddingTable* embeddings) {
    if (k < 1) throw ConfigError("k must be at least 1");
    SelectionResult result;
    result.cap_in_effect = pairs.size();  // baselines apply no per-prompt cap

    auto top_by = [&](auto key, const char* missing_what) {
        struct Entry {
            double score;
            std::uint64_t id;
        };
        std::vector<Entry> entries;
        entries.reserve(pairs.size());
        for (const PreferencePair& p : pairs) {
            std::optional<double> v = key(p);
            if (!v)
                throw MissingInputError(std::string(missing_what) + " missing for pair " +
                                        std::to_string(p.pair_id));
            entries.push_back({require_finite(*v, missing_what, p.pair_id), p.pair_id});
        }
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.id < b.id;
        });
        for (const Entry& e : entries) {
            if (result.selected.size() == k) break;
            result.selected.push_back(e.id);
        }
    };

    switch (method) {
        case BaselineMethod::kRandom: {
            std::vector<std::uint64_t> ids;
            ids.reserve(pairs.size());
            for (const PreferencePair& p : pairs) ids.push_back(p.pair_id);
            std::sort(ids.begin(), ids.end());  // permutation-invariant base order
            std::mt19937_64 rng(seed);
            // Partial Fisher-Yates; modulo draw keeps results identical
            // across platforms (std::uniform_int_distribution does not).
            std::size_t take = std::min<std::size_t>(k, ids.size());
            for (std::size_t i = 0; i < take; ++i) {
                std::size_t j = i + static_cast<std::size_t>(rng() % (ids.size() - i));
                std::swap(ids[i], ids[j]);
                result.selected.push_back(ids[i]);
            }
            break;
        }
        case BaselineMethod::kHighReward:
            top_by([](const PreferencePair& p) { return p.reward_w; }, "reward_w");
            break;
        case BaselineMethod::kLoss:
            top_by([](const PreferencePair& p) { return p.precomputed_loss; }, "loss");
            break;
        case BaselineMethod::kCoreset: {
            if (embeddings == nullptr || embeddings->size() == 0)
                throw MissingInputError("coreset selection requires prompt embeddings");
            // Best (highest reward_w) pair per unique prompt; rewards required.
            std::unordered_map<std::uint64_t, const PreferencePair*> representative;
            for (const PreferencePair& p : pairs) {
                if (!p.reward_w)
                    throw MissingInputError("reward_w missing for pair " +
                                            std::to_string(p.pair_id));
                auto [it, inserted] = representative.emplace(p.prompt_id, &p);
                if (inserted) continue;
                const PreferencePair* cur = it->second;
                if (*p.reward_w > *cur->reward_w ||
                    (*p.reward_w == *cur->reward_w && p.pair_id < cur->pair_id))
                    it->second = &p;
            }
            std::vector<std::uint64_t> prompt_ids;
            prompt_ids.reserve(representative.size());
            for (const auto& [pid, rep] : representative) prompt_ids.push_back(pid);
            EmbeddingTable prompt_table = embeddings->subset(prompt_ids);
            if (prompt_table.size() < representative.size())
                throw MissingInputError("embeddings missing for " +
                                        std::to_string(representative.size() -
                                                       prompt_table.size()) +
                                        " prompts");
            std::uint64_t want = std::min<std::uint64_t>(k, prompt_table.size());
            for (std::uint64_t pid : kcenter_greedy(prompt_table, want))
                result.selected.push_back(representative.at(pid)->pair_id);
            break;
        }
    }
    result.shortfall = result.selected.size() < k;
    return result;
}

}  // namespace fifa
