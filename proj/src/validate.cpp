#include "fifa/validate.hpp"

#include <cmath>
#include <unordered_set>

#include "fifa/hash.hpp"

namespace fifa {

void EmbeddingTable::add(std::uint64_t prompt_id, std::span<const float> vec) {
    if (dim_ == 0) dim_ = static_cast<std::uint32_t>(vec.size());
    if (vec.size() != dim_)
        throw FormatError("embedding dimension mismatch: expected " + std::to_string(dim_) +
                          ", got " + std::to_string(vec.size()));
    for (float x : vec)
        if (!std::isfinite(x))
            throw FormatError("non-finite embedding component for prompt " +
                              std::to_string(prompt_id));
    if (!index_.emplace(prompt_id, ids_.size()).second)
        throw DuplicateIdError("duplicate prompt_id " + std::to_string(prompt_id));
    ids_.push_back(prompt_id);
    data_.insert(data_.end(), vec.begin(), vec.end());
}

EmbeddingTable EmbeddingTable::subset(std::span<const std::uint64_t> prompt_ids) const {
    EmbeddingTable out(dim_);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(prompt_ids.size());
    for (std::uint64_t id : prompt_ids) {
        if (!seen.insert(id).second) continue;
        auto i = find(id);
        if (i != npos) out.add(id, row(i));
    }
    return out;
}

ValidationReport validate_pairs(std::span<const PreferencePair> pairs) {
    ValidationReport report;
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!seen.insert(p.pair_id).second) {
            ++report.duplicate_ids;
            report.duplicate_id_pairs.push_back(p.pair_id);
        }
        if (p.reward_w.has_value() != p.reward_l.has_value()) {
            ++report.partial_rewards;
            report.partial_reward_pairs.push_back(p.pair_id);
        } else if (!p.reward_w.has_value()) {
            ++report.missing_rewards;
        }
        if (trim(p.prompt_text).empty()) {
            ++report.empty_prompts;
            report.empty_prompt_pairs.push_back(p.pair_id);
        }
        if (p.winner_ref == p.loser_ref) {
            ++report.equal_refs;
            report.equal_ref_pairs.push_back(p.pair_id);
        }
    }
    return report;
}

}  // namespace fifa
