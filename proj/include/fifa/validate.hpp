#pragma once

#include <span>

#include "fifa/types.hpp"

namespace fifa {

/// Checks dataset-level invariants without mutating anything:
/// pair_id uniqueness, paired rewards, non-empty prompts, winner != loser.
ValidationReport validate_pairs(std::span<const PreferencePair> pairs);

}  // namespace fifa
