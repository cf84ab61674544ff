#pragma once

#include <cstdint>
#include <string>

#include "fifa/types.hpp"

namespace fifa {

/// Shortest decimal representation that round-trips to the same double.
/// Integral-valued doubles render without a trailing ".0" ("3", not "3.0").
std::string format_double(double v);

/// Canonical byte form of a config: fields in declaration order
/// (alpha, gamma, k_select, knn_k, prompt_cap, seed, distance_floor),
/// integers as decimal ASCII, reals via format_double, '\n'-separated.
std::string canonical_bytes(const FilterConfig& config);

/// Inverse of canonical_bytes. Throws ConfigError on malformed input.
FilterConfig parse_canonical(const std::string& bytes);

/// FNV-1a 64 over canonical_bytes(config). Pure, platform-independent.
std::uint64_t config_hash(const FilterConfig& config);

}  // namespace fifa
