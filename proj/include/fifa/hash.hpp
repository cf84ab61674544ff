#pragma once

#include <cstdint>
#include <string_view>

namespace fifa {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a over raw bytes. Used for config hashing and prompt identity.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffsetBasis) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

/// Strips leading/trailing ASCII whitespace.
std::string_view trim(std::string_view s);

/// Prompt identity: FNV-1a of the trimmed prompt text, so identical prompts
/// share one id regardless of surrounding whitespace.
std::uint64_t prompt_id_of(std::string_view prompt_text);

}  // namespace fifa
