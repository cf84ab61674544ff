#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fifa/types.hpp"

namespace fifa::io {

/// Pairs plus any unknown JSON keys from their source lines, kept aligned
/// by index so write-through preserves them.
struct PairDataset {
    std::vector<PreferencePair> pairs;
    std::vector<nlohmann::ordered_json> extras;

    std::size_t size() const { return pairs.size(); }
};

/// Reads a UTF-8 JSONL pair file. Known keys: pair_id (optional, assigned
/// sequentially when absent), prompt, winner, loser, reward_w, reward_l,
/// loss. prompt_id is derived from the trimmed prompt text. Malformed lines
/// abort with their line number; a reward key without its partner is a
/// schema violation.
PairDataset read_pairs(const std::filesystem::path& path);

/// Writes pairs as JSONL, known keys first in fixed order, then the
/// preserved unknown keys. Atomic (temp file + rename).
void write_pairs(const std::filesystem::path& path, const PairDataset& dataset);

/// Binary embedding file: header {magic "FIFAEMB1", version u32=1, dim u32,
/// count u64}, then count records of {prompt_id u64, dim x float32}, all
/// little-endian. Length must be exactly 24 + count*(8 + 4*dim).
EmbeddingTable read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

nlohmann::ordered_json manifest_to_json(const SelectionManifest& m);
SelectionManifest manifest_from_json(const nlohmann::ordered_json& j);

/// Sibling manifest path: final extension replaced by ".manifest.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& subset_path);

/// Writes the subset JSONL (selection order) and its sibling manifest.
/// Both writes are atomic; reruns over identical inputs are byte-identical.
void write_subset(const std::filesystem::path& subset_path, const PairDataset& subset,
                  const SelectionManifest& manifest);

/// Serializes `content` to a temp file in the target directory, then renames.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace fifa::io
