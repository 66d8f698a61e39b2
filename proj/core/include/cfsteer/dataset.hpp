#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfsteer/prompts.hpp"
#include "cfsteer/steering.hpp"

namespace cfsteer {

// Dataset file: one JSON object per line with string fields
//   id, question, context, original_answer, substituted_answer, hops
// hops is one of "QA", "MR", "MC". Blank lines are ignored; LF and CRLF are
// both accepted.

std::vector<ConflictExample> parse_dataset(std::string_view text);
std::vector<ConflictExample> load_dataset(const std::filesystem::path& path);
void save_dataset(std::span<const ConflictExample> examples, const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> select_ids;
  std::vector<std::string> eval_ids;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Seeded shuffle, then the first n_train ids go to train, the next n_select
/// to select, the next n_eval to eval.
DatasetSplit split(std::span<const ConflictExample> examples, std::uint64_t seed, std::size_t n_train,
                   std::size_t n_select, std::size_t n_eval);

/// Examples whose ids appear in `ids`, in the order of `ids`.
std::vector<ConflictExample> select_examples(std::span<const ConflictExample> examples,
                                             std::span<const std::string> ids);

// Vector file, little-endian:
//   char[4] "CFSV" | u32 version (1) | u32 layer | u32 dim | u64 sample_count |
//   u8 scheme | u8[32] source hash | f32[dim] values | u32 CRC-32 of every byte
//   after the magic

inline constexpr std::uint32_t kVectorFileVersion = 1;

void save_vector(const SteeringVector& vector, const std::filesystem::path& path);
SteeringVector load_vector(const std::filesystem::path& path);

}  // namespace cfsteer
