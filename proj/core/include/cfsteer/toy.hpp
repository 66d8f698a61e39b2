#pragma once

// Desk-scale fixtures: a hand-wired transformer that answers from "memory"
// unless a context-gate feature is strong, and a matching synthetic
// knowledge-conflict dataset.

#include <cstdint>
#include <vector>

#include "cfsteer/model.hpp"
#include "cfsteer/prompts.hpp"

namespace cfsteer::toy {

/// Residual-space layout of the conflict model.
namespace dims {
inline constexpr std::size_t kPeriod = 0;     // token is '.'
inline constexpr std::size_t kDigit = 1;      // token is '1'..'9'
inline constexpr std::size_t kGate = 2;       // written by the layer-0 averaging head
inline constexpr std::size_t kBias = 3;       // constant on every token
inline constexpr std::size_t kDigitId = 4;    // 9 dims, identity of '1'..'9'
inline constexpr std::size_t kPredSpace = 13;
inline constexpr std::size_t kPredMemory = 14;
inline constexpr std::size_t kPredEos = 15;
inline constexpr std::size_t kPredDigit = 16;  // 9 dims
inline constexpr std::size_t kNoise = 25;      // random per-token filler from here on
}  // namespace dims

struct ConflictModelParams {
  std::uint32_t n_layers = 4;
  std::uint32_t max_seq_len = 512;
  std::size_t copy_layer = 3;      // layer holding the context-copy head
  float gate_gain = 12.0f;         // layer-0 head: period density -> gate
  float query_gain = 1.0f;         // copy head: gate -> query
  float key_gain = 1.2f;           // copy head: digit flag -> key
  float copy_gain = 1.3f;          // copy head: digit identity -> digit prediction
  float memory_preference = 1.0f;  // ' ' predicts the memorized token
  float eos_preference = 2.0f;     // answers predict EOS
  float space_preference = 3.0f;   // "]" predicts ' '
  float noise = 0.05f;
  std::uint64_t seed = 7;
};

/// The memorized answer every conflict question collapses to.
inline constexpr char kMemorizedToken = '0';

/// Byte-level model (V = 258, d = 64, 4 heads). After "[/INST]" it emits a
/// space, then either the memorized '0' or, when attention onto the context
/// digit is sharp enough, a copy of that digit, then EOS. Attention sharpness
/// grows with the gate feature, which tracks the density of '.' tokens seen
/// so far (system instructions and context sentences), so adding the
/// contrastive direction pushes the model from memory toward context.
Weights conflict_model(const ConflictModelParams& params = {});

/// Synthetic conflicts: the context states a vault code 1..9 for a named
/// entity, the memorized answer is always "0". One to four filler sentences
/// vary the context length.
std::vector<ConflictExample> synthetic_conflicts(std::size_t n, std::uint64_t seed);

}  // namespace cfsteer::toy
