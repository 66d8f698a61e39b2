#pragma once

#include <filesystem>

#include "cfsteer/model.hpp"

namespace cfsteer {

// "CFTW" weight file, little-endian:
//
//   char[4]  magic "CFTW"
//   u32      version (1)
//   u32 x 8  n_layers, d_model, n_heads, d_ff, vocab_size, max_seq_len,
//            rng_seed low word, rng_seed high word
//   f32[]    token_embedding [V x d]
//            per layer: attn_norm [d], wq, wk, wv, wo [d x d], mlp_norm [d],
//                       w_up [d_ff x d], b_up [d_ff], w_down [d x d_ff], b_down [d]
//            final_norm [d], unembedding [V x d]
//   u32      CRC-32 of every byte after the magic
//
// Matrices are row-major (out x in).

inline constexpr std::uint32_t kWeightFileVersion = 1;

void save_weights(const Weights& weights, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);

}  // namespace cfsteer
