#pragma once

#include <string>
#include <string_view>

#include "cfsteer/model.hpp"

namespace cfsteer {

/// Byte-level tokenizer: ids 0..255 are raw bytes, then BOS and EOS.
namespace tokenizer {

inline constexpr TokenId kBos = 256;
inline constexpr TokenId kEos = 257;
inline constexpr std::uint32_t kVocabSize = 258;

/// BOS followed by the bytes of `text`.
TokenSequence encode(std::string_view text, bool add_bos = true);

/// Bytes back to text. BOS/EOS are dropped; ids >= 258 render as "<unk>".
std::string decode(std::span<const TokenId> ids);

}  // namespace tokenizer
}  // namespace cfsteer
