#include "cfsteer/tokenizer.hpp"

namespace cfsteer::tokenizer {

TokenSequence encode(std::string_view text, bool add_bos) {
  TokenSequence ids;
  ids.reserve(text.size() + 1);
  if (add_bos) ids.push_back(kBos);
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

std::string decode(std::span<const TokenId> ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (id == kBos || id == kEos) {
      continue;
    } else {
      out += "<unk>";
    }
  }
  return out;
}

}  // namespace cfsteer::tokenizer
