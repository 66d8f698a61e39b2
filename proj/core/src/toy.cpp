#include "cfsteer/toy.hpp"

#include <random>
#include <string>

#include "cfsteer/error.hpp"
#include "cfsteer/tokenizer.hpp"

namespace cfsteer::toy {
namespace {

constexpr std::uint32_t kDModel = 64;
constexpr std::uint32_t kHeads = 4;
constexpr std::uint32_t kHeadDim = kDModel / kHeads;
// Lowest-frequency rotary pair, so content matching survives position.
constexpr std::size_t kSlowPair = kHeadDim - 2;

std::string name(std::mt19937_64& rng) {
  static const char* const kSyllables[] = {"ka", "ro", "mi", "ta", "sel", "ven", "dor", "lu", "qua", "zi",
                                           "nor", "bel", "tra", "fen", "gal", "osk", "ri", "pe", "um", "har"};
  std::uniform_int_distribution<int> count(2, 3);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kSyllables) - 1);
  std::string out;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) out += kSyllables[pick(rng)];
  out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

}  // namespace

Weights conflict_model(const ConflictModelParams& p) {
  if (p.copy_layer >= p.n_layers || p.n_layers < 2) throw InvalidArgument("copy_layer must be in [1, n_layers)");
  ModelConfig cfg;
  cfg.n_layers = p.n_layers;
  cfg.d_model = kDModel;
  cfg.n_heads = kHeads;
  cfg.d_ff = 16;
  cfg.vocab_size = tokenizer::kVocabSize;
  cfg.max_seq_len = p.max_seq_len;
  cfg.rng_seed = p.seed;
  Weights w = Weights::zeros(cfg);

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<float> noise(-p.noise, p.noise);
  for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
    auto row = w.token_embedding.row(t);
    row[dims::kBias] = 1.0f;
    for (std::size_t j = dims::kNoise; j < kDModel; ++j) row[j] = noise(rng);
  }
  w.token_embedding.at('.', dims::kPeriod) = 1.0f;
  for (int k = 1; k <= 9; ++k) {
    const std::size_t t = '0' + k;
    w.token_embedding.at(t, dims::kDigit) = 1.0f;
    w.token_embedding.at(t, dims::kDigitId + k - 1) = 1.0f;
    w.token_embedding.at(t, dims::kPredEos) = p.eos_preference;
    w.unembedding.at(t, dims::kPredDigit + k - 1) = 1.0f;
  }
  w.token_embedding.at(']', dims::kPredSpace) = p.space_preference;
  w.token_embedding.at(' ', dims::kPredMemory) = p.memory_preference;
  w.token_embedding.at(kMemorizedToken, dims::kPredEos) = p.eos_preference;
  w.unembedding.at(' ', dims::kPredSpace) = 1.0f;
  w.unembedding.at(kMemorizedToken, dims::kPredMemory) = 1.0f;
  w.unembedding.at(tokenizer::kEos, dims::kPredEos) = 1.0f;

  // Layer 0, head 0: zero query -> uniform causal average of the period flag.
  {
    auto& l0 = w.layers[0];
    l0.wv.at(0, dims::kPeriod) = 1.0f;
    l0.wo.at(dims::kGate, 0) = p.gate_gain;
  }
  // Copy head: query from the gate, key from the digit flag, value carries
  // the digit identity into the prediction dims.
  {
    auto& lc = w.layers[p.copy_layer];
    lc.wq.at(kSlowPair, dims::kGate) = p.query_gain;
    lc.wk.at(kSlowPair, dims::kDigit) = p.key_gain;
    for (std::size_t k = 0; k < 9; ++k) {
      lc.wv.at(k, dims::kDigitId + k) = 1.0f;
      lc.wo.at(dims::kPredDigit + k, k) = p.copy_gain;
    }
  }
  w.validate();
  return w;
}

std::vector<ConflictExample> synthetic_conflicts(std::size_t n, std::uint64_t seed) {
  static const char* const kFillers[] = {
      "{N} is a vessel registered in the northern harbor.",
      "The crew of {N} keeps its records in a locked vault.",
      "Many travelers have asked about {N} over the years.",
      "{N} was refitted after a long winter at sea.",
      "Its captain rarely speaks about the cargo.",
      "Records about {N} were updated recently.",
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> digit(1, 9);
  std::uniform_int_distribution<int> n_fill(1, 4);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kFillers) - 1);

  std::vector<ConflictExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string entity = name(rng);
    const char code = static_cast<char>('0' + digit(rng));
    std::string context;
    const int fillers = n_fill(rng);
    const int answer_at = std::uniform_int_distribution<int>(0, fillers)(rng);
    for (int f = 0; f <= fillers; ++f) {
      if (!context.empty()) context += ' ';
      if (f == answer_at) {
        context += "The vault code of " + entity + " is " + code + ".";
      } else {
        std::string s = kFillers[pick(rng)];
        for (auto at = s.find("{N}"); at != std::string::npos; at = s.find("{N}")) s.replace(at, 3, entity);
        context += s;
      }
    }
    ConflictExample ex;
    ex.id = "toy-" + std::to_string(i);
    ex.question = "What is the vault code of " + entity + "?";
    ex.context = std::move(context);
    ex.original_answer = std::string(1, kMemorizedToken);
    ex.substituted_answer = std::string(1, code);
    ex.hops = Hops::kQA;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace cfsteer::toy
