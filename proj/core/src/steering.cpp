#include "cfsteer/steering.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "binary_io.hpp"
#include "cfsteer/error.hpp"
#include "cfsteer/tokenizer.hpp"
#include "parallel.hpp"

namespace cfsteer {
namespace {

SourceHash sha256(std::span<const std::uint8_t> bytes) {
  SourceHash out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error("SHA-256 computation failed");
  }
  return out;
}

void put_string(detail::ByteWriter& w, std::string_view s) {
  w.u64(s.size());
  w.raw(s);
}

SourceHash id_digest(std::span<const ContrastPair> pairs) {
  std::vector<std::string_view> ids;
  ids.reserve(pairs.size());
  for (const auto& p : pairs) ids.push_back(p.example_id);
  std::sort(ids.begin(), ids.end());
  detail::ByteWriter w;
  for (auto id : ids) put_string(w, id);
  return sha256(w.data());
}

struct PromptPair {
  TokenSequence positive;
  TokenSequence negative;
};

std::vector<ContrastPair> to_pairs(std::vector<std::vector<float>>&& pos, std::vector<std::vector<float>>&& neg,
                                   const std::string& id) {
  std::vector<ContrastPair> out(pos.size());
  for (std::size_t l = 0; l < pos.size(); ++l) {
    out[l] = ContrastPair{std::move(pos[l]), std::move(neg[l]), l, id};
  }
  return out;
}

ContrastSet assemble(Scheme scheme, std::size_t n_layers, std::span<const ConflictExample> examples,
                     const std::vector<bool>& usable, std::vector<std::vector<ContrastPair>>& by_example) {
  ContrastSet set;
  set.scheme = scheme;
  set.per_layer.resize(n_layers);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!usable[i]) {
      set.skipped_ids.push_back(examples[i].id);
      continue;
    }
    set.used_examples.push_back(examples[i]);
    for (std::size_t l = 0; l < n_layers; ++l) set.per_layer[l].push_back(std::move(by_example[i][l]));
  }
  if (set.used_examples.empty()) {
    throw InvalidArgument("no usable examples: every prompt exceeds the model context window");
  }
  set.source_hash = dataset_digest(set.used_examples);
  return set;
}

}  // namespace

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kCombined:
      return "combined";
    case Scheme::kContextOnly:
      return "context_only";
    case Scheme::kSystemOnly:
      return "system_only";
    case Scheme::kOptions:
      return "options";
  }
  return "combined";
}

Scheme parse_scheme(std::string_view text) {
  std::string s(text);
  std::replace(s.begin(), s.end(), '-', '_');
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "combined" || s == "comb") return Scheme::kCombined;
  if (s == "context_only" || s == "ctx") return Scheme::kContextOnly;
  if (s == "system_only" || s == "sys") return Scheme::kSystemOnly;
  if (s == "options" || s == "caa") return Scheme::kOptions;
  throw InvalidArgument("unknown scheme \"" + std::string(text) + "\"");
}

SteeringVector::SteeringVector(std::size_t layer, std::vector<float> values, std::uint64_t sample_count,
                               Scheme scheme, const SourceHash& source_hash)
    : layer_(layer), values_(std::move(values)), sample_count_(sample_count), scheme_(scheme),
      source_hash_(source_hash) {
  if (values_.empty()) throw InvalidArgument("steering vector is empty");
  if (sample_count_ < 1) throw InvalidArgument("steering vector sample_count must be >= 1");
  for (float v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("steering vector has a non-finite entry");
  }
}

SteeringPlan::SteeringPlan(SteeringVector v, float m) : vector(std::move(v)), multiplier(m) {
  if (!std::isfinite(multiplier)) throw InvalidArgument("steering multiplier must be finite");
}

Injection SteeringPlan::to_injection() const { return Injection{vector.layer(), vector.values(), multiplier, 0}; }

Generation generate(const Model& model, std::span<const TokenId> prompt, std::size_t max_new_tokens,
                    const std::optional<SteeringPlan>& plan, const GenerateOptions& options) {
  if (!plan) return model.generate(prompt, max_new_tokens, std::nullopt, options);
  return model.generate(prompt, max_new_tokens, plan->to_injection(), options);
}

std::vector<float> pair_diff(const ContrastPair& pair) {
  if (pair.positive.size() != pair.negative.size()) {
    throw InvalidArgument("contrast pair dimension mismatch: " + std::to_string(pair.positive.size()) + " vs " +
                          std::to_string(pair.negative.size()));
  }
  std::vector<float> out(pair.positive.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pair.positive[i] - pair.negative[i];
  return out;
}

SteeringVector mean_vector(std::span<const ContrastPair> pairs, std::size_t layer, Scheme scheme,
                           const std::optional<SourceHash>& source_hash) {
  if (pairs.empty()) throw InvalidArgument("mean_vector needs at least one pair");
  const std::size_t dim = pairs.front().positive.size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& pair : pairs) {
    if (pair.layer != layer) {
      throw InvalidArgument("pair for example " + pair.example_id + " is from layer " + std::to_string(pair.layer) +
                            ", expected " + std::to_string(layer));
    }
    if (pair.positive.size() != dim) throw InvalidArgument("pairs have mixed dimensions");
    const auto diff = pair_diff(pair);
    for (std::size_t i = 0; i < dim; ++i) acc[i] += diff[i];
  }
  std::vector<float> values(dim);
  const double n = static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < dim; ++i) values[i] = static_cast<float>(acc[i] / n);
  return SteeringVector(layer, std::move(values), pairs.size(), scheme,
                        source_hash ? *source_hash : id_digest(pairs));
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine is undefined for a zero vector");
  // sqrt(na * nb) == na exactly when a == b, so self-similarity is exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double cosine(const SteeringVector& a, const SteeringVector& b) { return cosine(a.values(), b.values()); }

SourceHash dataset_digest(std::span<const ConflictExample> examples) {
  detail::ByteWriter w;
  for (const auto& ex : examples) {
    put_string(w, ex.id);
    put_string(w, ex.question);
    put_string(w, ex.context);
    put_string(w, ex.original_answer);
    put_string(w, ex.substituted_answer);
    put_string(w, to_string(ex.hops));
  }
  return sha256(w.data());
}

std::string to_hex(const SourceHash& hash) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : hash) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

SteeringVector ContrastSet::vector(std::size_t layer, std::optional<std::size_t> count) const {
  if (layer >= per_layer.size()) throw InvalidArgument("layer " + std::to_string(layer) + " out of range");
  const auto& pairs = per_layer[layer];
  const std::size_t n = count.value_or(pairs.size());
  if (n == 0 || n > pairs.size()) {
    throw InvalidArgument("prefix size " + std::to_string(n) + " outside [1, " + std::to_string(pairs.size()) + "]");
  }
  // Sets assembled by hand may carry pairs without example records; those
  // fall back to the digest of the pair ids.
  std::optional<SourceHash> hash;
  if (n == pairs.size() && used_examples.size() == pairs.size()) {
    hash = source_hash;
  } else if (n <= used_examples.size()) {
    hash = dataset_digest(std::span(used_examples).first(n));
  }
  return mean_vector(std::span(pairs).first(n), layer, scheme, hash);
}

ContrastSet build_contrast_activations(std::span<const ConflictExample> examples, const Model& model,
                                       const SystemPromptSet& prompts, const ContrastOptions& options) {
  if (examples.empty()) throw InvalidArgument("build_contrast_activations needs at least one example");
  const std::size_t max_len = model.config().max_seq_len;

  // Render sequentially so sampling and letter assignment do not depend on
  // the worker count.
  std::mt19937_64 rng(options.seed);
  std::vector<PromptPair> rendered(examples.size());
  std::vector<bool> usable(examples.size(), false);
  std::size_t used = 0, letter_a = 0, letter_b = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const std::string& variant = sample_variant(prompts, rng);
    std::string pos, neg;
    switch (options.scheme) {
      case Scheme::kCombined:
        pos = render_positive(ex, variant).text;
        neg = render_negative(ex).text;
        break;
      case Scheme::kContextOnly:
        pos = render_context_question(ex).text;
        neg = render_negative(ex).text;
        break;
      case Scheme::kSystemOnly:
        pos = render_positive(ex, variant).text;
        neg = render_context_question(ex).text;
        break;
      case Scheme::kOptions: {
        // Alternate over usable examples; the letter only changes the option
        // order, so the length check can use either rendering.
        const auto letter = used % 2 == 0 ? OptionLetter::kA : OptionLetter::kB;
        auto [p, n] = render_options(ex, letter);
        pos = std::move(p.text);
        neg = std::move(n.text);
        break;
      }
    }
    PromptPair pair{tokenizer::encode(pos), tokenizer::encode(neg)};
    if (pair.positive.size() > max_len || pair.negative.size() > max_len) continue;
    if (options.scheme == Scheme::kOptions) (used % 2 == 0 ? letter_a : letter_b)++;
    usable[i] = true;
    rendered[i] = std::move(pair);
    ++used;
  }

  std::vector<std::vector<ContrastPair>> by_example(examples.size());
  detail::parallel_for(examples.size(), options.workers, [&](std::size_t i) {
    if (!usable[i]) return;
    detail::for_example(examples[i].id, [&] {
      auto pos = model.last_token_activations(rendered[i].positive);
      auto neg = model.last_token_activations(rendered[i].negative);
      by_example[i] = to_pairs(std::move(pos), std::move(neg), examples[i].id);
    });
  });

  ContrastSet set = assemble(options.scheme, model.config().n_layers, examples, usable, by_example);
  set.letter_a_count = letter_a;
  set.letter_b_count = letter_b;
  return set;
}

AblationSet build_ablation_activations(std::span<const ConflictExample> examples, const Model& model,
                                       const SystemPromptSet& prompts, std::uint64_t seed, std::size_t workers) {
  if (examples.empty()) throw InvalidArgument("build_ablation_activations needs at least one example");
  const std::size_t max_len = model.config().max_seq_len;
  const std::size_t n_layers = model.config().n_layers;

  struct Triple {
    TokenSequence scq, cq, q;
  };
  std::mt19937_64 rng(seed);
  std::vector<Triple> rendered(examples.size());
  std::vector<bool> usable(examples.size(), false);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const std::string& variant = sample_variant(prompts, rng);
    Triple t{tokenizer::encode(render_positive(ex, variant).text), tokenizer::encode(render_context_question(ex).text),
             tokenizer::encode(render_negative(ex).text)};
    if (t.scq.size() > max_len || t.cq.size() > max_len || t.q.size() > max_len) continue;
    usable[i] = true;
    rendered[i] = std::move(t);
  }

  std::vector<std::vector<ContrastPair>> comb(examples.size()), ctx(examples.size()), sys(examples.size());
  detail::parallel_for(examples.size(), workers, [&](std::size_t i) {
    if (!usable[i]) return;
    const auto& id = examples[i].id;
    const auto [h_scq, h_cq, h_q] = detail::for_example(id, [&] {
      return std::tuple(model.last_token_activations(rendered[i].scq), model.last_token_activations(rendered[i].cq),
                        model.last_token_activations(rendered[i].q));
    });
    comb[i].resize(n_layers);
    ctx[i].resize(n_layers);
    sys[i].resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
      comb[i][l] = ContrastPair{h_scq[l], h_q[l], l, id};
      ctx[i][l] = ContrastPair{h_cq[l], h_q[l], l, id};
      sys[i][l] = ContrastPair{h_scq[l], h_cq[l], l, id};
    }
  });

  return AblationSet{assemble(Scheme::kCombined, n_layers, examples, usable, comb),
                     assemble(Scheme::kContextOnly, n_layers, examples, usable, ctx),
                     assemble(Scheme::kSystemOnly, n_layers, examples, usable, sys)};
}

}  // namespace cfsteer
