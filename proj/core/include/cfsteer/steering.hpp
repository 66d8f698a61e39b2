#pragma once

// Contrastive steering vectors: v = mean_i (x_pos,i - x_neg,i) over last-token
// residual activations, and their injection as m * v at positions after the
// prompt.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfsteer/model.hpp"
#include "cfsteer/prompts.hpp"

namespace cfsteer {

/// How the positive/negative prompts of a contrast pair are built.
///   kCombined     h(s, c, q) - h(q)
///   kContextOnly  h(c, q)    - h(q)
///   kSystemOnly   h(s, c, q) - h(c, q)
///   kOptions      multiple-choice body + context letter vs. memory letter
enum class Scheme : std::uint8_t { kCombined = 0, kContextOnly = 1, kSystemOnly = 2, kOptions = 3 };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);  // "combined", "context_only", "system_only", "options"

using SourceHash = std::array<std::uint8_t, 32>;

struct ContrastPair {
  std::vector<float> positive;
  std::vector<float> negative;
  std::size_t layer = 0;
  std::string example_id;
};

class SteeringVector {
 public:
  /// Throws InvalidArgument on empty or non-finite values or sample_count 0.
  SteeringVector(std::size_t layer, std::vector<float> values, std::uint64_t sample_count, Scheme scheme,
                 const SourceHash& source_hash);

  std::size_t layer() const { return layer_; }
  const std::vector<float>& values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  std::uint64_t sample_count() const { return sample_count_; }
  Scheme scheme() const { return scheme_; }
  const SourceHash& source_hash() const { return source_hash_; }

  friend bool operator==(const SteeringVector&, const SteeringVector&) = default;

 private:
  std::size_t layer_;
  std::vector<float> values_;
  std::uint64_t sample_count_;
  Scheme scheme_;
  SourceHash source_hash_;
};

struct SteeringPlan {
  SteeringVector vector;
  float multiplier;

  SteeringPlan(SteeringVector v, float m);

  /// Injection at vector.layer(); the model sets the start position.
  Injection to_injection() const;
};

/// Greedy generation steered by `plan` (or unsteered when absent).
Generation generate(const Model& model, std::span<const TokenId> prompt, std::size_t max_new_tokens,
                    const std::optional<SteeringPlan>& plan, const GenerateOptions& options = {});

/// Elementwise positive - negative.
std::vector<float> pair_diff(const ContrastPair& pair);

/// Mean of pair diffs (accumulated in double, stored as float). The source
/// hash defaults to SHA-256 of the sorted example ids.
SteeringVector mean_vector(std::span<const ContrastPair> pairs, std::size_t layer, Scheme scheme,
                           const std::optional<SourceHash>& source_hash = std::nullopt);

/// Cosine similarity in double precision. Throws InvalidArgument for a zero
/// vector or a dimension mismatch.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(const SteeringVector& a, const SteeringVector& b);

/// SHA-256 over the length-prefixed fields of `examples`, in order.
SourceHash dataset_digest(std::span<const ConflictExample> examples);

std::string to_hex(const SourceHash& hash);

/// Per-layer contrast pairs for a list of examples.
struct ContrastSet {
  Scheme scheme = Scheme::kCombined;
  std::vector<std::vector<ContrastPair>> per_layer;  // [layer][used example]
  std::vector<ConflictExample> used_examples;  // in input order
  std::vector<std::string> skipped_ids;  // prompt did not fit the context window
  std::size_t letter_a_count = 0;        // options scheme: examples whose context option is (A)
  std::size_t letter_b_count = 0;
  SourceHash source_hash{};  // digest of the used examples

  std::size_t n_layers() const { return per_layer.size(); }

  /// mean_vector over the first `count` used examples (all when nullopt).
  /// The prefix vector's source hash covers only that prefix.
  SteeringVector vector(std::size_t layer, std::optional<std::size_t> count = std::nullopt) const;
};

struct ContrastOptions {
  Scheme scheme = Scheme::kCombined;
  std::uint64_t seed = 0;  // system-prompt sampling; one draw per example in input order
  std::size_t workers = 1;
};

/// Renders each example's positive/negative prompts for the scheme, runs one
/// forward pass per prompt and captures last-token residual inputs of every
/// layer. Examples whose prompts exceed max_seq_len are skipped. Throws
/// InvalidArgument when no example is usable.
ContrastSet build_contrast_activations(std::span<const ConflictExample> examples, const Model& model,
                                       const SystemPromptSet& prompts, const ContrastOptions& options);

/// The three ablation schemes from one capture of h(s,c,q), h(c,q), h(q) per
/// example, so combined = context_only + system_only pair by pair.
struct AblationSet {
  ContrastSet combined;
  ContrastSet context_only;
  ContrastSet system_only;
};

AblationSet build_ablation_activations(std::span<const ConflictExample> examples, const Model& model,
                                       const SystemPromptSet& prompts, std::uint64_t seed, std::size_t workers = 1);

}  // namespace cfsteer
