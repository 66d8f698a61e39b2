#pragma once

// Minimal decoder-only transformer with residual-stream hooks.
//
// Layer l maps its residual input x to
//   x_M = x + sum_h Attn_h(RMSNorm(x))          (post-attention residual)
//   x'  = x_M + MLP(RMSNorm(x_M))               (residual input of layer l+1)
// with causal multi-head attention and rotary position embeddings. Layers are
// indexed from 0. All arithmetic is float32.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace cfsteer {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

struct ModelConfig {
  std::uint32_t n_layers = 1;
  std::uint32_t d_model = 64;
  std::uint32_t n_heads = 4;
  std::uint32_t d_ff = 128;
  std::uint32_t vocab_size = 258;
  std::uint32_t max_seq_len = 512;
  std::uint64_t rng_seed = 0;

  std::uint32_t head_dim() const { return d_model / n_heads; }

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Dense row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct LayerWeights {
  std::vector<float> attn_norm;  // [d]
  Matrix wq, wk, wv, wo;         // [d x d], out x in
  std::vector<float> mlp_norm;   // [d]
  Matrix w_up;                   // [d_ff x d]
  std::vector<float> b_up;       // [d_ff]
  Matrix w_down;                 // [d x d_ff]
  std::vector<float> b_down;     // [d]

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct Weights {
  ModelConfig config;
  Matrix token_embedding;  // [V x d]
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;  // [d]
  Matrix unembedding;             // [V x d]

  /// All projections zero, all norm gains one.
  static Weights zeros(const ModelConfig& config);

  /// Every matrix and bias drawn from U[-0.08, 0.08] using config.rng_seed
  /// (mt19937_64, fill order = file order); norm gains are one.
  static Weights synthesize(const ModelConfig& config);

  /// Checks shapes against `config` and that every entry is finite.
  void validate() const;

  friend bool operator==(const Weights&, const Weights&) = default;
};

inline constexpr float kRmsNormEps = 1e-5f;
inline constexpr double kRopeBase = 10000.0;

enum class Site : std::uint8_t {
  kResidualInput,  // x_i^(l) as seen by layer l (after any injection)
  kPostAttention,  // x_{M,i}^(l)
  kPreInjection,   // x_i^(l) before the layer's injection is added
};

class PositionSelector {
 public:
  static PositionSelector last() { return {Kind::kLast, 0}; }
  static PositionSelector all() { return {Kind::kFrom, 0}; }
  static PositionSelector at(std::size_t i) { return {Kind::kIndex, i}; }
  static PositionSelector from(std::size_t i) { return {Kind::kFrom, i}; }

  bool matches(std::size_t position, std::size_t length) const;

 private:
  enum class Kind { kLast, kIndex, kFrom };
  PositionSelector(Kind k, std::size_t i) : kind_(k), index_(i) {}
  Kind kind_;
  std::size_t index_;
};

struct CaptureRequest {
  std::size_t layer = 0;
  PositionSelector positions = PositionSelector::last();
  Site site = Site::kResidualInput;
};

/// Adds multiplier * vector to the residual input of `layer` at every
/// position >= start_position.
struct Injection {
  std::size_t layer = 0;
  std::vector<float> vector;
  float multiplier = 0.0f;
  std::size_t start_position = 0;
};

class HookSpec {
 public:
  HookSpec& capture(std::size_t layer, PositionSelector positions, Site site = Site::kResidualInput);

  /// At most one injection per layer. Re-injecting the same vector with the
  /// same start position folds the multipliers into a single addition;
  /// anything else on an occupied layer throws InvalidArgument.
  HookSpec& inject(Injection injection);

  const std::vector<CaptureRequest>& captures() const { return captures_; }
  const std::vector<Injection>& injections() const { return injections_; }
  bool empty() const { return captures_.empty() && injections_.empty(); }

 private:
  std::vector<CaptureRequest> captures_;
  std::vector<Injection> injections_;
};

struct ActivationCapture {
  std::size_t layer = 0;
  std::size_t position = 0;
  Site site = Site::kResidualInput;
  std::vector<float> vector;
};

struct ForwardResult {
  Matrix logits;  // [len x V]; empty when logits were not requested
  std::vector<ActivationCapture> captures;
};

struct DecodeStats {
  std::size_t output_token_count = 0;
  double decode_seconds = 0.0;
  std::size_t steps = 0;
};

struct GenerateOptions {
  bool use_cache = true;
  /// Defaults to the byte tokenizer's EOS when the vocabulary contains it.
  std::optional<TokenId> eos_token;
};

struct Generation {
  TokenSequence output;  // generated tokens only, EOS excluded
  bool stopped_at_eos = false;
  DecodeStats stats;
};

class Model;

/// Single-threaded incremental decoding state (KV cache) over a shared Model.
class Session {
 public:
  explicit Session(const Model& model);

  /// Runs the token at the next position. Captures matching `hooks` are
  /// appended to `captures` with their request index; `logits` (size V) is
  /// written when non-empty.
  void feed(TokenId token, const HookSpec& hooks, std::size_t sequence_length,
            std::vector<std::pair<std::size_t, ActivationCapture>>* captures, std::span<float> logits);

  std::size_t position() const { return position_; }

 private:
  const Model* model_;
  std::size_t position_ = 0;
  std::vector<std::vector<float>> keys_;    // per layer, [pos x d]
  std::vector<std::vector<float>> values_;  // per layer, [pos x d]
  // scratch
  std::vector<float> x_, h_, q_, k_, v_, attn_, ff_, scores_;
};

/// Immutable model; safe to share across threads. Each call creates its own
/// Session.
class Model {
 public:
  explicit Model(Weights weights);
  explicit Model(std::shared_ptr<const Weights> weights);

  const ModelConfig& config() const { return weights_->config; }
  const Weights& weights() const { return *weights_; }

  ForwardResult forward(std::span<const TokenId> tokens, const HookSpec& hooks = {}, bool want_logits = true) const;

  /// Residual input of `layer` at the final position.
  std::vector<float> last_token_activation(std::span<const TokenId> tokens, std::size_t layer) const;

  /// Residual inputs of every layer at the final position, one forward pass.
  std::vector<std::vector<float>> last_token_activations(std::span<const TokenId> tokens) const;

  /// Greedy decoding (ties -> lowest id). When `steering` is present its
  /// start_position is overridden to prompt.size(), so only generated
  /// positions are steered.
  Generation generate(std::span<const TokenId> prompt, std::size_t max_new_tokens,
                      const std::optional<Injection>& steering = std::nullopt,
                      const GenerateOptions& options = {}) const;

 private:
  friend class Session;
  void check_hooks(const HookSpec& hooks) const;

  std::shared_ptr<const Weights> weights_;
  std::vector<float> rope_cos_;  // [max_seq_len x head_dim/2]
  std::vector<float> rope_sin_;
};

/// Index of the largest entry; ties resolved to the lowest index.
std::size_t argmax(std::span<const float> values);

}  // namespace cfsteer
