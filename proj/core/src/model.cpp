#include "cfsteer/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "cfsteer/error.hpp"
#include "cfsteer/tokenizer.hpp"

namespace cfsteer {
namespace {

std::string str(std::size_t v) { return std::to_string(v); }

void check_finite(std::span<const float> xs, const char* what) {
  for (float x : xs) {
    if (!std::isfinite(x)) throw InvalidArgument(std::string("non-finite entry in ") + what);
  }
}

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidArgument(std::string("shape mismatch for ") + what + ": " + str(got) + " != " + str(want));
  }
}

void check_matrix(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows != rows || m.cols != cols || m.data.size() != rows * cols) {
    throw InvalidArgument(std::string("shape mismatch for ") + what + ": got " + str(m.rows) + "x" + str(m.cols) +
                          ", want " + str(rows) + "x" + str(cols));
  }
  check_finite(m.data, what);
}

void rms_norm(std::span<const float> x, std::span<const float> gain, std::span<float> out) {
  float ss = 0.0f;
  for (float v : x) ss += v * v;
  const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + kRmsNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

// out = m * x
void matvec(const Matrix& m, std::span<const float> x, std::span<float> out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const float* row = m.data.data() + r * m.cols;
    float acc = 0.0f;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

float gelu(float x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(kC * (x + 0.044715f * x * x * x)));
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1) throw InvalidArgument("n_layers must be >= 1");
  if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0) {
    throw InvalidArgument("d_model must be a positive multiple of n_heads");
  }
  if (head_dim() % 2 != 0) throw InvalidArgument("head dimension must be even for rotary embeddings");
  if (d_ff < 1) throw InvalidArgument("d_ff must be >= 1");
  if (vocab_size < 2) throw InvalidArgument("vocab_size must be >= 2");
  if (max_seq_len < 2) throw InvalidArgument("max_seq_len must be >= 2");
}

Weights Weights::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model, ff = config.d_ff, vocab = config.vocab_size;
  Weights w;
  w.config = config;
  w.token_embedding = Matrix(vocab, d);
  w.layers.resize(config.n_layers);
  for (auto& layer : w.layers) {
    layer.attn_norm.assign(d, 1.0f);
    layer.wq = Matrix(d, d);
    layer.wk = Matrix(d, d);
    layer.wv = Matrix(d, d);
    layer.wo = Matrix(d, d);
    layer.mlp_norm.assign(d, 1.0f);
    layer.w_up = Matrix(ff, d);
    layer.b_up.assign(ff, 0.0f);
    layer.w_down = Matrix(d, ff);
    layer.b_down.assign(d, 0.0f);
  }
  w.final_norm.assign(d, 1.0f);
  w.unembedding = Matrix(vocab, d);
  return w;
}

Weights Weights::synthesize(const ModelConfig& config) {
  Weights w = zeros(config);
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<float> dist(-0.08f, 0.08f);
  auto fill = [&](std::span<float> xs) {
    for (float& x : xs) x = dist(rng);
  };
  fill(w.token_embedding.data);
  for (auto& layer : w.layers) {
    fill(layer.wq.data);
    fill(layer.wk.data);
    fill(layer.wv.data);
    fill(layer.wo.data);
    fill(layer.w_up.data);
    fill(layer.b_up);
    fill(layer.w_down.data);
    fill(layer.b_down);
  }
  fill(w.unembedding.data);
  return w;
}

void Weights::validate() const {
  config.validate();
  const std::size_t d = config.d_model, ff = config.d_ff, vocab = config.vocab_size;
  check_matrix(token_embedding, vocab, d, "token_embedding");
  check_size(layers.size(), config.n_layers, "layers");
  for (const auto& layer : layers) {
    check_size(layer.attn_norm.size(), d, "attn_norm");
    check_finite(layer.attn_norm, "attn_norm");
    check_matrix(layer.wq, d, d, "wq");
    check_matrix(layer.wk, d, d, "wk");
    check_matrix(layer.wv, d, d, "wv");
    check_matrix(layer.wo, d, d, "wo");
    check_size(layer.mlp_norm.size(), d, "mlp_norm");
    check_finite(layer.mlp_norm, "mlp_norm");
    check_matrix(layer.w_up, ff, d, "w_up");
    check_size(layer.b_up.size(), ff, "b_up");
    check_finite(layer.b_up, "b_up");
    check_matrix(layer.w_down, d, ff, "w_down");
    check_size(layer.b_down.size(), d, "b_down");
    check_finite(layer.b_down, "b_down");
  }
  check_size(final_norm.size(), d, "final_norm");
  check_finite(final_norm, "final_norm");
  check_matrix(unembedding, vocab, d, "unembedding");
}

bool PositionSelector::matches(std::size_t position, std::size_t length) const {
  switch (kind_) {
    case Kind::kLast:
      return position + 1 == length;
    case Kind::kIndex:
      return position == index_;
    case Kind::kFrom:
      return position >= index_;
  }
  return false;
}

HookSpec& HookSpec::capture(std::size_t layer, PositionSelector positions, Site site) {
  captures_.push_back({layer, positions, site});
  return *this;
}

HookSpec& HookSpec::inject(Injection injection) {
  for (auto& existing : injections_) {
    if (existing.layer != injection.layer) continue;
    if (existing.vector == injection.vector && existing.start_position == injection.start_position) {
      existing.multiplier += injection.multiplier;
      return *this;
    }
    throw InvalidArgument("layer " + str(injection.layer) + " already has an injection");
  }
  injections_.push_back(std::move(injection));
  return *this;
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------

Model::Model(Weights weights) : Model(std::make_shared<const Weights>(std::move(weights))) {}

Model::Model(std::shared_ptr<const Weights> weights) : weights_(std::move(weights)) {
  if (!weights_) throw InvalidArgument("null weights");
  weights_->validate();
  const auto& cfg = weights_->config;
  const std::size_t half = cfg.head_dim() / 2;
  rope_cos_.resize(cfg.max_seq_len * half);
  rope_sin_.resize(cfg.max_seq_len * half);
  for (std::size_t pos = 0; pos < cfg.max_seq_len; ++pos) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta = std::pow(kRopeBase, -2.0 * static_cast<double>(i) / cfg.head_dim());
      const double angle = static_cast<double>(pos) * theta;
      rope_cos_[pos * half + i] = static_cast<float>(std::cos(angle));
      rope_sin_[pos * half + i] = static_cast<float>(std::sin(angle));
    }
  }
}

void Model::check_hooks(const HookSpec& hooks) const {
  const auto& cfg = config();
  for (const auto& c : hooks.captures()) {
    if (c.layer >= cfg.n_layers) {
      throw InvalidArgument("capture layer " + str(c.layer) + " out of range [0, " + str(cfg.n_layers) + ")");
    }
  }
  for (const auto& inj : hooks.injections()) {
    if (inj.layer >= cfg.n_layers) {
      throw InvalidArgument("injection layer " + str(inj.layer) + " out of range [0, " + str(cfg.n_layers) + ")");
    }
    if (inj.vector.size() != cfg.d_model) {
      throw InvalidArgument("injection vector has dimension " + str(inj.vector.size()) + ", model has " +
                            str(cfg.d_model));
    }
    if (!std::isfinite(inj.multiplier)) throw InvalidArgument("injection multiplier is not finite");
  }
}

Session::Session(const Model& model) : model_(&model) {
  const auto& cfg = model.config();
  const std::size_t d = cfg.d_model;
  keys_.resize(cfg.n_layers);
  values_.resize(cfg.n_layers);
  x_.resize(d);
  h_.resize(d);
  q_.resize(d);
  k_.resize(d);
  v_.resize(d);
  attn_.resize(d);
  ff_.resize(cfg.d_ff);
  scores_.reserve(cfg.max_seq_len);
}

void Session::feed(TokenId token, const HookSpec& hooks, std::size_t sequence_length,
                   std::vector<std::pair<std::size_t, ActivationCapture>>* captures, std::span<float> logits) {
  const Model& model = *model_;
  const Weights& w = model.weights();
  const ModelConfig& cfg = w.config;
  const std::size_t d = cfg.d_model;
  const std::size_t n_heads = cfg.n_heads;
  const std::size_t hd = cfg.head_dim();
  const std::size_t half = hd / 2;
  const std::size_t pos = position_;

  if (pos >= cfg.max_seq_len) {
    throw InvalidArgument("sequence length exceeds max_seq_len " + str(cfg.max_seq_len));
  }
  if (token >= cfg.vocab_size) {
    throw InvalidArgument("token id " + str(token) + " outside vocabulary of size " + str(cfg.vocab_size));
  }

  auto record = [&](std::size_t layer, Site site, std::span<const float> x) {
    if (captures == nullptr) return;
    const auto& reqs = hooks.captures();
    for (std::size_t r = 0; r < reqs.size(); ++r) {
      if (reqs[r].layer == layer && reqs[r].site == site && reqs[r].positions.matches(pos, sequence_length)) {
        captures->emplace_back(r, ActivationCapture{layer, pos, site, std::vector<float>(x.begin(), x.end())});
      }
    }
  };

  auto rope = [&](std::span<float> vec) {
    const float* cs = model.rope_cos_.data() + pos * half;
    const float* sn = model.rope_sin_.data() + pos * half;
    for (std::size_t h = 0; h < n_heads; ++h) {
      float* head = vec.data() + h * hd;
      for (std::size_t i = 0; i < half; ++i) {
        const float a = head[2 * i];
        const float b = head[2 * i + 1];
        head[2 * i] = a * cs[i] - b * sn[i];
        head[2 * i + 1] = a * sn[i] + b * cs[i];
      }
    }
  };

  const auto emb = w.token_embedding.row(token);
  std::copy(emb.begin(), emb.end(), x_.begin());

  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];

    record(l, Site::kPreInjection, x_);
    for (const auto& inj : hooks.injections()) {
      if (inj.layer == l && pos >= inj.start_position) {
        for (std::size_t j = 0; j < d; ++j) x_[j] += inj.multiplier * inj.vector[j];
      }
    }
    record(l, Site::kResidualInput, x_);

    // attention
    rms_norm(x_, lw.attn_norm, h_);
    matvec(lw.wq, h_, q_);
    matvec(lw.wk, h_, k_);
    matvec(lw.wv, h_, v_);
    rope(q_);
    rope(k_);
    auto& kc = keys_[l];
    auto& vc = values_[l];
    kc.insert(kc.end(), k_.begin(), k_.end());
    vc.insert(vc.end(), v_.begin(), v_.end());

    const std::size_t n_ctx = pos + 1;
    scores_.resize(n_ctx);
    std::fill(attn_.begin(), attn_.end(), 0.0f);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const float* qh = q_.data() + h * hd;
      float max_score = -INFINITY;
      for (std::size_t t = 0; t < n_ctx; ++t) {
        const float* kh = kc.data() + t * d + h * hd;
        float s = 0.0f;
        for (std::size_t i = 0; i < hd; ++i) s += qh[i] * kh[i];
        s *= scale;
        scores_[t] = s;
        max_score = std::max(max_score, s);
      }
      float denom = 0.0f;
      for (std::size_t t = 0; t < n_ctx; ++t) {
        scores_[t] = std::exp(scores_[t] - max_score);
        denom += scores_[t];
      }
      float* out = attn_.data() + h * hd;
      for (std::size_t t = 0; t < n_ctx; ++t) {
        const float p = scores_[t] / denom;
        const float* vh = vc.data() + t * d + h * hd;
        for (std::size_t i = 0; i < hd; ++i) out[i] += p * vh[i];
      }
    }
    matvec(lw.wo, attn_, h_);
    for (std::size_t j = 0; j < d; ++j) x_[j] += h_[j];
    record(l, Site::kPostAttention, x_);

    // feed-forward
    rms_norm(x_, lw.mlp_norm, h_);
    matvec(lw.w_up, h_, ff_);
    for (std::size_t j = 0; j < ff_.size(); ++j) ff_[j] = gelu(ff_[j] + lw.b_up[j]);
    matvec(lw.w_down, ff_, h_);
    for (std::size_t j = 0; j < d; ++j) x_[j] += h_[j] + lw.b_down[j];

    for (float v : x_) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite activation after layer " + str(l) + " at position " + str(pos));
      }
    }
  }

  if (!logits.empty()) {
    rms_norm(x_, w.final_norm, h_);
    matvec(w.unembedding, h_, logits);
  }
  ++position_;
}

ForwardResult Model::forward(std::span<const TokenId> tokens, const HookSpec& hooks, bool want_logits) const {
  const auto& cfg = config();
  if (tokens.empty()) throw InvalidArgument("forward requires a nonempty token sequence");
  if (tokens.size() > cfg.max_seq_len) {
    throw InvalidArgument("sequence of length " + str(tokens.size()) + " exceeds max_seq_len " +
                          str(cfg.max_seq_len));
  }
  check_hooks(hooks);

  ForwardResult result;
  if (want_logits) result.logits = Matrix(tokens.size(), cfg.vocab_size);
  std::vector<std::pair<std::size_t, ActivationCapture>> raw;
  Session session(*this);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    session.feed(tokens[i], hooks, tokens.size(), hooks.captures().empty() ? nullptr : &raw,
                 want_logits ? result.logits.row(i) : std::span<float>{});
  }
  // request order, then position order
  std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  result.captures.reserve(raw.size());
  for (auto& [req, cap] : raw) result.captures.push_back(std::move(cap));
  return result;
}

std::vector<float> Model::last_token_activation(std::span<const TokenId> tokens, std::size_t layer) const {
  HookSpec hooks;
  hooks.capture(layer, PositionSelector::last(), Site::kResidualInput);
  auto result = forward(tokens, hooks, false);
  return std::move(result.captures.front().vector);
}

std::vector<std::vector<float>> Model::last_token_activations(std::span<const TokenId> tokens) const {
  HookSpec hooks;
  for (std::size_t l = 0; l < config().n_layers; ++l) hooks.capture(l, PositionSelector::last());
  auto result = forward(tokens, hooks, false);
  std::vector<std::vector<float>> out;
  out.reserve(result.captures.size());
  for (auto& c : result.captures) out.push_back(std::move(c.vector));
  return out;
}

Generation Model::generate(std::span<const TokenId> prompt, std::size_t max_new_tokens,
                           const std::optional<Injection>& steering, const GenerateOptions& options) const {
  using Clock = std::chrono::steady_clock;
  const auto& cfg = config();
  if (prompt.empty()) throw InvalidArgument("generate requires a nonempty prompt");
  if (prompt.size() + max_new_tokens > cfg.max_seq_len) {
    throw InvalidArgument("prompt of length " + str(prompt.size()) + " plus " + str(max_new_tokens) +
                          " new tokens exceeds max_seq_len " + str(cfg.max_seq_len));
  }
  HookSpec hooks;
  if (steering) {
    Injection inj = *steering;
    inj.start_position = prompt.size();
    hooks.inject(std::move(inj));
  }
  check_hooks(hooks);

  std::optional<TokenId> eos = options.eos_token;
  if (!eos && cfg.vocab_size > tokenizer::kEos) eos = tokenizer::kEos;

  Generation gen;
  std::vector<float> logits(cfg.vocab_size);
  TokenSequence all(prompt.begin(), prompt.end());
  all.reserve(prompt.size() + max_new_tokens);

  Session session(*this);
  auto prefill = [&] {
    for (std::size_t i = 0; i < prompt.size(); ++i) {
      session.feed(prompt[i], hooks, prompt.size(), nullptr,
                   i + 1 == prompt.size() ? std::span<float>(logits) : std::span<float>{});
    }
  };
  auto step = [&](TokenId token) {
    all.push_back(token);
    if (options.use_cache) {
      session.feed(token, hooks, all.size(), nullptr, logits);
    } else {
      Session fresh(*this);
      for (std::size_t i = 0; i < all.size(); ++i) {
        fresh.feed(all[i], hooks, all.size(), nullptr,
                   i + 1 == all.size() ? std::span<float>(logits) : std::span<float>{});
      }
    }
    ++gen.stats.steps;
  };

  prefill();
  const auto start = Clock::now();
  for (std::size_t n = 0; n < max_new_tokens; ++n) {
    const auto next = static_cast<TokenId>(argmax(logits));
    if (eos && next == *eos) {
      gen.stopped_at_eos = true;
      break;
    }
    gen.output.push_back(next);
    if (n + 1 == max_new_tokens) break;
    step(next);
  }
  gen.stats.decode_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  gen.stats.output_token_count = gen.output.size();
  return gen;
}

}  // namespace cfsteer
