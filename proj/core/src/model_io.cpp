#include "cfsteer/model_io.hpp"

#include "binary_io.hpp"
#include "cfsteer/error.hpp"

namespace cfsteer {
namespace {

constexpr std::string_view kMagic = "CFTW";

// File order of every tensor. W is Weights or const Weights.
template <typename W, typename Fn>
void for_each_tensor(W& w, Fn&& fn) {
  fn(w.token_embedding.data);
  for (auto& layer : w.layers) {
    fn(layer.attn_norm);
    fn(layer.wq.data);
    fn(layer.wk.data);
    fn(layer.wv.data);
    fn(layer.wo.data);
    fn(layer.mlp_norm);
    fn(layer.w_up.data);
    fn(layer.b_up);
    fn(layer.w_down.data);
    fn(layer.b_down);
  }
  fn(w.final_norm);
  fn(w.unembedding.data);
}

}  // namespace

void save_weights(const Weights& weights, const std::filesystem::path& path) {
  weights.validate();
  const auto& c = weights.config;
  detail::ByteWriter out;
  out.raw(kMagic);
  out.u32(kWeightFileVersion);
  out.u32(c.n_layers);
  out.u32(c.d_model);
  out.u32(c.n_heads);
  out.u32(c.d_ff);
  out.u32(c.vocab_size);
  out.u32(c.max_seq_len);
  out.u32(static_cast<std::uint32_t>(c.rng_seed));
  out.u32(static_cast<std::uint32_t>(c.rng_seed >> 32));
  for_each_tensor(weights, [&](std::span<const float> t) { out.f32s(t); });
  detail::seal(out);
  detail::write_file(path, out.data());
}

Weights load_weights(const std::filesystem::path& path) {
  const auto file = detail::read_file(path);
  auto in = detail::open_checked(file, kMagic, kWeightFileVersion, "weight file " + path.string());

  ModelConfig c;
  c.n_layers = in.u32();
  c.d_model = in.u32();
  c.n_heads = in.u32();
  c.d_ff = in.u32();
  c.vocab_size = in.u32();
  c.max_seq_len = in.u32();
  const std::uint64_t lo = in.u32();
  const std::uint64_t hi = in.u32();
  c.rng_seed = lo | (hi << 32);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::kInvalidField, "weight file " + path.string() + ": " + e.what());
  }

  // Size check before allocating anything proportional to the header.
  const std::uint64_t d = c.d_model, ff = c.d_ff, vocab = c.vocab_size;
  const std::uint64_t per_layer = 2 * d + 4 * d * d + ff * d + ff + d * ff + d;
  const std::uint64_t floats = 2 * vocab * d + c.n_layers * per_layer + d;
  if (in.remaining() != floats * 4) {
    throw FormatError(FormatError::Kind::kTruncated,
                      "weight file " + path.string() + ": payload has " + std::to_string(in.remaining()) +
                          " bytes, header implies " + std::to_string(floats * 4));
  }

  Weights w = Weights::zeros(c);
  for_each_tensor(w, [&](std::span<float> t) { in.f32s(t); });
  try {
    w.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::kInvalidField, "weight file " + path.string() + ": " + e.what());
  }
  return w;
}

}  // namespace cfsteer
