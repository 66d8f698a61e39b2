#include <gtest/gtest.h>

#include <random>

#include "cfsteer/error.hpp"
#include "cfsteer/model.hpp"
#include "cfsteer/tokenizer.hpp"
#include "oracle.hpp"

using namespace cfsteer;

namespace {

ModelConfig small(std::uint32_t layers, std::uint64_t seed = 3) {
  ModelConfig c;
  c.n_layers = layers;
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = 48;
  c.max_seq_len = 64;
  c.rng_seed = seed;
  return c;
}

std::vector<float> random_vector(std::size_t d, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  std::vector<float> v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

}  // namespace

TEST(ModelConfig, RejectsBrokenShapes) {
  ModelConfig c = small(1);
  EXPECT_NO_THROW(c.validate());
  c.n_layers = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small(1);
  c.d_model = 30;  // not divisible by 4 heads
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small(1);
  c.vocab_size = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small(1);
  c.max_seq_len = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Weights, SynthesisIsSeededAndBounded) {
  const auto a = Weights::synthesize(small(2, 9));
  const auto b = Weights::synthesize(small(2, 9));
  const auto c = Weights::synthesize(small(2, 10));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (float v : a.layers[1].wq.data) {
    EXPECT_GE(v, -0.08f);
    EXPECT_LE(v, 0.08f);
  }
  for (float g : a.final_norm) EXPECT_EQ(g, 1.0f);
}

TEST(Weights, ValidateCatchesNonFinite) {
  auto w = Weights::synthesize(small(1));
  w.layers[0].w_up.at(0, 0) = std::nanf("");
  EXPECT_THROW(w.validate(), InvalidArgument);
  EXPECT_THROW(Model{w}, InvalidArgument);
}

TEST(Forward, ZeroModelPassesEmbeddingThrough) {
  auto w = Weights::zeros(small(1));
  for (std::size_t i = 0; i < w.token_embedding.data.size(); ++i) w.token_embedding.data[i] = 0.001f * (i % 97);
  const Model m(w);
  const TokenSequence toks{5, 17, 99, 3};
  HookSpec hooks;
  hooks.capture(0, PositionSelector::all());
  const auto r = m.forward(toks, hooks);
  ASSERT_EQ(r.captures.size(), toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) {
    EXPECT_EQ(r.captures[i].position, i);
    const auto emb = w.token_embedding.row(toks[i]);
    EXPECT_TRUE(std::equal(emb.begin(), emb.end(), r.captures[i].vector.begin()));
  }
  EXPECT_EQ(m.last_token_activation(TokenSequence{42}, 0), std::vector<float>(w.token_embedding.row(42).begin(),
                                                                                w.token_embedding.row(42).end()));
}

TEST(Forward, NoHooksMeansNoCaptures) {
  const Model m(Weights::synthesize(small(2)));
  const auto r = m.forward(TokenSequence{1, 2, 3});
  EXPECT_TRUE(r.captures.empty());
  EXPECT_EQ(r.logits.rows, 3u);
  EXPECT_EQ(r.logits.cols, 258u);
}

TEST(Forward, MatchesStraightLineOracle) {
  const auto w = Weights::synthesize(small(2, 21));
  const Model m(w);
  const TokenSequence toks{256, 72, 101, 108, 111};
  HookSpec hooks;
  hooks.capture(1, PositionSelector::last());
  hooks.capture(0, PositionSelector::all(), Site::kPostAttention);
  const auto r = m.forward(toks, hooks);
  const auto ref = oracle::forward(w, toks);

  EXPECT_LT(oracle::rel_error(r.captures[0].vector, ref.residual_input[1].back()), 1e-6);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    EXPECT_LT(oracle::rel_error(r.captures[1 + i].vector, ref.post_attention[0][i]), 1e-6);
    EXPECT_LT(oracle::rel_error(r.logits.row(i), ref.logits[i]), 1e-5);
  }
}

TEST(Forward, CapturesComeBackInRequestOrder) {
  const Model m(Weights::synthesize(small(3)));
  HookSpec hooks;
  hooks.capture(2, PositionSelector::at(1)).capture(0, PositionSelector::last(), Site::kPostAttention);
  hooks.capture(1, PositionSelector::at(0));
  const auto r = m.forward(TokenSequence{9, 8, 7}, hooks);
  ASSERT_EQ(r.captures.size(), 3u);
  EXPECT_EQ(r.captures[0].layer, 2u);
  EXPECT_EQ(r.captures[1].layer, 0u);
  EXPECT_EQ(r.captures[1].site, Site::kPostAttention);
  EXPECT_EQ(r.captures[2].layer, 1u);
}

TEST(Forward, ErrorsOnBadInput) {
  const Model m(Weights::synthesize(small(2)));
  EXPECT_THROW(m.forward(TokenSequence{}), InvalidArgument);
  EXPECT_THROW(m.forward(TokenSequence(65, 1)), InvalidArgument);
  EXPECT_THROW(m.forward(TokenSequence{300}), InvalidArgument);
  HookSpec bad_layer;
  bad_layer.capture(2, PositionSelector::last());
  EXPECT_THROW(m.forward(TokenSequence{1}, bad_layer), InvalidArgument);
  HookSpec bad_dim;
  bad_dim.inject({0, std::vector<float>(31, 1.0f), 1.0f, 0});
  EXPECT_THROW(m.forward(TokenSequence{1}, bad_dim), InvalidArgument);
}

TEST(Forward, NonFiniteActivationRaises) {
  auto w = Weights::synthesize(small(1));
  const Model m(w);
  HookSpec huge;
  huge.inject({0, std::vector<float>(32, 3e38f), 3e38f, 0});
  EXPECT_THROW(m.forward(TokenSequence{1, 2}, huge), NumericError);
}

TEST(Forward, Causality) {
  const Model m(Weights::synthesize(small(2)));
  const auto a = m.forward(TokenSequence{4, 5, 6, 7});
  const auto b = m.forward(TokenSequence{4, 5, 6, 200});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(std::equal(a.logits.row(i).begin(), a.logits.row(i).end(), b.logits.row(i).begin()));
  }
}

TEST(Forward, TrailingTokenChangesLastActivation) {
  const auto w = Weights::synthesize(small(2));
  const Model m(w);
  const TokenSequence base{256, 10, 20};
  TokenSequence longer = base;
  longer.push_back(30);
  const auto a = m.last_token_activation(base, 1);
  const auto b = m.last_token_activation(longer, 1);
  EXPECT_NE(a, b);
  EXPECT_LT(oracle::rel_error(b, oracle::forward(w, longer).residual_input[1].back()), 1e-6);
  EXPECT_EQ(a, m.last_token_activation(base, 1));
}

TEST(Forward, AllLayerActivationsAgreeWithSingleLayer) {
  const Model m(Weights::synthesize(small(3)));
  const TokenSequence toks{256, 1, 2, 3, 4};
  const auto all = m.last_token_activations(toks);
  ASSERT_EQ(all.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(all[l], m.last_token_activation(toks, l));
}

TEST(Hooks, InjectionFoldsSameVector) {
  const Model m(Weights::synthesize(small(2)));
  const auto v = random_vector(32, 1);
  const TokenSequence toks{1, 2, 3, 4};
  HookSpec twice, once;
  twice.inject({1, v, 0.75f, 2}).inject({1, v, 1.25f, 2});
  once.inject({1, v, 2.0f, 2});
  twice.capture(1, PositionSelector::all());
  once.capture(1, PositionSelector::all());
  const auto a = m.forward(toks, twice);
  const auto b = m.forward(toks, once);
  EXPECT_EQ(a.logits, b.logits);
  for (std::size_t i = 0; i < a.captures.size(); ++i) EXPECT_EQ(a.captures[i].vector, b.captures[i].vector);

  HookSpec conflict;
  conflict.inject({1, v, 1.0f, 2});
  EXPECT_THROW(conflict.inject({1, random_vector(32, 2), 1.0f, 2}), InvalidArgument);
  EXPECT_THROW(conflict.inject({1, v, 1.0f, 3}), InvalidArgument);
}

TEST(Hooks, PreInjectionAndResidualInputDifferByExactlyMv) {
  const Model m(Weights::synthesize(small(3)));
  const auto v = random_vector(32, 5);
  const float mult = 1.5f;
  HookSpec hooks;
  hooks.inject({2, v, mult, 3});
  hooks.capture(2, PositionSelector::all(), Site::kPreInjection);
  hooks.capture(2, PositionSelector::all(), Site::kResidualInput);
  const auto r = m.forward(TokenSequence{1, 2, 3, 4, 5}, hooks);
  ASSERT_EQ(r.captures.size(), 10u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& pre = r.captures[i].vector;
    const auto& post = r.captures[5 + i].vector;
    for (std::size_t j = 0; j < 32; ++j) {
      if (i < 3) {
        EXPECT_EQ(pre[j], post[j]);
      } else {
        EXPECT_EQ(post[j], pre[j] + mult * v[j]);
      }
    }
  }
}

TEST(Generate, GreedyDeterministicAndCacheEquivalent) {
  const Model m(Weights::synthesize(small(3, 44)));
  const auto prompt = tokenizer::encode("Hello there");
  const auto a = m.generate(prompt, 20);
  const auto b = m.generate(prompt, 20);
  EXPECT_EQ(a.output, b.output);
  const auto c = m.generate(prompt, 20, std::nullopt, {.use_cache = false, .eos_token = std::nullopt});
  EXPECT_EQ(a.output, c.output);

  Injection inj{1, random_vector(32, 8, 0.5f), 3.0f, 0};
  const auto d = m.generate(prompt, 20, inj);
  const auto e = m.generate(prompt, 20, inj, {.use_cache = false, .eos_token = std::nullopt});
  EXPECT_EQ(d.output, e.output);
}

TEST(Generate, ZeroMultiplierIsIdentity) {
  const Model m(Weights::synthesize(small(2, 4)));
  const auto prompt = tokenizer::encode("abc");
  const auto base = m.generate(prompt, 16);
  const auto zero = m.generate(prompt, 16, Injection{1, random_vector(32, 3), 0.0f, 0});
  EXPECT_EQ(base.output, zero.output);
}

TEST(Generate, StatsAndLimits) {
  const Model m(Weights::synthesize(small(2, 4)));
  const auto prompt = tokenizer::encode("abc");
  const auto g = m.generate(prompt, 10);
  EXPECT_LE(g.output.size(), 10u);
  EXPECT_EQ(g.stats.output_token_count, g.output.size());
  EXPECT_GE(g.stats.decode_seconds, 0.0);
  EXPECT_THROW(m.generate(TokenSequence(60, 1), 10), InvalidArgument);
  EXPECT_THROW(m.generate(prompt, 4, Injection{7, random_vector(32, 1), 1.0f, 0}), InvalidArgument);
}

TEST(Generate, StopsAtEosAndExcludesIt) {
  // Every position predicts EOS: the unembedding reads only the bias dim.
  auto w = Weights::zeros(small(1));
  for (std::size_t t = 0; t < 258; ++t) w.token_embedding.at(t, 0) = 1.0f;
  w.unembedding.at(tokenizer::kEos, 0) = 1.0f;
  const Model m(w);
  const auto g = m.generate(tokenizer::encode("x"), 8);
  EXPECT_TRUE(g.output.empty());
  EXPECT_TRUE(g.stopped_at_eos);
  EXPECT_EQ(g.stats.output_token_count, 0u);
}

TEST(Generate, UnembeddingDirectionTakesOverAfterFirstToken) {
  const auto w = Weights::synthesize(small(2, 12));
  const Model m(w);
  // Pick t whose unembedding row is closer to itself than to any other row.
  std::size_t t = 0;
  for (std::size_t cand = 0; cand < 258; ++cand) {
    const auto u = w.unembedding.row(cand);
    double self = 0;
    for (float x : u) self += double(x) * x;
    bool dominant = true;
    for (std::size_t j = 0; j < 258 && dominant; ++j) {
      if (j == cand) continue;
      double dot = 0;
      for (std::size_t c = 0; c < u.size(); ++c) dot += double(u[c]) * w.unembedding.at(j, c);
      dominant = dot < self;
    }
    if (dominant && cand != tokenizer::kEos) {
      t = cand;
      break;
    }
  }
  std::vector<float> v(w.unembedding.row(t).begin(), w.unembedding.row(t).end());
  const auto g = m.generate(tokenizer::encode("steer me"), 6, Injection{1, v, 400.0f, 0});
  ASSERT_EQ(g.output.size(), 6u);
  // The first token comes from the last prompt position, which is never steered.
  const auto base = m.generate(tokenizer::encode("steer me"), 1);
  EXPECT_EQ(g.output[0], base.output[0]);
  for (std::size_t i = 1; i < g.output.size(); ++i) EXPECT_EQ(g.output[i], t);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<float> v{0.5f, 2.0f, -1.0f, 2.0f};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(PositionSelector, Matches) {
  EXPECT_TRUE(PositionSelector::last().matches(4, 5));
  EXPECT_FALSE(PositionSelector::last().matches(3, 5));
  EXPECT_TRUE(PositionSelector::at(2).matches(2, 5));
  EXPECT_TRUE(PositionSelector::from(2).matches(4, 5));
  EXPECT_FALSE(PositionSelector::from(2).matches(1, 5));
}

TEST(Tokenizer, RoundTripsBytes) {
  const std::string text = "Bob said, \"x\".\n\xC3\xA9";
  const auto ids = tokenizer::encode(text);
  EXPECT_EQ(ids.front(), tokenizer::kBos);
  EXPECT_EQ(ids.size(), text.size() + 1);
  EXPECT_EQ(tokenizer::decode(ids), text);
  EXPECT_EQ(tokenizer::encode(text, false).size(), text.size());
  EXPECT_EQ(tokenizer::decode(TokenSequence{'a', tokenizer::kEos, 999}), "a<unk>");
}
