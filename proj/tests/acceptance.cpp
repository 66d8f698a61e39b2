// Acceptance gate: one PASS/FAIL line per criterion, each under its own time
// budget. Exit status is nonzero if any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cfsteer/dataset.hpp"
#include "cfsteer/error.hpp"
#include "cfsteer/metrics.hpp"
#include "cfsteer/model_io.hpp"
#include "cfsteer/runner.hpp"
#include "cfsteer/steering.hpp"
#include "cfsteer/tokenizer.hpp"
#include "cfsteer/toy.hpp"
#include "oracle.hpp"

using namespace cfsteer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<float> gaussian(std::size_t d, std::mt19937_64& rng, float scale = 1.0f) {
  std::normal_distribution<float> n(0.0f, scale);
  std::vector<float> v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

ModelConfig toy_shape(std::uint64_t seed) {
  ModelConfig c;
  c.n_layers = 4;
  c.d_model = 64;
  c.n_heads = 4;
  c.d_ff = 128;
  c.max_seq_len = 512;
  c.rng_seed = seed;
  return c;
}

Outcome injection_exactness() {
  Outcome o;
  const Model model(Weights::synthesize(toy_shape(2024)));
  std::mt19937_64 rng(1);
  const auto prompt = tokenizer::encode("Where is the river? It flows north.");
  const std::size_t n = prompt.size();
  const auto baseline = model.generate(prompt, 12);
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t layer = 0; layer < 4; ++layer) {
    for (float m : {-2.0f, 0.0f, 1.0f, 2.0f}) {
      const auto v = gaussian(64, rng);
      const Injection inj{layer, v, m, n};
      const auto g = model.generate(prompt, 12, inj);
      if (m == 0.0f) o.require(g.output == baseline.output, "m=0 output differs from baseline");

      TokenSequence seq = prompt;
      seq.insert(seq.end(), g.output.begin(), g.output.end());
      HookSpec plain, steered;
      plain.capture(layer, PositionSelector::all());
      steered.capture(layer, PositionSelector::all()).inject(inj);
      const auto u = model.forward(seq, plain);
      const auto s = model.forward(seq, steered);
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto& x = s.captures[i].vector;
        const auto& base = u.captures[i].vector;
        if (i < n) {
          o.require(std::memcmp(x.data(), base.data(), x.size() * sizeof(float)) == 0,
                    "prompt position " + std::to_string(i) + " changed");
          continue;
        }
        double err = 0, ref = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double want = double(base[j]) + double(m) * v[j];
          err += (x[j] - want) * (x[j] - want);
          ref += want * want;
        }
        worst = std::max(worst, std::sqrt(err / ref));
      }
      // The cached generation agrees with the steered full-sequence forward.
      for (std::size_t k = 0; k < g.output.size(); ++k)
        o.require(argmax(s.logits.row(n - 1 + k)) == g.output[k], "cached steered decode diverges from forward");
      ++cases;
    }
  }
  o.require(worst <= 1e-6, "relative error " + fmt("%.3g", worst));
  o.detail = std::to_string(cases) + " layer/multiplier cases, max rel err " + fmt("%.3g", worst) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome mean_oracle() {
  Outcome o;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(-4.0f, 4.0f);
  std::vector<ContrastPair> pairs;
  std::vector<std::vector<float>> pos, neg;
  for (std::size_t i = 0; i < 100; ++i) {
    std::vector<float> p(64), q(64);
    for (auto& x : p) x = u(rng);
    for (auto& x : q) x = u(rng);
    pos.push_back(p);
    neg.push_back(q);
    pairs.push_back({p, q, 0, "p" + std::to_string(i)});
  }
  const auto ref = oracle::mean_diff(pos, neg);
  const auto v = mean_vector(pairs, 0, Scheme::kCombined);
  double worst = 0;
  for (std::size_t j = 0; j < ref.size(); ++j) worst = std::max(worst, std::abs(v.values()[j] - double(ref[j])));
  o.require(worst <= 1e-7, "oracle deviation " + fmt("%.3g", worst));

  auto same = pairs;
  for (auto& p : same) p.negative = p.positive;
  const auto zero = mean_vector(same, 0, Scheme::kCombined);
  for (float x : zero.values()) o.require(x == 0.0f, "identical pairs not zero");

  auto doubled = pairs;
  doubled.insert(doubled.end(), pairs.begin(), pairs.end());
  o.require(mean_vector(doubled, 0, Scheme::kCombined).values() == v.values(), "duplication changed the mean");
  o.detail = "max abs deviation " + fmt("%.3g", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome telescoping() {
  Outcome o;
  const Model model(toy::conflict_model());
  const auto ex = toy::synthetic_conflicts(50, 31);
  const auto ab = build_ablation_activations(ex, model, SystemPromptSet::builtin(), 5);
  o.require(ab.combined.used_examples.size() == 50, "examples were skipped");
  double worst = 0;
  for (std::size_t l = 0; l < model.config().n_layers; ++l) {
    for (std::size_t i = 0; i < ab.combined.per_layer[l].size(); ++i) {
      const auto c = pair_diff(ab.combined.per_layer[l][i]);
      const auto x = pair_diff(ab.context_only.per_layer[l][i]);
      const auto s = pair_diff(ab.system_only.per_layer[l][i]);
      for (std::size_t j = 0; j < c.size(); ++j) worst = std::max(worst, std::abs(double(c[j]) - x[j] - s[j]));
    }
    const auto vc = ab.combined.vector(l), vx = ab.context_only.vector(l), vs = ab.system_only.vector(l);
    for (std::size_t j = 0; j < vc.dimension(); ++j)
      worst = std::max(worst, std::abs(double(vc.values()[j]) - vx.values()[j] - vs.values()[j]));
  }
  o.require(worst <= 1e-6, "identity error " + fmt("%.3g", worst));
  o.detail = "50 examples x 4 layers, max abs error " + fmt("%.3g", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// Token whose unembedding row scores itself above every other row, so a large
// push along that row makes greedy decoding emit it.
TokenId dominant_token(const Weights& w) {
  for (TokenId t = '0'; t <= 'z'; ++t) {
    if (!std::isalnum(static_cast<int>(t))) continue;
    const auto u = w.unembedding.row(t);
    double self = 0;
    for (float x : u) self += double(x) * x;
    bool dominant = true;
    for (std::size_t j = 0; j < w.unembedding.rows && dominant; ++j) {
      if (j == t) continue;
      double dot = 0;
      for (std::size_t c = 0; c < u.size(); ++c) dot += double(u[c]) * w.unembedding.at(j, c);
      dominant = dot < self;
    }
    if (dominant) return t;
  }
  throw Error("no dominant printable token");
}

Outcome planted_layer() {
  Outcome o;
  const auto w = Weights::synthesize(toy_shape(99));
  const Model model(w);
  const TokenId t = dominant_token(w);
  auto ex = toy::synthetic_conflicts(16, 12);
  for (auto& e : ex) {
    e.substituted_answer = std::string(3, static_cast<char>(t));
    e.original_answer = t == 'q' ? "zzz" : "qqq";
  }
  EvalOptions opts;
  opts.max_new_tokens = 6;
  std::mt19937_64 rng(5);
  const std::vector<float> ut(w.unembedding.row(t).begin(), w.unembedding.row(t).end());

  std::string picks;
  for (std::size_t k = 1; k <= 3; ++k) {
    std::vector<SteeringVector> vs;
    for (std::size_t l = 0; l < 4; ++l) {
      auto v = l == k ? ut : gaussian(64, rng, 0.01f);
      if (l == k)
        for (auto& x : v) x *= 200.0f;
      vs.emplace_back(l, std::move(v), 1, Scheme::kCombined, SourceHash{});
    }
    const auto s = sweep_layers(model, ex, vs, 2.0f, opts);
    picks += (k > 1 ? "," : "") + std::to_string(s.best);
    o.require(s.best == k, "planted " + std::to_string(k) + " picked " + std::to_string(s.best));
  }

  std::vector<SteeringVector> zeros;
  for (std::size_t l = 0; l < 4; ++l) zeros.emplace_back(l, std::vector<float>(64, 0.0f), 1, Scheme::kCombined, SourceHash{});
  const auto z = sweep_layers(model, ex, zeros, 2.0f, opts);
  for (const auto& row : z.rows) o.require(row.report.p_s == z.baseline.p_s, "zero vector moved p_s");
  o.detail = "planted 1,2,3 -> picked " + picks + "; zero-vector rows equal baseline p_s " +
             fmt("%.1f", z.baseline.p_s) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

struct ToySetup {
  Model model{toy::conflict_model()};
  std::vector<ConflictExample> train = toy::synthetic_conflicts(100, 1001);
  ContrastSet set = build_contrast_activations(train, model, SystemPromptSet::builtin(), {Scheme::kCombined, 3, 1});
};

Outcome steering_efficacy() {
  Outcome o;
  const ToySetup toy;
  const auto eval = toy::synthetic_conflicts(200, 2002);
  EvalOptions opts;
  opts.max_new_tokens = 16;
  const std::vector<float> mults{0.0f, 2.0f};
  const auto s = sweep_multipliers(toy.model, eval, toy.set.vector(1), mults, opts);
  const auto& r0 = s.rows[0].report;
  const auto& r2 = s.rows[1].report;
  o.require(r2.p_s > r0.p_s, "p_s did not rise");
  o.require(r2.p_o < r0.p_o, "p_o did not fall");
  o.detail = "layer 1, 200 examples: p_s " + fmt("%.1f", r0.p_s) + " -> " + fmt("%.1f", r2.p_s) + ", p_o " +
             fmt("%.1f", r0.p_o) + " -> " + fmt("%.1f", r2.p_o) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  struct Row {
    const char* response;
    const char* sub;
    const char* orig;
    bool steered;
  };
  const Row rows[] = {
      {"The score for the 1997 film Titanic was performed by James Horner, not John Williams, as mentioned in the "
       "context.",
       "John Williams", "James Horner", false},
      {"The film's sweeping score was composed by John Williams.", "John Williams", "James Horner", true},
      {"Kyle Korver is actually a skilled shooting guard, not a center, known for his deadly accuracy from beyond "
       "the arc.",
       "center", "shooting guard", false},
      {"Kyle Korver is a skilled center.", "center", "shooting guard", true},
      {"France's official language is actually French, not Irish.", "Irish", "French", false},
      {"The official language of France is Irish.", "Irish", "French", true},
      {"The currency of the United Kingdom is the Pound Sterling, not the Swedish krona.", "Swedish krona",
       "Pound Sterling", false},
      {"The currency of the United Kingdom is the Swedish krona.", "Swedish krona", "Pound Sterling", true},
  };
  int right = 0;
  for (const auto& r : rows) {
    ConflictExample ex{"r", "q", "c", r.orig, r.sub, Hops::kQA};
    if (score_example(r.response, ex).hit_s == r.steered) ++right;
  }
  o.require(right == 8, std::to_string(right) + "/8 rows");
  const double a = *memorization_ratio(70.8, 7.5), b = *memorization_ratio(36.1, 30.4);
  o.require(std::abs(a - 9.6) <= 0.05 && std::abs(b - 45.7) <= 0.05, "M_R arithmetic");
  o.detail = std::to_string(right) + "/8 rows; M_R " + fmt("%.2f", a) + ", " + fmt("%.2f", b) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome llr_properties() {
  Outcome o;
  const auto letters = [](std::string_view s) {
    std::vector<TokenId> out;
    for (char c : s)
      if (c != ' ') out.push_back(static_cast<TokenId>(c));
    return out;
  };
  o.require(llr(letters("a b c d")) == 0.0, "llr(a b c d) != 0");
  o.require(std::abs(llr(letters("a a a a")) - 0.8) < 1e-12, "llr(a a a a) != 0.8");

  std::mt19937_64 rng(77);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<TokenId> t(std::uniform_int_distribution<std::size_t>(0, 40)(rng));
    const auto k = std::uniform_int_distribution<TokenId>(1, 4)(rng);
    for (auto& x : t) x = std::uniform_int_distribution<TokenId>(0, k - 1)(rng);
    const double v = llr(t);
    if (std::abs(v - oracle::llr(t)) < 1e-12 && v >= 0.0 && v <= 1.0) ++agree;
  }
  o.require(agree == 1000, std::to_string(agree) + "/1000 oracle agreements");

  const ToySetup toy;
  const auto eval = toy::synthetic_conflicts(100, 3003);
  EvalOptions opts;
  opts.max_new_tokens = 16;
  const std::vector<float> mults{0.0f, 2.0f, 4.0f, 8.0f};
  const auto s = sweep_multipliers(toy.model, eval, toy.set.vector(1), mults, opts);
  std::string curve;
  bool monotone = true;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    curve += (i ? ", " : "") + fmt("%.3f", s.rows[i].report.mean_llr);
    if (i && s.rows[i].report.mean_llr < s.rows[i - 1].report.mean_llr) monotone = false;
  }
  o.require(monotone, "mean LLR not monotone");
  o.require(s.rows.back().report.mean_llr > s.rows.front().report.mean_llr, "no escalation");
  o.detail = "1000/1000 oracle; mean LLR at m=0,2,4,8: " + curve + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome convergence_analog() {
  Outcome o;
  std::mt19937_64 rng(404);
  const std::size_t d = 64, n = 2000;
  const auto mu = gaussian(d, rng);
  ContrastSet set;
  set.per_layer.resize(1);
  for (std::size_t i = 0; i < n; ++i) {
    auto pos = gaussian(d, rng), neg = gaussian(d, rng);
    for (std::size_t j = 0; j < d; ++j) pos[j] += mu[j];
    set.per_layer[0].push_back({std::move(pos), std::move(neg), 0, "s" + std::to_string(i)});
  }
  const std::vector<std::size_t> sizes{n / 8, n / 4, n / 2, n};
  const auto rows = convergence(set, 0, sizes);
  o.require(rows[2].cosine >= 0.999, "half-count cosine " + fmt("%.6f", rows[2].cosine));
  o.require(rows[3].cosine == 1.0, "full-count cosine is not exactly 1");
  o.detail = "n=2000, cosine at n/8,n/4,n/2,n: " + fmt("%.5f", rows[0].cosine) + ", " + fmt("%.5f", rows[1].cosine) +
             ", " + fmt("%.5f", rows[2].cosine) + ", " + fmt("%.17g", rows[3].cosine) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(b.data(), static_cast<std::streamsize>(b.size()));
}

template <typename Load>
std::size_t undetected_flips(const fs::path& p, Load load) {
  const auto good = bytes_of(p);
  std::size_t missed = 0;
  for (std::size_t i = 0; i < good.size(); ++i) {
    auto bad = good;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    put_bytes(p, bad);
    try {
      load(p);
      ++missed;
    } catch (const FormatError&) {
    }
  }
  put_bytes(p, good);
  return missed;
}

Outcome persistence() {
  Outcome o;
  const auto dir = fs::temp_directory_path() / "cfsteer_acceptance";
  fs::create_directories(dir);

  std::mt19937_64 rng(9);
  SourceHash h{};
  for (auto& b : h) b = static_cast<std::uint8_t>(rng());
  const SteeringVector v(2, gaussian(64, rng), 321, Scheme::kOptions, h);
  save_vector(v, dir / "v.cfsv");
  const auto vb = load_vector(dir / "v.cfsv");
  o.require(vb == v && std::memcmp(vb.values().data(), v.values().data(), 64 * sizeof(float)) == 0,
            "vector round trip");

  ModelConfig c = toy_shape(31);
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  c.vocab_size = 16;
  const auto w = Weights::synthesize(c);
  save_weights(w, dir / "w.cftw");
  o.require(load_weights(dir / "w.cftw") == w, "weight round trip");
  save_weights(load_weights(dir / "w.cftw"), dir / "w2.cftw");
  o.require(bytes_of(dir / "w.cftw") == bytes_of(dir / "w2.cftw"), "weight re-save bytes differ");

  const std::size_t missed_v = undetected_flips(dir / "v.cfsv", [](const fs::path& p) { load_vector(p); });
  const std::size_t missed_w = undetected_flips(dir / "w.cftw", [](const fs::path& p) { load_weights(p); });
  o.require(missed_v == 0 && missed_w == 0, "undetected corruption");

  const fs::path data(CFSTEER_TEST_DATA_DIR);
  const auto gv = load_vector(data / "golden.cfsv");
  o.require(gv.layer() == 7 && gv.sample_count() == 1501 &&
                gv.values() == std::vector<float>{0.5f, -1.25f, 3.0f, 0.0f, 1.0f / 1024},
            "golden vector contents");
  const auto gw = load_weights(data / "golden.cftw");
  o.require(gw.config.d_model == 4 && gw.token_embedding.at(0, 0) == -0.125f, "golden weight contents");
  o.detail = "bitwise round trips; every single-byte flip detected (" + std::to_string(bytes_of(dir / "v.cfsv").size()) +
             " + " + std::to_string(bytes_of(dir / "w.cftw").size()) + " bytes); golden files load" +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "injection exactness", 10, injection_exactness},
      {2, "mean-difference oracle", 1, mean_oracle},
      {3, "telescoping ablation identity", 30, telescoping},
      {4, "planted-layer sweep", 120, planted_layer},
      {5, "synthetic conflict steering efficacy", 300, steering_efficacy},
      {6, "metric oracles", 1, metric_oracles},
      {7, "LLR properties", 60, llr_properties},
      {8, "convergence", 10, convergence_analog},
      {9, "persistence", 1, persistence},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_seconds) {
      o.pass = false;
      o.detail += " | over time budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d %s: %s [%.2fs / %.0fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
