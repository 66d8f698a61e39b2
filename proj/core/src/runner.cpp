#include "cfsteer/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cfsteer/error.hpp"
#include "cfsteer/model_io.hpp"
#include "cfsteer/tokenizer.hpp"
#include "parallel.hpp"

namespace cfsteer {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw InvalidArgument("config key \"" + std::string(key) + "\": cannot parse \"" + std::string(text) + "\"");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw InvalidArgument("config key \"" + std::string(key) + "\" must be finite");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw InvalidArgument("config key \"" + std::string(key) + "\": expected a boolean, got \"" + std::string(text) +
                        "\"");
}

std::uint32_t parse_u32(std::string_view key, std::string_view text) { return parse_number<std::uint32_t>(key, text); }
std::size_t parse_size(std::string_view key, std::string_view text) { return parse_number<std::size_t>(key, text); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  return EvalOptions{cfg.max_new_tokens, cfg.opinion_and_instruction, cfg.use_cache, cfg.workers};
}

std::size_t best_row(const std::vector<SweepRow>& rows) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].report.p_s > rows[best].report.p_s) best = i;
  }
  return best;
}

constexpr std::string_view kSweepHeader = "p_s,p_o,m_r,mean_llr,llr_exceed_frac,mean_output_tokens,n";

std::string report_columns(const EvalReport& r) {
  return format_double(r.p_s) + "," + format_double(r.p_o) + "," + (r.m_r ? format_double(*r.m_r) : "") + "," +
         format_double(r.mean_llr) + "," + format_double(r.llr_exceed_frac) + "," +
         format_double(r.mean_output_tokens) + "," + std::to_string(r.n);
}

void write_sweep(const SweepResult& sweep, std::string_view key_name, bool integer_key,
                 const std::filesystem::path& path) {
  auto out = open_out(path);
  out << key_name << "," << kSweepHeader << ",baseline_p_s,best\n";
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const auto& row = sweep.rows[i];
    out << (integer_key ? std::to_string(static_cast<std::size_t>(row.key)) : format_float(static_cast<float>(row.key)))
        << "," << report_columns(row.report) << "," << format_double(sweep.baseline.p_s) << ","
        << (i == sweep.best ? 1 : 0) << "\n";
  }
}

SteeringVector load_layer_vector(const ExperimentConfig& cfg, std::size_t layer) {
  const auto path = vector_path(cfg.vectors(), layer);
  if (!std::filesystem::exists(path)) throw Error("missing vector file " + path.string() + "; run extract first");
  auto v = load_vector(path);
  if (v.layer() != layer) {
    throw FormatError(FormatError::Kind::kInvalidField,
                      path.string() + " holds layer " + std::to_string(v.layer()) + ", expected " + std::to_string(layer));
  }
  return v;
}

std::size_t required_layer(const ExperimentConfig& cfg, const Model& model) {
  if (!cfg.steer_layer) throw InvalidArgument("this command needs a steering layer (config key \"layer\" or --layer)");
  if (*cfg.steer_layer >= model.config().n_layers) {
    throw InvalidArgument("layer " + std::to_string(*cfg.steer_layer) + " out of range for a " +
                          std::to_string(model.config().n_layers) + "-layer model");
  }
  return *cfg.steer_layer;
}

std::vector<ConflictExample> nonempty(std::vector<ConflictExample> examples, std::string_view split) {
  if (examples.empty()) throw InvalidArgument(std::string(split) + " split is empty");
  return examples;
}

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "model") {
    model_path = std::string(value);
  } else if (key == "model_seed") {
    model_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "model_layers") {
    model_shape.n_layers = parse_u32(key, value);
  } else if (key == "model_d_model") {
    model_shape.d_model = parse_u32(key, value);
  } else if (key == "model_heads") {
    model_shape.n_heads = parse_u32(key, value);
  } else if (key == "model_d_ff") {
    model_shape.d_ff = parse_u32(key, value);
  } else if (key == "model_max_seq_len") {
    model_shape.max_seq_len = parse_u32(key, value);
  } else if (key == "dataset") {
    dataset_path = std::string(value);
  } else if (key == "system_prompts") {
    system_prompts_path = std::string(value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "n_train") {
    n_train = parse_size(key, value);
  } else if (key == "n_select") {
    n_select = parse_size(key, value);
  } else if (key == "n_eval") {
    n_eval = parse_size(key, value);
  } else if (key == "scheme") {
    scheme = parse_scheme(value);
  } else if (key == "layer") {
    if (value.empty() || value == "none") {
      steer_layer.reset();
    } else {
      steer_layer = parse_size(key, value);
    }
  } else if (key == "multipliers") {
    multipliers.clear();
    for (auto item : split_list(value)) multipliers.push_back(parse_number<float>(key, item));
  } else if (key == "layer_sweep_multiplier") {
    layer_sweep_multiplier = parse_number<float>(key, value);
  } else if (key == "llr_threshold") {
    llr_threshold = parse_number<double>(key, value);
  } else if (key == "max_new_tokens") {
    max_new_tokens = parse_size(key, value);
  } else if (key == "opinion_and_instruction") {
    opinion_and_instruction = parse_bool(key, value);
  } else if (key == "use_cache") {
    use_cache = parse_bool(key, value);
  } else if (key == "subset_sizes") {
    subset_sizes.clear();
    for (auto item : split_list(value)) subset_sizes.push_back(parse_size(key, item));
  } else if (key == "vector_dir") {
    vector_dir = std::string(value);
  } else if (key == "out") {
    out_dir = std::string(value);
  } else if (key == "workers") {
    workers = parse_size(key, value);
  } else {
    throw InvalidArgument("unknown config key \"" + std::string(key) + "\"");
  }
}

void ExperimentConfig::validate() const {
  if (multipliers.empty()) throw InvalidArgument("multipliers must not be empty");
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  if (max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be >= 1");
  if (out_dir.empty()) throw InvalidArgument("out must not be empty");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(line_no, "", "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, key, "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------- evaluation

std::vector<ExampleResult> evaluate(const Model& model, std::span<const ConflictExample> examples,
                                    const std::optional<SteeringPlan>& plan, const EvalOptions& options) {
  std::vector<ExampleResult> results(examples.size());
  const GenerateOptions gen{.use_cache = options.use_cache, .eos_token = std::nullopt};
  detail::parallel_for(examples.size(), options.workers, [&](std::size_t i) {
    const auto& ex = examples[i];
    detail::for_example(ex.id, [&] {
      const auto prompt = tokenizer::encode(render_open(ex, options.opinion_and_instruction).text);
      const auto g = generate(model, prompt, options.max_new_tokens, plan, gen);
      ExampleResult r;
      r.id = ex.id;
      r.response = tokenizer::decode(g.output);
      r.score = score_example(r.response, ex);
      r.score.llr = llr(g.output);
      r.score.decode = g.stats;
      results[i] = std::move(r);
    });
  });
  std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return results;
}

EvalReport summarize(std::span<const ExampleResult> results, double llr_threshold) {
  std::vector<ExampleScore> scores;
  scores.reserve(results.size());
  for (const auto& r : results) scores.push_back(r.score);
  return aggregate(scores, llr_threshold);
}

SweepResult sweep_layers(const Model& model, std::span<const ConflictExample> examples,
                         std::span<const SteeringVector> per_layer, float multiplier, const EvalOptions& options,
                         double llr_threshold) {
  if (examples.empty()) throw InvalidArgument("sweep_layers: select split is empty");
  if (per_layer.size() != model.config().n_layers) {
    throw InvalidArgument("sweep_layers: need one vector per layer (" + std::to_string(model.config().n_layers) +
                          "), got " + std::to_string(per_layer.size()));
  }
  SweepResult sweep;
  sweep.baseline = summarize(evaluate(model, examples, std::nullopt, options), llr_threshold);
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    if (per_layer[l].layer() != l) {
      throw InvalidArgument("sweep_layers: vector " + std::to_string(l) + " is for layer " +
                            std::to_string(per_layer[l].layer()));
    }
    const SteeringPlan plan(per_layer[l], multiplier);
    sweep.rows.push_back({static_cast<double>(l), summarize(evaluate(model, examples, plan, options), llr_threshold)});
  }
  sweep.best = best_row(sweep.rows);
  return sweep;
}

SweepResult sweep_multipliers(const Model& model, std::span<const ConflictExample> examples,
                              const SteeringVector& vector, std::span<const float> multipliers,
                              const EvalOptions& options, double llr_threshold) {
  if (examples.empty()) throw InvalidArgument("sweep_multipliers: eval split is empty");
  if (multipliers.empty()) throw InvalidArgument("sweep_multipliers: no multipliers");
  SweepResult sweep;
  sweep.baseline = summarize(evaluate(model, examples, std::nullopt, options), llr_threshold);
  for (float m : multipliers) {
    const SteeringPlan plan(vector, m);
    sweep.rows.push_back({static_cast<double>(m), summarize(evaluate(model, examples, plan, options), llr_threshold)});
  }
  sweep.best = best_row(sweep.rows);
  return sweep;
}

std::vector<ConvergenceRow> convergence(const ContrastSet& set, std::size_t layer, std::span<const std::size_t> sizes) {
  if (layer >= set.n_layers()) throw InvalidArgument("convergence: layer out of range");
  const std::size_t full = set.per_layer[layer].size();
  if (sizes.empty()) throw InvalidArgument("convergence: no subset sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0 || sizes[i] > full) {
      throw InvalidArgument("convergence: subset size " + std::to_string(sizes[i]) + " outside [1, " +
                            std::to_string(full) + "]");
    }
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw InvalidArgument("convergence: subset sizes must be ascending");
  }
  if (sizes.back() != full) {
    throw InvalidArgument("convergence: last subset size must be the full count " + std::to_string(full));
  }
  const SteeringVector reference = set.vector(layer);
  std::vector<ConvergenceRow> rows;
  for (std::size_t n : sizes) rows.push_back({n, cosine(set.vector(layer, n), reference)});
  return rows;
}

// ---------------------------------------------------------------- commands

Workspace open_workspace(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.dataset_path.empty()) throw InvalidArgument("no dataset given (config key \"dataset\" or --dataset)");
  Weights weights;
  if (cfg.model_path.empty()) {
    ModelConfig shape = cfg.model_shape;
    shape.rng_seed = cfg.model_seed;
    weights = Weights::synthesize(shape);
  } else {
    weights = load_weights(cfg.model_path);
  }
  auto examples = load_dataset(cfg.dataset_path);
  const std::size_t used = cfg.n_train + cfg.n_select;
  if (used > examples.size()) {
    throw InvalidArgument("n_train + n_select = " + std::to_string(used) + " exceeds the " +
                          std::to_string(examples.size()) + " examples in " + cfg.dataset_path.string());
  }
  const std::size_t n_eval = cfg.n_eval == 0 ? examples.size() - used : cfg.n_eval;
  auto s = split(examples, cfg.seed, cfg.n_train, cfg.n_select, n_eval);
  auto prompts =
      cfg.system_prompts_path.empty() ? SystemPromptSet::builtin() : SystemPromptSet::load(cfg.system_prompts_path);
  return Workspace{Model(std::move(weights)), std::move(examples), std::move(s), std::move(prompts)};
}

std::filesystem::path vector_path(const std::filesystem::path& dir, std::size_t layer) {
  char name[32];
  std::snprintf(name, sizeof name, "layer_%02zu.cfsv", layer);
  return dir / name;
}

ExtractResult run_extract(const ExperimentConfig& cfg) {
  const Workspace ws = open_workspace(cfg);
  const auto train = nonempty(ws.train(), "train");
  ExtractResult result;
  result.set = build_contrast_activations(train, ws.model, ws.prompts, {cfg.scheme, cfg.seed, cfg.workers});
  const auto dir = cfg.vectors();
  ensure_dir(dir);
  for (std::size_t l = 0; l < result.set.n_layers(); ++l) {
    result.files.push_back(vector_path(dir, l));
    save_vector(result.set.vector(l), result.files.back());
  }
  auto log = open_out(cfg.out_dir / "extract_log.txt");
  log << "scheme " << to_string(cfg.scheme) << "\n"
      << "seed " << cfg.seed << "\n"
      << "used " << result.set.used_examples.size() << "\n"
      << "skipped " << result.set.skipped_ids.size() << "\n";
  for (const auto& id : result.set.skipped_ids) log << "skipped_id " << id << "\n";
  if (cfg.scheme == Scheme::kOptions) {
    log << "letter_a " << result.set.letter_a_count << "\n"
        << "letter_b " << result.set.letter_b_count << "\n";
  }
  log << "source_hash " << to_hex(result.set.source_hash) << "\n";
  return result;
}

SweepResult run_sweep_layers(const ExperimentConfig& cfg) {
  const Workspace ws = open_workspace(cfg);
  const auto select = nonempty(ws.select(), "select");
  std::vector<SteeringVector> vectors;
  for (std::size_t l = 0; l < ws.model.config().n_layers; ++l) vectors.push_back(load_layer_vector(cfg, l));
  auto sweep =
      sweep_layers(ws.model, select, vectors, cfg.layer_sweep_multiplier, eval_options(cfg), cfg.llr_threshold);
  write_sweep(sweep, "layer", true, cfg.out_dir / "sweep_layers.csv");
  return sweep;
}

SweepResult run_sweep_multipliers(const ExperimentConfig& cfg) {
  const Workspace ws = open_workspace(cfg);
  const std::size_t layer = required_layer(cfg, ws.model);
  const auto eval = nonempty(ws.eval(), "eval");
  auto sweep = sweep_multipliers(ws.model, eval, load_layer_vector(cfg, layer), cfg.multipliers, eval_options(cfg),
                                 cfg.llr_threshold);
  write_sweep(sweep, "multiplier", false, cfg.out_dir / "sweep_mult.csv");
  return sweep;
}

std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& cfg) {
  const Workspace ws = open_workspace(cfg);
  const std::size_t layer = required_layer(cfg, ws.model);
  const auto train = nonempty(ws.train(), "train");
  const auto set = build_contrast_activations(train, ws.model, ws.prompts, {cfg.scheme, cfg.seed, cfg.workers});
  std::vector<std::size_t> sizes = cfg.subset_sizes;
  if (sizes.empty()) {
    const std::size_t n = set.used_examples.size();
    for (std::size_t d : {8, 4, 2}) {
      if (n / d > 0 && (sizes.empty() || n / d > sizes.back())) sizes.push_back(n / d);
    }
    if (sizes.empty() || sizes.back() != n) sizes.push_back(n);
  }
  auto rows = convergence(set, layer, sizes);
  auto out = open_out(cfg.out_dir / "converge.csv");
  out << "size,cosine\n";
  for (const auto& r : rows) out << r.size << "," << format_double(r.cosine) << "\n";
  return rows;
}

std::vector<EvalCondition> run_eval(const ExperimentConfig& cfg) {
  const Workspace ws = open_workspace(cfg);
  const std::size_t layer = required_layer(cfg, ws.model);
  const auto eval = nonempty(ws.eval(), "eval");
  const auto vector = load_layer_vector(cfg, layer);
  const auto opts = eval_options(cfg);

  std::vector<EvalCondition> conditions;
  auto add = [&](std::string name, std::optional<float> m) {
    EvalCondition c;
    c.name = std::move(name);
    c.multiplier = m;
    if (m) c.layer = layer;
    c.results = evaluate(ws.model, eval, m ? std::optional<SteeringPlan>(SteeringPlan(vector, *m)) : std::nullopt, opts);
    c.report = summarize(c.results, cfg.llr_threshold);
    conditions.push_back(std::move(c));
  };
  add("unsteered", std::nullopt);
  for (float m : cfg.multipliers) add("m=" + format_float(m), m);

  write_eval_summary(conditions, cfg.out_dir / "eval_summary.csv");
  write_eval_examples(conditions, cfg.out_dir / "eval_examples.csv");
  return conditions;
}

// ---------------------------------------------------------------- csv

std::string csv_field(std::string_view text) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string escaped;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '\\') {
      escaped += "\\\\";
    } else if (c < 0x20 || c > 0x7e) {
      escaped += "\\x";
      escaped.push_back(kHex[c >> 4]);
      escaped.push_back(kHex[c & 15]);
    } else {
      escaped.push_back(ch);
    }
  }
  const bool quote = escaped.find_first_of(",\"") != std::string::npos ||
                     (!escaped.empty() && (escaped.front() == ' ' || escaped.back() == ' '));
  if (!quote) return escaped;
  std::string out = "\"";
  for (char c : escaped) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> parse_csv_record(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> raw(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          raw.back().push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        raw.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      raw.emplace_back();
    } else {
      raw.back().push_back(c);
    }
  }
  if (quoted) throw ParseError(0, "", "unterminated quoted CSV field");

  std::vector<std::string> fields;
  for (const auto& f : raw) {
    std::string out;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] != '\\') {
        out.push_back(f[i]);
      } else if (i + 1 < f.size() && f[i + 1] == '\\') {
        out.push_back('\\');
        ++i;
      } else if (i + 3 < f.size() && f[i + 1] == 'x') {
        unsigned value = 0;
        const auto [p, ec] = std::from_chars(f.data() + i + 2, f.data() + i + 4, value, 16);
        if (ec != std::errc() || p != f.data() + i + 4) throw ParseError(0, "", "bad \\x escape in CSV field");
        out.push_back(static_cast<char>(value));
        i += 3;
      } else {
        throw ParseError(0, "", "bad escape in CSV field");
      }
    }
    fields.push_back(std::move(out));
  }
  return fields;
}

void write_eval_summary(std::span<const EvalCondition> conditions, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "condition,layer,multiplier,p_s,p_o,m_r,mean_llr,llr_exceed_frac,mean_output_tokens,mean_decode_seconds,n\n";
  for (const auto& c : conditions) {
    const auto& r = c.report;
    out << csv_field(c.name) << "," << (c.layer ? std::to_string(*c.layer) : "") << ","
        << (c.multiplier ? format_float(*c.multiplier) : "") << "," << format_double(r.p_s) << ","
        << format_double(r.p_o) << "," << (r.m_r ? format_double(*r.m_r) : "") << "," << format_double(r.mean_llr)
        << "," << format_double(r.llr_exceed_frac) << "," << format_double(r.mean_output_tokens) << ","
        << format_double(r.mean_decode_seconds) << "," << r.n << "\n";
  }
}

void write_eval_examples(std::span<const EvalCondition> conditions, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "condition,layer,multiplier,id,response,hit_s,hit_o,llr,tokens,seconds\n";
  for (const auto& c : conditions) {
    for (const auto& r : c.results) {
      out << csv_field(c.name) << "," << (c.layer ? std::to_string(*c.layer) : "") << ","
          << (c.multiplier ? format_float(*c.multiplier) : "") << "," << csv_field(r.id) << ","
          << csv_field(r.response) << "," << (r.score.hit_s ? 1 : 0) << "," << (r.score.hit_o ? 1 : 0) << ","
          << format_double(r.score.llr) << "," << r.score.decode.output_token_count << ","
          << format_double(r.score.decode.decode_seconds) << "\n";
    }
  }
}

std::vector<EvalCondition> read_eval_examples(const std::filesystem::path& path, double llr_threshold) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "", path.string() + ": missing header");
  const auto header = parse_csv_record(line);
  const std::vector<std::string> expected = {"condition", "layer", "multiplier", "id",     "response",
                                             "hit_s",     "hit_o", "llr",        "tokens", "seconds"};
  if (header != expected) throw ParseError(1, "", path.string() + ": unexpected header");

  std::vector<EvalCondition> conditions;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    try {
      f = parse_csv_record(line);
    } catch (const ParseError& e) {
      throw ParseError(line_no, "", path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (f.size() != expected.size()) {
      throw ParseError(line_no, "", path.string() + ": line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(expected.size()) + " fields, got " + std::to_string(f.size()));
    }
    auto field = [&](std::size_t i) -> std::string_view { return f[i]; };
    try {
      auto [it, inserted] = index.try_emplace(f[0], conditions.size());
      if (inserted) {
        EvalCondition c;
        c.name = f[0];
        if (!f[1].empty()) c.layer = parse_size("layer", field(1));
        if (!f[2].empty()) c.multiplier = parse_number<float>("multiplier", field(2));
        conditions.push_back(std::move(c));
      }
      ExampleResult r;
      r.id = f[3];
      r.response = f[4];
      r.score.hit_s = parse_bool("hit_s", field(5));
      r.score.hit_o = parse_bool("hit_o", field(6));
      r.score.llr = parse_number<double>("llr", field(7));
      r.score.decode.output_token_count = parse_size("tokens", field(8));
      r.score.decode.decode_seconds = parse_number<double>("seconds", field(9));
      conditions[it->second].results.push_back(std::move(r));
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, "", path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (conditions.empty()) throw ParseError(line_no, "", path.string() + ": no rows");
  for (auto& c : conditions) c.report = summarize(c.results, llr_threshold);
  return conditions;
}

}  // namespace cfsteer
