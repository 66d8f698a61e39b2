#pragma once

// Experiment orchestration: extraction, layer and multiplier sweeps,
// convergence study and evaluation, each writing CSV reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfsteer/dataset.hpp"
#include "cfsteer/metrics.hpp"
#include "cfsteer/model.hpp"
#include "cfsteer/steering.hpp"

namespace cfsteer {

/// Flat `key = value` settings. Lists are comma separated; '#' starts a comment.
///
///   model                    weight file (CFTW); when empty a random model is
///                            synthesized from model_seed and the model_* shape keys
///   model_seed, model_layers, model_d_model, model_heads, model_d_ff, model_max_seq_len
///   dataset                  JSONL conflict records
///   system_prompts           variant file; empty uses the built-in set
///   seed                     split shuffle and system-prompt sampling
///   n_train, n_select        split sizes
///   n_eval                   0 takes every example left after train and select
///   scheme                   combined | context_only | system_only | options
///   layer                    steering layer for sweep-mult, eval and converge
///   multipliers              sweep-mult rows and eval conditions
///   layer_sweep_multiplier   steered arm of sweep-layers
///   llr_threshold, max_new_tokens, opinion_and_instruction, use_cache
///   subset_sizes             converge prefix sizes (empty: n/8, n/4, n/2, n)
///   vector_dir               empty means <out>/vectors
///   out, workers
struct ExperimentConfig {
  std::filesystem::path model_path;
  std::uint64_t model_seed = 0;
  ModelConfig model_shape{.n_layers = 4};
  std::filesystem::path dataset_path;
  std::filesystem::path system_prompts_path;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_select = 0;
  std::size_t n_eval = 0;
  Scheme scheme = Scheme::kCombined;
  std::optional<std::size_t> steer_layer;
  std::vector<float> multipliers{2.0f};
  float layer_sweep_multiplier = 2.0f;
  double llr_threshold = kDefaultLlrThreshold;
  std::size_t max_new_tokens = 32;
  bool opinion_and_instruction = false;
  bool use_cache = true;
  std::vector<std::size_t> subset_sizes;
  std::filesystem::path vector_dir;
  std::filesystem::path out_dir = "out";
  std::size_t workers = 1;

  /// Sets one key from its textual value. Throws InvalidArgument for unknown
  /// keys and malformed values.
  void set(std::string_view key, std::string_view value);
  /// Multipliers nonempty and finite, thresholds finite, workers >= 1.
  void validate() const;
  std::filesystem::path vectors() const { return vector_dir.empty() ? out_dir / "vectors" : vector_dir; }
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct EvalOptions {
  std::size_t max_new_tokens = 32;
  bool opinion_and_instruction = false;
  bool use_cache = true;
  std::size_t workers = 1;
};

struct ExampleResult {
  std::string id;
  std::string response;
  ExampleScore score;
};

/// Greedy open-ended answers for every example, steered by `plan` when
/// given. Results are ordered by example id.
std::vector<ExampleResult> evaluate(const Model& model, std::span<const ConflictExample> examples,
                                    const std::optional<SteeringPlan>& plan, const EvalOptions& options);

EvalReport summarize(std::span<const ExampleResult> results, double llr_threshold);

struct SweepRow {
  double key = 0.0;  // layer index or multiplier
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  EvalReport baseline;   // unsteered
  std::size_t best = 0;  // row with the highest p_s; ties go to the earliest row

  const SweepRow& best_row() const { return rows.at(best); }
};

/// One steered run per layer vector plus a single unsteered baseline.
SweepResult sweep_layers(const Model& model, std::span<const ConflictExample> examples,
                         std::span<const SteeringVector> per_layer, float multiplier, const EvalOptions& options,
                         double llr_threshold = kDefaultLlrThreshold);

/// One row per multiplier, in request order.
SweepResult sweep_multipliers(const Model& model, std::span<const ConflictExample> examples,
                              const SteeringVector& vector, std::span<const float> multipliers,
                              const EvalOptions& options, double llr_threshold = kDefaultLlrThreshold);

struct ConvergenceRow {
  std::size_t size = 0;
  double cosine = 0.0;
};

/// Cosine of each prefix-mean vector to the full-set vector at `layer`.
/// Sizes must be ascending, nonzero, and end at the number of used examples.
std::vector<ConvergenceRow> convergence(const ContrastSet& set, std::size_t layer, std::span<const std::size_t> sizes);

// ---- config-driven commands; each writes its reports under cfg.out_dir ----

struct Workspace {
  Model model;
  std::vector<ConflictExample> examples;
  DatasetSplit split;
  SystemPromptSet prompts;

  std::vector<ConflictExample> train() const { return select_examples(examples, split.train_ids); }
  std::vector<ConflictExample> select() const { return select_examples(examples, split.select_ids); }
  std::vector<ConflictExample> eval() const { return select_examples(examples, split.eval_ids); }
};

Workspace open_workspace(const ExperimentConfig& cfg);

std::filesystem::path vector_path(const std::filesystem::path& dir, std::size_t layer);

struct ExtractResult {
  ContrastSet set;
  std::vector<std::filesystem::path> files;
};

/// Writes layer_XX.cfsv for every layer and extract_log.txt.
ExtractResult run_extract(const ExperimentConfig& cfg);
/// Reads every layer's vector; writes sweep_layers.csv.
SweepResult run_sweep_layers(const ExperimentConfig& cfg);
/// Reads the vector of cfg.steer_layer; writes sweep_mult.csv.
SweepResult run_sweep_multipliers(const ExperimentConfig& cfg);
/// Extracts from the train split; writes converge.csv.
std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& cfg);

struct EvalCondition {
  std::string name;  // "unsteered" or "m=<multiplier>"
  std::optional<std::size_t> layer;
  std::optional<float> multiplier;
  std::vector<ExampleResult> results;
  EvalReport report;
};

/// Unsteered plus one condition per multiplier; writes eval_summary.csv and
/// eval_examples.csv.
std::vector<EvalCondition> run_eval(const ExperimentConfig& cfg);

/// Re-aggregates an eval_examples.csv into per-condition reports.
std::vector<EvalCondition> read_eval_examples(const std::filesystem::path& path, double llr_threshold);

void write_eval_summary(std::span<const EvalCondition> conditions, const std::filesystem::path& path);
void write_eval_examples(std::span<const EvalCondition> conditions, const std::filesystem::path& path);

/// Escapes bytes outside printable ASCII (and '\\') as \xHH / \\ and quotes
/// fields holding ',', '"' or spaces at the ends.
std::string csv_field(std::string_view text);
/// Splits one CSV record and undoes csv_field.
std::vector<std::string> parse_csv_record(std::string_view line);

}  // namespace cfsteer
