// cfsteer: command-line front end for steering-vector experiments.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>

#include "cfsteer/dataset.hpp"
#include "cfsteer/error.hpp"
#include "cfsteer/model_io.hpp"
#include "cfsteer/runner.hpp"
#include "cfsteer/toy.hpp"

namespace {

using namespace cfsteer;

struct Flags {
  std::string config;
  std::optional<std::string> model, dataset, scheme, out, layer;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::vector<float> mult;
  std::string input;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key = value settings file");
  cmd->add_option("--model", f.model, "weight file (CFTW)");
  cmd->add_option("--dataset", f.dataset, "JSONL conflict dataset");
  cmd->add_option("--scheme", f.scheme, "combined | context_only | system_only | options");
  cmd->add_option("--layer", f.layer, "steering layer (0-based)");
  cmd->add_option("--mult", f.mult, "multiplier(s), comma separated or repeated")->delimiter(',');
  cmd->add_option("--seed", f.seed, "split and prompt-sampling seed");
  cmd->add_option("--workers", f.workers, "parallel examples");
  cmd->add_option("--out", f.out, "output directory");
}

ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.model) cfg.model_path = *f.model;
  if (f.dataset) cfg.dataset_path = *f.dataset;
  if (f.scheme) cfg.scheme = parse_scheme(*f.scheme);
  if (f.layer) cfg.set("layer", *f.layer);
  if (!f.mult.empty()) cfg.multipliers = f.mult;
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (f.out) cfg.out_dir = *f.out;
  cfg.validate();
  return cfg;
}

std::string pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%6.2f", v);
  return buf;
}

void print_sweep(const SweepResult& s, const char* key) {
  std::printf("%-10s %7s %7s %7s %8s\n", key, "p_s", "p_o", "M_R", "LLR");
  std::printf("%-10s %7s %7s\n", "baseline", pct(s.baseline.p_s).c_str(), pct(s.baseline.p_o).c_str());
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    std::printf("%-10g %7s %7s %7s %8.4f%s\n", r.key, pct(r.report.p_s).c_str(), pct(r.report.p_o).c_str(),
                r.report.m_r ? pct(*r.report.m_r).c_str() : "    n/a", r.report.mean_llr, i == s.best ? "  *" : "");
  }
}

void print_conditions(const std::vector<EvalCondition>& conditions) {
  std::printf("%-12s %7s %7s %7s %8s %8s\n", "condition", "p_s", "p_o", "M_R", "LLR", "tokens");
  for (const auto& c : conditions) {
    const auto& r = c.report;
    std::printf("%-12s %7s %7s %7s %8.4f %8.2f\n", c.name.c_str(), pct(r.p_s).c_str(), pct(r.p_o).c_str(),
                r.m_r ? pct(*r.m_r).c_str() : "    n/a", r.mean_llr, r.mean_output_tokens);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-faithfulness steering vectors on a byte-level decoder"};
  app.require_subcommand(1);
  Flags f;

  auto* extract = app.add_subcommand("extract", "compute one steering vector per layer from the train split");
  auto* sweep_l = app.add_subcommand("sweep-layers", "steered p_s per layer on the select split");
  auto* sweep_m = app.add_subcommand("sweep-mult", "metrics per multiplier at the steering layer");
  auto* eval = app.add_subcommand("eval", "unsteered vs steered evaluation with per-example rows");
  auto* converge = app.add_subcommand("converge", "cosine of prefix-mean vectors to the full-set vector");
  auto* report = app.add_subcommand("report", "re-aggregate eval_examples.csv");
  for (auto* cmd : {extract, sweep_l, sweep_m, eval, converge, report}) add_common(cmd, f);
  report->add_option("--input", f.input, "per-example CSV (default <out>/eval_examples.csv)");

  std::size_t toy_count = 400;
  auto* make_toy = app.add_subcommand("make-toy", "write the toy conflict model, dataset and config");
  make_toy->add_option("--out", f.out, "output directory")->required();
  make_toy->add_option("--seed", f.seed, "dataset seed");
  make_toy->add_option("--count", toy_count, "number of examples");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_toy->parsed()) {
      const std::filesystem::path dir = *f.out;
      std::filesystem::create_directories(dir);
      save_weights(toy::conflict_model(), dir / "toy_model.cftw");
      save_dataset(toy::synthetic_conflicts(toy_count, f.seed.value_or(1)), dir / "toy_dataset.jsonl");
      std::FILE* cfg = std::fopen((dir / "toy.cfg").string().c_str(), "w");
      if (!cfg) throw Error("cannot write " + (dir / "toy.cfg").string());
      std::fprintf(cfg,
                   "model = %s\ndataset = %s\nseed = 1\nn_train = %zu\nn_select = %zu\nn_eval = 0\n"
                   "scheme = combined\nlayer = 1\nmultipliers = 0, 2, 4, 8\nmax_new_tokens = 16\nout = %s\n",
                   (dir / "toy_model.cftw").string().c_str(), (dir / "toy_dataset.jsonl").string().c_str(),
                   toy_count / 2, toy_count / 4, (dir / "run").string().c_str());
      std::fclose(cfg);
      std::printf("wrote %s/{toy_model.cftw,toy_dataset.jsonl,toy.cfg}\n", dir.string().c_str());
      return 0;
    }

    const ExperimentConfig cfg = resolve(f);
    if (extract->parsed()) {
      const auto r = run_extract(cfg);
      std::printf("%zu vectors from %zu examples (%zu skipped) -> %s\n", r.files.size(), r.set.used_examples.size(),
                  r.set.skipped_ids.size(), cfg.vectors().string().c_str());
      if (cfg.scheme == Scheme::kOptions) {
        std::printf("context option letter: A=%zu B=%zu\n", r.set.letter_a_count, r.set.letter_b_count);
      }
    } else if (sweep_l->parsed()) {
      const auto s = run_sweep_layers(cfg);
      print_sweep(s, "layer");
      std::printf("best layer %zu\n", static_cast<std::size_t>(s.best_row().key));
    } else if (sweep_m->parsed()) {
      print_sweep(run_sweep_multipliers(cfg), "mult");
    } else if (eval->parsed()) {
      print_conditions(run_eval(cfg));
    } else if (converge->parsed()) {
      std::printf("%8s %12s\n", "size", "cosine");
      for (const auto& r : run_convergence(cfg)) std::printf("%8zu %12.8f\n", r.size, r.cosine);
    } else if (report->parsed()) {
      const std::filesystem::path input = f.input.empty() ? cfg.out_dir / "eval_examples.csv" : std::filesystem::path(f.input);
      const auto conditions = read_eval_examples(input, cfg.llr_threshold);
      write_eval_summary(conditions, cfg.out_dir / "report_summary.csv");
      print_conditions(conditions);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cfsteer: %s\n", e.what());
    return 1;
  }
  return 0;
}
