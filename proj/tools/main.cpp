#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "medintake/config.hpp"
#include "medintake/ensemble.hpp"
#include "medintake/errors.hpp"
#include "medintake/hyper_search.hpp"
#include "medintake/metrics.hpp"
#include "medintake/text_pipeline.hpp"

namespace fs = std::filesystem;
using namespace medintake;

namespace {

struct CliOverrides {
  std::string config_path;
  std::string out;
  std::int64_t n = -1;
  int folds = -1;
  int jobs = -1;
  int top_k = -1;
  bool seed_set = false;
  std::uint64_t seed = 0;
};

RunConfig effective_config(const CliOverrides& ov) {
  RunConfig cfg = load_config(ov.config_path);
  if (ov.n >= 0) cfg.n = static_cast<std::size_t>(ov.n);
  if (ov.folds >= 0) cfg.folds = ov.folds;
  if (ov.jobs >= 0) cfg.jobs = ov.jobs;
  if (ov.seed_set) cfg.seed = ov.seed;
  if (!ov.out.empty()) cfg.output_dir = ov.out;
  if (cfg.folds < 2) throw config_error("folds must be >= 2");
  if (cfg.n < 1) throw config_error("n must be >= 1");
  return cfg;
}

int effective_jobs(const RunConfig& cfg) {
  if (cfg.jobs > 0) return cfg.jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << content;
}

void print_distribution(const std::string& name, const std::vector<LabeledExample>& data) {
  const auto counts = class_counts(data);
  std::cout << name << ": class1 " << counts[0] << "  class2 " << counts[1] << "  class3 "
            << counts[2] << "  total " << data.size() << "\n";
}

int cmd_validate(const CliOverrides& ov) {
  const RunConfig cfg = effective_config(ov);
  if (cfg.train_file.empty()) throw config_error("config: train_file is required");

  const auto train = load_dataset(cfg.train_file);
  print_distribution("train", train);
  if (!cfg.test_file.empty()) {
    const auto test = load_dataset(cfg.test_file);
    print_distribution("test", test);
  }
  for (const auto& [choice, file] : cfg.embeddings) {
    const EmbeddingTable table = load_embeddings(file);
    std::cout << "embedding '" << choice << "': " << table.vocab_size() << " words, dim "
              << table.dim << " (" << file << ")\n";
  }
  for (const std::string& choice : cfg.space.embedding_choices) {
    if (!cfg.embeddings.count(choice))
      throw config_error("search space names embedding choice '" + choice +
                         "' but no file is configured for it");
  }
  std::cout << "ok\n";
  return 0;
}

int cmd_search(const CliOverrides& ov) {
  const RunConfig cfg = effective_config(ov);
  if (cfg.train_file.empty()) throw config_error("config: train_file is required");

  const auto dataset = load_dataset(cfg.train_file);
  const auto tables = load_embedding_tables(cfg);
  const FoldPlan plan = kfold_split(dataset, cfg.folds,
                                    derive_seed(cfg.seed, SeedStream::kFoldPlan), cfg.stratified);

  SearchOptions opt;
  opt.n = cfg.n;
  opt.seed = cfg.seed;
  opt.jobs = effective_jobs(cfg);
  opt.rank_on_heldout = cfg.rank_on_heldout;
  opt.run_dir = cfg.output_dir;

  const SearchRun run = run_search(cfg.space, dataset, plan, cfg.training, tables, cfg.pipeline,
                                   opt, &std::cerr);

  std::size_t failed = 0;
  for (const auto& r : run.records)
    if (r.status != "ok") ++failed;

  std::vector<LabeledExample> test;
  if (!cfg.test_file.empty()) test = load_dataset(cfg.test_file);
  const RankingReport report =
      emit_ranking_report(opt.run_dir, run.records, dataset,
                          cfg.test_file.empty() ? nullptr : &test, cfg.top_k, tables,
                          cfg.pipeline);
  write_file((fs::path(opt.run_dir) / "report.tsv").string(), ranking_report_tsv(report));
  write_file((fs::path(opt.run_dir) / "report.txt").string(), ranking_report_text(report));

  std::cout << "search complete: " << run.records.size() - failed << " ok, " << failed
            << " failed\n";
  std::cout << ranking_report_text(report);
  std::cout << "results: " << opt.run_dir << "\n";
  return 0;
}

int cmd_stack(const CliOverrides& ov) {
  const RunConfig cfg = effective_config(ov);
  if (ov.top_k < 1) throw config_error("stack: --top-k must be >= 1");
  const int k = ov.top_k;

  const auto records = load_search_records(cfg.output_dir);
  if (records.empty())
    throw config_error("stack: no completed search found in " + cfg.output_dir);
  const auto ranked = rank_records(records);
  if (static_cast<std::size_t>(k) > ranked.size())
    throw config_error("stack: K=" + std::to_string(k) + " exceeds the " +
                       std::to_string(ranked.size()) + " ranked ensembles");

  StackedManifest manifest;
  manifest.k = k;
  for (int i = 0; i < k; ++i)
    manifest.ensemble_manifests.push_back(records[ranked[static_cast<std::size_t>(i)]].manifest_file);
  const std::string path =
      (fs::path(cfg.output_dir) / ("stacked_top" + std::to_string(k) + ".json")).string();
  save_stacked_manifest(path, manifest);
  std::cout << path << "\n";
  return 0;
}

int cmd_evaluate(const CliOverrides& ov, const std::string& stacked_path,
                 const std::string& data_path) {
  const RunConfig cfg = effective_config(ov);
  const auto tables = load_embedding_tables(cfg);
  const auto data = load_dataset(data_path);
  const StackedEnsemble stack = load_stacked_ensemble(stacked_path);

  const auto probs = stacked_predict_dataset(stack, data, tables, cfg.pipeline);
  std::vector<int> gold, pred;
  gold.reserve(data.size());
  pred.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    gold.push_back(data[i].label);
    pred.push_back(argmax_class(probs[i]));
  }
  const MetricReport report = metric_report(gold, pred);

  const fs::path out_dir = ov.out.empty() ? fs::path(stacked_path).parent_path() : fs::path(ov.out);
  fs::create_directories(out_dir);
  write_file((out_dir / "evaluation.json").string(), metric_report_json(report));
  write_file((out_dir / "evaluation.txt").string(), metric_report_text(report));
  std::cout << metric_report_text(report);
  return 0;
}

int cmd_predict(const CliOverrides& ov, const std::string& stacked_path,
                const std::string& input_path, const std::string& out_path) {
  const RunConfig cfg = effective_config(ov);
  const auto tables = load_embedding_tables(cfg);
  const auto data = load_dataset(input_path, /*strict_labels=*/false);
  const StackedEnsemble stack = load_stacked_ensemble(stacked_path);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw data_error(out_path + ": cannot open for writing");
  if (data.empty()) return 0;

  const auto probs = stacked_predict_dataset(stack, data, tables, cfg.pipeline);
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data[i].id << "\t" << argmax_class(probs[i]);
    for (int j = 0; j < 3; ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f", probs[i][j]);
      out << "\t" << buf;
    }
    out << "\n";
  }
  return 0;
}

int cmd_ablate(const CliOverrides& ov, std::vector<int> sizes, int runs) {
  const RunConfig cfg = effective_config(ov);
  if (cfg.train_file.empty()) throw config_error("config: train_file is required");
  if (sizes.empty()) sizes = {1, 2, 3, 4, 5, 6, 7};

  const auto dataset = load_dataset(cfg.train_file);
  const auto tables = load_embedding_tables(cfg);
  const FoldPlan plan = kfold_split(dataset, cfg.folds,
                                    derive_seed(cfg.seed, SeedStream::kFoldPlan), cfg.stratified);

  const auto rows = filter_size_experiment(cfg.space, dataset, plan, cfg.training, tables,
                                           cfg.pipeline, sizes, runs, cfg.seed, &std::cerr);
  fs::create_directories(cfg.output_dir);
  write_file((fs::path(cfg.output_dir) / "ablation.tsv").string(), ablation_table_tsv(rows));
  write_file((fs::path(cfg.output_dir) / "ablation.txt").string(), ablation_table_text(rows));
  std::cout << ablation_table_text(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stacked ensembles of shallow text CNNs for 3-class short-text classification"};
  app.require_subcommand(1);

  CliOverrides ov;
  std::string stacked_path, data_path, input_path, out_path;
  std::vector<int> sizes;
  int runs = 4;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", ov.config_path, "JSON run configuration")->required();
    cmd->add_option("--seed", ov.seed, "master seed (overrides config)")
        ->each([&](const std::string&) { ov.seed_set = true; });
    cmd->add_option("--jobs", ov.jobs, "worker pool size (0 = available parallelism)");
    cmd->add_option("--out", ov.out, "output directory (overrides config output_dir)");
  };

  CLI::App* validate = app.add_subcommand("validate", "check datasets and embedding files");
  add_common(validate);

  CLI::App* search = app.add_subcommand("search", "random hyperparameter search");
  add_common(search);
  search->add_option("--n", ov.n, "number of configurations to sample");
  search->add_option("--folds", ov.folds, "cross-validation folds per ensemble");

  CLI::App* stack = app.add_subcommand("stack", "stack the top-K ranked ensembles");
  add_common(stack);
  stack->add_option("--top-k", ov.top_k, "how many ranked ensembles to stack")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a stacked ensemble on a dataset");
  add_common(evaluate);
  evaluate->add_option("--stack", stacked_path, "stacked manifest file")->required();
  evaluate->add_option("--data", data_path, "dataset file to score")->required();

  CLI::App* predict = app.add_subcommand("predict", "write per-example predictions");
  add_common(predict);
  predict->add_option("--stack", stacked_path, "stacked manifest file")->required();
  predict->add_option("--input", input_path, "input dataset file")->required();
  predict->add_option("--output", out_path, "predictions output file")->required();

  CLI::App* ablate = app.add_subcommand("ablate-filters", "fixed-filter-size ablation runs");
  add_common(ablate);
  ablate->add_option("--sizes", sizes, "filter sizes to ablate");
  ablate->add_option("--runs", runs, "ensembles per size (>= 2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) return cmd_validate(ov);
    if (search->parsed()) return cmd_search(ov);
    if (stack->parsed()) return cmd_stack(ov);
    if (evaluate->parsed()) return cmd_evaluate(ov, stacked_path, data_path);
    if (predict->parsed()) return cmd_predict(ov, stacked_path, input_path, out_path);
    if (ablate->parsed()) return cmd_ablate(ov, sizes, runs);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
