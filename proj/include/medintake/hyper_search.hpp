#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medintake/cnn_model.hpp"
#include "medintake/ensemble.hpp"
#include "medintake/text_pipeline.hpp"

namespace medintake {

// Candidate sets for every searched field.
struct SearchSpace {
  std::vector<std::string> embedding_choices{"godin", "shin"};
  std::vector<int> num_filters{100, 200, 300, 400};
  std::vector<std::array<int, kFilterBanks>> filter_size_lists{
      {1, 2, 3, 4, 5}, {2, 3, 4, 5, 6}, {3, 4, 5, 6, 7}, {1, 2, 2, 2, 3},
      {2, 3, 3, 3, 4}, {3, 4, 4, 4, 5}, {4, 5, 5, 5, 6}};
  std::vector<int> dense_sizes{100, 200, 300, 400};
  std::vector<double> dropout_ps{0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> batch_sizes{50, 100, 150};
  std::vector<double> learning_rates{0.0001, 0.001};
  std::vector<double> adam_beta2s{0.9, 0.999};

  std::size_t cardinality() const;
  bool contains(const HyperParams& hp) const;
  void validate() const;  // throws config_error on an empty candidate set
};

// Each field drawn independently and uniformly from its candidate set.
HyperParams sample_config(const SearchSpace& space, Rng& rng);

struct SearchRecord {
  std::size_t index = 0;
  HyperParams hp;
  std::string ensemble_id;
  std::string status;  // "ok" or "failed"
  double train_score = 0.0;
  double wall_seconds = 0.0;
  std::string error;
  std::string manifest_file;              // relative to the run directory
  std::vector<std::string> model_files;   // relative to the run directory
};

struct SearchRun {
  std::vector<SearchRecord> records;   // index order
  std::vector<std::size_t> ranking;    // ok records, descending train_score
};

struct SearchOptions {
  std::size_t n = 100;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool rank_on_heldout = false;
  std::string run_dir;
};

// Samples n configurations with replacement from the seeded stream, trains
// one fold ensemble per configuration on a bounded worker pool, persists
// results incrementally (search_results.jsonl plus per-ensemble manifests
// and model files), and ranks the completed ensembles. A rerun over an
// existing run directory with the same seed and space reuses completed
// entries instead of retraining.
SearchRun run_search(const SearchSpace& space, const std::vector<LabeledExample>& dataset,
                     const FoldPlan& plan, const TrainingConfig& tc,
                     const std::map<std::string, EmbeddingTable>& tables,
                     const PipelineConfig& pipeline, const SearchOptions& options,
                     std::ostream* log = nullptr);

std::vector<SearchRecord> load_search_records(const std::string& run_dir);
std::vector<std::size_t> rank_records(const std::vector<SearchRecord>& records);

struct MeanStd {
  double mean = 0.0;
  double sample_std = 0.0;
};

// Mean and sample (n-1) standard deviation.
MeanStd summarize(std::span<const double> xs);

struct AblationRow {
  int size = 0;
  std::vector<double> scores;
  MeanStd stats;
};

// Trains `runs` fold ensembles per filter size with all five slots fixed to
// that size, varying learning rate and filter count over the space's
// candidate sets; the remaining fields stay at each set's first entry.
std::vector<AblationRow> filter_size_experiment(
    const SearchSpace& space, const std::vector<LabeledExample>& dataset, const FoldPlan& plan,
    const TrainingConfig& tc, const std::map<std::string, EmbeddingTable>& tables,
    const PipelineConfig& pipeline, std::span<const int> sizes, int runs, std::uint64_t seed,
    std::ostream* log = nullptr);

std::string ablation_table_tsv(const std::vector<AblationRow>& rows);
std::string ablation_table_text(const std::vector<AblationRow>& rows);

struct RankedEntry {
  std::string id;
  double train_score = 0.0;
  std::optional<double> test_score;
};

struct StackedEntry {
  int k = 0;
  std::optional<double> score;
  std::string split;  // "test" or "train"
  std::string error;  // set when this K could not be evaluated
};

struct RankingReport {
  std::vector<RankedEntry> individuals;  // ranked order
  std::vector<StackedEntry> stacked;
};

// Per-ensemble scores plus stacked scores for each requested K. Stacked
// (and per-ensemble test) scores are computed on the supplied test set when
// present, otherwise on the training set. A K larger than the number of
// ranked ensembles produces an error entry; the report is still emitted.
RankingReport emit_ranking_report(const std::string& run_dir,
                                  const std::vector<SearchRecord>& records,
                                  const std::vector<LabeledExample>& train_data,
                                  const std::vector<LabeledExample>* test_data,
                                  std::span<const int> k_values,
                                  const std::map<std::string, EmbeddingTable>& tables,
                                  const PipelineConfig& pipeline);

std::string ranking_report_tsv(const RankingReport& report);
std::string ranking_report_text(const RankingReport& report);

}  // namespace medintake
