#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "medintake/cnn_model.hpp"
#include "medintake/text_pipeline.hpp"

namespace medintake {

struct FoldPlan {
  int c = 5;
  std::vector<int> assignments;  // per-example fold index in [0, c)
  bool stratified = true;
  std::uint64_t seed = 0;
};

// Deterministic under seed. Stratified mode deals each class round-robin
// while a rolling cursor keeps both per-class and total fold sizes within
// one of each other.
FoldPlan kfold_split(const std::vector<LabeledExample>& dataset, int c, std::uint64_t seed,
                     bool stratified);

std::array<std::int64_t, 3> fold_class_counts(const std::vector<LabeledExample>& dataset,
                                              const FoldPlan& plan, int fold);

// c models sharing one hyperparameter point; member j was validated on fold
// j. Predicts by uniform averaging of member outputs.
struct FoldEnsemble {
  std::string id;
  HyperParams hp;
  int c = 0;
  std::vector<ModelWeights<float>> members;
  double train_score = 0.0;  // micro F(1+2) over the full training set
};

// Uniform mean of per-model class distributions.
std::array<double, 3> mean_distributions(std::span<const std::array<double, 3>> dists);

FoldEnsemble train_fold_ensemble(const HyperParams& hp, const TrainingConfig& tc,
                                 const std::vector<EncodedExample>& dataset, const FoldPlan& plan,
                                 const EmbeddingTable& table, std::uint64_t seed,
                                 const std::string& id, bool score_on_heldout = false,
                                 std::ostream* log = nullptr);

std::array<double, 3> fold_ensemble_predict(const FoldEnsemble& ens, const EncodedExample& ex,
                                            const EmbeddingTable& table);

// Stable descending argsort; ties keep the earlier (training-order) entry.
std::vector<std::size_t> rank_by_score(std::span<const double> scores);
std::vector<FoldEnsemble> rank_ensembles(std::vector<FoldEnsemble> ensembles);

struct StackedEnsemble {
  std::vector<FoldEnsemble> members;  // ranked order, length K
  int k() const { return static_cast<int>(members.size()); }
};

// First K of an already ranked list.
StackedEnsemble stack_top_k(std::vector<FoldEnsemble> ranked, int k);

std::array<double, 3> stacked_predict(const StackedEnsemble& stack, const EncodedExample& ex,
                                      const EmbeddingTable& table);

// Stacked predictions over a whole dataset; each member ensemble encodes
// the data with its own embedding choice.
std::vector<std::array<double, 3>> stacked_predict_dataset(
    const StackedEnsemble& stack, const std::vector<LabeledExample>& data,
    const std::map<std::string, EmbeddingTable>& tables, const PipelineConfig& pipeline);

// ---------------------------------------------------------------------------
// Manifest files
// ---------------------------------------------------------------------------

struct EnsembleManifest {
  std::string id;
  HyperParams hp;
  int c = 0;
  std::vector<std::string> model_files;  // relative to the manifest location
  double train_score = 0.0;
};

void save_ensemble_manifest(const std::string& path, const EnsembleManifest& manifest);
EnsembleManifest load_ensemble_manifest(const std::string& path);

// Writes models/<id>/fold_<j>.json plus manifests/<id>.json under run_dir
// and returns the manifest with run_dir-relative model paths.
EnsembleManifest save_fold_ensemble(const std::string& run_dir, const FoldEnsemble& ens);

// Loads members from the manifest's model files (relative paths resolve
// against the manifest directory). Missing files are all listed in the error.
FoldEnsemble load_fold_ensemble(const std::string& manifest_path);

struct StackedManifest {
  int k = 0;
  std::vector<std::string> ensemble_manifests;  // ranked, relative to this file
};

void save_stacked_manifest(const std::string& path, const StackedManifest& manifest);
StackedManifest load_stacked_manifest(const std::string& path);
StackedEnsemble load_stacked_ensemble(const std::string& stacked_path);

}  // namespace medintake
