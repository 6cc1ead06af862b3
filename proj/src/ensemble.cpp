#include "medintake/ensemble.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "medintake/errors.hpp"
#include "medintake/metrics.hpp"
#include "medintake/rng.hpp"
#include "medintake/serialization.hpp"

namespace fs = std::filesystem;

namespace medintake {

FoldPlan kfold_split(const std::vector<LabeledExample>& dataset, int c, std::uint64_t seed,
                     bool stratified) {
  if (c < 2) throw std::invalid_argument("kfold_split: c must be >= 2");
  if (static_cast<std::size_t>(c) > dataset.size())
    throw std::invalid_argument("kfold_split: c exceeds dataset size");

  FoldPlan plan;
  plan.c = c;
  plan.stratified = stratified;
  plan.seed = seed;
  plan.assignments.assign(dataset.size(), 0);

  Rng rng(seed);
  if (!stratified) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    for (std::size_t k = 0; k < order.size(); ++k)
      plan.assignments[order[k]] = static_cast<int>(k % c);
    return plan;
  }

  // Per class: shuffle its examples, then deal them round-robin starting at
  // a cursor that carries over between classes, so totals stay balanced too.
  int cursor = 0;
  for (int cls = 1; cls <= 3; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset[i].label == cls) members.push_back(i);
    shuffle(members, rng);
    for (std::size_t k = 0; k < members.size(); ++k)
      plan.assignments[members[k]] = static_cast<int>((cursor + k) % c);
    cursor = static_cast<int>((cursor + members.size()) % c);
  }
  return plan;
}

std::array<std::int64_t, 3> fold_class_counts(const std::vector<LabeledExample>& dataset,
                                              const FoldPlan& plan, int fold) {
  std::array<std::int64_t, 3> counts{};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (plan.assignments[i] == fold && dataset[i].label >= 1 && dataset[i].label <= 3)
      ++counts[dataset[i].label - 1];
  }
  return counts;
}

std::array<double, 3> mean_distributions(std::span<const std::array<double, 3>> dists) {
  if (dists.empty()) throw std::invalid_argument("mean_distributions: empty input");
  std::array<double, 3> out{};
  for (const auto& d : dists)
    for (int j = 0; j < 3; ++j) out[j] += d[j];
  for (int j = 0; j < 3; ++j) out[j] /= static_cast<double>(dists.size());
  return out;
}

FoldEnsemble train_fold_ensemble(const HyperParams& hp, const TrainingConfig& tc,
                                 const std::vector<EncodedExample>& dataset, const FoldPlan& plan,
                                 const EmbeddingTable& table, std::uint64_t seed,
                                 const std::string& id, bool score_on_heldout,
                                 std::ostream* log) {
  if (dataset.size() != plan.assignments.size())
    throw std::invalid_argument("train_fold_ensemble: plan does not cover dataset");

  FoldEnsemble ens;
  ens.id = id;
  ens.hp = hp;
  ens.c = plan.c;
  ens.members.reserve(static_cast<std::size_t>(plan.c));

  for (int j = 0; j < plan.c; ++j) {
    std::vector<EncodedExample> train, val;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      (plan.assignments[i] == j ? val : train).push_back(dataset[i]);
    }
    TrainResult r = train_model(hp, tc, train, val, table, derive_seed(seed, {std::uint64_t(j)}),
                                log, id + "/fold" + std::to_string(j) + " ");
    ens.members.push_back(std::move(r.weights));
  }

  // Score over the whole training dataset: averaged member predictions by
  // default, or each example's held-out member when requested.
  std::vector<int> gold, pred;
  gold.reserve(dataset.size());
  pred.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const EncodedExample& ex = dataset[i];
    std::array<double, 3> probs{};
    if (score_on_heldout) {
      probs = predict_proba(ens.members[static_cast<std::size_t>(plan.assignments[i])], ex, table);
    } else {
      probs = fold_ensemble_predict(ens, ex, table);
    }
    gold.push_back(ex.label);
    pred.push_back(argmax_class(probs));
  }
  ens.train_score = micro_prf_12(confusion_counts(gold, pred)).f1;
  return ens;
}

std::array<double, 3> fold_ensemble_predict(const FoldEnsemble& ens, const EncodedExample& ex,
                                            const EmbeddingTable& table) {
  if (ens.members.empty()) throw std::invalid_argument("fold_ensemble_predict: no members");
  std::vector<std::array<double, 3>> dists;
  dists.reserve(ens.members.size());
  for (const auto& m : ens.members) dists.push_back(predict_proba(m, ex, table));
  return mean_distributions(dists);
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("rank_by_score: empty list");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<FoldEnsemble> rank_ensembles(std::vector<FoldEnsemble> ensembles) {
  std::vector<double> scores;
  scores.reserve(ensembles.size());
  for (const auto& e : ensembles) scores.push_back(e.train_score);
  const std::vector<std::size_t> order = rank_by_score(scores);
  std::vector<FoldEnsemble> out;
  out.reserve(ensembles.size());
  for (std::size_t idx : order) out.push_back(std::move(ensembles[idx]));
  return out;
}

StackedEnsemble stack_top_k(std::vector<FoldEnsemble> ranked, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > ranked.size())
    throw std::invalid_argument("stack_top_k: K must be in [1, " +
                                std::to_string(ranked.size()) + "]");
  StackedEnsemble stack;
  stack.members.assign(std::make_move_iterator(ranked.begin()),
                       std::make_move_iterator(ranked.begin() + k));
  return stack;
}

std::array<double, 3> stacked_predict(const StackedEnsemble& stack, const EncodedExample& ex,
                                      const EmbeddingTable& table) {
  if (stack.members.empty()) throw std::invalid_argument("stacked_predict: empty stack");
  std::vector<std::array<double, 3>> dists;
  dists.reserve(stack.members.size());
  for (const auto& ens : stack.members) dists.push_back(fold_ensemble_predict(ens, ex, table));
  return mean_distributions(dists);
}

std::vector<std::array<double, 3>> stacked_predict_dataset(
    const StackedEnsemble& stack, const std::vector<LabeledExample>& data,
    const std::map<std::string, EmbeddingTable>& tables, const PipelineConfig& pipeline) {
  if (stack.members.empty()) throw std::invalid_argument("stacked_predict_dataset: empty stack");

  std::map<std::string, std::vector<EncodedExample>> enc_cache;
  std::vector<std::array<double, 3>> sums(data.size(), std::array<double, 3>{});
  for (const FoldEnsemble& ens : stack.members) {
    auto t = tables.find(ens.hp.embedding_choice);
    if (t == tables.end())
      throw config_error("embedding choice '" + ens.hp.embedding_choice +
                         "' has no configured file");
    auto it = enc_cache.find(ens.hp.embedding_choice);
    if (it == enc_cache.end()) {
      it = enc_cache.emplace(ens.hp.embedding_choice, encode_dataset(data, t->second, pipeline))
               .first;
    }
    const auto& enc = it->second;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::array<double, 3> probs = fold_ensemble_predict(ens, enc[i], t->second);
      for (int j = 0; j < 3; ++j) sums[i][j] += probs[j];
    }
  }
  const double k = static_cast<double>(stack.members.size());
  for (auto& s : sums)
    for (int j = 0; j < 3; ++j) s[j] /= k;
  return sums;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

void save_ensemble_manifest(const std::string& path, const EnsembleManifest& m) {
  nlohmann::json j;
  j["id"] = m.id;
  j["hyperparams"] = m.hp;
  j["c"] = m.c;
  j["model_files"] = m.model_files;
  j["train_score"] = m.train_score;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

EnsembleManifest load_ensemble_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open ensemble manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": bad manifest: " + e.what());
  }
  EnsembleManifest m;
  j.at("id").get_to(m.id);
  m.hp = j.at("hyperparams").get<HyperParams>();
  j.at("c").get_to(m.c);
  j.at("model_files").get_to(m.model_files);
  j.at("train_score").get_to(m.train_score);
  return m;
}

EnsembleManifest save_fold_ensemble(const std::string& run_dir, const FoldEnsemble& ens) {
  const fs::path root(run_dir);
  const fs::path model_dir = root / "models" / ens.id;
  fs::create_directories(model_dir);
  fs::create_directories(root / "manifests");

  EnsembleManifest m;
  m.id = ens.id;
  m.hp = ens.hp;
  m.c = ens.c;
  m.train_score = ens.train_score;
  for (std::size_t j = 0; j < ens.members.size(); ++j) {
    const std::string name = "fold_" + std::to_string(j) + ".json";
    save_model((model_dir / name).string(), ens.members[j]);
    m.model_files.push_back("../models/" + ens.id + "/" + name);
  }
  save_ensemble_manifest((root / "manifests" / (ens.id + ".json")).string(), m);
  return m;
}

FoldEnsemble load_fold_ensemble(const std::string& manifest_path) {
  const EnsembleManifest m = load_ensemble_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  std::vector<std::string> missing;
  for (const std::string& rel : m.model_files) {
    const fs::path p = base / rel;
    if (!fs::exists(p)) missing.push_back(p.lexically_normal().string());
  }
  if (!missing.empty()) {
    std::string msg = manifest_path + ": missing member model files:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw data_error(msg);
  }

  FoldEnsemble ens;
  ens.id = m.id;
  ens.hp = m.hp;
  ens.c = m.c;
  ens.train_score = m.train_score;
  for (const std::string& rel : m.model_files)
    ens.members.push_back(load_model((base / rel).string()));
  if (static_cast<int>(ens.members.size()) != ens.c)
    throw data_error(manifest_path + ": manifest lists " + std::to_string(ens.members.size()) +
                     " models but c=" + std::to_string(ens.c));
  return ens;
}

void save_stacked_manifest(const std::string& path, const StackedManifest& m) {
  nlohmann::json j;
  j["k"] = m.k;
  j["ensembles"] = m.ensemble_manifests;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

StackedManifest load_stacked_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open stacked manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": bad stacked manifest: " + e.what());
  }
  StackedManifest m;
  j.at("k").get_to(m.k);
  j.at("ensembles").get_to(m.ensemble_manifests);
  return m;
}

StackedEnsemble load_stacked_ensemble(const std::string& stacked_path) {
  const StackedManifest m = load_stacked_manifest(stacked_path);
  const fs::path base = fs::path(stacked_path).parent_path();
  StackedEnsemble stack;
  for (const std::string& rel : m.ensemble_manifests)
    stack.members.push_back(load_fold_ensemble((base / rel).string()));
  return stack;
}

}  // namespace medintake
