#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "medintake/ensemble.hpp"
#include "medintake/metrics.hpp"
#include "oracles.hpp"

using namespace medintake;
namespace fs = std::filesystem;

namespace {

std::vector<LabeledExample> simulated_dataset(const std::array<int, 3>& counts) {
  std::vector<LabeledExample> data;
  int id = 0;
  for (int cls = 1; cls <= 3; ++cls)
    for (int k = 0; k < counts[cls - 1]; ++k)
      data.push_back({"s" + std::to_string(id++), cls, ""});
  return data;
}

std::multiset<std::size_t> fold_sizes(const FoldPlan& plan) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(plan.c), 0);
  for (int f : plan.assignments) ++sizes[static_cast<std::size_t>(f)];
  return {sizes.begin(), sizes.end()};
}

// Desk-scale training point; tiny corpora need a hot learning rate and a
// small batch to get enough optimizer steps.
HyperParams fast_hp() {
  HyperParams hp;
  hp.embedding_choice = "tiny";
  hp.num_filters = 4;
  hp.filter_sizes = {1, 2, 3, 4, 5};
  hp.dense_size = 8;
  hp.dropout_p = 0.4;
  hp.batch_size = 4;
  hp.learning_rate = 0.01;
  hp.adam_beta2 = 0.999;
  return hp;
}

}  // namespace

TEST_CASE("kfold on the shared-task-sized dataset") {
  const auto data = simulated_dataset({1847, 3027, 4789});
  REQUIRE(data.size() == 9663);
  const FoldPlan plan = kfold_split(data, 5, 99, true);

  CHECK(fold_sizes(plan) == std::multiset<std::size_t>{1933, 1933, 1933, 1932, 1932});

  // per-class counts differ by at most one across folds; class 3 lands on
  // 957 or 958 per fold (4789 = 5*957 + 4)
  for (int cls = 1; cls <= 3; ++cls) {
    std::int64_t lo = data.size(), hi = 0;
    for (int f = 0; f < 5; ++f) {
      const auto counts = fold_class_counts(data, plan, f);
      lo = std::min(lo, counts[cls - 1]);
      hi = std::max(hi, counts[cls - 1]);
      if (cls == 3) CHECK((counts[2] == 957 || counts[2] == 958));
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("kfold covers every example exactly once") {
  const auto data = simulated_dataset({7, 11, 13});
  const FoldPlan plan = kfold_split(data, 4, 5, true);
  REQUIRE(plan.assignments.size() == data.size());
  for (int f : plan.assignments) {
    CHECK(f >= 0);
    CHECK(f < 4);
  }
}

TEST_CASE("kfold small and degenerate cases") {
  const auto ten = simulated_dataset({4, 3, 3});
  CHECK(fold_sizes(kfold_split(ten, 5, 1, true)) == std::multiset<std::size_t>{2, 2, 2, 2, 2});
  CHECK_THROWS(kfold_split(simulated_dataset({1, 1, 1}), 5, 1, true));
  CHECK_THROWS(kfold_split(ten, 1, 1, true));
}

TEST_CASE("kfold unstratified still balances totals") {
  const auto data = simulated_dataset({10, 5, 8});
  const FoldPlan plan = kfold_split(data, 4, 3, false);
  const auto sizes = fold_sizes(plan);
  CHECK(*sizes.rbegin() - *sizes.begin() <= 1);
}

TEST_CASE("kfold is deterministic under seed") {
  const auto data = simulated_dataset({20, 15, 10});
  CHECK(kfold_split(data, 5, 42, true).assignments == kfold_split(data, 5, 42, true).assignments);
  CHECK(kfold_split(data, 5, 42, true).assignments != kfold_split(data, 5, 43, true).assignments);
}

TEST_CASE("mean of distributions") {
  std::vector<std::array<double, 3>> two{{0.8, 0.1, 0.1}, {0.2, 0.5, 0.3}};
  const auto m = mean_distributions(two);
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m[2] == doctest::Approx(0.2).epsilon(1e-12));

  std::vector<std::array<double, 3>> stacked{{0.6, 0.3, 0.1}, {0.4, 0.5, 0.1}};
  const auto s = mean_distributions(stacked);
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(0.1).epsilon(1e-12));

  std::vector<std::array<double, 3>> same(3, {0.7, 0.2, 0.1});
  const auto u = mean_distributions(same);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(u[j] - same[0][j]) <= 1e-12);
}

TEST_CASE("rank_by_score is stable descending") {
  CHECK(rank_by_score(std::array<double, 3>{0.61, 0.67, 0.64}) ==
        std::vector<std::size_t>{1, 2, 0});
  CHECK(rank_by_score(std::array<double, 3>{0.5, 0.5, 0.5}) ==
        std::vector<std::size_t>{0, 1, 2});
  CHECK(rank_by_score(std::array<double, 1>{0.9}) == std::vector<std::size_t>{0});
  CHECK_THROWS(rank_by_score({}));
}

TEST_CASE("rank_ensembles orders by train_score") {
  std::vector<FoldEnsemble> ens(3);
  ens[0].id = "a";
  ens[0].train_score = 0.61;
  ens[1].id = "b";
  ens[1].train_score = 0.67;
  ens[2].id = "c";
  ens[2].train_score = 0.64;
  const auto ranked = rank_ensembles(std::move(ens));
  CHECK(ranked[0].id == "b");
  CHECK(ranked[1].id == "c");
  CHECK(ranked[2].id == "a");
  for (std::size_t i = 1; i < ranked.size(); ++i)
    CHECK(ranked[i - 1].train_score >= ranked[i].train_score);
}

TEST_CASE("stack_top_k takes a prefix and validates K") {
  std::vector<FoldEnsemble> ranked(4);
  for (int i = 0; i < 4; ++i) {
    ranked[i].id = "e" + std::to_string(i);
    ranked[i].train_score = 1.0 - 0.1 * i;
  }
  const auto stack = stack_top_k(ranked, 2);
  CHECK(stack.k() == 2);
  CHECK(stack.members[0].id == "e0");
  CHECK(stack.members[1].id == "e1");

  CHECK_THROWS(stack_top_k(ranked, 0));
  CHECK_THROWS(stack_top_k(ranked, 5));
  CHECK(stack_top_k(ranked, 4).k() == 4);
}

TEST_CASE("classify scaling invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<double, 3> d{rng.uniform(), rng.uniform(), rng.uniform()};
    const double c = rng.uniform(0.001, 100.0);
    std::array<double, 3> scaled{d[0] * c, d[1] * c, d[2] * c};
    CHECK(argmax_class(d) == argmax_class(scaled));
  }
}

TEST_CASE("fold ensemble training, prediction, and stacking algebra") {
  auto corpus = oracles::make_separable_corpus(10, 4, 52);  // 30 examples
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  const FoldPlan plan = kfold_split(corpus.examples, 2, 7, true);
  TrainingConfig tc;
  tc.max_epochs = 30;
  tc.patience = 8;

  const FoldEnsemble ens = train_fold_ensemble(fast_hp(), tc, enc, plan, corpus.table, 11, "e0");
  CHECK(ens.members.size() == 2);
  CHECK(ens.train_score >= 0.9);

  SUBCASE("determinism") {
    const FoldEnsemble again =
        train_fold_ensemble(fast_hp(), tc, enc, plan, corpus.table, 11, "e0");
    CHECK(again.train_score == ens.train_score);
  }

  SUBCASE("identical members average to their own prediction") {
    FoldEnsemble dup = ens;
    dup.members[1] = dup.members[0];
    const auto single = predict_proba(dup.members[0], enc[0], corpus.table);
    const auto mean = fold_ensemble_predict(dup, enc[0], corpus.table);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(single[j] - mean[j]) <= 1e-12);
  }

  SUBCASE("ensemble output is a distribution") {
    const auto p = fold_ensemble_predict(ens, enc[3], corpus.table);
    CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) <= 1e-12);
  }

  SUBCASE("held-out scoring variant runs and stays in range") {
    const FoldEnsemble held =
        train_fold_ensemble(fast_hp(), tc, enc, plan, corpus.table, 11, "e0", true);
    CHECK(held.train_score >= 0.0);
    CHECK(held.train_score <= 1.0);
  }

  SUBCASE("stacked mean equals the brute-force mean over all member models") {
    std::vector<FoldEnsemble> pool{ens, ens, ens};
    pool[1].train_score -= 0.01;
    pool[2].train_score -= 0.02;
    const auto stack = stack_top_k(rank_ensembles(pool), 3);
    for (int i = 0; i < 5; ++i) {
      const auto got = stacked_predict(stack, enc[i], corpus.table);
      std::array<double, 3> brute{};
      int count = 0;
      for (const auto& e : stack.members)
        for (const auto& m : e.members) {
          const auto p = predict_proba(m, enc[i], corpus.table);
          for (int j = 0; j < 3; ++j) brute[j] += p[j];
          ++count;
        }
      for (int j = 0; j < 3; ++j) CHECK(std::abs(got[j] - brute[j] / count) <= 1e-12);
    }
  }

  SUBCASE("K=1 stacking is bit-identical to the single ensemble") {
    std::vector<FoldEnsemble> pool{ens};
    const auto stack = stack_top_k(pool, 1);
    for (int i = 0; i < 5; ++i) {
      CHECK(stacked_predict(stack, enc[i], corpus.table) ==
            fold_ensemble_predict(ens, enc[i], corpus.table));
    }
  }

  SUBCASE("manifest round trip and stacked loading") {
    const fs::path run_dir = fs::temp_directory_path() / "medintake_ens_rt";
    fs::remove_all(run_dir);
    fs::create_directories(run_dir);

    const EnsembleManifest man = save_fold_ensemble(run_dir.string(), ens);
    const auto loaded =
        load_fold_ensemble((run_dir / "manifests" / (ens.id + ".json")).string());
    CHECK(loaded.id == ens.id);
    CHECK(loaded.c == ens.c);
    CHECK(loaded.train_score == ens.train_score);
    CHECK(loaded.hp == ens.hp);
    CHECK(loaded.members.size() == ens.members.size());
    CHECK(fold_ensemble_predict(loaded, enc[0], corpus.table) ==
          fold_ensemble_predict(ens, enc[0], corpus.table));

    StackedManifest sm;
    sm.k = 1;
    sm.ensemble_manifests = {"manifests/" + ens.id + ".json"};
    const auto spath = (run_dir / "stacked_top1.json").string();
    save_stacked_manifest(spath, sm);
    const auto stack = load_stacked_ensemble(spath);
    CHECK(stack.k() == 1);

    // deleting a member model file yields an error listing the path
    fs::remove(run_dir / "models" / ens.id / "fold_0.json");
    CHECK_THROWS_WITH_AS(
        load_fold_ensemble((run_dir / "manifests" / (ens.id + ".json")).string()),
        doctest::Contains("fold_0.json"), data_error);
    fs::remove_all(run_dir);
  }
}

TEST_CASE("stacked_predict_dataset matches per-example stacking") {
  auto corpus = oracles::make_separable_corpus(6, 4, 53);
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  const FoldPlan plan = kfold_split(corpus.examples, 2, 9, true);
  TrainingConfig tc;
  tc.max_epochs = 10;
  const FoldEnsemble ens = train_fold_ensemble(fast_hp(), tc, enc, plan, corpus.table, 13, "e0");

  StackedEnsemble stack;
  stack.members = {ens};
  std::map<std::string, EmbeddingTable> tables;
  tables.emplace("tiny", corpus.table);
  const auto all = stacked_predict_dataset(stack, corpus.examples, tables, pc);
  REQUIRE(all.size() == corpus.examples.size());
  for (std::size_t i = 0; i < corpus.examples.size(); ++i)
    CHECK(all[i] == stacked_predict(stack, enc[i], corpus.table));
}
