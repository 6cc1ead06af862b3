#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "medintake/cnn_model.hpp"
#include "medintake/metrics.hpp"
#include "oracles.hpp"

using namespace medintake;
namespace fs = std::filesystem;

namespace {

HyperParams tiny_hp() {
  HyperParams hp;
  hp.embedding_choice = "tiny";
  hp.num_filters = 2;
  hp.filter_sizes = {1, 2, 3, 4, 5};
  hp.dense_size = 3;
  hp.dropout_p = 0.5;
  hp.batch_size = 50;
  hp.learning_rate = 0.001;
  hp.adam_beta2 = 0.999;
  return hp;
}

// Desk-scale training point: the tiny test corpora give only a handful of
// optimizer steps per epoch, so they need a larger learning rate and a
// smaller batch than the production ranges.
HyperParams small_train_hp() {
  HyperParams hp = tiny_hp();
  hp.num_filters = 8;
  hp.dense_size = 16;
  hp.dropout_p = 0.4;
  hp.batch_size = 4;
  hp.learning_rate = 0.01;
  return hp;
}

bool same_weights(const ModelWeights<float>& a, const ModelWeights<float>& b) {
  const auto ba = collect_blocks(a);
  const auto bb = collect_blocks(b);
  if (ba.size() != bb.size()) return false;
  for (std::size_t i = 0; i < ba.size(); ++i) {
    if (ba[i].second.size() != bb[i].second.size()) return false;
    for (std::size_t k = 0; k < ba[i].second.size(); ++k)
      if (ba[i].second[k] != bb[i].second[k]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("build_model shapes follow the architecture") {
  HyperParams hp;
  hp.num_filters = 100;
  hp.filter_sizes = {1, 2, 3, 4, 5};
  hp.dense_size = 100;
  Rng rng(1);
  const auto m = build_model<float>(hp, 400, 47, rng);
  CHECK(m.pooled_width() == 500);
  CHECK(m.dense_w.rows == 500);
  CHECK(m.dense_w.cols == 100);
  CHECK(m.out_w.rows == 100);
  CHECK(m.out_w.cols == 3);
  for (const auto& bank : m.banks) {
    CHECK(bank.w.rows == 100);
    CHECK(bank.b.size() == 100);
    for (float b : bank.b) CHECK(b == 0.0f);
  }
  CHECK(m.banks[2].w.cols == 3 * 400);
  for (float b : m.dense_b) CHECK(b == 0.0f);
  for (float b : m.out_b) CHECK(b == 0.0f);
}

TEST_CASE("duplicate filter sizes get independent banks") {
  HyperParams hp = tiny_hp();
  hp.filter_sizes = {1, 2, 2, 2, 3};
  Rng rng(2);
  const auto m = build_model<float>(hp, 4, 8, rng);
  REQUIRE(m.banks.size() == 5);
  CHECK(m.banks[1].width == 2);
  CHECK(m.banks[2].width == 2);
  CHECK(m.banks[3].width == 2);
  CHECK(m.banks[1].w.a != m.banks[2].w.a);
  CHECK(m.banks[2].w.a != m.banks[3].w.a);
}

TEST_CASE("filter size beyond max_len is a configuration error") {
  HyperParams hp = tiny_hp();
  hp.filter_sizes = {1, 2, 3, 4, 50};
  Rng rng(3);
  CHECK_THROWS_AS(build_model<float>(hp, 8, 47, rng), config_error);
}

TEST_CASE("predict_proba basics") {
  auto corpus = oracles::make_separable_corpus(2, 4, 21);
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  Rng rng(5);
  const auto m = build_model<float>(tiny_hp(), 4, 8, rng);

  SUBCASE("distribution sums to one") {
    const auto p = predict_proba(m, enc[0], corpus.table);
    CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) <= 1e-12);
  }
  SUBCASE("zero weights give the uniform distribution") {
    const auto z = zeros_like(m);
    const auto p = predict_proba(z, enc[0], corpus.table);
    for (double x : p) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("repeat calls are bit-identical") {
    const auto a = predict_proba(m, enc[1], corpus.table);
    const auto b = predict_proba(m, enc[1], corpus.table);
    CHECK(a == b);
  }
}

TEST_CASE("argmax_class tie-breaking") {
  CHECK(argmax_class({0.2, 0.5, 0.3}) == 2);
  CHECK(argmax_class({0.4, 0.4, 0.2}) == 1);
  CHECK(argmax_class({1.0 / 3, 1.0 / 3, 1.0 / 3}) == 1);
}

TEST_CASE("analytic gradients match finite differences on tiny models") {
  // num_filters=2, dense_size=3, max_len=5, dim=4; double precision.
  Rng rng(17);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    HyperParams hp = tiny_hp();
    auto model = build_model<double>(hp, 4, 5, rng);
    std::vector<std::vector<double>> input(5, std::vector<double>(4));
    for (auto& row : input)
      for (auto& x : row) x = rng.uniform(-1.5, 1.5);
    std::vector<std::span<const double>> rows;
    for (const auto& r : input) rows.emplace_back(r.data(), r.size());
    const int gold = static_cast<int>(rng.uniform_index(3)) + 1;

    const double err = oracles::fd_gradient_max_rel_err(model, rows, gold);
    CHECK(err < 1e-4);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("max-pool routes gradient through the argmax window only") {
  // One width-1 filter per bank; the conv weight gradient must equal
  // dpool * x[argmax], i.e. only the argmax row contributes.
  HyperParams hp = tiny_hp();
  hp.num_filters = 1;
  hp.filter_sizes = {1, 1, 1, 1, 1};
  hp.dense_size = 1;
  Rng rng(23);
  auto model = build_model<double>(hp, 1, 3, rng);
  for (auto& bank : model.banks) bank.w.a[0] = 1.0;  // identity response

  std::vector<std::vector<double>> input{{0.5}, {2.0}, {1.0}};
  std::vector<std::span<const double>> rows;
  for (const auto& r : input) rows.emplace_back(r.data(), r.size());

  Workspace<double> ws;
  ws.resize(model);
  forward(model, rows, ws, false, nullptr);
  for (int u = 0; u < model.pooled_width(); ++u) CHECK(ws.argmax_pos[u] == 1);

  auto grads = zeros_like(model);
  accumulate_gradients(model, rows, ws, 1, grads);
  for (std::size_t b = 0; b < model.banks.size(); ++b) {
    // gradient w.r.t. the filter weight is dpool * x[argmax] = dpool * 2.0;
    // bias gradient is dpool itself
    if (grads.banks[b].b[0] != 0.0)
      CHECK(grads.banks[b].w.a[0] == doctest::Approx(2.0 * grads.banks[b].b[0]).epsilon(1e-12));
  }
}

TEST_CASE("training learns a keyword-separable corpus") {
  auto corpus = oracles::make_separable_corpus(12, 4, 31);  // 36 examples
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  std::vector<EncodedExample> train(enc.begin(), enc.begin() + 27);
  std::vector<EncodedExample> val(enc.begin() + 27, enc.end());

  TrainingConfig tc;
  tc.max_epochs = 40;
  tc.patience = 8;  // tiny validation fold: F moves in coarse steps
  const auto result = train_model(small_train_hp(), tc, train, val, corpus.table, 77);

  const double train_f = evaluate_f12(result.weights, train, corpus.table);
  CHECK(train_f >= 0.95);
  CHECK(result.best_val_f12 >= 0.9);

  SUBCASE("history is per-epoch and well-formed") {
    REQUIRE(!result.history.empty());
    for (std::size_t i = 0; i < result.history.size(); ++i) {
      CHECK(result.history[i].epoch == static_cast<int>(i) + 1);
      CHECK(result.history[i].learning_rate > 0.0);
    }
  }
  SUBCASE("returned weights hit the best recorded validation score") {
    double best = 0.0;
    for (const auto& h : result.history) best = std::max(best, h.val_f12);
    CHECK(evaluate_f12(result.weights, val, corpus.table) == best);
  }
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  auto corpus = oracles::make_separable_corpus(6, 4, 33);
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  std::vector<EncodedExample> train(enc.begin(), enc.begin() + 12);
  std::vector<EncodedExample> val(enc.begin() + 12, enc.end());

  TrainingConfig tc;
  tc.max_epochs = 6;
  const auto a = train_model(small_train_hp(), tc, train, val, corpus.table, 123);
  const auto b = train_model(small_train_hp(), tc, train, val, corpus.table, 123);
  CHECK(same_weights(a.weights, b.weights));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_f12 == b.history[i].val_f12);
  }
}

TEST_CASE("plateau triggers exactly two annealing restarts, then stops") {
  // All training labels are class 3, so the model predicts class 3
  // everywhere and validation F(1+2) stays 0: no improvement ever happens
  // after the first epoch sets the incumbent.
  auto corpus = oracles::make_separable_corpus(6, 4, 35);
  PipelineConfig pc;
  pc.max_len = 8;
  auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  for (auto& e : enc) e.label = 3;
  std::vector<EncodedExample> train(enc.begin(), enc.begin() + 12);
  std::vector<EncodedExample> val(enc.begin() + 12, enc.end());

  TrainingConfig tc;
  tc.max_epochs = 50;
  tc.patience = 2;
  HyperParams hp = small_train_hp();
  const auto result = train_model(hp, tc, train, val, corpus.table, 7);

  CHECK(result.restarts == 2);
  CHECK(result.history.size() < 50);  // stopped early
  // learning rate was halved at each restart
  const double lr0 = hp.learning_rate;
  bool saw_half = false, saw_quarter = false;
  for (const auto& h : result.history) {
    if (h.learning_rate == lr0 * 0.5) saw_half = true;
    if (h.learning_rate == lr0 * 0.25) saw_quarter = true;
  }
  CHECK(saw_half);
  CHECK(saw_quarter);
}

TEST_CASE("anneal_restart restores the checkpoint exactly") {
  Rng rng(41);
  auto model = build_model<float>(tiny_hp(), 4, 5, rng);
  const auto checkpoint = model;
  auto adam = make_adam_state(model, AdamConfig{0.9, 0.999, 1e-8, 0.001});
  adam.t = 10;
  for (auto& blk : adam.m)
    for (auto& x : blk) x = 0.5f;

  scale_params(model, 2.0f);  // drift away from the checkpoint
  anneal_restart(model, adam, checkpoint);

  CHECK(same_weights(model, checkpoint));
  CHECK(adam.cfg.learning_rate == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(adam.t == 0);
  for (const auto& blk : adam.m)
    for (float x : blk) CHECK(x == 0.0f);
}

TEST_CASE("model persistence round-trips exactly") {
  auto corpus = oracles::make_separable_corpus(2, 4, 43);
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  Rng rng(44);
  const auto m = build_model<float>(small_train_hp(), 4, 8, rng);

  const auto path = (fs::temp_directory_path() / "medintake_model_rt.json").string();
  save_model(path, m);
  const auto loaded = load_model(path);

  CHECK(loaded.hp == m.hp);
  CHECK(loaded.dim == m.dim);
  CHECK(loaded.max_len == m.max_len);
  CHECK(same_weights(loaded, m));
  CHECK(predict_proba(loaded, enc[0], corpus.table) == predict_proba(m, enc[0], corpus.table));

  // re-saving produces identical bytes
  const auto path2 = (fs::temp_directory_path() / "medintake_model_rt2.json").string();
  save_model(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("empty splits are rejected") {
  auto corpus = oracles::make_separable_corpus(2, 4, 45);
  PipelineConfig pc;
  pc.max_len = 8;
  const auto enc = encode_dataset(corpus.examples, corpus.table, pc);
  TrainingConfig tc;
  CHECK_THROWS(train_model(small_train_hp(), tc, {}, enc, corpus.table, 1));
  CHECK_THROWS(train_model(small_train_hp(), tc, enc, {}, corpus.table, 1));
}
