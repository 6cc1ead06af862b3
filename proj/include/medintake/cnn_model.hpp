#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "medintake/errors.hpp"
#include "medintake/nn.hpp"
#include "medintake/rng.hpp"
#include "medintake/text_pipeline.hpp"

namespace medintake {

inline constexpr int kFilterBanks = 5;
inline constexpr int kNumClassesOut = 3;

struct HyperParams {
  std::string embedding_choice = "godin";
  int num_filters = 100;
  std::array<int, kFilterBanks> filter_sizes{1, 2, 3, 4, 5};
  int dense_size = 100;
  double dropout_p = 0.5;
  int batch_size = 50;
  double learning_rate = 0.001;
  double adam_beta2 = 0.999;

  bool operator==(const HyperParams&) const = default;
};

struct TrainingConfig {
  int max_epochs = 30;
  int patience = 3;      // epochs without validation improvement
  int max_restarts = 2;  // annealing restarts before stopping
};

// One bank per filter-size slot; duplicate sizes get independent banks.
// w holds one filter per row, laid out window-position-major (width * dim).
template <typename T>
struct ConvBank {
  int width = 0;
  Mat<T> w;
  std::vector<T> b;
};

template <typename T>
struct ModelWeights {
  HyperParams hp;
  int dim = 0;
  int max_len = 0;
  std::vector<ConvBank<T>> banks;
  Mat<T> dense_w;
  std::vector<T> dense_b;
  Mat<T> out_w;
  std::vector<T> out_b;

  int pooled_width() const { return static_cast<int>(banks.size()) * hp.num_filters; }
};

template <typename T>
ModelWeights<T> build_model(const HyperParams& hp, int dim, int max_len, Rng& rng) {
  if (dim < 1) throw config_error("build_model: embedding dimension must be positive");
  if (max_len < 1) throw config_error("build_model: max_len must be positive");
  if (hp.num_filters < 1) throw config_error("build_model: num_filters must be positive");
  if (hp.dense_size < 1) throw config_error("build_model: dense_size must be positive");
  for (int w : hp.filter_sizes) {
    if (w < 1 || w > max_len)
      throw config_error("build_model: filter size " + std::to_string(w) +
                         " out of range for document length " + std::to_string(max_len));
  }
  ModelWeights<T> m;
  m.hp = hp;
  m.dim = dim;
  m.max_len = max_len;
  m.banks.reserve(kFilterBanks);
  for (int w : hp.filter_sizes) {
    ConvBank<T> bank;
    bank.width = w;
    bank.w = Mat<T>(hp.num_filters, w * dim);
    xavier_fill(bank.w, w * dim, hp.num_filters, rng);
    bank.b.assign(static_cast<std::size_t>(hp.num_filters), T(0));
    m.banks.push_back(std::move(bank));
  }
  const int pooled = m.pooled_width();
  m.dense_w = Mat<T>(pooled, hp.dense_size);
  xavier_fill(m.dense_w, pooled, hp.dense_size, rng);
  m.dense_b.assign(static_cast<std::size_t>(hp.dense_size), T(0));
  m.out_w = Mat<T>(hp.dense_size, kNumClassesOut);
  xavier_fill(m.out_w, hp.dense_size, kNumClassesOut, rng);
  m.out_b.assign(kNumClassesOut, T(0));
  return m;
}

// Parameter blocks in a fixed order shared by gradients and Adam moments.
template <typename T>
std::vector<std::pair<std::string, std::span<T>>> collect_blocks(ModelWeights<T>& m) {
  std::vector<std::pair<std::string, std::span<T>>> out;
  for (std::size_t i = 0; i < m.banks.size(); ++i) {
    out.emplace_back("conv_w[" + std::to_string(i) + "]",
                     std::span<T>(m.banks[i].w.a.data(), m.banks[i].w.a.size()));
    out.emplace_back("conv_b[" + std::to_string(i) + "]",
                     std::span<T>(m.banks[i].b.data(), m.banks[i].b.size()));
  }
  out.emplace_back("dense_w", std::span<T>(m.dense_w.a.data(), m.dense_w.a.size()));
  out.emplace_back("dense_b", std::span<T>(m.dense_b.data(), m.dense_b.size()));
  out.emplace_back("out_w", std::span<T>(m.out_w.a.data(), m.out_w.a.size()));
  out.emplace_back("out_b", std::span<T>(m.out_b.data(), m.out_b.size()));
  return out;
}

template <typename T>
std::vector<std::pair<std::string, std::span<const T>>> collect_blocks(const ModelWeights<T>& m) {
  std::vector<std::pair<std::string, std::span<const T>>> out;
  for (std::size_t i = 0; i < m.banks.size(); ++i) {
    out.emplace_back("conv_w[" + std::to_string(i) + "]",
                     std::span<const T>(m.banks[i].w.a.data(), m.banks[i].w.a.size()));
    out.emplace_back("conv_b[" + std::to_string(i) + "]",
                     std::span<const T>(m.banks[i].b.data(), m.banks[i].b.size()));
  }
  out.emplace_back("dense_w", std::span<const T>(m.dense_w.a.data(), m.dense_w.a.size()));
  out.emplace_back("dense_b", std::span<const T>(m.dense_b.data(), m.dense_b.size()));
  out.emplace_back("out_w", std::span<const T>(m.out_w.a.data(), m.out_w.a.size()));
  out.emplace_back("out_b", std::span<const T>(m.out_b.data(), m.out_b.size()));
  return out;
}

template <typename T>
void fill_zero(ModelWeights<T>& m) {
  for (auto& [name, block] : collect_blocks(m)) std::fill(block.begin(), block.end(), T(0));
}

template <typename T>
ModelWeights<T> zeros_like(const ModelWeights<T>& m) {
  ModelWeights<T> z = m;
  fill_zero(z);
  return z;
}

template <typename T>
void scale_params(ModelWeights<T>& m, T s) {
  for (auto& [name, block] : collect_blocks(m))
    for (T& x : block) x *= s;
}

// Scratch buffers for one forward/backward pass; reusable across examples.
template <typename T>
struct Workspace {
  std::vector<std::vector<T>> conv_pre;  // per bank: num_filters * steps
  std::vector<std::vector<T>> conv_out;
  std::vector<T> pooled, dropped, mask;
  std::vector<int> argmax_pos;
  std::vector<T> dense_pre, dense_out;
  std::array<T, kNumClassesOut> logits{};
  std::array<double, kNumClassesOut> probs{};
  std::vector<T> d_dense;
  std::vector<T> d_pool;
  std::vector<std::span<const T>> rows;

  void resize(const ModelWeights<T>& m) {
    conv_pre.resize(m.banks.size());
    conv_out.resize(m.banks.size());
    for (std::size_t b = 0; b < m.banks.size(); ++b) {
      const std::size_t n =
          static_cast<std::size_t>(m.hp.num_filters) * (m.max_len - m.banks[b].width + 1);
      conv_pre[b].resize(n);
      conv_out[b].resize(n);
    }
    const std::size_t p = static_cast<std::size_t>(m.pooled_width());
    pooled.resize(p);
    dropped.resize(p);
    mask.resize(p);
    argmax_pos.resize(p);
    d_pool.resize(p);
    dense_pre.resize(static_cast<std::size_t>(m.hp.dense_size));
    dense_out.resize(static_cast<std::size_t>(m.hp.dense_size));
    d_dense.resize(static_cast<std::size_t>(m.hp.dense_size));
  }
};

// Full forward pass: conv banks -> relu -> max over time -> (dropout when
// training) -> dense relu -> linear output -> softmax. Intermediates stay in
// ws for the backward pass.
template <typename T>
void forward(const ModelWeights<T>& model, const std::vector<std::span<const T>>& rows,
             Workspace<T>& ws, bool training, Rng* rng) {
  if (static_cast<int>(rows.size()) != model.max_len)
    throw std::invalid_argument("forward: document length mismatch");
  if (!rows.empty() && static_cast<int>(rows[0].size()) != model.dim)
    throw std::invalid_argument("forward: embedding dimension mismatch");

  const int nf = model.hp.num_filters;
  int unit = 0;
  for (std::size_t b = 0; b < model.banks.size(); ++b) {
    const ConvBank<T>& bank = model.banks[b];
    const int steps = model.max_len - bank.width + 1;
    for (int f = 0; f < nf; ++f) {
      std::span<T> pre(ws.conv_pre[b].data() + static_cast<std::size_t>(f) * steps, steps);
      std::span<T> out(ws.conv_out[b].data() + static_cast<std::size_t>(f) * steps, steps);
      conv1d_forward<T>(rows, {bank.w.row(f), static_cast<std::size_t>(bank.w.cols)}, bank.width,
                        model.dim, bank.b[f], pre, out);
      const auto [mx, arg] = max_over_time<T>(out);
      ws.pooled[unit] = mx;
      ws.argmax_pos[unit] = arg;
      ++unit;
    }
  }

  std::copy(ws.pooled.begin(), ws.pooled.end(), ws.dropped.begin());
  if (training) {
    dropout_apply<T>({ws.dropped.data(), ws.dropped.size()}, model.hp.dropout_p, *rng, true,
                     {ws.mask.data(), ws.mask.size()});
  } else {
    std::fill(ws.mask.begin(), ws.mask.end(), T(1));
  }

  dense_forward<T>({ws.dropped.data(), ws.dropped.size()}, model.dense_w,
                   {model.dense_b.data(), model.dense_b.size()}, true,
                   {ws.dense_pre.data(), ws.dense_pre.size()},
                   {ws.dense_out.data(), ws.dense_out.size()});
  dense_forward<T>({ws.dense_out.data(), ws.dense_out.size()}, model.out_w,
                   {model.out_b.data(), model.out_b.size()}, false,
                   {ws.logits.data(), ws.logits.size()}, {ws.logits.data(), ws.logits.size()});
  softmax_into<T>({ws.logits.data(), ws.logits.size()}, {ws.probs.data(), ws.probs.size()});
}

// Adds d(loss)/d(params) for one example into grads. Must follow a forward
// on the same ws and rows; ws scratch buffers are reused. Embeddings are
// frozen, so no gradient flows into the input rows.
template <typename T>
void accumulate_gradients(const ModelWeights<T>& model,
                          const std::vector<std::span<const T>>& rows, Workspace<T>& ws,
                          int gold, ModelWeights<T>& grads) {
  const double pg = ws.probs[static_cast<std::size_t>(gold) - 1];
  if (pg <= kProbClip) return;  // loss is flat inside the clip region

  std::array<T, kNumClassesOut> dlogits;
  for (int j = 0; j < kNumClassesOut; ++j)
    dlogits[j] = static_cast<T>(ws.probs[j] - (j == gold - 1 ? 1.0 : 0.0));

  const int ds = model.hp.dense_size;
  for (int j = 0; j < kNumClassesOut; ++j) grads.out_b[j] += dlogits[j];
  for (int i = 0; i < ds; ++i) {
    const T h = ws.dense_out[i];
    if (h != T(0)) {
      T* gw = grads.out_w.row(i);
      for (int j = 0; j < kNumClassesOut; ++j) gw[j] += h * dlogits[j];
    }
    const T* wr = model.out_w.row(i);
    T acc = T(0);
    for (int j = 0; j < kNumClassesOut; ++j) acc += wr[j] * dlogits[j];
    ws.d_dense[i] = ws.dense_pre[i] > T(0) ? acc : T(0);
  }

  const int pw = model.pooled_width();
  for (int i = 0; i < ds; ++i) grads.dense_b[i] += ws.d_dense[i];
  for (int p = 0; p < pw; ++p) {
    const T x = ws.dropped[p];
    if (x != T(0)) {
      T* gw = grads.dense_w.row(p);
      for (int i = 0; i < ds; ++i) gw[i] += x * ws.d_dense[i];
    }
    const T* wr = model.dense_w.row(p);
    T acc = T(0);
    for (int i = 0; i < ds; ++i) acc += wr[i] * ws.d_dense[i];
    ws.d_pool[p] = acc * ws.mask[p];
  }

  const int nf = model.hp.num_filters;
  int unit = 0;
  for (std::size_t b = 0; b < model.banks.size(); ++b) {
    const ConvBank<T>& bank = model.banks[b];
    const int steps = model.max_len - bank.width + 1;
    for (int f = 0; f < nf; ++f, ++unit) {
      const T g = ws.d_pool[unit];
      if (g == T(0)) continue;
      const int t = ws.argmax_pos[unit];
      if (ws.conv_pre[b][static_cast<std::size_t>(f) * steps + t] <= T(0)) continue;
      grads.banks[b].b[f] += g;
      T* gw = grads.banks[b].w.row(f);
      for (int r = 0; r < bank.width; ++r) {
        const T* x = rows[static_cast<std::size_t>(t + r)].data();
        T* gwr = gw + static_cast<std::size_t>(r) * model.dim;
        for (int c = 0; c < model.dim; ++c) gwr[c] += g * x[c];
      }
    }
  }
}

template <typename T>
struct AdamState {
  AdamConfig cfg;
  long t = 0;
  std::vector<std::vector<T>> m, v;  // aligned with collect_blocks order

  void reset() {
    t = 0;
    for (auto& blk : m) std::fill(blk.begin(), blk.end(), T(0));
    for (auto& blk : v) std::fill(blk.begin(), blk.end(), T(0));
  }
};

template <typename T>
AdamState<T> make_adam_state(const ModelWeights<T>& model, AdamConfig cfg) {
  AdamState<T> st;
  st.cfg = cfg;
  for (const auto& [name, block] : collect_blocks(model)) {
    st.m.emplace_back(block.size(), T(0));
    st.v.emplace_back(block.size(), T(0));
  }
  return st;
}

template <typename T>
void adam_step(ModelWeights<T>& params, const ModelWeights<T>& grads, AdamState<T>& st) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.t));
  auto pb = collect_blocks(params);
  auto gb = collect_blocks(grads);
  for (std::size_t k = 0; k < pb.size(); ++k) {
    adam_update_block<T>(pb[k].second, gb[k].second, {st.m[k].data(), st.m[k].size()},
                         {st.v[k].data(), st.v[k].size()}, st.cfg, bc1, bc2, pb[k].first);
  }
}

// Restore the best checkpoint, halve the learning rate, and reset the
// optimizer moments. The restart budget is enforced by the training loop.
template <typename T>
void anneal_restart(ModelWeights<T>& model, AdamState<T>& st, const ModelWeights<T>& checkpoint) {
  model = checkpoint;
  st.cfg.learning_rate *= 0.5;
  st.reset();
}

// Lowest class index wins ties.
int argmax_class(const std::array<double, 3>& probs);

std::array<double, 3> predict_proba(const ModelWeights<float>& model, const EncodedExample& ex,
                                    const EmbeddingTable& table);

double evaluate_f12(const ModelWeights<float>& model, std::span<const EncodedExample> examples,
                    const EmbeddingTable& table);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f12 = 0.0;
  double learning_rate = 0.0;
  int restarts = 0;
};

struct TrainResult {
  ModelWeights<float> weights;  // best validation checkpoint
  double best_val_f12 = 0.0;
  int best_epoch = 0;
  int restarts = 0;
  std::vector<EpochStats> history;
};

// Mini-batch Adam with seeded shuffling, penultimate-layer dropout,
// best-checkpoint tracking, and at most max_restarts annealing restarts.
TrainResult train_model(const HyperParams& hp, const TrainingConfig& tc,
                        std::span<const EncodedExample> train,
                        std::span<const EncodedExample> validation, const EmbeddingTable& table,
                        std::uint64_t seed, std::ostream* log = nullptr,
                        const std::string& log_prefix = {});

void save_model(const std::string& path, const ModelWeights<float>& model);
ModelWeights<float> load_model(const std::string& path);

}  // namespace medintake
