#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "medintake/rng.hpp"

namespace medintake {

// Probability floor for the log loss; keeps -log finite.
inline constexpr double kProbClip = 1e-12;

template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, T(0)) {}

  T* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  T& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  T at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

// Uniform Glorot fill on [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_fill(Mat<T>& w, int fan_in, int fan_out, Rng& rng) {
  if (fan_in < 1 || fan_out < 1)
    throw std::invalid_argument("xavier_fill: fan_in and fan_out must be >= 1");
  const double b = std::sqrt(6.0 / (fan_in + fan_out));
  for (T& x : w.a) x = static_cast<T>(rng.uniform(-b, b));
}

template <typename T>
Mat<T> xavier_init(int fan_in, int fan_out, Rng& rng) {
  Mat<T> w(fan_in, fan_out);
  xavier_fill(w, fan_in, fan_out, rng);
  return w;
}

// One filter slid word-wise over the document rows. filter holds width*dim
// values, row-major over window positions. pre[t] is the affine response at
// position t and out[t] = relu(pre[t]); both spans have length
// rows.size() - width + 1.
template <typename T>
void conv1d_forward(const std::vector<std::span<const T>>& rows, std::span<const T> filter,
                    int width, int dim, T bias, std::span<T> pre, std::span<T> out) {
  const int len = static_cast<int>(rows.size());
  if (width < 1 || width > len)
    throw std::invalid_argument("conv1d_forward: filter width " + std::to_string(width) +
                                " out of range for length " + std::to_string(len));
  const int steps = len - width + 1;
  for (int t = 0; t < steps; ++t) {
    T acc = bias;
    for (int r = 0; r < width; ++r) {
      const T* x = rows[static_cast<std::size_t>(t + r)].data();
      const T* w = filter.data() + static_cast<std::size_t>(r) * dim;
      T dot = T(0);
      for (int c = 0; c < dim; ++c) dot += w[c] * x[c];
      acc += dot;
    }
    pre[t] = acc;
    out[t] = acc > T(0) ? acc : T(0);
  }
}

// Convenience form used by tests.
template <typename T>
std::vector<T> conv1d_forward(const std::vector<std::span<const T>>& rows, const Mat<T>& filter,
                              T bias) {
  const int width = filter.rows, dim = filter.cols;
  std::vector<T> pre(rows.size() - width + 1), out(rows.size() - width + 1);
  conv1d_forward<T>(rows, {filter.a.data(), filter.a.size()}, width, dim, bias,
                    {pre.data(), pre.size()}, {out.data(), out.size()});
  return out;
}

// Maximum entry plus its position; ties go to the first (lowest) index so
// the backward pass routes the gradient to exactly one position.
template <typename T>
std::pair<T, int> max_over_time(std::span<const T> v) {
  if (v.empty()) throw std::invalid_argument("max_over_time: empty feature map");
  int arg = 0;
  T best = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > best) {
      best = v[i];
      arg = static_cast<int>(i);
    }
  }
  return {best, arg};
}

// out = act(in^T W + b) with W laid out n x m; pre receives the affine
// values. pre and out may alias when act is the identity.
template <typename T>
void dense_forward(std::span<const T> in, const Mat<T>& w, std::span<const T> bias, bool relu,
                   std::span<T> pre, std::span<T> out) {
  if (static_cast<int>(in.size()) != w.rows || static_cast<int>(bias.size()) != w.cols)
    throw std::invalid_argument("dense_forward: shape mismatch");
  std::copy(bias.begin(), bias.end(), pre.begin());
  for (int i = 0; i < w.rows; ++i) {
    const T x = in[i];
    if (x == T(0)) continue;  // dropout zeros are common
    const T* wr = w.row(i);
    for (int j = 0; j < w.cols; ++j) pre[j] += x * wr[j];
  }
  for (int j = 0; j < w.cols; ++j) out[j] = relu ? std::max(pre[j], T(0)) : pre[j];
}

// Max-shifted softmax computed in double.
template <typename T>
void softmax_into(std::span<const T> logits, std::span<double> out) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (const T& x : logits) {
    const double v = static_cast<double>(x);
    if (!std::isfinite(v)) throw std::domain_error("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

template <typename T>
std::vector<double> softmax(std::span<const T> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, {out.data(), out.size()});
  return out;
}

// Clipped negative log likelihood; gold_class is 1-based.
inline double cross_entropy(std::span<const double> probs, int gold_class) {
  if (gold_class < 1 || gold_class > static_cast<int>(probs.size()))
    throw std::invalid_argument("cross_entropy: gold class out of range");
  return -std::log(std::max(probs[static_cast<std::size_t>(gold_class) - 1], kProbClip));
}

// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
// mask records the applied factor per unit for the backward pass; inference
// is the identity.
template <typename T>
void dropout_apply(std::span<T> v, double p, Rng& rng, bool training, std::span<T> mask) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout_apply: p must be in [0, 1)");
  if (!training || p == 0.0) {
    std::fill(mask.begin(), mask.end(), T(1));
    return;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (rng.uniform() < p) {
      mask[i] = T(0);
      v[i] = T(0);
    } else {
      mask[i] = scale;
      v[i] *= scale;
    }
  }
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
};

// One Adam update over a parameter block. bc1/bc2 are the bias corrections
// 1 - beta^t for the post-increment step index t >= 1.
template <typename T>
void adam_update_block(std::span<T> params, std::span<const T> grads, std::span<T> m,
                       std::span<T> v, const AdamConfig& cfg, double bc1, double bc2,
                       const std::string& block) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw std::invalid_argument("adam_update_block: shape mismatch in " + block);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    if (!std::isfinite(g))
      throw std::runtime_error("adam_update_block: non-finite gradient in block " + block);
    m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
    v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
    const double mhat = static_cast<double>(m[i]) / bc1;
    const double vhat = static_cast<double>(v[i]) / bc2;
    params[i] = static_cast<T>(params[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
  }
}

}  // namespace medintake
