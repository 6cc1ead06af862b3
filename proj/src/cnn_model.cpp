#include "medintake/cnn_model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "medintake/metrics.hpp"

namespace medintake {

int argmax_class(const std::array<double, 3>& probs) {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best + 1;
}

std::array<double, 3> predict_proba(const ModelWeights<float>& model, const EncodedExample& ex,
                                    const EmbeddingTable& table) {
  thread_local Workspace<float> ws;
  ws.resize(model);
  embedded_rows(ex, table, ws.rows);
  forward(model, ws.rows, ws, false, nullptr);
  return ws.probs;
}

double evaluate_f12(const ModelWeights<float>& model, std::span<const EncodedExample> examples,
                    const EmbeddingTable& table) {
  thread_local Workspace<float> ws;
  ws.resize(model);
  std::vector<int> gold, pred;
  gold.reserve(examples.size());
  pred.reserve(examples.size());
  for (const EncodedExample& ex : examples) {
    embedded_rows(ex, table, ws.rows);
    forward(model, ws.rows, ws, false, nullptr);
    gold.push_back(ex.label);
    pred.push_back(argmax_class(ws.probs));
  }
  return micro_prf_12(confusion_counts(gold, pred)).f1;
}

TrainResult train_model(const HyperParams& hp, const TrainingConfig& tc,
                        std::span<const EncodedExample> train,
                        std::span<const EncodedExample> validation, const EmbeddingTable& table,
                        std::uint64_t seed, std::ostream* log, const std::string& log_prefix) {
  if (train.empty() || validation.empty())
    throw std::invalid_argument("train_model: empty training or validation split");

  const int max_len = static_cast<int>(train[0].rows.size());
  Rng rng(seed);
  ModelWeights<float> model = build_model<float>(hp, table.dim, max_len, rng);
  AdamState<float> adam =
      make_adam_state(model, AdamConfig{0.9, hp.adam_beta2, 1e-8, hp.learning_rate});
  ModelWeights<float> grads = zeros_like(model);
  Workspace<float> ws;
  ws.resize(model);

  TrainResult res;
  ModelWeights<float> best = model;
  double best_f = -1.0;
  int best_epoch = 0;
  int since_improve = 0;
  int restarts = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t n = train.size();
  const std::size_t batch = static_cast<std::size_t>(hp.batch_size);

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t bsz = std::min(batch, n - start);
      fill_zero(grads);
      for (std::size_t k = 0; k < bsz; ++k) {
        const EncodedExample& ex = train[order[start + k]];
        embedded_rows(ex, table, ws.rows);
        forward(model, ws.rows, ws, true, &rng);
        loss_sum += cross_entropy({ws.probs.data(), ws.probs.size()}, ex.label);
        accumulate_gradients(model, ws.rows, ws, ex.label, grads);
      }
      scale_params(grads, 1.0f / static_cast<float>(bsz));
      adam_step(model, grads, adam);
    }

    const double train_loss = loss_sum / static_cast<double>(n);
    const double val_f = evaluate_f12(model, validation, table);
    res.history.push_back({epoch, train_loss, val_f, adam.cfg.learning_rate, restarts});
    if (log) {
      std::ostringstream line;
      line.setf(std::ios::fixed);
      line.precision(4);
      line << log_prefix << "epoch " << epoch << " loss " << train_loss << " val_f12 " << val_f
           << " lr " << adam.cfg.learning_rate << " restarts " << restarts << "\n";
      (*log) << line.str() << std::flush;
    }

    if (val_f > best_f) {
      best_f = val_f;
      best = model;
      best_epoch = epoch;
      since_improve = 0;
    } else if (++since_improve >= tc.patience) {
      if (restarts >= tc.max_restarts) break;
      anneal_restart(model, adam, best);
      ++restarts;
      since_improve = 0;
    }
  }

  res.weights = std::move(best);
  res.best_val_f12 = best_f;
  res.best_epoch = best_epoch;
  res.restarts = restarts;
  return res;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const HyperParams& hp) {
  j = nlohmann::json{{"embedding_choice", hp.embedding_choice},
                     {"num_filters", hp.num_filters},
                     {"filter_sizes", hp.filter_sizes},
                     {"dense_size", hp.dense_size},
                     {"dropout_p", hp.dropout_p},
                     {"batch_size", hp.batch_size},
                     {"learning_rate", hp.learning_rate},
                     {"adam_beta2", hp.adam_beta2}};
}

void from_json(const nlohmann::json& j, HyperParams& hp) {
  j.at("embedding_choice").get_to(hp.embedding_choice);
  j.at("num_filters").get_to(hp.num_filters);
  j.at("filter_sizes").get_to(hp.filter_sizes);
  j.at("dense_size").get_to(hp.dense_size);
  j.at("dropout_p").get_to(hp.dropout_p);
  j.at("batch_size").get_to(hp.batch_size);
  j.at("learning_rate").get_to(hp.learning_rate);
  j.at("adam_beta2").get_to(hp.adam_beta2);
}

namespace {

// Floats travel as doubles; the widening is exact, and the shortest
// round-trip double representation written by the JSON layer restores the
// identical float on read.
nlohmann::json mat_to_json(const Mat<float>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(static_cast<double>(m.at(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat<float> mat_from_json(const nlohmann::json& j, int rows, int cols, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw data_error("model file: bad row count in " + what);
  Mat<float> m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw data_error("model file: bad column count in " + what);
    for (int c = 0; c < cols; ++c) m.at(r, c) = static_cast<float>(row[c].get<double>());
  }
  return m;
}

nlohmann::json vec_to_json(const std::vector<float>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (float x : v) out.push_back(static_cast<double>(x));
  return out;
}

std::vector<float> vec_from_json(const nlohmann::json& j, std::size_t n, const std::string& what) {
  if (!j.is_array() || j.size() != n) throw data_error("model file: bad length in " + what);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(j[i].get<double>());
  return out;
}

}  // namespace

void save_model(const std::string& path, const ModelWeights<float>& model) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["hyperparams"] = model.hp;
  j["embedding_dim"] = model.dim;
  j["max_len"] = model.max_len;
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& bank : model.banks) {
    conv.push_back(nlohmann::json{
        {"width", bank.width}, {"w", mat_to_json(bank.w)}, {"b", vec_to_json(bank.b)}});
  }
  j["weights"] =
      nlohmann::json{{"conv", std::move(conv)},       {"dense_w", mat_to_json(model.dense_w)},
                     {"dense_b", vec_to_json(model.dense_b)}, {"out_w", mat_to_json(model.out_w)},
                     {"out_b", vec_to_json(model.out_b)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

ModelWeights<float> load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open model file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": bad model file: " + e.what());
  }
  if (j.value("format_version", 0) != 1)
    throw data_error(path + ": unsupported model format version");

  ModelWeights<float> m;
  m.hp = j.at("hyperparams").get<HyperParams>();
  m.dim = j.at("embedding_dim").get<int>();
  m.max_len = j.at("max_len").get<int>();
  const auto& w = j.at("weights");
  const auto& conv = w.at("conv");
  if (!conv.is_array() || conv.size() != kFilterBanks)
    throw data_error(path + ": expected " + std::to_string(kFilterBanks) + " conv banks");
  for (std::size_t b = 0; b < conv.size(); ++b) {
    ConvBank<float> bank;
    bank.width = conv[b].at("width").get<int>();
    bank.w = mat_from_json(conv[b].at("w"), m.hp.num_filters, bank.width * m.dim, "conv w");
    bank.b = vec_from_json(conv[b].at("b"), static_cast<std::size_t>(m.hp.num_filters), "conv b");
    m.banks.push_back(std::move(bank));
  }
  m.dense_w = mat_from_json(w.at("dense_w"), m.pooled_width(), m.hp.dense_size, "dense_w");
  m.dense_b =
      vec_from_json(w.at("dense_b"), static_cast<std::size_t>(m.hp.dense_size), "dense_b");
  m.out_w = mat_from_json(w.at("out_w"), m.hp.dense_size, kNumClassesOut, "out_w");
  m.out_b = vec_from_json(w.at("out_b"), kNumClassesOut, "out_b");
  return m;
}

}  // namespace medintake
