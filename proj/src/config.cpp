#include "medintake/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "medintake/errors.hpp"
#include "medintake/serialization.hpp"

namespace fs = std::filesystem;

namespace medintake {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw config_error("config: unknown key '" + it.key() + "' in " + where);
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open config file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + ": bad JSON: " + e.what());
  }

  check_keys(j,
             {"train_file", "test_file", "embeddings", "output_dir", "pipeline", "training",
              "search_space", "n", "folds", "stratified", "top_k", "seed", "jobs",
              "rank_on_heldout"},
             "top level");

  RunConfig cfg;
  const fs::path base = fs::path(path).parent_path();

  if (j.contains("train_file")) cfg.train_file = resolve(base, j.at("train_file").get<std::string>());
  if (j.contains("test_file")) cfg.test_file = resolve(base, j.at("test_file").get<std::string>());
  if (j.contains("embeddings")) {
    for (auto it = j["embeddings"].begin(); it != j["embeddings"].end(); ++it)
      cfg.embeddings[it.key()] = resolve(base, it.value().get<std::string>());
  }
  if (j.contains("output_dir")) cfg.output_dir = resolve(base, j.at("output_dir").get<std::string>());

  if (j.contains("pipeline")) {
    const auto& p = j["pipeline"];
    check_keys(p, {"max_len", "lowercase"}, "pipeline");
    cfg.pipeline.max_len = p.value("max_len", cfg.pipeline.max_len);
    cfg.pipeline.lowercase = p.value("lowercase", cfg.pipeline.lowercase);
    if (cfg.pipeline.max_len < 1) throw config_error("config: pipeline.max_len must be >= 1");
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, {"max_epochs", "patience", "max_restarts"}, "training");
    cfg.training.max_epochs = t.value("max_epochs", cfg.training.max_epochs);
    cfg.training.patience = t.value("patience", cfg.training.patience);
    cfg.training.max_restarts = t.value("max_restarts", cfg.training.max_restarts);
    if (cfg.training.max_epochs < 1 || cfg.training.patience < 1 || cfg.training.max_restarts < 0)
      throw config_error("config: bad training constants");
  }
  if (j.contains("search_space")) {
    const auto& s = j["search_space"];
    check_keys(s,
               {"embedding_choices", "num_filters", "filter_size_lists", "dense_sizes",
                "dropout_ps", "batch_sizes", "learning_rates", "adam_beta2s"},
               "search_space");
    if (s.contains("embedding_choices")) s.at("embedding_choices").get_to(cfg.space.embedding_choices);
    if (s.contains("num_filters")) s.at("num_filters").get_to(cfg.space.num_filters);
    if (s.contains("filter_size_lists")) s.at("filter_size_lists").get_to(cfg.space.filter_size_lists);
    if (s.contains("dense_sizes")) s.at("dense_sizes").get_to(cfg.space.dense_sizes);
    if (s.contains("dropout_ps")) s.at("dropout_ps").get_to(cfg.space.dropout_ps);
    if (s.contains("batch_sizes")) s.at("batch_sizes").get_to(cfg.space.batch_sizes);
    if (s.contains("learning_rates")) s.at("learning_rates").get_to(cfg.space.learning_rates);
    if (s.contains("adam_beta2s")) s.at("adam_beta2s").get_to(cfg.space.adam_beta2s);
    cfg.space.validate();
  }

  cfg.n = j.value("n", cfg.n);
  cfg.folds = j.value("folds", cfg.folds);
  cfg.stratified = j.value("stratified", cfg.stratified);
  if (j.contains("top_k")) j.at("top_k").get_to(cfg.top_k);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.rank_on_heldout = j.value("rank_on_heldout", cfg.rank_on_heldout);

  if (cfg.folds < 2) throw config_error("config: folds must be >= 2");
  if (cfg.n < 1) throw config_error("config: n must be >= 1");
  if (cfg.jobs < 0) throw config_error("config: jobs must be >= 0");

  // every referenced input must exist up front
  if (!cfg.train_file.empty() && !fs::exists(cfg.train_file))
    throw data_error("config: train_file does not exist: " + cfg.train_file);
  if (!cfg.test_file.empty() && !fs::exists(cfg.test_file))
    throw data_error("config: test_file does not exist: " + cfg.test_file);
  for (const auto& [choice, file] : cfg.embeddings) {
    if (!fs::exists(file))
      throw data_error("config: embedding file for '" + choice + "' does not exist: " + file);
  }
  return cfg;
}

std::map<std::string, EmbeddingTable> load_embedding_tables(const RunConfig& config) {
  std::map<std::string, EmbeddingTable> tables;
  for (const auto& [choice, file] : config.embeddings)
    tables.emplace(choice, load_embeddings(file));
  return tables;
}

}  // namespace medintake
