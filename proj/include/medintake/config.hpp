#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "medintake/cnn_model.hpp"
#include "medintake/hyper_search.hpp"
#include "medintake/text_pipeline.hpp"

namespace medintake {

// One configuration file drives every subcommand; CLI flags override their
// config counterparts.
struct RunConfig {
  std::string train_file;
  std::string test_file;                         // optional
  std::map<std::string, std::string> embeddings; // choice -> file path
  std::string output_dir = "runs/default";
  PipelineConfig pipeline;
  TrainingConfig training;
  SearchSpace space;
  std::size_t n = 100;
  int folds = 5;
  bool stratified = true;
  std::vector<int> top_k{3, 10, 20};
  std::uint64_t seed = 0;
  int jobs = 0;  // 0 = available parallelism
  bool rank_on_heldout = false;
};

// Parses the JSON config; relative paths resolve against the config file's
// directory. Unknown keys are rejected.
RunConfig load_config(const std::string& path);

// Loads every embedding file named in the config.
std::map<std::string, EmbeddingTable> load_embedding_tables(const RunConfig& config);

}  // namespace medintake
