#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace medintake {

struct PipelineConfig {
  int max_len = 47;
  bool lowercase = true;
};

struct LabeledExample {
  std::string id;
  int label = 0;  // 1..3; 0 marks a placeholder (prediction inputs only)
  std::string text;
};

// Sentinel row ids used by EncodedExample::rows.
inline constexpr int kPadRow = -1;
inline constexpr int kOovRow = -2;

// Immutable after load; safe to share across training workers.
struct EmbeddingTable {
  int dim = 0;
  std::vector<float> vectors;  // vocab-major, dim-wide rows
  std::unordered_map<std::string, int> index;
  std::vector<float> oov_vector;
  std::vector<float> pad_vector;

  std::size_t vocab_size() const { return index.size(); }

  // vocab row id, or kOovRow for unknown tokens
  int lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kOovRow : it->second;
  }

  std::span<const float> row(int row_id) const {
    if (row_id == kPadRow) return {pad_vector.data(), pad_vector.size()};
    if (row_id == kOovRow) return {oov_vector.data(), oov_vector.size()};
    return {vectors.data() + static_cast<std::size_t>(row_id) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Fixed-length document: row ids into an embedding table. Row t stands for
// the embedding of token t; positions past the token count are kPadRow.
struct EncodedExample {
  std::string id;
  int label = 0;
  std::vector<int> rows;
};

std::vector<std::string> tokenize(std::string_view text, const PipelineConfig& config);

EmbeddingTable load_embeddings(const std::string& path);

// strict_labels=false keeps lines whose label is not in {1,2,3} with
// label 0 (used for prediction inputs where the column is a placeholder).
std::vector<LabeledExample> load_dataset(const std::string& path, bool strict_labels = true);

std::string dataset_to_string(const std::vector<LabeledExample>& examples);
void save_dataset(const std::string& path, const std::vector<LabeledExample>& examples);

std::array<std::int64_t, 3> class_counts(const std::vector<LabeledExample>& examples);

EncodedExample encode(const LabeledExample& example, const EmbeddingTable& table,
                      const PipelineConfig& config);
std::vector<EncodedExample> encode_dataset(const std::vector<LabeledExample>& examples,
                                           const EmbeddingTable& table,
                                           const PipelineConfig& config);

// Materializes the per-token row views consumed by the model kernels.
void embedded_rows(const EncodedExample& example, const EmbeddingTable& table,
                   std::vector<std::span<const float>>& out);

}  // namespace medintake
