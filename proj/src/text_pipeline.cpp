#include "medintake/text_pipeline.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "medintake/errors.hpp"
#include "medintake/rng.hpp"

namespace medintake {

namespace {

constexpr std::string_view kDetachPunct = ".,!?;:\"'()";

bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_detach_punct(char c) { return kDetachPunct.find(c) != std::string_view::npos; }

bool is_url(std::string_view tok) {
  return tok.starts_with("http://") || tok.starts_with("https://");
}

void ascii_lower(std::string& s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

// Detach sentence punctuation from the edges of a whitespace token; URLs,
// #hashtags and @mentions stay whole (hash/at are not in the detach set).
void emit_token(const std::string& tok, std::vector<std::string>& out) {
  if (is_url(tok)) {
    out.push_back(tok);
    return;
  }
  std::size_t b = 0;
  const std::size_t e = tok.size();
  while (b < e && is_detach_punct(tok[b])) {
    out.emplace_back(1, tok[b]);
    ++b;
  }
  std::size_t core_end = e;
  while (core_end > b && is_detach_punct(tok[core_end - 1])) --core_end;
  if (core_end > b) out.push_back(tok.substr(b, core_end - b));
  for (std::size_t k = core_end; k < e; ++k) out.emplace_back(1, tok[k]);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

// Full-string base-10 integer parse; returns false on any junk.
bool parse_int(const std::string& s, long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtol(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

bool parse_float(const char* s, char** end, float& out) {
  errno = 0;
  out = std::strtof(s, end);
  return errno == 0 && *end != s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Fixed pseudo-random unit-norm vector, distinct from the all-zero padding
// row; generated from seed 0 so every table of the same dim agrees.
std::vector<float> make_oov_vector(int dim) {
  Rng rng(0);
  std::vector<double> v(dim);
  double norm_sq = 0.0;
  for (double& x : v) {
    x = rng.uniform(-1.0, 1.0);
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  std::vector<float> out(dim);
  for (int i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const PipelineConfig& config) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_ws(text[i])) ++i;
    std::size_t j = i;
    while (j < n && !is_ws(text[j])) ++j;
    if (j > i) {
      std::string tok(text.substr(i, j - i));
      if (config.lowercase) ascii_lower(tok);
      emit_token(tok, out);
    }
    i = j;
  }
  return out;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open embedding file");

  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": missing header line");
  strip_cr(line);

  long vocab = 0, dim = 0;
  {
    std::istringstream hs(line);
    std::string a, b, extra;
    hs >> a >> b;
    if (!parse_int(a, vocab) || !parse_int(b, dim) || (hs >> extra) || vocab < 0 || dim < 1)
      throw data_error(path + ": malformed header at line 1: expected '<vocab_size> <dim>'");
  }

  EmbeddingTable table;
  table.dim = static_cast<int>(dim);
  table.vectors.reserve(static_cast<std::size_t>(vocab) * dim);
  table.index.reserve(static_cast<std::size_t>(vocab));

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;

    const std::size_t word_end = line.find(' ');
    if (word_end == std::string::npos || word_end == 0)
      throw data_error(path + ": malformed row at line " + std::to_string(line_no));
    std::string word = line.substr(0, word_end);
    if (table.index.count(word))
      throw data_error(path + ": duplicate word '" + word + "' at line " + std::to_string(line_no));

    const std::size_t row_start = table.vectors.size();
    const char* p = line.c_str() + word_end;
    char* end = nullptr;
    int count = 0;
    for (;;) {
      while (*p == ' ') ++p;
      if (*p == '\0') break;
      float v = 0.0f;
      if (!parse_float(p, &end, v))
        throw data_error(path + ": bad value for word '" + word + "' at line " +
                         std::to_string(line_no));
      table.vectors.push_back(v);
      ++count;
      p = end;
    }
    if (count != table.dim) {
      throw data_error(path + ": expected " + std::to_string(table.dim) + " values but got " +
                       std::to_string(count) + " at line " + std::to_string(line_no));
    }
    table.index.emplace(std::move(word), static_cast<int>(row_start / table.dim));
  }

  if (static_cast<long>(table.index.size()) != vocab) {
    throw data_error(path + ": header declares " + std::to_string(vocab) + " words but file has " +
                     std::to_string(table.index.size()));
  }

  table.pad_vector.assign(table.dim, 0.0f);
  table.oov_vector = make_oov_vector(table.dim);
  return table;
}

std::vector<LabeledExample> load_dataset(const std::string& path, bool strict_labels) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open dataset file");

  std::vector<LabeledExample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;

    std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 3) {
      throw data_error(path + ": expected 3 tab-separated fields but got " +
                       std::to_string(fields.size()) + " at line " + std::to_string(line_no));
    }
    long label = 0;
    const bool ok = parse_int(fields[1], label) && label >= 1 && label <= 3;
    if (!ok && strict_labels) {
      throw data_error(path + ": invalid label " + fields[1] + " at line " +
                       std::to_string(line_no));
    }
    out.push_back({std::move(fields[0]), ok ? static_cast<int>(label) : 0, std::move(fields[2])});
  }
  return out;
}

std::string dataset_to_string(const std::vector<LabeledExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += ex.id;
    out += '\t';
    out += std::to_string(ex.label);
    out += '\t';
    out += ex.text;
    out += '\n';
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << dataset_to_string(examples);
}

std::array<std::int64_t, 3> class_counts(const std::vector<LabeledExample>& examples) {
  std::array<std::int64_t, 3> counts{};
  for (const auto& ex : examples) {
    if (ex.label >= 1 && ex.label <= 3) ++counts[ex.label - 1];
  }
  return counts;
}

EncodedExample encode(const LabeledExample& example, const EmbeddingTable& table,
                      const PipelineConfig& config) {
  EncodedExample enc;
  enc.id = example.id;
  enc.label = example.label;
  enc.rows.assign(static_cast<std::size_t>(config.max_len), kPadRow);
  const std::vector<std::string> tokens = tokenize(example.text, config);
  const std::size_t keep = std::min<std::size_t>(tokens.size(), enc.rows.size());
  for (std::size_t t = 0; t < keep; ++t) enc.rows[t] = table.lookup(tokens[t]);
  return enc;
}

std::vector<EncodedExample> encode_dataset(const std::vector<LabeledExample>& examples,
                                           const EmbeddingTable& table,
                                           const PipelineConfig& config) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode(ex, table, config));
  return out;
}

void embedded_rows(const EncodedExample& example, const EmbeddingTable& table,
                   std::vector<std::span<const float>>& out) {
  out.resize(example.rows.size());
  for (std::size_t t = 0; t < example.rows.size(); ++t) out[t] = table.row(example.rows[t]);
}

}  // namespace medintake
