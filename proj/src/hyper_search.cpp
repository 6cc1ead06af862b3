#include "medintake/hyper_search.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "medintake/errors.hpp"
#include "medintake/metrics.hpp"
#include "medintake/serialization.hpp"

namespace fs = std::filesystem;

namespace medintake {

namespace {

template <typename T>
bool set_contains(const std::vector<T>& xs, const T& x) {
  return std::find(xs.begin(), xs.end(), x) != xs.end();
}

std::string make_ensemble_id(std::size_t i, std::size_t n) {
  int width = 3;
  for (std::size_t v = n > 0 ? n - 1 : 0; v >= 1000; v /= 10) ++width;
  std::ostringstream os;
  os << "ens_" << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

nlohmann::json record_to_json(const SearchRecord& r) {
  nlohmann::json j;
  j["index"] = r.index;
  j["ensemble_id"] = r.ensemble_id;
  j["status"] = r.status;
  j["train_score"] = r.train_score;
  j["wall_seconds"] = r.wall_seconds;
  j["hyperparams"] = r.hp;
  j["manifest_file"] = r.manifest_file;
  j["model_files"] = r.model_files;
  j["error"] = r.error;
  return j;
}

SearchRecord record_from_json(const nlohmann::json& j) {
  SearchRecord r;
  j.at("index").get_to(r.index);
  j.at("ensemble_id").get_to(r.ensemble_id);
  j.at("status").get_to(r.status);
  j.at("train_score").get_to(r.train_score);
  j.at("wall_seconds").get_to(r.wall_seconds);
  r.hp = j.at("hyperparams").get<HyperParams>();
  j.at("manifest_file").get_to(r.manifest_file);
  j.at("model_files").get_to(r.model_files);
  j.at("error").get_to(r.error);
  return r;
}

std::string results_path(const std::string& run_dir) {
  return (fs::path(run_dir) / "search_results.jsonl").string();
}

}  // namespace

std::size_t SearchSpace::cardinality() const {
  return embedding_choices.size() * num_filters.size() * filter_size_lists.size() *
         dense_sizes.size() * dropout_ps.size() * batch_sizes.size() * learning_rates.size() *
         adam_beta2s.size();
}

bool SearchSpace::contains(const HyperParams& hp) const {
  return set_contains(embedding_choices, hp.embedding_choice) &&
         set_contains(num_filters, hp.num_filters) &&
         set_contains(filter_size_lists, hp.filter_sizes) &&
         set_contains(dense_sizes, hp.dense_size) && set_contains(dropout_ps, hp.dropout_p) &&
         set_contains(batch_sizes, hp.batch_size) &&
         set_contains(learning_rates, hp.learning_rate) &&
         set_contains(adam_beta2s, hp.adam_beta2);
}

void SearchSpace::validate() const {
  if (embedding_choices.empty() || num_filters.empty() || filter_size_lists.empty() ||
      dense_sizes.empty() || dropout_ps.empty() || batch_sizes.empty() ||
      learning_rates.empty() || adam_beta2s.empty())
    throw config_error("search space: every candidate set must be non-empty");
}

HyperParams sample_config(const SearchSpace& space, Rng& rng) {
  space.validate();
  HyperParams hp;
  hp.embedding_choice = space.embedding_choices[rng.uniform_index(space.embedding_choices.size())];
  hp.num_filters = space.num_filters[rng.uniform_index(space.num_filters.size())];
  hp.filter_sizes = space.filter_size_lists[rng.uniform_index(space.filter_size_lists.size())];
  hp.dense_size = space.dense_sizes[rng.uniform_index(space.dense_sizes.size())];
  hp.dropout_p = space.dropout_ps[rng.uniform_index(space.dropout_ps.size())];
  hp.batch_size = space.batch_sizes[rng.uniform_index(space.batch_sizes.size())];
  hp.learning_rate = space.learning_rates[rng.uniform_index(space.learning_rates.size())];
  hp.adam_beta2 = space.adam_beta2s[rng.uniform_index(space.adam_beta2s.size())];
  return hp;
}

std::vector<SearchRecord> load_search_records(const std::string& run_dir) {
  std::vector<SearchRecord> records;
  std::ifstream in(results_path(run_dir));
  if (!in) return records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      break;  // partial trailing line from an interrupted run
    }
  }
  std::sort(records.begin(), records.end(),
            [](const SearchRecord& a, const SearchRecord& b) { return a.index < b.index; });
  return records;
}

std::vector<std::size_t> rank_records(const std::vector<SearchRecord>& records) {
  std::vector<std::size_t> ok;
  std::vector<double> scores;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].status == "ok") {
      ok.push_back(i);
      scores.push_back(records[i].train_score);
    }
  }
  if (ok.empty()) return {};
  std::vector<std::size_t> out;
  for (std::size_t pos : rank_by_score(scores)) out.push_back(ok[pos]);
  return out;
}

SearchRun run_search(const SearchSpace& space, const std::vector<LabeledExample>& dataset,
                     const FoldPlan& plan, const TrainingConfig& tc,
                     const std::map<std::string, EmbeddingTable>& tables,
                     const PipelineConfig& pipeline, const SearchOptions& options,
                     std::ostream* log) {
  space.validate();
  if (options.n < 1) throw config_error("search: n must be >= 1");
  if (dataset.size() != plan.assignments.size())
    throw std::invalid_argument("run_search: plan does not cover dataset");
  fs::create_directories(options.run_dir);

  const std::size_t n = options.n;
  Rng sample_rng(derive_seed(options.seed, SeedStream::kSearch));
  std::vector<HyperParams> configs;
  configs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) configs.push_back(sample_config(space, sample_rng));

  std::vector<std::optional<SearchRecord>> slots(n);
  for (SearchRecord& rec : load_search_records(options.run_dir)) {
    if (rec.index >= n)
      throw config_error("search: run directory holds results beyond n=" + std::to_string(n) +
                         "; use a fresh directory or a larger n");
    if (!(rec.hp == configs[rec.index]))
      throw config_error("search: existing results in '" + options.run_dir +
                         "' were produced with a different seed or space");
    slots[rec.index] = std::move(rec);
  }

  // Encode once per embedding choice actually sampled.
  std::map<std::string, std::vector<EncodedExample>> encoded;
  for (const HyperParams& hp : configs) {
    auto it = tables.find(hp.embedding_choice);
    if (it != tables.end() && !encoded.count(hp.embedding_choice))
      encoded.emplace(hp.embedding_choice, encode_dataset(dataset, it->second, pipeline));
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;

  auto flush_locked = [&]() {
    const std::string path = results_path(options.run_dir);
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      for (const auto& slot : slots) {
        if (slot) out << record_to_json(*slot).dump() << "\n";
      }
    }
    fs::rename(tmp, path);
  };

  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lk(mu);
        if (slots[i]) continue;  // reused from a previous run
      }
      SearchRecord rec;
      rec.index = i;
      rec.hp = configs[i];
      rec.ensemble_id = make_ensemble_id(i, n);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        auto it = tables.find(rec.hp.embedding_choice);
        if (it == tables.end())
          throw config_error("embedding choice '" + rec.hp.embedding_choice +
                             "' has no configured file");
        FoldEnsemble ens = train_fold_ensemble(
            rec.hp, tc, encoded.at(rec.hp.embedding_choice), plan, it->second,
            derive_seed(options.seed, SeedStream::kTraining, {i}), rec.ensemble_id,
            options.rank_on_heldout, log);
        EnsembleManifest man = save_fold_ensemble(options.run_dir, ens);
        rec.status = "ok";
        rec.train_score = ens.train_score;
        rec.manifest_file = "manifests/" + rec.ensemble_id + ".json";
        for (std::size_t j = 0; j < man.model_files.size(); ++j)
          rec.model_files.push_back("models/" + rec.ensemble_id + "/fold_" + std::to_string(j) +
                                    ".json");
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
      }
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      {
        std::lock_guard<std::mutex> lk(mu);
        slots[i] = std::move(rec);
        flush_locked();
        if (log) {
          const SearchRecord& r = *slots[i];
          std::ostringstream line;
          line << r.ensemble_id << " " << r.status << " train_f12 " << r.train_score << " ("
               << std::fixed << std::setprecision(1) << r.wall_seconds << "s)"
               << (r.error.empty() ? "" : " " + r.error) << "\n";
          (*log) << line.str() << std::flush;
        }
      }
    }
  };

  const int workers =
      std::max(1, std::min<int>(options.jobs, static_cast<int>(n)));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  {
    std::lock_guard<std::mutex> lk(mu);
    flush_locked();
  }

  SearchRun run;
  run.records.reserve(n);
  for (auto& slot : slots) run.records.push_back(std::move(*slot));
  run.ranking = rank_records(run.records);
  return run;
}

MeanStd summarize(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("summarize: empty sample");
  MeanStd out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sample_std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

std::vector<AblationRow> filter_size_experiment(
    const SearchSpace& space, const std::vector<LabeledExample>& dataset, const FoldPlan& plan,
    const TrainingConfig& tc, const std::map<std::string, EmbeddingTable>& tables,
    const PipelineConfig& pipeline, std::span<const int> sizes, int runs, std::uint64_t seed,
    std::ostream* log) {
  if (runs < 2) throw std::invalid_argument("filter_size_experiment: runs must be >= 2");
  if (sizes.empty()) throw std::invalid_argument("filter_size_experiment: no sizes given");
  space.validate();

  const std::string& choice = space.embedding_choices.front();
  auto it = tables.find(choice);
  if (it == tables.end())
    throw config_error("embedding choice '" + choice + "' has no configured file");
  const EmbeddingTable& table = it->second;
  const std::vector<EncodedExample> encoded = encode_dataset(dataset, table, pipeline);

  const std::size_t n_lr = space.learning_rates.size();
  const std::size_t n_nf = space.num_filters.size();

  std::vector<AblationRow> rows;
  for (int size : sizes) {
    AblationRow row;
    row.size = size;
    for (int r = 0; r < runs; ++r) {
      // Vary learning rate fastest, then filter count; other fields stay at
      // each candidate set's first entry.
      HyperParams hp;
      hp.embedding_choice = choice;
      hp.learning_rate = space.learning_rates[static_cast<std::size_t>(r) % n_lr];
      hp.num_filters = space.num_filters[(static_cast<std::size_t>(r) / n_lr) % n_nf];
      hp.filter_sizes = {size, size, size, size, size};
      hp.dense_size = space.dense_sizes.front();
      hp.dropout_p = space.dropout_ps.front();
      hp.batch_size = space.batch_sizes.front();
      hp.adam_beta2 = space.adam_beta2s.front();

      const std::string id =
          "ablate_s" + std::to_string(size) + "_r" + std::to_string(r);
      FoldEnsemble ens = train_fold_ensemble(
          hp, tc, encoded, plan, table,
          derive_seed(seed, SeedStream::kAblation,
                      {static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(r)}),
          id, false, log);
      row.scores.push_back(ens.train_score);
    }
    row.stats = summarize(row.scores);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table_tsv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "filter_size\truns\tmean_f12\tsample_std\tscores\n";
  for (const auto& row : rows) {
    os << row.size << "\t" << row.scores.size() << "\t" << row.stats.mean << "\t"
       << row.stats.sample_std << "\t";
    for (std::size_t i = 0; i < row.scores.size(); ++i)
      os << (i ? "," : "") << row.scores[i];
    os << "\n";
  }
  return os.str();
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "filter size   mean f12   sample std   (over n runs)\n";
  for (const auto& row : rows) {
    os << std::setw(11) << row.size << "   " << row.stats.mean << "     " << row.stats.sample_std
       << "       n=" << row.scores.size() << "\n";
  }
  return os.str();
}

RankingReport emit_ranking_report(const std::string& run_dir,
                                  const std::vector<SearchRecord>& records,
                                  const std::vector<LabeledExample>& train_data,
                                  const std::vector<LabeledExample>* test_data,
                                  std::span<const int> k_values,
                                  const std::map<std::string, EmbeddingTable>& tables,
                                  const PipelineConfig& pipeline) {
  const std::vector<std::size_t> ranked = rank_records(records);
  if (ranked.empty()) throw std::invalid_argument("emit_ranking_report: no ranked ensembles");

  const bool use_test = test_data != nullptr;
  const std::vector<LabeledExample>& eval_data = use_test ? *test_data : train_data;
  const std::string split = use_test ? "test" : "train";

  std::map<std::string, std::vector<EncodedExample>> enc_cache;
  auto enc_for = [&](const std::string& choice) -> const std::vector<EncodedExample>& {
    auto it = enc_cache.find(choice);
    if (it == enc_cache.end()) {
      auto t = tables.find(choice);
      if (t == tables.end())
        throw config_error("embedding choice '" + choice + "' has no configured file");
      it = enc_cache.emplace(choice, encode_dataset(eval_data, t->second, pipeline)).first;
    }
    return it->second;
  };

  std::vector<int> gold;
  gold.reserve(eval_data.size());
  for (const auto& ex : eval_data) gold.push_back(ex.label);

  std::set<int> wanted(k_values.begin(), k_values.end());
  std::map<int, double> stacked_scores;

  RankingReport rep;
  std::vector<std::array<double, 3>> sums(eval_data.size(), std::array<double, 3>{});
  std::vector<int> pred(eval_data.size());

  for (std::size_t e = 0; e < ranked.size(); ++e) {
    const SearchRecord& rec = records[ranked[e]];
    const FoldEnsemble ens =
        load_fold_ensemble((fs::path(run_dir) / rec.manifest_file).string());
    const auto& enc = enc_for(ens.hp.embedding_choice);
    const EmbeddingTable& table = tables.at(ens.hp.embedding_choice);

    RankedEntry entry;
    entry.id = rec.ensemble_id;
    entry.train_score = rec.train_score;
    for (std::size_t i = 0; i < enc.size(); ++i) {
      const std::array<double, 3> probs = fold_ensemble_predict(ens, enc[i], table);
      for (int j = 0; j < 3; ++j) sums[i][j] += probs[j];
      pred[i] = argmax_class(probs);
    }
    if (use_test) entry.test_score = micro_prf_12(confusion_counts(gold, pred)).f1;
    rep.individuals.push_back(std::move(entry));

    const int k = static_cast<int>(e) + 1;
    if (wanted.count(k)) {
      for (std::size_t i = 0; i < sums.size(); ++i) {
        std::array<double, 3> mean{};
        for (int j = 0; j < 3; ++j) mean[j] = sums[i][j] / k;
        pred[i] = argmax_class(mean);
      }
      stacked_scores[k] = micro_prf_12(confusion_counts(gold, pred)).f1;
    }
  }

  for (int k : wanted) {
    StackedEntry entry;
    entry.k = k;
    entry.split = split;
    auto it = stacked_scores.find(k);
    if (it != stacked_scores.end()) {
      entry.score = it->second;
    } else {
      entry.error = "K=" + std::to_string(k) + " exceeds the " +
                    std::to_string(ranked.size()) + " available ensembles";
    }
    rep.stacked.push_back(std::move(entry));
  }
  return rep;
}

std::string ranking_report_tsv(const RankingReport& rep) {
  std::ostringstream os;
  os << "section\trank\tid\tk\ttrain_f12\teval_f12\teval_split\terror\n";
  int rank = 1;
  for (const auto& e : rep.individuals) {
    os << "ensemble\t" << rank++ << "\t" << e.id << "\t\t" << e.train_score << "\t";
    if (e.test_score) os << *e.test_score;
    os << "\t" << (e.test_score ? "test" : "") << "\t\n";
  }
  for (const auto& s : rep.stacked) {
    os << "stacked\t\t\t" << s.k << "\t\t";
    if (s.score) os << *s.score;
    os << "\t" << s.split << "\t" << s.error << "\n";
  }
  return os.str();
}

std::string ranking_report_text(const RankingReport& rep) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "ranked ensembles (train f12" << (rep.individuals.empty() || !rep.individuals[0].test_score
                                              ? ")"
                                              : ", test f12)")
     << "\n";
  int rank = 1;
  for (const auto& e : rep.individuals) {
    os << std::setw(4) << rank++ << "  " << e.id << "  " << e.train_score;
    if (e.test_score) os << "  " << *e.test_score;
    os << "\n";
  }
  os << "stacked ensembles\n";
  for (const auto& s : rep.stacked) {
    os << "  top-" << s.k << "  ";
    if (s.score) {
      os << *s.score << " (" << s.split << ")";
    } else {
      os << s.error;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace medintake
