#pragma once

#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "stats.hpp"
#include "trainer.hpp"

namespace scl {

// One JSON document drives the whole experiment; every training-relevant
// substitution (patience, masking, optimizer) is an explicit key so run
// manifests are self-documenting.
struct ExperimentConfig {
  int schema_version = 1;

  std::string sl_path;
  std::string el_path;
  int max_len = 128;
  std::uint64_t vocab_cutoff = 2;
  std::size_t vocab_cap = 16384;
  RarityNormalizer rarity_normalizer = RarityNormalizer::Tokens;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 13;

  ModelConfig model;  // vocab_size is filled from the built vocabulary

  CompetenceParams curriculum;
  TrainConfig training;

  std::uint64_t eval_mask_seed = 4242;
  int histogram_bins = 30;
  std::uint64_t difficulty_seed = 777;  // Random-metric scores

  CompareOptions stats;
  std::map<std::string, TestKind> test_overrides;  // "Treatment:METRIC" -> w/b
  std::optional<std::vector<Comparison>> explicit_comparisons;

  std::vector<Strategy> strategies;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "simplecl-out";

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_json_text(const std::string& text);
  nlohmann::json to_json() const;
  void validate() const;

  // The comparison set actually evaluated: the default directional families
  // restricted to configured strategies, or the explicit list, with test
  // overrides applied.
  std::vector<Comparison> comparisons() const;
};

struct StageCounts {
  int run = 0;
  int skipped = 0;
};

class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig cfg);
  ~ExperimentRunner();

  const ExperimentConfig& config() const { return cfg_; }

  void ingest();
  void score(const std::vector<Metric>& metrics = {});
  void plan(const std::vector<Strategy>& strategies = {});
  StageCounts train(const std::vector<Strategy>& strategies = {},
                    const std::vector<std::uint64_t>& seeds = {});
  void evaluate();
  void compare();
  void report();
  void run_all();

  nlohmann::json summary() const;

  // In-memory access for tests and tooling.
  const std::vector<SentenceRecord>& records();
  const Vocabulary& vocabulary();
  const CorpusSplit& split();
  const std::vector<DifficultyScore>& scores_for(Metric metric);
  RunResult train_cell(Strategy strategy, std::uint64_t seed);  // always runs

  std::string run_dir(Strategy strategy, std::uint64_t seed) const;
  std::string reports_dir() const;
  std::string corpus_dir() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ExperimentConfig cfg_;
};

// Aggregated per-strategy statistics for the results table.
struct StrategySummary {
  std::string strategy;
  int n_seeds = 0;
  double ppl_mean = 0, ppl_std = 0;
  double sl_mean = 0, sl_std = 0;
  double el_mean = 0, el_std = 0;
  double updates_mean = 0, updates_std = 0;
  double work_mean = 0, work_std = 0;
};

std::uint64_t hash_file(const std::string& path);
std::string hex64(std::uint64_t value);

}  // namespace scl
