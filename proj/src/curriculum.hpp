#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difficulty.hpp"

namespace scl {

enum class Strategy : std::uint8_t {
  BaselineEL,
  BaselineSLEL,
  Sequential,
  Incremental,
  AntiSequential,
  Length,
  WordRarity,
  FRE,
  Random,
};

const char* strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
bool is_competence_strategy(Strategy s);
Metric competence_metric(Strategy s);  // valid only for competence strategies
std::vector<Strategy> all_strategies();

struct CompetenceParams {
  double c0 = 0.05;
  double total_steps = 50000.0;     // T, duration of the growing-window phase
  std::uint32_t update_every = 5000;  // steps between window-size updates
  bool use_c0_offset = true;          // true: c(0) = c0; false: literal sqrt(t(1-c0^2)/T)
};

// Square-root competence curve, clamped to 1.
double competence_at(double step, double c0, double total_steps, bool use_c0_offset);

struct CompetencePlan {
  std::vector<std::uint32_t> sorted_ids;  // ascending difficulty, ties by id
  Metric metric = Metric::Length;
  CompetenceParams params;

  // Window size follows a staircase: the competence value is refreshed every
  // `update_every` steps and everything is eligible once step >= T.
  std::size_t window_size_at(std::uint64_t step) const;
  std::span<const std::uint32_t> window_ids(std::uint64_t step) const;
};

// One score per train id required; ascending difficulty order with ties
// broken by sentence id. FRE is a readability (easiness) score, so it sorts
// descending to keep "easy first".
CompetencePlan make_competence_plan(const std::vector<DifficultyScore>& scores,
                                    std::span<const std::uint32_t> train_ids,
                                    Metric metric, const CompetenceParams& params);

struct LabelPhase {
  std::string name;
  std::vector<std::uint32_t> ids;
};

struct LabelPlan {
  Strategy strategy = Strategy::BaselineSLEL;
  std::vector<LabelPhase> phases;
};

LabelPlan make_label_plan(Strategy strategy, const std::vector<SentenceRecord>& records,
                          std::span<const std::uint32_t> train_ids);

}  // namespace scl
