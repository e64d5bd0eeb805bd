#include "curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace scl {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::BaselineEL: return "BaselineEL";
    case Strategy::BaselineSLEL: return "BaselineSLEL";
    case Strategy::Sequential: return "Sequential";
    case Strategy::Incremental: return "Incremental";
    case Strategy::AntiSequential: return "AntiSequential";
    case Strategy::Length: return "Length";
    case Strategy::WordRarity: return "WordRarity";
    case Strategy::FRE: return "FRE";
    case Strategy::Random: return "Random";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : all_strategies()) {
    if (name == strategy_name(s)) return s;
  }
  fail(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

bool is_competence_strategy(Strategy s) {
  switch (s) {
    case Strategy::Length:
    case Strategy::WordRarity:
    case Strategy::FRE:
    case Strategy::Random:
      return true;
    default:
      return false;
  }
}

Metric competence_metric(Strategy s) {
  switch (s) {
    case Strategy::Length: return Metric::Length;
    case Strategy::WordRarity: return Metric::WordRarity;
    case Strategy::FRE: return Metric::FRE;
    case Strategy::Random: return Metric::Random;
    default:
      fail(ErrorCode::InvalidArgument,
           std::string("strategy ") + strategy_name(s) + " has no difficulty metric");
  }
}

std::vector<Strategy> all_strategies() {
  return {Strategy::BaselineEL,  Strategy::BaselineSLEL,   Strategy::Sequential,
          Strategy::Incremental, Strategy::AntiSequential, Strategy::Length,
          Strategy::WordRarity,  Strategy::FRE,            Strategy::Random};
}

double competence_at(double step, double c0, double total_steps, bool use_c0_offset) {
  if (!(c0 > 0.0 && c0 < 1.0)) {
    fail(ErrorCode::Config, "initial competence c0 must lie in (0, 1)");
  }
  if (!(total_steps > 0.0)) fail(ErrorCode::Config, "competence duration T must be positive");
  if (step < 0.0) fail(ErrorCode::InvalidArgument, "competence step must be non-negative");
  // Full competence from T onward in both variants; without the offset the
  // bare square root would only reach sqrt(1 - c0^2) at t = T.
  if (step >= total_steps) return 1.0;
  const double c0sq = c0 * c0;
  double inner = step * (1.0 - c0sq) / total_steps;
  if (use_c0_offset) inner += c0sq;
  return std::min(1.0, std::sqrt(inner));
}

std::size_t CompetencePlan::window_size_at(std::uint64_t step) const {
  const std::size_t n = sorted_ids.size();
  if (static_cast<double>(step) >= params.total_steps) return n;
  const std::uint64_t held = params.update_every == 0
                                 ? step
                                 : (step / params.update_every) * params.update_every;
  const double c = competence_at(static_cast<double>(held), params.c0, params.total_steps,
                                 params.use_c0_offset);
  auto size = static_cast<std::size_t>(std::ceil(c * static_cast<double>(n)));
  return std::min(n, std::max<std::size_t>(size, 1));
}

std::span<const std::uint32_t> CompetencePlan::window_ids(std::uint64_t step) const {
  return {sorted_ids.data(), window_size_at(step)};
}

CompetencePlan make_competence_plan(const std::vector<DifficultyScore>& scores,
                                    std::span<const std::uint32_t> train_ids,
                                    Metric metric, const CompetenceParams& params) {
  competence_at(0.0, params.c0, params.total_steps, params.use_c0_offset);  // validates params

  std::unordered_map<std::uint32_t, double> by_id;
  by_id.reserve(scores.size());
  for (const auto& s : scores) {
    if (std::isnan(s.value)) {
      fail(ErrorCode::Numeric, "difficulty score for sentence " + std::to_string(s.sentence_id) +
                                   " is NaN");
    }
    by_id[s.sentence_id] = s.value;
  }

  std::vector<std::uint32_t> missing;
  std::vector<std::pair<double, std::uint32_t>> keyed;
  keyed.reserve(train_ids.size());
  for (std::uint32_t id : train_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
      continue;
    }
    // FRE measures easiness; flip it so ascending always means easy first.
    const double key = metric == Metric::FRE ? -it->second : it->second;
    keyed.emplace_back(key, id);
  }
  if (!missing.empty()) {
    std::string msg = "missing difficulty scores for " + std::to_string(missing.size()) +
                      " train sentence(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) {
      msg += ' ' + std::to_string(missing[i]);
    }
    if (missing.size() > 20) msg += " ...";
    fail(ErrorCode::InvalidArgument, msg);
  }

  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });

  CompetencePlan plan;
  plan.metric = metric;
  plan.params = params;
  plan.sorted_ids.reserve(keyed.size());
  for (const auto& [key, id] : keyed) plan.sorted_ids.push_back(id);
  return plan;
}

LabelPlan make_label_plan(Strategy strategy, const std::vector<SentenceRecord>& records,
                          std::span<const std::uint32_t> train_ids) {
  std::vector<std::uint32_t> sl_ids, el_ids, all_ids;
  for (std::uint32_t id : train_ids) {
    const auto& rec = records.at(id);
    (rec.label == Label::SL ? sl_ids : el_ids).push_back(id);
    all_ids.push_back(id);
  }

  LabelPlan plan;
  plan.strategy = strategy;
  switch (strategy) {
    case Strategy::BaselineEL:
      plan.phases = {{"EL", el_ids}};
      break;
    case Strategy::BaselineSLEL:
      plan.phases = {{"ALL", all_ids}};
      break;
    case Strategy::Sequential:
      plan.phases = {{"SL", sl_ids}, {"EL", el_ids}};
      break;
    case Strategy::Incremental:
      plan.phases = {{"SL", sl_ids}, {"SL+EL", all_ids}};
      break;
    case Strategy::AntiSequential:
      plan.phases = {{"EL", el_ids}, {"SL", sl_ids}};
      break;
    default:
      fail(ErrorCode::InvalidArgument,
           std::string("strategy ") + strategy_name(strategy) + " is not label-based");
  }
  return plan;
}

}  // namespace scl
