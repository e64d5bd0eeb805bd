#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "curriculum.hpp"
#include "eval.hpp"
#include "model.hpp"

namespace scl {

struct TrainConfig {
  int batch_size = 8;
  double lr = 1e-4;
  std::uint32_t eval_every = 2000;  // steps between validation evaluations
  int patience = 5;                 // evaluations without improvement before stopping
  double min_delta = 1e-3;          // nats of validation loss
  std::uint64_t max_steps = 200000;
  bool reset_moments_between_phases = true;
};

struct EvalPoint {
  std::uint64_t step = 0;
  double loss = 0.0;
};

struct PhaseStats {
  std::string name;
  std::uint64_t steps_run = 0;        // optimizer steps executed in this phase
  std::uint64_t updates_to_best = 0;  // steps up to the checkpoint that was kept
  std::uint32_t evaluations = 0;
  double step0_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::vector<EvalPoint> trace;
};

struct RunResult {
  Strategy strategy = Strategy::BaselineSLEL;
  std::uint64_t seed = 0;
  std::uint64_t total_updates = 0;  // step_count of the returned model
  std::uint64_t work_steps = 0;     // all optimizer steps run, discarded tails included
  std::vector<PhaseStats> phases;
  PerplexityReport test_report;
};

// Test hook: observes every sampled batch (phase-local step, sentence ids).
using SamplerAudit = std::function<void(const std::string& phase, std::uint64_t step,
                                        std::span<const std::uint32_t> ids)>;

// The data a phase may sample from: a fixed id set, or the growing prefix of
// a competence plan.
struct EligibleSource {
  std::vector<std::uint32_t> fixed;
  const CompetencePlan* plan = nullptr;

  std::span<const std::uint32_t> at_step(std::uint64_t step) const {
    if (plan != nullptr) return plan->window_ids(step);
    return {fixed.data(), fixed.size()};
  }
};

struct TrainedPhase {
  PhaseStats stats;
};

class Trainer {
 public:
  Trainer(const std::vector<SentenceRecord>& records, const Vocabulary& vocab,
          std::uint64_t eval_mask_seed)
      : records_(records), vocab_(vocab), eval_mask_seed_(eval_mask_seed) {}

  // Runs one phase with early stopping on validation loss and returns the
  // best-validation checkpoint in `model`/`opt`.
  PhaseStats train_phase(MlmModel<float>& model, AdamState<float>& opt,
                         const EligibleSource& eligible,
                         const std::vector<std::uint32_t>& validation_ids,
                         const TrainConfig& cfg, const std::string& phase_name,
                         std::uint64_t phase_seed, const SamplerAudit* audit = nullptr) const;

  // `final_model`, when given, receives the best checkpoint of the last
  // phase (the state the reported perplexities were computed with).
  RunResult run_strategy(Strategy strategy, const CorpusSplit& split,
                         const std::function<const std::vector<DifficultyScore>&(Metric)>& scores,
                         const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                         const CompetenceParams& competence, std::uint64_t seed,
                         const SamplerAudit* audit = nullptr,
                         MlmModel<float>* final_model = nullptr) const;

 private:
  const std::vector<SentenceRecord>& records_;
  const Vocabulary& vocab_;
  std::uint64_t eval_mask_seed_;
};

}  // namespace scl
