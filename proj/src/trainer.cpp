#include "trainer.hpp"

#include <algorithm>
#include <limits>

namespace scl {

namespace {

struct BestCheckpoint {
  MlmModel<float> model;
  AdamState<float> opt;
  double val_loss = 0.0;
  std::uint64_t phase_step = 0;
};

}  // namespace

PhaseStats Trainer::train_phase(MlmModel<float>& model, AdamState<float>& opt,
                                const EligibleSource& eligible,
                                const std::vector<std::uint32_t>& validation_ids,
                                const TrainConfig& cfg, const std::string& phase_name,
                                std::uint64_t phase_seed, const SamplerAudit* audit) const {
  if (eligible.at_step(0).empty()) {
    fail(ErrorCode::InvalidArgument, "phase '" + phase_name + "' has an empty eligible set");
  }
  if (validation_ids.empty()) {
    fail(ErrorCode::InvalidArgument, "validation split is empty; early stopping needs it");
  }
  if (cfg.eval_every == 0) fail(ErrorCode::Config, "eval_every must be positive");
  if (cfg.patience <= 0) fail(ErrorCode::Config, "patience must be positive");
  if (cfg.batch_size <= 0) fail(ErrorCode::Config, "batch_size must be positive");
  if (cfg.max_steps < cfg.eval_every) {
    fail(ErrorCode::Config, "max_steps ran out before the first validation evaluation");
  }

  auto val_loss = [&]() {
    return mean_masked_nll(model, records_, validation_ids, vocab_, eval_mask_seed_,
                           cfg.batch_size);
  };

  PhaseStats stats;
  stats.name = phase_name;
  stats.step0_val_loss = val_loss();
  stats.trace.push_back({0, stats.step0_val_loss});

  Rng sampler(mix_seed({phase_seed, fnv1a64("batch-sampler")}));
  Rng dropout_rng(mix_seed({phase_seed, fnv1a64("dropout")}));
  const std::uint64_t mask_seed = mix_seed({phase_seed, fnv1a64("train-mask")});

  BestCheckpoint best;
  bool have_best = false;
  int stall = 0;
  std::uint64_t step = 0;
  std::vector<std::uint32_t> batch_ids(static_cast<std::size_t>(cfg.batch_size));
  std::vector<const std::vector<std::int32_t>*> batch_rows(
      static_cast<std::size_t>(cfg.batch_size));

  while (step < cfg.max_steps) {
    const auto window = eligible.at_step(step);
    for (std::size_t i = 0; i < batch_ids.size(); ++i) {
      batch_ids[i] = window[static_cast<std::size_t>(sampler.bounded(window.size()))];
      batch_rows[i] = &records_.at(batch_ids[i]).token_ids;
    }
    if (audit != nullptr) {
      (*audit)(phase_name, step, {batch_ids.data(), batch_ids.size()});
    }

    IntMat padded = pad_rows(batch_rows);
    MaskedBatch batch = mask_batch(padded, vocab_, mask_seed, step);
    // A small batch can select zero positions; re-mask deterministically.
    for (std::uint64_t attempt = 1; batch.masked_count() == 0; ++attempt) {
      batch = mask_batch(padded, vocab_, mix_seed({mask_seed, attempt}), step);
    }

    auto lg = model.loss_and_grads(batch, model.config().dropout > 0.0 ? &dropout_rng : nullptr);
    adam_step(model, opt, lg.grads, cfg.lr);
    ++step;

    if (step % cfg.eval_every == 0) {
      const double loss = val_loss();
      stats.trace.push_back({step, loss});
      ++stats.evaluations;
      const double best_so_far = have_best ? best.val_loss
                                           : std::numeric_limits<double>::infinity();
      if (best_so_far - loss > cfg.min_delta) {
        best = {model, opt, loss, step};
        have_best = true;
        stall = 0;
      } else {
        ++stall;
        if (stall >= cfg.patience) break;
      }
    }
  }

  if (stats.evaluations == 0) {
    fail(ErrorCode::State, "phase '" + phase_name + "' hit max_steps without evaluating");
  }

  // Return the minimum-validation-loss checkpoint, not the final state.
  model = std::move(best.model);
  opt = std::move(best.opt);
  stats.steps_run = step;
  stats.updates_to_best = best.phase_step;
  stats.best_val_loss = best.val_loss;
  return stats;
}

RunResult Trainer::run_strategy(
    Strategy strategy, const CorpusSplit& split,
    const std::function<const std::vector<DifficultyScore>&(Metric)>& scores,
    const ModelConfig& model_cfg, const TrainConfig& train_cfg,
    const CompetenceParams& competence, std::uint64_t seed, const SamplerAudit* audit,
    MlmModel<float>* final_model) const {
  ModelConfig cfg = model_cfg;
  cfg.seed = mix_seed({seed, fnv1a64("model-seed")});
  MlmModel<float> model(cfg);
  AdamState<float> opt = AdamState<float>::fresh(model);

  RunResult result;
  result.strategy = strategy;
  result.seed = seed;

  CompetencePlan plan;
  if (is_competence_strategy(strategy)) {
    const Metric metric = competence_metric(strategy);
    plan = make_competence_plan(scores(metric), split.train, metric, competence);
    EligibleSource source;
    source.plan = &plan;
    result.phases.push_back(train_phase(model, opt, source, split.validation, train_cfg,
                                        strategy_name(strategy),
                                        mix_seed({seed, fnv1a64("phase"), 0}), audit));
  } else {
    const LabelPlan label_plan = make_label_plan(strategy, records_, split.train);
    for (std::size_t pi = 0; pi < label_plan.phases.size(); ++pi) {
      if (pi > 0 && train_cfg.reset_moments_between_phases) {
        opt.reset_moments();
      }
      EligibleSource source;
      source.fixed = label_plan.phases[pi].ids;
      result.phases.push_back(train_phase(model, opt, source, split.validation, train_cfg,
                                          label_plan.phases[pi].name,
                                          mix_seed({seed, fnv1a64("phase"), pi}), audit));
    }
  }

  result.total_updates = opt.step_count;
  for (const PhaseStats& phase : result.phases) result.work_steps += phase.steps_run;
  result.test_report = subset_report(model, records_, split.test, vocab_, eval_mask_seed_,
                                     train_cfg.batch_size);
  if (final_model != nullptr) *final_model = std::move(model);
  return result;
}

}  // namespace scl
