// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "misfit/train/trainer.hpp"

namespace misfit {

struct AblationRun {
  std::string variant;
  TrainingConfig config;
  TrainingHistory history;
  MetricReport report;        // mean over the validation split, final params
  std::size_t param_count = 0;
};

// Variant config: identical seed and data order, with the single documented
// change applied.
inline TrainingConfig make_variant_config(const TrainingConfig& base, Ablation variant) {
  TrainingConfig cfg = base;
  cfg.ablation = variant;
  if (variant == Ablation::l1_weight_1) cfg.weights.lambda_l1 = 1.0;
  if (variant == Ablation::no_attention) cfg.model.generator.use_attention = false;
  if (!cfg.out_dir.empty()) cfg.out_dir += "/" + ablation_name(variant);
  return cfg;
}

// Trains one variant on the shared dataset and reports validation metrics.
template <typename S>
AblationRun run_ablation(Ablation variant, const TrainingConfig& base, const std::vector<ImagePair>& items,
                         const DatasetSplit& split) {
  AblationRun run;
  run.variant = ablation_name(variant);
  run.config = make_variant_config(base, variant);
  Trainer<S> trainer(run.config);
  run.history = trainer.train(items, split);
  run.report = trainer.validate(items, split.val.empty() ? split.train : split.val);
  run.report.run_id = run.variant;
  run.param_count = count_parameters(trainer.model().gen.params()) +
                    count_parameters(trainer.model().disc_ir.params()) +
                    count_parameters(trainer.model().disc_rgb.params());
  return run;
}

}  // namespace misfit
