// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/data/dataset.hpp"
#include "misfit/data/image.hpp"
#include "misfit/metrics/metrics.hpp"
#include "misfit/train/adam.hpp"
#include "misfit/train/checkpoint.hpp"
#include "misfit/train/config.hpp"
#include "misfit/train/gan.hpp"

namespace misfit {

struct HistoryRow {
  std::int64_t step = 0;
  LossBreakdown loss;
};

struct TrainingHistory {
  std::vector<HistoryRow> steps;
  std::vector<std::pair<int, MetricReport>> val_reports;  // (epoch, mean over val)
};

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_history_csv(const TrainingHistory& h, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "step,adv_ir,adv_rgb,gen,kl,l1,total\n";
  for (const auto& row : h.steps) {
    out << row.step << ',' << format_g17(row.loss.adv_ir) << ',' << format_g17(row.loss.adv_rgb) << ','
        << format_g17(row.loss.gen) << ',' << format_g17(row.loss.kl) << ',' << format_g17(row.loss.l1) << ','
        << format_g17(row.loss.total) << '\n';
  }
}

// Alternating-phase trainer: per batch, one update of each discriminator on
// the detached fused image, then one generator update against the refreshed
// discriminators.
template <typename S>
class Trainer {
 public:
  explicit Trainer(const TrainingConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        model_(cfg.effective_generator(), cfg.model.disc_width, cfg.model.disc_layers),
        opt_gen_(cfg.learning_rate, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.epsilon),
        opt_ir_(cfg.learning_rate, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.epsilon),
        opt_rgb_(cfg.learning_rate, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.epsilon) {
    model_.initialize(cfg_.seed);
    gen_params_ = model_.gen.params();
    ir_params_ = model_.disc_ir.params();
    rgb_params_ = model_.disc_rgb.params();
    opt_gen_.attach(gen_params_);
    opt_ir_.attach(ir_params_);
    opt_rgb_.attach(rgb_params_);
    kl_.bins = cfg_.kl_bins;
    kl_.epsilon = cfg_.kl_epsilon;
    kl_.sigma = 1.0 / cfg_.kl_bins;
  }

  const TrainingConfig& config() const { return cfg_; }
  FusionModel<S>& model() { return model_; }
  const TrainingHistory& history() const { return history_; }
  std::int64_t step_count() const { return step_; }

  LossBreakdown train_step(const Batch<S>& batch) {
    // Phase 1: generator forward; the result serves as the detached fake for
    // both discriminator phases and is reused (parameters unchanged) for the
    // generator phase against the updated discriminators.
    auto fwd = model_.gen.forward(batch.rgb, batch.ir);

    for (auto* g : ir_params_) g->zero_grad();
    const double loss_ir = discriminator_objective(model_.disc_ir, batch.ir, batch.ir3, fwd.fused, true);
    require_finite(loss_ir, "disc_ir");
    opt_ir_.step(ir_params_);

    for (auto* g : rgb_params_) g->zero_grad();
    const double loss_rgb = discriminator_objective(model_.disc_rgb, batch.rgb, batch.rgb, fwd.fused, true);
    require_finite(loss_rgb, "disc_rgb");
    opt_rgb_.step(rgb_params_);

    for (auto* g : gen_params_) g->zero_grad();
    LossBreakdown breakdown;
    try {
      breakdown = generator_objective(model_, batch, fwd.fused, cfg_.effective_weights(), cfg_.kl_in_total(),
                                      kl_, true);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step_ + 1) + ": " + e.what());
    }
    require_finite(breakdown.total, "total");
    opt_gen_.step(gen_params_);
    // The generator phase routed gradients through the discriminators;
    // discard them so the next discriminator update starts clean.
    for (auto* g : ir_params_) g->zero_grad();
    for (auto* g : rgb_params_) g->zero_grad();

    ++step_;
    return breakdown;
  }

  // Runs (or resumes) the configured schedule over the train split,
  // validating on the val split after each epoch. Artifacts are written
  // under cfg.out_dir unless it is empty.
  TrainingHistory train(const std::vector<ImagePair>& items, const DatasetSplit& split) {
    if (split.train.empty()) throw ValidationError("train: empty training split");
    const bool io = !cfg_.out_dir.empty();
    if (io) std::filesystem::create_directories(cfg_.out_dir);

    try {
      bool stop = false;
      while (epoch_ < cfg_.epochs && !stop) {
        const auto batches = epoch_batches(split.train, cfg_.batch_size, cfg_.seed, epoch_);
        while (batch_in_epoch_ < static_cast<int>(batches.size())) {
          if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) {
            stop = true;
            break;
          }
          std::vector<const ImagePair*> ptrs;
          for (std::size_t idx : batches[static_cast<std::size_t>(batch_in_epoch_)]) ptrs.push_back(&items[idx]);
          const Batch<S> batch = make_batch<S>(ptrs);
          LossBreakdown b = train_step(batch);
          // batch_in_epoch_ holds the next batch to run, so a checkpoint
          // taken here resumes exactly where this run left off.
          ++batch_in_epoch_;
          history_.steps.push_back({step_, b});
        }
        if (stop) break;
        if (!split.val.empty()) {
          history_.val_reports.emplace_back(epoch_, validate(items, split.val));
        }
        ++epoch_;
        batch_in_epoch_ = 0;
        if (io && cfg_.checkpoint_every_epochs > 0 && epoch_ % cfg_.checkpoint_every_epochs == 0) {
          char name[32];
          std::snprintf(name, sizeof(name), "epoch_%04d.mfck", epoch_);
          save_checkpoint(make_checkpoint(), (std::filesystem::path(cfg_.out_dir) / name).string());
        }
      }
    } catch (const NumericError&) {
      if (io) {
        save_checkpoint(make_checkpoint(), (std::filesystem::path(cfg_.out_dir) / "abort.mfck").string());
        write_history_csv(history_, (std::filesystem::path(cfg_.out_dir) / "training_log.csv").string());
      }
      throw;
    }

    if (io) {
      save_checkpoint(make_checkpoint(), (std::filesystem::path(cfg_.out_dir) / "final.mfck").string());
      write_history_csv(history_, (std::filesystem::path(cfg_.out_dir) / "training_log.csv").string());
    }
    return history_;
  }

  MetricReport validate(const std::vector<ImagePair>& items, const std::vector<std::size_t>& val_idx) {
    std::vector<MetricReport> reports;
    for (std::size_t idx : val_idx) {
      const ImagePair& pair = items[idx];
      std::vector<const ImagePair*> one = {&pair};
      const Batch<S> batch = make_batch<S>(one);
      auto fwd = model_.gen.forward(batch.rgb, batch.ir);
      Tensor<float> chw({3, batch.h(), batch.w()});
      for (std::size_t i = 0; i < chw.size(); ++i) chw[i] = static_cast<float>(fwd.fused[i]);
      reports.push_back(evaluate_fusion(chw_to_image(chw), pair));
    }
    return mean_report(reports);
  }

  Checkpoint make_checkpoint() {
    Checkpoint ckpt;
    ckpt.config = config_to_json(cfg_);
    ckpt.scalar_type = std::is_same_v<S, float> ? "f32" : "f64";
    ckpt.step = step_;
    ckpt.epoch = epoch_;
    ckpt.batch_in_epoch = batch_in_epoch_;
    ckpt.counters = {{"adam_t_gen", opt_gen_.t()}, {"adam_t_ir", opt_ir_.t()}, {"adam_t_rgb", opt_rgb_.t()}};
    auto dump = [&ckpt](const std::vector<ParamGroup<S>*>& groups, Adam<S>& opt) {
      for (std::size_t i = 0; i < groups.size(); ++i) {
        ckpt.arrays.push_back(tensor_to_array("param/" + groups[i]->name, groups[i]->value));
        ckpt.arrays.push_back(tensor_to_array("adam_m/" + groups[i]->name, opt.moment1()[i]));
        ckpt.arrays.push_back(tensor_to_array("adam_v/" + groups[i]->name, opt.moment2()[i]));
      }
    };
    dump(gen_params_, opt_gen_);
    dump(ir_params_, opt_ir_);
    dump(rgb_params_, opt_rgb_);
    return ckpt;
  }

  void restore(const Checkpoint& ckpt) {
    const char* expect = std::is_same_v<S, float> ? "f32" : "f64";
    if (ckpt.scalar_type != expect) {
      throw IntegrityError("checkpoint scalar type " + ckpt.scalar_type + " does not match trainer " + expect);
    }
    auto load = [&ckpt](std::vector<ParamGroup<S>*>& groups, Adam<S>& opt) {
      for (std::size_t i = 0; i < groups.size(); ++i) {
        const NamedArray* pv = ckpt.find("param/" + groups[i]->name);
        const NamedArray* pm = ckpt.find("adam_m/" + groups[i]->name);
        const NamedArray* pvv = ckpt.find("adam_v/" + groups[i]->name);
        if (pv == nullptr || pm == nullptr || pvv == nullptr) {
          throw IntegrityError("checkpoint missing arrays for group " + groups[i]->name);
        }
        array_to_tensor(*pv, groups[i]->value);
        array_to_tensor(*pm, opt.moment1()[i]);
        array_to_tensor(*pvv, opt.moment2()[i]);
      }
    };
    load(gen_params_, opt_gen_);
    load(ir_params_, opt_ir_);
    load(rgb_params_, opt_rgb_);
    opt_gen_.set_t(ckpt.counters.at("adam_t_gen").get<std::int64_t>());
    opt_ir_.set_t(ckpt.counters.at("adam_t_ir").get<std::int64_t>());
    opt_rgb_.set_t(ckpt.counters.at("adam_t_rgb").get<std::int64_t>());
    step_ = ckpt.step;
    epoch_ = ckpt.epoch;
    batch_in_epoch_ = ckpt.batch_in_epoch;
  }

 private:
  static void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite loss component ") + what);
    }
  }

  TrainingConfig cfg_;
  FusionModel<S> model_;
  Adam<S> opt_gen_, opt_ir_, opt_rgb_;
  std::vector<ParamGroup<S>*> gen_params_, ir_params_, rgb_params_;
  KlSettings kl_;
  TrainingHistory history_;
  std::int64_t step_ = 0;
  int epoch_ = 0;
  int batch_in_epoch_ = 0;
};

// Loads a pair corpus from disk and preprocesses it to the training
// resolution.
inline std::vector<ImagePair> load_training_items(const TrainingConfig& cfg) {
  const std::vector<DatasetItem> files = scan_pair_directory(cfg.data.dir);
  std::vector<ImagePair> items;
  items.reserve(files.size());
  const int factor = cfg.model.generator.downsample_factor();
  for (const auto& f : files) {
    ImagePair raw = load_image_pair(f.visual_path, f.thermal_path);
    items.push_back(preprocess_pair(raw, cfg.resolution_h, cfg.resolution_w, factor));
  }
  return items;
}

}  // namespace misfit
