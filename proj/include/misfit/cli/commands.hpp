// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "misfit/cli/charts.hpp"
#include "misfit/data/dataset.hpp"
#include "misfit/data/image_io.hpp"
#include "misfit/data/resize.hpp"
#include "misfit/data/synthetic.hpp"
#include "misfit/metrics/metrics.hpp"
#include "misfit/nn/attention.hpp"
#include "misfit/train/ablation.hpp"
#include "misfit/train/gradcheck.hpp"
#include "misfit/train/trainer.hpp"

namespace misfit {

struct CommandResult {
  int exit_code = 0;  // 0 success, 1 validation error, 2 runtime error
  std::vector<std::string> artifacts;
  std::vector<std::string> summary;
};

namespace cli_detail {

inline int classify_error(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const FormatError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const ShapeError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const GenerationError*>(&e) != nullptr) return 1;
  return 2;  // numeric, integrity, version, unexpected
}

template <typename Fn>
CommandResult guarded(Fn&& fn) {
  CommandResult result;
  try {
    fn(result);
  } catch (const std::exception& e) {
    result.exit_code = classify_error(e);
    result.summary.push_back(std::string("error: ") + e.what());
  }
  return result;
}

}  // namespace cli_detail

// Seed resolution: explicit flag, then MISFIT_SEED, then 1.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> cli_seed) {
  if (cli_seed.has_value()) return *cli_seed;
  if (const char* env = std::getenv("MISFIT_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw ValidationError(std::string("MISFIT_SEED is not an integer: ") + env);
    }
  }
  return 1;
}

inline nlohmann::json metric_report_to_json(const MetricReport& r) {
  nlohmann::json j;
  for (const std::string& m : metric_names()) {
    j[m] = {{"vs_thermal", r.vs_thermal.at(m)},
            {"vs_visual", r.vs_visual.at(m)},
            {"better", metric_higher_is_better(m) ? "higher" : "lower"}};
  }
  j["run_id"] = r.run_id;
  j["checkpoint_step"] = r.checkpoint_step;
  j["dataset_id"] = r.dataset_id;
  j["settings"] = {{"uqi_window", r.uqi_window},
                   {"msssim_scales", r.msssim_scales},
                   {"msssim_window", r.msssim_window},
                   {"nmi_bins", r.nmi_bins},
                   {"nmi_convention", "2I/(HA+HB)"}};
  return j;
}

inline nlohmann::json comparison_to_json(const ComparisonTable& t) {
  nlohmann::json j;
  j["rows"] = t.row_labels;
  j["columns"] = t.column_labels;
  j["better"] = t.column_better;
  j["normalized"] = t.normalized;
  j["values"] = t.values;
  return j;
}

inline void write_comparison_csv(const ComparisonTable& t, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write comparison table: " + path);
  out << "run";
  for (const auto& c : t.column_labels) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
    out << t.row_labels[r];
    for (double v : t.values[r]) out << ',' << format_g17(v);
    out << '\n';
  }
}

// One grouped bar chart per metric; groups are runs, bars are the two
// comparison modalities.
inline std::vector<std::string> write_metric_charts(const ComparisonTable& t, const std::string& dir) {
  std::vector<std::string> written;
  std::filesystem::create_directories(dir);
  for (const std::string& m : metric_names()) {
    std::size_t col_t = 0, col_v = 0;
    for (std::size_t c = 0; c < t.column_labels.size(); ++c) {
      if (t.column_labels[c] == m + "_vs_thermal") col_t = c;
      if (t.column_labels[c] == m + "_vs_visual") col_v = c;
    }
    BarSeries thermal{"vs thermal", {}};
    BarSeries visual{"vs visual", {}};
    for (const auto& row : t.values) {
      thermal.values.push_back(row[col_t]);
      visual.values.push_back(row[col_v]);
    }
    const std::string path = (std::filesystem::path(dir) / (m + ".svg")).string();
    const std::string note = std::string(t.normalized ? "normalized; " : "") +
                             (metric_higher_is_better(m) ? "higher is better" : "lower is better");
    render_grouped_bars_svg(path, m, note, t.row_labels, {thermal, visual});
    written.push_back(path);
  }
  return written;
}

struct GenerateDataArgs {
  std::string out_dir;
  int count = 16;
  int height = 64;
  int width = 64;
  int blobs = 2;
  MisalignmentSpec misalign_max;  // per-item warps drawn within these bounds
  std::optional<std::uint64_t> seed;
};

inline CommandResult cmd_generate_data(const GenerateDataArgs& args) {
  return cli_detail::guarded([&](CommandResult& result) {
    if (args.count < 1) throw ValidationError("--count must be >= 1");
    args.misalign_max.validate();
    const std::uint64_t seed = resolve_seed(args.seed);

    // Build the whole corpus in memory before writing anything, so a
    // validation failure cannot leave partial artifacts behind.
    struct Item {
      ImagePair pair;
      ManifestEntry entry;
    };
    std::vector<Item> items;
    for (int i = 0; i < args.count; ++i) {
      const std::uint64_t item_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
      auto [pair, truth] = generate_synthetic_scene(item_seed, args.height, args.width, args.blobs);
      Rng warp_rng(mix_seed(item_seed, 0x77617270ULL));
      MisalignmentSpec spec;
      spec.dx = warp_rng.uniform(-args.misalign_max.dx, args.misalign_max.dx);
      spec.dy = warp_rng.uniform(-args.misalign_max.dy, args.misalign_max.dy);
      spec.rotation_deg = warp_rng.uniform(-args.misalign_max.rotation_deg, args.misalign_max.rotation_deg);
      const double log_s = std::log(std::max(1.0, args.misalign_max.scale));
      spec.scale = std::exp(warp_rng.uniform(-log_s, log_s));
      spec.crop_fraction = args.misalign_max.crop_fraction;
      spec.noise_sigma = args.misalign_max.noise_sigma;
      truth.warp_applied = spec;

      Item item;
      item.pair = spec.is_identity() ? pair : inject_misalignment(pair, spec, item_seed);
      if (spec.is_identity()) item.pair.aligned = true;
      char stem[32];
      std::snprintf(stem, sizeof(stem), "item_%04d", i);
      item.entry.stem = stem;
      item.entry.seed = item_seed;
      item.entry.truth = truth;
      items.push_back(std::move(item));
    }

    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (!std::filesystem::is_directory(args.out_dir)) {
      throw IoError("cannot create output directory: " + args.out_dir);
    }

    std::vector<ManifestEntry> entries;
    for (const auto& item : items) {
      const std::string rgb_path = (std::filesystem::path(args.out_dir) / (item.entry.stem + "_rgb.png")).string();
      const std::string ir_path = (std::filesystem::path(args.out_dir) / (item.entry.stem + "_ir.png")).string();
      save_png(item.pair.visual, rgb_path);
      save_png(item.pair.thermal, ir_path);
      result.artifacts.push_back(rgb_path);
      result.artifacts.push_back(ir_path);
      entries.push_back(item.entry);
    }
    const std::string manifest_path = (std::filesystem::path(args.out_dir) / "manifest.json").string();
    write_manifest(manifest_path, seed, args.height, args.width, args.blobs, entries);
    result.artifacts.push_back(manifest_path);

    if (args.height < 64 || args.width < 64 || args.height % 16 != 0 || args.width % 16 != 0) {
      result.summary.push_back("warning: size " + std::to_string(args.height) + "x" + std::to_string(args.width) +
                               " is below or not divisible by the default network factor (64, /16); "
                               "training will need a matching resolution/model config");
    }
    result.summary.push_back("wrote " + std::to_string(args.count) + " pairs to " + args.out_dir);
  });
}

inline CommandResult cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  return cli_detail::guarded([&](CommandResult& result) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot read config file: " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config JSON " + config_path + ": " + e.what());
    }
    if (!j.contains("seed")) {
      if (const char* env = std::getenv("MISFIT_SEED")) j["seed"] = std::stoull(env);
    }
    for (const auto& ov : overrides) j = apply_override(j, ov);
    TrainingConfig cfg = config_from_json(j);
    cfg.validate();
    if (cfg.data.dir.empty()) throw ConfigError("config: data.dir is required for training");

    const std::vector<ImagePair> items = load_training_items(cfg);
    if (items.size() < 2) throw ValidationError("training needs at least 2 pairs, found " + std::to_string(items.size()));
    const DatasetSplit split = split_dataset(items.size(), cfg.data.split_ratio, cfg.seed);

    Trainer<float> trainer(cfg);
    TrainingHistory history;
    try {
      history = trainer.train(items, split);
    } catch (const NumericError& e) {
      result.exit_code = 2;
      result.summary.push_back(std::string("training aborted: ") + e.what());
      result.summary.push_back("last state checkpoint: " +
                               (std::filesystem::path(cfg.out_dir) / "abort.mfck").string());
      return;
    }

    nlohmann::json val = nlohmann::json::array();
    for (const auto& [epoch, report] : history.val_reports) {
      nlohmann::json r = metric_report_to_json(report);
      r["epoch"] = epoch;
      val.push_back(r);
    }
    const std::string val_path = (std::filesystem::path(cfg.out_dir) / "val_metrics.json").string();
    std::ofstream vout(val_path, std::ios::trunc);
    vout << val.dump(2) << "\n";

    result.artifacts.push_back((std::filesystem::path(cfg.out_dir) / "final.mfck").string());
    result.artifacts.push_back((std::filesystem::path(cfg.out_dir) / "training_log.csv").string());
    result.artifacts.push_back(val_path);
    result.summary.push_back("trained " + std::to_string(history.steps.size()) + " steps; final total loss " +
                             (history.steps.empty() ? "n/a" : format_g17(history.steps.back().loss.total)));
  });
}

// Rebuilds a model from a checkpoint (parameters only; optimizer state is
// ignored outside the trainer).
inline TrainingConfig checkpoint_config(const Checkpoint& ckpt) { return config_from_json(ckpt.config); }

template <typename S>
void restore_model_params(FusionModel<S>& model, const Checkpoint& ckpt) {
  for (auto* g : model.all_params()) {
    const NamedArray* a = ckpt.find("param/" + g->name);
    if (a == nullptr) throw IntegrityError("checkpoint missing parameters for " + g->name);
    array_to_tensor(*a, g->value);
  }
}

struct FuseArgs {
  std::string checkpoint_path;
  std::string visual_path;
  std::string thermal_path;
  std::string out_path;
  std::optional<std::string> heatmap_dir;
};

inline CommandResult cmd_fuse(const FuseArgs& args) {
  return cli_detail::guarded([&](CommandResult& result) {
    if (!std::filesystem::exists(args.checkpoint_path)) {
      throw IoError("checkpoint not found: " + args.checkpoint_path);
    }
    const Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    const TrainingConfig cfg = checkpoint_config(ckpt);
    const GeneratorConfig gen_cfg = cfg.effective_generator();
    const int factor = gen_cfg.downsample_factor();
    if (cfg.resolution_h % factor != 0 || cfg.resolution_w % factor != 0) {
      throw ConfigError("checkpoint resolution " + std::to_string(cfg.resolution_h) + "x" +
                        std::to_string(cfg.resolution_w) + " is incompatible with the network factor " +
                        std::to_string(factor) + "; inputs must preprocess to a multiple of it");
    }

    FusionModel<float> model(gen_cfg, cfg.model.disc_width, cfg.model.disc_layers);
    restore_model_params(model, ckpt);

    ImagePair raw = load_image_pair(args.visual_path, args.thermal_path);
    ImagePair pair = preprocess_pair(raw, cfg.resolution_h, cfg.resolution_w, factor);
    std::vector<const ImagePair*> one = {&pair};
    const Batch<float> batch = make_batch<float>(one);
    auto fwd = model.gen.forward(batch.rgb, batch.ir);

    Tensor<float> chw({3, cfg.resolution_h, cfg.resolution_w});
    std::copy_n(fwd.fused.data(), chw.size(), chw.data());
    save_png(chw_to_image(chw), args.out_path);
    result.artifacts.push_back(args.out_path);

    if (args.heatmap_dir.has_value()) {
      std::filesystem::create_directories(*args.heatmap_dir);
      Image hm_thermal_keys(fwd.attn_h, fwd.attn_w, 1);
      Image hm_visual_keys(fwd.attn_h, fwd.attn_w, 1);
      if (gen_cfg.use_attention) {
        Tensor<float> map_rgbq({fwd.map_rgb_queries.dim(1), fwd.map_rgb_queries.dim(2)});
        std::copy_n(fwd.map_rgb_queries.data(), map_rgbq.size(), map_rgbq.data());
        hm_thermal_keys = attention_heatmap(map_rgbq, fwd.attn_h, fwd.attn_w);
        Tensor<float> map_irq({fwd.map_ir_queries.dim(1), fwd.map_ir_queries.dim(2)});
        std::copy_n(fwd.map_ir_queries.data(), map_irq.size(), map_irq.data());
        hm_visual_keys = attention_heatmap(map_irq, fwd.attn_h, fwd.attn_w);
      } else {
        // Attention ablated: degenerate constant heatmaps.
        std::fill(hm_thermal_keys.px.begin(), hm_thermal_keys.px.end(), 0.5f);
        std::fill(hm_visual_keys.px.begin(), hm_visual_keys.px.end(), 0.5f);
      }
      const std::string p1 = (std::filesystem::path(*args.heatmap_dir) / "attention_over_thermal.png").string();
      const std::string p2 = (std::filesystem::path(*args.heatmap_dir) / "attention_over_visual.png").string();
      save_png(apply_heat_colormap(hm_thermal_keys), p1);
      save_png(apply_heat_colormap(hm_visual_keys), p2);
      result.artifacts.push_back(p1);
      result.artifacts.push_back(p2);
    }
    result.summary.push_back("fused " + args.visual_path + " + " + args.thermal_path + " -> " + args.out_path);
  });
}

struct EvaluateArgs {
  std::string checkpoint_path;
  std::string data_dir;
  std::string out_path;
  std::optional<std::string> plot_dir;
};

inline CommandResult cmd_evaluate(const EvaluateArgs& args) {
  return cli_detail::guarded([&](CommandResult& result) {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    const TrainingConfig cfg = checkpoint_config(ckpt);
    const GeneratorConfig gen_cfg = cfg.effective_generator();
    FusionModel<float> model(gen_cfg, cfg.model.disc_width, cfg.model.disc_layers);
    restore_model_params(model, ckpt);

    const std::vector<DatasetItem> files = scan_pair_directory(args.data_dir);
    std::vector<MetricReport> reports;
    nlohmann::json per_item = nlohmann::json::array();
    for (const auto& f : files) {
      ImagePair raw = load_image_pair(f.visual_path, f.thermal_path);
      ImagePair pair = preprocess_pair(raw, cfg.resolution_h, cfg.resolution_w, gen_cfg.downsample_factor());
      std::vector<const ImagePair*> one = {&pair};
      const Batch<float> batch = make_batch<float>(one);
      auto fwd = model.gen.forward(batch.rgb, batch.ir);
      Tensor<float> chw({3, cfg.resolution_h, cfg.resolution_w});
      std::copy_n(fwd.fused.data(), chw.size(), chw.data());
      MetricReport r = evaluate_fusion(chw_to_image(chw), pair);
      r.run_id = f.stem;
      r.checkpoint_step = ckpt.step;
      r.dataset_id = args.data_dir;
      nlohmann::json ji = metric_report_to_json(r);
      ji["item"] = f.stem;
      per_item.push_back(ji);
      reports.push_back(std::move(r));
    }

    MetricReport aggregate = mean_report(reports);
    aggregate.run_id = "aggregate";
    aggregate.checkpoint_step = ckpt.step;
    aggregate.dataset_id = args.data_dir;

    nlohmann::json out;
    out["aggregate"] = metric_report_to_json(aggregate);
    out["items"] = per_item;
    out["checkpoint"] = args.checkpoint_path;
    out["dataset"] = args.data_dir;
    std::ofstream jout(args.out_path, std::ios::trunc);
    if (!jout) throw IoError("cannot write report: " + args.out_path);
    jout << out.dump(2) << "\n";
    result.artifacts.push_back(args.out_path);

    if (args.plot_dir.has_value()) {
      const ComparisonTable table = build_comparison({aggregate}, false);
      for (const auto& p : write_metric_charts(table, *args.plot_dir)) result.artifacts.push_back(p);
    }
    result.summary.push_back("evaluated " + std::to_string(reports.size()) + " pairs");
    for (const std::string& m : metric_names()) {
      result.summary.push_back("  " + m + ": vs_thermal " + format_g17(aggregate.vs_thermal.at(m)) +
                               ", vs_visual " + format_g17(aggregate.vs_visual.at(m)));
    }
  });
}

struct AblateArgs {
  std::string config_path;
  std::vector<std::string> variants;
  std::string out_dir;
  std::vector<std::string> overrides;
};

inline CommandResult cmd_ablate(const AblateArgs& args) {
  return cli_detail::guarded([&](CommandResult& result) {
    if (args.variants.empty()) throw ValidationError("--variants must name at least one variant to compare");
    std::vector<Ablation> variants;
    for (const auto& v : args.variants) {
      const Ablation a = ablation_from_name(v);
      if (a == Ablation::none) throw ValidationError("'none' is the base run, not a variant");
      variants.push_back(a);
    }

    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot read config file: " + args.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config JSON " + args.config_path + ": " + e.what());
    }
    for (const auto& ov : args.overrides) j = apply_override(j, ov);
    TrainingConfig base = config_from_json(j);
    base.out_dir = (std::filesystem::path(args.out_dir) / "runs").string();
    base.validate();
    if (base.data.dir.empty()) throw ConfigError("config: data.dir is required");

    const std::vector<ImagePair> items = load_training_items(base);
    const DatasetSplit split = split_dataset(items.size(), base.data.split_ratio, base.seed);

    std::vector<AblationRun> runs;
    runs.push_back(run_ablation<float>(Ablation::none, base, items, split));
    runs.front().variant = "base";
    runs.front().report.run_id = "base";
    for (Ablation v : variants) runs.push_back(run_ablation<float>(v, base, items, split));

    std::vector<MetricReport> reports;
    for (const auto& r : runs) reports.push_back(r.report);
    const ComparisonTable table = build_comparison(reports, true);

    std::filesystem::create_directories(args.out_dir);
    const std::string table_json = (std::filesystem::path(args.out_dir) / "comparison.json").string();
    nlohmann::json tj = comparison_to_json(table);
    for (const auto& r : runs) tj["param_counts"][r.variant] = r.param_count;
    std::ofstream tout(table_json, std::ios::trunc);
    tout << tj.dump(2) << "\n";
    const std::string table_csv = (std::filesystem::path(args.out_dir) / "comparison.csv").string();
    write_comparison_csv(table, table_csv);
    result.artifacts.push_back(table_json);
    result.artifacts.push_back(table_csv);
    for (const auto& p : write_metric_charts(table, (std::filesystem::path(args.out_dir) / "charts").string())) {
      result.artifacts.push_back(p);
    }

    for (const auto& r : runs) {
      result.summary.push_back(r.variant + ": " + std::to_string(r.param_count) + " parameters, final total " +
                               (r.history.steps.empty() ? "n/a" : format_g17(r.history.steps.back().loss.total)));
    }
  });
}

inline CommandResult cmd_gradcheck(std::optional<std::uint64_t> seed_opt) {
  return cli_detail::guarded([&](CommandResult& result) {
    // Built-in verification point; see gradient_check for why the point's
    // conditioning matters at the fixed difference step.
    std::uint64_t seed = 415;
    if (seed_opt.has_value() || std::getenv("MISFIT_SEED") != nullptr) seed = resolve_seed(seed_opt);
    const GradCheckReport report = gradient_check(seed);
    for (const auto& g : report.groups) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-28s %8zu params   max rel err %.3e %s", g.name.c_str(), g.size,
                    g.max_rel_err, g.max_rel_err < 1e-4 ? "ok" : "FAIL");
      result.summary.push_back(line);
    }
    char worst[96];
    std::snprintf(worst, sizeof(worst), "worst max rel err: %.3e (threshold 1e-4)", report.worst);
    result.summary.push_back(worst);
    if (!report.passes()) {
      result.exit_code = 2;
      result.summary.push_back("gradient check FAILED");
    }
  });
}

}  // namespace misfit
