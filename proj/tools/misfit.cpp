// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: synthetic data generation, training, inference,
// evaluation, ablations, and gradient verification.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "misfit/cli/commands.hpp"

namespace {

int finish(const misfit::CommandResult& result) {
  for (const auto& line : result.summary) std::puts(line.c_str());
  for (const auto& path : result.artifacts) std::printf("artifact: %s\n", path.c_str());
  return result.exit_code;
}

bool parse_size(const std::string& text, int& h, int& w) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos) return false;
  try {
    h = std::stoi(text.substr(0, x));
    w = std::stoi(text.substr(x + 1));
  } catch (...) {
    return false;
  }
  return h > 0 && w > 0;
}

bool parse_misalign(const std::string& text, misfit::MisalignmentSpec& spec) {
  if (text == "none") {
    spec = misfit::MisalignmentSpec{};
    return true;
  }
  std::vector<double> vals;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      vals.push_back(std::stod(tok));
    } catch (...) {
      return false;
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (vals.size() != 6) return false;
  spec.dx = vals[0];
  spec.dy = vals[1];
  spec.rotation_deg = vals[2];
  spec.scale = vals[3];
  spec.crop_fraction = vals[4];
  spec.noise_sigma = vals[5];
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"misfit: unsupervised visual-thermal image fusion (training, inference, evaluation)"};
  app.require_subcommand(1);

  // generate-data
  misfit::GenerateDataArgs gen_args;
  std::string gen_size = "64x64";
  std::string gen_misalign = "3,3,5,1.05,0,0.02";
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic misaligned visual-thermal corpus");
  gen->add_option("--out", gen_args.out_dir, "Output directory")->required();
  gen->add_option("--count", gen_args.count, "Number of pairs")->capture_default_str();
  gen->add_option("--size", gen_size, "Scene size HxW")->capture_default_str();
  gen->add_option("--blobs", gen_args.blobs, "Thermal hot blobs per scene")->capture_default_str();
  gen->add_option("--misalign", gen_misalign,
                  "Per-item warp bounds dx,dy,rot_deg,scale,crop,noise ('none' disables)")
      ->capture_default_str();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Corpus seed (default: MISFIT_SEED or 1)");

  // train
  std::string train_config;
  std::vector<std::string> train_overrides;
  auto* train = app.add_subcommand("train", "Train the fusion model from a JSON config");
  train->add_option("--config", train_config, "Config file (JSON)")->required();
  train->add_option("--override", train_overrides, "Dotted-path override, e.g. weights.lambda_l1=1");

  // fuse
  misfit::FuseArgs fuse_args;
  std::string fuse_heatmaps;
  auto* fuse = app.add_subcommand("fuse", "Fuse one visual-thermal pair with a trained checkpoint");
  fuse->add_option("--checkpoint", fuse_args.checkpoint_path, "Checkpoint (.mfck)")->required();
  fuse->add_option("--visual", fuse_args.visual_path, "Visual image (PNG/TIFF)")->required();
  fuse->add_option("--thermal", fuse_args.thermal_path, "Thermal image (PNG/TIFF)")->required();
  fuse->add_option("--out", fuse_args.out_path, "Fused output PNG")->required();
  fuse->add_option("--heatmaps", fuse_heatmaps, "Directory for the two attention heatmap PNGs");

  // evaluate
  misfit::EvaluateArgs eval_args;
  std::string eval_plots;
  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint over a pair directory");
  eval->add_option("--checkpoint", eval_args.checkpoint_path, "Checkpoint (.mfck)")->required();
  eval->add_option("--data", eval_args.data_dir, "Directory of <stem>_rgb/<stem>_ir pairs")->required();
  eval->add_option("--out", eval_args.out_path, "Report JSON path")->required();
  eval->add_option("--plot", eval_plots, "Directory for per-metric charts");

  // ablate
  misfit::AblateArgs ablate_args;
  std::string ablate_variants = "l1_weight_1,no_kl,no_attention";
  auto* ablate = app.add_subcommand("ablate", "Train base + variants and compare metrics");
  ablate->add_option("--config", ablate_args.config_path, "Config file (JSON)")->required();
  ablate->add_option("--variants", ablate_variants, "Comma list: l1_weight_1,no_kl,no_attention")
      ->capture_default_str();
  ablate->add_option("--out", ablate_args.out_dir, "Output directory")->required();
  ablate->add_option("--override", ablate_args.overrides, "Dotted-path config override");

  // gradcheck
  std::uint64_t gc_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter group");
  auto* gc_seed_opt = gradcheck->add_option("--seed", gc_seed, "Seed (default: MISFIT_SEED or 1)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    if (!parse_size(gen_size, gen_args.height, gen_args.width)) {
      std::fprintf(stderr, "error: --size must be HxW, got %s\n", gen_size.c_str());
      return 1;
    }
    if (!parse_misalign(gen_misalign, gen_args.misalign_max)) {
      std::fprintf(stderr, "error: --misalign must be 6 comma-separated numbers or 'none'\n");
      return 1;
    }
    if (gen_seed_opt->count() > 0) gen_args.seed = gen_seed;
    return finish(misfit::cmd_generate_data(gen_args));
  }
  if (train->parsed()) {
    return finish(misfit::cmd_train(train_config, train_overrides));
  }
  if (fuse->parsed()) {
    if (!fuse_heatmaps.empty()) fuse_args.heatmap_dir = fuse_heatmaps;
    return finish(misfit::cmd_fuse(fuse_args));
  }
  if (eval->parsed()) {
    if (!eval_plots.empty()) eval_args.plot_dir = eval_plots;
    return finish(misfit::cmd_evaluate(eval_args));
  }
  if (ablate->parsed()) {
    ablate_args.variants.clear();
    std::size_t start = 0;
    while (start <= ablate_variants.size() && !ablate_variants.empty()) {
      const std::size_t comma = ablate_variants.find(',', start);
      const std::string tok =
          ablate_variants.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!tok.empty()) ablate_args.variants.push_back(tok);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return finish(misfit::cmd_ablate(ablate_args));
  }
  if (gradcheck->parsed()) {
    std::optional<std::uint64_t> seed;
    if (gc_seed_opt->count() > 0) seed = gc_seed;
    return finish(misfit::cmd_gradcheck(seed));
  }
  return 1;
}
