// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "misfit/core/error.hpp"
#include "misfit/losses/losses.hpp"
#include "misfit/nn/generator.hpp"

namespace misfit {

enum class Ablation { none, l1_weight_1, no_kl, no_attention };

inline std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::l1_weight_1: return "l1_weight_1";
    case Ablation::no_kl: return "no_kl";
    case Ablation::no_attention: return "no_attention";
  }
  return "none";
}

inline Ablation ablation_from_name(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "l1_weight_1") return Ablation::l1_weight_1;
  if (name == "no_kl") return Ablation::no_kl;
  if (name == "no_attention") return Ablation::no_attention;
  throw ValidationError("unknown ablation variant: " + name +
                        " (expected none, l1_weight_1, no_kl, no_attention)");
}

struct OptimizerConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct DataConfig {
  std::string dir;
  double split_ratio = 0.8;
};

struct ModelConfig {
  GeneratorConfig generator;
  int disc_width = 32;
  int disc_layers = 4;
};

struct TrainingConfig {
  std::uint64_t seed = 1;
  int epochs = 20;
  std::int64_t max_steps = 0;  // 0 = run all epochs
  double learning_rate = 1e-4;
  int batch_size = 4;
  int resolution_h = 256;
  int resolution_w = 256;
  LossWeights weights;
  OptimizerConfig optimizer;
  Ablation ablation = Ablation::none;
  DataConfig data;
  ModelConfig model;
  int kl_bins = 64;
  double kl_epsilon = 1e-8;
  int checkpoint_every_epochs = 0;  // 0 = final checkpoint only
  std::string out_dir = "runs/default";

  void validate() const {
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
    const int factor = model.generator.downsample_factor();
    if (resolution_h < 32 || resolution_w < 32 || resolution_h % factor != 0 || resolution_w % factor != 0) {
      throw ConfigError("config: resolution " + std::to_string(resolution_h) + "x" + std::to_string(resolution_w) +
                        " must be >= 32 and divisible by the network factor " + std::to_string(factor));
    }
    if (!(data.split_ratio > 0.0 && data.split_ratio < 1.0)) {
      throw ConfigError("config: data.split_ratio must be in (0, 1)");
    }
    if (kl_bins < 2) throw ConfigError("config: kl_bins must be >= 2");
    weights.validate();
    model.generator.validate();
  }

  // Weights actually optimized; the l1 reweighting ablation lands here.
  LossWeights effective_weights() const {
    LossWeights w = weights;
    if (ablation == Ablation::l1_weight_1) w.lambda_l1 = 1.0;
    return w;
  }
  bool kl_in_total() const { return ablation != Ablation::no_kl; }
  GeneratorConfig effective_generator() const {
    GeneratorConfig g = model.generator;
    if (ablation == Ablation::no_attention) g.use_attention = false;
    return g;
  }
};

inline nlohmann::json config_to_json(const TrainingConfig& c) {
  return nlohmann::json{
      {"seed", c.seed},
      {"epochs", c.epochs},
      {"max_steps", c.max_steps},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"resolution", {c.resolution_h, c.resolution_w}},
      {"weights",
       {{"lambda_ir", c.weights.lambda_ir},
        {"lambda_rgb", c.weights.lambda_rgb},
        {"lambda_kl", c.weights.lambda_kl},
        {"lambda_l1", c.weights.lambda_l1}}},
      {"optimizer", {{"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2}, {"epsilon", c.optimizer.epsilon}}},
      {"ablation", ablation_name(c.ablation)},
      {"data", {{"dir", c.data.dir}, {"split_ratio", c.data.split_ratio}}},
      {"model",
       {{"down_width", c.model.generator.down_width},
        {"feat_dim", c.model.generator.feat_dim},
        {"d_model", c.model.generator.d_model},
        {"n_heads", c.model.generator.n_heads},
        {"positional_encoding", c.model.generator.positional_encoding},
        {"use_attention", c.model.generator.use_attention},
        {"up_width", c.model.generator.up_width},
        {"up_channels", c.model.generator.up_channels},
        {"unet_base", c.model.generator.unet_base},
        {"unet_depth", c.model.generator.unet_depth},
        {"disc_width", c.model.disc_width},
        {"disc_layers", c.model.disc_layers}}},
      {"kl_bins", c.kl_bins},
      {"kl_epsilon", c.kl_epsilon},
      {"checkpoint_every_epochs", c.checkpoint_every_epochs},
      {"out_dir", c.out_dir}};
}

inline TrainingConfig config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  std::vector<std::string> bad_keys;
  auto get = [&](const nlohmann::json& obj, const char* key, auto& into, const std::string& prefix) {
    if (!obj.contains(key)) return;
    try {
      into = obj.at(key).get<std::decay_t<decltype(into)>>();
    } catch (const nlohmann::json::exception&) {
      bad_keys.push_back(prefix + key);
    }
  };
  get(j, "seed", c.seed, "");
  get(j, "epochs", c.epochs, "");
  get(j, "max_steps", c.max_steps, "");
  get(j, "learning_rate", c.learning_rate, "");
  get(j, "batch_size", c.batch_size, "");
  if (j.contains("resolution")) {
    try {
      c.resolution_h = j.at("resolution").at(0).get<int>();
      c.resolution_w = j.at("resolution").at(1).get<int>();
    } catch (const nlohmann::json::exception&) {
      bad_keys.push_back("resolution");
    }
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    get(w, "lambda_ir", c.weights.lambda_ir, "weights.");
    get(w, "lambda_rgb", c.weights.lambda_rgb, "weights.");
    get(w, "lambda_kl", c.weights.lambda_kl, "weights.");
    get(w, "lambda_l1", c.weights.lambda_l1, "weights.");
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    get(o, "beta1", c.optimizer.beta1, "optimizer.");
    get(o, "beta2", c.optimizer.beta2, "optimizer.");
    get(o, "epsilon", c.optimizer.epsilon, "optimizer.");
  }
  if (j.contains("ablation")) {
    c.ablation = ablation_from_name(j.at("ablation").get<std::string>());
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    get(d, "dir", c.data.dir, "data.");
    get(d, "split_ratio", c.data.split_ratio, "data.");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    get(m, "down_width", c.model.generator.down_width, "model.");
    get(m, "feat_dim", c.model.generator.feat_dim, "model.");
    get(m, "d_model", c.model.generator.d_model, "model.");
    get(m, "n_heads", c.model.generator.n_heads, "model.");
    get(m, "positional_encoding", c.model.generator.positional_encoding, "model.");
    get(m, "use_attention", c.model.generator.use_attention, "model.");
    get(m, "up_width", c.model.generator.up_width, "model.");
    get(m, "up_channels", c.model.generator.up_channels, "model.");
    get(m, "unet_base", c.model.generator.unet_base, "model.");
    get(m, "unet_depth", c.model.generator.unet_depth, "model.");
    get(m, "disc_width", c.model.disc_width, "model.");
    get(m, "disc_layers", c.model.disc_layers, "model.");
  }
  get(j, "kl_bins", c.kl_bins, "");
  get(j, "kl_epsilon", c.kl_epsilon, "");
  get(j, "checkpoint_every_epochs", c.checkpoint_every_epochs, "");
  get(j, "out_dir", c.out_dir, "");
  if (!bad_keys.empty()) {
    std::string msg = "config: invalid values for keys:";
    for (const auto& k : bad_keys) msg += " " + k;
    throw ConfigError(msg);
  }
  return c;
}

inline TrainingConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config JSON " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// Applies a dotted-path override like "weights.lambda_l1=1". Unknown paths
// are errors, not silent ignores.
inline nlohmann::json apply_override(nlohmann::json config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override must be key.path=value, got: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value_str = assignment.substr(eq + 1);

  std::vector<std::string> keys;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  nlohmann::json* node = &config;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->contains(keys[i]) || !(*node)[keys[i]].is_object()) {
      throw ValidationError("unknown config path: " + path);
    }
    node = &(*node)[keys[i]];
  }
  const std::string& leaf = keys.back();
  if (!node->contains(leaf)) throw ValidationError("unknown config path: " + path);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(value_str);
  } catch (const nlohmann::json::exception&) {
    value = value_str;  // bare strings are allowed unquoted
  }
  (*node)[leaf] = value;
  return config;
}

}  // namespace misfit
