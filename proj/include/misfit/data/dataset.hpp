// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "misfit/core/error.hpp"
#include "misfit/core/rng.hpp"
#include "misfit/data/image.hpp"
#include "misfit/data/image_io.hpp"
#include "misfit/data/misalign.hpp"
#include "misfit/data/synthetic.hpp"

namespace misfit {

// Index-based split over a dataset. Indices refer to the caller's item list.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::uint64_t seed = 0;
};

// Deterministic shuffle under seed; first ceil(ratio*N) items go to train.
inline DatasetSplit split_dataset(std::size_t n_items, double ratio, std::uint64_t seed) {
  if (n_items == 0) throw ValidationError("split_dataset: empty item list");
  if (n_items < 2) throw ValidationError("split_dataset: need at least 2 items");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split_dataset: ratio must be in (0, 1)");
  std::vector<std::size_t> order(n_items);
  for (std::size_t i = 0; i < n_items; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n_items)));
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.end());
  return split;
}

// Batches for one epoch: a fresh permutation per (seed, epoch), chunked into
// batch_size groups with the final short batch kept.
inline std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& items, int batch_size,
                                                           std::uint64_t shuffle_seed, int epoch) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<std::size_t> order = items;
  Rng rng(mix_seed(shuffle_seed, 0x62617463ULL + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

// One record of a generated corpus.
struct DatasetItem {
  std::string stem;
  std::string visual_path;
  std::string thermal_path;
};

// Scans a directory for <stem>_rgb.png / <stem>_ir.png pairs (TIFF accepted
// too). Unmatched stems are an ingestion error listing the offenders.
inline std::vector<DatasetItem> scan_pair_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
  std::map<std::string, DatasetItem> by_stem;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext != ".png" && ext != ".tif" && ext != ".tiff") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.size() > 4 && stem.ends_with("_rgb")) {
      by_stem[stem.substr(0, stem.size() - 4)].visual_path = entry.path().string();
    } else if (stem.size() > 3 && stem.ends_with("_ir")) {
      by_stem[stem.substr(0, stem.size() - 3)].thermal_path = entry.path().string();
    }
  }
  std::vector<DatasetItem> items;
  std::string unmatched;
  for (auto& [stem, item] : by_stem) {
    item.stem = stem;
    if (item.visual_path.empty() || item.thermal_path.empty()) {
      unmatched += (unmatched.empty() ? "" : ", ") + stem;
      continue;
    }
    items.push_back(item);
  }
  if (!unmatched.empty()) {
    throw ValidationError("unpaired dataset stems in " + dir + ": " + unmatched);
  }
  if (items.empty()) throw ValidationError("no image pairs found in " + dir);
  return items;  // std::map iteration gives deterministic stem order
}

// Per-item manifest entry for a synthetic corpus.
struct ManifestEntry {
  std::string stem;
  std::uint64_t seed = 0;
  SceneTruth truth;
};

inline nlohmann::json misalignment_to_json(const MisalignmentSpec& spec) {
  return nlohmann::json{{"dx", spec.dx},       {"dy", spec.dy},
                        {"rotation_deg", spec.rotation_deg}, {"scale", spec.scale},
                        {"crop_fraction", spec.crop_fraction}, {"noise_sigma", spec.noise_sigma}};
}

inline MisalignmentSpec misalignment_from_json(const nlohmann::json& j) {
  MisalignmentSpec spec;
  spec.dx = j.at("dx").get<double>();
  spec.dy = j.at("dy").get<double>();
  spec.rotation_deg = j.at("rotation_deg").get<double>();
  spec.scale = j.at("scale").get<double>();
  spec.crop_fraction = j.at("crop_fraction").get<double>();
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  return spec;
}

inline nlohmann::json manifest_entry_to_json(const ManifestEntry& e) {
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& [r, c] : e.truth.blob_centers) centers.push_back({r, c});
  return nlohmann::json{{"stem", e.stem},
                        {"seed", e.seed},
                        {"blob_centers", centers},
                        {"blob_radii", e.truth.blob_radii},
                        {"misalignment", misalignment_to_json(e.truth.warp_applied)}};
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.stem = j.at("stem").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("blob_centers")) {
    e.truth.blob_centers.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  }
  e.truth.blob_radii = j.at("blob_radii").get<std::vector<double>>();
  e.truth.warp_applied = misalignment_from_json(j.at("misalignment"));
  return e;
}

inline void write_manifest(const std::string& path, std::uint64_t seed, int h, int w, int n_blobs,
                           const std::vector<ManifestEntry>& entries) {
  nlohmann::json j;
  j["format"] = "misfit-corpus";
  j["version"] = 1;
  j["seed"] = seed;
  j["height"] = h;
  j["width"] = w;
  j["blobs_per_scene"] = n_blobs;
  j["items"] = nlohmann::json::array();
  for (const auto& e : entries) j["items"].push_back(manifest_entry_to_json(e));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path + ": " + e.what());
  }
  std::vector<ManifestEntry> entries;
  for (const auto& item : j.at("items")) entries.push_back(manifest_entry_from_json(item));
  return entries;
}

}  // namespace misfit
