// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "misfit/core/error.hpp"
#include "misfit/core/tensor.hpp"

namespace misfit {

inline constexpr char kCheckpointMagic[4] = {'M', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// One named little-endian IEEE-754 array.
struct NamedArray {
  std::string name;
  std::string dtype;  // "f32" or "f64"
  std::vector<int> shape;
  std::vector<unsigned char> bytes;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

// Full training state: parameters, optimizer moments, counters, and the
// config snapshot. Round-trips bit-exactly through save/load.
struct Checkpoint {
  nlohmann::json config;
  std::string scalar_type;  // "f32" or "f64"
  std::int64_t step = 0;
  int epoch = 0;
  int batch_in_epoch = 0;
  nlohmann::json counters;  // e.g. adam step counts
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }
};

namespace detail {

template <typename T>
void append_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T read_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

template <typename S>
NamedArray tensor_to_array(const std::string& name, const Tensor<S>& t) {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
  NamedArray a;
  a.name = name;
  a.dtype = std::is_same_v<S, float> ? "f32" : "f64";
  a.shape = t.shape();
  a.bytes.resize(t.size() * sizeof(S));
  std::memcpy(a.bytes.data(), t.data(), a.bytes.size());
  return a;
}

template <typename S>
void array_to_tensor(const NamedArray& a, Tensor<S>& t) {
  const char* expect = std::is_same_v<S, float> ? "f32" : "f64";
  if (a.dtype != expect) {
    throw IntegrityError("checkpoint array " + a.name + " has dtype " + a.dtype + ", expected " + expect);
  }
  if (a.shape != t.shape()) {
    throw IntegrityError("checkpoint array " + a.name + " shape mismatch");
  }
  std::memcpy(t.data(), a.bytes.data(), a.bytes.size());
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json manifest;
  manifest["format"] = "mfck";
  manifest["config"] = ckpt.config;
  manifest["scalar_type"] = ckpt.scalar_type;
  manifest["step"] = ckpt.step;
  manifest["epoch"] = ckpt.epoch;
  manifest["batch_in_epoch"] = ckpt.batch_in_epoch;
  manifest["counters"] = ckpt.counters;
  manifest["byte_order"] = "little";

  std::uint64_t offset = 0;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& a : ckpt.arrays) {
    arrays.push_back({{"name", a.name}, {"dtype", a.dtype}, {"shape", a.shape}, {"offset", offset},
                      {"bytes", a.bytes.size()}});
    offset += a.bytes.size();
  }
  manifest["arrays"] = arrays;

  const std::string mtext = manifest.dump();
  std::vector<unsigned char> payload;
  payload.reserve(offset);
  for (const auto& a : ckpt.arrays) payload.insert(payload.end(), a.bytes.begin(), a.bytes.end());

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(mtext.data()), static_cast<uInt>(mtext.size()));
  if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));

  std::vector<unsigned char> header;
  header.insert(header.end(), kCheckpointMagic, kCheckpointMagic + 4);
  detail::append_le<std::uint32_t>(header, kCheckpointVersion);
  detail::append_le<std::uint64_t>(header, mtext.size());
  detail::append_le<std::uint64_t>(header, payload.size());
  detail::append_le<std::uint32_t>(header, static_cast<std::uint32_t>(crc));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  if (!payload.empty()) {
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw IoError("short write while saving checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t header_size = 4 + 4 + 8 + 8 + 4;
  if (data.size() < header_size) throw IntegrityError("checkpoint truncated (no header): " + path);
  if (std::memcmp(data.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  const auto version = detail::read_le<std::uint32_t>(data.data() + 4);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kCheckpointVersion) + "): " + path);
  }
  const auto mlen = detail::read_le<std::uint64_t>(data.data() + 8);
  const auto plen = detail::read_le<std::uint64_t>(data.data() + 16);
  const auto stored_crc = detail::read_le<std::uint32_t>(data.data() + 24);
  if (data.size() != header_size + mlen + plen) {
    throw IntegrityError("checkpoint truncated or padded: " + path);
  }
  const unsigned char* mptr = data.data() + header_size;
  const unsigned char* pptr = mptr + mlen;

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, mptr, static_cast<uInt>(mlen));
  if (plen > 0) crc = crc32(crc, pptr, static_cast<uInt>(plen));
  if (static_cast<std::uint32_t>(crc) != stored_crc) {
    throw IntegrityError("checkpoint checksum mismatch: " + path);
  }

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mptr, mptr + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint manifest unreadable: " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.config = manifest.at("config");
  ckpt.scalar_type = manifest.at("scalar_type").get<std::string>();
  ckpt.step = manifest.at("step").get<std::int64_t>();
  ckpt.epoch = manifest.at("epoch").get<int>();
  ckpt.batch_in_epoch = manifest.at("batch_in_epoch").get<int>();
  ckpt.counters = manifest.at("counters");
  for (const auto& a : manifest.at("arrays")) {
    NamedArray arr;
    arr.name = a.at("name").get<std::string>();
    arr.dtype = a.at("dtype").get<std::string>();
    arr.shape = a.at("shape").get<std::vector<int>>();
    const auto offset = a.at("offset").get<std::uint64_t>();
    const auto nbytes = a.at("bytes").get<std::uint64_t>();
    if (offset + nbytes > plen) throw IntegrityError("checkpoint array out of bounds: " + arr.name);
    arr.bytes.assign(pptr + offset, pptr + offset + nbytes);
    ckpt.arrays.push_back(std::move(arr));
  }
  return ckpt;
}

}  // namespace misfit
