#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gra/baseline.hpp"
#include "gra/model.hpp"

namespace gra::ckpt {

// File layout: "GRA1" | u32 version | u64 manifest bytes | manifest JSON |
// payload of little-endian f32 arrays. All integers little-endian.
inline constexpr char kMagic[4] = {'G', 'R', 'A', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct ArrayEntry {
  std::string name;
  std::uint64_t offset = 0;  // bytes into the payload
  std::uint64_t length = 0;  // bytes
  std::vector<std::size_t> shape;
};

// Manifest "arrays" entries are rebuilt from `arrays` on encode.
struct Container {
  std::uint32_t version = kFormatVersion;
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<ArrayEntry> arrays;
  std::vector<float> payload;
};

std::vector<std::uint8_t> encode(const Container& c);
// Throws Error(Format) for bad magic, truncation, unsupported version,
// invalid JSON or array-table violations (overlap, out of range, misaligned,
// length not matching shape, unreferenced payload bytes).
Container decode(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

Container pack(const model::GraModel& model);
model::GraModel unpack_gra(const Container& c);

// GBT checkpoints keep the trees in the manifest along with the schema and
// scaler used to prepare rows; the payload is empty.
struct GbtCheckpoint {
  baseline::GbtModel model;
  prep::FeatureSchema schema;
  prep::ScalerParams scaler;
  bool operator==(const GbtCheckpoint&) const = default;
};
Container pack(const GbtCheckpoint& gbt);
GbtCheckpoint unpack_gbt(const Container& c);

std::string kind(const Container& c);

void save(const std::filesystem::path& path, const model::GraModel& model);
void save(const std::filesystem::path& path, const GbtCheckpoint& gbt);
// Missing files raise Error(MissingArtifact); a kind mismatch raises Format.
model::GraModel load_gra(const std::filesystem::path& path);
GbtCheckpoint load_gbt(const std::filesystem::path& path);

nlohmann::json to_json(const nn::LayerSpec& spec);
nn::LayerSpec layer_spec_from_json(const nlohmann::json& j);

}  // namespace gra::ckpt
