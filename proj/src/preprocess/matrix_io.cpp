#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gra/error.hpp"
#include "gra/preprocess.hpp"

namespace gra::prep {

static_assert(std::endian::native == std::endian::little, "float payloads assume a little-endian host");

namespace {

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

}  // namespace

void write_feature_matrix(const std::filesystem::path& stem, const FeatureMatrix& m) {
  std::vector<float> payload(m.values.size());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    payload[i] = static_cast<float>(m.values[i]);  // NaN stays NaN until imputed
  }
  std::vector<std::uint8_t> bits((m.missing.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < m.missing.size(); ++i) {
    if (m.missing[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  const nlohmann::json meta = {{"n_rows", m.n_rows},
                               {"n_cols", m.n_cols},
                               {"dtype", "float32-le"},
                               {"layout", "row-major"},
                               {"mask_bit_order", "lsb-first"},
                               {"column_names", m.schema.column_names()},
                               {"patient_ids", m.patient_ids},
                               {"schema", to_json(m.schema)}};
  const std::string text = meta.dump(1);
  spill(with_ext(stem, ".json"), text.data(), text.size());
  spill(with_ext(stem, ".bin"), payload.data(), payload.size() * sizeof(float));
  spill(with_ext(stem, ".mask"), bits.data(), bits.size());
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& stem) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(slurp(with_ext(stem, ".json")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("matrix header: ") + e.what());
  }
  FeatureMatrix m;
  m.schema = schema_from_json(meta.at("schema"));
  m.n_rows = meta.at("n_rows").get<std::size_t>();
  m.n_cols = meta.at("n_cols").get<std::size_t>();
  m.patient_ids = meta.at("patient_ids").get<std::vector<std::int64_t>>();
  if (m.n_cols != m.schema.n_columns() || m.patient_ids.size() != m.n_rows) {
    fail(ErrorKind::Format, "matrix header inconsistent with schema");
  }
  const std::string bin = slurp(with_ext(stem, ".bin"));
  const std::string mask = slurp(with_ext(stem, ".mask"));
  const std::size_t cells = m.n_rows * m.n_cols;
  if (bin.size() != cells * sizeof(float) || mask.size() != (cells + 7) / 8) {
    fail(ErrorKind::Format, "matrix payload size does not match header");
  }
  m.values.resize(cells);
  m.missing.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    float f;
    std::memcpy(&f, bin.data() + i * sizeof(float), sizeof f);
    m.missing[i] = (static_cast<std::uint8_t>(mask[i / 8]) >> (i % 8)) & 1u;
    m.values[i] = f;
  }
  return m;
}

}  // namespace gra::prep
