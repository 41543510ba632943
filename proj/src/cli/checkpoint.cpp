#include "gra/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "gra/error.hpp"

namespace gra::ckpt {

namespace {

constexpr std::size_t kHeaderBytes = 4 + 4 + 8;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

nlohmann::json array_table(const std::vector<ArrayEntry>& arrays) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : arrays) {
    out.push_back({{"name", a.name}, {"offset", a.offset}, {"length", a.length}, {"shape", a.shape}});
  }
  return out;
}

void check_table(const std::vector<ArrayEntry>& arrays, std::uint64_t payload_bytes) {
  std::vector<const ArrayEntry*> sorted;
  for (const auto& a : arrays) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(), [](auto* x, auto* y) { return x->offset < y->offset; });
  std::uint64_t cursor = 0;
  std::map<std::string, int> names;
  for (const auto* a : sorted) {
    if (++names[a->name] > 1) fail(ErrorKind::Format, "checkpoint: duplicate array '" + a->name + "'");
    if (a->offset % 4 != 0 || a->length % 4 != 0) fail(ErrorKind::Format, "checkpoint: misaligned array '" + a->name + "'");
    if (a->offset < cursor) fail(ErrorKind::Format, "checkpoint: overlapping array '" + a->name + "'");
    if (a->offset > payload_bytes || a->length > payload_bytes - a->offset) {
      fail(ErrorKind::Format, "checkpoint: array '" + a->name + "' exceeds payload");
    }
    if (a->length != 4 * nn::Tensor::volume(a->shape)) {
      fail(ErrorKind::Format, "checkpoint: array '" + a->name + "' length does not match its shape");
    }
    if (a->offset != cursor) fail(ErrorKind::Format, "checkpoint: gap before array '" + a->name + "'");
    cursor = a->offset + a->length;
  }
  if (cursor != payload_bytes) fail(ErrorKind::Format, "checkpoint: unreferenced payload bytes");
}

void append_array(Container& c, const std::string& name, const nn::Tensor& t) {
  ArrayEntry e;
  e.name = name;
  e.offset = 4 * static_cast<std::uint64_t>(c.payload.size());
  e.length = 4 * static_cast<std::uint64_t>(t.size());
  e.shape = t.shape;
  for (double v : t.data) c.payload.push_back(static_cast<float>(v));
  c.arrays.push_back(std::move(e));
}

nlohmann::json pack_stack(Container& c, const std::string& prefix, const nn::LayerStack& stack) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& layer = stack.layers()[i];
    layers.push_back(to_json(layer.spec));
    if (!layer.spec.has_params()) continue;
    append_array(c, prefix + "." + std::to_string(i) + ".weight", layer.weight);
    append_array(c, prefix + "." + std::to_string(i) + ".bias", layer.bias);
  }
  std::vector<bool> mask = stack.freeze_mask();
  return {{"input_shape", stack.input_shape()}, {"layers", std::move(layers)}, {"freeze_mask", mask}};
}

nn::LayerStack unpack_stack(const Container& c, const std::map<std::string, const ArrayEntry*>& index,
                            const std::string& prefix, const nlohmann::json& j) {
  std::vector<nn::LayerSpec> specs;
  for (const auto& js : j.at("layers")) specs.push_back(layer_spec_from_json(js));
  nn::LayerStack stack(specs, j.at("input_shape").get<std::vector<std::size_t>>(), 0);
  auto fill = [&](const std::string& name, nn::Tensor& t) {
    const auto it = index.find(name);
    if (it == index.end()) fail(ErrorKind::Format, "checkpoint: missing array '" + name + "'");
    const ArrayEntry& e = *it->second;
    if (e.shape != t.shape) fail(ErrorKind::Format, "checkpoint: array '" + name + "' has the wrong shape");
    const std::size_t first = e.offset / 4;
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = static_cast<double>(c.payload[first + k]);
  };
  for (std::size_t i = 0; i < stack.size(); ++i) {
    auto& layer = stack.layers()[i];
    if (!layer.spec.has_params()) continue;
    fill(prefix + "." + std::to_string(i) + ".weight", layer.weight);
    fill(prefix + "." + std::to_string(i) + ".bias", layer.bias);
  }
  stack.set_freeze_mask(j.at("freeze_mask").get<std::vector<bool>>());
  return stack;
}

std::size_t array_count(const nn::LayerStack& stack) {
  std::size_t n = 0;
  for (const auto& l : stack.layers()) n += l.spec.has_params() ? 2 : 0;
  return n;
}

void expect_kind(const Container& c, const std::string& want) {
  const auto got = kind(c);
  if (got != want) fail(ErrorKind::Format, "checkpoint: expected kind '" + want + "', found '" + got + "'");
}

}  // namespace

nlohmann::json to_json(const nn::LayerSpec& s) {
  nlohmann::json j = {{"kind", nn::to_string(s.kind)}};
  switch (s.kind) {
    case nn::LayerKind::Conv1d:
      j["units"] = s.units;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case nn::LayerKind::Dense:
    case nn::LayerKind::SigmoidDense:
      j["units"] = s.units;
      break;
    case nn::LayerKind::MaxPool1d:
      j["window"] = s.window;
      break;
    case nn::LayerKind::Dropout:
      j["rate"] = s.rate;
      break;
    case nn::LayerKind::ReLU:
    case nn::LayerKind::Flatten:
      break;
  }
  return j;
}

nn::LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  const auto k = nn::layer_kind_from_string(j.at("kind").get<std::string>());
  switch (k) {
    case nn::LayerKind::Conv1d:
      return nn::LayerSpec::conv1d(j.at("units").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                                   j.at("stride").get<std::size_t>());
    case nn::LayerKind::Dense:
      return nn::LayerSpec::dense(j.at("units").get<std::size_t>());
    case nn::LayerKind::SigmoidDense:
      return nn::LayerSpec::sigmoid_dense(j.at("units").get<std::size_t>());
    case nn::LayerKind::MaxPool1d:
      return nn::LayerSpec::maxpool1d(j.at("window").get<std::size_t>());
    case nn::LayerKind::Dropout:
      return nn::LayerSpec::dropout(j.at("rate").get<double>());
    case nn::LayerKind::ReLU:
      return nn::LayerSpec::relu();
    case nn::LayerKind::Flatten:
      return nn::LayerSpec::flatten();
  }
  fail(ErrorKind::Format, "checkpoint: unknown layer kind");
}

std::vector<std::uint8_t> encode(const Container& c) {
  nlohmann::json manifest = c.manifest;
  manifest["arrays"] = array_table(c.arrays);
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + text.size() + 4 * c.payload.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, c.version);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (float f : c.payload) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Container decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    fail(ErrorKind::Format, "checkpoint: bad magic or truncated header");
  }
  Container c;
  c.version = get_le<std::uint32_t>(bytes.data() + 4);
  if (c.version != kFormatVersion) {
    fail(ErrorKind::Format, "checkpoint: unsupported format version " + std::to_string(c.version) + " (expected " +
                                std::to_string(kFormatVersion) + ")");
  }
  const auto mlen = get_le<std::uint64_t>(bytes.data() + 8);
  if (mlen > bytes.size() - kHeaderBytes) fail(ErrorKind::Format, "checkpoint: manifest exceeds file");
  const std::uint64_t payload_bytes = bytes.size() - kHeaderBytes - mlen;
  if (payload_bytes % 4 != 0) fail(ErrorKind::Format, "checkpoint: payload is not a whole number of floats");
  try {
    const auto* m = reinterpret_cast<const char*>(bytes.data() + kHeaderBytes);
    c.manifest = nlohmann::json::parse(m, m + mlen);
    for (const auto& a : c.manifest.at("arrays")) {
      ArrayEntry e;
      e.name = a.at("name").get<std::string>();
      e.offset = a.at("offset").get<std::uint64_t>();
      e.length = a.at("length").get<std::uint64_t>();
      e.shape = a.at("shape").get<std::vector<std::size_t>>();
      c.arrays.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint: bad manifest: ") + e.what());
  }
  c.manifest.erase("arrays");
  check_table(c.arrays, payload_bytes);
  c.payload.resize(payload_bytes / 4);
  const std::uint8_t* p = bytes.data() + kHeaderBytes + mlen;
  for (std::size_t i = 0; i < c.payload.size(); ++i) c.payload[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

std::string kind(const Container& c) {
  if (!c.manifest.contains("kind") || !c.manifest["kind"].is_string()) fail(ErrorKind::Format, "checkpoint: no kind");
  return c.manifest["kind"].get<std::string>();
}

Container pack(const model::GraModel& m) {
  Container c;
  c.manifest["kind"] = "gra";
  c.manifest["schema"] = prep::to_json(m.schema);
  c.manifest["scaler"] = prep::to_json(m.scaler);
  c.manifest["threshold"] = m.threshold;
  auto dx = pack_stack(c, "dx_ae", m.dx_ae.net);
  dx["columns"] = m.dx_ae.columns;
  auto med = pack_stack(c, "med_ae", m.med_ae.net);
  med["columns"] = m.med_ae.columns;
  c.manifest["dx_ae"] = std::move(dx);
  c.manifest["med_ae"] = std::move(med);
  c.manifest["cnn"] = pack_stack(c, "cnn", m.cnn);
  return c;
}

model::GraModel unpack_gra(const Container& c) {
  expect_kind(c, "gra");
  std::map<std::string, const ArrayEntry*> index;
  for (const auto& a : c.arrays) index[a.name] = &a;
  try {
    model::GraModel m;
    m.schema = prep::schema_from_json(c.manifest.at("schema"));
    m.scaler = prep::scaler_from_json(c.manifest.at("scaler"));
    m.threshold = c.manifest.at("threshold").get<double>();
    const auto& jd = c.manifest.at("dx_ae");
    const auto& jm = c.manifest.at("med_ae");
    m.dx_ae.net = unpack_stack(c, index, "dx_ae", jd);
    m.dx_ae.columns = jd.at("columns").get<std::vector<std::string>>();
    m.med_ae.net = unpack_stack(c, index, "med_ae", jm);
    m.med_ae.columns = jm.at("columns").get<std::vector<std::string>>();
    m.cnn = unpack_stack(c, index, "cnn", c.manifest.at("cnn"));
    const std::size_t expected =
        array_count(m.dx_ae.net) + array_count(m.med_ae.net) + array_count(m.cnn);
    if (expected != c.arrays.size()) fail(ErrorKind::Format, "checkpoint: unexpected extra arrays");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint: bad manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) throw;
    fail(ErrorKind::Format, std::string("checkpoint: ") + e.what());
  }
}

Container pack(const GbtCheckpoint& g) {
  Container c;
  c.manifest["kind"] = "gbt";
  c.manifest["schema"] = prep::to_json(g.schema);
  c.manifest["scaler"] = prep::to_json(g.scaler);
  c.manifest["model"] = baseline::to_json(g.model);
  return c;
}

GbtCheckpoint unpack_gbt(const Container& c) {
  expect_kind(c, "gbt");
  if (!c.arrays.empty()) fail(ErrorKind::Format, "checkpoint: gbt checkpoints carry no arrays");
  try {
    GbtCheckpoint g;
    g.schema = prep::schema_from_json(c.manifest.at("schema"));
    g.scaler = prep::scaler_from_json(c.manifest.at("scaler"));
    g.model = baseline::gbt_from_json(c.manifest.at("model"));
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint: bad manifest: ") + e.what());
  }
}

void save(const std::filesystem::path& path, const model::GraModel& model) { write_bytes(path, encode(pack(model))); }
void save(const std::filesystem::path& path, const GbtCheckpoint& gbt) { write_bytes(path, encode(pack(gbt))); }

model::GraModel load_gra(const std::filesystem::path& path) { return unpack_gra(decode(read_bytes(path))); }
GbtCheckpoint load_gbt(const std::filesystem::path& path) { return unpack_gbt(decode(read_bytes(path))); }

}  // namespace gra::ckpt
