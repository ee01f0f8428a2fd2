#include "ov2vss/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace ov::inline OV2VSS_ABI {

namespace {

constexpr char kMagic[7] = {'O', 'V', '2', 'V', 'S', 'S', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  if (at + 4 > in.size()) throw IoError("checkpoint is truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[at + std::size_t(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointMeta& meta, const ParameterStore& store) {
  nlohmann::ordered_json j;
  j["format"] = "ov2vss-checkpoint";
  j["iteration"] = meta.iteration;
  j["aux_classes"] = meta.aux_classes;
  j["regions"] = meta.regions;
  j["vocabulary"] = meta.vocabulary;
  j["seen"] = meta.seen;
  j["unseen"] = meta.unseen;
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : settings_to_key_values(meta.settings)) settings[k] = v;
  j["settings"] = settings;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& p : store.all()) {
    params.push_back({{"name", p.name}, {"rows", p.tensor.rows()}, {"cols", p.tensor.cols()}});
  }
  j["parameters"] = params;
  const std::string manifest = j.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, std::uint32_t(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.reserve(out.size() + store.total_size() * 4);
  for (const auto& p : store.all()) {
    for (Real x : p.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(float(x)));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not an OV2VSS1 checkpoint");
  }
  const std::uint32_t version = get_u32(bytes, 7);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t len = get_u32(bytes, 11);
  const std::size_t body = 15;
  if (body + len > bytes.size()) throw IoError("checkpoint manifest is truncated");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin() + body, bytes.begin() + std::ptrdiff_t(body + len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.meta.iteration = j.at("iteration").get<int>();
    ck.meta.aux_classes = j.at("aux_classes").get<int>();
    ck.meta.regions = j.at("regions").get<int>();
    ck.meta.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    ck.meta.seen = j.at("seen").get<std::vector<int>>();
    ck.meta.unseen = j.at("unseen").get<std::vector<int>>();
    KeyValues kv;
    for (const auto& [k, v] : j.at("settings").items()) kv[k] = v.get<std::string>();
    apply_settings(ck.meta.settings, kv);

    std::size_t at = body + len;
    for (const auto& p : j.at("parameters")) {
      const int rows = p.at("rows").get<int>();
      const int cols = p.at("cols").get<int>();
      const std::size_t n = std::size_t(rows) * std::size_t(cols);
      if (at + n * 4 > bytes.size()) throw IoError("checkpoint parameter data is truncated");
      std::vector<Real> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = Real(std::bit_cast<float>(get_u32(bytes, at + i * 4)));
      }
      at += n * 4;
      ck.params.push_back({p.at("name").get<std::string>(), Tensor::from(std::move(values), rows, cols)});
    }
    if (at != bytes.size()) throw IoError("checkpoint has trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest is malformed: ") + e.what());
  }
  return ck;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const ParameterStore& store) {
  const auto bytes = serialize_checkpoint(meta, store);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::unique_ptr<Ov2VssModel> model_from_checkpoint(const Checkpoint& ckpt) {
  Settings s = ckpt.meta.settings;
  s.model.encoders.weights.clear();  // values come from the checkpoint itself
  auto model = std::make_unique<Ov2VssModel>(s, ckpt.meta.aux_classes, ckpt.meta.regions);
  model->load_values(ckpt.params);
  return model;
}

}  // namespace ov::inline OV2VSS_ABI
