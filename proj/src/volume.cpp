#include "ugr/volume.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "ugr/io.hpp"

namespace ugr {

using nlohmann::json;

void Volume::validate() const {
  if (depth <= 0 || height <= 0 || width <= 0)
    throw Error(ErrorCode::invalid_argument, "volume " + id + ": non-positive dims");
  if (static_cast<int64_t>(intensities.size()) != voxel_count())
    throw Error(ErrorCode::shape_mismatch, "volume " + id + ": intensity size mismatch");
  for (float v : intensities)
    if (!std::isfinite(v))
      throw Error(ErrorCode::invalid_argument, "volume " + id + ": non-finite intensity");
  if (!labels.empty()) {
    if (static_cast<int64_t>(labels.size()) != voxel_count())
      throw Error(ErrorCode::shape_mismatch, "volume " + id + ": label size mismatch");
    for (uint8_t l : labels)
      if (l > 1) throw Error(ErrorCode::invalid_argument, "volume " + id + ": labels must be 0/1");
  }
}

int64_t BinaryVolume::count() const {
  int64_t n = 0;
  for (uint8_t v : values) n += v;
  return n;
}

namespace {
std::filesystem::path sibling(const std::filesystem::path& json_path, const std::string& suffix) {
  std::filesystem::path p = json_path;
  p.replace_extension();
  return p.string() + suffix;
}
}  // namespace

void save_volume(const std::filesystem::path& json_path, const Volume& v) {
  v.validate();
  const auto raw_path = sibling(json_path, ".raw");
  const auto label_path = sibling(json_path, ".labels.raw");

  json j;
  j["id"] = v.id;
  j["dims"] = {v.depth, v.height, v.width};
  j["spacing"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
  j["dtype"] = "f32le";
  j["payload"] = raw_path.filename().string();
  if (v.has_labels()) j["label_payload"] = label_path.filename().string();

  atomic_write(raw_path, v.intensities.data(), v.intensities.size() * sizeof(float));
  if (v.has_labels()) atomic_write(label_path, v.labels.data(), v.labels.size());
  atomic_write(json_path, j.dump(2) + "\n");
}

Volume load_volume(const std::filesystem::path& json_path) {
  auto bytes = read_file_bytes(json_path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "volume sidecar " + json_path.string() + ": " + e.what(),
                static_cast<int64_t>(e.byte));
  }
  Volume v;
  v.id = j.at("id").get<std::string>();
  auto dims = j.at("dims").get<std::vector<int64_t>>();
  if (dims.size() != 3) throw Error(ErrorCode::parse_error, "volume sidecar: dims must have 3 entries");
  v.depth = dims[0];
  v.height = dims[1];
  v.width = dims[2];
  if (j.contains("spacing")) {
    auto sp = j["spacing"].get<std::vector<float>>();
    if (sp.size() == 3) v.spacing = {sp[0], sp[1], sp[2]};
  }

  const auto dir = json_path.parent_path();
  const auto raw = read_file_bytes(dir / j.at("payload").get<std::string>());
  if (raw.size() != static_cast<size_t>(v.voxel_count()) * sizeof(float))
    throw Error(ErrorCode::parse_error,
                "volume payload: expected " + std::to_string(v.voxel_count() * sizeof(float)) + " bytes, got " +
                    std::to_string(raw.size()),
                static_cast<int64_t>(raw.size()));
  v.intensities.resize(static_cast<size_t>(v.voxel_count()));
  std::memcpy(v.intensities.data(), raw.data(), raw.size());

  if (j.contains("label_payload")) {
    const auto lraw = read_file_bytes(dir / j["label_payload"].get<std::string>());
    if (lraw.size() != static_cast<size_t>(v.voxel_count()))
      throw Error(ErrorCode::parse_error, "volume labels: size mismatch", static_cast<int64_t>(lraw.size()));
    v.labels.assign(lraw.begin(), lraw.end());
  }
  v.validate();
  return v;
}

void save_mask(const std::filesystem::path& json_path, const BinaryVolume& m, const std::string& id) {
  const auto raw_path = sibling(json_path, ".raw");
  json j;
  j["id"] = id;
  j["dims"] = {m.depth, m.height, m.width};
  j["dtype"] = "u8";
  j["payload"] = raw_path.filename().string();
  atomic_write(raw_path, m.values.data(), m.values.size());
  atomic_write(json_path, j.dump(2) + "\n");
}

BinaryVolume load_mask(const std::filesystem::path& json_path) {
  auto bytes = read_file_bytes(json_path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "mask sidecar: " + std::string(e.what()), static_cast<int64_t>(e.byte));
  }
  auto dims = j.at("dims").get<std::vector<int64_t>>();
  BinaryVolume m;
  m.depth = dims[0];
  m.height = dims[1];
  m.width = dims[2];
  const auto raw = read_file_bytes(json_path.parent_path() / j.at("payload").get<std::string>());
  if (raw.size() != static_cast<size_t>(m.depth * m.height * m.width))
    throw Error(ErrorCode::parse_error, "mask payload size mismatch", static_cast<int64_t>(raw.size()));
  m.values.assign(raw.begin(), raw.end());
  return m;
}

}  // namespace ugr
