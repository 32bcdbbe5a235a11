#include "ugr/io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ugr/rng.hpp"

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace ugr {

using nlohmann::json;

uint64_t fnv1a64(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

uint64_t hash_file(const std::filesystem::path& p) {
  auto bytes = read_file_bytes(p);
  return fnv1a64(bytes.data(), bytes.size());
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + p.string());
  f.seekg(0, std::ios::end);
  const std::streamoff len = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(len));
  if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!f) throw Error(ErrorCode::io_error, "short read on " + p.string());
  return bytes;
}

void atomic_write(const std::filesystem::path& p, const void* data, size_t len) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::io_error, "cannot open " + tmp.string() + " for writing");
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!f) throw Error(ErrorCode::io_error, "short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

void atomic_write(const std::filesystem::path& p, const std::string& text) {
  atomic_write(p, text.data(), text.size());
}

void atomic_write(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
  atomic_write(p, bytes.data(), bytes.size());
}

// ---- manifest ----------------------------------------------------------

std::string Manifest::to_json_text() const {
  json j;
  j["schema"] = "ugr.manifest.v1";
  j["subcommand"] = subcommand;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("manifest: ") + e.what(), static_cast<int64_t>(e.byte));
  }
  Manifest m;
  m.subcommand = j.value("subcommand", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", uint64_t{0});
  if (j.contains("inputs")) m.inputs = j["inputs"].get<std::map<std::string, std::string>>();
  if (j.contains("outputs")) m.outputs = j["outputs"].get<std::map<std::string, std::string>>();
  return m;
}

static std::filesystem::path manifest_path_for(const std::filesystem::path& artifact) {
  return artifact.string() + ".manifest.json";
}

void write_manifest(const std::filesystem::path& artifact_path, const Manifest& m) {
  atomic_write(manifest_path_for(artifact_path), m.to_json_text());
}

Manifest read_manifest(const std::filesystem::path& artifact_path) {
  const auto p = manifest_path_for(artifact_path);
  if (!std::filesystem::exists(p))
    throw Error(ErrorCode::missing_artifact, "no manifest at " + p.string());
  auto bytes = read_file_bytes(p);
  return Manifest::from_json_text(std::string(bytes.begin(), bytes.end()));
}

// ---- checkpoints ---------------------------------------------------------

namespace {
constexpr char kCkptMagic[4] = {'U', 'G', 'R', 'C'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.insert(out.end(), reinterpret_cast<uint8_t*>(&v), reinterpret_cast<uint8_t*>(&v) + 4);
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  out.insert(out.end(), reinterpret_cast<uint8_t*>(&v), reinterpret_cast<uint8_t*>(&v) + 8);
}
}  // namespace

std::vector<uint8_t> checkpoint_bytes(const std::string& header_json, const std::vector<Tensor>& params) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(header_json.size()));
  out.insert(out.end(), header_json.begin(), header_json.end());
  uint64_t count = 0;
  for (const Tensor& t : params) count += static_cast<uint64_t>(t.numel());
  put_u64(out, count);
  for (const Tensor& t : params) {
    const auto* p = reinterpret_cast<const uint8_t*>(t.data());
    out.insert(out.end(), p, p + sizeof(float) * t.numel());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& p, const std::string& header_json,
                     const std::vector<Tensor>& params) {
  atomic_write(p, checkpoint_bytes(header_json, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& p) {
  auto bytes = read_file_bytes(p);
  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    if (off + n > bytes.size())
      throw Error(ErrorCode::parse_error, std::string("checkpoint truncated reading ") + what,
                  static_cast<int64_t>(off));
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    throw Error(ErrorCode::parse_error, "bad checkpoint magic", 0);
  off = 4;
  need(4, "version");
  uint32_t version;
  std::memcpy(&version, bytes.data() + off, 4);
  off += 4;
  if (version != 1)
    throw Error(ErrorCode::parse_error, "unsupported checkpoint version " + std::to_string(version), 4);
  need(4, "header length");
  uint32_t hlen;
  std::memcpy(&hlen, bytes.data() + off, 4);
  off += 4;
  need(hlen, "header");
  Checkpoint ck;
  ck.header_json.assign(bytes.begin() + static_cast<int64_t>(off), bytes.begin() + static_cast<int64_t>(off + hlen));
  off += hlen;
  need(8, "payload count");
  uint64_t count;
  std::memcpy(&count, bytes.data() + off, 8);
  off += 8;
  need(count * sizeof(float), "payload");
  ck.payload.resize(count);
  std::memcpy(ck.payload.data(), bytes.data() + off, count * sizeof(float));
  return ck;
}

uint64_t params_hash(const std::vector<Tensor>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor& t : params) {
    const uint64_t th = fnv1a64(t.data(), sizeof(float) * t.numel());
    h = key_combine(h, th);
  }
  return h;
}

// ---- png -----------------------------------------------------------------

namespace {
void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
  put_be32(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc =
      static_cast<uint32_t>(crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_be32(out, crc);
}
}  // namespace

void write_rgb_png(const std::filesystem::path& p, int64_t width, int64_t height,
                   const std::vector<uint8_t>& rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<size_t>(width * height * 3))
    throw Error(ErrorCode::invalid_argument, "write_rgb_png: bad dimensions");

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height * (1 + width * 3)));
  for (int64_t y = 0; y < height; ++y) {
    raw.push_back(0);  // filter type none
    const uint8_t* row = rgb.data() + y * width * 3;
    raw.insert(raw.end(), row, row + width * 3);
  }
  uLongf zcap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> z(zcap);
  if (compress2(z.data(), &zcap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error(ErrorCode::io_error, "zlib compression failed");
  z.resize(zcap);

  std::vector<uint8_t> out;
  const uint8_t sig[8] = {0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a};
  out.insert(out.end(), sig, sig + 8);
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  atomic_write(p, out);
}

}  // namespace ugr
