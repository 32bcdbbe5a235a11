#ifndef UGR_IO_HPP
#define UGR_IO_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ugr/tensor.hpp"

namespace ugr {

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);
std::string hash_hex(uint64_t h);
uint64_t hash_file(const std::filesystem::path& p);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& p);

// write-temp-then-rename so readers never observe partial files
void atomic_write(const std::filesystem::path& p, const void* data, size_t len);
void atomic_write(const std::filesystem::path& p, const std::string& text);
void atomic_write(const std::filesystem::path& p, const std::vector<uint8_t>& bytes);

/// Provenance sidecar written next to every artifact.
struct Manifest {
  std::string subcommand;
  std::string config_hash;
  uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // relative path -> content hash
  std::map<std::string, std::string> outputs;  // relative path -> content hash

  std::string to_json_text() const;
  static Manifest from_json_text(const std::string& text);
};

void write_manifest(const std::filesystem::path& artifact_path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& artifact_path);

/// Checkpoint container: magic + JSON header + raw little-endian f32 payload.
struct Checkpoint {
  std::string header_json;           // architecture config, seed, epoch
  std::vector<float> payload;
};

void save_checkpoint(const std::filesystem::path& p, const std::string& header_json,
                     const std::vector<Tensor>& params);
Checkpoint load_checkpoint(const std::filesystem::path& p);
std::vector<uint8_t> checkpoint_bytes(const std::string& header_json, const std::vector<Tensor>& params);

// Hash of a parameter list's raw values; used for "network untouched" checks.
uint64_t params_hash(const std::vector<Tensor>& params);

// 8-bit RGB, row-major, deterministic encoding.
void write_rgb_png(const std::filesystem::path& p, int64_t width, int64_t height,
                   const std::vector<uint8_t>& rgb);

}  // namespace ugr

#endif
