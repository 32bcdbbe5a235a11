#ifndef UGR_VOLUME_HPP
#define UGR_VOLUME_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ugr/error.hpp"

namespace ugr {

/// 3D intensity grid in [0,1] with an optional {0,1} label grid.
struct Volume {
  std::string id;
  int64_t depth = 0, height = 0, width = 0;  // D, H, W
  std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f};
  std::vector<float> intensities;  // D*H*W row-major (k, j, i)
  std::vector<uint8_t> labels;     // empty, or D*H*W in {0,1}

  int64_t voxel_count() const { return depth * height * width; }
  bool has_labels() const { return !labels.empty(); }

  int64_t index(int64_t k, int64_t j, int64_t i) const { return (k * height + j) * width + i; }
  float at(int64_t k, int64_t j, int64_t i) const { return intensities[index(k, j, i)]; }
  uint8_t label_at(int64_t k, int64_t j, int64_t i) const { return labels[index(k, j, i)]; }

  void validate() const;
};

/// Binary voxel grid (predictions, masks).
struct BinaryVolume {
  int64_t depth = 0, height = 0, width = 0;
  std::vector<uint8_t> values;

  static BinaryVolume zeros(int64_t d, int64_t h, int64_t w) {
    return BinaryVolume{d, h, w, std::vector<uint8_t>(static_cast<size_t>(d * h * w), 0)};
  }
  int64_t index(int64_t k, int64_t j, int64_t i) const { return (k * height + j) * width + i; }
  uint8_t at(int64_t k, int64_t j, int64_t i) const { return values[index(k, j, i)]; }
  int64_t count() const;
};

// Sidecar JSON (dims, spacing, id, label path) + raw little-endian f32 payload.
void save_volume(const std::filesystem::path& json_path, const Volume& v);
Volume load_volume(const std::filesystem::path& json_path);

void save_mask(const std::filesystem::path& json_path, const BinaryVolume& m, const std::string& id);
BinaryVolume load_mask(const std::filesystem::path& json_path);

}  // namespace ugr

#endif
