#ifndef UGR_CONFIG_HPP
#define UGR_CONFIG_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "ugr/pipelines.hpp"

namespace ugr {

/// Whole-run configuration. JSON on disk; unknown keys are rejected so typos
/// fail loudly. Hash of the canonical dump names the run directory.
struct RunConfig {
  SynthConfig synth;
  SegNetConfig segnet;
  UnetTrainConfig unet_train;
  ExperimentConfig experiment;                 // shared row template
  std::vector<std::string> matrix_experiments;  // names for the matrix subcommand

  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "runs";
  uint64_t seed = 1;

  void validate() const;
  std::string canonical_json() const;   // sorted keys, stable float formatting
  std::string config_hash() const;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& p);
  void save(const std::filesystem::path& p) const;
};

}  // namespace ugr

#endif
