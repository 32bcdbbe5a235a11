#ifndef UGR_SEGNET_HPP
#define UGR_SEGNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ugr/adam.hpp"
#include "ugr/rng.hpp"
#include "ugr/tensor.hpp"
#include "ugr/volume.hpp"

namespace ugr {

struct SegNetConfig {
  int levels = 3;          // encoder/decoder depth (number of poolings)
  int base_channels = 8;   // width at the first level, doubled per level
  float dropout_p = 0.3f;  // one dropout layer per block; MCDO needs p > 0
  int classes = 2;
  int in_channels = 1;
};

/// One axial slice: intensities in [0,1], optional binary label grid.
struct SliceBatch {
  Tensor intensities;  // [1,1,H,W]
  Tensor labels;       // [H,W] in {0,1}; undefined when absent

  static SliceBatch from_volume(const Volume& v, int64_t slice_k);
};

/// Tiny 2D U-Net. Dropout after every encoder/decoder block keeps the
/// network stochastic under MCDO sampling.
class SegNet {
 public:
  SegNet(const SegNetConfig& cfg, uint64_t seed);

  // Per-pixel class probabilities [1,M,H,W]. With stochastic=true the
  // dropout masks are a pure function of `seed`.
  Tensor forward(const Tensor& slice, bool stochastic, uint64_t seed) const;

  const SegNetConfig& config() const { return cfg_; }
  std::vector<Tensor> parameters() const;
  int64_t param_count() const;
  uint64_t init_seed() const { return init_seed_; }

  void copy_params_from(const SegNet& other);
  void load_params(const std::vector<float>& payload);

 private:
  struct Conv {
    Tensor w, b;
  };
  Conv make_conv(int64_t out_c, int64_t in_c, int64_t k, Rng& rng);

  SegNetConfig cfg_;
  uint64_t init_seed_;
  std::vector<Conv> enc_a_, enc_b_;  // two 3x3 convs per encoder level
  Conv bott_a_, bott_b_;
  std::vector<Conv> up_, dec_a_, dec_b_;  // 1x1 channel-halving + two 3x3 convs
  Conv head_;                             // 1x1 to class logits
};

// Soft dice on the foreground channel: 1 - (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps).
Tensor dice_loss(const Tensor& pred_probs, const Tensor& target);

/// Owns the Adam state across steps; one instance per training run.
class SegNetTrainer {
 public:
  SegNetTrainer(SegNet& net, uint64_t seed);

  // One Adam update on the dice loss; returns the pre-update loss.
  float train_step(const SliceBatch& batch, float lr);

  int64_t steps_taken() const { return step_; }

 private:
  SegNet& net_;
  Adam adam_;
  uint64_t seed_;
  int64_t step_ = 0;
};

// Whole-volume deterministic segmentation (argmax of non-stochastic forward).
BinaryVolume segment_volume(const SegNet& net, const Volume& vol);

std::string segnet_header_json(const SegNet& net, uint64_t seed, int64_t epoch);
void save_segnet(const std::filesystem::path& p, const SegNet& net, uint64_t seed, int64_t epoch);
SegNet load_segnet(const std::filesystem::path& p);

}  // namespace ugr

#endif
