#ifndef UGR_UNCERTAINTY_HPP
#define UGR_UNCERTAINTY_HPP

#include <cstdint>
#include <vector>

#include "ugr/graph.hpp"
#include "ugr/segnet.hpp"
#include "ugr/volume.hpp"

namespace ugr {

/// T stochastic forward passes over one volume: probabilities [T][D*H*W*M].
struct ProbabilityStack {
  int64_t passes = 0;  // T
  int64_t depth = 0, height = 0, width = 0;
  int64_t classes = 0;  // M
  std::vector<float> probs;  // T*D*H*W*M, class index fastest

  int64_t voxels() const { return depth * height * width; }
  void validate() const;
};

/// Per-voxel expectation (simplex over M) and entropy in nats.
struct UncertaintyField {
  int64_t depth = 0, height = 0, width = 0;
  int64_t classes = 0;
  std::vector<float> expectation;  // D*H*W*M
  std::vector<float> entropy;      // D*H*W

  float e_fg(int64_t voxel) const { return expectation[voxel * classes + 1]; }
};

// Runs T dropout-active passes of the net over every slice. Pass t of slice k
// draws its masks from (seed, t, k); fully reproducible.
ProbabilityStack mcdo_stack(const SegNet& net, const Volume& vol, int64_t passes, uint64_t seed);

// E(x) = (1/T) sum_t P_t(x). T must be >= 2.
std::vector<float> mcdo_expectation(const ProbabilityStack& stack);

// U(x) = -sum_c E^c ln E^c, with 0 ln 0 = 0. Rejects negative inputs.
std::vector<float> entropy_field(const std::vector<float>& expectation, int64_t voxels, int64_t classes);

UncertaintyField uncertainty_from_stack(const ProbabilityStack& stack);

// Foreground decision at E_fg > 0.5.
BinaryVolume expectation_mask(const UncertaintyField& field);

/// Builds the 6-neighborhood refinement graph over the selected nodes.
/// Nodes keep (k,j,i) scan order; each node gets an incoming edge from each of
/// its 6-neighbors present in the node set.
RefinementGraph build_graph(const UncertaintyField& field, const Volume& vol,
                            const NodeSelection& selection, const EdgeWeightConfig& cfg);

}  // namespace ugr

#endif
