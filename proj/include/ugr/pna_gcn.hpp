#ifndef UGR_PNA_GCN_HPP
#define UGR_PNA_GCN_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ugr/neighbors.hpp"
#include "ugr/tensor.hpp"

namespace ugr {

struct GnnConfig {
  int in_dim = 3;
  int hidden = 32;
  int classes = 2;
};

struct FocalLossConfig {
  float gamma = 2.0f;  // focusing exponent
  float alpha = 1.0f;  // class balance

  void validate() const {
    if (gamma < 0.0f) throw Error(ErrorCode::invalid_argument, "focal loss: gamma must be >= 0");
    if (alpha <= 0.0f) throw Error(ErrorCode::invalid_argument, "focal loss: alpha must be > 0");
  }
};

/// Two PNA blocks (mean/min/max/std aggregators x identity/amplification/
/// attenuation scalers) followed by one GCN output layer.
class GnnModel {
 public:
  GnnModel(const GnnConfig& cfg, float delta, uint64_t seed);

  const GnnConfig& config() const { return cfg_; }
  float delta() const { return delta_; }
  uint64_t init_seed() const { return init_seed_; }
  std::vector<Tensor> parameters() const { return {w1_, b1_, w2_, b2_, wg_, bg_}; }

  void load_params(const std::vector<float>& payload);

  Tensor w1_, b1_;  // [12*in, hidden]
  Tensor w2_, b2_;  // [12*hidden, hidden]
  Tensor wg_, bg_;  // [hidden, classes]

 private:
  GnnConfig cfg_;
  float delta_;
  uint64_t init_seed_;
};

// Mean of log(d+1) over the non-imported nodes' in-degrees (self-loop floor).
float delta_from_graph(const RefinementGraph& g);

// Weighted multi-aggregator message passing over incoming edges. Isolated
// nodes fall back to a self-loop. Output [N, 12F]: scaler-major blocks
// (identity, amplification, attenuation) x (mean, min, max, std).
Tensor pna_aggregate(const Tensor& x, const std::vector<GraphEdge>& edges, int64_t n_nodes, float delta);

// Symmetric-normalized propagation with identity self-loops:
// out = D^-1/2 (A + I) D^-1/2 x, D the row sums of (A + I).
Tensor gcn_propagate(const Tensor& x, const std::vector<GraphEdge>& edges, int64_t n_nodes);

// Mean over masked nodes of -alpha (1 - p_t)^gamma ln p_t.
Tensor focal_loss(const Tensor& logits, const std::vector<int8_t>& labels,
                  const std::vector<uint8_t>& mask, const FocalLossConfig& cfg);

struct GnnForwardResult {
  Tensor logits;  // [N_test, M] pre-softmax scores for the graph's own nodes
  Tensor probs;   // softmax of logits
  std::vector<GraphEdge> final_dynamic_edges;  // working-graph indices
  int64_t test_rows = 0;
};

/// Full forward: block1 -> (rewire) -> block2 -> (rewire) -> GCN -> softmax.
/// `graph` must already carry its static augmentation (random16 edges or the
/// initial intra/inter wiring). Imported pool nodes sit after all test rows;
/// their hidden features come from no-grad runs over their home graphs.
GnnForwardResult gnn_forward(const GnnModel& model, const RefinementGraph& graph,
                             const NeighborConfig& cfg, const TrainGraphBank* bank);

std::string gnn_header_json(const GnnModel& model, const NeighborConfig& ncfg, uint64_t seed);
void save_gnn(const std::filesystem::path& p, const GnnModel& model, const NeighborConfig& ncfg,
              uint64_t seed);
struct LoadedGnn {
  GnnModel model;
  NeighborConfig ncfg;
};
LoadedGnn load_gnn(const std::filesystem::path& p);

}  // namespace ugr

#endif
