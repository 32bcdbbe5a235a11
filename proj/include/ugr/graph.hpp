#ifndef UGR_GRAPH_HPP
#define UGR_GRAPH_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ugr/error.hpp"
#include "ugr/volume.hpp"

namespace ugr {

enum class NodeRole : uint8_t { certain = 0, uncertain = 1 };
enum class EdgeKind : uint8_t { six = 0, random = 1, intra = 2, inter = 3 };

constexpr int8_t kUnlabeled = -1;

struct GraphNode {
  int32_t i = 0, j = 0, k = 0;    // voxel coordinate (column, row, slice)
  float e_fg = 0.0f;              // foreground expectation
  float u = 0.0f;                 // entropy (nats)
  float v = 0.0f;                 // intensity
  NodeRole role = NodeRole::certain;
  int8_t label = kUnlabeled;      // 0, 1, or kUnlabeled
  uint8_t imported = 0;           // 1 for nodes pulled in from a train graph
};

struct GraphEdge {
  uint32_t src = 0, dst = 0;  // messages flow src -> dst
  float w = 1.0f;
  EdgeKind kind = EdgeKind::six;
};

/// Kernel bandwidths and mixing weights for edge weights.
struct EdgeWeightConfig {
  float sigma1 = 1.0f;      // intensity bandwidth
  float sigma2 = 1.0f;      // position bandwidth, voxel units
  float lambda_div = 1.0f / 3.0f;
  float lambda_int = 1.0f / 3.0f;
  float lambda_pos = 1.0f / 3.0f;

  void validate() const;
};

struct RefinementGraph {
  std::string volume_id;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  EdgeWeightConfig cfg;

  int64_t node_count() const { return static_cast<int64_t>(nodes.size()); }
  int64_t edge_count() const { return static_cast<int64_t>(edges.size()); }
};

// ---- edge-weight kernels ----------------------------------------------

// Symmetric KL between class simplices, clamped at 1e-7.
double edge_diversity(const std::vector<double>& e_i, const std::vector<double>& e_j);
double edge_diversity2(double fg_i, double fg_j);  // two-class shorthand

// exp(-|vi - vj|^2 / (2 sigma1)), in (0,1]
double edge_intensity(double v_i, double v_j, double sigma1);

// exp(-||xi - xj||^2 / (2 sigma2)), Euclidean in voxel units
double edge_position(const std::array<float, 3>& x_i, const std::array<float, 3>& x_j, double sigma2);

// The mixed weight used for graph edges; diversity passes through exp(-div)
// so all three kernels share the range (0,1].
float mix_edge_weight(const GraphNode& a, const GraphNode& b, const EdgeWeightConfig& cfg,
                      bool use_position);

// ---- node selection ------------------------------------------------------

struct NodeSelection {
  bool pass_through = false;  // empty uncertain set: skip the graph entirely
  std::string warning;
  // voxel coordinates in deterministic (k,j,i) scan order
  std::vector<std::array<int32_t, 3>> uncertain;
  std::vector<std::array<int32_t, 3>> certain;
};

/// Uncertainty threshold split: uncertain voxels plus the 6-neighborhood
/// shell of certain voxels around them, restricted to the bounding box of
/// (prediction mask ∪ uncertain set) expanded by 2 voxels.
NodeSelection select_nodes(const std::vector<float>& entropy_field, int64_t depth, int64_t height,
                           int64_t width, const BinaryVolume& prediction_mask, float tau, int classes = 2);

// ---- serialization -------------------------------------------------------

std::string graph_to_json(const RefinementGraph& g);
RefinementGraph graph_from_json(const std::string& text);

std::vector<uint8_t> graph_to_binary(const RefinementGraph& g);
RefinementGraph graph_from_binary(const std::vector<uint8_t>& bytes);

}  // namespace ugr

#endif
