#ifndef UGR_NEIGHBORS_HPP
#define UGR_NEIGHBORS_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ugr/graph.hpp"

namespace ugr {

enum class NeighborMode { six_only, random16, intra, inter };
enum class RewirePolicy { fixed, per_block };

const char* neighbor_mode_name(NeighborMode m);
NeighborMode neighbor_mode_from(const std::string& s);

struct NeighborConfig {
  NeighborMode mode = NeighborMode::intra;
  int k = 5;                       // dynamic neighbors per node
  double fps_ratio = 1.0 / 40.0;   // train-graph subsample ratio
  int random_count = 16;           // random16 comparator edges per node
  // selection recomputed from hidden features between blocks, or kept fixed;
  // intra defaults to fixed, inter to per_block
  RewirePolicy rewire = RewirePolicy::fixed;

  static NeighborConfig with_mode(NeighborMode m);
  void validate() const;
};

// Exact k-nearest-neighbors in feature space; ties broken by lower candidate
// index. Distances accumulate in double so results match the brute-force
// oracle bit-for-bit.
std::vector<std::vector<int64_t>> knn_feature(std::span<const float> queries, int64_t n_queries,
                                              std::span<const float> candidates, int64_t n_candidates,
                                              int64_t dim, int64_t k, bool exclude_self);

// Same, with a small per-query exclusion list (sorted or not; self handled by caller).
std::vector<std::vector<int64_t>> knn_feature_excluding(std::span<const float> queries, int64_t n_queries,
                                                        std::span<const float> candidates,
                                                        int64_t n_candidates, int64_t dim, int64_t k,
                                                        const std::vector<std::vector<int64_t>>& exclude);

// Greedy farthest point sampling: seed-chosen start, then repeatedly the
// candidate maximizing its min distance to the chosen set (ties -> lower
// index). Returns ceil(N * ratio) indices in selection order.
std::vector<int64_t> farthest_point_sample(std::span<const float> features, int64_t n, int64_t dim,
                                           double ratio, uint64_t seed);

struct AugmentResult {
  int64_t edges_added = 0;
  std::string warning;  // set when a precondition forced a fallback
};

// Per node, `count` uniformly drawn distinct non-self partners (seeded).
AugmentResult add_random_edges(RefinementGraph& g, int count, uint64_t seed);

// Per node, k feature-space nearest neighbors excluding itself and its
// already-connected 6-neighbors; weights from the edge kernels.
AugmentResult add_intra_edges(RefinementGraph& g, std::span<const float> features, int64_t dim, int k);

// Selection only (no mutation): edges returned as (src -> dst=query).
std::vector<GraphEdge> select_intra_edges(const RefinementGraph& g, std::span<const float> features,
                                          int64_t dim, int k);

/// FPS-subsampled per-volume train graphs used for inter-graph neighbors.
struct TrainGraphBank {
  struct Entry {
    RefinementGraph graph;
    std::vector<int64_t> fps_index;  // node ids kept by FPS
  };
  std::vector<Entry> entries;

  bool empty() const { return entries.empty(); }
};

TrainGraphBank build_bank(std::vector<RefinementGraph> graphs, double fps_ratio, uint64_t seed);

/// Pooled view of every FPS-kept bank node, in (entry, node) order.
struct BankPool {
  std::vector<GraphNode> nodes;                      // label-carrying copies
  std::vector<std::pair<int32_t, int32_t>> refs;     // (entry index, node id)
  std::vector<float> raw_features;                   // |pool| x 3 (e_fg, u, v)

  int64_t size() const { return static_cast<int64_t>(nodes.size()); }
};

BankPool pool_bank(const TrainGraphBank& bank);

// Inter edges from pool candidates to test nodes: for each test node, the k
// nearest candidates by feature distance. `pool_base` is the working-graph
// row where pool node 0 lives. Position kernel is dropped for these edges.
std::vector<GraphEdge> select_inter_edges(const std::vector<GraphNode>& test_nodes,
                                          std::span<const float> test_features,
                                          const BankPool& pool, std::span<const float> pool_features,
                                          int64_t dim, int k, uint32_t pool_base,
                                          const EdgeWeightConfig& cfg);

// Imports the whole pool into the graph as label-carrying nodes and appends
// inter edges selected on raw node features.
AugmentResult add_inter_edges(RefinementGraph& g, const TrainGraphBank& bank, int k);

void save_bank(const std::filesystem::path& p, const TrainGraphBank& bank);
TrainGraphBank load_bank(const std::filesystem::path& p);

}  // namespace ugr

#endif
