#include "ugr/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ugr/rng.hpp"

namespace ugr {

void ProbabilityStack::validate() const {
  if (passes < 2)
    throw Error(ErrorCode::invalid_argument,
                "probability stack: need at least 2 passes, got " + std::to_string(passes));
  if (static_cast<int64_t>(probs.size()) != passes * voxels() * classes)
    throw Error(ErrorCode::shape_mismatch, "probability stack: buffer size mismatch");
}

ProbabilityStack mcdo_stack(const SegNet& net, const Volume& vol, int64_t passes, uint64_t seed) {
  if (passes < 2)
    throw Error(ErrorCode::invalid_argument, "mcdo_stack: need at least 2 passes");
  ProbabilityStack st;
  st.passes = passes;
  st.depth = vol.depth;
  st.height = vol.height;
  st.width = vol.width;
  st.classes = net.config().classes;
  st.probs.resize(static_cast<size_t>(passes * st.voxels() * st.classes));

  const int64_t plane = vol.height * vol.width;
  const int64_t M = st.classes;
  for (int64_t t = 0; t < passes; ++t) {
    const uint64_t pass_seed = key_combine(seed, static_cast<uint64_t>(t));
    for (int64_t k = 0; k < vol.depth; ++k) {
      SliceBatch b = SliceBatch::from_volume(vol, k);
      Tensor probs = net.forward(b.intensities, true, key_combine(pass_seed, static_cast<uint64_t>(k)));
      // [1,M,H,W] -> voxel-major layout
      const float* pv = probs.data();
      float* out = st.probs.data() + (t * st.voxels() + k * plane) * M;
      for (int64_t c = 0; c < M; ++c)
        for (int64_t s = 0; s < plane; ++s) out[s * M + c] = pv[c * plane + s];
    }
  }
  return st;
}

std::vector<float> mcdo_expectation(const ProbabilityStack& stack) {
  stack.validate();
  const int64_t n = stack.voxels() * stack.classes;
  std::vector<double> acc(static_cast<size_t>(n), 0.0);
  for (int64_t t = 0; t < stack.passes; ++t) {
    const float* p = stack.probs.data() + t * n;
    for (int64_t i = 0; i < n; ++i) acc[i] += p[i];
  }
  std::vector<float> e(static_cast<size_t>(n));
  const double inv = 1.0 / static_cast<double>(stack.passes);
  for (int64_t i = 0; i < n; ++i) e[i] = static_cast<float>(acc[i] * inv);
  return e;
}

std::vector<float> entropy_field(const std::vector<float>& expectation, int64_t voxels, int64_t classes) {
  if (static_cast<int64_t>(expectation.size()) != voxels * classes)
    throw Error(ErrorCode::shape_mismatch, "entropy_field: expectation size mismatch");
  std::vector<float> u(static_cast<size_t>(voxels));
  for (int64_t x = 0; x < voxels; ++x) {
    double h = 0.0;
    for (int64_t c = 0; c < classes; ++c) {
      const double p = expectation[x * classes + c];
      if (p < 0.0)
        throw Error(ErrorCode::invalid_argument, "entropy_field: negative probability");
      if (p > 0.0) h -= p * std::log(p);
    }
    u[x] = static_cast<float>(h);
  }
  return u;
}

UncertaintyField uncertainty_from_stack(const ProbabilityStack& stack) {
  UncertaintyField f;
  f.depth = stack.depth;
  f.height = stack.height;
  f.width = stack.width;
  f.classes = stack.classes;
  f.expectation = mcdo_expectation(stack);
  f.entropy = entropy_field(f.expectation, stack.voxels(), stack.classes);
  return f;
}

BinaryVolume expectation_mask(const UncertaintyField& field) {
  BinaryVolume m = BinaryVolume::zeros(field.depth, field.height, field.width);
  const int64_t n = field.depth * field.height * field.width;
  for (int64_t i = 0; i < n; ++i) m.values[i] = field.e_fg(i) > 0.5f ? 1 : 0;
  return m;
}

RefinementGraph build_graph(const UncertaintyField& field, const Volume& vol,
                            const NodeSelection& selection, const EdgeWeightConfig& cfg) {
  cfg.validate();
  if (selection.uncertain.empty() && selection.certain.empty())
    throw Error(ErrorCode::empty_input, "build_graph: empty node set");

  RefinementGraph g;
  g.volume_id = vol.id;
  g.cfg = cfg;

  // merge roles and sort by (k,j,i) scan order so node ids are deterministic
  std::vector<std::pair<std::array<int32_t, 3>, NodeRole>> all;
  all.reserve(selection.uncertain.size() + selection.certain.size());
  for (const auto& c : selection.uncertain) all.emplace_back(c, NodeRole::uncertain);
  for (const auto& c : selection.certain) all.emplace_back(c, NodeRole::certain);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first[2], a.first[1], a.first[0]) < std::tie(b.first[2], b.first[1], b.first[0]);
  });
  for (size_t n = 1; n < all.size(); ++n)
    if (all[n].first == all[n - 1].first)
      throw Error(ErrorCode::invalid_argument, "build_graph: duplicate node coordinate");

  std::map<std::array<int32_t, 3>, uint32_t> index_of;
  for (const auto& [coord, role] : all) {
    GraphNode n;
    n.i = coord[0];
    n.j = coord[1];
    n.k = coord[2];
    const int64_t voxel = vol.index(coord[2], coord[1], coord[0]);
    n.e_fg = field.e_fg(voxel);
    n.u = field.entropy[voxel];
    n.v = vol.intensities[voxel];
    n.role = role;
    index_of[coord] = static_cast<uint32_t>(g.nodes.size());
    g.nodes.push_back(n);
  }

  // incoming edge from each 6-neighbor present in the node set
  constexpr int32_t off[6][3] = {{0, 0, -1}, {0, 0, 1}, {0, -1, 0}, {0, 1, 0}, {-1, 0, 0}, {1, 0, 0}};
  for (uint32_t dst = 0; dst < g.nodes.size(); ++dst) {
    const GraphNode& n = g.nodes[dst];
    for (const auto& o : off) {
      const std::array<int32_t, 3> nb = {n.i + o[0], n.j + o[1], n.k + o[2]};
      auto it = index_of.find(nb);
      if (it == index_of.end()) continue;
      GraphEdge e;
      e.src = it->second;
      e.dst = dst;
      e.kind = EdgeKind::six;
      e.w = mix_edge_weight(g.nodes[e.src], n, cfg, true);
      g.edges.push_back(e);
    }
  }
  return g;
}

}  // namespace ugr
