#include "ugr/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "ugr/io.hpp"
#include "ugr/rng.hpp"

namespace ugr {

const char* neighbor_mode_name(NeighborMode m) {
  switch (m) {
    case NeighborMode::six_only: return "six_only";
    case NeighborMode::random16: return "random16";
    case NeighborMode::intra: return "intra";
    case NeighborMode::inter: return "inter";
  }
  return "six_only";
}

NeighborMode neighbor_mode_from(const std::string& s) {
  if (s == "six_only") return NeighborMode::six_only;
  if (s == "random16") return NeighborMode::random16;
  if (s == "intra") return NeighborMode::intra;
  if (s == "inter") return NeighborMode::inter;
  throw Error(ErrorCode::invalid_argument, "unknown neighbor mode: " + s);
}

NeighborConfig NeighborConfig::with_mode(NeighborMode m) {
  NeighborConfig c;
  c.mode = m;
  c.rewire = (m == NeighborMode::inter) ? RewirePolicy::per_block : RewirePolicy::fixed;
  return c;
}

void NeighborConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "neighbors: k must be >= 1");
  if (!(fps_ratio > 0.0 && fps_ratio <= 1.0))
    throw Error(ErrorCode::invalid_argument, "neighbors: fps_ratio must be in (0,1]");
  if (random_count < 1) throw Error(ErrorCode::invalid_argument, "neighbors: random_count must be >= 1");
}

namespace {

// top-k by (distance, index); insertion into a small sorted array
struct TopK {
  int64_t k;
  std::vector<std::pair<double, int64_t>> best;

  explicit TopK(int64_t k_) : k(k_) { best.reserve(static_cast<size_t>(k_)); }

  void offer(double d, int64_t idx) {
    if (static_cast<int64_t>(best.size()) == k && std::make_pair(d, idx) >= best.back()) return;
    auto pos = std::lower_bound(best.begin(), best.end(), std::make_pair(d, idx));
    best.insert(pos, {d, idx});
    if (static_cast<int64_t>(best.size()) > k) best.pop_back();
  }
};

inline double sq_dist(const float* a, const float* b, int64_t dim) {
  double acc = 0.0;
  for (int64_t f = 0; f < dim; ++f) {
    const double d = static_cast<double>(a[f]) - static_cast<double>(b[f]);
    acc += d * d;
  }
  return acc;
}

}  // namespace

std::vector<std::vector<int64_t>> knn_feature(std::span<const float> queries, int64_t n_queries,
                                              std::span<const float> candidates, int64_t n_candidates,
                                              int64_t dim, int64_t k, bool exclude_self) {
  const int64_t available = n_candidates - (exclude_self ? 1 : 0);
  if (k > available)
    throw Error(ErrorCode::invalid_argument, "knn_feature: k=" + std::to_string(k) + " exceeds " +
                                                 std::to_string(available) + " available candidates");
  if (static_cast<int64_t>(queries.size()) != n_queries * dim ||
      static_cast<int64_t>(candidates.size()) != n_candidates * dim)
    throw Error(ErrorCode::shape_mismatch, "knn_feature: feature matrix size mismatch");

  std::vector<std::vector<int64_t>> result(static_cast<size_t>(n_queries));
#pragma omp parallel for schedule(static)
  for (int64_t q = 0; q < n_queries; ++q) {
    TopK top(k);
    const float* qf = queries.data() + q * dim;
    for (int64_t c = 0; c < n_candidates; ++c) {
      if (exclude_self && c == q) continue;
      top.offer(sq_dist(qf, candidates.data() + c * dim, dim), c);
    }
    result[q].reserve(static_cast<size_t>(k));
    for (const auto& [d, idx] : top.best) result[q].push_back(idx);
  }
  return result;
}

std::vector<std::vector<int64_t>> knn_feature_excluding(std::span<const float> queries, int64_t n_queries,
                                                        std::span<const float> candidates,
                                                        int64_t n_candidates, int64_t dim, int64_t k,
                                                        const std::vector<std::vector<int64_t>>& exclude) {
  std::vector<std::vector<int64_t>> result(static_cast<size_t>(n_queries));
#pragma omp parallel for schedule(static)
  for (int64_t q = 0; q < n_queries; ++q) {
    const auto& ex = exclude[static_cast<size_t>(q)];
    TopK top(k);
    const float* qf = queries.data() + q * dim;
    for (int64_t c = 0; c < n_candidates; ++c) {
      if (std::find(ex.begin(), ex.end(), c) != ex.end()) continue;
      top.offer(sq_dist(qf, candidates.data() + c * dim, dim), c);
    }
    for (const auto& [d, idx] : top.best) result[q].push_back(idx);
  }
  return result;
}

std::vector<int64_t> farthest_point_sample(std::span<const float> features, int64_t n, int64_t dim,
                                           double ratio, uint64_t seed) {
  if (n <= 0) throw Error(ErrorCode::empty_input, "farthest_point_sample: empty input");
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw Error(ErrorCode::invalid_argument, "farthest_point_sample: ratio must be in (0,1]");
  const int64_t n_out = static_cast<int64_t>(std::ceil(static_cast<double>(n) * ratio));

  Rng rng(key_combine(seed, 0xf9e5u));
  std::vector<int64_t> chosen;
  chosen.reserve(static_cast<size_t>(n_out));
  std::vector<double> min_dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  int64_t current = rng.uniform_int(n);
  chosen.push_back(current);
  while (static_cast<int64_t>(chosen.size()) < n_out) {
    const float* cf = features.data() + current * dim;
    int64_t next = -1;
    double best = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = sq_dist(features.data() + i * dim, cf, dim);
      if (d < min_dist[i]) min_dist[i] = d;
      if (min_dist[i] > best && min_dist[i] > 0.0) {
        // ties resolve to the lower index because > is strict
        best = min_dist[i];
        next = i;
      }
    }
    if (next < 0) {
      // all remaining points coincide with chosen ones; take lowest unchosen
      std::vector<bool> picked(static_cast<size_t>(n), false);
      for (int64_t c : chosen) picked[static_cast<size_t>(c)] = true;
      for (int64_t i = 0; i < n && next < 0; ++i)
        if (!picked[static_cast<size_t>(i)]) next = i;
      if (next < 0) break;
    }
    min_dist[static_cast<size_t>(next)] = 0.0;
    chosen.push_back(next);
    current = next;
  }
  return chosen;
}

namespace {

std::set<std::pair<uint32_t, uint32_t>> existing_pairs(const RefinementGraph& g) {
  std::set<std::pair<uint32_t, uint32_t>> pairs;
  for (const GraphEdge& e : g.edges) pairs.insert({e.src, e.dst});
  return pairs;
}

std::vector<float> node_feature_matrix(const std::vector<GraphNode>& nodes) {
  std::vector<float> f;
  f.reserve(nodes.size() * 3);
  for (const GraphNode& n : nodes) {
    f.push_back(n.e_fg);
    f.push_back(n.u);
    f.push_back(n.v);
  }
  return f;
}

}  // namespace

AugmentResult add_random_edges(RefinementGraph& g, int count, uint64_t seed) {
  const int64_t n = g.node_count();
  AugmentResult res;
  if (n < 2) {
    res.warning = "graph has fewer than 2 nodes; no random edges added";
    return res;
  }
  int eff = count;
  if (n <= count) {
    eff = static_cast<int>(n - 1);
    res.warning = "node count " + std::to_string(n) + " <= requested " + std::to_string(count) +
                  " random partners; reduced to " + std::to_string(eff);
  }
  auto pairs = existing_pairs(g);
  for (int64_t node = 0; node < n; ++node) {
    // partners that would duplicate an existing (src,dst) pair are rejected
    // during sampling so every node still gains the full edge budget
    int64_t occupied = 0;
    for (int64_t p = 0; p < n; ++p)
      if (p != node && pairs.count({static_cast<uint32_t>(p), static_cast<uint32_t>(node)})) ++occupied;
    const int64_t budget = std::min<int64_t>(eff, n - 1 - occupied);
    Rng rng(key_combine(key_combine(seed, 0x7a2du), static_cast<uint64_t>(node)));
    std::vector<int64_t> partners;
    while (static_cast<int64_t>(partners.size()) < budget) {
      const int64_t p = rng.uniform_int(n);
      if (p == node) continue;
      if (pairs.count({static_cast<uint32_t>(p), static_cast<uint32_t>(node)})) continue;
      if (std::find(partners.begin(), partners.end(), p) != partners.end()) continue;
      partners.push_back(p);
    }
    for (int64_t p : partners) {
      pairs.insert({static_cast<uint32_t>(p), static_cast<uint32_t>(node)});
      GraphEdge e;
      e.src = static_cast<uint32_t>(p);
      e.dst = static_cast<uint32_t>(node);
      e.kind = EdgeKind::random;
      e.w = mix_edge_weight(g.nodes[e.src], g.nodes[e.dst], g.cfg, true);
      g.edges.push_back(e);
      ++res.edges_added;
    }
  }
  return res;
}

std::vector<GraphEdge> select_intra_edges(const RefinementGraph& g, std::span<const float> features,
                                          int64_t dim, int k) {
  const int64_t n = g.node_count();
  // exclusions: self plus already-connected 6-neighbors
  std::vector<std::vector<int64_t>> exclude(static_cast<size_t>(n));
  for (int64_t q = 0; q < n; ++q) exclude[q].push_back(q);
  for (const GraphEdge& e : g.edges)
    if (e.kind == EdgeKind::six) exclude[e.dst].push_back(e.src);

  int64_t eff = k;
  for (int64_t q = 0; q < n; ++q)
    eff = std::min<int64_t>(eff, n - static_cast<int64_t>(exclude[q].size()));
  eff = std::max<int64_t>(eff, 0);
  if (eff == 0) return {};

  auto nn = knn_feature_excluding(features, n, features, n, dim, eff, exclude);
  std::vector<GraphEdge> out;
  out.reserve(static_cast<size_t>(n * eff));
  for (int64_t q = 0; q < n; ++q)
    for (int64_t c : nn[static_cast<size_t>(q)]) {
      GraphEdge e;
      e.src = static_cast<uint32_t>(c);
      e.dst = static_cast<uint32_t>(q);
      e.kind = EdgeKind::intra;
      e.w = mix_edge_weight(g.nodes[e.src], g.nodes[e.dst], g.cfg, true);
      out.push_back(e);
    }
  return out;
}

AugmentResult add_intra_edges(RefinementGraph& g, std::span<const float> features, int64_t dim, int k) {
  const int64_t n = g.node_count();
  AugmentResult res;
  int eff = k;
  if (n < k + 1) {
    eff = static_cast<int>(std::max<int64_t>(n - 1, 0));
    res.warning = "graph has " + std::to_string(n) + " nodes; intra k reduced to " + std::to_string(eff);
  }
  if (eff == 0) return res;
  auto edges = select_intra_edges(g, features, dim, eff);
  auto pairs = existing_pairs(g);
  for (const GraphEdge& e : edges) {
    if (pairs.count({e.src, e.dst})) continue;
    pairs.insert({e.src, e.dst});
    g.edges.push_back(e);
    ++res.edges_added;
  }
  return res;
}

TrainGraphBank build_bank(std::vector<RefinementGraph> graphs, double fps_ratio, uint64_t seed) {
  if (graphs.empty()) throw Error(ErrorCode::empty_input, "build_bank: no train graphs");
  TrainGraphBank bank;
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    TrainGraphBank::Entry entry;
    entry.graph = std::move(graphs[gi]);
    const auto features = node_feature_matrix(entry.graph.nodes);
    entry.fps_index = farthest_point_sample(features, entry.graph.node_count(), 3, fps_ratio,
                                            key_combine(seed, static_cast<uint64_t>(gi)));
    std::sort(entry.fps_index.begin(), entry.fps_index.end());
    bank.entries.push_back(std::move(entry));
  }
  return bank;
}

BankPool pool_bank(const TrainGraphBank& bank) {
  BankPool pool;
  for (size_t gi = 0; gi < bank.entries.size(); ++gi) {
    const auto& entry = bank.entries[gi];
    for (int64_t id : entry.fps_index) {
      pool.nodes.push_back(entry.graph.nodes[static_cast<size_t>(id)]);
      pool.nodes.back().imported = 1;
      pool.refs.emplace_back(static_cast<int32_t>(gi), static_cast<int32_t>(id));
    }
  }
  pool.raw_features = node_feature_matrix(pool.nodes);
  return pool;
}

std::vector<GraphEdge> select_inter_edges(const std::vector<GraphNode>& test_nodes,
                                          std::span<const float> test_features,
                                          const BankPool& pool, std::span<const float> pool_features,
                                          int64_t dim, int k, uint32_t pool_base,
                                          const EdgeWeightConfig& cfg) {
  const int64_t nt = static_cast<int64_t>(test_nodes.size());
  if (pool.size() == 0) throw Error(ErrorCode::empty_input, "select_inter_edges: empty bank pool");
  const int64_t eff = std::min<int64_t>(k, pool.size());
  auto nn = knn_feature(test_features, nt, pool_features, pool.size(), dim, eff, false);
  std::vector<GraphEdge> out;
  out.reserve(static_cast<size_t>(nt * eff));
  for (int64_t q = 0; q < nt; ++q)
    for (int64_t c : nn[static_cast<size_t>(q)]) {
      GraphEdge e;
      e.src = pool_base + static_cast<uint32_t>(c);
      e.dst = static_cast<uint32_t>(q);
      e.kind = EdgeKind::inter;
      e.w = mix_edge_weight(pool.nodes[static_cast<size_t>(c)], test_nodes[static_cast<size_t>(q)], cfg,
                            /*use_position=*/false);
      out.push_back(e);
    }
  return out;
}

AugmentResult add_inter_edges(RefinementGraph& g, const TrainGraphBank& bank, int k) {
  if (bank.empty()) throw Error(ErrorCode::empty_input, "add_inter_edges: empty bank");
  AugmentResult res;
  BankPool pool = pool_bank(bank);
  const uint32_t pool_base = static_cast<uint32_t>(g.node_count());
  const auto test_features = node_feature_matrix(g.nodes);
  auto edges = select_inter_edges(g.nodes, test_features, pool, pool.raw_features, 3, k, pool_base, g.cfg);
  if (static_cast<int64_t>(std::min<size_t>(k, pool.nodes.size())) < k)
    res.warning = "bank pool smaller than k";
  g.nodes.insert(g.nodes.end(), pool.nodes.begin(), pool.nodes.end());
  for (const GraphEdge& e : edges) {
    g.edges.push_back(e);
    ++res.edges_added;
  }
  return res;
}

// ---- bank cache file -------------------------------------------------------

namespace {
constexpr char kBankMagic[4] = {'U', 'G', 'R', 'B'};

template <typename T>
void put(std::vector<uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& in, size_t& off, const char* what) {
  if (off + sizeof(T) > in.size())
    throw Error(ErrorCode::parse_error, std::string("bank file truncated reading ") + what,
                static_cast<int64_t>(off));
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}
}  // namespace

void save_bank(const std::filesystem::path& p, const TrainGraphBank& bank) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kBankMagic, kBankMagic + 4);
  put<uint32_t>(out, 1);
  put<uint64_t>(out, bank.entries.size());
  for (const auto& entry : bank.entries) {
    const auto blob = graph_to_binary(entry.graph);
    put<uint64_t>(out, blob.size());
    out.insert(out.end(), blob.begin(), blob.end());
    put<uint64_t>(out, entry.fps_index.size());
    for (int64_t id : entry.fps_index) put<int64_t>(out, id);
  }
  atomic_write(p, out);
}

TrainGraphBank load_bank(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  size_t off = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kBankMagic, 4) != 0)
    throw Error(ErrorCode::parse_error, "bad bank magic", 0);
  off = 4;
  const uint32_t version = take<uint32_t>(bytes, off, "version");
  if (version != 1) throw Error(ErrorCode::parse_error, "unsupported bank version", 4);
  const uint64_t n = take<uint64_t>(bytes, off, "entry count");
  TrainGraphBank bank;
  for (uint64_t i = 0; i < n; ++i) {
    const uint64_t blob_size = take<uint64_t>(bytes, off, "graph size");
    if (off + blob_size > bytes.size())
      throw Error(ErrorCode::parse_error, "bank file truncated reading graph", static_cast<int64_t>(off));
    std::vector<uint8_t> blob(bytes.begin() + static_cast<int64_t>(off),
                              bytes.begin() + static_cast<int64_t>(off + blob_size));
    off += blob_size;
    TrainGraphBank::Entry entry;
    entry.graph = graph_from_binary(blob);
    const uint64_t fps_n = take<uint64_t>(bytes, off, "fps count");
    for (uint64_t f = 0; f < fps_n; ++f) {
      const int64_t id = take<int64_t>(bytes, off, "fps index");
      if (id < 0 || id >= entry.graph.node_count())
        throw Error(ErrorCode::parse_error, "bank fps index out of range", static_cast<int64_t>(off));
      entry.fps_index.push_back(id);
    }
    bank.entries.push_back(std::move(entry));
  }
  return bank;
}

}  // namespace ugr
