#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "oracles.hpp"
#include "ugr/neighbors.hpp"

using namespace ugr;
using namespace ugr::testing;

namespace {

std::vector<float> random_features(int64_t n, int64_t dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> f(static_cast<size_t>(n * dim));
  for (float& v : f) v = rng.uniform_f();
  return f;
}

// simple graph over a line of voxels, no labels
RefinementGraph line_graph(int64_t n) {
  RefinementGraph g;
  g.volume_id = "line";
  for (int64_t i = 0; i < n; ++i) {
    GraphNode node;
    node.i = static_cast<int32_t>(i);
    node.j = 0;
    node.k = 0;
    node.e_fg = 0.5f;
    node.u = 0.1f;
    node.v = 0.5f;
    g.nodes.push_back(node);
  }
  for (int64_t i = 0; i + 1 < n; ++i) {
    const float w = mix_edge_weight(g.nodes[i], g.nodes[i + 1], g.cfg, true);
    g.edges.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(i + 1), w, EdgeKind::six});
    g.edges.push_back({static_cast<uint32_t>(i + 1), static_cast<uint32_t>(i), w, EdgeKind::six});
  }
  return g;
}

double min_pairwise_distance(const std::vector<float>& features, int64_t dim,
                             const std::vector<int64_t>& chosen) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t a = 0; a < chosen.size(); ++a)
    for (size_t b = a + 1; b < chosen.size(); ++b) {
      double acc = 0.0;
      for (int64_t f = 0; f < dim; ++f) {
        const double d = features[chosen[a] * dim + f] - features[chosen[b] * dim + f];
        acc += d * d;
      }
      best = std::min(best, acc);
    }
  return best;
}

}  // namespace

TEST_CASE("knn finds an identical candidate first") {
  std::vector<float> cands = {0.1f, 0.2f, 0.9f, 0.8f, 0.4f, 0.4f};
  std::vector<float> query = {0.9f, 0.8f};
  auto nn = knn_feature(query, 1, cands, 3, 2, 1, false);
  REQUIRE(nn[0].size() == 1);
  CHECK(nn[0][0] == 1);
}

TEST_CASE("knn on a line returns nearest in order") {
  std::vector<float> cands = {1.0f, 2.0f, 3.0f};  // distances 1,2,3 from query 0
  std::vector<float> query = {0.0f};
  auto nn = knn_feature(query, 1, cands, 3, 1, 2, false);
  CHECK(nn[0] == std::vector<int64_t>{0, 1});
}

TEST_CASE("knn ties break to the lower index") {
  std::vector<float> cands = {1.0f, -1.0f, 1.0f};
  std::vector<float> query = {0.0f};
  auto nn = knn_feature(query, 1, cands, 3, 1, 2, false);
  CHECK(nn[0] == std::vector<int64_t>{0, 1});
}

TEST_CASE("knn matches the brute-force oracle on random sets") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    const int64_t n = 200, dim = 3, k = 7;
    auto feats = random_features(n, dim, seed);
    auto got = knn_feature(feats, n, feats, n, dim, k, true);
    auto expect = brute_force_knn(feats, n, feats, n, dim, k, true);
    CHECK(got == expect);
  }
}

TEST_CASE("knn rejects oversized k") {
  auto feats = random_features(5, 2, 4);
  CHECK_THROWS_AS(knn_feature(feats, 5, feats, 5, 2, 5, true), Error);
  CHECK_THROWS_AS(knn_feature(feats, 5, feats, 5, 2, 6, false), Error);
}

TEST_CASE("fps returns ceil(N*ratio) indices") {
  auto feats = random_features(80, 3, 5);
  auto idx = farthest_point_sample(feats, 80, 3, 1.0 / 40.0, 1);
  CHECK(idx.size() == 2);

  auto idx2 = farthest_point_sample(feats, 80, 3, 1.0, 1);
  CHECK(idx2.size() == 80);
  std::set<int64_t> uniq(idx2.begin(), idx2.end());
  CHECK(uniq.size() == 80);

  auto idx3 = farthest_point_sample(feats, 80, 3, 0.1, 1);
  CHECK(idx3.size() == 8);

  CHECK_THROWS_AS(farthest_point_sample({}, 0, 3, 0.5, 1), Error);
}

TEST_CASE("every fps step is the argmax of min-distance") {
  for (uint64_t seed : {1u, 2u, 7u}) {
    const int64_t n = 97, dim = 3;
    auto feats = random_features(n, dim, seed * 31);
    auto chosen = farthest_point_sample(feats, n, dim, 0.25, seed);
    REQUIRE(chosen.size() == static_cast<size_t>(std::ceil(n * 0.25)));
    // oracle: recompute the greedy argmax from scratch at every step
    std::vector<double> mind(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    for (size_t step = 1; step < chosen.size(); ++step) {
      const int64_t prev = chosen[step - 1];
      for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t f = 0; f < dim; ++f) {
          const double d = feats[i * dim + f] - feats[prev * dim + f];
          acc += d * d;
        }
        mind[i] = std::min(mind[i], acc);
      }
      int64_t arg = -1;
      double best = -1.0;
      for (int64_t i = 0; i < n; ++i)
        if (mind[i] > best && mind[i] > 0.0) {
          best = mind[i];
          arg = i;
        }
      CHECK(chosen[step] == arg);
      mind[static_cast<size_t>(chosen[step])] = 0.0;
    }
  }
}

TEST_CASE("fps spreads better than uniform random sampling") {
  const int64_t n = 300, dim = 3;
  auto feats = random_features(n, dim, 11);
  double fps_total = 0.0, rnd_total = 0.0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto chosen = farthest_point_sample(feats, n, dim, 0.1, seed);
    fps_total += min_pairwise_distance(feats, dim, chosen);
    Rng rng(seed);
    std::vector<int64_t> all(n);
    for (int64_t i = 0; i < n; ++i) all[i] = i;
    rng.shuffle(all);
    all.resize(chosen.size());
    rnd_total += min_pairwise_distance(feats, dim, all);
  }
  CHECK(fps_total / 20.0 >= rnd_total / 20.0);
}

TEST_CASE("random edges are reproducible and counted") {
  RefinementGraph g = line_graph(40);
  const size_t base = g.edges.size();
  auto res = add_random_edges(g, 16, 99);
  CHECK(res.warning.empty());
  CHECK(res.edges_added == g.edge_count() - static_cast<int64_t>(base));

  std::map<uint32_t, int> per_node;
  std::set<std::pair<uint32_t, uint32_t>> pairs;
  for (const GraphEdge& e : g.edges) {
    CHECK(pairs.insert({e.src, e.dst}).second);  // no duplicates anywhere
    if (e.kind == EdgeKind::random) {
      ++per_node[e.dst];
      CHECK(e.src != e.dst);
    }
  }
  for (int64_t node = 0; node < g.node_count(); ++node)
    CHECK(per_node[static_cast<uint32_t>(node)] == 16);

  RefinementGraph g2 = line_graph(40);
  add_random_edges(g2, 16, 99);
  CHECK(graph_to_binary(g2) == graph_to_binary(g));

  RefinementGraph g3 = line_graph(40);
  add_random_edges(g3, 16, 100);
  CHECK(graph_to_binary(g3) != graph_to_binary(g));
}

TEST_CASE("random edge count falls back when the graph is small") {
  RefinementGraph g = line_graph(10);
  auto res = add_random_edges(g, 16, 5);
  CHECK(!res.warning.empty());
  std::map<uint32_t, int> per_node;
  for (const GraphEdge& e : g.edges)
    if (e.kind == EdgeKind::random) ++per_node[e.dst];
  // budget N-1 = 9, less the six-neighbors already pointing at the node
  for (int64_t node = 0; node < 10; ++node) {
    const int six_in = (node == 0 || node == 9) ? 1 : 2;
    CHECK(per_node[static_cast<uint32_t>(node)] == 9 - six_in);
  }
}

TEST_CASE("random partners are uniform under a chi-square check") {
  const int64_t n = 50;
  std::map<int64_t, int64_t> counts;
  int64_t total = 0;
  for (uint64_t seed = 0; seed < 625; ++seed) {
    RefinementGraph g = line_graph(n);
    const size_t base = g.edges.size();
    add_random_edges(g, 16, seed);
    for (size_t i = base; i < g.edges.size(); ++i)
      if (g.edges[i].dst == 0 && g.edges[i].kind == EdgeKind::random) {
        ++counts[g.edges[i].src];
        ++total;
      }
  }
  CHECK(total == 625 * 16);
  // node 0's six-neighbor (node 1) is never redrawn, so the uniform support
  // is the remaining 48 nodes
  const double expected = static_cast<double>(total) / (n - 2);
  double chi2 = 0.0;
  for (int64_t p = 2; p < n; ++p) {
    const double c = static_cast<double>(counts[p]);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(counts[1] == 0);
  // df = 47; 99.9th percentile is 85.5
  CHECK(chi2 < 95.0);
}

TEST_CASE("intra edges link the feature cluster together") {
  RefinementGraph g = line_graph(7);
  // nodes 0,1,2 share a distinct feature signature
  for (int i = 0; i < 3; ++i) {
    g.nodes[i].e_fg = 0.9f;
    g.nodes[i].u = 0.6f;
    g.nodes[i].v = 0.9f;
  }
  std::vector<float> feats;
  for (const GraphNode& n : g.nodes) {
    feats.push_back(n.e_fg);
    feats.push_back(n.u);
    feats.push_back(n.v);
  }
  auto res = add_intra_edges(g, feats, 3, 2);
  CHECK(res.warning.empty());
  // cluster members pick each other (6-neighbors excluded, so node 1 skips 0 and 2)
  std::map<uint32_t, std::set<uint32_t>> intra;
  for (const GraphEdge& e : g.edges)
    if (e.kind == EdgeKind::intra) intra[e.dst].insert(e.src);
  CHECK(intra[0].count(2) == 1);  // node 0 excludes neighbor 1, reaches cluster mate 2
  CHECK(intra[2].count(0) == 1);
  for (uint32_t c : intra[3]) CHECK(c > 2);  // outside the cluster, picks plain nodes
}

TEST_CASE("intra selection never duplicates an existing edge") {
  for (uint64_t seed : {3u, 4u}) {
    RefinementGraph g = line_graph(30);
    auto feats = random_features(30, 3, seed);
    add_intra_edges(g, feats, 3, 5);
    std::set<std::pair<uint32_t, uint32_t>> pairs;
    for (const GraphEdge& e : g.edges) CHECK(pairs.insert({e.src, e.dst}).second);
    // dynamic edges never duplicate a six-neighborhood edge
    std::set<std::pair<uint32_t, uint32_t>> six;
    for (const GraphEdge& e : g.edges)
      if (e.kind == EdgeKind::six) six.insert({e.src, e.dst});
    for (const GraphEdge& e : g.edges)
      if (e.kind == EdgeKind::intra) CHECK(six.count({e.src, e.dst}) == 0);
  }
}

TEST_CASE("intra falls back when the graph is tiny") {
  RefinementGraph g = line_graph(4);
  std::vector<float> feats = random_features(4, 3, 6);
  auto res = add_intra_edges(g, feats, 3, 5);
  CHECK(!res.warning.empty());
}

TEST_CASE("bank subsample sizes follow the fps ratio") {
  std::vector<RefinementGraph> graphs;
  for (int i = 0; i < 3; ++i) {
    RefinementGraph g = line_graph(85 + i);
    Rng rng(static_cast<uint64_t>(i) + 10);
    for (auto& n : g.nodes) {
      n.e_fg = rng.uniform_f();
      n.u = rng.uniform_f() * 0.6f;
      n.v = rng.uniform_f();
      n.label = rng.uniform_f() < 0.5f ? 0 : 1;
    }
    graphs.push_back(std::move(g));
  }
  TrainGraphBank bank = build_bank(graphs, 1.0 / 40.0, 7);
  REQUIRE(bank.entries.size() == 3);
  CHECK(bank.entries[0].fps_index.size() == 3);  // ceil(85/40)
  CHECK(bank.entries[1].fps_index.size() == 3);  // ceil(86/40)
  CHECK(bank.entries[2].fps_index.size() == 3);  // ceil(87/40)

  BankPool pool = pool_bank(bank);
  CHECK(pool.size() == 9);
  for (const GraphNode& n : pool.nodes) CHECK(n.imported == 1);

  // cache round-trip
  const auto path = std::filesystem::temp_directory_path() / "ugr_bank_test.bin";
  save_bank(path, bank);
  TrainGraphBank loaded = load_bank(path);
  REQUIRE(loaded.entries.size() == bank.entries.size());
  for (size_t i = 0; i < bank.entries.size(); ++i) {
    CHECK(loaded.entries[i].fps_index == bank.entries[i].fps_index);
    CHECK(graph_to_binary(loaded.entries[i].graph) == graph_to_binary(bank.entries[i].graph));
  }
  std::filesystem::remove(path);
}

TEST_CASE("inter edges import the pool and give k edges per test node") {
  std::vector<RefinementGraph> graphs;
  for (int gi = 0; gi < 3; ++gi) {
    RefinementGraph g = line_graph(200);
    Rng rng(static_cast<uint64_t>(gi) + 31);
    for (auto& n : g.nodes) {
      n.e_fg = rng.uniform_f();
      n.u = rng.uniform_f() * 0.6f;
      n.v = rng.uniform_f();
      n.label = n.e_fg > 0.5f ? 1 : 0;
    }
    graphs.push_back(std::move(g));
  }
  // fps_ratio 1 keeps all 200 nodes per graph in the pool
  TrainGraphBank bank = build_bank(graphs, 1.0, 3);
  RefinementGraph test = line_graph(17);
  Rng rng(77);
  for (auto& n : test.nodes) {
    n.e_fg = rng.uniform_f();
    n.u = rng.uniform_f() * 0.6f;
    n.v = rng.uniform_f();
  }
  const int64_t n_test = test.node_count();
  auto res = add_inter_edges(test, bank, 5);
  CHECK(res.edges_added == n_test * 5);
  CHECK(test.node_count() == n_test + 600);

  std::map<uint32_t, int> per_node;
  for (const GraphEdge& e : test.edges)
    if (e.kind == EdgeKind::inter) {
      ++per_node[e.dst];
      CHECK(e.src >= n_test);  // directed bank -> test
      CHECK(test.nodes[e.src].imported == 1);
      CHECK(test.nodes[e.src].label != kUnlabeled);
    }
  for (int64_t q = 0; q < n_test; ++q) CHECK(per_node[static_cast<uint32_t>(q)] == 5);

  // matches a brute-force scan over the concatenated pool
  BankPool pool = pool_bank(bank);
  std::vector<float> test_feats, pool_feats;
  for (int64_t q = 0; q < n_test; ++q) {
    test_feats.push_back(test.nodes[q].e_fg);
    test_feats.push_back(test.nodes[q].u);
    test_feats.push_back(test.nodes[q].v);
  }
  pool_feats = pool.raw_features;
  auto expect = brute_force_knn(test_feats, n_test, pool_feats, pool.size(), 3, 5, false);
  std::map<uint32_t, std::vector<int64_t>> got;
  for (const GraphEdge& e : test.edges)
    if (e.kind == EdgeKind::inter) got[e.dst].push_back(e.src - n_test);
  for (int64_t q = 0; q < n_test; ++q) {
    auto sorted_got = got[static_cast<uint32_t>(q)];
    std::sort(sorted_got.begin(), sorted_got.end());
    auto sorted_expect = expect[static_cast<size_t>(q)];
    std::sort(sorted_expect.begin(), sorted_expect.end());
    CHECK(sorted_got == sorted_expect);
  }
}

TEST_CASE("a bank node with identical features is selected first") {
  RefinementGraph train = line_graph(50);
  Rng rng(5);
  for (auto& n : train.nodes) {
    n.e_fg = rng.uniform_f();
    n.u = rng.uniform_f() * 0.5f;
    n.v = rng.uniform_f();
    n.label = 1;
  }
  train.nodes[13].e_fg = 0.77f;
  train.nodes[13].u = 0.33f;
  train.nodes[13].v = 0.55f;
  TrainGraphBank bank = build_bank({train}, 1.0, 1);
  RefinementGraph test = line_graph(2);
  test.nodes[0].e_fg = 0.77f;
  test.nodes[0].u = 0.33f;
  test.nodes[0].v = 0.55f;
  add_inter_edges(test, bank, 1);
  bool found = false;
  for (const GraphEdge& e : test.edges)
    if (e.kind == EdgeKind::inter && e.dst == 0) {
      CHECK(test.nodes[e.src].e_fg == 0.77f);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("inter edges require a bank") {
  RefinementGraph test = line_graph(3);
  CHECK_THROWS_AS(add_inter_edges(test, TrainGraphBank{}, 5), Error);
}

TEST_CASE("selection is a pure function of its inputs") {
  RefinementGraph g = line_graph(25);
  auto feats = random_features(25, 3, 8);
  auto a = select_intra_edges(g, feats, 3, 4);
  auto b = select_intra_edges(g, feats, 3, 4);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].src == b[i].src);
    CHECK(a[i].dst == b[i].dst);
    CHECK(a[i].w == b[i].w);
  }
}
