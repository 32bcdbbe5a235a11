#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "oracles.hpp"
#include "ugr/uncertainty.hpp"

using namespace ugr;
using namespace ugr::testing;

namespace {

ProbabilityStack random_stack(int64_t T, int64_t d, int64_t h, int64_t w, uint64_t seed) {
  ProbabilityStack st;
  st.passes = T;
  st.depth = d;
  st.height = h;
  st.width = w;
  st.classes = 2;
  st.probs.resize(static_cast<size_t>(T * d * h * w * 2));
  Rng rng(seed);
  for (size_t i = 0; i < st.probs.size(); i += 2) {
    const float p = rng.uniform_f();
    st.probs[i] = 1.0f - p;
    st.probs[i + 1] = p;
  }
  return st;
}

Volume flat_volume(int64_t d, int64_t h, int64_t w, float value = 0.5f) {
  Volume v;
  v.id = "test";
  v.depth = d;
  v.height = h;
  v.width = w;
  v.intensities.assign(static_cast<size_t>(d * h * w), value);
  return v;
}

}  // namespace

TEST_CASE("expectation of identical passes is any pass") {
  ProbabilityStack st = random_stack(4, 2, 2, 2, 1);
  for (int64_t t = 1; t < st.passes; ++t)
    std::memcpy(st.probs.data() + t * st.voxels() * 2, st.probs.data(), sizeof(float) * st.voxels() * 2);
  auto e = mcdo_expectation(st);
  for (int64_t i = 0; i < st.voxels() * 2; ++i) CHECK(e[i] == doctest::Approx(st.probs[i]).epsilon(1e-7));
}

TEST_CASE("expectation is the arithmetic mean") {
  ProbabilityStack st;
  st.passes = 2;
  st.depth = st.height = st.width = 1;
  st.classes = 2;
  st.probs = {0.2f, 0.8f, 0.6f, 0.4f};
  auto e = mcdo_expectation(st);
  CHECK(e[0] == doctest::Approx(0.4f));
  CHECK(e[1] == doctest::Approx(0.6f));
}

TEST_CASE("expectation matches the per-voxel mean oracle") {
  ProbabilityStack st = random_stack(7, 3, 4, 5, 2);
  auto e = mcdo_expectation(st);
  for (int64_t x = 0; x < st.voxels(); ++x)
    for (int64_t c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (int64_t t = 0; t < st.passes; ++t) acc += st.probs[(t * st.voxels() + x) * 2 + c];
      CHECK(std::abs(e[x * 2 + c] - acc / st.passes) < 1e-6);
    }
}

TEST_CASE("stacks with fewer than two passes are rejected") {
  ProbabilityStack st = random_stack(2, 1, 1, 1, 3);
  st.passes = 1;
  st.probs.resize(2);
  CHECK_THROWS_AS(mcdo_expectation(st), Error);
}

TEST_CASE("entropy closed forms") {
  auto u = entropy_field({0.5f, 0.5f, 1.0f, 0.0f, 0.9f, 0.1f}, 3, 2);
  CHECK(u[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(u[1] == 0.0f);
  CHECK(u[2] == doctest::Approx(entropy_of({0.9, 0.1})).epsilon(1e-5));
  CHECK(u[2] == doctest::Approx(0.3251).epsilon(1e-3));
  CHECK_THROWS_AS(entropy_field({-0.1f, 1.1f}, 1, 2), Error);
}

TEST_CASE("entropy bounds with equality only at the uniform point") {
  Rng rng(4);
  const double ln2 = std::log(2.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const float p = rng.uniform_f();
    auto u = entropy_field({1.0f - p, p}, 1, 2);
    CHECK(u[0] >= 0.0f);
    CHECK(u[0] <= static_cast<float>(ln2) + 1e-7f);
    if (u[0] > ln2 - 1e-6) CHECK(std::abs(p - 0.5f) < 2e-3f);
  }
}

TEST_CASE("edge kernel closed forms") {
  CHECK(edge_diversity({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(edge_diversity({0.9, 0.1}, {0.1, 0.9}) == doctest::Approx(2.0 * 0.8 * std::log(9.0)).epsilon(1e-9));
  CHECK(edge_diversity({0.9, 0.1}, {0.1, 0.9}) == doctest::Approx(3.5156).epsilon(1e-4));

  CHECK(edge_intensity(0.4, 0.4, 1.0) == 1.0);
  CHECK(edge_intensity(1.0, 0.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));

  CHECK(edge_position({1, 2, 3}, {1, 2, 3}, 1.0) == 1.0);
  CHECK(edge_position({0, 0, 0}, {1, 0, 0}, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
}

TEST_CASE("edge kernel properties") {
  Rng rng(5);
  double prev_int = 2.0;
  for (int i = 0; i < 50; ++i) {
    // intensity kernel decreases monotonically in |dv|
    const double dv = i * 0.05;
    const double v = edge_intensity(0.0, dv, 1.0);
    CHECK(v <= prev_int);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    prev_int = v;
  }
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0.001, 0.999), b = rng.uniform(0.001, 0.999);
    const double dij = edge_diversity({1 - a, a}, {1 - b, b});
    const double dji = edge_diversity({1 - b, b}, {1 - a, a});
    CHECK(dij == doctest::Approx(dji).epsilon(1e-12));
    CHECK(dij >= 0.0);
    if (std::abs(a - b) > 1e-4) CHECK(dij > 0.0);
    const std::array<float, 3> xi = {static_cast<float>(rng.uniform(0, 10)), 0.0f, 1.0f};
    const std::array<float, 3> xj = {static_cast<float>(rng.uniform(0, 10)), 2.0f, 0.0f};
    CHECK(edge_position(xi, xj, 1.5) == doctest::Approx(edge_position(xj, xi, 1.5)).epsilon(1e-12));
  }
}

TEST_CASE("select_nodes passes through on uniformly certain fields") {
  const int64_t d = 4, h = 4, w = 4;
  std::vector<float> u(static_cast<size_t>(d * h * w), 0.0f);
  auto sel = select_nodes(u, d, h, w, BinaryVolume::zeros(d, h, w), 0.05f);
  CHECK(sel.pass_through);
  CHECK(!sel.warning.empty());
  CHECK(sel.uncertain.empty());
}

TEST_CASE("single interior uncertain voxel yields one uncertain and six certain nodes") {
  const int64_t d = 7, h = 7, w = 7;
  std::vector<float> u(static_cast<size_t>(d * h * w), 0.0f);
  u[(3 * h + 3) * w + 3] = 0.5f;
  auto sel = select_nodes(u, d, h, w, BinaryVolume::zeros(d, h, w), 0.05f);
  REQUIRE(!sel.pass_through);
  CHECK(sel.uncertain.size() == 1);
  CHECK(sel.certain.size() == 6);
  CHECK(sel.uncertain[0] == std::array<int32_t, 3>{3, 3, 3});
}

TEST_CASE("select_nodes matches a brute-force scan") {
  const int64_t d = 10, h = 12, w = 9;
  Rng rng(6);
  std::vector<float> u(static_cast<size_t>(d * h * w));
  for (float& x : u) x = 0.7f * rng.uniform_f();
  BinaryVolume mask = BinaryVolume::zeros(d, h, w);
  for (auto& v : mask.values) v = rng.uniform_f() < 0.1f ? 1 : 0;
  const float tau = 0.3f;
  auto sel = select_nodes(u, d, h, w, mask, tau);
  REQUIRE(!sel.pass_through);

  // independent full-volume scan
  auto idx = [&](int64_t k, int64_t j, int64_t i) { return (k * h + j) * w + i; };
  int64_t lo[3] = {d, h, w}, hi[3] = {-1, -1, -1};
  for (int64_t k = 0; k < d; ++k)
    for (int64_t j = 0; j < h; ++j)
      for (int64_t i = 0; i < w; ++i)
        if (u[idx(k, j, i)] > tau || mask.values[idx(k, j, i)]) {
          lo[0] = std::min(lo[0], k); lo[1] = std::min(lo[1], j); lo[2] = std::min(lo[2], i);
          hi[0] = std::max(hi[0], k); hi[1] = std::max(hi[1], j); hi[2] = std::max(hi[2], i);
        }
  std::set<std::array<int32_t, 3>> expect_unc, expect_cert;
  for (int64_t k = std::max<int64_t>(0, lo[0] - 2); k <= std::min(d - 1, hi[0] + 2); ++k)
    for (int64_t j = std::max<int64_t>(0, lo[1] - 2); j <= std::min(h - 1, hi[1] + 2); ++j)
      for (int64_t i = std::max<int64_t>(0, lo[2] - 2); i <= std::min(w - 1, hi[2] + 2); ++i) {
        if (u[idx(k, j, i)] > tau) {
          expect_unc.insert({(int32_t)i, (int32_t)j, (int32_t)k});
        } else {
          bool adj = false;
          if (k > 0) adj |= u[idx(k - 1, j, i)] > tau;
          if (k < d - 1) adj |= u[idx(k + 1, j, i)] > tau;
          if (j > 0) adj |= u[idx(k, j - 1, i)] > tau;
          if (j < h - 1) adj |= u[idx(k, j + 1, i)] > tau;
          if (i > 0) adj |= u[idx(k, j, i - 1)] > tau;
          if (i < w - 1) adj |= u[idx(k, j, i + 1)] > tau;
          if (adj) expect_cert.insert({(int32_t)i, (int32_t)j, (int32_t)k});
        }
      }
  CHECK(std::set<std::array<int32_t, 3>>(sel.uncertain.begin(), sel.uncertain.end()) == expect_unc);
  CHECK(std::set<std::array<int32_t, 3>>(sel.certain.begin(), sel.certain.end()) == expect_cert);
}

TEST_CASE("select_nodes rejects out-of-range tau") {
  std::vector<float> u(8, 0.0f);
  CHECK_THROWS_AS(select_nodes(u, 2, 2, 2, BinaryVolume::zeros(2, 2, 2), 0.0f), Error);
  CHECK_THROWS_AS(select_nodes(u, 2, 2, 2, BinaryVolume::zeros(2, 2, 2), 0.8f), Error);
}

namespace {
UncertaintyField uniform_field(int64_t d, int64_t h, int64_t w, float e_fg, float u) {
  UncertaintyField f;
  f.depth = d;
  f.height = h;
  f.width = w;
  f.classes = 2;
  f.expectation.resize(static_cast<size_t>(d * h * w * 2));
  for (int64_t i = 0; i < d * h * w; ++i) {
    f.expectation[i * 2] = 1.0f - e_fg;
    f.expectation[i * 2 + 1] = e_fg;
  }
  f.entropy.assign(static_cast<size_t>(d * h * w), u);
  return f;
}
}  // namespace

TEST_CASE("two adjacent identical nodes get the closed-form weight") {
  Volume vol = flat_volume(3, 3, 3);
  UncertaintyField f = uniform_field(3, 3, 3, 0.5f, 0.2f);
  NodeSelection sel;
  sel.uncertain = {{1, 1, 1}, {2, 1, 1}};
  RefinementGraph g = build_graph(f, vol, sel, EdgeWeightConfig{});
  REQUIRE(g.edge_count() == 2);  // one incoming edge per node
  const double expect = (1.0 + 1.0 + std::exp(-0.5)) / 3.0;
  for (const GraphEdge& e : g.edges) {
    CHECK(e.w == doctest::Approx(expect).epsilon(1e-5));
    CHECK(e.w == doctest::Approx(0.8688).epsilon(1e-3));
  }
}

TEST_CASE("isolated nodes produce no six-neighborhood edges") {
  Volume vol = flat_volume(8, 8, 8);
  UncertaintyField f = uniform_field(8, 8, 8, 0.5f, 0.2f);
  NodeSelection sel;
  sel.uncertain = {{0, 0, 0}, {4, 4, 4}, {7, 7, 7}};
  RefinementGraph g = build_graph(f, vol, sel, EdgeWeightConfig{});
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 0);
}

TEST_CASE("graph edges match a brute-force adjacency oracle") {
  const int64_t d = 6, h = 6, w = 6;
  Rng rng(7);
  Volume vol = flat_volume(d, h, w);
  for (float& v : vol.intensities) v = rng.uniform_f();
  UncertaintyField f;
  f.depth = d; f.height = h; f.width = w; f.classes = 2;
  f.expectation.resize(static_cast<size_t>(d * h * w * 2));
  for (int64_t i = 0; i < d * h * w; ++i) {
    const float p = 0.01f + 0.98f * rng.uniform_f();
    f.expectation[i * 2] = 1.0f - p;
    f.expectation[i * 2 + 1] = p;
  }
  f.entropy = entropy_field(f.expectation, d * h * w, 2);

  NodeSelection sel;
  for (int64_t k = 0; k < d; ++k)
    for (int64_t j = 0; j < h; ++j)
      for (int64_t i = 0; i < w; ++i)
        if (rng.uniform_f() < 0.4f)
          sel.uncertain.push_back({(int32_t)i, (int32_t)j, (int32_t)k});
  REQUIRE(!sel.uncertain.empty());
  RefinementGraph g = build_graph(f, vol, sel, EdgeWeightConfig{});

  // oracle: all ordered node pairs at Manhattan distance 1
  std::set<std::pair<uint32_t, uint32_t>> expected;
  for (uint32_t a = 0; a < g.nodes.size(); ++a)
    for (uint32_t b = 0; b < g.nodes.size(); ++b) {
      if (a == b) continue;
      const auto& na = g.nodes[a];
      const auto& nb = g.nodes[b];
      const int dist = std::abs(na.i - nb.i) + std::abs(na.j - nb.j) + std::abs(na.k - nb.k);
      if (dist == 1) expected.insert({a, b});
    }
  std::set<std::pair<uint32_t, uint32_t>> got;
  for (const GraphEdge& e : g.edges) {
    CHECK(e.src != e.dst);  // no self-loops
    CHECK(e.w > 0.0f);
    CHECK(e.w <= 1.0f);
    got.insert({e.src, e.dst});
  }
  CHECK(got == expected);
  CHECK(got.size() == g.edges.size());  // no duplicates

  // weight symmetric under endpoint swap
  std::map<std::pair<uint32_t, uint32_t>, float> weight;
  for (const GraphEdge& e : g.edges) weight[{e.src, e.dst}] = e.w;
  for (const GraphEdge& e : g.edges) CHECK(weight.at({e.dst, e.src}) == e.w);

  // every uncertain node touching another node has an edge; sizes N>1 here
  std::vector<int> degree(g.nodes.size(), 0);
  for (const GraphEdge& e : g.edges) ++degree[e.dst];
  (void)degree;
}

TEST_CASE("graph serialization round-trips bit-exactly") {
  const int64_t d = 5, h = 5, w = 5;
  Rng rng(8);
  Volume vol = flat_volume(d, h, w);
  for (float& v : vol.intensities) v = rng.uniform_f();
  UncertaintyField f = uniform_field(d, h, w, 0.3f, 0.4f);
  NodeSelection sel;
  for (int64_t k = 0; k < d; ++k)
    for (int64_t j = 0; j < h; ++j)
      for (int64_t i = 0; i < w; ++i)
        if (rng.uniform_f() < 0.5f) sel.uncertain.push_back({(int32_t)i, (int32_t)j, (int32_t)k});
  RefinementGraph g = build_graph(f, vol, sel, EdgeWeightConfig{});
  g.nodes[0].label = 1;
  g.nodes[1].label = 0;

  const std::string js = graph_to_json(g);
  RefinementGraph g2 = graph_from_json(js);
  CHECK(graph_to_json(g2) == js);

  const auto bin = graph_to_binary(g);
  RefinementGraph g3 = graph_from_binary(bin);
  const auto bin2 = graph_to_binary(g3);
  REQUIRE(bin.size() == bin2.size());
  CHECK(std::memcmp(bin.data(), bin2.data(), bin.size()) == 0);

  // json and binary agree bit-for-bit on every field
  REQUIRE(g2.node_count() == g3.node_count());
  for (int64_t n = 0; n < g2.node_count(); ++n) {
    CHECK(std::memcmp(&g2.nodes[n].e_fg, &g3.nodes[n].e_fg, sizeof(float)) == 0);
    CHECK(std::memcmp(&g2.nodes[n].u, &g3.nodes[n].u, sizeof(float)) == 0);
    CHECK(std::memcmp(&g2.nodes[n].v, &g3.nodes[n].v, sizeof(float)) == 0);
  }

  // same inputs rebuild to identical bytes
  RefinementGraph g4 = build_graph(f, vol, sel, EdgeWeightConfig{});
  g4.nodes[0].label = 1;
  g4.nodes[1].label = 0;
  const auto bin4 = graph_to_binary(g4);
  CHECK(bin4 == bin);
}

TEST_CASE("truncated graph binary reports a parse error with offset") {
  Volume vol = flat_volume(3, 3, 3);
  UncertaintyField f = uniform_field(3, 3, 3, 0.5f, 0.3f);
  NodeSelection sel;
  sel.uncertain = {{1, 1, 1}, {2, 1, 1}};
  RefinementGraph g = build_graph(f, vol, sel, EdgeWeightConfig{});
  auto bin = graph_to_binary(g);
  bin.resize(bin.size() - 7);
  try {
    graph_from_binary(bin);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse_error);
    CHECK(e.offset() >= 0);
  }
}

TEST_CASE("mcdo stack is reproducible and pass-varying") {
  SegNetConfig cfg;
  cfg.levels = 1;
  cfg.base_channels = 2;
  SegNet net(cfg, 3);
  Volume vol = flat_volume(4, 8, 8, 0.5f);
  Rng rng(9);
  for (float& v : vol.intensities) v = rng.uniform_f();

  ProbabilityStack a = mcdo_stack(net, vol, 3, 42);
  ProbabilityStack b = mcdo_stack(net, vol, 3, 42);
  CHECK(std::memcmp(a.probs.data(), b.probs.data(), sizeof(float) * a.probs.size()) == 0);

  // different passes use different masks
  bool differs = false;
  for (int64_t i = 0; i < a.voxels() * 2; ++i)
    differs |= (a.probs[i] != a.probs[a.voxels() * 2 + i]);
  CHECK(differs);

  // rows are simplices
  for (size_t i = 0; i < a.probs.size(); i += 2)
    CHECK(std::abs(a.probs[i] + a.probs[i + 1] - 1.0f) < 1e-5f);
}
