#include "ugr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

namespace ugr {

using nlohmann::json;

void EdgeWeightConfig::validate() const {
  if (sigma1 <= 0.0f || sigma2 <= 0.0f)
    throw Error(ErrorCode::invalid_argument, "edge weights: sigma1 and sigma2 must be > 0");
  if (lambda_div < 0.0f || lambda_int < 0.0f || lambda_pos < 0.0f)
    throw Error(ErrorCode::invalid_argument, "edge weights: lambdas must be >= 0");
  const float s = lambda_div + lambda_int + lambda_pos;
  if (std::abs(s - 1.0f) > 1e-5f)
    throw Error(ErrorCode::invalid_argument, "edge weights: lambdas must sum to 1, got " + std::to_string(s));
}

namespace {
constexpr double kProbFloor = 1e-7;  // keeps the divergence finite at simplex vertices
}

double edge_diversity(const std::vector<double>& e_i, const std::vector<double>& e_j) {
  if (e_i.size() != e_j.size())
    throw Error(ErrorCode::shape_mismatch, "edge_diversity: simplex sizes differ");
  double div = 0.0;
  for (size_t c = 0; c < e_i.size(); ++c) {
    const double p = std::max(e_i[c], kProbFloor);
    const double q = std::max(e_j[c], kProbFloor);
    div += (p - q) * std::log(p / q);
  }
  return div;
}

double edge_diversity2(double fg_i, double fg_j) {
  return edge_diversity({1.0 - fg_i, fg_i}, {1.0 - fg_j, fg_j});
}

double edge_intensity(double v_i, double v_j, double sigma1) {
  const double d = v_i - v_j;
  return std::exp(-(d * d) / (2.0 * sigma1));
}

double edge_position(const std::array<float, 3>& x_i, const std::array<float, 3>& x_j, double sigma2) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = static_cast<double>(x_i[a]) - static_cast<double>(x_j[a]);
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma2));
}

float mix_edge_weight(const GraphNode& a, const GraphNode& b, const EdgeWeightConfig& cfg,
                      bool use_position) {
  const double div = edge_diversity2(a.e_fg, b.e_fg);
  const double intensity = edge_intensity(a.v, b.v, cfg.sigma1);
  double w;
  if (use_position) {
    const double pos = edge_position({static_cast<float>(a.i), static_cast<float>(a.j), static_cast<float>(a.k)},
                                     {static_cast<float>(b.i), static_cast<float>(b.j), static_cast<float>(b.k)},
                                     cfg.sigma2);
    w = cfg.lambda_div * std::exp(-div) + cfg.lambda_int * intensity + cfg.lambda_pos * pos;
  } else {
    // cross-volume edges have no shared coordinate frame; redistribute the
    // position share proportionally
    const double denom = cfg.lambda_div + cfg.lambda_int;
    w = denom > 0.0 ? (cfg.lambda_div * std::exp(-div) + cfg.lambda_int * intensity) / denom : 1.0;
  }
  return static_cast<float>(w);
}

// ---- node selection --------------------------------------------------------

NodeSelection select_nodes(const std::vector<float>& entropy_field, int64_t depth, int64_t height,
                           int64_t width, const BinaryVolume& prediction_mask, float tau, int classes) {
  const double ln_m = std::log(static_cast<double>(classes));
  if (!(tau > 0.0f && static_cast<double>(tau) < ln_m))
    throw Error(ErrorCode::invalid_argument,
                "select_nodes: tau must lie in (0, ln M) = (0, " + std::to_string(ln_m) + ")");
  if (static_cast<int64_t>(entropy_field.size()) != depth * height * width)
    throw Error(ErrorCode::shape_mismatch, "select_nodes: entropy field size mismatch");
  if (prediction_mask.depth != depth || prediction_mask.height != height || prediction_mask.width != width)
    throw Error(ErrorCode::shape_mismatch, "select_nodes: prediction mask dims mismatch");

  NodeSelection sel;
  auto idx = [&](int64_t k, int64_t j, int64_t i) { return (k * height + j) * width + i; };

  // bounding box of prediction ∪ uncertain, expanded by 2 voxels
  int64_t lo[3] = {depth, height, width};
  int64_t hi[3] = {-1, -1, -1};
  bool any_uncertain = false;
  for (int64_t k = 0; k < depth; ++k)
    for (int64_t j = 0; j < height; ++j)
      for (int64_t i = 0; i < width; ++i) {
        const int64_t n = idx(k, j, i);
        const bool unc = entropy_field[n] > tau;
        any_uncertain |= unc;
        if (unc || prediction_mask.values[n]) {
          lo[0] = std::min(lo[0], k);
          lo[1] = std::min(lo[1], j);
          lo[2] = std::min(lo[2], i);
          hi[0] = std::max(hi[0], k);
          hi[1] = std::max(hi[1], j);
          hi[2] = std::max(hi[2], i);
        }
      }
  if (!any_uncertain) {
    sel.pass_through = true;
    sel.warning = "no voxel exceeds the entropy threshold; volume passes through unrefined";
    return sel;
  }
  for (int a = 0; a < 3; ++a) {
    lo[a] -= 2;
    hi[a] += 2;
  }
  lo[0] = std::max<int64_t>(lo[0], 0);
  lo[1] = std::max<int64_t>(lo[1], 0);
  lo[2] = std::max<int64_t>(lo[2], 0);
  hi[0] = std::min(hi[0], depth - 1);
  hi[1] = std::min(hi[1], height - 1);
  hi[2] = std::min(hi[2], width - 1);

  constexpr int64_t off[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};

  for (int64_t k = lo[0]; k <= hi[0]; ++k)
    for (int64_t j = lo[1]; j <= hi[1]; ++j)
      for (int64_t i = lo[2]; i <= hi[2]; ++i) {
        const float u = entropy_field[idx(k, j, i)];
        if (u > tau) {
          sel.uncertain.push_back({static_cast<int32_t>(i), static_cast<int32_t>(j), static_cast<int32_t>(k)});
          continue;
        }
        // certain shell: 6-neighbor of at least one uncertain voxel
        bool adjacent = false;
        for (const auto& o : off) {
          const int64_t kk = k + o[0], jj = j + o[1], ii = i + o[2];
          if (kk < 0 || kk >= depth || jj < 0 || jj >= height || ii < 0 || ii >= width) continue;
          if (entropy_field[idx(kk, jj, ii)] > tau) {
            adjacent = true;
            break;
          }
        }
        if (adjacent)
          sel.certain.push_back({static_cast<int32_t>(i), static_cast<int32_t>(j), static_cast<int32_t>(k)});
      }
  return sel;
}

// ---- serialization ---------------------------------------------------------

namespace {
json node_to_json(const GraphNode& n) {
  json j;
  j["x"] = {n.i, n.j, n.k};
  j["f"] = {n.e_fg, n.u, n.v};
  j["role"] = n.role == NodeRole::uncertain ? "uncertain" : "certain";
  j["label"] = n.label;
  if (n.imported) j["imported"] = true;
  return j;
}

const char* edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::six: return "six";
    case EdgeKind::random: return "random";
    case EdgeKind::intra: return "intra";
    case EdgeKind::inter: return "inter";
  }
  return "six";
}

EdgeKind edge_kind_from(const std::string& s) {
  if (s == "six") return EdgeKind::six;
  if (s == "random") return EdgeKind::random;
  if (s == "intra") return EdgeKind::intra;
  if (s == "inter") return EdgeKind::inter;
  throw Error(ErrorCode::parse_error, "unknown edge kind: " + s);
}
}  // namespace

std::string graph_to_json(const RefinementGraph& g) {
  json j;
  j["schema"] = "ugr.graph.v1";
  j["volume_id"] = g.volume_id;
  j["config"] = {{"sigma1", g.cfg.sigma1},
                 {"sigma2", g.cfg.sigma2},
                 {"lambda_div", g.cfg.lambda_div},
                 {"lambda_int", g.cfg.lambda_int},
                 {"lambda_pos", g.cfg.lambda_pos}};
  json nodes = json::array();
  for (const GraphNode& n : g.nodes) nodes.push_back(node_to_json(n));
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const GraphEdge& e : g.edges)
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"w", e.w}, {"kind", edge_kind_name(e.kind)}});
  j["edges"] = std::move(edges);
  return j.dump();
}

RefinementGraph graph_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("graph json: ") + e.what(), static_cast<int64_t>(e.byte));
  }
  RefinementGraph g;
  g.volume_id = j.value("volume_id", "");
  if (j.contains("config")) {
    const auto& c = j["config"];
    g.cfg.sigma1 = c.value("sigma1", 1.0f);
    g.cfg.sigma2 = c.value("sigma2", 1.0f);
    g.cfg.lambda_div = c.value("lambda_div", 1.0f / 3.0f);
    g.cfg.lambda_int = c.value("lambda_int", 1.0f / 3.0f);
    g.cfg.lambda_pos = c.value("lambda_pos", 1.0f / 3.0f);
  }
  for (const auto& nj : j.at("nodes")) {
    GraphNode n;
    n.i = nj.at("x")[0].get<int32_t>();
    n.j = nj.at("x")[1].get<int32_t>();
    n.k = nj.at("x")[2].get<int32_t>();
    n.e_fg = nj.at("f")[0].get<float>();
    n.u = nj.at("f")[1].get<float>();
    n.v = nj.at("f")[2].get<float>();
    n.role = nj.at("role").get<std::string>() == "uncertain" ? NodeRole::uncertain : NodeRole::certain;
    n.label = nj.at("label").get<int8_t>();
    n.imported = nj.value("imported", false) ? 1 : 0;
    g.nodes.push_back(n);
  }
  for (const auto& ej : j.at("edges")) {
    GraphEdge e;
    e.src = ej.at("src").get<uint32_t>();
    e.dst = ej.at("dst").get<uint32_t>();
    e.w = ej.at("w").get<float>();
    e.kind = edge_kind_from(ej.at("kind").get<std::string>());
    if (e.src >= g.nodes.size() || e.dst >= g.nodes.size())
      throw Error(ErrorCode::parse_error, "graph json: edge endpoint out of range");
    g.edges.push_back(e);
  }
  return g;
}

namespace {
constexpr char kGraphMagic[4] = {'U', 'G', 'R', 'G'};

template <typename T>
void put(std::vector<uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& in, size_t& off, const char* what) {
  if (off + sizeof(T) > in.size())
    throw Error(ErrorCode::parse_error, std::string("graph binary truncated reading ") + what,
                static_cast<int64_t>(off));
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}
}  // namespace

std::vector<uint8_t> graph_to_binary(const RefinementGraph& g) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kGraphMagic, kGraphMagic + 4);
  put<uint32_t>(out, 1);
  const std::string meta = [&] {
    json j;
    j["volume_id"] = g.volume_id;
    j["config"] = {{"sigma1", g.cfg.sigma1},
                   {"sigma2", g.cfg.sigma2},
                   {"lambda_div", g.cfg.lambda_div},
                   {"lambda_int", g.cfg.lambda_int},
                   {"lambda_pos", g.cfg.lambda_pos}};
    return j.dump();
  }();
  put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put<uint64_t>(out, static_cast<uint64_t>(g.nodes.size()));
  put<uint64_t>(out, static_cast<uint64_t>(g.edges.size()));
  for (const GraphNode& n : g.nodes) {
    put(out, n.i);
    put(out, n.j);
    put(out, n.k);
    put(out, n.e_fg);
    put(out, n.u);
    put(out, n.v);
    put<uint8_t>(out, static_cast<uint8_t>(n.role));
    put(out, n.label);
    put(out, n.imported);
  }
  for (const GraphEdge& e : g.edges) {
    put(out, e.src);
    put(out, e.dst);
    put(out, e.w);
    put<uint8_t>(out, static_cast<uint8_t>(e.kind));
  }
  return out;
}

RefinementGraph graph_from_binary(const std::vector<uint8_t>& bytes) {
  size_t off = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kGraphMagic, 4) != 0)
    throw Error(ErrorCode::parse_error, "bad graph magic", 0);
  off = 4;
  const uint32_t version = take<uint32_t>(bytes, off, "version");
  if (version != 1)
    throw Error(ErrorCode::parse_error, "unsupported graph version " + std::to_string(version), 4);
  const uint32_t mlen = take<uint32_t>(bytes, off, "metadata length");
  if (off + mlen > bytes.size())
    throw Error(ErrorCode::parse_error, "graph binary truncated reading metadata", static_cast<int64_t>(off));
  const std::string meta(bytes.begin() + static_cast<int64_t>(off), bytes.begin() + static_cast<int64_t>(off + mlen));
  off += mlen;

  RefinementGraph g;
  json j;
  try {
    j = json::parse(meta);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("graph metadata: ") + e.what(), static_cast<int64_t>(e.byte));
  }
  g.volume_id = j.value("volume_id", "");
  if (j.contains("config")) {
    const auto& c = j["config"];
    g.cfg.sigma1 = c.value("sigma1", 1.0f);
    g.cfg.sigma2 = c.value("sigma2", 1.0f);
    g.cfg.lambda_div = c.value("lambda_div", 1.0f / 3.0f);
    g.cfg.lambda_int = c.value("lambda_int", 1.0f / 3.0f);
    g.cfg.lambda_pos = c.value("lambda_pos", 1.0f / 3.0f);
  }

  const uint64_t n_nodes = take<uint64_t>(bytes, off, "node count");
  const uint64_t n_edges = take<uint64_t>(bytes, off, "edge count");
  g.nodes.reserve(n_nodes);
  for (uint64_t n = 0; n < n_nodes; ++n) {
    GraphNode gn;
    gn.i = take<int32_t>(bytes, off, "node i");
    gn.j = take<int32_t>(bytes, off, "node j");
    gn.k = take<int32_t>(bytes, off, "node k");
    gn.e_fg = take<float>(bytes, off, "node e");
    gn.u = take<float>(bytes, off, "node u");
    gn.v = take<float>(bytes, off, "node v");
    gn.role = static_cast<NodeRole>(take<uint8_t>(bytes, off, "node role"));
    gn.label = take<int8_t>(bytes, off, "node label");
    gn.imported = take<uint8_t>(bytes, off, "node imported");
    g.nodes.push_back(gn);
  }
  g.edges.reserve(n_edges);
  for (uint64_t e = 0; e < n_edges; ++e) {
    GraphEdge ge;
    ge.src = take<uint32_t>(bytes, off, "edge src");
    ge.dst = take<uint32_t>(bytes, off, "edge dst");
    ge.w = take<float>(bytes, off, "edge w");
    ge.kind = static_cast<EdgeKind>(take<uint8_t>(bytes, off, "edge kind"));
    if (ge.src >= g.nodes.size() || ge.dst >= g.nodes.size())
      throw Error(ErrorCode::parse_error, "graph binary: edge endpoint out of range",
                  static_cast<int64_t>(off));
    g.edges.push_back(ge);
  }
  return g;
}

}  // namespace ugr
