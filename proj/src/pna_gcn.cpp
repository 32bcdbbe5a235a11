#include "ugr/pna_gcn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "ugr/io.hpp"
#include "ugr/rng.hpp"

namespace ugr {

using nlohmann::json;

namespace {

Tensor he_init(const Shape& shape, int64_t fan_in, Rng& rng) {
  std::vector<float> w(static_cast<size_t>(shape_numel(shape)));
  const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (float& v : w) v = stddev * rng.normal_f();
  return Tensor::from_data(shape, std::move(w), true);
}

// incoming-edge CSR; isolated nodes get a unit self-loop
struct Csr {
  std::vector<int64_t> row_start;  // n+1
  std::vector<uint32_t> src;
  std::vector<float> w;
};

Csr build_csr(const std::vector<GraphEdge>& edges, int64_t n) {
  Csr csr;
  std::vector<int64_t> count(static_cast<size_t>(n), 0);
  for (const GraphEdge& e : edges) {
    if (e.src >= n || e.dst >= n)
      throw Error(ErrorCode::invalid_argument, "edge endpoint out of range for aggregation");
    ++count[e.dst];
  }
  int64_t isolated = 0;
  for (int64_t i = 0; i < n; ++i)
    if (count[i] == 0) ++isolated;
  csr.row_start.assign(static_cast<size_t>(n + 1), 0);
  for (int64_t i = 0; i < n; ++i)
    csr.row_start[i + 1] = csr.row_start[i] + (count[i] == 0 ? 1 : count[i]);
  csr.src.resize(static_cast<size_t>(csr.row_start[n]));
  csr.w.resize(csr.src.size());
  std::vector<int64_t> cursor(csr.row_start.begin(), csr.row_start.end() - 1);
  for (const GraphEdge& e : edges) {
    const int64_t pos = cursor[e.dst]++;
    csr.src[pos] = e.src;
    csr.w[pos] = e.w;
  }
  for (int64_t i = 0; i < n; ++i)
    if (count[i] == 0) {  // self-loop fallback
      csr.src[csr.row_start[i]] = static_cast<uint32_t>(i);
      csr.w[csr.row_start[i]] = 1.0f;
    }
  (void)isolated;
  return csr;
}

}  // namespace

GnnModel::GnnModel(const GnnConfig& cfg, float delta, uint64_t seed) : cfg_(cfg), delta_(delta), init_seed_(seed) {
  if (delta <= 0.0f) throw Error(ErrorCode::invalid_argument, "gnn: delta must be > 0");
  if (cfg.in_dim < 1 || cfg.hidden < 1 || cfg.classes < 2)
    throw Error(ErrorCode::invalid_argument, "gnn: bad dimensions");
  Rng rng(key_combine(seed, 0x6a11u));
  w1_ = he_init({12 * cfg.in_dim, cfg.hidden}, 12 * cfg.in_dim, rng);
  b1_ = Tensor::zeros({cfg.hidden}, true);
  w2_ = he_init({12 * cfg.hidden, cfg.hidden}, 12 * cfg.hidden, rng);
  b2_ = Tensor::zeros({cfg.hidden}, true);
  wg_ = he_init({cfg.hidden, cfg.classes}, cfg.hidden, rng);
  bg_ = Tensor::zeros({cfg.classes}, true);
}

void GnnModel::load_params(const std::vector<float>& payload) {
  auto params = parameters();
  int64_t total = 0;
  for (const Tensor& t : params) total += t.numel();
  if (static_cast<int64_t>(payload.size()) != total)
    throw Error(ErrorCode::shape_mismatch, "gnn payload size mismatch");
  size_t off = 0;
  for (Tensor& t : params) {
    std::memcpy(t.data(), payload.data() + off, sizeof(float) * t.numel());
    off += static_cast<size_t>(t.numel());
  }
}

float delta_from_graph(const RefinementGraph& g) {
  std::vector<int64_t> indeg(g.nodes.size(), 0);
  for (const GraphEdge& e : g.edges) ++indeg[e.dst];
  double acc = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].imported) continue;
    const int64_t d = std::max<int64_t>(indeg[i], 1);  // self-loop floor
    acc += std::log(static_cast<double>(d + 1));
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::empty_input, "delta_from_graph: no nodes");
  return static_cast<float>(acc / static_cast<double>(n));
}

Tensor pna_aggregate(const Tensor& x, const std::vector<GraphEdge>& edges, int64_t n_nodes, float delta) {
  if (x.ndim() != 2 || x.dim(0) != n_nodes)
    throw Error(ErrorCode::shape_mismatch, "pna_aggregate: features must be [n_nodes, F]");
  if (delta <= 0.0f) throw Error(ErrorCode::invalid_argument, "pna_aggregate: delta must be > 0");
  const int64_t F = x.dim(1);
  Csr csr = build_csr(edges, n_nodes);

  Tensor out = Tensor::zeros({n_nodes, 12 * F});
  std::vector<float> means(static_cast<size_t>(n_nodes * F));
  std::vector<float> stds(static_cast<size_t>(n_nodes * F));
  std::vector<uint32_t> argmin(static_cast<size_t>(n_nodes * F));
  std::vector<uint32_t> argmax(static_cast<size_t>(n_nodes * F));
  std::vector<float> scalers(static_cast<size_t>(n_nodes * 2));  // (amp, att) per node

  const float* xv = x.data();
  float* ov = out.data();
#pragma omp parallel for schedule(static)
  for (int64_t d = 0; d < n_nodes; ++d) {
    const int64_t e0 = csr.row_start[d], e1 = csr.row_start[d + 1];
    double sumw = 0.0;
    for (int64_t e = e0; e < e1; ++e) sumw += csr.w[e];
    const double inv_sumw = sumw > 0.0 ? 1.0 / sumw : 0.0;
    const int64_t deg = e1 - e0;
    const float log_d = static_cast<float>(std::log(static_cast<double>(deg + 1)));
    const float s_amp = log_d / delta;
    const float s_att = delta / log_d;
    scalers[d * 2] = s_amp;
    scalers[d * 2 + 1] = s_att;

    for (int64_t f = 0; f < F; ++f) {
      double m = 0.0, m2 = 0.0;
      float mn = std::numeric_limits<float>::infinity();
      float mx = -std::numeric_limits<float>::infinity();
      uint32_t amn = 0, amx = 0;
      for (int64_t e = e0; e < e1; ++e) {
        const float v = xv[csr.src[e] * F + f];
        const double wn = csr.w[e] * inv_sumw;
        m += wn * v;
        m2 += wn * static_cast<double>(v) * v;
        if (v < mn) {
          mn = v;
          amn = csr.src[e];
        }
        if (v > mx) {
          mx = v;
          amx = csr.src[e];
        }
      }
      const double var = std::max(0.0, m2 - m * m);
      const float sd = static_cast<float>(std::sqrt(var + 1e-8));
      means[d * F + f] = static_cast<float>(m);
      stds[d * F + f] = sd;
      argmin[d * F + f] = amn;
      argmax[d * F + f] = amx;
      float* row = ov + d * 12 * F;
      const float aggs[4] = {static_cast<float>(m), mn, mx, sd};
      const float scl[3] = {1.0f, s_amp, s_att};
      for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 4; ++a) row[(s * 4 + a) * F + f] = scl[s] * aggs[a];
    }
  }

  if (Tape* tape = Tape::active(); tape && x.requires_grad()) {
    Tensor xt = x;
    out.set_requires_grad(true);
    tape->register_participant(x);
    tape->register_participant(out);
    tape->record([xt, out, csr = std::move(csr), means = std::move(means), stds = std::move(stds),
                  argmin = std::move(argmin), argmax = std::move(argmax), scalers = std::move(scalers),
                  n_nodes, F]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      const float* xv = xt.data();
      for (int64_t d = 0; d < n_nodes; ++d) {
        const int64_t e0 = csr.row_start[d], e1 = csr.row_start[d + 1];
        double sumw = 0.0;
        for (int64_t e = e0; e < e1; ++e) sumw += csr.w[e];
        const double inv_sumw = sumw > 0.0 ? 1.0 / sumw : 0.0;
        const float s_amp = scalers[d * 2], s_att = scalers[d * 2 + 1];
        const float* grow = go + d * 12 * F;
        for (int64_t f = 0; f < F; ++f) {
          // combine the three scaler paths per aggregator
          float gm = 0.0f, gmn = 0.0f, gmx = 0.0f, gsd = 0.0f;
          const float scl[3] = {1.0f, s_amp, s_att};
          for (int s = 0; s < 3; ++s) {
            gm += scl[s] * grow[(s * 4 + 0) * F + f];
            gmn += scl[s] * grow[(s * 4 + 1) * F + f];
            gmx += scl[s] * grow[(s * 4 + 2) * F + f];
            gsd += scl[s] * grow[(s * 4 + 3) * F + f];
          }
          const float m = means[d * F + f];
          const float sd = stds[d * F + f];
          for (int64_t e = e0; e < e1; ++e) {
            const float wn = static_cast<float>(csr.w[e] * inv_sumw);
            const float v = xv[csr.src[e] * F + f];
            gx[csr.src[e] * F + f] += wn * gm + wn * (v - m) / sd * gsd;
          }
          gx[argmin[d * F + f] * F + f] += gmn;
          gx[argmax[d * F + f] * F + f] += gmx;
        }
      }
    });
  }
  return out;
}

Tensor gcn_propagate(const Tensor& x, const std::vector<GraphEdge>& edges, int64_t n_nodes) {
  if (x.ndim() != 2 || x.dim(0) != n_nodes)
    throw Error(ErrorCode::shape_mismatch, "gcn_propagate: features must be [n_nodes, F]");
  if (n_nodes == 0) throw Error(ErrorCode::empty_input, "gcn_propagate: empty graph");
  const int64_t F = x.dim(1);

  // D = row sums of (A + I), A[dst][src] += w per edge
  std::vector<double> deg(static_cast<size_t>(n_nodes), 1.0);
  for (const GraphEdge& e : edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes)
      throw Error(ErrorCode::invalid_argument, "gcn_propagate: edge endpoint out of range");
    deg[e.dst] += e.w;
  }
  std::vector<float> coef(edges.size());
  for (size_t e = 0; e < edges.size(); ++e)
    coef[e] = static_cast<float>(edges[e].w / std::sqrt(deg[edges[e].dst] * deg[edges[e].src]));

  Tensor out = Tensor::zeros({n_nodes, F});
  const float* xv = x.data();
  float* ov = out.data();
  for (int64_t i = 0; i < n_nodes; ++i) {
    const float self = static_cast<float>(1.0 / deg[i]);
    for (int64_t f = 0; f < F; ++f) ov[i * F + f] = self * xv[i * F + f];
  }
  for (size_t e = 0; e < edges.size(); ++e) {
    const float* src_row = xv + edges[e].src * F;
    float* dst_row = ov + edges[e].dst * F;
    for (int64_t f = 0; f < F; ++f) dst_row[f] += coef[e] * src_row[f];
  }

  if (Tape* tape = Tape::active(); tape && x.requires_grad()) {
    Tensor xt = x;
    out.set_requires_grad(true);
    tape->register_participant(x);
    tape->register_participant(out);
    std::vector<GraphEdge> edges_copy = edges;
    tape->record([xt, out, edges_copy = std::move(edges_copy), coef = std::move(coef),
                  deg = std::move(deg), n_nodes, F]() mutable {
      float* gx = xt.grad().data();
      const float* go = out.grad().data();
      for (int64_t i = 0; i < n_nodes; ++i) {
        const float self = static_cast<float>(1.0 / deg[i]);
        for (int64_t f = 0; f < F; ++f) gx[i * F + f] += self * go[i * F + f];
      }
      // transpose propagation
      for (size_t e = 0; e < edges_copy.size(); ++e) {
        float* src_row = gx + edges_copy[e].src * F;
        const float* dst_row = go + edges_copy[e].dst * F;
        for (int64_t f = 0; f < F; ++f) src_row[f] += coef[e] * dst_row[f];
      }
    });
  }
  return out;
}

Tensor focal_loss(const Tensor& logits, const std::vector<int8_t>& labels,
                  const std::vector<uint8_t>& mask, const FocalLossConfig& cfg) {
  cfg.validate();
  if (logits.ndim() != 2)
    throw Error(ErrorCode::shape_mismatch, "focal_loss: logits must be [N,M]");
  const int64_t N = logits.dim(0), M = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != N || static_cast<int64_t>(mask.size()) != N)
    throw Error(ErrorCode::shape_mismatch, "focal_loss: labels/mask size mismatch");

  int64_t count = 0;
  for (int64_t i = 0; i < N; ++i)
    if (mask[i]) {
      if (labels[i] < 0 || labels[i] >= M)
        throw Error(ErrorCode::invalid_argument, "focal_loss: masked node lacks a valid label");
      ++count;
    }
  if (count == 0) throw Error(ErrorCode::empty_input, "focal_loss: empty mask");

  // row-wise softmax probabilities
  std::vector<float> probs(static_cast<size_t>(N * M));
  const float* z = logits.data();
  for (int64_t i = 0; i < N; ++i) {
    float mx = z[i * M];
    for (int64_t c = 1; c < M; ++c) mx = std::max(mx, z[i * M + c]);
    double total = 0.0;
    for (int64_t c = 0; c < M; ++c) {
      probs[i * M + c] = std::exp(z[i * M + c] - mx);
      total += probs[i * M + c];
    }
    const float inv = static_cast<float>(1.0 / total);
    for (int64_t c = 0; c < M; ++c) probs[i * M + c] *= inv;
  }

  constexpr float kEps = 1e-7f;
  double loss = 0.0;
  for (int64_t i = 0; i < N; ++i) {
    if (!mask[i]) continue;
    const float pt = std::max(probs[i * M + labels[i]], kEps);
    loss += -static_cast<double>(cfg.alpha) * std::pow(1.0 - pt, static_cast<double>(cfg.gamma)) *
            std::log(pt);
  }
  Tensor out = Tensor::scalar(static_cast<float>(loss / static_cast<double>(count)));

  if (Tape* tape = Tape::active(); tape && logits.requires_grad()) {
    Tensor lt = logits;
    out.set_requires_grad(true);
    tape->register_participant(logits);
    tape->register_participant(out);
    tape->record([lt, out, probs = std::move(probs), labels, mask, cfg, N, M, count]() mutable {
      const float go = out.grad()[0];
      float* gz = lt.grad().data();
      const float inv_count = 1.0f / static_cast<float>(count);
      constexpr float eps = 1e-7f;
      for (int64_t i = 0; i < N; ++i) {
        if (!mask[i]) continue;
        const int64_t t = labels[i];
        const float pt = std::max(probs[i * M + t], eps);
        const float one_m = std::max(1.0f - pt, eps);
        // d/dp of -alpha (1-p)^gamma ln p
        float dfdp = -cfg.alpha * std::pow(one_m, cfg.gamma) / pt;
        if (cfg.gamma > 0.0f)
          dfdp += cfg.alpha * cfg.gamma * std::pow(one_m, cfg.gamma - 1.0f) * std::log(pt);
        for (int64_t c = 0; c < M; ++c) {
          const float dpdz = pt * ((c == t ? 1.0f : 0.0f) - probs[i * M + c]);
          gz[i * M + c] += go * inv_count * dfdp * dpdz;
        }
      }
    });
  }
  return out;
}

// ---- full forward ----------------------------------------------------------

namespace {

Tensor node_features_tensor(const std::vector<GraphNode>& nodes) {
  std::vector<float> f;
  f.reserve(nodes.size() * 3);
  for (const GraphNode& n : nodes) {
    f.push_back(n.e_fg);
    f.push_back(n.u);
    f.push_back(n.v);
  }
  return Tensor::from_data({static_cast<int64_t>(nodes.size()), 3}, std::move(f));
}

std::vector<float> tensor_values(const Tensor& t) {
  return std::vector<float>(t.values().begin(), t.values().end());
}

// gathers pool rows (entry-major fps order) out of per-entry hidden matrices
Tensor gather_pool_rows(const TrainGraphBank& bank, const std::vector<Tensor>& home_hidden) {
  std::vector<float> rows;
  int64_t dim = home_hidden.empty() ? 0 : home_hidden[0].dim(1);
  for (size_t gi = 0; gi < bank.entries.size(); ++gi) {
    const Tensor& h = home_hidden[gi];
    for (int64_t id : bank.entries[gi].fps_index) {
      const float* r = h.data() + id * dim;
      rows.insert(rows.end(), r, r + dim);
    }
  }
  const int64_t n_rows = static_cast<int64_t>(rows.size()) / dim;
  return Tensor::from_data({n_rows, dim}, std::move(rows));
}

}  // namespace

GnnForwardResult gnn_forward(const GnnModel& model, const RefinementGraph& graph,
                             const NeighborConfig& cfg, const TrainGraphBank* bank) {
  cfg.validate();
  const int64_t n_all = graph.node_count();
  if (n_all == 0) throw Error(ErrorCode::empty_input, "gnn_forward: empty graph");

  int64_t n_test = 0;
  while (n_test < n_all && !graph.nodes[n_test].imported) ++n_test;
  for (int64_t i = n_test; i < n_all; ++i)
    if (!graph.nodes[i].imported)
      throw Error(ErrorCode::invalid_state, "gnn_forward: imported nodes must follow all test nodes");
  if (n_test == 0) throw Error(ErrorCode::invalid_state, "gnn_forward: no test nodes");

  const bool inter = cfg.mode == NeighborMode::inter;
  if (inter && (bank == nullptr || bank->empty()))
    throw Error(ErrorCode::missing_artifact, "gnn_forward: inter mode requires a train graph bank");

  std::vector<GraphEdge> base, dynamic;
  for (const GraphEdge& e : graph.edges)
    (e.kind == EdgeKind::six || e.kind == EdgeKind::random ? base : dynamic).push_back(e);

  const float delta = model.delta();
  const int64_t hidden = model.config().hidden;

  BankPool pool;
  std::vector<Tensor> home_h1;
  Tensor pool_h1, pool_h2;
  if (inter) {
    pool = pool_bank(*bank);
    if (n_all != n_test + pool.size())
      throw Error(ErrorCode::invalid_state,
                  "gnn_forward: inter graphs must carry the imported bank pool as trailing nodes");
    // hidden features of the bank side come from their home graphs, detached
    TapePause pause;
    for (const auto& entry : bank->entries) {
      Tensor x_home = node_features_tensor(entry.graph.nodes);
      Tensor agg = pna_aggregate(x_home, entry.graph.edges, entry.graph.node_count(), delta);
      home_h1.push_back(relu(linear(agg, model.w1_, model.b1_)));
    }
    pool_h1 = gather_pool_rows(*bank, home_h1);
  }

  // block 1
  std::vector<GraphEdge> wiring = base;
  wiring.insert(wiring.end(), dynamic.begin(), dynamic.end());
  Tensor x0 = node_features_tensor(graph.nodes);
  Tensor h1 = relu(linear(slice_rows(pna_aggregate(x0, wiring, n_all, delta), 0, n_test),
                          model.w1_, model.b1_));

  const bool rewiring = cfg.rewire == RewirePolicy::per_block &&
                        (cfg.mode == NeighborMode::intra || cfg.mode == NeighborMode::inter);
  RefinementGraph test_view;  // nodes + six edges of the test side, for intra selection
  if (rewiring && cfg.mode == NeighborMode::intra) {
    test_view.volume_id = graph.volume_id;
    test_view.cfg = graph.cfg;
    test_view.nodes.assign(graph.nodes.begin(), graph.nodes.begin() + n_test);
    for (const GraphEdge& e : base)
      if (e.kind == EdgeKind::six) test_view.edges.push_back(e);
  }

  if (rewiring) {
    const auto h1v = tensor_values(h1);
    dynamic = cfg.mode == NeighborMode::intra
                  ? select_intra_edges(test_view, h1v, hidden, cfg.k)
                  : select_inter_edges({graph.nodes.begin(), graph.nodes.begin() + n_test}, h1v, pool,
                                       tensor_values(pool_h1), hidden, cfg.k,
                                       static_cast<uint32_t>(n_test), graph.cfg);
  }

  // block 2
  Tensor x1 = inter ? concat_rows(h1, pool_h1) : h1;
  wiring = base;
  wiring.insert(wiring.end(), dynamic.begin(), dynamic.end());
  Tensor h2 = relu(linear(slice_rows(pna_aggregate(x1, wiring, x1.dim(0), delta), 0, n_test),
                          model.w2_, model.b2_));

  if (inter) {
    TapePause pause;
    std::vector<Tensor> home_h2;
    for (size_t gi = 0; gi < bank->entries.size(); ++gi) {
      const auto& entry = bank->entries[gi];
      Tensor agg = pna_aggregate(home_h1[gi], entry.graph.edges, entry.graph.node_count(), delta);
      home_h2.push_back(relu(linear(agg, model.w2_, model.b2_)));
    }
    pool_h2 = gather_pool_rows(*bank, home_h2);
  }

  if (rewiring) {
    const auto h2v = tensor_values(h2);
    dynamic = cfg.mode == NeighborMode::intra
                  ? select_intra_edges(test_view, h2v, hidden, cfg.k)
                  : select_inter_edges({graph.nodes.begin(), graph.nodes.begin() + n_test}, h2v, pool,
                                       tensor_values(pool_h2), hidden, cfg.k,
                                       static_cast<uint32_t>(n_test), graph.cfg);
  }

  // GCN output layer over the final wiring
  Tensor x2 = inter ? concat_rows(h2, pool_h2) : h2;
  wiring = base;
  wiring.insert(wiring.end(), dynamic.begin(), dynamic.end());
  Tensor z = matmul(x2, model.wg_);
  Tensor logits = add_rowbias(slice_rows(gcn_propagate(z, wiring, x2.dim(0)), 0, n_test), model.bg_);

  GnnForwardResult res;
  res.logits = logits;
  res.probs = softmax_channel(logits);
  res.final_dynamic_edges = std::move(dynamic);
  res.test_rows = n_test;
  return res;
}

// ---- checkpoints -------------------------------------------------------------

std::string gnn_header_json(const GnnModel& model, const NeighborConfig& ncfg, uint64_t seed) {
  json j;
  j["kind"] = "gnn";
  j["config"] = {{"in_dim", model.config().in_dim},
                 {"hidden", model.config().hidden},
                 {"classes", model.config().classes},
                 {"delta", model.delta()}};
  j["neighbors"] = {{"mode", neighbor_mode_name(ncfg.mode)},
                    {"k", ncfg.k},
                    {"fps_ratio", ncfg.fps_ratio},
                    {"random_count", ncfg.random_count},
                    {"rewire", ncfg.rewire == RewirePolicy::per_block ? "per_block" : "fixed"}};
  j["seed"] = seed;
  return j.dump();
}

void save_gnn(const std::filesystem::path& p, const GnnModel& model, const NeighborConfig& ncfg,
              uint64_t seed) {
  save_checkpoint(p, gnn_header_json(model, ncfg, seed), model.parameters());
}

LoadedGnn load_gnn(const std::filesystem::path& p) {
  Checkpoint ck = load_checkpoint(p);
  json j;
  try {
    j = json::parse(ck.header_json);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "gnn header: " + std::string(e.what()), static_cast<int64_t>(e.byte));
  }
  if (j.value("kind", "") != "gnn")
    throw Error(ErrorCode::parse_error, "checkpoint is not a gnn: kind=" + j.value("kind", "?"));
  GnnConfig cfg;
  const auto& c = j.at("config");
  cfg.in_dim = c.at("in_dim").get<int>();
  cfg.hidden = c.at("hidden").get<int>();
  cfg.classes = c.at("classes").get<int>();
  NeighborConfig ncfg;
  const auto& nj = j.at("neighbors");
  ncfg.mode = neighbor_mode_from(nj.at("mode").get<std::string>());
  ncfg.k = nj.at("k").get<int>();
  ncfg.fps_ratio = nj.at("fps_ratio").get<double>();
  ncfg.random_count = nj.at("random_count").get<int>();
  ncfg.rewire = nj.at("rewire").get<std::string>() == "per_block" ? RewirePolicy::per_block
                                                                  : RewirePolicy::fixed;
  GnnModel model(cfg, c.at("delta").get<float>(), j.value("seed", uint64_t{0}));
  model.load_params(ck.payload);
  return LoadedGnn{std::move(model), ncfg};
}

}  // namespace ugr
