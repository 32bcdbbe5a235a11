#include "ugr/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ugr/adam.hpp"
#include "ugr/io.hpp"
#include "ugr/rng.hpp"

namespace ugr {

using nlohmann::json;

// ---- synthetic data ----------------------------------------------------------

namespace {

struct Ellipsoid {
  double cx, cy, cz;       // center (i,j,k order)
  double quad[3][3];       // x^T Q x = 1 on the boundary
};

// rho^2 = (x-c)^T Q (x-c)
double rho_sq(const Ellipsoid& e, double i, double j, double k) {
  const double d[3] = {i - e.cx, j - e.cy, k - e.cz};
  double acc = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) acc += d[a] * e.quad[a][b] * d[b];
  return acc;
}

Ellipsoid make_ellipsoid(double cx, double cy, double cz, const double semi[3], const double angles[3]) {
  // rotation from three Euler angles
  const double ca = std::cos(angles[0]), sa = std::sin(angles[0]);
  const double cb = std::cos(angles[1]), sb = std::sin(angles[1]);
  const double cc = std::cos(angles[2]), sc = std::sin(angles[2]);
  double r[3][3] = {{cb * cc, cb * sc, -sb},
                    {sa * sb * cc - ca * sc, sa * sb * sc + ca * cc, sa * cb},
                    {ca * sb * cc + sa * sc, ca * sb * sc - sa * cc, ca * cb}};
  Ellipsoid e;
  e.cx = cx;
  e.cy = cy;
  e.cz = cz;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double acc = 0.0;
      for (int m = 0; m < 3; ++m) acc += r[m][a] * r[m][b] / (semi[m] * semi[m]);
      e.quad[a][b] = acc;
    }
  return e;
}

struct SynthScene {
  Ellipsoid organ;
  Ellipsoid confuser;
  double bg = 0.22;
  double band = 0.18;       // band level above background
  double core = 0.33;       // core level above background
  double confuser_jitter = 0.0;

  double organ_level(double rho) const {
    // core plateau fading to the band level across the outer shell
    const double t = std::clamp((1.0 - rho) / 0.3, 0.0, 1.0);
    const double s = t * t * (3.0 - 2.0 * t);  // smoothstep
    return bg + band + (core - band) * s;
  }
  double confuser_level() const { return bg + band + confuser_jitter; }
};

SynthScene make_scene(int64_t dim, Rng& rng) {
  SynthScene sc;
  const double d = static_cast<double>(dim);
  double semi[3], angles[3];
  for (int a = 0; a < 3; ++a) {
    semi[a] = (0.18 + 0.08 * rng.uniform()) * d;
    angles[a] = rng.uniform(0.0, 2.0 * M_PI);
  }
  const double cx = d / 2 + rng.uniform(-0.06, 0.06) * d;
  const double cy = d / 2 + rng.uniform(-0.06, 0.06) * d;
  const double cz = d / 2 + rng.uniform(-0.06, 0.06) * d;
  sc.organ = make_ellipsoid(cx, cy, cz, semi, angles);

  // confuser blob pressed against the organ boundary in a random direction
  double dir[3] = {rng.normal(), rng.normal(), rng.normal()};
  const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  for (double& v : dir) v /= norm;
  double quad_dir = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) quad_dir += dir[a] * sc.organ.quad[a][b] * dir[b];
  const double organ_reach = 1.0 / std::sqrt(quad_dir);

  double csemi[3], cangles[3] = {0, 0, 0};
  for (int a = 0; a < 3; ++a) csemi[a] = (0.11 + 0.06 * rng.uniform()) * d;
  const double creach = csemi[0];
  double ccx = cx + dir[0] * (organ_reach + 0.55 * creach);
  double ccy = cy + dir[1] * (organ_reach + 0.55 * creach);
  double ccz = cz + dir[2] * (organ_reach + 0.55 * creach);
  // keep the blob inside the volume
  ccx = std::clamp(ccx, 0.12 * d, 0.88 * d);
  ccy = std::clamp(ccy, 0.12 * d, 0.88 * d);
  ccz = std::clamp(ccz, 0.12 * d, 0.88 * d);
  sc.confuser = make_ellipsoid(ccx, ccy, ccz, csemi, cangles);
  sc.confuser_jitter = rng.uniform(-0.04, 0.04);
  return sc;
}

}  // namespace

Volume synth_volume(const std::string& id, int64_t dim, float noise_sigma, uint64_t seed) {
  if (dim < 8 || dim % 8 != 0)
    throw Error(ErrorCode::invalid_argument, "synth_volume: dim must be a positive multiple of 8");
  Rng rng(key_combine(seed, 0x5f0eu));
  SynthScene sc = make_scene(dim, rng);

  Volume v;
  v.id = id;
  v.depth = v.height = v.width = dim;
  v.intensities.resize(static_cast<size_t>(dim * dim * dim));
  v.labels.resize(v.intensities.size());

  Rng noise(key_combine(seed, 0x9015u));
  int64_t n = 0;
  for (int64_t k = 0; k < dim; ++k)
    for (int64_t j = 0; j < dim; ++j)
      for (int64_t i = 0; i < dim; ++i, ++n) {
        const double rho = std::sqrt(rho_sq(sc.organ, i, j, k));
        double base = sc.bg;
        uint8_t label = 0;
        if (rho <= 1.0) {
          base = sc.organ_level(rho);
          label = 1;
        } else if (rho_sq(sc.confuser, i, j, k) <= 1.0) {
          base = sc.confuser_level();
        }
        const double value = base + noise_sigma * noise.normal();
        v.intensities[n] = static_cast<float>(std::clamp(value, 0.01, 0.99));
        v.labels[n] = label;
      }
  return v;
}

Dataset synth_dataset(const SynthConfig& cfg) {
  Dataset d;
  for (int64_t i = 0; i < cfg.n_train; ++i) {
    const std::string id = "train_" + std::to_string(i);
    d.train.push_back(synth_volume(id, cfg.dim, cfg.noise_sigma, key_combine(cfg.seed, 1000 + i)));
  }
  for (int64_t i = 0; i < cfg.n_test; ++i) {
    const std::string id = "test_" + std::to_string(i);
    d.test.push_back(synth_volume(id, cfg.dim, cfg.noise_sigma, key_combine(cfg.seed, 2000 + i)));
  }
  return d;
}

SynthStats synth_stats(int64_t dim, uint64_t seed) {
  Rng rng(key_combine(seed, 0x5f0eu));
  SynthScene sc = make_scene(dim, rng);
  SynthStats st;
  int64_t organ = 0, band = 0, conf = 0;
  double band_acc = 0.0, conf_acc = 0.0;
  for (int64_t k = 0; k < dim; ++k)
    for (int64_t j = 0; j < dim; ++j)
      for (int64_t i = 0; i < dim; ++i) {
        const double rho = std::sqrt(rho_sq(sc.organ, i, j, k));
        if (rho <= 1.0) {
          ++organ;
          if (rho >= 0.85) {
            ++band;
            band_acc += sc.organ_level(rho);
          }
        } else if (rho_sq(sc.confuser, i, j, k) <= 1.0) {
          ++conf;
          conf_acc += sc.confuser_level();
        }
      }
  st.organ_fraction = static_cast<double>(organ) / static_cast<double>(dim * dim * dim);
  st.band_mean = band > 0 ? band_acc / band : 0.0;
  st.confuser_mean = conf > 0 ? conf_acc / conf : 0.0;
  return st;
}

// ---- experiments -------------------------------------------------------------

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::six_connectivity: return "six_connectivity";
    case Experiment::random16_baseline: return "random16_baseline";
    case Experiment::intra: return "intra";
    case Experiment::inter: return "inter";
    case Experiment::intra_uat: return "intra_uat";
    case Experiment::inter_uat: return "inter_uat";
  }
  return "?";
}

Experiment experiment_from(const std::string& s) {
  for (Experiment e : {Experiment::six_connectivity, Experiment::random16_baseline, Experiment::intra,
                       Experiment::inter, Experiment::intra_uat, Experiment::inter_uat})
    if (s == experiment_name(e)) return e;
  throw Error(ErrorCode::invalid_argument, "unknown experiment: " + s);
}

bool experiment_uses_uat(Experiment e) {
  return e == Experiment::intra_uat || e == Experiment::inter_uat;
}

NeighborMode experiment_mode(Experiment e) {
  switch (e) {
    case Experiment::six_connectivity: return NeighborMode::six_only;
    case Experiment::random16_baseline: return NeighborMode::random16;
    case Experiment::intra:
    case Experiment::intra_uat: return NeighborMode::intra;
    case Experiment::inter:
    case Experiment::inter_uat: return NeighborMode::inter;
  }
  return NeighborMode::six_only;
}

void ExperimentConfig::validate() const {
  // zero is a degenerate no-op rate (used by tests); negatives are rejected.
  // config-file loading additionally enforces strictly positive rates.
  if (gcn_lr < 0.0f || unet_lr < 0.0f)
    throw Error(ErrorCode::invalid_argument, "experiment: learning rates must be >= 0");
  if (refine_epochs < 1 || uat_iterations < 1 || mcdo_passes < 2)
    throw Error(ErrorCode::invalid_argument, "experiment: bad iteration counts");
  if (seeds.empty()) throw Error(ErrorCode::invalid_argument, "experiment: no seeds");
  focal.validate();
  edge_weights.validate();
  neighbors.validate();
}

double DiceReport::mean() const {
  if (entries.empty()) return 0.0;
  double acc = 0.0;
  for (const Entry& e : entries) acc += e.dice;
  return acc / static_cast<double>(entries.size());
}

double DiceReport::stddev() const {
  if (entries.empty()) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (const Entry& e : entries) acc += (e.dice - m) * (e.dice - m);
  return std::sqrt(acc / static_cast<double>(entries.size()));
}

double dice_score(const BinaryVolume& pred, const BinaryVolume& truth) {
  if (pred.depth != truth.depth || pred.height != truth.height || pred.width != truth.width)
    throw Error(ErrorCode::shape_mismatch, "dice_score: volume dims differ");
  int64_t inter = 0, p = 0, t = 0;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    inter += pred.values[i] && truth.values[i] ? 1 : 0;
    p += pred.values[i];
    t += truth.values[i];
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
}

// ---- refinement ----------------------------------------------------------------

namespace {

struct VolumeAnalysis {
  UncertaintyField field;
  BinaryVolume cnn_mask;
};

VolumeAnalysis analyze_volume(const SegNet& net, const Volume& vol, int64_t passes, uint64_t seed) {
  ProbabilityStack stack = mcdo_stack(net, vol, passes, seed);
  VolumeAnalysis a;
  a.field = uncertainty_from_stack(stack);
  a.cnn_mask = expectation_mask(a.field);
  return a;
}

void assign_labels(RefinementGraph& g, const Volume& vol, bool ground_truth,
                   const BinaryVolume& cnn_mask) {
  for (GraphNode& n : g.nodes) {
    if (n.imported) continue;  // bank nodes keep their stored labels
    if (ground_truth) {
      n.label = static_cast<int8_t>(vol.label_at(n.k, n.j, n.i));
    } else if (n.role == NodeRole::certain) {
      // pseudo-label: binarized expectation (the CNN decision)
      n.label = static_cast<int8_t>(cnn_mask.at(n.k, n.j, n.i));
    } else {
      n.label = kUnlabeled;
    }
  }
}

void augment_graph(RefinementGraph& g, const ExperimentConfig& cfg, const TrainGraphBank* bank,
                   uint64_t seed) {
  switch (cfg.neighbors.mode) {
    case NeighborMode::six_only:
      break;
    case NeighborMode::random16:
      add_random_edges(g, cfg.neighbors.random_count, key_combine(seed, 0xedbe5u));
      break;
    case NeighborMode::intra: {
      std::vector<float> feats;
      feats.reserve(g.nodes.size() * 3);
      for (const GraphNode& n : g.nodes) {
        feats.push_back(n.e_fg);
        feats.push_back(n.u);
        feats.push_back(n.v);
      }
      add_intra_edges(g, feats, 3, cfg.neighbors.k);
      break;
    }
    case NeighborMode::inter: {
      if (bank == nullptr || bank->empty())
        throw Error(ErrorCode::missing_artifact,
                    "inter mode needs a train graph bank; run the bank-building step first");
      add_inter_edges(g, *bank, cfg.neighbors.k);
      break;
    }
  }
}

struct BuiltGraph {
  RefinementGraph graph;
  bool pass_through = false;
};

BuiltGraph build_refinement_graph(const VolumeAnalysis& a, const Volume& vol,
                                  const ExperimentConfig& cfg, const TrainGraphBank* bank,
                                  bool ground_truth_labels, uint64_t seed) {
  BuiltGraph out;
  NodeSelection sel = select_nodes(a.field.entropy, vol.depth, vol.height, vol.width, a.cnn_mask,
                                   cfg.tau, a.field.classes);
  if (sel.pass_through) {
    out.pass_through = true;
    return out;
  }
  out.graph = build_graph(a.field, vol, sel, cfg.edge_weights);
  assign_labels(out.graph, vol, ground_truth_labels, a.cnn_mask);
  augment_graph(out.graph, cfg, bank, seed);
  return out;
}

std::vector<std::vector<float>> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<std::vector<float>> snap;
  for (const Tensor& t : params) snap.emplace_back(t.values().begin(), t.values().end());
  return snap;
}

void restore_params(std::vector<Tensor> params, const std::vector<std::vector<float>>& snap) {
  for (size_t i = 0; i < params.size(); ++i)
    std::memcpy(params[i].data(), snap[i].data(), sizeof(float) * params[i].numel());
}

BinaryVolume apply_node_predictions(const BinaryVolume& cnn_mask, const RefinementGraph& g,
                                    const Tensor& probs) {
  BinaryVolume mask = cnn_mask;
  const int64_t n_test = probs.dim(0);
  for (int64_t n = 0; n < n_test; ++n) {
    const GraphNode& node = g.nodes[n];
    mask.values[mask.index(node.k, node.j, node.i)] = probs.values()[n * 2 + 1] > 0.5f ? 1 : 0;
  }
  return mask;
}

struct LossMask {
  std::vector<int8_t> labels;
  std::vector<uint8_t> mask;
};

// over the test-row prefix only: the forward's logits exclude imported rows
LossMask loss_mask_for(const RefinementGraph& g, bool certain_only) {
  LossMask lm;
  for (const GraphNode& n : g.nodes) {
    if (n.imported) break;
    lm.labels.push_back(n.label);
    const bool eligible =
        n.label != kUnlabeled && (!certain_only || n.role == NodeRole::certain);
    lm.mask.push_back(eligible ? 1 : 0);
  }
  return lm;
}

}  // namespace

static RefineOutcome refine_from_analysis(const VolumeAnalysis& a, const Volume& vol,
                                          const ExperimentConfig& cfg, const TrainGraphBank* bank,
                                          uint64_t seed) {
  RefineOutcome out;
  out.cnn_mask = a.cnn_mask;
  BuiltGraph built = build_refinement_graph(a, vol, cfg, bank, /*ground_truth=*/false, seed);
  if (built.pass_through) {
    out.mask = a.cnn_mask;
    out.pass_through = true;
    return out;
  }
  RefinementGraph& graph = built.graph;

  GnnConfig gcfg;
  gcfg.hidden = cfg.gnn_hidden;
  GnnModel model(gcfg, delta_from_graph(graph), key_combine(seed, 0x60de1u));
  Adam adam(model.parameters());
  LossMask lm = loss_mask_for(graph, /*certain_only=*/true);

  int64_t eligible = 0;
  for (uint8_t m : lm.mask) eligible += m;
  if (eligible == 0) {
    // nothing to train on; fall back to the CNN decision
    out.mask = a.cnn_mask;
    out.pass_through = true;
    return out;
  }

  double best_acc = -1.0;
  int since_best = 0;
  std::vector<std::vector<float>> best_params = snapshot_params(model.parameters());
  std::vector<GraphEdge> last_dynamic;
  for (int epoch = 0; epoch < cfg.refine_epochs; ++epoch) {
    Tape tape;
    double acc = 0.0;
    {
      TapeScope scope(tape);
      GnnForwardResult res = gnn_forward(model, graph, cfg.neighbors, bank);
      last_dynamic = res.final_dynamic_edges;
      Tensor loss = focal_loss(res.logits, lm.labels, lm.mask, cfg.focal);
      // certain-node pseudo-label accuracy drives early stopping
      int64_t hit = 0;
      for (int64_t n = 0; n < res.test_rows; ++n) {
        if (!lm.mask[n]) continue;
        const int pred = res.probs.values()[n * 2 + 1] > 0.5f ? 1 : 0;
        hit += pred == lm.labels[n] ? 1 : 0;
      }
      acc = static_cast<double>(hit) / static_cast<double>(eligible);
      tape.backward(loss);
    }
    adam.step(cfg.gcn_lr);
    if (acc > best_acc) {
      best_acc = acc;
      since_best = 0;
      best_params = snapshot_params(model.parameters());
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  restore_params(model.parameters(), best_params);

  GnnForwardResult final_res = gnn_forward(model, graph, cfg.neighbors, bank);
  out.mask = apply_node_predictions(a.cnn_mask, graph, final_res.probs);
  out.final_dynamic_edges = std::move(final_res.final_dynamic_edges);
  out.graph = std::move(graph);
  out.model.emplace(std::move(model));
  return out;
}

RefineOutcome refine_volume(const SegNet& net, const Volume& vol, const ExperimentConfig& cfg,
                            const TrainGraphBank* bank, uint64_t seed) {
  cfg.validate();
  VolumeAnalysis a = analyze_volume(net, vol, cfg.mcdo_passes, key_combine(seed, fnv1a64(vol.id)));
  return refine_from_analysis(a, vol, cfg, bank, seed);
}

RefineOutcome refine_with_model(const SegNet& net, const Volume& vol, const ExperimentConfig& cfg,
                                const GnnModel& model, const TrainGraphBank* bank, uint64_t seed) {
  cfg.validate();
  VolumeAnalysis a = analyze_volume(net, vol, cfg.mcdo_passes, key_combine(seed, fnv1a64(vol.id)));
  RefineOutcome out;
  out.cnn_mask = a.cnn_mask;
  BuiltGraph built = build_refinement_graph(a, vol, cfg, bank, /*ground_truth=*/false, seed);
  if (built.pass_through) {
    out.mask = a.cnn_mask;
    out.pass_through = true;
    return out;
  }
  GnnForwardResult res = gnn_forward(model, built.graph, cfg.neighbors, bank);
  out.mask = apply_node_predictions(a.cnn_mask, built.graph, res.probs);
  out.final_dynamic_edges = std::move(res.final_dynamic_edges);
  out.graph = std::move(built.graph);
  return out;
}

// ---- UAT ----------------------------------------------------------------------

UatOutcome uat_train(SegNet& net, const std::vector<Volume>& train, const ExperimentConfig& cfg,
                     const TrainGraphBank* bank, uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::empty_input, "uat_train: no training volumes");

  UatOutcome out{GnnModel(GnnConfig{3, cfg.gnn_hidden, 2}, 1.0f, 0), 0, ""};
  bool model_ready = false;

  const double pre_dice = mean_dice_on(net, train);
  if (pre_dice < 0.5)
    out.warning = "pre-UAT train dice " + std::to_string(pre_dice) +
                  " is below 0.5; the segmentation network looks unconverged";

  Adam unet_adam(net.parameters());
  std::optional<Adam> gcn_adam;
  Rng rng(key_combine(seed, 0x0a7u));

  for (int it = 0; it < cfg.uat_iterations; ++it) {
    const int64_t vi = rng.uniform_int(static_cast<int64_t>(train.size()));
    const Volume& vol = train[static_cast<size_t>(vi)];
    const uint64_t it_seed = key_combine(seed, static_cast<uint64_t>(it));

    VolumeAnalysis a = analyze_volume(net, vol, cfg.mcdo_passes, key_combine(it_seed, fnv1a64(vol.id)));
    BuiltGraph built =
        build_refinement_graph(a, vol, cfg, bank, /*ground_truth=*/true, it_seed);
    ++out.iterations_run;
    if (built.pass_through) continue;
    RefinementGraph& graph = built.graph;

    if (!model_ready) {
      out.model = GnnModel(GnnConfig{3, cfg.gnn_hidden, 2}, delta_from_graph(graph),
                           key_combine(seed, 0x9cd1u));
      gcn_adam.emplace(out.model.parameters());
      model_ready = true;
    }

    // graph step: supervised focal loss on ground-truth node labels
    LossMask lm = loss_mask_for(graph, /*certain_only=*/false);
    {
      Tape tape;
      {
        TapeScope scope(tape);
        GnnForwardResult res = gnn_forward(out.model, graph, cfg.neighbors, bank);
        Tensor loss = focal_loss(res.logits, lm.labels, lm.mask, cfg.focal);
        tape.backward(loss);
      }
      gcn_adam->step(cfg.gcn_lr);
    }

    // one-slice dice step for the segmentation network, drawn from the
    // slices the graph actually touches
    std::set<int32_t> slices;
    for (const GraphNode& n : graph.nodes)
      if (!n.imported) slices.insert(n.k);
    std::vector<int32_t> slice_list(slices.begin(), slices.end());
    const int32_t k = slice_list[static_cast<size_t>(rng.uniform_int(
        static_cast<int64_t>(slice_list.size())))];
    SliceBatch batch = SliceBatch::from_volume(vol, k);
    {
      Tape tape;
      {
        TapeScope scope(tape);
        Tensor probs = net.forward(batch.intensities, true, key_combine(it_seed, 0x51cceu));
        Tensor loss = dice_loss(probs, batch.labels);
        tape.backward(loss);
      }
      unet_adam.step(cfg.unet_lr);
    }
  }
  if (!model_ready)
    throw Error(ErrorCode::invalid_state, "uat_train: every sampled volume passed through; no graphs built");
  return out;
}

// ---- U-Net dataset training ------------------------------------------------------

float train_unet(SegNet& net, const std::vector<Volume>& train, const UnetTrainConfig& cfg) {
  if (train.empty()) throw Error(ErrorCode::empty_input, "train_unet: no volumes");
  // index foreground-bearing and background slices
  std::vector<std::pair<int32_t, int32_t>> fg, bg;  // (volume, slice)
  for (size_t vi = 0; vi < train.size(); ++vi) {
    const Volume& v = train[vi];
    if (!v.has_labels()) throw Error(ErrorCode::invalid_argument, "train_unet: volume lacks labels");
    for (int64_t k = 0; k < v.depth; ++k) {
      const uint8_t* l = v.labels.data() + k * v.height * v.width;
      bool any = false;
      for (int64_t s = 0; s < v.height * v.width && !any; ++s) any = l[s] != 0;
      (any ? fg : bg).emplace_back(static_cast<int32_t>(vi), static_cast<int32_t>(k));
    }
  }
  if (fg.empty()) throw Error(ErrorCode::invalid_argument, "train_unet: dataset has no foreground");

  SegNetTrainer trainer(net, key_combine(cfg.seed, 0x0317u));
  Rng rng(key_combine(cfg.seed, 0x7a31u));
  float loss = 1.0f;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const bool pick_fg = bg.empty() || rng.uniform() < 0.5;
    const auto& pool = pick_fg ? fg : bg;
    const auto [vi, k] = pool[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(pool.size())))];
    SliceBatch batch = SliceBatch::from_volume(train[static_cast<size_t>(vi)], k);
    loss = trainer.train_step(batch, cfg.lr);
  }
  return loss;
}

double mean_dice_on(const SegNet& net, const std::vector<Volume>& vols) {
  if (vols.empty()) throw Error(ErrorCode::empty_input, "mean_dice_on: no volumes");
  double acc = 0.0;
  for (const Volume& v : vols) {
    BinaryVolume pred = segment_volume(net, v);
    BinaryVolume truth{v.depth, v.height, v.width, v.labels};
    acc += dice_score(pred, truth);
  }
  return acc / static_cast<double>(vols.size());
}

// ---- matrix -----------------------------------------------------------------------

MatrixResult run_matrix(const Dataset& data, const std::vector<ExperimentConfig>& configs,
                        const UnetTrainConfig& unet_cfg, const MatrixHooks& hooks) {
  MatrixResult result;
  if (data.train.empty() || data.test.empty())
    throw Error(ErrorCode::empty_input, "run_matrix: dataset must have train and test volumes");

  // per-seed shared state: one trained network, one bank, cached test fields
  std::map<uint64_t, SegNet> nets;
  std::map<uint64_t, TrainGraphBank> banks;
  std::map<std::pair<uint64_t, std::string>, VolumeAnalysis> analyses;

  auto net_for = [&](uint64_t seed, const ExperimentConfig& cfg) -> SegNet& {
    auto it = nets.find(seed);
    if (it != nets.end()) return it->second;
    SegNet net(unet_cfg.net, seed);
    UnetTrainConfig uc = unet_cfg;
    uc.seed = seed;
    train_unet(net, data.train, uc);
    (void)cfg;
    return nets.emplace(seed, std::move(net)).first->second;
  };

  auto analysis_for = [&](uint64_t seed, const Volume& vol, const ExperimentConfig& cfg)
      -> const VolumeAnalysis& {
    const auto key = std::make_pair(seed, vol.id);
    auto it = analyses.find(key);
    if (it != analyses.end()) return it->second;
    VolumeAnalysis a = analyze_volume(net_for(seed, cfg), vol, cfg.mcdo_passes,
                                      key_combine(seed, fnv1a64(vol.id)));
    return analyses.emplace(key, std::move(a)).first->second;
  };

  auto bank_for = [&](uint64_t seed, const ExperimentConfig& cfg) -> const TrainGraphBank& {
    auto it = banks.find(seed);
    if (it != banks.end()) return it->second;
    const SegNet& net = net_for(seed, cfg);
    std::vector<RefinementGraph> graphs;
    for (const Volume& vol : data.train) {
      VolumeAnalysis a =
          analyze_volume(net, vol, cfg.mcdo_passes, key_combine(seed, fnv1a64(vol.id)));
      NodeSelection sel = select_nodes(a.field.entropy, vol.depth, vol.height, vol.width, a.cnn_mask,
                                       cfg.tau, a.field.classes);
      if (sel.pass_through) continue;
      RefinementGraph g = build_graph(a.field, vol, sel, cfg.edge_weights);
      assign_labels(g, vol, /*ground_truth=*/true, a.cnn_mask);
      graphs.push_back(std::move(g));
    }
    if (graphs.empty())
      throw Error(ErrorCode::invalid_state, "run_matrix: no train volume produced a graph for the bank");
    TrainGraphBank bank = build_bank(std::move(graphs), cfg.neighbors.fps_ratio,
                                     key_combine(seed, 0xba9cu));
    return banks.emplace(seed, std::move(bank)).first->second;
  };

  for (const ExperimentConfig& row_cfg : configs) {
    MatrixRowResult row;
    row.experiment = experiment_name(row_cfg.experiment);
    row.report.experiment = row.experiment;
    row.report.seeds = row_cfg.seeds;
    try {
      ExperimentConfig cfg = row_cfg;
      cfg.neighbors.mode = experiment_mode(cfg.experiment);
      cfg.neighbors = [&] {
        NeighborConfig nc = NeighborConfig::with_mode(experiment_mode(cfg.experiment));
        nc.k = row_cfg.neighbors.k;
        nc.fps_ratio = row_cfg.neighbors.fps_ratio;
        nc.random_count = row_cfg.neighbors.random_count;
        return nc;
      }();
      cfg.validate();
      const bool needs_bank = cfg.neighbors.mode == NeighborMode::inter;

      for (uint64_t seed : cfg.seeds) {
        const TrainGraphBank* bank = needs_bank ? &bank_for(seed, cfg) : nullptr;
        if (experiment_uses_uat(cfg.experiment)) {
          SegNet net_copy(unet_cfg.net, seed);
          net_copy.copy_params_from(net_for(seed, cfg));
          UatOutcome uat = uat_train(net_copy, data.train, cfg, bank, seed);
          for (const Volume& vol : data.test) {
            RefineOutcome r = refine_with_model(net_copy, vol, cfg, uat.model, bank, seed);
            BinaryVolume truth{vol.depth, vol.height, vol.width, vol.labels};
            row.report.entries.push_back({seed, vol.id, dice_score(r.mask, truth), r.pass_through});
            if (hooks.on_volume) hooks.on_volume(cfg.experiment, seed, vol, r);
          }
        } else {
          for (const Volume& vol : data.test) {
            const VolumeAnalysis& a = analysis_for(seed, vol, cfg);
            RefineOutcome r = refine_from_analysis(a, vol, cfg, bank, seed);
            BinaryVolume truth{vol.depth, vol.height, vol.width, vol.labels};
            row.report.entries.push_back({seed, vol.id, dice_score(r.mask, truth), r.pass_through});
            if (hooks.on_volume) hooks.on_volume(cfg.experiment, seed, vol, r);
          }
        }
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---- neighbor inspection --------------------------------------------------------

NeighborReport neighbor_inspect(const RefinementGraph& graph,
                                const std::vector<GraphEdge>& dynamic_edges, const Volume& labels_volume,
                                uint64_t seed, int64_t max_samples) {
  if (!labels_volume.has_labels())
    throw Error(ErrorCode::invalid_argument, "neighbor_inspect: volume lacks labels");
  NeighborReport rep;

  auto truth_label = [&](const GraphNode& n) -> int {
    if (n.imported) return n.label;  // bank nodes carry their own ground truth
    return labels_volume.label_at(n.k, n.j, n.i);
  };

  int64_t same = 0, total = 0;
  for (const GraphEdge& e : dynamic_edges) {
    const int a = truth_label(graph.nodes[e.src]);
    const int b = truth_label(graph.nodes[e.dst]);
    if (a < 0 || b < 0) continue;
    ++total;
    same += a == b ? 1 : 0;
  }
  rep.dynamic_edges = total;
  rep.agreement_rate = total > 0 ? static_cast<double>(same) / static_cast<double>(total) : 0.0;

  // permutation baseline: same destinations, uniformly random partners
  Rng rng(key_combine(seed, 0x8e11u));
  int64_t rsame = 0, rtotal = 0;
  const int64_t n = graph.node_count();
  for (const GraphEdge& e : dynamic_edges) {
    const GraphNode& dst = graph.nodes[e.dst];
    int64_t pick = rng.uniform_int(n);
    while (pick == e.dst) pick = rng.uniform_int(n);
    const int a = truth_label(graph.nodes[static_cast<size_t>(pick)]);
    const int b = truth_label(dst);
    if (a < 0 || b < 0) continue;
    ++rtotal;
    rsame += a == b ? 1 : 0;
  }
  rep.random_baseline = rtotal > 0 ? static_cast<double>(rsame) / static_cast<double>(rtotal) : 0.0;

  // label-map patches around a few selected neighbors (own-volume ones)
  constexpr int64_t kPatch = 11;
  std::set<uint32_t> seen;
  for (const GraphEdge& e : dynamic_edges) {
    if (static_cast<int64_t>(rep.samples.size()) >= max_samples) break;
    if (graph.nodes[e.src].imported) continue;
    if (!seen.insert(e.dst).second) continue;
    const GraphNode& node = graph.nodes[e.dst];
    const GraphNode& nbr = graph.nodes[e.src];
    NeighborReport::Sample s;
    s.node_i = node.i;
    s.node_j = node.j;
    s.node_k = node.k;
    s.nbr_i = nbr.i;
    s.nbr_j = nbr.j;
    s.nbr_k = nbr.k;
    s.neighbor_patch.resize(kPatch * kPatch, 0);
    for (int64_t dj = 0; dj < kPatch; ++dj)
      for (int64_t di = 0; di < kPatch; ++di) {
        const int64_t j = nbr.j + dj - kPatch / 2;
        const int64_t i = nbr.i + di - kPatch / 2;
        if (j < 0 || j >= labels_volume.height || i < 0 || i >= labels_volume.width) continue;
        s.neighbor_patch[dj * kPatch + di] = labels_volume.label_at(nbr.k, j, i);
      }
    rep.samples.push_back(std::move(s));
  }
  return rep;
}

// ---- reports ----------------------------------------------------------------------

std::string report_csv(const std::vector<MatrixRowResult>& rows) {
  std::ostringstream os;
  os << "experiment,seed,volume_id,dice\n";
  for (const MatrixRowResult& row : rows)
    for (const DiceReport::Entry& e : row.report.entries)
      os << row.experiment << "," << e.seed << "," << e.volume_id << "," << std::setprecision(10)
         << e.dice << "\n";
  return os.str();
}

std::string report_summary_json(const std::vector<MatrixRowResult>& rows) {
  json j;
  j["schema"] = "ugr.dice_report.v1";
  json table = json::array();
  for (const MatrixRowResult& row : rows) {
    json r;
    r["experiment"] = row.experiment;
    r["mean"] = row.report.mean();
    r["std"] = row.report.stddev();
    r["seeds"] = row.report.seeds;
    if (!row.error.empty()) r["error"] = row.error;
    json entries = json::array();
    for (const DiceReport::Entry& e : row.report.entries)
      entries.push_back({{"seed", e.seed},
                         {"volume_id", e.volume_id},
                         {"dice", e.dice},
                         {"pass_through", e.pass_through}});
    r["entries"] = std::move(entries);
    table.push_back(std::move(r));
  }
  j["rows"] = std::move(table);
  return j.dump(2) + "\n";
}

std::vector<uint8_t> overlay_rgb(const Volume& vol, const BinaryVolume& pred, int64_t slice_k) {
  if (!vol.has_labels()) throw Error(ErrorCode::invalid_argument, "overlay_rgb: volume lacks labels");
  const int64_t h = vol.height, w = vol.width;
  std::vector<uint8_t> rgb(static_cast<size_t>(h * w * 3));
  for (int64_t j = 0; j < h; ++j)
    for (int64_t i = 0; i < w; ++i) {
      const int64_t p = (j * w + i) * 3;
      const bool pr = pred.at(slice_k, j, i) != 0;
      const bool tr = vol.label_at(slice_k, j, i) != 0;
      if (pr && tr) {  // true positive
        rgb[p] = 0;
        rgb[p + 1] = 200;
        rgb[p + 2] = 0;
      } else if (pr && !tr) {  // false positive
        rgb[p] = 220;
        rgb[p + 1] = 0;
        rgb[p + 2] = 0;
      } else if (!pr && tr) {  // false negative
        rgb[p] = 0;
        rgb[p + 1] = 0;
        rgb[p + 2] = 220;
      } else {
        const uint8_t g = static_cast<uint8_t>(std::clamp(vol.at(slice_k, j, i), 0.0f, 1.0f) * 255.0f);
        rgb[p] = g;
        rgb[p + 1] = g;
        rgb[p + 2] = g;
      }
    }
  return rgb;
}

}  // namespace ugr
