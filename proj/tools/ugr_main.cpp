// Command-line driver: dataset synthesis, U-Net training, MCDO analysis,
// graph building, refinement, UAT, evaluation, the experiment matrix, and
// neighbor inspection. Artifacts land under <out_dir>/<config_hash>/ with
// manifests recording input hashes.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ugr/config.hpp"
#include "ugr/io.hpp"
#include "ugr/pipelines.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ugr;

namespace {

struct Ctx {
  RunConfig cfg;
  fs::path config_path;
  fs::path run_dir;  // out_dir / config_hash

  fs::path dataset_json() const { return cfg.data_dir / "dataset.json"; }
  fs::path volume_json(const std::string& id) const { return cfg.data_dir / "vols" / (id + ".json"); }
  fs::path segnet_ckpt(uint64_t seed) const {
    return run_dir / ("segnet_seed" + std::to_string(seed) + ".ckpt");
  }
  fs::path bank_file(uint64_t seed) const {
    return run_dir / ("bank_seed" + std::to_string(seed) + ".bin");
  }
};

Ctx make_ctx(const std::string& config_path) {
  Ctx ctx;
  ctx.config_path = config_path;
  ctx.cfg = RunConfig::load(config_path);
  if (const char* e = std::getenv("UGR_OUT_DIR"); e && *e) ctx.cfg.out_dir = e;
  ctx.run_dir = ctx.cfg.out_dir / ctx.cfg.config_hash();
  return ctx;
}

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* e = std::getenv("UGR_THREADS"); e && *e) omp_set_num_threads(std::atoi(e));
#endif
}

void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

// ---- dataset ------------------------------------------------------------------

void cmd_synth(const Ctx& ctx) {
  const SynthConfig& sc = ctx.cfg.synth;
  Dataset data = synth_dataset(sc);
  json dj;
  dj["schema"] = "ugr.dataset.v1";
  dj["config_hash"] = ctx.cfg.config_hash();
  dj["seed"] = sc.seed;
  dj["dims"] = {sc.dim, sc.dim, sc.dim};
  json vols = json::array();
  Manifest m;
  m.subcommand = "synth";
  m.config_hash = ctx.cfg.config_hash();
  m.seed = sc.seed;
  auto dump = [&](const std::vector<Volume>& set, const char* split) {
    for (const Volume& v : set) {
      const fs::path p = ctx.volume_json(v.id);
      save_volume(p, v);
      vols.push_back({{"id", v.id}, {"split", split}, {"file", "vols/" + v.id + ".json"}});
      m.outputs["vols/" + v.id + ".json"] = hash_hex(hash_file(p));
      m.outputs["vols/" + v.id + ".raw"] =
          hash_hex(hash_file(ctx.cfg.data_dir / "vols" / (v.id + ".raw")));
    }
  };
  dump(data.train, "train");
  dump(data.test, "test");
  dj["volumes"] = std::move(vols);
  atomic_write(ctx.dataset_json(), dj.dump(2) + "\n");
  m.outputs["dataset.json"] = hash_hex(hash_file(ctx.dataset_json()));
  write_manifest(ctx.dataset_json(), m);
  std::cout << "wrote " << (data.train.size() + data.test.size()) << " volumes under "
            << ctx.cfg.data_dir << "\n";
}

uint64_t dataset_hash(const Ctx& ctx) {
  require(fs::exists(ctx.dataset_json()), ErrorCode::missing_artifact,
          "dataset not found at " + ctx.dataset_json().string() + "; run `synth` first");
  uint64_t h = hash_file(ctx.dataset_json());
  const auto bytes = read_file_bytes(ctx.dataset_json());
  const json dj = json::parse(bytes);
  for (const auto& v : dj.at("volumes"))
    h = key_combine(h, hash_file(ctx.cfg.data_dir / v.at("file").get<std::string>()));
  return h;
}

Dataset load_dataset(const Ctx& ctx) {
  require(fs::exists(ctx.dataset_json()), ErrorCode::missing_artifact,
          "dataset not found at " + ctx.dataset_json().string() + "; run `synth` first");
  const auto bytes = read_file_bytes(ctx.dataset_json());
  const json dj = json::parse(bytes);
  Dataset data;
  for (const auto& v : dj.at("volumes")) {
    Volume vol = load_volume(ctx.cfg.data_dir / v.at("file").get<std::string>());
    (v.at("split").get<std::string>() == "train" ? data.train : data.test).push_back(std::move(vol));
  }
  return data;
}

// ---- unet ----------------------------------------------------------------------

void cmd_train_unet(const Ctx& ctx, uint64_t seed) {
  Dataset data = load_dataset(ctx);
  SegNet net(ctx.cfg.segnet, seed);
  UnetTrainConfig uc = ctx.cfg.unet_train;
  uc.net = ctx.cfg.segnet;
  uc.seed = seed;
  const float loss = train_unet(net, data.train, uc);
  const double dice = mean_dice_on(net, data.train);
  save_segnet(ctx.segnet_ckpt(seed), net, seed, uc.steps);
  Manifest m;
  m.subcommand = "train-unet";
  m.config_hash = ctx.cfg.config_hash();
  m.seed = seed;
  m.inputs["dataset"] = hash_hex(dataset_hash(ctx));
  m.outputs[ctx.segnet_ckpt(seed).filename().string()] = hash_hex(hash_file(ctx.segnet_ckpt(seed)));
  write_manifest(ctx.segnet_ckpt(seed), m);
  std::cout << "trained segnet seed " << seed << ": final loss " << loss << ", train dice " << dice
            << "\n";
}

SegNet load_net(const Ctx& ctx, uint64_t seed) {
  require(fs::exists(ctx.segnet_ckpt(seed)), ErrorCode::missing_artifact,
          "segnet checkpoint missing for seed " + std::to_string(seed) + "; run `train-unet` first");
  return load_segnet(ctx.segnet_ckpt(seed));
}

// ---- mcdo / graphs -----------------------------------------------------------------

struct FieldPaths {
  fs::path sidecar, stack, e, u;
};

FieldPaths field_paths(const Ctx& ctx, const std::string& vol_id, uint64_t seed) {
  const std::string stem = vol_id + "_seed" + std::to_string(seed);
  const fs::path dir = ctx.run_dir / "mcdo";
  return {dir / (stem + ".field.json"), dir / (stem + ".stack.raw"), dir / (stem + ".e.raw"),
          dir / (stem + ".u.raw")};
}

void write_field(const Ctx& ctx, const Volume& vol, uint64_t seed, const ProbabilityStack& stack,
                 const UncertaintyField& field) {
  FieldPaths p = field_paths(ctx, vol.id, seed);
  atomic_write(p.stack, stack.probs.data(), stack.probs.size() * sizeof(float));
  atomic_write(p.e, field.expectation.data(), field.expectation.size() * sizeof(float));
  atomic_write(p.u, field.entropy.data(), field.entropy.size() * sizeof(float));
  json j;
  j["schema"] = "ugr.field.v1";
  j["volume_id"] = vol.id;
  j["dims"] = {field.depth, field.height, field.width};
  j["classes"] = field.classes;
  j["passes"] = stack.passes;
  j["stack"] = p.stack.filename().string();
  j["expectation"] = p.e.filename().string();
  j["entropy"] = p.u.filename().string();
  atomic_write(p.sidecar, j.dump(2) + "\n");
  Manifest m;
  m.subcommand = "mcdo";
  m.config_hash = ctx.cfg.config_hash();
  m.seed = seed;
  m.inputs["dataset"] = hash_hex(dataset_hash(ctx));
  m.inputs["segnet"] = hash_hex(hash_file(ctx.segnet_ckpt(seed)));
  m.outputs[p.stack.filename().string()] = hash_hex(hash_file(p.stack));
  m.outputs[p.e.filename().string()] = hash_hex(hash_file(p.e));
  m.outputs[p.u.filename().string()] = hash_hex(hash_file(p.u));
  write_manifest(p.sidecar, m);
}

UncertaintyField load_field(const Ctx& ctx, const std::string& vol_id, uint64_t seed) {
  FieldPaths p = field_paths(ctx, vol_id, seed);
  require(fs::exists(p.sidecar), ErrorCode::missing_artifact,
          "uncertainty field missing for " + vol_id + "; run `mcdo` first");
  const json j = json::parse(read_file_bytes(p.sidecar));
  UncertaintyField f;
  const auto dims = j.at("dims").get<std::vector<int64_t>>();
  f.depth = dims[0];
  f.height = dims[1];
  f.width = dims[2];
  f.classes = j.at("classes").get<int64_t>();
  const auto e = read_file_bytes(ctx.run_dir / "mcdo" / j.at("expectation").get<std::string>());
  const auto u = read_file_bytes(ctx.run_dir / "mcdo" / j.at("entropy").get<std::string>());
  f.expectation.resize(e.size() / sizeof(float));
  f.entropy.resize(u.size() / sizeof(float));
  std::memcpy(f.expectation.data(), e.data(), e.size());
  std::memcpy(f.entropy.data(), u.data(), u.size());
  return f;
}

void cmd_mcdo(const Ctx& ctx, uint64_t seed, const std::string& only_volume) {
  Dataset data = load_dataset(ctx);
  SegNet net = load_net(ctx, seed);
  int64_t written = 0;
  for (const auto* set : {&data.test, &data.train}) {
    for (const Volume& vol : *set) {
      if (!only_volume.empty() && vol.id != only_volume) continue;
      if (set == &data.train && only_volume.empty()) continue;  // default: test volumes only
      ProbabilityStack stack =
          mcdo_stack(net, vol, ctx.cfg.experiment.mcdo_passes, key_combine(seed, fnv1a64(vol.id)));
      write_field(ctx, vol, seed, stack, uncertainty_from_stack(stack));
      ++written;
    }
  }
  require(written > 0, ErrorCode::invalid_argument, "no volume matched " + only_volume);
  std::cout << "wrote " << written << " uncertainty fields under " << (ctx.run_dir / "mcdo") << "\n";
}

void cmd_build_graph(const Ctx& ctx, uint64_t seed, const std::string& only_volume) {
  Dataset data = load_dataset(ctx);
  int64_t written = 0;
  for (const auto* set : {&data.test, &data.train}) {
    for (const Volume& vol : *set) {
      if (!only_volume.empty() && vol.id != only_volume) continue;
      if (set == &data.train && only_volume.empty()) continue;
      UncertaintyField field = load_field(ctx, vol.id, seed);
      BinaryVolume cnn_mask = expectation_mask(field);
      NodeSelection sel = select_nodes(field.entropy, vol.depth, vol.height, vol.width, cnn_mask,
                                       ctx.cfg.experiment.tau, field.classes);
      const std::string stem = vol.id + "_seed" + std::to_string(seed);
      const fs::path dir = ctx.run_dir / "graphs";
      if (sel.pass_through) {
        std::cout << vol.id << ": " << sel.warning << "\n";
        continue;
      }
      RefinementGraph g = build_graph(field, vol, sel, ctx.cfg.experiment.edge_weights);
      for (GraphNode& n : g.nodes)
        if (n.role == NodeRole::certain) n.label = static_cast<int8_t>(cnn_mask.at(n.k, n.j, n.i));
      const fs::path jp = dir / (stem + ".graph.json");
      const fs::path bp = dir / (stem + ".graph.bin");
      atomic_write(jp, graph_to_json(g));
      atomic_write(bp, graph_to_binary(g));
      Manifest m;
      m.subcommand = "build-graph";
      m.config_hash = ctx.cfg.config_hash();
      m.seed = seed;
      m.inputs["field"] = hash_hex(hash_file(field_paths(ctx, vol.id, seed).sidecar));
      m.outputs[jp.filename().string()] = hash_hex(hash_file(jp));
      m.outputs[bp.filename().string()] = hash_hex(hash_file(bp));
      write_manifest(bp, m);
      ++written;
    }
  }
  std::cout << "wrote " << written << " graphs under " << (ctx.run_dir / "graphs") << "\n";
}

// ---- bank ----------------------------------------------------------------------

TrainGraphBank build_bank_for(const Ctx& ctx, const Dataset& data, const SegNet& net, uint64_t seed,
                              const ExperimentConfig& cfg) {
  const fs::path cache = ctx.bank_file(seed);
  if (fs::exists(cache)) return load_bank(cache);
  std::vector<RefinementGraph> graphs;
  for (const Volume& vol : data.train) {
    ProbabilityStack stack = mcdo_stack(net, vol, cfg.mcdo_passes, key_combine(seed, fnv1a64(vol.id)));
    UncertaintyField field = uncertainty_from_stack(stack);
    BinaryVolume cnn_mask = expectation_mask(field);
    NodeSelection sel =
        select_nodes(field.entropy, vol.depth, vol.height, vol.width, cnn_mask, cfg.tau, field.classes);
    if (sel.pass_through) continue;
    RefinementGraph g = build_graph(field, vol, sel, cfg.edge_weights);
    for (GraphNode& n : g.nodes) n.label = static_cast<int8_t>(vol.label_at(n.k, n.j, n.i));
    graphs.push_back(std::move(g));
  }
  require(!graphs.empty(), ErrorCode::invalid_state, "no train volume produced a graph for the bank");
  TrainGraphBank bank = build_bank(std::move(graphs), cfg.neighbors.fps_ratio, key_combine(seed, 0xba9cu));
  save_bank(cache, bank);
  Manifest m;
  m.subcommand = "bank";
  m.config_hash = ctx.cfg.config_hash();
  m.seed = seed;
  m.inputs["dataset"] = hash_hex(dataset_hash(ctx));
  m.inputs["segnet"] = hash_hex(hash_file(ctx.segnet_ckpt(seed)));
  m.outputs[cache.filename().string()] = hash_hex(hash_file(cache));
  write_manifest(cache, m);
  return bank;
}

// ---- refine / uat / eval / matrix ------------------------------------------------

ExperimentConfig row_config(const Ctx& ctx, Experiment e) {
  ExperimentConfig cfg = ctx.cfg.experiment;
  cfg.experiment = e;
  NeighborConfig nc = NeighborConfig::with_mode(experiment_mode(e));
  nc.k = ctx.cfg.experiment.neighbors.k;
  nc.fps_ratio = ctx.cfg.experiment.neighbors.fps_ratio;
  nc.random_count = ctx.cfg.experiment.neighbors.random_count;
  cfg.neighbors = nc;
  return cfg;
}

fs::path mask_path(const Ctx& ctx, const std::string& experiment, const std::string& vol_id,
                   uint64_t seed) {
  return ctx.run_dir / "refine" / experiment / "masks" /
         (vol_id + "_seed" + std::to_string(seed) + ".mask.json");
}

void write_refined_mask(const Ctx& ctx, const std::string& experiment, const Volume& vol, uint64_t seed,
                        const RefineOutcome& out) {
  const fs::path p = mask_path(ctx, experiment, vol.id, seed);
  save_mask(p, out.mask, vol.id);
  Manifest m;
  m.subcommand = "refine";
  m.config_hash = ctx.cfg.config_hash();
  m.seed = seed;
  m.inputs["dataset"] = hash_hex(dataset_hash(ctx));
  m.inputs["segnet"] = hash_hex(hash_file(ctx.segnet_ckpt(seed)));
  m.outputs[p.filename().string()] = hash_hex(hash_file(p));
  write_manifest(p, m);
}

void write_report(const fs::path& dir, const std::vector<MatrixRowResult>& rows) {
  atomic_write(dir / "report.csv", report_csv(rows));
  atomic_write(dir / "summary.json", report_summary_json(rows));
}

void cmd_refine(const Ctx& ctx) {
  Dataset data = load_dataset(ctx);
  const Experiment e = ctx.cfg.experiment.experiment;
  require(!experiment_uses_uat(e), ErrorCode::invalid_argument,
          "experiment " + std::string(experiment_name(e)) + " is a UAT setup; use `uat`");
  ExperimentConfig cfg = row_config(ctx, e);
  MatrixRowResult row;
  row.experiment = experiment_name(e);
  row.report.experiment = row.experiment;
  row.report.seeds = cfg.seeds;
  for (uint64_t seed : cfg.seeds) {
    SegNet net = load_net(ctx, seed);
    const uint64_t ckpt_before = params_hash(net.parameters());
    std::optional<TrainGraphBank> bank;
    if (cfg.neighbors.mode == NeighborMode::inter)
      bank = build_bank_for(ctx, data, net, seed, cfg);
    for (const Volume& vol : data.test) {
      RefineOutcome out = refine_volume(net, vol, cfg, bank ? &*bank : nullptr, seed);
      require(params_hash(net.parameters()) == ckpt_before, ErrorCode::invalid_state,
              "refinement must not touch the segmentation network");
      BinaryVolume truth{vol.depth, vol.height, vol.width, vol.labels};
      row.report.entries.push_back({seed, vol.id, dice_score(out.mask, truth), out.pass_through});
      write_refined_mask(ctx, row.experiment, vol, seed, out);
    }
  }
  write_report(ctx.run_dir / "refine" / row.experiment, {row});
  std::cout << row.experiment << ": mean dice " << row.report.mean() << " +- " << row.report.stddev()
            << "\n";
}

void cmd_uat(const Ctx& ctx) {
  Dataset data = load_dataset(ctx);
  const Experiment e = ctx.cfg.experiment.experiment;
  require(experiment_uses_uat(e), ErrorCode::invalid_argument,
          "experiment " + std::string(experiment_name(e)) + " is not a UAT setup; use `refine`");
  ExperimentConfig cfg = row_config(ctx, e);
  MatrixRowResult row;
  row.experiment = experiment_name(e);
  row.report.experiment = row.experiment;
  row.report.seeds = cfg.seeds;
  for (uint64_t seed : cfg.seeds) {
    SegNet net = load_net(ctx, seed);
    std::optional<TrainGraphBank> bank;
    if (cfg.neighbors.mode == NeighborMode::inter)
      bank = build_bank_for(ctx, data, net, seed, cfg);
    UatOutcome uat = uat_train(net, data.train, cfg, bank ? &*bank : nullptr, seed);
    if (!uat.warning.empty()) std::cerr << "warning: " << uat.warning << "\n";
    const fs::path dir = ctx.run_dir / "uat" / row.experiment;
    save_segnet(dir / ("segnet_seed" + std::to_string(seed) + ".ckpt"), net, seed, 0);
    save_gnn(dir / ("gnn_seed" + std::to_string(seed) + ".ckpt"), uat.model, cfg.neighbors, seed);
    for (const Volume& vol : data.test) {
      RefineOutcome out = refine_with_model(net, vol, cfg, uat.model, bank ? &*bank : nullptr, seed);
      BinaryVolume truth{vol.depth, vol.height, vol.width, vol.labels};
      row.report.entries.push_back({seed, vol.id, dice_score(out.mask, truth), out.pass_through});
      write_refined_mask(ctx, row.experiment, vol, seed, out);
    }
  }
  write_report(ctx.run_dir / "refine" / row.experiment, {row});
  std::cout << row.experiment << ": mean dice " << row.report.mean() << " +- " << row.report.stddev()
            << "\n";
}

void cmd_eval(const Ctx& ctx, const std::string& experiment) {
  Dataset data = load_dataset(ctx);
  const uint64_t dhash = dataset_hash(ctx);
  MatrixRowResult row;
  row.experiment = experiment;
  row.report.experiment = experiment;
  row.report.seeds = ctx.cfg.experiment.seeds;
  for (uint64_t seed : ctx.cfg.experiment.seeds) {
    for (const Volume& vol : data.test) {
      const fs::path p = mask_path(ctx, experiment, vol.id, seed);
      require(fs::exists(p), ErrorCode::missing_artifact,
              "refined mask missing at " + p.string() + "; run `refine` or `uat` first");
      Manifest m = read_manifest(p);
      require(m.inputs.count("dataset") && m.inputs.at("dataset") == hash_hex(dhash),
              ErrorCode::invalid_state,
              "mask " + p.string() + " was produced from a different dataset; refusing to evaluate");
      require(m.config_hash == ctx.cfg.config_hash(), ErrorCode::invalid_state,
              "mask " + p.string() + " was produced under a different config; refusing to evaluate");
      BinaryVolume mask = load_mask(p);
      BinaryVolume truth{vol.depth, vol.height, vol.width, vol.labels};
      row.report.entries.push_back({seed, vol.id, dice_score(mask, truth), false});
    }
  }
  write_report(ctx.run_dir / "eval" / experiment, {row});
  std::cout << experiment << ": mean dice " << row.report.mean() << " +- " << row.report.stddev()
            << "\n";
}

void cmd_matrix(const Ctx& ctx) {
  Dataset data = load_dataset(ctx);
  std::vector<ExperimentConfig> rows;
  for (const std::string& name : ctx.cfg.matrix_experiments)
    rows.push_back(row_config(ctx, experiment_from(name)));
  UnetTrainConfig uc = ctx.cfg.unet_train;
  uc.net = ctx.cfg.segnet;

  const fs::path dir = ctx.run_dir / "matrix";
  MatrixHooks hooks;
  hooks.on_volume = [&](Experiment e, uint64_t seed, const Volume& vol, const RefineOutcome& out) {
    // per-slice overlays wherever prediction or truth is present
    BinaryVolume truth{vol.depth, vol.height, vol.width, vol.labels};
    for (int64_t k = 0; k < vol.depth; ++k) {
      bool any = false;
      for (int64_t s = 0; s < vol.height * vol.width && !any; ++s)
        any = out.mask.values[k * vol.height * vol.width + s] ||
              vol.labels[k * vol.height * vol.width + s];
      if (!any) continue;
      const fs::path p = dir / "overlays" / experiment_name(e) /
                         (vol.id + "_seed" + std::to_string(seed) + "_k" + std::to_string(k) + ".png");
      write_rgb_png(p, vol.width, vol.height, overlay_rgb(vol, out.mask, k));
    }
    write_refined_mask(ctx, std::string("matrix_") + experiment_name(e), vol, seed, out);
  };

  MatrixResult result = run_matrix(data, rows, uc, hooks);
  atomic_write(dir / "results.csv", report_csv(result.rows));
  atomic_write(dir / "summary.json", report_summary_json(result.rows));
  Manifest m;
  m.subcommand = "matrix";
  m.config_hash = ctx.cfg.config_hash();
  m.seed = ctx.cfg.seed;
  m.inputs["dataset"] = hash_hex(dataset_hash(ctx));
  m.outputs["results.csv"] = hash_hex(hash_file(dir / "results.csv"));
  m.outputs["summary.json"] = hash_hex(hash_file(dir / "summary.json"));
  write_manifest(dir / "results.csv", m);

  for (const MatrixRowResult& row : result.rows) {
    if (!row.error.empty())
      std::cout << row.experiment << ": FAILED (" << row.error << ")\n";
    else
      std::cout << row.experiment << ": mean dice " << row.report.mean() << " +- "
                << row.report.stddev() << "\n";
  }
}

void cmd_inspect(const Ctx& ctx, const std::string& only_volume) {
  Dataset data = load_dataset(ctx);
  const Experiment e = ctx.cfg.experiment.experiment;
  require(!experiment_uses_uat(e), ErrorCode::invalid_argument,
          "neighbor inspection runs on refinement setups");
  ExperimentConfig cfg = row_config(ctx, e);
  require(cfg.neighbors.mode == NeighborMode::intra || cfg.neighbors.mode == NeighborMode::inter,
          ErrorCode::invalid_argument, "neighbor inspection needs a dynamic-edge experiment");
  const uint64_t seed = cfg.seeds.front();
  SegNet net = load_net(ctx, seed);
  std::optional<TrainGraphBank> bank;
  if (cfg.neighbors.mode == NeighborMode::inter) bank = build_bank_for(ctx, data, net, seed, cfg);

  json report = json::array();
  for (const Volume& vol : data.test) {
    if (!only_volume.empty() && vol.id != only_volume) continue;
    RefineOutcome out = refine_volume(net, vol, cfg, bank ? &*bank : nullptr, seed);
    if (out.pass_through) continue;
    NeighborReport rep = neighbor_inspect(out.graph, out.final_dynamic_edges, vol, seed);
    json r;
    r["volume_id"] = vol.id;
    r["agreement_rate"] = rep.agreement_rate;
    r["random_baseline"] = rep.random_baseline;
    r["dynamic_edges"] = rep.dynamic_edges;
    json samples = json::array();
    for (const auto& s : rep.samples) {
      json sj;
      sj["node"] = {s.node_i, s.node_j, s.node_k};
      sj["neighbor"] = {s.nbr_i, s.nbr_j, s.nbr_k};
      sj["neighbor_label_patch"] = s.neighbor_patch;
      samples.push_back(std::move(sj));
    }
    r["samples"] = std::move(samples);
    report.push_back(std::move(r));
    std::cout << vol.id << ": agreement " << rep.agreement_rate << " vs random baseline "
              << rep.random_baseline << " over " << rep.dynamic_edges << " dynamic edges\n";
  }
  const fs::path p = ctx.run_dir / "neighbors" /
                     ("inspect_" + std::string(experiment_name(e)) + "_seed" + std::to_string(seed) +
                      ".json");
  atomic_write(p, report.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-driven dynamic graph refinement for volumetric segmentation"};
  app.require_subcommand(1);
  std::string config_path = "ugr.json";
  app.add_option("-c,--config", config_path, "run configuration (JSON)")->capture_default_str();

  std::string only_volume;
  uint64_t seed_opt = 0;
  bool seed_given = false;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  auto* train = app.add_subcommand("train-unet", "train the segmentation network");
  train->add_option("--seed", seed_opt, "network seed (default: config seed)")
      ->each([&](const std::string&) { seed_given = true; });
  auto* mcdo = app.add_subcommand("mcdo", "emit probability stacks and uncertainty fields");
  mcdo->add_option("--volume", only_volume, "restrict to one volume id");
  mcdo->add_option("--seed", seed_opt, "network seed")->each([&](const std::string&) {
    seed_given = true;
  });
  auto* graph = app.add_subcommand("build-graph", "build refinement graphs from uncertainty fields");
  graph->add_option("--volume", only_volume, "restrict to one volume id");
  graph->add_option("--seed", seed_opt, "network seed")->each([&](const std::string&) {
    seed_given = true;
  });
  auto* refine = app.add_subcommand("refine", "per-volume semi-supervised refinement");
  auto* uat = app.add_subcommand("uat", "uncertainty-aware joint training");
  auto* eval = app.add_subcommand("eval", "recompute dice reports from refined masks");
  std::string eval_experiment = "intra";
  eval->add_option("--experiment", eval_experiment, "experiment row to evaluate")
      ->capture_default_str();
  auto* matrix = app.add_subcommand("matrix", "run the full experiment table");
  auto* inspect = app.add_subcommand("inspect-neighbors", "dynamic-edge label agreement report");
  inspect->add_option("--volume", only_volume, "restrict to one volume id");

  CLI11_PARSE(app, argc, argv);
  apply_thread_env();

  try {
    Ctx ctx = make_ctx(config_path);
    const uint64_t seed = seed_given ? seed_opt : ctx.cfg.seed;
    if (synth->parsed()) cmd_synth(ctx);
    if (train->parsed()) cmd_train_unet(ctx, seed);
    if (mcdo->parsed()) cmd_mcdo(ctx, seed, only_volume);
    if (graph->parsed()) cmd_build_graph(ctx, seed, only_volume);
    if (refine->parsed()) cmd_refine(ctx);
    if (uat->parsed()) cmd_uat(ctx);
    if (eval->parsed()) cmd_eval(ctx, eval_experiment);
    if (matrix->parsed()) cmd_matrix(ctx);
    if (inspect->parsed()) cmd_inspect(ctx, only_volume);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what();
    if (e.offset() >= 0) std::cerr << " (byte offset " << e.offset() << ")";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
