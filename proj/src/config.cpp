#include "ugr/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "ugr/io.hpp"

namespace ugr {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw Error(ErrorCode::parse_error, "config: unknown key \"" + it.key() + "\" in " + where);
}

RewirePolicy rewire_from(const std::string& s) {
  if (s == "fixed") return RewirePolicy::fixed;
  if (s == "per_block") return RewirePolicy::per_block;
  throw Error(ErrorCode::parse_error, "config: rewire must be \"fixed\" or \"per_block\", got " + s);
}

}  // namespace

void RunConfig::validate() const {
  if (synth.n_train < 1 || synth.n_test < 1)
    throw Error(ErrorCode::invalid_argument, "config: need at least one train and one test volume");
  if (synth.dim % (int64_t{1} << segnet.levels) != 0)
    throw Error(ErrorCode::invalid_argument, "config: volume dim must be divisible by 2^levels");
  if (unet_train.steps < 1) throw Error(ErrorCode::invalid_argument, "config: unet steps must be >= 1");
  if (unet_train.lr <= 0.0f) throw Error(ErrorCode::invalid_argument, "config: unet lr must be > 0");
  if (experiment.gcn_lr <= 0.0f || experiment.unet_lr <= 0.0f)
    throw Error(ErrorCode::invalid_argument, "config: learning rates must be > 0");
  experiment.validate();
  for (const std::string& name : matrix_experiments) experiment_from(name);  // throws on typo
}

std::string RunConfig::canonical_json() const {
  json j;
  j["seed"] = seed;
  j["data_dir"] = data_dir.string();
  j["out_dir"] = out_dir.string();
  j["synth"] = {{"n_train", synth.n_train},
                {"n_test", synth.n_test},
                {"dim", synth.dim},
                {"noise_sigma", synth.noise_sigma},
                {"seed", synth.seed}};
  j["segnet"] = {{"levels", segnet.levels},
                 {"base_channels", segnet.base_channels},
                 {"dropout_p", segnet.dropout_p},
                 {"classes", segnet.classes},
                 {"in_channels", segnet.in_channels}};
  j["unet_train"] = {{"steps", unet_train.steps}, {"lr", unet_train.lr}};
  j["experiment"] = {{"experiment", experiment_name(experiment.experiment)},
                     {"seeds", experiment.seeds},
                     {"gcn_lr", experiment.gcn_lr},
                     {"unet_lr", experiment.unet_lr},
                     {"refine_epochs", experiment.refine_epochs},
                     {"early_stop_patience", experiment.early_stop_patience},
                     {"uat_iterations", experiment.uat_iterations},
                     {"mcdo_passes", experiment.mcdo_passes},
                     {"tau", experiment.tau},
                     {"gnn_hidden", experiment.gnn_hidden},
                     {"focal", {{"gamma", experiment.focal.gamma}, {"alpha", experiment.focal.alpha}}},
                     {"edge_weights",
                      {{"sigma1", experiment.edge_weights.sigma1},
                       {"sigma2", experiment.edge_weights.sigma2},
                       {"lambda_div", experiment.edge_weights.lambda_div},
                       {"lambda_int", experiment.edge_weights.lambda_int},
                       {"lambda_pos", experiment.edge_weights.lambda_pos}}},
                     {"neighbors",
                      {{"k", experiment.neighbors.k},
                       {"fps_ratio", experiment.neighbors.fps_ratio},
                       {"random_count", experiment.neighbors.random_count},
                       {"rewire",
                        experiment.neighbors.rewire == RewirePolicy::per_block ? "per_block" : "fixed"}}}};
  j["matrix_experiments"] = matrix_experiments;
  return j.dump(2) + "\n";
}

std::string RunConfig::config_hash() const { return hash_hex(fnv1a64(canonical_json())); }

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("config: ") + e.what(), static_cast<int64_t>(e.byte));
  }
  RunConfig c;
  reject_unknown(j, {"seed", "data_dir", "out_dir", "synth", "segnet", "unet_train", "experiment",
                     "matrix_experiments"},
                 "top level");
  c.seed = j.value("seed", uint64_t{1});
  if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();

  if (j.contains("synth")) {
    const json& s = j["synth"];
    reject_unknown(s, {"n_train", "n_test", "dim", "noise_sigma", "seed"}, "synth");
    c.synth.n_train = s.value("n_train", c.synth.n_train);
    c.synth.n_test = s.value("n_test", c.synth.n_test);
    c.synth.dim = s.value("dim", c.synth.dim);
    c.synth.noise_sigma = s.value("noise_sigma", c.synth.noise_sigma);
    c.synth.seed = s.value("seed", c.synth.seed);
  }
  if (j.contains("segnet")) {
    const json& s = j["segnet"];
    reject_unknown(s, {"levels", "base_channels", "dropout_p", "classes", "in_channels"}, "segnet");
    c.segnet.levels = s.value("levels", c.segnet.levels);
    c.segnet.base_channels = s.value("base_channels", c.segnet.base_channels);
    c.segnet.dropout_p = s.value("dropout_p", c.segnet.dropout_p);
    c.segnet.classes = s.value("classes", c.segnet.classes);
    c.segnet.in_channels = s.value("in_channels", c.segnet.in_channels);
  }
  if (j.contains("unet_train")) {
    const json& s = j["unet_train"];
    reject_unknown(s, {"steps", "lr"}, "unet_train");
    c.unet_train.steps = s.value("steps", c.unet_train.steps);
    c.unet_train.lr = s.value("lr", c.unet_train.lr);
  }
  c.unet_train.net = c.segnet;
  if (j.contains("experiment")) {
    const json& s = j["experiment"];
    reject_unknown(s,
                   {"experiment", "seeds", "gcn_lr", "unet_lr", "refine_epochs", "early_stop_patience",
                    "uat_iterations", "mcdo_passes", "tau", "gnn_hidden", "focal", "edge_weights",
                    "neighbors"},
                   "experiment");
    if (s.contains("experiment")) c.experiment.experiment = experiment_from(s["experiment"]);
    if (s.contains("seeds")) c.experiment.seeds = s["seeds"].get<std::vector<uint64_t>>();
    c.experiment.gcn_lr = s.value("gcn_lr", c.experiment.gcn_lr);
    c.experiment.unet_lr = s.value("unet_lr", c.experiment.unet_lr);
    c.experiment.refine_epochs = s.value("refine_epochs", c.experiment.refine_epochs);
    c.experiment.early_stop_patience = s.value("early_stop_patience", c.experiment.early_stop_patience);
    c.experiment.uat_iterations = s.value("uat_iterations", c.experiment.uat_iterations);
    c.experiment.mcdo_passes = s.value("mcdo_passes", c.experiment.mcdo_passes);
    c.experiment.tau = s.value("tau", c.experiment.tau);
    c.experiment.gnn_hidden = s.value("gnn_hidden", c.experiment.gnn_hidden);
    if (s.contains("focal")) {
      reject_unknown(s["focal"], {"gamma", "alpha"}, "focal");
      c.experiment.focal.gamma = s["focal"].value("gamma", c.experiment.focal.gamma);
      c.experiment.focal.alpha = s["focal"].value("alpha", c.experiment.focal.alpha);
    }
    if (s.contains("edge_weights")) {
      const json& w = s["edge_weights"];
      reject_unknown(w, {"sigma1", "sigma2", "lambda_div", "lambda_int", "lambda_pos"}, "edge_weights");
      c.experiment.edge_weights.sigma1 = w.value("sigma1", c.experiment.edge_weights.sigma1);
      c.experiment.edge_weights.sigma2 = w.value("sigma2", c.experiment.edge_weights.sigma2);
      c.experiment.edge_weights.lambda_div = w.value("lambda_div", c.experiment.edge_weights.lambda_div);
      c.experiment.edge_weights.lambda_int = w.value("lambda_int", c.experiment.edge_weights.lambda_int);
      c.experiment.edge_weights.lambda_pos = w.value("lambda_pos", c.experiment.edge_weights.lambda_pos);
    }
    if (s.contains("neighbors")) {
      const json& n = s["neighbors"];
      reject_unknown(n, {"k", "fps_ratio", "random_count", "rewire"}, "neighbors");
      c.experiment.neighbors.k = n.value("k", c.experiment.neighbors.k);
      c.experiment.neighbors.fps_ratio = n.value("fps_ratio", c.experiment.neighbors.fps_ratio);
      c.experiment.neighbors.random_count = n.value("random_count", c.experiment.neighbors.random_count);
      if (n.contains("rewire")) c.experiment.neighbors.rewire = rewire_from(n["rewire"]);
    }
  }
  if (j.contains("matrix_experiments"))
    c.matrix_experiments = j["matrix_experiments"].get<std::vector<std::string>>();
  else
    c.matrix_experiments = {"six_connectivity", "random16_baseline", "intra", "inter", "intra_uat",
                            "inter_uat"};
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p))
    throw Error(ErrorCode::missing_artifact, "config file not found: " + p.string());
  auto bytes = read_file_bytes(p);
  return from_json_text(std::string(bytes.begin(), bytes.end()));
}

void RunConfig::save(const std::filesystem::path& p) const { atomic_write(p, canonical_json()); }

}  // namespace ugr
