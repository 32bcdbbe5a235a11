#ifndef UGR_PIPELINES_HPP
#define UGR_PIPELINES_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ugr/pna_gcn.hpp"
#include "ugr/segnet.hpp"
#include "ugr/uncertainty.hpp"
#include "ugr/volume.hpp"

namespace ugr {

// ---- synthetic data --------------------------------------------------------

struct SynthConfig {
  int64_t n_train = 20;
  int64_t n_test = 5;
  int64_t dim = 64;         // cubic volumes
  float noise_sigma = 0.05f;
  uint64_t seed = 1;
};

struct Dataset {
  std::vector<Volume> train;
  std::vector<Volume> test;
};

// Random-ellipsoid organ with a low-contrast boundary band against an
// adjacent confuser blob, plus Gaussian texture noise. Labels are exact.
Volume synth_volume(const std::string& id, int64_t dim, float noise_sigma, uint64_t seed);
Dataset synth_dataset(const SynthConfig& cfg);

// Pre-noise construction measurements for calibration checks.
struct SynthStats {
  double organ_fraction = 0.0;
  double band_mean = 0.0;      // organ shell, normalized radius in [0.85, 1]
  double confuser_mean = 0.0;
};
SynthStats synth_stats(int64_t dim, uint64_t seed);

// ---- experiment configuration ---------------------------------------------

enum class Experiment { six_connectivity, random16_baseline, intra, inter, intra_uat, inter_uat };

const char* experiment_name(Experiment e);
Experiment experiment_from(const std::string& s);
bool experiment_uses_uat(Experiment e);
NeighborMode experiment_mode(Experiment e);

struct ExperimentConfig {
  Experiment experiment = Experiment::intra;
  std::vector<uint64_t> seeds = {1, 2, 3};
  float gcn_lr = 1e-2f;            // Adam on the graph network
  float unet_lr = 1e-5f;           // Adam on the U-Net during UAT
  int refine_epochs = 200;
  int early_stop_patience = 30;
  int uat_iterations = 60;
  int mcdo_passes = 10;            // T
  float tau = 0.05f;               // entropy threshold, nats
  int gnn_hidden = 32;
  FocalLossConfig focal;
  EdgeWeightConfig edge_weights;
  NeighborConfig neighbors;        // mode is overwritten per experiment

  void validate() const;
};

// ---- reports ---------------------------------------------------------------

struct DiceReport {
  std::string experiment;
  std::vector<uint64_t> seeds;
  // one row per (seed, volume)
  struct Entry {
    uint64_t seed;
    std::string volume_id;
    double dice;
    bool pass_through;
  };
  std::vector<Entry> entries;

  double mean() const;
  double stddev() const;  // population, over entries
};

double dice_score(const BinaryVolume& pred, const BinaryVolume& truth);

// ---- refinement / UAT ------------------------------------------------------

struct RefineOutcome {
  BinaryVolume mask;          // refined prediction
  BinaryVolume cnn_mask;      // the CNN prediction it started from
  bool pass_through = false;
  RefinementGraph graph;                        // working graph (augmented)
  std::vector<GraphEdge> final_dynamic_edges;   // recorded from the last forward
  std::optional<GnnModel> model;                // the trained per-volume model
};

// Per-volume semi-supervised refinement; the segmentation network is const
// and verified untouched by the caller's checkpoint hash.
RefineOutcome refine_volume(const SegNet& net, const Volume& vol, const ExperimentConfig& cfg,
                            const TrainGraphBank* bank, uint64_t seed);

// Forward-only refinement with an already-trained graph model (UAT inference).
RefineOutcome refine_with_model(const SegNet& net, const Volume& vol, const ExperimentConfig& cfg,
                                const GnnModel& model, const TrainGraphBank* bank, uint64_t seed);

struct UatOutcome {
  GnnModel model;
  int64_t iterations_run = 0;
  std::string warning;  // set when the pre-UAT network looks unconverged
};

// Joint continuation training: per iteration one GCN step on ground-truth
// node labels and one single-slice dice step on the U-Net. Mutates `net`.
UatOutcome uat_train(SegNet& net, const std::vector<Volume>& train, const ExperimentConfig& cfg,
                     const TrainGraphBank* bank, uint64_t seed);

// ---- SegNet training over a dataset -----------------------------------------

struct UnetTrainConfig {
  SegNetConfig net;
  int64_t steps = 2500;
  float lr = 1e-3f;
  uint64_t seed = 1;
};

// Balanced slice sampler (half foreground-bearing slices), dice loss, Adam.
float train_unet(SegNet& net, const std::vector<Volume>& train, const UnetTrainConfig& cfg);

double mean_dice_on(const SegNet& net, const std::vector<Volume>& vols);

// ---- matrix ----------------------------------------------------------------

struct MatrixRowResult {
  std::string experiment;
  DiceReport report;
  std::string error;  // non-empty when the row failed; matrix continues
};

struct MatrixResult {
  std::vector<MatrixRowResult> rows;
};

struct MatrixHooks {
  // called after each refined test volume (overlays, mask dumps)
  std::function<void(Experiment, uint64_t seed, const Volume&, const RefineOutcome&)> on_volume;
};

MatrixResult run_matrix(const Dataset& data, const std::vector<ExperimentConfig>& configs,
                        const UnetTrainConfig& unet_cfg, const MatrixHooks& hooks = {});

// ---- neighbor inspection ----------------------------------------------------

struct NeighborReport {
  double agreement_rate = 0.0;         // dynamic-edge endpoint label agreement
  double random_baseline = 0.0;        // same statistic under random partners
  int64_t dynamic_edges = 0;
  struct Sample {
    int32_t node_i, node_j, node_k;
    int32_t nbr_i, nbr_j, nbr_k;
    std::vector<uint8_t> neighbor_patch;  // 11x11 label crop around the neighbor
  };
  std::vector<Sample> samples;
};

NeighborReport neighbor_inspect(const RefinementGraph& graph,
                                const std::vector<GraphEdge>& dynamic_edges, const Volume& labels_volume,
                                uint64_t seed, int64_t max_samples = 8);

// csv: experiment,seed,volume_id,dice
std::string report_csv(const std::vector<MatrixRowResult>& rows);
std::string report_summary_json(const std::vector<MatrixRowResult>& rows);

// RGB overlay of one axial slice: green=TP, red=FP, blue=FN over grayscale.
std::vector<uint8_t> overlay_rgb(const Volume& vol, const BinaryVolume& pred, int64_t slice_k);

}  // namespace ugr

#endif
