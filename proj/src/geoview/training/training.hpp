#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geoview/camera/camera.hpp"
#include "geoview/evaluation/report.hpp"
#include "geoview/numerics/optim.hpp"
#include "geoview/planner/planner.hpp"
#include "geoview/world/world.hpp"
#include "json.hpp"

namespace geoview::training {

inline constexpr double kReferenceLearningRate = 5e-5;

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double base_lr = 3e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  world::DatasetSpec dataset;
  int val_scenes = 64;
  camera::RigConfig rig;
  planner::ModelConfig model;

  void validate() const;
  camera::CameraRig training_rig() const;
  world::DatasetSpec val_spec() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
std::string config_hash(const TrainConfig& cfg);

// Mean over waypoints of the squared Euclidean distance.
double loss(const planner::Trajectory& pred, const planner::Trajectory& gt);
// Batch form over [B, 2T] rows: sum of squared coordinates / (B * T).
nn::Tensor loss(const nn::Tensor& pred, const nn::Tensor& target);

struct TrainReport {
  std::vector<double> loss_curve;   // mean training loss per epoch
  std::vector<double> step_losses;
  double final_train_l2 = 0.0;
  double final_val_l2 = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t steps = 0;
  std::size_t param_count = 0;
  std::string config_hash;
  std::string checkpoint_hash;
  std::string dataset_hash;
  std::string val_dataset_hash;
  bool freeze_check_passed = false;
  bool loss_trend_warning = false;
};

nlohmann::json to_json(const TrainReport& r);

struct Checkpoint {
  TrainConfig config;
  planner::PlannerModel model;
  std::uint64_t optimizer_step = 0;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;
  int epoch = 0;
};

nlohmann::json checkpoint_json(const TrainConfig& cfg, const planner::PlannerModel& model,
                               const nn::AdamW* optimizer, int epoch);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
std::string checkpoint_hash(const nlohmann::json& ckpt);

void save_checkpoint(const std::string& path, const nlohmann::json& ckpt);
Checkpoint load_checkpoint(const std::string& path);
// Hash of the checkpoint file as stored.
std::string checkpoint_file_hash(const std::string& path);

planner::PlannerModel build_model(const TrainConfig& cfg);

struct TrainOptions {
  int workers = 1;
  std::string out_dir;  // empty: nothing written
  const world::Dataset* train_data = nullptr;
  const world::Dataset* val_data = nullptr;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
  planner::PlannerModel model;
  TrainReport report;
  nlohmann::json checkpoint;
};

// Deterministic in (cfg, code version). Writes checkpoint_last.json at every
// epoch boundary and checkpoint.json plus train_report.json at the end when
// out_dir is set. Aborts on a non-finite loss with a dump of the batch.
TrainResult train(const TrainConfig& cfg, const TrainOptions& opts = {});

// Unsquared L2 of the model over a dataset, mean over samples.
double dataset_l2(const planner::PlannerModel& model, const world::Dataset& ds, int workers = 1);

struct AblationVariant {
  geoprior::DepthSource depth_source;
  bool gff;
};

// heuristic then oracle depth, each with GFF off then on.
std::vector<AblationVariant> ablation_variants();

struct AblationResult {
  std::vector<evaluation::AblationRow> rows;
  std::vector<TrainReport> reports;
};

// Trains every variant on shared datasets and seed, then sweeps each on the
// shared held-out set.
AblationResult ablation_grid(const TrainConfig& base, const TrainOptions& opts = {});

TrainConfig with_variant(TrainConfig cfg, const AblationVariant& v);

}  // namespace geoview::training
