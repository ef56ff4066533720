#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geoview/camera/camera.hpp"
#include "geoview/fusion/fusion.hpp"
#include "geoview/geoprior/geoprior.hpp"
#include "geoview/numerics/optim.hpp"
#include "geoview/spatial/spatial_encoder.hpp"
#include "geoview/world/world.hpp"
#include "json.hpp"

namespace geoview::planner {

using world::Vec2;

struct ModelConfig {
  int n_cameras = 6;
  int image_width = 56;
  int image_height = 32;
  int patch = 8;
  int channels = 32;
  int K = 2;
  int T = 6;

  bool spatial_enabled = true;
  spatial::SpeConfig spe;
  geoprior::DepthSource depth_source = geoprior::DepthSource::Oracle;
  geoprior::PriorConfig prior;
  fusion::FusionConfig fusion;

  int pool_dim = 32;
  int head_hidden = 64;
  bool zero_init_head = false;

  void validate() const;
  int tokens_per_camera() const { return (image_width / patch) * (image_height / patch); }
  int tokens() const { return n_cameras * tokens_per_camera(); }
  int patch_dim() const { return patch * patch; }
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct Trajectory {
  std::vector<Vec2> waypoints;  // x forward, y left, meters, current ego frame
};

// pool -> Linear -> tanh -> Linear -> T x 2
class PlanningHead {
 public:
  PlanningHead(int pool_dim, int hidden, int horizon, std::uint64_t seed,
               bool zero_output = false);

  nn::Tensor forward(const nn::Tensor& pooled) const;
  nn::ParamList parameters(const std::string& prefix = "head.") const;

  nn::Tensor w1, b1, w2, b2;
};

// Model inputs that do not depend on learnable parameters, computed once per
// (sample, embedding rig). Layouts are row-major:
//   patches [K * cameras * tokens, patch * patch]   frame, camera, token
//   spe     [cameras * tokens, 6 * bands]
//   prior   [cameras * tokens, C_g]
struct PreparedSample {
  std::vector<double> patches;
  std::vector<double> spe;
  std::vector<double> prior;
  std::vector<double> target;  // [2T]; empty when no ground truth
};

class PlannerModel {
 public:
  PlannerModel(ModelConfig cfg, std::uint64_t seed, camera::CameraRig training_rig);

  // Runs the frozen stages: patch extraction, prior estimate on sample.rig,
  // point cloud with `embedding_rig` (sample.rig when null) and its SPE.
  PreparedSample prepare(const world::Sample& sample,
                         const camera::CameraRig* embedding_rig = nullptr) const;

  // [B, 2T] predictions: patch-embed every frame, add the spatial embedding
  // to the current frame, mean over K, fuse with prior features, token
  // projection, masked mean-pool, head.
  nn::Tensor forward(std::span<const PreparedSample* const> batch) const;

  Trajectory forward(const world::Sample& sample,
                     const std::optional<camera::CameraRig>& embedding_rig_override = {}) const;

  // [groups, heads, queries, keys] for one sample; empty tensor when fusion
  // is disabled.
  nn::Tensor attention_map(const world::Sample& sample,
                           const std::optional<camera::CameraRig>& embedding_rig_override = {}) const;

  nn::ParamList parameters() const;
  std::size_t count_params() const;

  const ModelConfig& config() const { return cfg_; }
  const camera::CameraRig& training_rig() const { return training_rig_; }
  const geoprior::GeometricPrior& prior() const { return prior_; }
  void set_prior(geoprior::GeometricPrior prior) { prior_ = std::move(prior); }
  const std::optional<spatial::SpatialEncoder>& spatial_encoder() const { return spatial_; }
  const std::optional<fusion::CrossAttention>& fusion_block() const { return fusion_; }

 private:
  nn::Tensor f_hat(std::span<const PreparedSample* const> batch) const;
  nn::Tensor prior_tensor(std::span<const PreparedSample* const> batch) const;
  std::size_t fusion_groups(std::size_t batch) const;

  ModelConfig cfg_;
  camera::CameraRig training_rig_;
  geoprior::GeometricPrior prior_;
  nn::Tensor patch_w_, patch_b_;
  std::optional<spatial::SpatialEncoder> spatial_;
  std::optional<fusion::CrossAttention> fusion_;
  nn::Tensor token_w_, token_b_;
  PlanningHead head_;
};

Trajectory to_trajectory(std::span<const double> row, int horizon);

}  // namespace geoview::planner
