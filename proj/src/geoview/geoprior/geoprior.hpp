#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geoview/camera/camera.hpp"
#include "geoview/spatial/spatial_encoder.hpp"
#include "geoview/world/world.hpp"
#include "json.hpp"

namespace geoview::geoprior {

// Depth source feeding the spatial encoder. The oracle is the frozen prior's
// multi-view estimate; the heuristic is a per-camera ground-plane guess from
// pixel row and intrinsics at an assumed mounting height.
enum class DepthSource { Oracle, MonocularHeuristic };

std::string to_string(DepthSource s);
DepthSource parse_depth_source(const std::string& s);

struct PriorConfig {
  double depth_noise_sigma = 0.05;  // multiplicative log-normal
  int feature_bands = 8;
  int channels = 32;                // C_g
  std::uint64_t seed = 0x9e0f;
  double base_wavelength = 0.5;
  double max_wavelength = 64.0;
  double z_far = 80.0;
  double heuristic_height = 1.5;

  void validate() const;
};

nlohmann::json to_json(const PriorConfig& cfg);
PriorConfig prior_config_from_json(const nlohmann::json& j, PriorConfig base = {});

struct PriorOutput {
  spatial::DepthPlanes depth;  // per camera, current frame
  nn::Tensor features;         // [cameras * tokens, C_g], camera-major
  spatial::PatchGrid grid;
};

// Frozen stand-in for a pretrained geometry model. Its only state is a fixed
// random projection from sinusoidal position codes to C_g channels; nothing
// here is ever handed to an optimizer.
class GeometricPrior {
 public:
  explicit GeometricPrior(PriorConfig cfg);

  // Depth: rendered depth * exp(sigma * eps), eps keyed by (scene, frame,
  // camera, pixel). Features: projection of the SPE of each patch point,
  // unprojected from that depth with the supplied rig.
  PriorOutput estimate(std::span<const std::shared_ptr<const world::RenderedFrame>> frames,
                       std::uint64_t scene_key, const camera::CameraRig& rig,
                       int patch) const;
  PriorOutput estimate(const world::Sample& sample, int patch) const {
    return estimate(sample.frames, sample.scene_seed, sample.rig, patch);
  }

  // Features for an explicit point cloud (no depth stage).
  nn::Tensor features_for(const spatial::PointCloud& pc) const;

  const PriorConfig& config() const { return cfg_; }
  const std::vector<double>& projection() const { return projection_; }
  std::vector<double>& mutable_projection() { return projection_; }
  std::string projection_hash() const;

  nlohmann::json state_json() const;
  static GeometricPrior from_state_json(const nlohmann::json& j);

 private:
  PriorConfig cfg_;
  std::vector<double> projection_;  // [6 * feature_bands, channels]
};

// Per-camera monocular ground-plane depth: h * fy / (v - cy) below the
// principal row, +inf above. Uses intrinsics only.
spatial::DepthPlanes heuristic_depth(const camera::CameraRig& rig, double assumed_height);

// True iff the projection bytes are identical.
bool freeze_check(const GeometricPrior& before, const GeometricPrior& after);

}  // namespace geoview::geoprior
