#pragma once

#include <cstdint>
#include <vector>

#include "geoview/camera/camera.hpp"
#include "geoview/numerics/optim.hpp"
#include "geoview/numerics/tensor.hpp"
#include "json.hpp"

namespace geoview::spatial {

using camera::Vec3;

// Token grid of one camera image: patch x patch pixels per token.
struct PatchGrid {
  int patch = 8;
  int rows = 4;
  int cols = 7;

  static PatchGrid for_image(int width, int height, int patch);
  int tokens() const { return rows * cols; }
  // Integer pixel used as the patch centroid.
  int centroid_u(int col) const { return col * patch + patch / 2; }
  int centroid_v(int row) const { return row * patch + patch / 2; }
};

enum class Reduction { Centroid, MeanOfPixels };

struct SpeConfig {
  int bands = 8;
  double base_wavelength = 0.5;   // meters
  double max_wavelength = 64.0;   // meters
  int mlp_hidden = 64;
  Reduction reduction = Reduction::Centroid;
  double z_far = 80.0;            // sentinel depth for patches with no surface

  void validate() const;
  int encoding_dim() const { return 6 * bands; }
};

nlohmann::json to_json(const SpeConfig& cfg);
SpeConfig spe_config_from_json(const nlohmann::json& j, SpeConfig base = {});

// Ego-frame point per token, camera-major: points[cam][row * cols + col].
struct PointCloud {
  PatchGrid grid;
  std::vector<std::vector<Vec3>> points;

  std::size_t cameras() const { return points.size(); }
  std::size_t tokens() const { return points.size() * static_cast<std::size_t>(grid.tokens()); }
};

// One depth plane per camera (row-major, width x height of that camera).
using DepthPlanes = std::vector<std::vector<double>>;

// Unprojects one point per patch with `rig`, which may differ from the rig
// that produced the depth. Centroid mode: the centroid pixel, or the nearest
// pixel of the patch with finite positive depth; a patch without any such
// pixel maps to the centroid ray at `z_far`.
PointCloud build_pointcloud(const DepthPlanes& depth, const camera::CameraRig& rig,
                            int patch, const SpeConfig& cfg);

std::vector<double> wavelengths(int bands, double base, double max);

// [sin(p_a / l_k), cos(p_a / l_k)] for axis a in x, y, z and band k.
std::vector<double> spe(const Vec3& p, int bands, double base, double max);
inline std::vector<double> spe(const Vec3& p, const SpeConfig& cfg) {
  return spe(p, cfg.bands, cfg.base_wavelength, cfg.max_wavelength);
}

// Token-major SPE matrix of a point cloud, shape [tokens, 6 * bands].
nn::Tensor spe_matrix(const PointCloud& pc, const SpeConfig& cfg);

// E = W2 tanh(W1 spe + b1) + b2, applied token-wise.
class SpatialEncoder {
 public:
  SpatialEncoder(const SpeConfig& cfg, int channels, std::uint64_t seed);

  nn::Tensor embed(const nn::Tensor& spe_rows) const;
  nn::Tensor embed(const PointCloud& pc) const { return embed(spe_matrix(pc, cfg_)); }

  nn::ParamList parameters(const std::string& prefix = "spatial.") const;
  const SpeConfig& config() const { return cfg_; }
  int channels() const { return channels_; }

  nn::Tensor w1, b1, w2, b2;

 private:
  SpeConfig cfg_;
  int channels_;
};

// F_hat = F + E; shapes must agree exactly.
nn::Tensor inject(const nn::Tensor& features, const nn::Tensor& embedding);

}  // namespace geoview::spatial
