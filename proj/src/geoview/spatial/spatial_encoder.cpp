#include "geoview/spatial/spatial_encoder.hpp"

#include <cmath>
#include <limits>

#include "geoview/common/error.hpp"
#include "geoview/common/rng.hpp"
#include "geoview/numerics/init.hpp"
#include "geoview/numerics/ops.hpp"

namespace geoview::spatial {

PatchGrid PatchGrid::for_image(int width, int height, int patch) {
  require(patch > 0 && width % patch == 0 && height % patch == 0,
          ErrorKind::Dimension,
          "image " + std::to_string(width) + "x" + std::to_string(height) +
              " does not divide into " + std::to_string(patch) + "px patches");
  return {patch, height / patch, width / patch};
}

void SpeConfig::validate() const {
  require(bands >= 1, ErrorKind::Config, "SPE needs at least one band");
  require(base_wavelength > 0.0 && max_wavelength > base_wavelength,
          ErrorKind::Config, "SPE wavelengths must satisfy 0 < base < max");
  require(mlp_hidden >= 1, ErrorKind::Config, "MLP hidden width must be >= 1");
  require(z_far > 0.0, ErrorKind::Config, "z_far must be positive");
}

nlohmann::json to_json(const SpeConfig& c) {
  return {{"bands", c.bands},
          {"base_wavelength", c.base_wavelength},
          {"max_wavelength", c.max_wavelength},
          {"mlp_hidden", c.mlp_hidden},
          {"reduction", c.reduction == Reduction::Centroid ? "centroid" : "mean"},
          {"z_far", c.z_far}};
}

SpeConfig spe_config_from_json(const nlohmann::json& j, SpeConfig c) {
  c.bands = j.value("bands", c.bands);
  c.base_wavelength = j.value("base_wavelength", c.base_wavelength);
  c.max_wavelength = j.value("max_wavelength", c.max_wavelength);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.z_far = j.value("z_far", c.z_far);
  if (j.contains("reduction")) {
    const auto r = j.at("reduction").get<std::string>();
    if (r == "centroid") c.reduction = Reduction::Centroid;
    else if (r == "mean") c.reduction = Reduction::MeanOfPixels;
    else fail(ErrorKind::Config, "unknown point-cloud reduction '" + r + "'");
  }
  c.validate();
  return c;
}

namespace {

bool usable(double d) { return std::isfinite(d) && d > 0.0; }

}  // namespace

PointCloud build_pointcloud(const DepthPlanes& depth, const camera::CameraRig& rig,
                            int patch, const SpeConfig& cfg) {
  require(depth.size() == rig.size(), ErrorKind::Dimension,
          "point cloud: " + std::to_string(depth.size()) + " depth planes for " +
              std::to_string(rig.size()) + " cameras");
  PointCloud pc;
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const auto& K = rig[c].intrinsics;
    const auto& E = rig[c].extrinsics;
    const auto grid = PatchGrid::for_image(K.width, K.height, patch);
    if (c == 0) pc.grid = grid;
    require(grid.rows == pc.grid.rows && grid.cols == pc.grid.cols,
            ErrorKind::Dimension, "cameras disagree on the patch grid");
    require(depth[c].size() == static_cast<std::size_t>(K.width) * K.height,
            ErrorKind::Dimension,
            "depth plane of camera '" + rig[c].name + "' has wrong size");
    const auto& plane = depth[c];
    auto at = [&](int u, int v) { return plane[static_cast<std::size_t>(v) * K.width + u]; };
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(grid.tokens()));
    for (int r = 0; r < grid.rows; ++r) {
      for (int col = 0; col < grid.cols; ++col) {
        const int cu = grid.centroid_u(col), cv = grid.centroid_v(r);
        if (cfg.reduction == Reduction::MeanOfPixels) {
          Vec3 acc = Vec3::Zero();
          int n = 0;
          for (int v = r * patch; v < (r + 1) * patch; ++v)
            for (int u = col * patch; u < (col + 1) * patch; ++u)
              if (usable(at(u, v))) {
                acc += camera::unproject(K, E, u, v, at(u, v));
                ++n;
              }
          pts.push_back(n ? Vec3(acc / n) : camera::unproject(K, E, cu, cv, cfg.z_far));
          continue;
        }
        if (usable(at(cu, cv))) {
          pts.push_back(camera::unproject(K, E, cu, cv, at(cu, cv)));
          continue;
        }
        // nearest usable pixel in the patch (squared distance, then scan order)
        int best_u = -1, best_v = -1;
        long best_d = std::numeric_limits<long>::max();
        for (int v = r * patch; v < (r + 1) * patch; ++v)
          for (int u = col * patch; u < (col + 1) * patch; ++u) {
            if (!usable(at(u, v))) continue;
            const long d = static_cast<long>(u - cu) * (u - cu) + static_cast<long>(v - cv) * (v - cv);
            if (d < best_d) {
              best_d = d;
              best_u = u;
              best_v = v;
            }
          }
        if (best_u >= 0)
          pts.push_back(camera::unproject(K, E, best_u, best_v, at(best_u, best_v)));
        else
          pts.push_back(camera::unproject(K, E, cu, cv, cfg.z_far));
      }
    }
    pc.points.push_back(std::move(pts));
  }
  return pc;
}

std::vector<double> wavelengths(int bands, double base, double max) {
  std::vector<double> out(static_cast<std::size_t>(bands));
  for (int k = 0; k < bands; ++k) {
    const double frac = bands == 1 ? 0.0 : static_cast<double>(k) / (bands - 1);
    out[static_cast<std::size_t>(k)] = base * std::pow(max / base, frac);
  }
  return out;
}

std::vector<double> spe(const Vec3& p, int bands, double base, double max) {
  require(p.allFinite(), ErrorKind::Contract, "SPE of a non-finite point");
  const auto lambda = wavelengths(bands, base, max);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(6 * bands));
  for (int a = 0; a < 3; ++a)
    for (double l : lambda) {
      out.push_back(std::sin(p[a] / l));
      out.push_back(std::cos(p[a] / l));
    }
  return out;
}

nn::Tensor spe_matrix(const PointCloud& pc, const SpeConfig& cfg) {
  const std::size_t dim = static_cast<std::size_t>(cfg.encoding_dim());
  std::vector<double> rows;
  rows.reserve(pc.tokens() * dim);
  for (const auto& cam : pc.points)
    for (const auto& p : cam) {
      const auto e = spe(p, cfg);
      rows.insert(rows.end(), e.begin(), e.end());
    }
  return nn::Tensor::from({pc.tokens(), dim}, std::move(rows));
}

SpatialEncoder::SpatialEncoder(const SpeConfig& cfg, int channels, std::uint64_t seed)
    : cfg_(cfg), channels_(channels) {
  cfg_.validate();
  require(channels > 0, ErrorKind::Config, "channel count must be positive");
  Rng rng(seed);
  const auto in = static_cast<std::size_t>(cfg_.encoding_dim());
  const auto hid = static_cast<std::size_t>(cfg_.mlp_hidden);
  const auto out = static_cast<std::size_t>(channels);
  w1 = nn::xavier({in, hid}, rng);
  b1 = nn::Tensor::zeros({hid}, true);
  w2 = nn::xavier({hid, out}, rng);
  b2 = nn::Tensor::zeros({out}, true);
}

nn::Tensor SpatialEncoder::embed(const nn::Tensor& spe_rows) const {
  require(spe_rows.rank() == 2 &&
              spe_rows.dim(1) == static_cast<std::size_t>(cfg_.encoding_dim()),
          ErrorKind::Contract,
          "spatial encoder expects [tokens, " + std::to_string(cfg_.encoding_dim()) +
              "] input, got " + nn::shape_str(spe_rows.shape()));
  auto h = nn::tanh(nn::add_bias(nn::matmul(spe_rows, w1), b1));
  return nn::add_bias(nn::matmul(h, w2), b2);
}

nn::ParamList SpatialEncoder::parameters(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", b1}, {prefix + "w2", w2}, {prefix + "b2", b2}};
}

nn::Tensor inject(const nn::Tensor& features, const nn::Tensor& embedding) {
  require(features.shape() == embedding.shape(), ErrorKind::Contract,
          "inject: feature shape " + nn::shape_str(features.shape()) +
              " differs from embedding shape " + nn::shape_str(embedding.shape()));
  return nn::add(features, embedding);
}

}  // namespace geoview::spatial
