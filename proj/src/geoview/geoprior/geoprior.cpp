#include "geoview/geoprior/geoprior.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "geoview/common/error.hpp"
#include "geoview/common/hash.hpp"
#include "geoview/common/rng.hpp"

namespace geoview::geoprior {

std::string to_string(DepthSource s) {
  return s == DepthSource::Oracle ? "oracle" : "heuristic";
}

DepthSource parse_depth_source(const std::string& s) {
  if (s == "oracle") return DepthSource::Oracle;
  if (s == "heuristic" || s == "monocular-heuristic") return DepthSource::MonocularHeuristic;
  fail(ErrorKind::Config, "unknown depth source '" + s + "'");
}

void PriorConfig::validate() const {
  require(depth_noise_sigma >= 0.0, ErrorKind::Config, "depth noise sigma must be >= 0");
  require(feature_bands >= 1 && channels >= 1, ErrorKind::Config,
          "prior bands and channels must be >= 1");
  require(base_wavelength > 0.0 && max_wavelength > base_wavelength, ErrorKind::Config,
          "prior wavelengths must satisfy 0 < base < max");
  require(heuristic_height > 0.0 && z_far > 0.0, ErrorKind::Config,
          "heuristic height and z_far must be positive");
}

nlohmann::json to_json(const PriorConfig& c) {
  return {{"depth_noise_sigma", c.depth_noise_sigma},
          {"feature_bands", c.feature_bands},
          {"channels", c.channels},
          {"seed", c.seed},
          {"base_wavelength", c.base_wavelength},
          {"max_wavelength", c.max_wavelength},
          {"z_far", c.z_far},
          {"heuristic_height", c.heuristic_height}};
}

PriorConfig prior_config_from_json(const nlohmann::json& j, PriorConfig c) {
  c.depth_noise_sigma = j.value("depth_noise_sigma", c.depth_noise_sigma);
  c.feature_bands = j.value("feature_bands", c.feature_bands);
  c.channels = j.value("channels", c.channels);
  c.seed = j.value("seed", c.seed);
  c.base_wavelength = j.value("base_wavelength", c.base_wavelength);
  c.max_wavelength = j.value("max_wavelength", c.max_wavelength);
  c.z_far = j.value("z_far", c.z_far);
  c.heuristic_height = j.value("heuristic_height", c.heuristic_height);
  c.validate();
  return c;
}

GeometricPrior::GeometricPrior(PriorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t in = 6 * static_cast<std::size_t>(cfg_.feature_bands);
  const std::size_t out = static_cast<std::size_t>(cfg_.channels);
  projection_.resize(in * out);
  Rng rng(cfg_.seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : projection_) w = rng.normal() * s;
}

namespace {

spatial::SpeConfig encoding_config(const PriorConfig& c) {
  spatial::SpeConfig s;
  s.bands = c.feature_bands;
  s.base_wavelength = c.base_wavelength;
  s.max_wavelength = c.max_wavelength;
  s.z_far = c.z_far;
  return s;
}

}  // namespace

nn::Tensor GeometricPrior::features_for(const spatial::PointCloud& pc) const {
  const auto enc = spatial::spe_matrix(pc, encoding_config(cfg_));
  const std::size_t in = enc.dim(1);
  const std::size_t out = static_cast<std::size_t>(cfg_.channels);
  const std::size_t n = enc.dim(0);
  std::vector<double> feat(n * out, 0.0);
  auto e = enc.data();
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < in; ++i) {
      const double x = e[t * in + i];
      const double* w = &projection_[i * out];
      double* dst = &feat[t * out];
      for (std::size_t c = 0; c < out; ++c) dst[c] += x * w[c];
    }
  return nn::Tensor::from({n, out}, std::move(feat));
}

PriorOutput GeometricPrior::estimate(
    std::span<const std::shared_ptr<const world::RenderedFrame>> frames,
    std::uint64_t scene_key, const camera::CameraRig& rig, int patch) const {
  require(!frames.empty(), ErrorKind::Contract, "prior needs a nonempty frame window");
  const auto& current = *frames.back();
  require(current.views.size() == rig.size(), ErrorKind::Contract,
          "prior: frame has " + std::to_string(current.views.size()) +
              " views for a rig of " + std::to_string(rig.size()) + " cameras");
  PriorOutput out;
  out.depth.resize(rig.size());
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const auto& view = current.views[c];
    const auto& K = rig[c].intrinsics;
    require(view.width == K.width && view.height == K.height, ErrorKind::Contract,
            "prior: view size does not match intrinsics of '" + rig[c].name + "'");
    auto& plane = out.depth[c];
    plane = view.depth;
    if (cfg_.depth_noise_sigma > 0.0) {
      const std::uint64_t frame_key =
          combine_seed(combine_seed(scene_key, static_cast<std::uint64_t>(current.timestep)),
                       hash64(rig[c].name));
      for (std::size_t px = 0; px < plane.size(); ++px) {
        if (!std::isfinite(plane[px])) continue;
        plane[px] *= std::exp(cfg_.depth_noise_sigma * hashed_normal(combine_seed(frame_key, px)));
      }
    }
  }
  const auto pc = spatial::build_pointcloud(out.depth, rig, patch, encoding_config(cfg_));
  out.grid = pc.grid;
  out.features = features_for(pc);
  return out;
}

std::string GeometricPrior::projection_hash() const {
  Fnv1a h;
  h.update(std::span<const double>(projection_));
  return h.hex();
}

nlohmann::json GeometricPrior::state_json() const {
  return {{"format", "geoview-prior"},
          {"config", to_json(cfg_)},
          {"projection", projection_},
          {"projection_hash", projection_hash()}};
}

GeometricPrior GeometricPrior::from_state_json(const nlohmann::json& j) {
  try {
    GeometricPrior p(prior_config_from_json(j.at("config")));
    auto proj = j.at("projection").get<std::vector<double>>();
    require(proj.size() == p.projection_.size(), ErrorKind::Io,
            "prior projection has the wrong size");
    p.projection_ = std::move(proj);
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed prior state: ") + e.what());
  }
}

spatial::DepthPlanes heuristic_depth(const camera::CameraRig& rig, double assumed_height) {
  spatial::DepthPlanes planes;
  for (const auto& cam : rig.cameras) {
    const auto& K = cam.intrinsics;
    std::vector<double> plane(static_cast<std::size_t>(K.width) * K.height,
                              std::numeric_limits<double>::infinity());
    for (int v = 0; v < K.height; ++v) {
      if (v <= K.cy) continue;
      const double d = assumed_height * K.fy / (v - K.cy);
      for (int u = 0; u < K.width; ++u) plane[static_cast<std::size_t>(v) * K.width + u] = d;
    }
    planes.push_back(std::move(plane));
  }
  return planes;
}

bool freeze_check(const GeometricPrior& before, const GeometricPrior& after) {
  const auto& a = before.projection();
  const auto& b = after.projection();
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace geoview::geoprior
