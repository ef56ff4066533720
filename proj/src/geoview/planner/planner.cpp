#include "geoview/planner/planner.hpp"

#include <cstring>

#include "geoview/common/error.hpp"
#include "geoview/common/hash.hpp"
#include "geoview/common/rng.hpp"
#include "geoview/numerics/init.hpp"
#include "geoview/numerics/ops.hpp"

namespace geoview::planner {

void ModelConfig::validate() const {
  require(n_cameras >= 1 && K >= 1 && T >= 1, ErrorKind::Config,
          "model needs cameras, frames and a horizon");
  require(patch > 0 && image_width % patch == 0 && image_height % patch == 0,
          ErrorKind::Config, "image size must be a multiple of the patch size");
  require(channels > 0 && pool_dim > 0 && head_hidden > 0, ErrorKind::Config,
          "layer widths must be positive");
  require(!fusion.enabled || channels % fusion.heads == 0, ErrorKind::Config,
          "channels must be divisible by the fusion head count");
  spe.validate();
  prior.validate();
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_cameras", c.n_cameras},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"patch", c.patch},
          {"channels", c.channels},
          {"K", c.K},
          {"T", c.T},
          {"spatial_enabled", c.spatial_enabled},
          {"spe", spatial::to_json(c.spe)},
          {"depth_source", geoprior::to_string(c.depth_source)},
          {"prior", geoprior::to_json(c.prior)},
          {"fusion", fusion::to_json(c.fusion)},
          {"pool_dim", c.pool_dim},
          {"head_hidden", c.head_hidden},
          {"zero_init_head", c.zero_init_head}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  c.n_cameras = j.value("n_cameras", c.n_cameras);
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
  c.patch = j.value("patch", c.patch);
  c.channels = j.value("channels", c.channels);
  c.K = j.value("K", c.K);
  c.T = j.value("T", c.T);
  c.spatial_enabled = j.value("spatial_enabled", c.spatial_enabled);
  if (j.contains("spe")) c.spe = spatial::spe_config_from_json(j.at("spe"), c.spe);
  if (j.contains("depth_source"))
    c.depth_source = geoprior::parse_depth_source(j.at("depth_source").get<std::string>());
  if (j.contains("prior")) c.prior = geoprior::prior_config_from_json(j.at("prior"), c.prior);
  if (j.contains("fusion")) c.fusion = fusion::fusion_config_from_json(j.at("fusion"), c.fusion);
  c.pool_dim = j.value("pool_dim", c.pool_dim);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.zero_init_head = j.value("zero_init_head", c.zero_init_head);
  c.validate();
  return c;
}

PlanningHead::PlanningHead(int pool_dim, int hidden, int horizon, std::uint64_t seed,
                           bool zero_output) {
  require(pool_dim > 0 && hidden > 0 && horizon > 0, ErrorKind::Config,
          "planning head widths must be positive");
  Rng rng(seed);
  const auto p = static_cast<std::size_t>(pool_dim);
  const auto h = static_cast<std::size_t>(hidden);
  const auto o = static_cast<std::size_t>(2 * horizon);
  w1 = nn::xavier({p, h}, rng);
  b1 = nn::Tensor::zeros({h}, true);
  w2 = zero_output ? nn::Tensor::zeros({h, o}, true) : nn::xavier({h, o}, rng);
  b2 = nn::Tensor::zeros({o}, true);
}

nn::Tensor PlanningHead::forward(const nn::Tensor& pooled) const {
  auto h = nn::tanh(nn::add_bias(nn::matmul(pooled, w1), b1));
  return nn::add_bias(nn::matmul(h, w2), b2);
}

nn::ParamList PlanningHead::parameters(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", b1}, {prefix + "w2", w2}, {prefix + "b2", b2}};
}

PlannerModel::PlannerModel(ModelConfig cfg, std::uint64_t seed,
                           camera::CameraRig training_rig)
    : cfg_(std::move(cfg)),
      training_rig_(std::move(training_rig)),
      prior_(cfg_.prior),
      head_(cfg_.pool_dim, cfg_.head_hidden, cfg_.T, combine_seed(seed, 5),
            cfg_.zero_init_head) {
  cfg_.validate();
  training_rig_.validate();
  require(training_rig_.size() == static_cast<std::size_t>(cfg_.n_cameras),
          ErrorKind::Config, "training rig camera count differs from model config");
  for (const auto& cam : training_rig_.cameras)
    require(cam.intrinsics.width == cfg_.image_width &&
                cam.intrinsics.height == cfg_.image_height,
            ErrorKind::Config, "training rig image size differs from model config");
  Rng rng(combine_seed(seed, 1));
  const auto c = static_cast<std::size_t>(cfg_.channels);
  patch_w_ = nn::xavier({static_cast<std::size_t>(cfg_.patch_dim()), c}, rng);
  patch_b_ = nn::Tensor::zeros({c}, true);
  if (cfg_.spatial_enabled) spatial_.emplace(cfg_.spe, cfg_.channels, combine_seed(seed, 2));
  if (cfg_.fusion.enabled)
    fusion_.emplace(cfg_.channels, cfg_.prior.channels, cfg_.fusion.heads, combine_seed(seed, 3));
  Rng trng(combine_seed(seed, 4));
  token_w_ = nn::xavier({c, static_cast<std::size_t>(cfg_.pool_dim)}, trng);
  token_b_ = nn::Tensor::zeros({static_cast<std::size_t>(cfg_.pool_dim)}, true);
}

PreparedSample PlannerModel::prepare(const world::Sample& sample,
                                     const camera::CameraRig* embedding_rig) const {
  const auto& rig = sample.rig;
  require(sample.frames.size() == static_cast<std::size_t>(cfg_.K), ErrorKind::Contract,
          "sample has " + std::to_string(sample.frames.size()) + " frames, model expects " +
              std::to_string(cfg_.K));
  require(rig.size() == static_cast<std::size_t>(cfg_.n_cameras), ErrorKind::Contract,
          "sample rig has " + std::to_string(rig.size()) + " cameras, model expects " +
              std::to_string(cfg_.n_cameras));
  const camera::CameraRig& emb_rig = embedding_rig ? *embedding_rig : rig;
  require(emb_rig.size() == rig.size(), ErrorKind::Contract,
          "embedding rig camera count differs from sample rig");

  PreparedSample out;
  const int P = cfg_.patch;
  const int cols = cfg_.image_width / P;
  const int rows = cfg_.image_height / P;
  out.patches.reserve(static_cast<std::size_t>(cfg_.K) * cfg_.tokens() * cfg_.patch_dim());
  for (const auto& frame : sample.frames) {
    require(frame->views.size() == rig.size(), ErrorKind::Contract,
            "frame view count differs from rig");
    for (const auto& view : frame->views) {
      require(view.width == cfg_.image_width && view.height == cfg_.image_height,
              ErrorKind::Contract, "view size differs from model config");
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          for (int v = r * P; v < (r + 1) * P; ++v)
            for (int u = c * P; u < (c + 1) * P; ++u)
              out.patches.push_back(view.intensity[static_cast<std::size_t>(v) * view.width + u]);
    }
  }

  const auto prior = prior_.estimate(sample.frames, sample.scene_seed, rig, P);
  out.prior.assign(prior.features.data().begin(), prior.features.data().end());

  if (spatial_) {
    const spatial::DepthPlanes depth =
        cfg_.depth_source == geoprior::DepthSource::Oracle
            ? prior.depth
            : geoprior::heuristic_depth(emb_rig, cfg_.prior.heuristic_height);
    const auto pc = spatial::build_pointcloud(depth, emb_rig, P, cfg_.spe);
    const auto spe = spatial::spe_matrix(pc, cfg_.spe);
    out.spe.assign(spe.data().begin(), spe.data().end());
  }

  for (const auto& w : sample.gt_waypoints) {
    out.target.push_back(w.x());
    out.target.push_back(w.y());
  }
  return out;
}

nn::Tensor PlannerModel::f_hat(std::span<const PreparedSample* const> batch) const {
  const std::size_t B = batch.size();
  const std::size_t tokens = static_cast<std::size_t>(cfg_.tokens());
  const std::size_t pd = static_cast<std::size_t>(cfg_.patch_dim());
  const std::size_t K = static_cast<std::size_t>(cfg_.K);
  std::vector<double> patches;
  patches.reserve(B * K * tokens * pd);
  for (const auto* s : batch) {
    require(s->patches.size() == K * tokens * pd, ErrorKind::Contract,
            "prepared sample patch block has the wrong size");
    patches.insert(patches.end(), s->patches.begin(), s->patches.end());
  }
  auto x = nn::Tensor::from({B * K * tokens, pd}, std::move(patches));
  auto per_frame = nn::add_bias(nn::matmul(x, patch_w_), patch_b_);
  auto features = nn::block_mean(per_frame, B, K);
  if (!spatial_) return features;

  const std::size_t ed = static_cast<std::size_t>(cfg_.spe.encoding_dim());
  std::vector<double> spe;
  spe.reserve(B * tokens * ed);
  for (const auto* s : batch) {
    require(s->spe.size() == tokens * ed, ErrorKind::Contract,
            "prepared sample SPE block has the wrong size");
    spe.insert(spe.end(), s->spe.begin(), s->spe.end());
  }
  auto e = spatial_->embed(nn::Tensor::from({B * tokens, ed}, std::move(spe)));
  // E enters the current frame only: mean_k(F_k) + E / K.
  return spatial::inject(features, nn::scale(e, 1.0 / static_cast<double>(K)));
}

nn::Tensor PlannerModel::prior_tensor(std::span<const PreparedSample* const> batch) const {
  const std::size_t tokens = static_cast<std::size_t>(cfg_.tokens());
  const std::size_t cg = static_cast<std::size_t>(cfg_.prior.channels);
  std::vector<double> g;
  g.reserve(batch.size() * tokens * cg);
  for (const auto* s : batch) {
    require(s->prior.size() == tokens * cg, ErrorKind::Contract,
            "prepared sample prior block has the wrong size");
    g.insert(g.end(), s->prior.begin(), s->prior.end());
  }
  return nn::Tensor::from({batch.size() * tokens, cg}, std::move(g));
}

std::size_t PlannerModel::fusion_groups(std::size_t batch) const {
  return cfg_.fusion.per_camera ? batch * static_cast<std::size_t>(cfg_.n_cameras) : batch;
}

nn::Tensor PlannerModel::forward(std::span<const PreparedSample* const> batch) const {
  require(!batch.empty(), ErrorKind::Contract, "forward on an empty batch");
  auto fh = f_hat(batch);
  nn::Tensor fused = fh;
  if (fusion_) fused = fusion::fuse(fh, prior_tensor(batch), &*fusion_, cfg_.fusion,
                                    fusion_groups(batch.size()));
  auto z = nn::tanh(nn::add_bias(nn::matmul(fused, token_w_), token_b_));
  auto pooled = nn::segment_mean(z, batch.size());
  return head_.forward(pooled);
}

Trajectory to_trajectory(std::span<const double> row, int horizon) {
  Trajectory t;
  for (int j = 0; j < horizon; ++j)
    t.waypoints.emplace_back(row[static_cast<std::size_t>(2 * j)],
                             row[static_cast<std::size_t>(2 * j + 1)]);
  return t;
}

Trajectory PlannerModel::forward(const world::Sample& sample,
                                 const std::optional<camera::CameraRig>& override_rig) const {
  const auto prepared = prepare(sample, override_rig ? &*override_rig : nullptr);
  const PreparedSample* ptr = &prepared;
  const auto out = forward(std::span<const PreparedSample* const>(&ptr, 1));
  return to_trajectory(out.data(), cfg_.T);
}

nn::Tensor PlannerModel::attention_map(const world::Sample& sample,
                                       const std::optional<camera::CameraRig>& override_rig) const {
  if (!fusion_) return {};
  const auto prepared = prepare(sample, override_rig ? &*override_rig : nullptr);
  const PreparedSample* ptr = &prepared;
  std::span<const PreparedSample* const> batch(&ptr, 1);
  return fusion_->attention_map(f_hat(batch), prior_tensor(batch), fusion_groups(1));
}

nn::ParamList PlannerModel::parameters() const {
  nn::ParamList out{{"patch_embed.w", patch_w_}, {"patch_embed.b", patch_b_}};
  if (spatial_)
    for (auto& p : spatial_->parameters()) out.push_back(p);
  if (fusion_)
    for (auto& p : fusion_->parameters()) out.push_back(p);
  out.push_back({"token.w", token_w_});
  out.push_back({"token.b", token_b_});
  for (auto& p : head_.parameters()) out.push_back(p);
  return out;
}

std::size_t PlannerModel::count_params() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

}  // namespace geoview::planner
