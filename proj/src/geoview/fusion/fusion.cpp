#include "geoview/fusion/fusion.hpp"

#include <algorithm>
#include <numeric>

#include "geoview/common/error.hpp"
#include "geoview/common/rng.hpp"
#include "geoview/numerics/init.hpp"
#include "geoview/numerics/ops.hpp"

namespace geoview::fusion {

namespace {

// Indices of the key rows of each group in lexicographic order of their values.
std::vector<std::size_t> canonical_key_order(const nn::Tensor& g, std::size_t groups) {
  const std::size_t n = g.dim(0) / groups;
  const std::size_t cols = g.dim(1);
  const auto d = g.data();
  std::vector<std::size_t> order(g.dim(0));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(grp * n);
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(n),
                     [&](std::size_t a, std::size_t b) {
                       return std::lexicographical_compare(&d[a * cols], &d[a * cols] + cols,
                                                           &d[b * cols], &d[b * cols] + cols);
                     });
  }
  return order;
}

}  // namespace

nlohmann::json to_json(const FusionConfig& c) {
  return {{"enabled", c.enabled},
          {"residual", c.residual},
          {"heads", c.heads},
          {"per_camera", c.per_camera}};
}

FusionConfig fusion_config_from_json(const nlohmann::json& j, FusionConfig c) {
  c.enabled = j.value("enabled", c.enabled);
  c.residual = j.value("residual", c.residual);
  c.heads = j.value("heads", c.heads);
  c.per_camera = j.value("per_camera", c.per_camera);
  require(c.heads >= 1, ErrorKind::Config, "fusion needs at least one head");
  return c;
}

CrossAttention::CrossAttention(int channels, int prior_channels, int heads,
                               std::uint64_t seed)
    : channels_(channels), prior_channels_(prior_channels), heads_(heads) {
  require(channels > 0 && prior_channels > 0 && heads > 0 && channels % heads == 0,
          ErrorKind::Config,
          "cross-attention: " + std::to_string(channels) +
              " channels must split evenly over " + std::to_string(heads) + " heads");
  Rng rng(seed);
  const auto c = static_cast<std::size_t>(channels);
  const auto cg = static_cast<std::size_t>(prior_channels);
  wq = nn::xavier({c, c}, rng);
  wk = nn::xavier({cg, c}, rng);
  wv = nn::xavier({cg, c}, rng);
  wo = nn::xavier({c, c}, rng);
}

void CrossAttention::check(const nn::Tensor& f_hat, const nn::Tensor& g,
                           std::size_t groups) const {
  require(f_hat.rank() == 2 && f_hat.dim(1) == static_cast<std::size_t>(channels_),
          ErrorKind::Dimension,
          "fusion query must be [tokens, " + std::to_string(channels_) + "], got " +
              nn::shape_str(f_hat.shape()));
  require(g.rank() == 2 && g.dim(1) == static_cast<std::size_t>(prior_channels_),
          ErrorKind::Dimension,
          "fusion key/value must be [tokens, " + std::to_string(prior_channels_) +
              "], got " + nn::shape_str(g.shape()));
  require(f_hat.dim(0) > 0 && g.dim(0) > 0 && groups > 0 && f_hat.dim(0) % groups == 0 &&
              g.dim(0) % groups == 0,
          ErrorKind::Dimension, "fusion token counts do not split into groups");
}

nn::Tensor CrossAttention::attend(const nn::Tensor& f_hat, const nn::Tensor& g,
                                  std::size_t groups) const {
  check(f_hat, g, groups);
  const auto order = canonical_key_order(g, groups);
  const auto gs = nn::gather_rows(g, order);
  auto q = nn::matmul(f_hat, wq);
  auto k = nn::matmul(gs, wk);
  auto v = nn::matmul(gs, wv);
  auto a = nn::attention(q, k, v, static_cast<std::size_t>(heads_), groups);
  return nn::matmul(a, wo);
}

nn::Tensor CrossAttention::attention_map(const nn::Tensor& f_hat, const nn::Tensor& g,
                                         std::size_t groups) const {
  check(f_hat, g, groups);
  const auto order = canonical_key_order(g, groups);
  const auto sorted = nn::attention_weights(
      nn::matmul(f_hat.detach(), wq.detach()),
      nn::matmul(nn::gather_rows(g.detach(), order), wk.detach()),
      static_cast<std::size_t>(heads_), groups);
  const std::size_t nk = g.dim(0) / groups;
  const std::size_t rows = sorted.numel() / nk;
  const std::size_t rows_per_group = rows / groups;
  const auto src = sorted.data();
  std::vector<double> out(sorted.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = (r / rows_per_group) * nk;
    for (std::size_t j = 0; j < nk; ++j) out[r * nk + (order[base + j] - base)] = src[r * nk + j];
  }
  return nn::Tensor::from(sorted.shape(), std::move(out));
}

nn::ParamList CrossAttention::parameters(const std::string& prefix) const {
  return {{prefix + "wq", wq}, {prefix + "wk", wk}, {prefix + "wv", wv}, {prefix + "wo", wo}};
}

nn::Tensor fuse(const nn::Tensor& f_hat, const nn::Tensor& g, const CrossAttention* block,
                const FusionConfig& cfg, std::size_t groups) {
  if (!cfg.enabled) return f_hat;
  require(block != nullptr, ErrorKind::Contract, "fusion enabled without parameters");
  auto out = block->attend(f_hat, g, groups);
  return cfg.residual ? nn::add(f_hat, out) : out;
}

}  // namespace geoview::fusion
