#pragma once

#include <cstdint>

#include "geoview/numerics/optim.hpp"
#include "geoview/numerics/tensor.hpp"
#include "json.hpp"

namespace geoview::fusion {

struct FusionConfig {
  bool enabled = true;
  bool residual = true;
  int heads = 4;
  // Keys restricted to the query's own camera instead of the joint set.
  bool per_camera = false;
};

nlohmann::json to_json(const FusionConfig& cfg);
FusionConfig fusion_config_from_json(const nlohmann::json& j, FusionConfig base = {});

// Single cross-attention block: queries from image features, keys and values
// from frozen prior features. Projections have no bias.
class CrossAttention {
 public:
  CrossAttention(int channels, int prior_channels, int heads, std::uint64_t seed);

  // Attn(Q = f_hat Wq, K = g Wk, V = g Wv) Wo, with `groups` independent
  // query/key blocks (one per sample, or per camera).
  nn::Tensor attend(const nn::Tensor& f_hat, const nn::Tensor& g, std::size_t groups) const;

  // [groups, heads, queries, keys]
  nn::Tensor attention_map(const nn::Tensor& f_hat, const nn::Tensor& g,
                           std::size_t groups) const;

  nn::ParamList parameters(const std::string& prefix = "fusion.") const;
  int heads() const { return heads_; }
  int channels() const { return channels_; }
  int prior_channels() const { return prior_channels_; }

  nn::Tensor wq, wk, wv, wo;

 private:
  void check(const nn::Tensor& f_hat, const nn::Tensor& g, std::size_t groups) const;

  int channels_;
  int prior_channels_;
  int heads_;
};

// F_tilde. With cfg.enabled == false the input tensor itself is returned.
nn::Tensor fuse(const nn::Tensor& f_hat, const nn::Tensor& g, const CrossAttention* block,
                const FusionConfig& cfg, std::size_t groups);

}  // namespace geoview::fusion
