#include <algorithm>

#include "doctest.h"
#include "geoview/common/error.hpp"
#include "geoview/numerics/ops.hpp"
#include "geoview/planner/planner.hpp"
#include "geoview/training/training.hpp"
#include "planner_fixture.hpp"
#include "support.hpp"

using namespace geoview;
using namespace geoview::planner;
using geoview::testing::bit_equal;
using geoview::testing::check_gradients;

namespace {

std::vector<double> flat(const Trajectory& t) {
  std::vector<double> v;
  for (const auto& w : t.waypoints) {
    v.push_back(w.x());
    v.push_back(w.y());
  }
  return v;
}

world::Dataset canonical_dataset(int scenes = 2) {
  world::DatasetSpec s;
  s.n_scenes = scenes;
  s.seed = 21;
  return world::make_dataset(s, camera::canonical_rig(6));
}

}  // namespace

TEST_SUITE("planner") {

TEST_CASE("zero-initialised head predicts the origin") {
  ModelConfig cfg;
  cfg.zero_init_head = true;
  const PlannerModel model(cfg, 1, camera::canonical_rig(6));
  const auto ds = canonical_dataset();
  for (const auto& s : ds.samples) {
    const auto t = model.forward(s);
    REQUIRE(t.waypoints.size() == 6);
    for (const auto& w : t.waypoints) CHECK(w.isZero(0.0));
  }
}

TEST_CASE("override with the sample rig is an identity") {
  const PlannerModel model(ModelConfig{}, 2, camera::canonical_rig(6));
  const auto ds = canonical_dataset();
  const auto& s = ds.samples[0];
  CHECK(bit_equal(flat(model.forward(s)), flat(model.forward(s, s.rig))));
}

TEST_CASE("override changes the output when the rig differs") {
  const PlannerModel model(ModelConfig{}, 2, camera::canonical_rig(6));
  const auto ds = canonical_dataset();
  const auto& s = ds.samples[0];
  const auto up = camera::apply_perturbation(s.rig, {camera::PerturbationKind::Height, 1.0});
  CHECK_FALSE(bit_equal(flat(model.forward(s)), flat(model.forward(s, up))));
}

TEST_CASE("without fusion and spatial embedding only intensity matters") {
  ModelConfig cfg;
  cfg.fusion.enabled = false;
  const PlannerModel model(cfg, 3, camera::canonical_rig(6));
  for (auto& p : model.parameters())
    if (p.name.rfind("spatial.", 0) == 0)
      for (double& x : nn::Tensor(p.tensor).mutable_data()) x = 0.0;
  const auto ds = canonical_dataset();
  const auto& s = ds.samples[0];
  world::Sample altered = s;
  altered.frames.clear();
  for (const auto& f : s.frames) {
    auto copy = std::make_shared<world::RenderedFrame>(*f);
    for (auto& v : copy->views)
      for (double& d : v.depth)
        if (std::isfinite(d)) d *= 1.7;
    altered.frames.push_back(copy);
  }
  CHECK(bit_equal(flat(model.forward(s)), flat(model.forward(altered))));

  // control: with the spatial encoder active, the same edit is visible
  const PlannerModel active(cfg, 3, camera::canonical_rig(6));
  CHECK_FALSE(bit_equal(flat(active.forward(s)), flat(active.forward(altered))));
}

TEST_CASE("parameter counts") {
  const int hidden = 10;
  const PlanningHead head(8, hidden, 6, 1);
  std::size_t n = 0;
  for (const auto& p : head.parameters()) n += p.tensor.numel();
  CHECK(n == static_cast<std::size_t>(8 * hidden + hidden + hidden * 12 + 12));

  ModelConfig cfg;
  const PlannerModel model(cfg, 1, camera::canonical_rig(6));
  const std::size_t C = 32, Cg = 32, E = 48, H = 64, P = 32, Hh = 64, O = 12;
  const std::size_t expected = (64 * C + C) + (E * H + H + H * C + C) + (2 * C * C + 2 * Cg * C) +
                               (C * P + P) + (P * Hh + Hh + Hh * O + O);
  CHECK(model.count_params() == expected);
  CHECK(PlannerModel(cfg, 1, camera::canonical_rig(6)).count_params() == model.count_params());

  ModelConfig off = cfg;
  off.fusion.enabled = false;
  ModelConfig off_wide = off;
  off_wide.prior.channels = 64;
  const auto rig = camera::canonical_rig(6);
  CHECK(PlannerModel(off, 1, rig).count_params() == PlannerModel(off_wide, 1, rig).count_params());
  ModelConfig on_wide = cfg;
  on_wide.prior.channels = 64;
  CHECK(PlannerModel(on_wide, 1, rig).count_params() - model.count_params() == 2 * 32 * C);
}

TEST_CASE("camera order does not change the trajectory") {
  for (bool per_camera : {false, true}) {
    ModelConfig cfg;
    cfg.fusion.per_camera = per_camera;
    const auto rig = camera::canonical_rig(6);
    const PlannerModel model(cfg, 4, rig);
    const auto ds = canonical_dataset();
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    for (const auto& s : ds.samples) {
      world::Sample p = s;
      p.rig.cameras.clear();
      for (auto i : perm) p.rig.cameras.push_back(s.rig.cameras[i]);
      p.frames.clear();
      for (const auto& f : s.frames) {
        auto copy = std::make_shared<world::RenderedFrame>();
        copy->timestep = f->timestep;
        for (auto i : perm) copy->views.push_back(f->views[i]);
        p.frames.push_back(copy);
      }
      const auto a = flat(model.forward(s));
      const auto b = flat(model.forward(p));
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
    }
  }
}

TEST_CASE("full planner gradient against finite differences") {
  for (auto source : {geoprior::DepthSource::Oracle, geoprior::DepthSource::MonocularHeuristic}) {
    auto cfg = geoview::testing::tiny_model_config();
    cfg.depth_source = source;
    const auto ds = geoview::testing::tiny_dataset();
    const PlannerModel model(cfg, 5, geoview::testing::tiny_rig());
    std::vector<PreparedSample> prepared;
    for (std::size_t i = 0; i < 3; ++i) prepared.push_back(model.prepare(ds.samples[i]));
    std::vector<const PreparedSample*> batch;
    std::vector<double> target;
    for (const auto& p : prepared) {
      batch.push_back(&p);
      target.insert(target.end(), p.target.begin(), p.target.end());
    }
    const auto tgt = nn::Tensor::from({batch.size(), 6}, target);
    auto rep = check_gradients(model.parameters(),
                               [&] { return training::loss(model.forward(batch), tgt); }, 1e-4);
    CHECK_MESSAGE(rep.max_rel < 1e-4, rep.worst);
  }
}

TEST_CASE("batched forward equals per-sample forward") {
  const PlannerModel model(ModelConfig{}, 6, camera::canonical_rig(6));
  const auto ds = canonical_dataset();
  std::vector<PreparedSample> prepared;
  std::vector<const PreparedSample*> batch;
  for (std::size_t i = 0; i < 3; ++i) prepared.push_back(model.prepare(ds.samples[i]));
  for (const auto& p : prepared) batch.push_back(&p);
  const auto out = model.forward(batch);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto single = flat(model.forward(ds.samples[i]));
    for (std::size_t j = 0; j < 12; ++j) CHECK(std::abs(out.at(i, j) - single[j]) < 1e-12);
  }
}

TEST_CASE("attention map covers every query and key") {
  const PlannerModel model(ModelConfig{}, 7, camera::canonical_rig(6));
  const auto ds = canonical_dataset();
  const auto w = model.attention_map(ds.samples[0]);
  CHECK(w.shape() == nn::Shape{1, 4, 168, 168});
  ModelConfig off;
  off.fusion.enabled = false;
  CHECK_FALSE(PlannerModel(off, 7, camera::canonical_rig(6)).attention_map(ds.samples[0]).defined());
}

TEST_CASE("contract errors") {
  const PlannerModel model(ModelConfig{}, 8, camera::canonical_rig(6));
  const auto ds = geoview::testing::tiny_dataset();
  CHECK_THROWS_AS(model.forward(ds.samples[0]), Error);
  ModelConfig bad;
  bad.patch = 7;
  CHECK_THROWS_AS(PlannerModel(bad, 1, camera::canonical_rig(6)), Error);
  CHECK_THROWS_AS(PlannerModel(ModelConfig{}, 1, camera::canonical_rig(4)), Error);
}

TEST_CASE("model config json round trip") {
  ModelConfig cfg;
  cfg.depth_source = geoprior::DepthSource::MonocularHeuristic;
  cfg.fusion.enabled = false;
  cfg.spe.bands = 6;
  CHECK(to_json(model_config_from_json(to_json(cfg))) == to_json(cfg));
}

}  // TEST_SUITE
