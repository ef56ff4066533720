#include "geoview/evaluation/evaluation.hpp"

#include <cmath>
#include <numeric>

#include "geoview/common/error.hpp"
#include "geoview/common/hash.hpp"
#include "geoview/common/parallel.hpp"

namespace geoview::evaluation {

namespace {

constexpr std::size_t kPredictChunk = 32;

void check_lengths(std::size_t a, std::size_t b) {
  require(a == b, ErrorKind::Contract,
          "trajectory length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

double l2_error(std::span<const Vec2> pred, std::span<const Vec2> gt) {
  check_lengths(pred.size(), gt.size());
  require(!pred.empty(), ErrorKind::Contract, "l2_error on empty trajectories");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - gt[i]).norm();
  return sum / static_cast<double>(pred.size());
}

std::vector<double> horizon_errors(std::span<const Vec2> pred, std::span<const Vec2> gt) {
  check_lengths(pred.size(), gt.size());
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = (pred[i] - gt[i]).norm();
  return out;
}

std::vector<double> waypoint_headings(std::span<const Vec2> wps) {
  std::vector<double> out(wps.size());
  Vec2 prev = Vec2::Zero();
  double heading = 0.0;
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const Vec2 d = wps[i] - prev;
    if (d.norm() > 1e-9) heading = std::atan2(d.y(), d.x());
    out[i] = heading;
    prev = wps[i];
  }
  return out;
}

bool collides(std::span<const Vec2> wps, const world::Pose2& ego_pose,
              std::span<const world::Box> obstacles, const EgoExtents& ego) {
  const auto headings = waypoint_headings(wps);
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const Vec2 w = world::to_world(ego_pose, wps[i]);
    const world::Pose2 pose{w.x(), w.y(), ego_pose.yaw + headings[i]};
    for (const auto& box : obstacles)
      if (world::footprint_overlaps(pose, box, ego.length, ego.width)) return true;
  }
  return false;
}

nlohmann::json to_json(const MetricResult& m) {
  return {{"label", m.label},
          {"l2", m.l2},
          {"l2_per_horizon", m.l2_per_horizon},
          {"collision_rate", m.collision_rate},
          {"n_samples", m.n_samples}};
}

MetricResult metric_from_json(const nlohmann::json& j) {
  MetricResult m;
  m.label = j.at("label").get<std::string>();
  m.l2 = j.at("l2").get<double>();
  m.l2_per_horizon = j.value("l2_per_horizon", std::vector<double>{});
  m.collision_rate = j.at("collision_rate").get<double>();
  m.n_samples = j.at("n_samples").get<std::size_t>();
  return m;
}

EgoExtents ego_extents_of(const world::Dataset& ds) {
  return {ds.spec.difficulty.ego_length, ds.spec.difficulty.ego_width};
}

double collision_rate(const Predictions& preds, const world::Dataset& ds, const EgoExtents& ego) {
  check_lengths(preds.trajectories.size(), ds.samples.size());
  if (ds.samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    require(s.scene_index < ds.scenes.size(), ErrorKind::Contract,
            "sample refers to a missing scene");
    if (collides(preds.trajectories[i].waypoints, s.ego_pose, ds.scenes[s.scene_index].obstacles,
                 ego))
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.samples.size());
}

MetricResult metrics_from_predictions(const std::string& label, const Predictions& preds,
                                      const world::Dataset& ds, const EgoExtents& ego) {
  check_lengths(preds.trajectories.size(), ds.samples.size());
  require(!ds.samples.empty(), ErrorKind::Contract, "metrics over an empty dataset");
  MetricResult m;
  m.label = label;
  m.n_samples = ds.samples.size();
  const std::size_t T = ds.samples.front().gt_waypoints.size();
  m.l2_per_horizon.assign(T, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& gt = ds.samples[i].gt_waypoints;
    const auto& pred = preds.trajectories[i].waypoints;
    sum += l2_error(pred, gt);
    const auto h = horizon_errors(pred, gt);
    for (std::size_t t = 0; t < T; ++t) m.l2_per_horizon[t] += h[t];
  }
  const double n = static_cast<double>(ds.samples.size());
  m.l2 = sum / n;
  for (auto& v : m.l2_per_horizon) v /= n;
  m.collision_rate = collision_rate(preds, ds, ego);
  return m;
}

Predictions predict(const planner::PlannerModel& model, const world::Dataset& ds,
                    const OverrideFn& override_fn, int workers) {
  const std::size_t n = ds.samples.size();
  const std::size_t chunks = (n + kPredictChunk - 1) / kPredictChunk;
  const int T = model.config().T;
  Predictions out;
  out.trajectories.resize(n);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * kPredictChunk;
    const std::size_t hi = std::min(n, lo + kPredictChunk);
    std::vector<planner::PreparedSample> prepared;
    prepared.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& s = ds.samples[i];
      std::optional<camera::CameraRig> rig;
      if (override_fn) rig = override_fn(s);
      prepared.push_back(model.prepare(s, rig ? &*rig : nullptr));
    }
    std::vector<const planner::PreparedSample*> ptrs;
    for (const auto& p : prepared) ptrs.push_back(&p);
    const auto y = model.forward(ptrs);
    const auto data = y.data();
    const std::size_t row = static_cast<std::size_t>(2 * T);
    for (std::size_t i = lo; i < hi; ++i) {
      auto traj = planner::to_trajectory(data.subspan((i - lo) * row, row), T);
      for (const auto& w : traj.waypoints)
        require(std::isfinite(w.x()) && std::isfinite(w.y()), ErrorKind::Numeric,
                "non-finite prediction for sample " + std::to_string(i));
      out.trajectories[i] = std::move(traj);
    }
  });
  return out;
}

std::string scenes_hash(const world::Dataset& ds) {
  Fnv1a h;
  h.update(world::to_json(ds.spec).dump());
  for (const auto& sc : ds.scenes) h.update(world::to_json(sc).dump());
  for (const auto& s : ds.samples) {
    h.update_pod(static_cast<std::uint64_t>(s.scene_index));
    h.update_pod(static_cast<std::int64_t>(s.timestep));
    for (const auto& w : s.gt_waypoints) {
      h.update_pod(w.x());
      h.update_pod(w.y());
    }
  }
  return h.hex();
}

const MetricResult& SweepResult::at(const std::string& label) const {
  for (const auto& m : conditions)
    if (m.label == label) return m;
  fail(ErrorKind::Contract, "sweep has no condition '" + label + "'");
}

double SweepResult::perturbed_mean_l2() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& m : conditions)
    if (m.label != "original") {
      sum += m.l2;
      ++n;
    }
  require(n > 0, ErrorKind::Contract, "sweep has no perturbed conditions");
  return sum / n;
}

namespace {

void check_base(const planner::PlannerModel& model, const world::Dataset& base) {
  require(!base.samples.empty(), ErrorKind::Contract, "evaluation dataset is empty");
  require(base.rig == model.training_rig(), ErrorKind::Contract,
          "evaluation dataset must be rendered with the model's training rig");
}

}  // namespace

SweepResult perturbation_sweep(const planner::PlannerModel& model, const world::Dataset& base,
                               const EvalContext& ctx) {
  check_base(model, base);
  SweepResult out;
  out.scenes_hash = scenes_hash(base);
  out.checkpoint_hash = ctx.checkpoint_hash;
  const auto ego = ego_extents_of(base);
  for (const auto& cond : camera::standard_conditions()) {
    const auto label = cond.label();
    if (cond.kind == camera::PerturbationKind::Identity) {
      out.conditions.push_back(
          metrics_from_predictions(label, predict(model, base, {}, ctx.workers), base, ego));
      continue;
    }
    const auto rig = camera::apply_perturbation(base.rig, cond, ctx.depth_axis);
    const auto ds = world::rerender(base, rig, ctx.workers);
    require(scenes_hash(ds) == out.scenes_hash, ErrorKind::Invariant,
            "perturbed eval set diverged from the original scene set");
    out.conditions.push_back(
        metrics_from_predictions(label, predict(model, ds, {}, ctx.workers), ds, ego));
  }
  return out;
}

std::vector<ReplacementSet> standard_replacement_sets(const camera::CameraRig& rig) {
  return {replacement_set("none", rig), replacement_set("front_rear", rig),
          replacement_set("sides", rig), replacement_set("all", rig)};
}

ReplacementSet replacement_set(const std::string& label, const camera::CameraRig& rig) {
  ReplacementSet s{label, {}};
  if (label == "none") return s;
  if (label == "front_rear") {
    s.cameras = {"front", "back"};
  } else if (label == "sides") {
    s.cameras = {"front_left", "front_right", "back_left", "back_right"};
  } else if (label == "all") {
    for (const auto& c : rig.cameras) s.cameras.push_back(c.name);
  } else {
    fail(ErrorKind::Config, "unknown replacement set '" + label +
                                "' (expected none, front_rear, sides or all)");
  }
  for (const auto& name : s.cameras)
    require(rig.index_of(name).has_value(), ErrorKind::Config,
            "replacement set '" + label + "' names camera '" + name + "' which is not in the rig");
  return s;
}

const MetricResult& CounterfactualResult::at(const std::string& label) const {
  for (const auto& m : rows)
    if (m.label == label) return m;
  fail(ErrorKind::Contract, "counterfactual has no row '" + label + "'");
}

CounterfactualResult counterfactual(const planner::PlannerModel& model, const world::Dataset& base,
                                    const std::vector<ReplacementSet>& sets,
                                    const EvalContext& ctx, camera::Perturbation condition) {
  check_base(model, base);
  require(!sets.empty(), ErrorKind::Config, "counterfactual needs at least one replacement set");
  CounterfactualResult out;
  out.condition = condition;
  out.scenes_hash = scenes_hash(base);
  out.checkpoint_hash = ctx.checkpoint_hash;
  const auto ego = ego_extents_of(base);
  const auto perturbed = camera::apply_perturbation(base.rig, condition, ctx.depth_axis);
  const world::Dataset ds = condition.kind == camera::PerturbationKind::Identity
                                ? base
                                : world::rerender(base, perturbed, ctx.workers);
  for (const auto& set : sets) {
    for (const auto& name : set.cameras)
      require(perturbed.index_of(name).has_value(), ErrorKind::Config,
              "camera '" + name + "' not in rig");
    OverrideFn fn;
    if (!set.cameras.empty()) {
      const auto emb = camera::replace_extrinsics(perturbed, model.training_rig(), set.cameras);
      fn = [emb](const world::Sample&) { return std::optional<camera::CameraRig>(emb); };
    }
    out.rows.push_back(
        metrics_from_predictions(set.label, predict(model, ds, fn, ctx.workers), ds, ego));
  }
  return out;
}

nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : r.conditions) rows.push_back(to_json(m));
  return {{"conditions", rows},
          {"scenes_hash", r.scenes_hash},
          {"checkpoint_hash", r.checkpoint_hash}};
}

SweepResult sweep_from_json(const nlohmann::json& j) {
  SweepResult r;
  for (const auto& m : j.at("conditions")) r.conditions.push_back(metric_from_json(m));
  r.scenes_hash = j.value("scenes_hash", "");
  r.checkpoint_hash = j.value("checkpoint_hash", "");
  return r;
}

nlohmann::json to_json(const CounterfactualResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : r.rows) rows.push_back(to_json(m));
  return {{"condition", {{"kind", camera::to_string(r.condition.kind)},
                         {"magnitude", r.condition.magnitude},
                         {"label", r.condition.label()}}},
          {"rows", rows},
          {"scenes_hash", r.scenes_hash},
          {"checkpoint_hash", r.checkpoint_hash}};
}

CounterfactualResult counterfactual_from_json(const nlohmann::json& j) {
  CounterfactualResult r;
  const auto& c = j.at("condition");
  r.condition.kind = camera::parse_perturbation_kind(c.at("kind").get<std::string>());
  r.condition.magnitude = c.at("magnitude").get<double>();
  for (const auto& m : j.at("rows")) r.rows.push_back(metric_from_json(m));
  r.scenes_hash = j.value("scenes_hash", "");
  r.checkpoint_hash = j.value("checkpoint_hash", "");
  return r;
}

}  // namespace geoview::evaluation
