#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoview/camera/camera.hpp"
#include "geoview/planner/planner.hpp"
#include "geoview/world/world.hpp"
#include "json.hpp"

namespace geoview::evaluation {

using planner::Trajectory;
using world::Vec2;

// Mean over the horizon of the unsquared Euclidean distance.
double l2_error(std::span<const Vec2> pred, std::span<const Vec2> gt);
inline double l2_error(const Trajectory& pred, std::span<const Vec2> gt) {
  return l2_error(pred.waypoints, gt);
}
std::vector<double> horizon_errors(std::span<const Vec2> pred, std::span<const Vec2> gt);

struct EgoExtents {
  double length = 4.0;
  double width = 1.8;
};

// Heading of each waypoint: direction of travel from the previous waypoint
// (the origin for the first); a zero-length step keeps the previous heading.
std::vector<double> waypoint_headings(std::span<const Vec2> ego_waypoints);

// A sample collides iff the rotated ego footprint, as its world-axis-aligned
// bounding box, intersects an obstacle footprint at any waypoint.
bool collides(std::span<const Vec2> ego_waypoints, const world::Pose2& ego_pose,
              std::span<const world::Box> obstacles, const EgoExtents& ego);

struct MetricResult {
  std::string label;
  double l2 = 0.0;
  std::vector<double> l2_per_horizon;
  double collision_rate = 0.0;
  std::size_t n_samples = 0;
};

nlohmann::json to_json(const MetricResult& m);
MetricResult metric_from_json(const nlohmann::json& j);

struct Predictions {
  std::vector<Trajectory> trajectories;  // dataset sample order
};

// Pure function of (predictions, ground truth, scenes).
MetricResult metrics_from_predictions(const std::string& label, const Predictions& preds,
                                      const world::Dataset& ds, const EgoExtents& ego);

double collision_rate(const Predictions& preds, const world::Dataset& ds, const EgoExtents& ego);

// Embedding rig per sample; nullopt = sample.rig.
using OverrideFn = std::function<std::optional<camera::CameraRig>(const world::Sample&)>;

Predictions predict(const planner::PlannerModel& model, const world::Dataset& ds,
                    const OverrideFn& override_fn = {}, int workers = 1);

EgoExtents ego_extents_of(const world::Dataset& ds);

struct EvalContext {
  std::string checkpoint_hash;
  int workers = 1;
  camera::DepthAxis depth_axis = camera::DepthAxis::Optical;
};

struct SweepResult {
  std::vector<MetricResult> conditions;  // standard_conditions() order
  std::string scenes_hash;               // shared eval scene set
  std::string checkpoint_hash;

  const MetricResult& at(const std::string& label) const;
  // Mean L2 over every condition except the original.
  double perturbed_mean_l2() const;
};

// `base` is the eval dataset rendered with the model's training rig.
SweepResult perturbation_sweep(const planner::PlannerModel& model, const world::Dataset& base,
                               const EvalContext& ctx);

struct ReplacementSet {
  std::string label;
  std::vector<std::string> cameras;
};

// none, front_rear, sides, all for the canonical six-camera rig.
std::vector<ReplacementSet> standard_replacement_sets(const camera::CameraRig& rig);
ReplacementSet replacement_set(const std::string& label, const camera::CameraRig& rig);

struct CounterfactualResult {
  camera::Perturbation condition;
  std::vector<MetricResult> rows;  // one per replacement set, in request order
  std::string scenes_hash;
  std::string checkpoint_hash;

  const MetricResult& at(const std::string& label) const;
};

CounterfactualResult counterfactual(const planner::PlannerModel& model, const world::Dataset& base,
                                    const std::vector<ReplacementSet>& sets,
                                    const EvalContext& ctx,
                                    camera::Perturbation condition = {camera::PerturbationKind::Depth,
                                                                      1.0});

// Hash of the scene set and ground truth, independent of the rendering rig.
std::string scenes_hash(const world::Dataset& ds);

nlohmann::json to_json(const SweepResult& r);
SweepResult sweep_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CounterfactualResult& r);
CounterfactualResult counterfactual_from_json(const nlohmann::json& j);

}  // namespace geoview::evaluation
