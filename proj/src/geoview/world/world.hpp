#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "geoview/camera/camera.hpp"
#include "json.hpp"

namespace geoview::world {

using camera::Vec3;
using Vec2 = Eigen::Vector2d;

// Axis-aligned box; `size` holds full extents in meters.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();

  Vec3 lo() const { return center - 0.5 * size; }
  Vec3 hi() const { return center + 0.5 * size; }
};

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

// Expresses a world-frame planar point in the ego frame of `pose`.
Vec2 to_ego(const Pose2& pose, const Vec2& world_xy);
Vec2 to_world(const Pose2& pose, const Vec2& ego_xy);

enum class ProgramKind { Straight, ArcLeft, ArcRight, LaneChange };

std::string to_string(ProgramKind kind);
ProgramKind parse_program_kind(const std::string& s);
inline constexpr std::array<ProgramKind, 4> kAllPrograms = {
    ProgramKind::Straight, ProgramKind::ArcLeft, ProgramKind::ArcRight,
    ProgramKind::LaneChange};

// Noise-free ego motion, defined for every time (negative times extrapolate
// the program backwards). Arcs have constant speed and curvature; the lane
// change moves left by `lane_offset` along a half-cosine over `lane_length`
// meters of forward travel starting at x = 0.
struct EgoProgram {
  ProgramKind kind = ProgramKind::Straight;
  double speed = 3.0;
  double curvature = 0.05;
  double lane_offset = 3.5;
  double lane_length = 15.0;

  Pose2 pose_at(double time_s) const;
};

struct DifficultyConfig {
  std::vector<ProgramKind> programs{kAllPrograms.begin(), kAllPrograms.end()};
  double speed_min = 3.0;
  double speed_max = 3.0;
  double curvature_min = 0.05;
  double curvature_max = 0.05;
  double lane_offset = 3.5;
  double lane_length = 15.0;

  bool corridor_walls = true;
  double corridor_half_width = 3.0;
  double wall_spacing = 3.0;
  double wall_length = 2.0;
  double wall_height = 2.5;
  double wall_keep_prob = 0.85;
  double wall_behind = 12.0;  // meters of corridor behind the start pose
  double wall_ahead = 25.0;   // meters beyond the last ground-truth pose

  int clutter_min = 0;
  int clutter_max = 4;
  double clutter_radius_min = 5.0;
  double clutter_radius_max = 30.0;
  double clutter_size_min = 1.0;
  double clutter_size_max = 3.0;

  // Ego footprint (length along heading, width) and the clearance kept
  // between the ground-truth path and any obstacle.
  double ego_length = 4.0;
  double ego_width = 1.8;
  double clearance = 0.5;

  void validate() const;
};

nlohmann::json to_json(const DifficultyConfig& cfg);
DifficultyConfig difficulty_from_json(const nlohmann::json& j,
                                      DifficultyConfig base = {});

struct Scene {
  std::uint64_t seed = 0;
  std::vector<Box> obstacles;
  EgoProgram program;
  int horizon = 6;     // T
  double dt = 0.5;     // seconds per step
  int steps = 8;       // timesteps 0..steps-1 exist in the scene

  Pose2 ego_pose(int step) const { return program.pose_at(step * dt); }
  // T future waypoints relative to the ego pose at `step`.
  std::vector<Vec2> waypoints(int step) const;
};

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

// Axis-aligned half extents of the ego footprint rotated by `yaw`.
Vec2 ego_half_extents(double yaw, double length, double width);

// True when the ego footprint at `pose` (inflated by `margin`) overlaps the
// 2D footprint of `box`.
bool footprint_overlaps(const Pose2& pose, const Box& box, double length,
                        double width, double margin = 0.0);

struct SceneTiming {
  int horizon = 6;
  double dt = 0.5;
  int steps = 8;
};

Scene generate_scene(std::uint64_t seed, const DifficultyConfig& cfg,
                     const SceneTiming& timing);

// One camera's rendered view. Depth is camera-frame z in meters (+inf where
// no surface is hit); intensity = clamp(1/depth, 0, 1) + 0.5 * obstacle mask.
struct CameraView {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> obstacle_mask;
  std::vector<double> intensity;

  double depth_at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
};

double intensity_of(double depth, bool obstacle);

struct RenderedFrame {
  std::vector<CameraView> views;
  int timestep = 0;
};

// Analytic ray casting against the ground plane z = 0 and the scene boxes;
// the nearest positive hit wins.
RenderedFrame render_depth(const Scene& scene, const camera::CameraRig& rig,
                           const Pose2& ego_pose, int timestep = 0);

struct Sample {
  std::vector<std::shared_ptr<const RenderedFrame>> frames;  // oldest first
  camera::CameraRig rig;
  std::vector<Vec2> gt_waypoints;
  std::size_t scene_index = 0;
  std::uint64_t scene_seed = 0;
  int timestep = 0;
  Pose2 ego_pose;

  const RenderedFrame& current() const { return *frames.back(); }
};

struct DatasetSpec {
  std::uint64_t seed = 0;
  int n_scenes = 400;
  int K = 2;
  int T = 6;
  double dt = 0.5;
  int windows_per_scene = 2;
  int first_step = -1;  // window end step of the first sample; -1 = K-1
  DifficultyConfig difficulty;

  void validate() const;
  SceneTiming timing() const;
  int first_window_step() const { return first_step < 0 ? K - 1 : first_step; }
};

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j, DatasetSpec base = {});

struct Dataset {
  DatasetSpec spec;
  camera::CameraRig rig;
  std::vector<Scene> scenes;
  std::vector<Sample> samples;

  // Content hash over the header, every frame and every sample record.
  std::string hash() const;
  std::string spec_hash() const;
};

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t scene_index);

// Deterministic in (spec, rig); scenes are generated in parallel over
// `workers` threads and merged in scene-index order before the seeded
// shuffle, so the result does not depend on the worker count.
Dataset make_dataset(const DatasetSpec& spec, const camera::CameraRig& rig,
                     int workers = 1);

// Re-renders the scenes of `source` under another rig, preserving sample
// order and ground truth.
Dataset rerender(const Dataset& source, const camera::CameraRig& rig,
                 int workers = 1);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace geoview::world
