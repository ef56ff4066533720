#include "geoview/world/world.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include "geoview/common/error.hpp"
#include "geoview/common/hash.hpp"
#include "geoview/common/parallel.hpp"
#include "geoview/common/rng.hpp"

namespace geoview::world {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Vec2 to_ego(const Pose2& pose, const Vec2& p) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const double dx = p.x() - pose.x, dy = p.y() - pose.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 to_world(const Pose2& pose, const Vec2& p) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  return {pose.x + c * p.x() - s * p.y(), pose.y + s * p.x() + c * p.y()};
}

std::string to_string(ProgramKind kind) {
  switch (kind) {
    case ProgramKind::Straight: return "straight";
    case ProgramKind::ArcLeft: return "arc-left";
    case ProgramKind::ArcRight: return "arc-right";
    case ProgramKind::LaneChange: return "lane-change";
  }
  return "straight";
}

ProgramKind parse_program_kind(const std::string& s) {
  for (auto k : kAllPrograms)
    if (to_string(k) == s) return k;
  fail(ErrorKind::Config, "unknown ego program '" + s + "'");
}

Pose2 EgoProgram::pose_at(double t) const {
  const double s = speed * t;
  switch (kind) {
    case ProgramKind::Straight:
      return {s, 0.0, 0.0};
    case ProgramKind::ArcLeft:
    case ProgramKind::ArcRight: {
      if (curvature == 0.0) return {s, 0.0, 0.0};
      const double sign = kind == ProgramKind::ArcLeft ? 1.0 : -1.0;
      const double a = curvature * s;
      return {std::sin(a) / curvature, sign * (1.0 - std::cos(a)) / curvature,
              sign * a};
    }
    case ProgramKind::LaneChange: {
      const double frac = std::clamp(s / lane_length, 0.0, 1.0);
      const double y = lane_offset * 0.5 * (1.0 - std::cos(std::numbers::pi * frac));
      const bool inside = s > 0.0 && s < lane_length;
      const double slope =
          inside ? lane_offset * 0.5 * std::numbers::pi / lane_length *
                       std::sin(std::numbers::pi * frac)
                 : 0.0;
      return {s, y, std::atan(slope)};
    }
  }
  return {};
}

void DifficultyConfig::validate() const {
  require(!programs.empty(), ErrorKind::Config, "no ego programs enabled");
  require(speed_min > 0.0 && speed_max >= speed_min, ErrorKind::Config,
          "invalid speed range");
  require(curvature_min >= 0.0 && curvature_max >= curvature_min,
          ErrorKind::Config, "invalid curvature range");
  require(clutter_min >= 0 && clutter_max >= clutter_min, ErrorKind::Config,
          "invalid clutter count range");
  require(wall_spacing > 0.0 && lane_length > 0.0, ErrorKind::Config,
          "wall spacing and lane length must be positive");
  require(clutter_radius_max >= clutter_radius_min && clutter_size_max >= clutter_size_min,
          ErrorKind::Config, "invalid clutter ranges");
}

nlohmann::json to_json(const DifficultyConfig& c) {
  std::vector<std::string> programs;
  for (auto p : c.programs) programs.push_back(to_string(p));
  return {{"programs", programs},
          {"speed_min", c.speed_min},
          {"speed_max", c.speed_max},
          {"curvature_min", c.curvature_min},
          {"curvature_max", c.curvature_max},
          {"lane_offset", c.lane_offset},
          {"lane_length", c.lane_length},
          {"corridor_walls", c.corridor_walls},
          {"corridor_half_width", c.corridor_half_width},
          {"wall_spacing", c.wall_spacing},
          {"wall_length", c.wall_length},
          {"wall_height", c.wall_height},
          {"wall_keep_prob", c.wall_keep_prob},
          {"wall_behind", c.wall_behind},
          {"wall_ahead", c.wall_ahead},
          {"clutter_min", c.clutter_min},
          {"clutter_max", c.clutter_max},
          {"clutter_radius_min", c.clutter_radius_min},
          {"clutter_radius_max", c.clutter_radius_max},
          {"clutter_size_min", c.clutter_size_min},
          {"clutter_size_max", c.clutter_size_max},
          {"ego_length", c.ego_length},
          {"ego_width", c.ego_width},
          {"clearance", c.clearance}};
}

DifficultyConfig difficulty_from_json(const nlohmann::json& j, DifficultyConfig c) {
  if (j.contains("programs")) {
    c.programs.clear();
    for (const auto& p : j.at("programs")) c.programs.push_back(parse_program_kind(p.get<std::string>()));
  }
#define GV_FIELD(name) c.name = j.value(#name, c.name)
  GV_FIELD(speed_min);
  GV_FIELD(speed_max);
  GV_FIELD(curvature_min);
  GV_FIELD(curvature_max);
  GV_FIELD(lane_offset);
  GV_FIELD(lane_length);
  GV_FIELD(corridor_walls);
  GV_FIELD(corridor_half_width);
  GV_FIELD(wall_spacing);
  GV_FIELD(wall_length);
  GV_FIELD(wall_height);
  GV_FIELD(wall_keep_prob);
  GV_FIELD(wall_behind);
  GV_FIELD(wall_ahead);
  GV_FIELD(clutter_min);
  GV_FIELD(clutter_max);
  GV_FIELD(clutter_radius_min);
  GV_FIELD(clutter_radius_max);
  GV_FIELD(clutter_size_min);
  GV_FIELD(clutter_size_max);
  GV_FIELD(ego_length);
  GV_FIELD(ego_width);
  GV_FIELD(clearance);
#undef GV_FIELD
  c.validate();
  return c;
}

std::vector<Vec2> Scene::waypoints(int step) const {
  const Pose2 now = ego_pose(step);
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int j = 1; j <= horizon; ++j) {
    const Pose2 p = ego_pose(step + j);
    out.push_back(to_ego(now, Vec2(p.x, p.y)));
  }
  return out;
}

nlohmann::json to_json(const Scene& s) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& b : s.obstacles)
    obs.push_back({b.center.x(), b.center.y(), b.center.z(), b.size.x(),
                   b.size.y(), b.size.z()});
  return {{"seed", s.seed},
          {"program",
           {{"kind", to_string(s.program.kind)},
            {"speed", s.program.speed},
            {"curvature", s.program.curvature},
            {"lane_offset", s.program.lane_offset},
            {"lane_length", s.program.lane_length}}},
          {"horizon", s.horizon},
          {"dt", s.dt},
          {"steps", s.steps},
          {"obstacles", obs}};
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& p = j.at("program");
  s.program.kind = parse_program_kind(p.at("kind").get<std::string>());
  s.program.speed = p.at("speed").get<double>();
  s.program.curvature = p.at("curvature").get<double>();
  s.program.lane_offset = p.at("lane_offset").get<double>();
  s.program.lane_length = p.at("lane_length").get<double>();
  s.horizon = j.at("horizon").get<int>();
  s.dt = j.at("dt").get<double>();
  s.steps = j.at("steps").get<int>();
  for (const auto& o : j.at("obstacles")) {
    const auto v = o.get<std::vector<double>>();
    require(v.size() == 6, ErrorKind::Config, "malformed obstacle record");
    s.obstacles.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])});
  }
  return s;
}

Vec2 ego_half_extents(double yaw, double length, double width) {
  const double c = std::abs(std::cos(yaw)), s = std::abs(std::sin(yaw));
  return {0.5 * length * c + 0.5 * width * s, 0.5 * length * s + 0.5 * width * c};
}

bool footprint_overlaps(const Pose2& pose, const Box& box, double length,
                        double width, double margin) {
  const Vec2 h = ego_half_extents(pose.yaw, length, width);
  return std::abs(pose.x - box.center.x()) < h.x() + margin + 0.5 * box.size.x() &&
         std::abs(pose.y - box.center.y()) < h.y() + margin + 0.5 * box.size.y();
}

namespace {

bool blocks_path(const Box& box, const EgoProgram& prog, double t_end,
                 const DifficultyConfig& cfg) {
  constexpr double kStep = 0.1;
  for (double t = 0.0;; t += kStep) {
    const double tt = std::min(t, t_end);
    if (footprint_overlaps(prog.pose_at(tt), box, cfg.ego_length, cfg.ego_width,
                           cfg.clearance))
      return true;
    if (tt >= t_end) return false;
  }
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const DifficultyConfig& cfg,
                     const SceneTiming& timing) {
  cfg.validate();
  require(timing.horizon >= 1 && timing.dt > 0.0 && timing.steps > timing.horizon,
          ErrorKind::Config, "invalid scene timing");
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.horizon = timing.horizon;
  scene.dt = timing.dt;
  scene.steps = timing.steps;
  auto& prog = scene.program;
  prog.kind = cfg.programs[rng.below(cfg.programs.size())];
  prog.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
  prog.curvature = rng.uniform(cfg.curvature_min, cfg.curvature_max);
  prog.lane_offset = cfg.lane_offset;
  prog.lane_length = cfg.lane_length;

  const double t_end = (timing.steps - 1) * timing.dt;

  if (cfg.corridor_walls) {
    const double s_end = prog.speed * t_end + cfg.wall_ahead;
    for (double s = -cfg.wall_behind; s <= s_end; s += cfg.wall_spacing) {
      const Pose2 p = prog.pose_at(s / prog.speed);
      const Vec2 normal(-std::sin(p.yaw), std::cos(p.yaw));
      for (double side : {1.0, -1.0}) {
        const double keep = rng.uniform();
        if (keep >= cfg.wall_keep_prob) continue;
        const Vec2 c = Vec2(p.x, p.y) + side * cfg.corridor_half_width * normal;
        Box b{Vec3(c.x(), c.y(), 0.5 * cfg.wall_height),
              Vec3(cfg.wall_length, cfg.wall_length, cfg.wall_height)};
        if (!blocks_path(b, prog, t_end, cfg)) scene.obstacles.push_back(b);
      }
    }
  }

  const auto span = static_cast<std::uint64_t>(cfg.clutter_max - cfg.clutter_min + 1);
  const int n_clutter = cfg.clutter_min + static_cast<int>(rng.below(span));
  for (int i = 0; i < n_clutter; ++i) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double r = rng.uniform(cfg.clutter_radius_min, cfg.clutter_radius_max);
      const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double sx = rng.uniform(cfg.clutter_size_min, cfg.clutter_size_max);
      const double sy = rng.uniform(cfg.clutter_size_min, cfg.clutter_size_max);
      const double sz = rng.uniform(cfg.clutter_size_min, cfg.clutter_size_max);
      Box b{Vec3(r * std::cos(th), r * std::sin(th), 0.5 * sz), Vec3(sx, sy, sz)};
      if (!blocks_path(b, prog, t_end, cfg)) {
        scene.obstacles.push_back(b);
        break;
      }
    }
  }
  return scene;
}

double intensity_of(double depth, bool obstacle) {
  const double inv = std::isfinite(depth) ? std::clamp(1.0 / depth, 0.0, 1.0) : 0.0;
  return inv + (obstacle ? 0.5 : 0.0);
}

RenderedFrame render_depth(const Scene& scene, const camera::CameraRig& rig,
                           const Pose2& ego_pose, int timestep) {
  RenderedFrame frame;
  frame.timestep = timestep;
  const camera::Mat3 yaw = camera::rotation_about_z(ego_pose.yaw);
  const Vec3 ego_origin(ego_pose.x, ego_pose.y, 0.0);
  const std::size_t nb = scene.obstacles.size();
  std::vector<Vec3> lo(nb), hi(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    lo[i] = scene.obstacles[i].lo();
    hi[i] = scene.obstacles[i].hi();
  }
  for (const auto& cam : rig.cameras) {
    const auto& K = cam.intrinsics;
    const camera::Mat3 rw = yaw * cam.extrinsics.rotation;
    const Vec3 o = yaw * cam.extrinsics.translation + ego_origin;
    CameraView view;
    view.width = K.width;
    view.height = K.height;
    const std::size_t n = static_cast<std::size_t>(K.width) * K.height;
    view.depth.assign(n, kInf);
    view.obstacle_mask.assign(n, 0);
    view.intensity.assign(n, 0.0);
    for (int v = 0; v < K.height; ++v) {
      for (int u = 0; u < K.width; ++u) {
        const Vec3 d = rw * Vec3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
        double best = kInf;
        bool obstacle = false;
        if (d.z() < 0.0) {
          const double t = -o.z() / d.z();
          if (t > 0.0) best = t;
        }
        for (std::size_t b = 0; b < nb; ++b) {
          double tnear = -kInf, tfar = kInf;
          bool miss = false;
          for (int a = 0; a < 3 && !miss; ++a) {
            if (d[a] == 0.0) {
              if (o[a] < lo[b][a] || o[a] > hi[b][a]) miss = true;
              continue;
            }
            double t1 = (lo[b][a] - o[a]) / d[a];
            double t2 = (hi[b][a] - o[a]) / d[a];
            if (t1 > t2) std::swap(t1, t2);
            tnear = std::max(tnear, t1);
            tfar = std::min(tfar, t2);
            if (tnear > tfar) miss = true;
          }
          if (miss || tnear <= 0.0) continue;
          if (tnear < best) {
            best = tnear;
            obstacle = true;
          }
        }
        const std::size_t idx = static_cast<std::size_t>(v) * K.width + u;
        view.depth[idx] = best;
        view.obstacle_mask[idx] = obstacle ? 1 : 0;
        view.intensity[idx] = intensity_of(best, obstacle);
      }
    }
    frame.views.push_back(std::move(view));
  }
  return frame;
}

void DatasetSpec::validate() const {
  require(n_scenes >= 1, ErrorKind::Config, "dataset needs at least one scene");
  require(K >= 1 && T >= 1 && dt > 0.0, ErrorKind::Config, "invalid K/T/dt");
  require(windows_per_scene >= 1, ErrorKind::Config, "windows_per_scene must be >= 1");
  require(first_window_step() >= K - 1, ErrorKind::Config,
          "first window step must leave room for K frames");
  difficulty.validate();
}

SceneTiming DatasetSpec::timing() const {
  return {T, dt, first_window_step() + windows_per_scene - 1 + T + 1};
}

nlohmann::json to_json(const DatasetSpec& s) {
  return {{"seed", s.seed},
          {"n_scenes", s.n_scenes},
          {"K", s.K},
          {"T", s.T},
          {"dt", s.dt},
          {"windows_per_scene", s.windows_per_scene},
          {"first_step", s.first_step},
          {"difficulty", to_json(s.difficulty)}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j, DatasetSpec s) {
  s.seed = j.value("seed", s.seed);
  s.n_scenes = j.value("n_scenes", s.n_scenes);
  s.K = j.value("K", s.K);
  s.T = j.value("T", s.T);
  s.dt = j.value("dt", s.dt);
  s.windows_per_scene = j.value("windows_per_scene", s.windows_per_scene);
  s.first_step = j.value("first_step", s.first_step);
  if (j.contains("difficulty")) s.difficulty = difficulty_from_json(j.at("difficulty"), s.difficulty);
  s.validate();
  return s;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t scene_index) {
  return combine_seed(dataset_seed, static_cast<std::uint64_t>(scene_index));
}

namespace {

// Frames and samples of one scene, in window order.
std::vector<Sample> build_scene_samples(const Scene& scene, std::size_t index,
                                        const DatasetSpec& spec,
                                        const camera::CameraRig& rig) {
  const int first = spec.first_window_step();
  const int last = first + spec.windows_per_scene - 1;
  std::vector<std::shared_ptr<const RenderedFrame>> frames;
  for (int step = first - spec.K + 1; step <= last; ++step)
    frames.push_back(std::make_shared<const RenderedFrame>(
        render_depth(scene, rig, scene.ego_pose(step), step)));
  std::vector<Sample> out;
  for (int w = 0; w < spec.windows_per_scene; ++w) {
    Sample s;
    s.frames.assign(frames.begin() + w, frames.begin() + w + spec.K);
    s.rig = rig;
    s.timestep = first + w;
    s.gt_waypoints = scene.waypoints(s.timestep);
    s.scene_index = index;
    s.scene_seed = scene.seed;
    s.ego_pose = scene.ego_pose(s.timestep);
    out.push_back(std::move(s));
  }
  return out;
}

Dataset assemble(const DatasetSpec& spec, const camera::CameraRig& rig,
                 std::vector<Scene> scenes, int workers) {
  Dataset ds;
  ds.spec = spec;
  ds.rig = rig;
  std::vector<std::vector<Sample>> per_scene(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    per_scene[i] = build_scene_samples(scenes[i], i, spec, rig);
  });
  for (auto& v : per_scene)
    for (auto& s : v) ds.samples.push_back(std::move(s));
  deterministic_shuffle(ds.samples, combine_seed(spec.seed, 0x5348554646ULL));
  ds.scenes = std::move(scenes);
  return ds;
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec, const camera::CameraRig& rig,
                     int workers) {
  spec.validate();
  rig.validate();
  std::vector<Scene> scenes(static_cast<std::size_t>(spec.n_scenes));
  const auto timing = spec.timing();
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    scenes[i] = generate_scene(scene_seed(spec.seed, i), spec.difficulty, timing);
  });
  return assemble(spec, rig, std::move(scenes), workers);
}

Dataset rerender(const Dataset& source, const camera::CameraRig& rig, int workers) {
  rig.validate();
  return assemble(source.spec, rig, source.scenes, workers);
}

std::string Dataset::spec_hash() const {
  nlohmann::json h = {{"spec", to_json(spec)}, {"rig", camera::rig_to_json(rig)}};
  return hash_hex(h.dump());
}

std::string Dataset::hash() const {
  Fnv1a h;
  h.update(spec_hash());
  for (const auto& s : samples) {
    h.update_pod(static_cast<std::uint64_t>(s.scene_index));
    h.update_pod(static_cast<std::int64_t>(s.timestep));
    for (const auto& w : s.gt_waypoints) {
      h.update_pod(w.x());
      h.update_pod(w.y());
    }
    for (const auto& f : s.frames)
      for (const auto& v : f->views) {
        h.update(std::span<const double>(v.depth));
        h.update(v.obstacle_mask.data(), v.obstacle_mask.size());
      }
  }
  return h.hex();
}

}  // namespace geoview::world
