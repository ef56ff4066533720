#include "geoview/camera/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <set>

#include "geoview/common/error.hpp"

namespace geoview::camera {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

void Intrinsics::validate() const {
  require(fx > 0.0 && fy > 0.0, ErrorKind::Config,
          "focal lengths must be positive");
  require(width > 0 && height > 0, ErrorKind::Config,
          "image extents must be positive");
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height,
          ErrorKind::Config, "principal point outside the image");
}

void Extrinsics::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  require(ortho < 1e-9, ErrorKind::Config, "rotation is not orthonormal");
  require(std::abs(rotation.determinant() - 1.0) < 1e-9, ErrorKind::Config,
          "rotation determinant is not +1");
  require(translation.allFinite(), ErrorKind::Config, "translation not finite");
}

void CameraRig::validate() const {
  require(!cameras.empty(), ErrorKind::Config, "rig has no cameras");
  std::set<std::string> names;
  for (const auto& c : cameras) {
    require(names.insert(c.name).second, ErrorKind::Config,
            "duplicate camera name '" + c.name + "'");
    c.intrinsics.validate();
    c.extrinsics.validate();
  }
}

std::optional<std::size_t> CameraRig::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < cameras.size(); ++i)
    if (cameras[i].name == name) return i;
  return std::nullopt;
}

bool operator==(const Intrinsics& a, const Intrinsics& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy &&
         a.width == b.width && a.height == b.height;
}
bool operator==(const Extrinsics& a, const Extrinsics& b) {
  return a.rotation == b.rotation && a.translation == b.translation;
}
bool operator==(const Camera& a, const Camera& b) {
  return a.name == b.name && a.intrinsics == b.intrinsics &&
         a.extrinsics == b.extrinsics;
}
bool operator==(const CameraRig& a, const CameraRig& b) {
  return a.cameras == b.cameras;
}

Vec3 unproject(const Intrinsics& intr, const Extrinsics& extr, double u,
               double v, double depth) {
  if (!(depth > 0.0))
    fail(ErrorKind::InvalidDepth,
         "unproject: depth must be positive, got " + std::to_string(depth));
  if (!intr.contains(u, v))
    fail(ErrorKind::Bounds, "unproject: pixel (" + std::to_string(u) + ", " +
                                std::to_string(v) + ") outside " +
                                std::to_string(intr.width) + "x" +
                                std::to_string(intr.height) + " image");
  const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return extr.rotation * (ray * depth) + extr.translation;
}

PixelDepth project(const Intrinsics& intr, const Extrinsics& extr,
                   const Vec3& p_ego) {
  const Vec3 pc = extr.rotation.transpose() * (p_ego - extr.translation);
  if (!(pc.z() > 0.0))
    fail(ErrorKind::BehindCamera,
         "project: point has camera depth " + std::to_string(pc.z()));
  return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy,
          pc.z()};
}

Mat3 rotation_about_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 rotation_about_camera_x(double a) {
  // Positive angle moves +z toward -y (up in the camera frame).
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}

Mat3 camera_rotation(double yaw_rad, double pitch_rad) {
  // Columns: camera x (right), y (down), z (forward) in ego coordinates, for
  // a level camera looking along ego +x; then yaw about ego z.
  Mat3 level;
  level << 0, 0, 1,
          -1, 0, 0,
           0, -1, 0;
  return rotation_about_z(yaw_rad) * level * rotation_about_camera_x(pitch_rad);
}

std::string to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Identity: return "identity";
    case PerturbationKind::Pitch: return "pitch";
    case PerturbationKind::Height: return "height";
    case PerturbationKind::Depth: return "depth";
  }
  return "identity";
}

PerturbationKind parse_perturbation_kind(const std::string& s) {
  if (s == "identity" || s == "original") return PerturbationKind::Identity;
  if (s == "pitch") return PerturbationKind::Pitch;
  if (s == "height") return PerturbationKind::Height;
  if (s == "depth") return PerturbationKind::Depth;
  fail(ErrorKind::Config, "unknown perturbation kind '" + s + "'");
}

std::string Perturbation::label() const {
  if (kind == PerturbationKind::Identity) return "original";
  char buf[64];
  if (kind == PerturbationKind::Pitch)
    std::snprintf(buf, sizeof buf, "pitch_%+gdeg", magnitude);
  else
    std::snprintf(buf, sizeof buf, "%s_%+gm", to_string(kind).c_str(), magnitude);
  return buf;
}

std::vector<Perturbation> standard_conditions() {
  return {
      {PerturbationKind::Identity, 0.0},
      {PerturbationKind::Pitch, 5.0},
      {PerturbationKind::Pitch, -10.0},
      {PerturbationKind::Height, 1.0},
      {PerturbationKind::Height, -0.7},
      {PerturbationKind::Depth, 1.0},
  };
}

CameraRig apply_perturbation(const CameraRig& rig, const Perturbation& pert,
                             DepthAxis axis) {
  CameraRig out = rig;
  switch (pert.kind) {
    case PerturbationKind::Identity:
      break;
    case PerturbationKind::Pitch: {
      const Mat3 tilt = rotation_about_camera_x(pert.magnitude * kDeg);
      for (auto& c : out.cameras) c.extrinsics.rotation = c.extrinsics.rotation * tilt;
      break;
    }
    case PerturbationKind::Height:
      for (auto& c : out.cameras) c.extrinsics.translation.z() += pert.magnitude;
      break;
    case PerturbationKind::Depth:
      for (auto& c : out.cameras) {
        const Vec3 dir = axis == DepthAxis::Optical ? c.extrinsics.optical_axis()
                                                    : Vec3::UnitX().eval();
        c.extrinsics.translation += pert.magnitude * dir;
      }
      break;
    default:
      fail(ErrorKind::Config, "unknown perturbation kind");
  }
  return out;
}

CameraRig canonical_rig(int n_cameras, const RigConfig& cfg) {
  struct Slot {
    const char* name;
    double yaw_deg;
  };
  std::vector<Slot> slots;
  if (n_cameras == 6) {
    slots = {{"front", 0},       {"front_left", 60},  {"front_right", -60},
             {"back", 180},      {"back_left", 120},  {"back_right", -120}};
  } else if (n_cameras == 4) {
    slots = {{"front", 0}, {"left", 90}, {"back", 180}, {"right", 270}};
  } else {
    fail(ErrorKind::Config, "canonical rig supports 4 or 6 cameras, got " +
                                std::to_string(n_cameras));
  }
  require(cfg.width > 0 && cfg.height > 0, ErrorKind::Config,
          "image extents must be positive");
  CameraRig rig;
  for (const auto& s : slots) {
    Camera c;
    c.name = s.name;
    c.intrinsics.width = cfg.width;
    c.intrinsics.height = cfg.height;
    c.intrinsics.fx = c.intrinsics.fy = cfg.width / 2.0;
    c.intrinsics.cx = cfg.width / 2.0;
    c.intrinsics.cy = cfg.height / 2.0;
    const double yaw = s.yaw_deg * kDeg;
    c.extrinsics.rotation = camera_rotation(yaw);
    c.extrinsics.translation = Vec3(cfg.mount_radius * std::cos(yaw),
                                    cfg.mount_radius * std::sin(yaw),
                                    cfg.mount_height);
    rig.cameras.push_back(std::move(c));
  }
  return rig;
}

CameraRig transform_rig(const CameraRig& rig, const Mat3& r, const Vec3& t) {
  CameraRig out = rig;
  for (auto& c : out.cameras) {
    c.extrinsics.rotation = r * c.extrinsics.rotation;
    c.extrinsics.translation = r * c.extrinsics.translation + t;
  }
  return out;
}

CameraRig replace_extrinsics(const CameraRig& target, const CameraRig& source,
                             const std::vector<std::string>& names) {
  CameraRig out = target;
  for (const auto& name : names) {
    const auto ti = out.index_of(name);
    const auto si = source.index_of(name);
    require(ti && si, ErrorKind::Config, "camera '" + name + "' not in rig");
    out.cameras[*ti].extrinsics = source.cameras[*si].extrinsics;
  }
  return out;
}

nlohmann::json rig_to_json(const CameraRig& rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : rig.cameras) {
    const auto& k = c.intrinsics;
    const auto& e = c.extrinsics;
    std::vector<double> rot;
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) rot.push_back(e.rotation(r, col));
    cams.push_back({{"name", c.name},
                    {"intrinsics",
                     {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                      {"width", k.width}, {"height", k.height}}},
                    {"rotation", rot},
                    {"translation",
                     {e.translation.x(), e.translation.y(), e.translation.z()}}});
  }
  return {{"ego_xyz", "flu"}, {"cam_xyz", "rdf"}, {"cameras", cams}};
}

CameraRig rig_from_json(const nlohmann::json& j) {
  try {
    require(j.value("ego_xyz", "") == "flu" && j.value("cam_xyz", "") == "rdf",
            ErrorKind::Config, "rig file has unsupported axis conventions");
    CameraRig rig;
    for (const auto& jc : j.at("cameras")) {
      Camera c;
      c.name = jc.at("name").get<std::string>();
      const auto& k = jc.at("intrinsics");
      c.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(),
                      k.at("cx").get<double>(), k.at("cy").get<double>(),
                      k.at("width").get<int>(), k.at("height").get<int>()};
      const auto rot = jc.at("rotation").get<std::vector<double>>();
      const auto tr = jc.at("translation").get<std::vector<double>>();
      require(rot.size() == 9 && tr.size() == 3, ErrorKind::Config,
              "camera '" + c.name + "' has malformed extrinsics");
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) c.extrinsics.rotation(r, col) = rot[r * 3 + col];
      c.extrinsics.translation = Vec3(tr[0], tr[1], tr[2]);
      rig.cameras.push_back(std::move(c));
    }
    rig.validate();
    return rig;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed rig json: ") + e.what());
  }
}

nlohmann::json to_json(const RigConfig& cfg) {
  return {{"width", cfg.width},
          {"height", cfg.height},
          {"mount_height", cfg.mount_height},
          {"mount_radius", cfg.mount_radius}};
}

RigConfig rig_config_from_json(const nlohmann::json& j, RigConfig base) {
  base.width = j.value("width", base.width);
  base.height = j.value("height", base.height);
  base.mount_height = j.value("mount_height", base.mount_height);
  base.mount_radius = j.value("mount_radius", base.mount_radius);
  return base;
}

}  // namespace geoview::camera
