#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace geoview::camera {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Conventions, asserted in the tests:
//   ego frame    x forward, y left, z up ("flu")
//   camera frame x right, y down, z along the optical axis ("rdf")
// Pixel coordinates are continuous; integer (u, v) addresses the pixel at
// column u, row v.

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

// Camera-to-ego rigid pose: p_ego = rotation * p_cam + translation.
struct Extrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  Vec3 optical_axis() const { return rotation.col(2); }
};

struct Camera {
  std::string name;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
};

struct CameraRig {
  std::vector<Camera> cameras;

  void validate() const;
  std::size_t size() const { return cameras.size(); }
  std::optional<std::size_t> index_of(const std::string& name) const;
  const Camera& operator[](std::size_t i) const { return cameras[i]; }
};

bool operator==(const Intrinsics& a, const Intrinsics& b);
bool operator==(const Extrinsics& a, const Extrinsics& b);
bool operator==(const Camera& a, const Camera& b);
bool operator==(const CameraRig& a, const CameraRig& b);

struct PixelDepth {
  double u;
  double v;
  double depth;
};

// p = R (K^-1 [u, v, 1]^T * depth) + d
Vec3 unproject(const Intrinsics& intr, const Extrinsics& extr, double u,
               double v, double depth);

// Inverse of unproject; throws BehindCamera when the camera-frame depth is
// not positive. No image-bounds check.
PixelDepth project(const Intrinsics& intr, const Extrinsics& extr,
                   const Vec3& p_ego);

// Camera-to-ego rotation for a camera yawed by `yaw_rad` about ego z and
// pitched up by `pitch_rad`.
Mat3 camera_rotation(double yaw_rad, double pitch_rad = 0.0);
Mat3 rotation_about_camera_x(double angle_rad);
Mat3 rotation_about_z(double angle_rad);

enum class PerturbationKind { Identity, Pitch, Height, Depth };

// Magnitude is degrees for pitch (positive tilts the optical axis up) and
// meters for height and depth.
struct Perturbation {
  PerturbationKind kind = PerturbationKind::Identity;
  double magnitude = 0.0;

  std::string label() const;
};

// Direction used by the depth perturbation.
enum class DepthAxis { Optical, EgoForward };

CameraRig apply_perturbation(const CameraRig& rig, const Perturbation& pert,
                             DepthAxis axis = DepthAxis::Optical);

PerturbationKind parse_perturbation_kind(const std::string& s);
std::string to_string(PerturbationKind kind);

// Original plus the five benchmark conditions, in report column order.
std::vector<Perturbation> standard_conditions();

struct RigConfig {
  int width = 56;
  int height = 32;
  double mount_height = 1.5;
  double mount_radius = 1.0;
};

// Evenly yawed surround rig, pitch 0, fx = fy = width / 2, principal point at
// the image center. n must be 4 or 6.
CameraRig canonical_rig(int n_cameras, const RigConfig& cfg = {});

// Applies the rigid map x -> R x + t to every camera pose.
CameraRig transform_rig(const CameraRig& rig, const Mat3& r, const Vec3& t);

// Copies the extrinsics of the named cameras from `source` into `target`.
CameraRig replace_extrinsics(const CameraRig& target, const CameraRig& source,
                             const std::vector<std::string>& names);

nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RigConfig& cfg);
RigConfig rig_config_from_json(const nlohmann::json& j, RigConfig base = {});

}  // namespace geoview::camera
