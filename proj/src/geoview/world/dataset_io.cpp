#include <cstring>
#include <fstream>
#include <map>

#include "geoview/common/error.hpp"
#include "geoview/common/hash.hpp"
#include "geoview/world/world.hpp"

// Container layout (little-endian):
//   "GVDS" u32 version
//   u64 header length, header JSON (spec, spec hash, rig, K, T, scenes)
//   per scene: u32 frame count; per frame: i32 timestep, then per view the
//     depth plane (f64, row-major) and the obstacle mask (u8)
//   u64 sample count; per sample: u64 scene index, i32 timestep,
//     T x 2 f64 ground-truth waypoints

namespace geoview::world {

namespace {

constexpr char kMagic[4] = {'G', 'V', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorKind::Io, "dataset file truncated");
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");

  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& s : ds.scenes) scenes.push_back(to_json(s));
  const nlohmann::json header = {{"format", "geoview-dataset"},
                                 {"spec", to_json(ds.spec)},
                                 {"config_hash", ds.spec_hash()},
                                 {"rig", camera::rig_to_json(ds.rig)},
                                 {"K", ds.spec.K},
                                 {"T", ds.spec.T},
                                 {"scenes", scenes}};
  const std::string hdr = header.dump();
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::uint64_t>(hdr.size()));
  os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));

  // Frames are shared between overlapping windows; write each once.
  std::vector<std::map<int, const RenderedFrame*>> frames(ds.scenes.size());
  for (const auto& s : ds.samples)
    for (const auto& f : s.frames) frames.at(s.scene_index)[f->timestep] = f.get();
  for (const auto& per_scene : frames) {
    put(os, static_cast<std::uint32_t>(per_scene.size()));
    for (const auto& [step, f] : per_scene) {
      put(os, static_cast<std::int32_t>(step));
      for (const auto& v : f->views) {
        os.write(reinterpret_cast<const char*>(v.depth.data()),
                 static_cast<std::streamsize>(v.depth.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(v.obstacle_mask.data()),
                 static_cast<std::streamsize>(v.obstacle_mask.size()));
      }
    }
  }
  put(os, static_cast<std::uint64_t>(ds.samples.size()));
  for (const auto& s : ds.samples) {
    put(os, static_cast<std::uint64_t>(s.scene_index));
    put(os, static_cast<std::int32_t>(s.timestep));
    for (const auto& w : s.gt_waypoints) {
      put(os, w.x());
      put(os, w.y());
    }
  }
  if (!os) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open dataset '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorKind::Io, "'" + path + "' is not a dataset container");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    fail(ErrorKind::Io, "unsupported dataset version " + std::to_string(version));
  const auto hdr_len = get<std::uint64_t>(is);
  std::string hdr(hdr_len, '\0');
  is.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (!is) fail(ErrorKind::Io, "dataset header truncated");

  Dataset ds;
  try {
    const auto header = nlohmann::json::parse(hdr);
    ds.spec = dataset_spec_from_json(header.at("spec"));
    ds.rig = camera::rig_from_json(header.at("rig"));
    for (const auto& s : header.at("scenes")) ds.scenes.push_back(scene_from_json(s));
    if (header.at("config_hash").get<std::string>() != ds.spec_hash())
      fail(ErrorKind::Io, "dataset header hash mismatch in '" + path + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed dataset header: ") + e.what());
  }

  std::vector<std::map<int, std::shared_ptr<const RenderedFrame>>> frames(ds.scenes.size());
  for (auto& per_scene : frames) {
    const auto n = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n; ++i) {
      auto f = std::make_shared<RenderedFrame>();
      f->timestep = get<std::int32_t>(is);
      for (const auto& cam : ds.rig.cameras) {
        CameraView v;
        v.width = cam.intrinsics.width;
        v.height = cam.intrinsics.height;
        const std::size_t px = static_cast<std::size_t>(v.width) * v.height;
        v.depth.resize(px);
        v.obstacle_mask.resize(px);
        is.read(reinterpret_cast<char*>(v.depth.data()),
                static_cast<std::streamsize>(px * sizeof(double)));
        is.read(reinterpret_cast<char*>(v.obstacle_mask.data()),
                static_cast<std::streamsize>(px));
        if (!is) fail(ErrorKind::Io, "dataset frame data truncated");
        v.intensity.resize(px);
        for (std::size_t k = 0; k < px; ++k)
          v.intensity[k] = intensity_of(v.depth[k], v.obstacle_mask[k] != 0);
        f->views.push_back(std::move(v));
      }
      per_scene[f->timestep] = std::move(f);
    }
  }
  const auto n_samples = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    Sample s;
    s.scene_index = get<std::uint64_t>(is);
    s.timestep = get<std::int32_t>(is);
    require(s.scene_index < ds.scenes.size(), ErrorKind::Io,
            "sample references unknown scene");
    const Scene& scene = ds.scenes[s.scene_index];
    for (int j = 0; j < ds.spec.T; ++j) {
      const double x = get<double>(is);
      const double y = get<double>(is);
      s.gt_waypoints.emplace_back(x, y);
    }
    for (int step = s.timestep - ds.spec.K + 1; step <= s.timestep; ++step) {
      auto it = frames[s.scene_index].find(step);
      require(it != frames[s.scene_index].end(), ErrorKind::Io,
              "sample references a missing frame");
      s.frames.push_back(it->second);
    }
    s.rig = ds.rig;
    s.scene_seed = scene.seed;
    s.ego_pose = scene.ego_pose(s.timestep);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace geoview::world
