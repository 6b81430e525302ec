#pragma once

#include "stackcount/render/camera.hpp"
#include "stackcount/render/tracer.hpp"
#include "stackcount/simlab/scene.hpp"

#include <iomanip>

namespace stackcount::render {

struct RenderConfig {
  int width = 512;
  int height = 512;
  double margin = 0.1;     // fraction of the image left around the framed box
  double fov_deg = 50.0;   // along the shorter image side
  int n_views = 30;        // nadir + n_views - 1 sphere views
  std::uint64_t seed = 0;  // for the sphere views
  int jobs = 1;

  void validate() const {
    if (width < 1 || height < 1) throw UsageError("render: image size must be positive");
    if (!(margin >= 0.0 && margin < 1.0)) throw UsageError("render: degenerate framing (margin must lie in [0, 1))");
    if (n_views < 1) throw UsageError("render: need at least one view");
    focal_for_fov(width, height, fov_deg);
  }
};

struct View {
  int id = 0;
  Camera camera;
  DepthMap depth;
  SegMask mask;
};

inline AABB stack_bounds(const simlab::Scene& scene, const TriMesh& object) {
  auto hp = simlab::hull_points(object);
  AABB b;
  for (const auto& p : scene.poses) b.expand(simlab::posed_bounds(hp, p));
  if (b.empty()) throw DataError("scene has no objects");
  return b;
}

inline AABB scene_bounds(const simlab::Scene& scene, const TriMesh& object) {
  AABB b = stack_bounds(scene, object);
  if (scene.container.has_container) {
    AABB o = scene.container.outer();
    b.expand(o.min);
    b.expand(o.max);
  }
  return b;
}

// Straight down over the container (or the stack when there is none), close
// enough that the box's top face fills (1 - margin) of the image.
inline Camera make_nadir_camera(const simlab::Scene& scene, const TriMesh& object, const RenderConfig& cfg) {
  cfg.validate();
  AABB frame = scene.container.has_container ? scene.container.outer() : stack_bounds(scene, object);
  AABB all = scene_bounds(scene, object);
  double f = focal_for_fov(cfg.width, cfg.height, cfg.fov_deg);
  Vec3 ext = frame.extent();
  // Half extent in pixels = f * half / distance <= (1 - margin) * size / 2.
  double dx = f * ext.x() / ((1.0 - cfg.margin) * cfg.width);
  double dy = f * ext.y() / ((1.0 - cfg.margin) * cfg.height);
  double dist = std::max({dx, dy, 1e-6});
  Vec3 c = frame.center();
  Vec3 eye(c.x(), c.y(), std::max(frame.max.z(), all.max.z()) + dist);
  Camera cam;
  cam.R << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  cam.t = -(cam.R * eye);
  cam.fx = cam.fy = f;
  cam.width = cfg.width;
  cam.height = cfg.height;
  cam.cx = cfg.width / 2.0;
  cam.cy = cfg.height / 2.0;
  return cam;
}

inline Vec3 stack_centroid(const simlab::Scene& scene) {
  if (scene.poses.empty()) throw DataError("scene has no objects");
  Vec3 c = Vec3::Zero();
  for (const auto& p : scene.poses) c += p.translation;
  return c / double(scene.poses.size());
}

// Cameras on the upper hemisphere (elevation 15..85 degrees) of a sphere
// around the stack centroid, far enough that the whole scene stays in frame.
inline std::vector<Camera> make_sphere_cameras(const simlab::Scene& scene, const TriMesh& object, int n, Rng& rng,
                                               const RenderConfig& cfg) {
  cfg.validate();
  if (n < 1) throw UsageError("make_sphere_cameras: n must be >= 1");
  Vec3 target = stack_centroid(scene);
  AABB all = scene_bounds(scene, object);
  double radius = 0.0;
  for (int k = 0; k < 8; ++k) {
    Vec3 corner(k & 1 ? all.max.x() : all.min.x(), k & 2 ? all.max.y() : all.min.y(), k & 4 ? all.max.z() : all.min.z());
    radius = std::max(radius, (corner - target).norm());
  }
  double f = focal_for_fov(cfg.width, cfg.height, cfg.fov_deg);
  double half = std::atan((1.0 - cfg.margin) * 0.5 * std::min(cfg.width, cfg.height) / f);
  double dist = radius / std::sin(half);
  std::vector<Camera> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    double az = uniform(rng, 0.0, 2.0 * kPi);
    double el = uniform(rng, 15.0, 85.0) * kPi / 180.0;
    Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    out.push_back(look_at(target + dist * dir, target, Vec3::UnitZ(), f, cfg.width, cfg.height));
  }
  return out;
}

inline std::vector<Camera> default_cameras(const simlab::Scene& scene, const TriMesh& object, const RenderConfig& cfg) {
  std::vector<Camera> cams{make_nadir_camera(scene, object, cfg)};
  if (cfg.n_views > 1) {
    Rng rng = substream(cfg.seed ^ scene.seed, 0x5eed);
    auto more = make_sphere_cameras(scene, object, cfg.n_views - 1, rng, cfg);
    cams.insert(cams.end(), more.begin(), more.end());
  }
  return cams;
}

inline SceneTracer make_tracer(const simlab::Scene& scene, const TriMesh& object) {
  return SceneTracer(object, scene.poses, simlab::make_container(scene.container), scene.container.ground_z());
}

// One center ray per pixel; rows are independent so any `jobs` gives the
// same rasters.
inline std::pair<DepthMap, SegMask> render_view(const SceneTracer& tracer, const Camera& cam, int jobs = 1) {
  cam.validate();
  DepthMap depth(cam.width, cam.height, kNoDepth);
  SegMask mask(cam.width, cam.height, kGround);
  Vec3 origin = cam.center();
  parallel_for(static_cast<std::size_t>(cam.height), jobs, [&](std::size_t j0, std::size_t j1) {
    for (std::size_t j = j0; j < j1; ++j)
      for (int i = 0; i < cam.width; ++i) {
        auto hit = tracer.trace(Ray{origin, cam.pixel_direction(i, static_cast<int>(j))});
        if (!hit.hit()) continue;
        depth.at(i, static_cast<int>(j)) = static_cast<float>(hit.t);
        mask.at(i, static_cast<int>(j)) = hit.label;
      }
  });
  return {std::move(depth), std::move(mask)};
}

// --- view files --------------------------------------------------------------

inline std::string view_stem(int id) {
  std::ostringstream ss;
  ss << "view_" << std::setw(3) << std::setfill('0') << id;
  return ss.str();
}

inline void save_view(const std::filesystem::path& dir, const View& v) {
  std::filesystem::create_directories(dir);
  std::string stem = view_stem(v.id);
  save_camera(dir / (stem + ".json"), v.camera);
  save_depth(dir / (stem + ".depth"), v.depth);
  save_mask(dir / (stem + ".pgm"), v.mask);
}

inline View load_view(const std::filesystem::path& dir, int id) {
  std::string stem = view_stem(id);
  for (const char* ext : {".json", ".depth", ".pgm"})
    if (!std::filesystem::exists(dir / (stem + ext)))
      throw DataError("missing view file " + (dir / (stem + ext)).string());
  View v;
  v.id = id;
  v.camera = load_camera(dir / (stem + ".json"));
  v.depth = load_depth(dir / (stem + ".depth"));
  v.mask = load_mask(dir / (stem + ".pgm"));
  if (!v.depth.same_size(v.camera.width, v.camera.height) || !v.mask.same_size(v.camera.width, v.camera.height))
    throw DataError(stem + ": camera, depth and mask sizes differ");
  return v;
}

// Views 0..n-1 in `dir`, stopping at the first id without a camera file.
inline std::vector<View> load_views(const std::filesystem::path& dir) {
  std::vector<View> out;
  for (int id = 0; std::filesystem::exists(dir / (view_stem(id) + ".json")); ++id) out.push_back(load_view(dir, id));
  if (out.empty()) throw DataError("no views found in " + dir.string() + " (expected " + view_stem(0) + ".json)");
  return out;
}

// View with the most OBJECTS pixels; ties go to the lowest id.
inline std::size_t key_view_select(const std::vector<View>& views) {
  if (views.empty()) throw DataError("key_view_select: no views");
  std::size_t best = 0, best_count = 0;
  for (std::size_t k = 0; k < views.size(); ++k) {
    std::size_t c = count_label(views[k].mask, kObjects);
    if (c > best_count || (c == best_count && views[k].id < views[best].id)) {
      best = k;
      best_count = c;
    }
  }
  if (best_count == 0) throw DataError("key_view_select: no view shows any object pixels");
  return best;
}

// Renders the default camera set of a saved scene into `<scene>/views`.
inline std::vector<View> render_scene(const std::filesystem::path& scene_dir, const RenderConfig& cfg,
                                      bool write = true) {
  cfg.validate();
  auto loaded = simlab::load_scene(scene_dir);
  auto tracer = make_tracer(loaded.scene, loaded.object);
  auto cams = default_cameras(loaded.scene, loaded.object, cfg);
  std::vector<View> views;
  for (std::size_t k = 0; k < cams.size(); ++k) {
    View v;
    v.id = static_cast<int>(k);
    v.camera = cams[k];
    std::tie(v.depth, v.mask) = render_view(tracer, cams[k], cfg.jobs);
    if (write) save_view(scene_dir / "views", v);
    views.push_back(std::move(v));
  }
  log_info("rendered " + std::to_string(views.size()) + " views of " + scene_dir.string());
  return views;
}

}  // namespace stackcount::render
