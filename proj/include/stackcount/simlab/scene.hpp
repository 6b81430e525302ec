#pragma once

#include "stackcount/geom/contains.hpp"
#include "stackcount/simlab/container.hpp"
#include "stackcount/simlab/physics.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace stackcount::simlab {

using geom::RigidPose;
using json = nlohmann::ordered_json;

// Object template in its body frame: centroid at the origin.
struct ObjectTemplate {
  TriMesh mesh;
  double volume = 0.0;
  Mat3 inertia = Mat3::Identity();  // unit density, about the centroid
  double radius = 0.0;              // farthest vertex from the centroid
};

inline ObjectTemplate make_template(const TriMesh& raw, double side) {
  auto report = geom::check_mesh(raw);
  if (!report.watertight || report.components != 1)
    throw DataError("object mesh rejected by check_mesh: watertight=" + std::string(report.watertight ? "true" : "false") +
                    ", components=" + std::to_string(report.components));
  TriMesh m = side > 0.0 ? geom::normalize_to_cube(raw, side) : raw;
  auto mp = geom::mass_properties(m);
  if (!(mp.volume > 0.0)) throw DataError("object mesh is inward oriented (negative volume)");
  ObjectTemplate t;
  t.mesh = geom::translated(m, -mp.centroid);
  t.volume = mp.volume;
  t.inertia = mp.inertia;
  for (const auto& v : t.mesh.vertices) t.radius = std::max(t.radius, v.norm());
  return t;
}

struct GroundTruth {
  std::size_t count = 0;
  double gamma = 0.0;
  double gamma_stderr = 0.0;
  std::string gamma_region;
  double stack_volume = 0.0;
  double unit_volume = 0.0;
};

struct Scene {
  std::uint64_t seed = 0;
  ContainerSpec container;
  std::string object_mesh = "assets/object.obj";
  std::vector<RigidPose> poses;
  GroundTruth gt;
  bool partially_full = false;
  bool converged = true;
  std::size_t batches = 0;
  SimParams sim;
};

struct GammaEstimate {
  double value = 0.0;
  std::string method;
  std::size_t n_samples = 0;
  double std_error = 0.0;
};

// --- JSON --------------------------------------------------------------------

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw DataError(what + ": expected an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline json sim_json(const SimParams& p) {
  return json{{"timestep", p.timestep},
              {"max_steps", p.max_steps},
              {"friction", p.friction},
              {"restitution", p.restitution},
              {"sleep_lin_vel", p.sleep_lin_vel},
              {"sleep_ang_vel", p.sleep_ang_vel},
              {"gravity", p.gravity},
              {"batch_grid", p.batch_grid},
              {"solver_iterations", p.solver_iterations},
              {"sleep_time", p.sleep_time},
              {"wake_speed", p.wake_speed},
              {"linear_damping", p.linear_damping},
              {"angular_damping", p.angular_damping},
              {"baumgarte", p.baumgarte},
              {"slop", p.slop},
              {"max_correction", p.max_correction},
              {"max_speed", p.max_speed}};
}

inline SimParams json_sim(const json& j) {
  SimParams p;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("timestep", p.timestep);
  get("max_steps", p.max_steps);
  get("friction", p.friction);
  get("restitution", p.restitution);
  get("sleep_lin_vel", p.sleep_lin_vel);
  get("sleep_ang_vel", p.sleep_ang_vel);
  get("gravity", p.gravity);
  get("batch_grid", p.batch_grid);
  get("solver_iterations", p.solver_iterations);
  get("sleep_time", p.sleep_time);
  get("wake_speed", p.wake_speed);
  get("linear_damping", p.linear_damping);
  get("angular_damping", p.angular_damping);
  get("baumgarte", p.baumgarte);
  get("slop", p.slop);
  get("max_correction", p.max_correction);
  get("max_speed", p.max_speed);
  p.validate();
  return p;
}

inline json scene_json(const Scene& s) {
  json poses = json::array();
  for (const auto& p : s.poses) {
    const Quat& q = p.rotation;
    poses.push_back(json{{"quat", {q.w(), q.x(), q.y(), q.z()}}, {"pos", vec_json(p.translation)}});
  }
  return json{{"schema_version", 1},
              {"seed", s.seed},
              {"container",
               {{"dims", vec_json(s.container.inner_dims)},
                {"t", s.container.wall_ratio},
                {"base_center", vec_json(s.container.base_center)},
                {"has_container", s.container.has_container},
                {"up_axis", s.container.up_axis}}},
              {"object_mesh", s.object_mesh},
              {"poses", poses},
              {"gt",
               {{"count", s.gt.count},
                {"gamma", s.gt.gamma},
                {"gamma_stderr", s.gt.gamma_stderr},
                {"gamma_region", s.gt.gamma_region},
                {"stack_volume", s.gt.stack_volume},
                {"unit_volume", s.gt.unit_volume}}},
              {"partially_full", s.partially_full},
              {"converged", s.converged},
              {"batches", s.batches},
              {"sim_params", sim_json(s.sim)}};
}

inline Scene json_scene(const json& j) {
  try {
    Scene s;
    if (j.at("schema_version").get<int>() != 1) throw DataError("unsupported schema_version");
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& c = j.at("container");
    s.container.inner_dims = json_vec(c.at("dims"), "container.dims");
    s.container.wall_ratio = c.at("t").get<double>();
    s.container.base_center = json_vec(c.at("base_center"), "container.base_center");
    s.container.has_container = c.at("has_container").get<bool>();
    s.container.up_axis = c.value("up_axis", 2);
    s.container.validate();
    s.object_mesh = j.at("object_mesh").get<std::string>();
    for (const auto& p : j.at("poses")) {
      const auto& q = p.at("quat");
      if (!q.is_array() || q.size() != 4) throw DataError("pose quat: expected 4 numbers");
      Quat quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      s.poses.emplace_back(quat, json_vec(p.at("pos"), "pose pos"));
    }
    const auto& g = j.at("gt");
    s.gt.count = g.at("count").get<std::size_t>();
    s.gt.gamma = g.at("gamma").get<double>();
    s.gt.gamma_stderr = g.at("gamma_stderr").get<double>();
    s.gt.gamma_region = g.value("gamma_region", std::string("cavity"));
    s.gt.stack_volume = g.at("stack_volume").get<double>();
    s.gt.unit_volume = g.at("unit_volume").get<double>();
    s.partially_full = j.at("partially_full").get<bool>();
    s.converged = j.value("converged", true);
    s.batches = j.value("batches", std::size_t{0});
    if (j.contains("sim_params")) s.sim = json_sim(j.at("sim_params"));
    if (s.gt.count != s.poses.size()) throw DataError("gt.count does not match the number of poses");
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Scene directory: manifest.json plus assets/object.obj and assets/container.obj.
inline void save_scene(const std::filesystem::path& dir, const Scene& scene, const TriMesh& object_mesh) {
  std::filesystem::create_directories(dir / "assets");
  geom::save_obj(dir / scene.object_mesh, object_mesh);
  if (scene.container.has_container) geom::save_obj(dir / "assets" / "container.obj", make_container(scene.container));
  write_json(dir / "manifest.json", scene_json(scene));
}

struct LoadedScene {
  Scene scene;
  TriMesh object;  // body frame
};

inline LoadedScene load_scene(const std::filesystem::path& dir) {
  auto manifest = dir / "manifest.json";
  LoadedScene out;
  try {
    out.scene = json_scene(read_json(manifest));
  } catch (const DataError& e) {
    std::string what = e.what();
    if (what.find(manifest.string()) == std::string::npos) what = manifest.string() + ": " + what;
    throw DataError(what);
  }
  out.object = geom::load_obj(dir / out.scene.object_mesh);
  return out;
}

// --- posed objects and ground truth ------------------------------------------

inline std::vector<Vec3> hull_points(const TriMesh& mesh) {
  if (mesh.vertices.size() < 4) return mesh.vertices;
  return geom::convex_hull(mesh).vertices;
}

inline AABB posed_bounds(const std::vector<Vec3>& local_points, const RigidPose& pose) {
  AABB b;
  for (const auto& p : local_points) b.expand(pose.apply(p));
  return b;
}

// Union of posed copies of one mesh, for point queries.
class PosedObjects {
 public:
  PosedObjects(const TriMesh& mesh, std::vector<RigidPose> poses) : locator_(mesh), poses_(std::move(poses)) {
    auto hp = hull_points(mesh);
    boxes_.reserve(poses_.size());
    for (const auto& p : poses_) boxes_.push_back(posed_bounds(hp, p));
    bvh_.build(boxes_, 2);
  }

  bool contains(const Vec3& p) const {
    bool inside = false;
    bvh_.query(AABB(p, p), [&](std::uint32_t i) {
      if (!inside && boxes_[i].contains(p)) inside = locator_.contains(poses_[i].apply_inverse(p));
    });
    return inside;
  }

  const std::vector<AABB>& boxes() const { return boxes_; }
  std::size_t size() const { return poses_.size(); }

 private:
  geom::MeshLocator locator_;
  std::vector<RigidPose> poses_;
  std::vector<AABB> boxes_;
  geom::Bvh bvh_;
};

inline TriMesh stack_hull(const TriMesh& mesh, const std::vector<RigidPose>& poses) {
  if (poses.empty()) throw DataError("stack volume: no objects");
  auto hp = hull_points(mesh);
  std::vector<Vec3> pts;
  pts.reserve(hp.size() * poses.size());
  for (const auto& pose : poses)
    for (const auto& p : hp) pts.push_back(pose.apply(p));
  return geom::convex_hull(pts);
}

// Convex hull of all posed object vertices.
inline double gt_stack_volume(const TriMesh& mesh, const std::vector<RigidPose>& poses) {
  return geom::signed_volume(stack_hull(mesh, poses));
}

struct GammaRegion {
  enum class Kind { ConvexHull, Cavity, SubBox } kind = Kind::Cavity;
  double side = 0.5;

  static GammaRegion parse(const std::string& s) {
    if (s == "hull" || s == "convex_hull") return {Kind::ConvexHull, 0.0};
    if (s == "cavity" || s == "container_cavity") return {Kind::Cavity, 0.0};
    if (s.rfind("subbox:", 0) == 0) {
      double side = 0.0;
      try {
        side = std::stod(s.substr(7));
      } catch (...) {
        throw UsageError("bad region '" + s + "'");
      }
      if (!(side > 0.0)) throw UsageError("subbox side must be positive");
      return {Kind::SubBox, side};
    }
    throw UsageError("unknown region '" + s + "' (expected hull, cavity or subbox:<side>)");
  }

  std::string name() const {
    switch (kind) {
      case Kind::ConvexHull:
        return "hull";
      case Kind::Cavity:
        return "cavity";
      default: {
        std::ostringstream ss;
        ss << "subbox:" << side;
        return ss.str();
      }
    }
  }
};

// Cavity footprint from the floor up to the fill level (rim or highest object
// top, whichever is lower), so partially full containers are measured over
// the part the stack occupies.
inline AABB filled_cavity(const ContainerSpec& c, const std::vector<AABB>& object_boxes) {
  if (!c.has_container) throw DataError("cavity region requested for a scene without container");
  AABB cav = c.cavity();
  double top = cav.min.z();
  for (const auto& b : object_boxes) top = std::max(top, b.max.z());
  top = std::min(top, cav.max.z());
  if (!(top > cav.min.z())) throw DataError("empty region: no objects above the container floor");
  return AABB(cav.min, Vec3(cav.max.x(), cav.max.y(), top));
}

// Monte-Carlo occupancy over `region`. Blocks of samples draw from
// independent substreams and hits are integer counts, so the estimate does
// not depend on `jobs`.
inline GammaEstimate gt_gamma(const ContainerSpec& container, const TriMesh& mesh, const std::vector<RigidPose>& poses,
                              const GammaRegion& region, std::size_t n_samples, std::uint64_t seed, int jobs = 1) {
  if (n_samples < 1) throw UsageError("gt_gamma: n_samples must be >= 1");
  if (poses.empty()) throw DataError("gt_gamma: empty region (no objects)");
  PosedObjects objects(mesh, poses);
  AABB box;
  std::optional<TriMesh> hull;
  if (region.kind == GammaRegion::Kind::ConvexHull) {
    hull = stack_hull(mesh, poses);
    box = hull->bounds();
  } else {
    box = filled_cavity(container, objects.boxes());
    if (region.kind == GammaRegion::Kind::SubBox) {
      if ((box.extent().array() < region.side).any())
        throw DataError("gt_gamma: sub-box side exceeds the filled cavity");
      Vec3 h = Vec3::Constant(region.side / 2);
      box = AABB(box.center() - h, box.center() + h);
    }
  }
  if (!(box.volume() > 0.0)) throw DataError("gt_gamma: empty region");
  const std::size_t block = 4096;
  const std::size_t blocks = (n_samples + block - 1) / block;
  std::vector<std::size_t> hits(blocks, 0);
  parallel_for(blocks, jobs, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      Rng rng = substream(seed, b);
      std::size_t todo = std::min(block, n_samples - b * block), h = 0;
      for (std::size_t i = 0; i < todo;) {
        Vec3 p(uniform(rng, box.min.x(), box.max.x()), uniform(rng, box.min.y(), box.max.y()),
               uniform(rng, box.min.z(), box.max.z()));
        if (hull && geom::hull_signed_distance(*hull, p) > 0.0) continue;
        ++i;
        h += objects.contains(p);
      }
      hits[b] = h;
    }
  });
  std::size_t total = 0;
  for (auto h : hits) total += h;
  GammaEstimate g;
  g.n_samples = n_samples;
  g.value = double(total) / double(n_samples);
  g.std_error = std::sqrt(g.value * (1.0 - g.value) / double(n_samples));
  g.method = "monte_carlo:" + region.name();
  return g;
}

inline GammaRegion default_region(const ContainerSpec& c) {
  return c.has_container ? GammaRegion{GammaRegion::Kind::Cavity, 0.0} : GammaRegion{GammaRegion::Kind::ConvexHull, 0.0};
}

// --- generation --------------------------------------------------------------

struct GenConfig {
  double object_side = 0.05;
  std::array<double, 2> container_scale{0.2, 0.4};  // per-axis factor on the unit box
  std::array<double, 2> wall_ratio{0.01, 0.05};
  std::optional<Vec3> fixed_dims;
  std::optional<double> fixed_wall_ratio;
  double p_no_container = 0.0;
  double p_partial = 0.2;
  int max_batches = 40;
  double spawn_yaw_deg = 20.0;
  double spawn_tilt_deg = 20.0;
  SimParams sim;
  std::size_t gamma_samples = 200000;
  int jobs = 1;

  void validate() const {
    sim.validate();
    if (!(object_side > 0.0)) throw UsageError("object_side must be positive");
    if (!(container_scale[0] > 0.0 && container_scale[0] <= container_scale[1]))
      throw UsageError("container scale range must satisfy 0 < lo <= hi");
    if (!(wall_ratio[0] >= 0.01 && wall_ratio[0] <= wall_ratio[1] && wall_ratio[1] <= 0.05))
      throw UsageError("wall ratio range must lie within [0.01, 0.05]");
    for (double p : {p_no_container, p_partial})
      if (!(p >= 0.0 && p <= 1.0)) throw UsageError("probabilities must lie in [0, 1]");
    if (max_batches < 1) throw UsageError("max_batches must be >= 1");
    if (gamma_samples < 10000) throw UsageError("gamma_samples must be >= 1e4");
  }
};

// Sentinel box seated on the open face: container footprint, as tall as the
// container's largest outer dimension.
inline AABB overflow_sentinel(const ContainerSpec& c) {
  AABB o = c.outer();
  double h = o.extent().maxCoeff();
  return AABB(Vec3(o.min.x(), o.min.y(), o.max.z()), Vec3(o.max.x(), o.max.y(), o.max.z() + h));
}

inline bool overflow_check(const ContainerSpec& c, const std::vector<AABB>& object_boxes) {
  if (!c.has_container) return false;
  AABB s = overflow_sentinel(c);
  for (const auto& b : object_boxes)
    if ((b.max.array() > s.min.array()).all() && (b.min.array() < s.max.array()).all()) return true;
  return false;
}

// Objects kept after an overflow: centroid inside the cavity box (up to the
// rim). Anything resting on the walls or heaped above the rim is deleted.
inline bool retained(const ContainerSpec& c, const Vec3& centroid) {
  return !c.has_container || c.cavity().contains(centroid);
}

struct GeneratedScene {
  Scene scene;
  ObjectTemplate object;
};

class SceneSimulator {
 public:
  SceneSimulator(const ObjectTemplate& object, const ContainerSpec& container, const SimParams& sim)
      : object_(object), container_(container), world_(sim, container.ground_z()) {
    hull_points_ = hull_points(object.mesh);
    double spacing = 0.25 * object.mesh.bounds().extent().maxCoeff();
    object_proxy_ = world_.add_proxy(make_proxy(object.mesh, spacing));
    for (const auto& slab : container.slabs()) {
      Vec3 c = slab.center();
      auto proxy = world_.add_proxy(make_proxy(geom::make_box(slab.min - c, slab.max - c), 2.0 * spacing));
      world_.add_static(proxy, c);
    }
  }

  void add(const RigidPose& pose) {
    ids_.push_back(world_.add_dynamic(object_proxy_, pose.translation, pose.rotation, kDensity * object_.volume,
                                      kDensity * object_.inertia));
  }

  bool settle() { return world_.settle(); }

  void sleep_all() {
    for (auto id : ids_) world_.put_to_sleep(id);
  }

  std::vector<RigidPose> poses() const {
    std::vector<RigidPose> out;
    out.reserve(ids_.size());
    for (auto id : ids_) {
      const Body& b = world_.bodies()[id];
      out.emplace_back(b.q.normalized(), b.x);
    }
    return out;
  }

  std::vector<AABB> boxes() const {
    std::vector<AABB> out;
    for (const auto& p : poses()) out.push_back(posed_bounds(hull_points_, p));
    return out;
  }

  double top() const {
    double z = -std::numeric_limits<double>::infinity();
    for (const auto& b : boxes()) z = std::max(z, b.max.z());
    return z;
  }

  double max_penetration() { return world_.max_penetration(); }
  World& world() { return world_; }

 private:
  static constexpr double kDensity = 1000.0;
  const ObjectTemplate& object_;
  ContainerSpec container_;
  World world_;
  std::uint32_t object_proxy_ = 0;
  std::vector<std::uint32_t> ids_;
  std::vector<Vec3> hull_points_;
};

inline Quat spawn_rotation(Rng& rng, double yaw_deg, double tilt_deg) {
  double yaw = uniform(rng, -yaw_deg, yaw_deg) * kPi / 180.0;
  double axis_angle = uniform(rng, 0.0, 2.0 * kPi);
  double tilt = uniform(rng, -tilt_deg, tilt_deg) * kPi / 180.0;
  Quat qy(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  Quat qt(Eigen::AngleAxisd(tilt, Vec3(std::cos(axis_angle), std::sin(axis_angle), 0.0)));
  return (qt * qy).normalized();
}

inline ContainerSpec sample_container(const GenConfig& cfg, Rng& rng) {
  ContainerSpec c;
  c.has_container = !(uniform01(rng) < cfg.p_no_container);
  for (int a = 0; a < 3; ++a) c.inner_dims[a] = uniform(rng, cfg.container_scale[0], cfg.container_scale[1]);
  if (cfg.fixed_dims) c.inner_dims = *cfg.fixed_dims;
  c.wall_ratio = cfg.fixed_wall_ratio ? *cfg.fixed_wall_ratio : uniform(rng, cfg.wall_ratio[0], cfg.wall_ratio[1]);
  c.validate();
  return c;
}

// Drop batches until overflow (or a random early stop), prune, and compute
// ground truth. Deterministic per (config, mesh, seed).
inline GeneratedScene generate_scene(const GenConfig& cfg, const TriMesh& raw_mesh, std::uint64_t seed) {
  cfg.validate();
  GeneratedScene out;
  out.object = make_template(raw_mesh, cfg.object_side);
  const ObjectTemplate& obj = out.object;
  Rng rng = substream(seed, 0);
  Scene& scene = out.scene;
  scene.seed = seed;
  scene.sim = cfg.sim;
  scene.container = sample_container(cfg, rng);
  const ContainerSpec& c = scene.container;
  AABB cav = c.cavity();
  Vec3 obj_ext = obj.mesh.bounds().extent();
  if (c.has_container && (obj_ext.maxCoeff() > cav.extent().minCoeff()))
    throw DataError("object larger than the container cavity");

  const double spacing = 2.0 * obj.radius * 1.05;
  const auto& grid = cfg.sim.batch_grid;
  const int batch = grid[0] * grid[1] * grid[2];
  // Each layer holds up to nx * ny objects placed uniformly at random over the
  // cavity footprint with bounding spheres kept apart, so settled piles do
  // not form columns. Without a container the footprint is inset by the
  // bounding radius.
  Vec2 foot_lo(cav.min.x() + obj.radius, cav.min.y() + obj.radius);
  Vec2 foot_hi(cav.max.x() - obj.radius, cav.max.y() - obj.radius);
  foot_hi = foot_hi.cwiseMax(foot_lo);
  int per_layer = std::min(grid[0] * grid[1], std::max(1, static_cast<int>(
      ((foot_hi - foot_lo).array() / spacing + 1.0).floor().prod())));

  scene.partially_full = c.has_container && uniform01(rng) < cfg.p_partial;
  double fill_target = uniform(rng, 0.1, 0.9);
  int floor_batches = 1 + static_cast<int>(uniform01(rng) * 3.0);  // for scenes without container

  SceneSimulator sim(obj, c, cfg.sim);
  const auto hp = hull_points(obj.mesh);
  double floor_z = c.has_container ? c.floor_z() : c.ground_z();
  for (int b = 0; b < cfg.max_batches; ++b) {
    double base = (b == 0 ? floor_z : std::max(floor_z, sim.top())) + spacing;
    std::vector<Vec2> layer;
    double z = base;
    for (int placed = 0; placed < batch; ++placed) {
      if (static_cast<int>(layer.size()) >= per_layer) {
        layer.clear();
        z += spacing;
      }
      // The rotated box may touch the walls; bounding spheres keep the layer apart.
      Quat q = spawn_rotation(rng, cfg.spawn_yaw_deg, cfg.spawn_tilt_deg);
      AABB lb = posed_bounds(hp, RigidPose(q, Vec3::Zero()));
      Vec2 lo = foot_lo, hi = foot_hi;
      if (c.has_container) {
        lo = Vec2(cav.min.x() - lb.min.x(), cav.min.y() - lb.min.y());
        hi = Vec2(cav.max.x() - lb.max.x(), cav.max.y() - lb.max.y()).cwiseMax(lo);
      }
      Vec2 xy;
      for (int attempt = 0;; ++attempt) {
        xy = Vec2(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()));
        bool free = std::all_of(layer.begin(), layer.end(), [&](const Vec2& o) { return (o - xy).norm() >= spacing; });
        if (free) break;
        if (attempt == 64) {  // layer is crowded: start a new one
          layer.clear();
          z += spacing;
          break;
        }
      }
      layer.push_back(xy);
      sim.add(RigidPose(q, Vec3(xy.x(), xy.y(), z)));
    }
    if (!sim.settle()) {
      scene.converged = false;
      sim.sleep_all();
    }
    scene.batches = b + 1;
    log_info("scene " + std::to_string(seed) + ": batch " + std::to_string(b + 1) + " settled");
    if (c.has_container) {
      if (overflow_check(c, sim.boxes())) {
        scene.partially_full = false;
        break;
      }
      if (scene.partially_full && sim.top() - c.floor_z() >= fill_target * c.inner_dims.z()) break;
    } else if (b + 1 >= floor_batches) {
      break;
    }
  }
  if (scene.batches == static_cast<std::size_t>(cfg.max_batches) && c.has_container && !scene.partially_full)
    scene.partially_full = !overflow_check(c, sim.boxes());

  auto poses = sim.poses();
  for (std::size_t i = 0; i < poses.size(); ++i)
    if (retained(c, poses[i].translation)) scene.poses.push_back(poses[i]);
  if (scene.poses.empty()) throw DataError("generated scene has no objects inside the container");

  scene.gt.count = scene.poses.size();
  scene.gt.unit_volume = obj.volume;
  scene.gt.stack_volume = gt_stack_volume(obj.mesh, scene.poses);
  GammaRegion region = default_region(c);
  auto g = gt_gamma(c, obj.mesh, scene.poses, region, cfg.gamma_samples, splitmix64(seed ^ 0x6a09e667f3bcc909ULL), cfg.jobs);
  scene.gt.gamma = g.value;
  scene.gt.gamma_stderr = g.std_error;
  scene.gt.gamma_region = region.name();
  return out;
}

// --- border-effect study -----------------------------------------------------

struct BorderRow {
  std::string scene_id;
  double gamma_with_edges = 0.0, stderr_with = 0.0;
  double gamma_no_edges = 0.0, stderr_no = 0.0;
};

struct BorderReport {
  std::vector<BorderRow> rows;
  std::size_t skipped = 0;
  double mean_with = 0.0, mean_no = 0.0;
  double relative_difference = 0.0;  // |mean_with - mean_no| / mean_no
  double std_with = 0.0, std_no = 0.0;

  std::string csv() const {
    std::ostringstream ss;
    ss.precision(10);
    ss << "scene_id,gamma_with_edges,stderr_with,gamma_no_edges,stderr_no\n";
    for (const auto& r : rows)
      ss << r.scene_id << ',' << r.gamma_with_edges << ',' << r.stderr_with << ',' << r.gamma_no_edges << ','
         << r.stderr_no << '\n';
    return ss.str();
  }
};

struct BorderInput {
  std::string id;
  const Scene* scene;
  const TriMesh* object;
};

inline BorderReport border_effect_study(const std::vector<BorderInput>& scenes, double subbox_side,
                                        std::size_t n_samples, int jobs = 1) {
  if (scenes.empty()) throw DataError("border study: empty scene list");
  BorderReport rep;
  for (const auto& in : scenes) {
    const Scene& s = *in.scene;
    if (!s.container.has_container) {
      log_info("border study: skipping " + in.id + " (no container)");
      ++rep.skipped;
      continue;
    }
    std::uint64_t seed = splitmix64(s.seed ^ 0xbb67ae8584caa73bULL);
    auto with = gt_gamma(s.container, *in.object, s.poses, {GammaRegion::Kind::Cavity, 0.0}, n_samples, seed, jobs);
    auto no = gt_gamma(s.container, *in.object, s.poses, {GammaRegion::Kind::SubBox, subbox_side}, n_samples,
                       seed + 1, jobs);
    rep.rows.push_back({in.id, with.value, with.std_error, no.value, no.std_error});
  }
  if (rep.rows.empty()) throw DataError("border study: no scene with a container");
  double n = double(rep.rows.size());
  for (const auto& r : rep.rows) {
    rep.mean_with += r.gamma_with_edges / n;
    rep.mean_no += r.gamma_no_edges / n;
  }
  for (const auto& r : rep.rows) {
    rep.std_with += (r.gamma_with_edges - rep.mean_with) * (r.gamma_with_edges - rep.mean_with);
    rep.std_no += (r.gamma_no_edges - rep.mean_no) * (r.gamma_no_edges - rep.mean_no);
  }
  if (rep.rows.size() > 1) {
    rep.std_with = std::sqrt(rep.std_with / (n - 1));
    rep.std_no = std::sqrt(rep.std_no / (n - 1));
  }
  rep.relative_difference = std::abs(rep.mean_with - rep.mean_no) / rep.mean_no;
  return rep;
}

}  // namespace stackcount::simlab
