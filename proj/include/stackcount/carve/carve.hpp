#pragma once

// Multi-view voxel carving of the container and its contents, wall erosion,
// and the convex / alpha-concave hull volume baselines.

#include "stackcount/geom/alpha.hpp"
#include "stackcount/geom/hull.hpp"
#include "stackcount/render/views.hpp"

#include <bit>
#include <optional>

namespace stackcount::carve {

using geom::AABB;
using render::View;
using json = nlohmann::ordered_json;

struct CarveParams {
  int resolution = 128;                  // voxels along the longest axis
  std::optional<double> depth_tolerance;  // metres; unset means one voxel diagonal
  int min_views_inside = 0;               // 0 means every view

  void validate() const {
    if (resolution < 16) throw UsageError("carve: resolution must be >= 16");
    if (depth_tolerance && !(*depth_tolerance >= 0.0)) throw UsageError("carve: depth tolerance must be >= 0");
    if (min_views_inside < 0) throw UsageError("carve: min_views_inside must be >= 0");
  }
};

struct VoxelGrid {
  Vec3 origin = Vec3::Zero();  // min corner of voxel (0, 0, 0)
  double voxel_size = 1.0;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<std::uint8_t> occ;  // one byte per voxel so threads can write disjoint entries

  std::size_t size() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
  }
  bool at(int i, int j, int k) const { return occ[index(i, j, k)] != 0; }
  Vec3 center(int i, int j, int k) const { return origin + voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5); }
  double diagonal() const { return voxel_size * std::sqrt(3.0); }
  std::size_t count() const { return static_cast<std::size_t>(std::count(occ.begin(), occ.end(), std::uint8_t{1})); }
  bool operator==(const VoxelGrid&) const = default;
};

struct VolumeEstimate {
  double value = 0.0;
  std::string method;  // carve, convex_hull or alpha_hull
  json params = json::object();
};

inline VoxelGrid init_grid(const AABB& bounds, const CarveParams& params) {
  params.validate();
  if (bounds.empty()) throw DataError("init_grid: empty bounds");
  Vec3 ext = bounds.extent();
  if (!(ext.minCoeff() > 0.0) || !ext.allFinite())
    throw DataError("init_grid: degenerate bounds (every extent must be positive)");
  VoxelGrid g;
  g.voxel_size = ext.maxCoeff() / params.resolution;
  g.origin = bounds.min;
  for (int a = 0; a < 3; ++a)
    g.dims[a] = std::max(1, static_cast<int>(std::ceil(ext[a] / g.voxel_size - 1e-9)));
  g.occ.assign(g.size(), 1);
  return g;
}

inline bool inside_label(std::uint8_t v) { return v == render::kContainer || v == render::kObjects; }

// World points behind every container or object pixel of the given views.
inline std::vector<Vec3> unproject_inside(const std::vector<View>& views) {
  std::vector<Vec3> pts;
  for (const auto& v : views)
    for (int j = 0; j < v.mask.height; ++j)
      for (int i = 0; i < v.mask.width; ++i) {
        float d = v.depth.at(i, j);
        if (inside_label(v.mask.at(i, j)) && std::isfinite(d)) pts.push_back(v.camera.unproject(i, j, d));
      }
  return pts;
}

// Box of the un-projected container and object pixels, grown by one voxel of
// the grid it will seed.
inline AABB carve_bounds(const std::vector<View>& views, int resolution) {
  AABB b;
  for (const auto& p : unproject_inside(views)) b.expand(p);
  if (b.empty()) throw DataError("carve: no view shows the container or any object");
  return b.inflated(b.extent().maxCoeff() / resolution);
}

namespace detail {

struct ViewProjector {
  Mat3 R;
  Vec3 t;
  double fx, fy, cx, cy;
  int w, h;
  const render::DepthMap* depth;
  const render::SegMask* mask;
};

inline void check_view(const View& v) {
  v.camera.validate();
  if (!v.depth.same_size(v.camera.width, v.camera.height) || !v.mask.same_size(v.camera.width, v.camera.height))
    throw DataError("carve: view " + std::to_string(v.id) + " camera and raster sizes differ");
}

}  // namespace detail

// A voxel center is tested against the 2x2 block of pixel centers around
// its projection. It fails the silhouette test when the projection leaves
// the image or all four pixels are ground, and is removed outright when its
// range is more than eps in front of the nearest of the four depths.
inline VoxelGrid carve(VoxelGrid grid, const std::vector<View>& views, const CarveParams& params, int jobs = 1) {
  params.validate();
  if (views.empty()) return grid;
  std::vector<detail::ViewProjector> proj;
  for (const auto& v : views) {
    detail::check_view(v);
    const auto& c = v.camera;
    proj.push_back({c.R, c.t, c.fx, c.fy, c.cx, c.cy, c.width, c.height, &v.depth, &v.mask});
  }
  const double eps = params.depth_tolerance.value_or(grid.diagonal());
  const int n_views = static_cast<int>(proj.size());
  const int allowed_misses = params.min_views_inside == 0 ? 0 : std::max(0, n_views - params.min_views_inside);
  const std::size_t rows = static_cast<std::size_t>(grid.dims[1]) * grid.dims[2];

  parallel_for(rows, jobs, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      int j = static_cast<int>(r % grid.dims[1]), k = static_cast<int>(r / grid.dims[1]);
      for (int i = 0; i < grid.dims[0]; ++i) {
        std::size_t idx = grid.index(i, j, k);
        if (!grid.occ[idx]) continue;
        Vec3 p = grid.center(i, j, k);
        int misses = 0;
        bool keep = true;
        for (const auto& v : proj) {
          Vec3 c = v.R * p + v.t;
          double u = c.z() > 0.0 ? v.fx * c.x() / c.z() + v.cx : -1.0;
          double w = c.z() > 0.0 ? v.fy * c.y() / c.z() + v.cy : -1.0;
          if (!(u >= 0.0 && u < v.w && w >= 0.0 && w < v.h)) {
            if (++misses > allowed_misses) {
              keep = false;
              break;
            }
            continue;
          }
          int fi = static_cast<int>(std::floor(u - 0.5)), fj = static_cast<int>(std::floor(w - 0.5));
          int is[2] = {std::max(fi, 0), std::min(fi + 1, v.w - 1)};
          int js[2] = {std::max(fj, 0), std::min(fj + 1, v.h - 1)};
          bool any_inside = false;
          double dmin = std::numeric_limits<double>::infinity();
          for (int a : is)
            for (int b : js) {
              any_inside = any_inside || inside_label(v.mask->at(a, b));
              dmin = std::min(dmin, static_cast<double>(v.depth->at(a, b)));
            }
          if (c.norm() < dmin - eps) {
            keep = false;
            break;
          }
          if (!any_inside && ++misses > allowed_misses) {
            keep = false;
            break;
          }
        }
        if (!keep) grid.occ[idx] = 0;
      }
    }
  });
  return grid;
}

// Initial grid from the views themselves, then carved.
inline VoxelGrid carve_views(const std::vector<View>& views, const CarveParams& params, int jobs = 1) {
  params.validate();
  return carve(init_grid(carve_bounds(views, params.resolution), params), views, params, jobs);
}

// Occupied-set index bounds as {lo, hi} inclusive; nullopt for an empty grid.
inline std::optional<std::pair<std::array<int, 3>, std::array<int, 3>>> occupied_bounds(const VoxelGrid& g) {
  std::array<int, 3> lo{g.dims[0], g.dims[1], g.dims[2]}, hi{-1, -1, -1};
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        if (g.at(i, j, k)) {
          int ijk[3] = {i, j, k};
          for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], ijk[a]);
            hi[a] = std::max(hi[a], ijk[a]);
          }
        }
  if (hi[0] < 0) return std::nullopt;
  return std::make_pair(lo, hi);
}

inline int erosion_layers(double t_ratio, const Vec3& container_dims, double voxel_size) {
  return static_cast<int>(std::ceil(t_ratio * container_dims.minCoeff() / voxel_size - 1e-9));
}

// Strips the container shell: removes ceil(t / voxel) layers from the four
// sides and the bottom of the occupied set's bounding box, where
// t = t_ratio * min(container_dims). The top is left alone.
inline VoxelGrid erode_walls(VoxelGrid grid, double t_ratio, const Vec3& container_dims, int up_axis = 2) {
  if (up_axis != 2) throw UsageError("erode_walls: only up_axis = 2 (z) is supported");
  if (!(t_ratio >= 0.0 && t_ratio <= 0.2)) throw UsageError("erode_walls: t_ratio must lie in [0, 0.2]");
  if (!(container_dims.minCoeff() > 0.0)) throw DataError("erode_walls: container dimensions must be positive");
  int layers = erosion_layers(t_ratio, container_dims, grid.voxel_size);
  if (layers == 0) return grid;
  auto ob = occupied_bounds(grid);
  if (!ob) return grid;
  auto [lo, hi] = *ob;
  for (int a = 0; a < 2; ++a)
    if (2 * layers >= hi[a] - lo[a] + 1)
      throw DataError("erode_walls: erosion of " + std::to_string(layers) + " layers exceeds half the grid extent");
  if (layers >= hi[2] - lo[2] + 1)
    throw DataError("erode_walls: erosion of " + std::to_string(layers) + " layers removes the whole height");
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i)
        if (i < lo[0] + layers || i > hi[0] - layers || j < lo[1] + layers || j > hi[1] - layers ||
            k < lo[2] + layers)
          grid.occ[grid.index(i, j, k)] = 0;
  return grid;
}

inline VolumeEstimate grid_volume(const VoxelGrid& g) {
  VolumeEstimate v;
  v.value = static_cast<double>(g.count()) * g.voxel_size * g.voxel_size * g.voxel_size;
  v.method = "carve";
  v.params = {{"voxel_size", g.voxel_size}, {"dims", g.dims}, {"occupied", g.count()}};
  return v;
}

// Evenly strided subset of at most `max_points` points, order preserved.
inline std::vector<Vec3> subsample(const std::vector<Vec3>& pts, std::size_t max_points) {
  if (max_points == 0 || pts.size() <= max_points) return pts;
  std::vector<Vec3> out;
  out.reserve(max_points);
  for (std::size_t k = 0; k < max_points; ++k) out.push_back(pts[k * pts.size() / max_points]);
  return out;
}

inline VolumeEstimate convex_volume(std::span<const Vec3> points) {
  if (points.size() < 4) throw DataError("baseline volume needs at least 4 points");
  VolumeEstimate v;
  v.value = geom::mesh_volume(geom::convex_hull(points));
  v.method = "convex_hull";
  v.params = {{"points", points.size()}};
  return v;
}

// alpha <= 0 selects 0.1 x the point-cloud diagonal.
inline VolumeEstimate alpha_volume(std::span<const Vec3> points, double alpha = 0.0) {
  if (points.size() < 4) throw DataError("baseline volume needs at least 4 points");
  if (!(alpha > 0.0)) alpha = geom::default_alpha(points);
  // Tetrahedra volume: the boundary of a valid alpha shape may be non-manifold.
  auto ac = geom::alpha_complex(points, alpha);
  if (ac.components != 1)
    throw DataError("alpha hull: alpha " + std::to_string(alpha) + " gives " + std::to_string(ac.components) +
                    " components");
  VolumeEstimate v;
  v.value = ac.volume;
  v.method = "alpha_hull";
  v.params = {{"points", points.size()}, {"alpha", alpha}};
  return v;
}

inline std::pair<VolumeEstimate, VolumeEstimate> baseline_volumes(std::span<const Vec3> points, double alpha = 0.0) {
  return {convex_volume(points), alpha_volume(points, alpha)};
}

// --- grid file --------------------------------------------------------------
// "stackvox 1 nx ny nz voxel_size ox oy oz\n" then ceil(n/8) bytes, voxel
// i + nx*(j + ny*k) at bit (index % 8) of byte (index / 8).

inline void save_grid(const std::filesystem::path& path, const VoxelGrid& g) {
  std::ostringstream hs;
  hs.precision(17);
  hs << "stackvox 1 " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << " " << g.voxel_size << " "
     << g.origin.x() << " " << g.origin.y() << " " << g.origin.z() << "\n";
  std::vector<char> bits((g.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.occ[k]) bits[k / 8] = static_cast<char>(bits[k / 8] | (1 << (k % 8)));
  render::detail::write_file(path, hs.str(), bits.data(), bits.size());
}

inline VoxelGrid load_grid(const std::filesystem::path& path) {
  std::string s = render::detail::read_file(path);
  auto nl = s.find('\n');
  if (nl == std::string::npos) throw DataError(path.string() + ": missing voxel header");
  std::istringstream hs(s.substr(0, nl));
  std::string magic;
  int version = 0;
  VoxelGrid g;
  if (!(hs >> magic >> version >> g.dims[0] >> g.dims[1] >> g.dims[2] >> g.voxel_size >> g.origin.x() >>
        g.origin.y() >> g.origin.z()) ||
      magic != "stackvox" || version != 1)
    throw DataError(path.string() + ": bad voxel header (expected 'stackvox 1 nx ny nz voxel_size ox oy oz')");
  if (g.dims[0] < 1 || g.dims[1] < 1 || g.dims[2] < 1 || !(g.voxel_size > 0.0))
    throw DataError(path.string() + ": bad grid size");
  std::size_t nbytes = (g.size() + 7) / 8;
  if (s.size() - nl - 1 != nbytes) throw DataError(path.string() + ": voxel payload size mismatch");
  g.occ.assign(g.size(), 0);
  for (std::size_t k = 0; k < g.size(); ++k) g.occ[k] = (static_cast<unsigned char>(s[nl + 1 + k / 8]) >> (k % 8)) & 1;
  return g;
}

// Carve -> erode -> volume for one scene's views.
struct CarveResult {
  VoxelGrid carved;
  VoxelGrid eroded;
  VolumeEstimate volume;
};

inline CarveResult estimate_volume(const std::vector<View>& views, double t_ratio, const Vec3& container_dims,
                                   const CarveParams& params, int jobs = 1) {
  CarveResult r;
  r.carved = carve_views(views, params, jobs);
  r.eroded = erode_walls(r.carved, t_ratio, container_dims);
  r.volume = grid_volume(r.eroded);
  r.volume.params["t_ratio"] = t_ratio;
  r.volume.params["layers"] = erosion_layers(t_ratio, container_dims, r.carved.voxel_size);
  r.volume.params["depth_tolerance"] = params.depth_tolerance.value_or(r.carved.diagonal());
  return r;
}

}  // namespace stackcount::carve
