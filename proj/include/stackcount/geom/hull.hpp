#pragma once

// 3D convex hull by quickhull with conflict lists.

#include "stackcount/geom/mesh.hpp"

#include <span>
#include <unordered_map>

namespace stackcount::geom {

namespace detail {

class QuickHull {
 public:
  explicit QuickHull(std::span<const Vec3> pts) : pts_(pts) {}

  TriMesh run() {
    if (pts_.size() < 4) throw DataError("convex_hull: need at least 4 points, got " + std::to_string(pts_.size()));
    double m = 0.0;
    for (const auto& p : pts_) {
      if (!p.allFinite()) throw DataError("convex_hull: non-finite point");
      m = std::max(m, p.cwiseAbs().sum());
    }
    eps_ = 1e-11 * std::max(m, 1e-300);
    initial_simplex();
    std::vector<std::uint32_t> pending;
    for (std::uint32_t f = 0; f < faces_.size(); ++f) pending.push_back(f);
    while (!pending.empty()) {
      std::uint32_t f = pending.back();
      pending.pop_back();
      if (!faces_[f].alive || faces_[f].outside.empty()) continue;
      add_point(f, pending);
    }
    return extract();
  }

 private:
  struct Face {
    std::array<std::uint32_t, 3> v{};
    std::array<std::uint32_t, 3> nb{};  // neighbor across edge (v[k], v[k+1])
    Vec3 n;
    double d = 0.0;
    std::vector<std::uint32_t> outside;
    bool alive = true;
    bool visible = false;
  };

  double dist(const Face& f, std::uint32_t p) const { return f.n.dot(pts_[p]) - f.d; }

  std::uint32_t make_face(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    Face f;
    f.v = {a, b, c};
    Vec3 n = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]);
    double len = n.norm();
    f.n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    f.d = f.n.dot(pts_[a]);
    faces_.push_back(std::move(f));
    return static_cast<std::uint32_t>(faces_.size() - 1);
  }

  void initial_simplex() {
    std::array<std::uint32_t, 6> ext{};
    for (std::uint32_t i = 0; i < pts_.size(); ++i)
      for (int a = 0; a < 3; ++a) {
        if (pts_[i][a] < pts_[ext[2 * a]][a]) ext[2 * a] = i;
        if (pts_[i][a] > pts_[ext[2 * a + 1]][a]) ext[2 * a + 1] = i;
      }
    std::uint32_t i0 = 0, i1 = 0;
    double best = -1.0;
    for (auto a : ext)
      for (auto b : ext)
        if (double d = (pts_[a] - pts_[b]).squaredNorm(); d > best) {
          best = d;
          i0 = a;
          i1 = b;
        }
    if (std::sqrt(best) <= eps_) throw DataError("convex_hull: degenerate input (all points coincide)");
    Vec3 axis = (pts_[i1] - pts_[i0]).normalized();
    std::uint32_t i2 = 0;
    best = -1.0;
    for (std::uint32_t i = 0; i < pts_.size(); ++i) {
      Vec3 w = pts_[i] - pts_[i0];
      double d = (w - axis * axis.dot(w)).norm();
      if (d > best) {
        best = d;
        i2 = i;
      }
    }
    if (best <= eps_) throw DataError("convex_hull: degenerate input (collinear points)");
    Vec3 n = (pts_[i1] - pts_[i0]).cross(pts_[i2] - pts_[i0]).normalized();
    std::uint32_t i3 = 0;
    best = -1.0;
    for (std::uint32_t i = 0; i < pts_.size(); ++i) {
      double d = std::abs(n.dot(pts_[i] - pts_[i0]));
      if (d > best) {
        best = d;
        i3 = i;
      }
    }
    if (best <= eps_) throw DataError("convex_hull: degenerate input (coplanar points)");
    if (n.dot(pts_[i3] - pts_[i0]) > 0.0) std::swap(i1, i2);
    // Now i3 lies below the plane (i0, i1, i2), so that face points outward.
    make_face(i0, i1, i2);
    make_face(i0, i3, i1);
    make_face(i1, i3, i2);
    make_face(i2, i3, i0);
    link_all();
    std::vector<std::uint32_t> all(pts_.size());
    std::iota(all.begin(), all.end(), 0u);
    std::vector<std::uint32_t> fs = {0, 1, 2, 3};
    assign(all, fs);
  }

  void link_all() {
    std::unordered_map<std::uint64_t, std::pair<std::uint32_t, int>> edges;
    for (std::uint32_t f = 0; f < faces_.size(); ++f)
      for (int k = 0; k < 3; ++k) edges[edge_key(faces_[f].v[k], faces_[f].v[(k + 1) % 3])] = {f, k};
    for (std::uint32_t f = 0; f < faces_.size(); ++f)
      for (int k = 0; k < 3; ++k) faces_[f].nb[k] = edges.at(edge_key(faces_[f].v[(k + 1) % 3], faces_[f].v[k])).first;
  }

  void assign(const std::vector<std::uint32_t>& points, const std::vector<std::uint32_t>& candidates) {
    for (auto p : points) {
      for (auto f : candidates) {
        if (dist(faces_[f], p) > eps_) {
          faces_[f].outside.push_back(p);
          break;
        }
      }
    }
  }

  void add_point(std::uint32_t start, std::vector<std::uint32_t>& pending) {
    Face& sf = faces_[start];
    std::uint32_t apex = sf.outside.front();
    double far = dist(sf, apex);
    for (auto p : sf.outside)
      if (double d = dist(sf, p); d > far) {
        far = d;
        apex = p;
      }

    // Visible faces form a connected cap around `start`.
    std::vector<std::uint32_t> visible{start};
    faces_[start].visible = true;
    for (std::size_t i = 0; i < visible.size(); ++i) {
      for (auto nb : faces_[visible[i]].nb) {
        Face& g = faces_[nb];
        if (!g.visible && dist(g, apex) > eps_) {
          g.visible = true;
          visible.push_back(nb);
        }
      }
    }
    struct HorizonEdge {
      std::uint32_t a, b, across;
    };
    std::vector<HorizonEdge> horizon;
    for (auto f : visible)
      for (int k = 0; k < 3; ++k) {
        auto nb = faces_[f].nb[k];
        if (!faces_[nb].visible) horizon.push_back({faces_[f].v[k], faces_[f].v[(k + 1) % 3], nb});
      }

    std::unordered_map<std::uint32_t, std::uint32_t> by_start, by_end;
    std::vector<std::uint32_t> created;
    created.reserve(horizon.size());
    for (const auto& e : horizon) {
      auto nf = make_face(e.a, e.b, apex);
      created.push_back(nf);
      by_start[e.a] = nf;
      by_end[e.b] = nf;
      faces_[nf].nb[0] = e.across;
      Face& other = faces_[e.across];
      for (int k = 0; k < 3; ++k)
        if (other.v[k] == e.b && other.v[(k + 1) % 3] == e.a) other.nb[k] = nf;
    }
    for (auto nf : created) {
      Face& f = faces_[nf];
      // Edge (b, apex) borders the new face starting at b; (apex, a) the one ending at a.
      f.nb[1] = by_start.at(f.v[1]);
      f.nb[2] = by_end.at(f.v[0]);
    }

    std::vector<std::uint32_t> orphans;
    for (auto f : visible) {
      Face& g = faces_[f];
      g.alive = false;
      for (auto p : g.outside)
        if (p != apex) orphans.push_back(p);
      g.outside.clear();
      g.outside.shrink_to_fit();
    }
    assign(orphans, created);
    for (auto nf : created)
      if (!faces_[nf].outside.empty()) pending.push_back(nf);
  }

  TriMesh extract() const {
    TriMesh mesh;
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    std::vector<std::uint32_t> used;
    for (const auto& f : faces_)
      if (f.alive)
        for (auto v : f.v)
          if (!remap.count(v)) {
            remap[v] = 0;
            used.push_back(v);
          }
    std::sort(used.begin(), used.end());
    for (std::uint32_t i = 0; i < used.size(); ++i) {
      remap[used[i]] = i;
      mesh.vertices.push_back(pts_[used[i]]);
    }
    for (const auto& f : faces_)
      if (f.alive) mesh.triangles.push_back({remap[f.v[0]], remap[f.v[1]], remap[f.v[2]]});
    return mesh;
  }

  std::span<const Vec3> pts_;
  std::vector<Face> faces_;
  double eps_ = 0.0;
};

}  // namespace detail

// Watertight, outward-oriented hull of at least four non-coplanar points.
inline TriMesh convex_hull(std::span<const Vec3> points) { return detail::QuickHull(points).run(); }

inline TriMesh convex_hull(const TriMesh& mesh) { return convex_hull(std::span<const Vec3>(mesh.vertices)); }

// Signed distance of p to the hull surface (negative inside), using the face planes.
inline double hull_signed_distance(const TriMesh& hull, const Vec3& p) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < hull.triangles.size(); ++t) {
    Vec3 n = (hull.corner(t, 1) - hull.corner(t, 0)).cross(hull.corner(t, 2) - hull.corner(t, 0));
    double len = n.norm();
    if (len == 0.0) continue;
    worst = std::max(worst, n.dot(p - hull.corner(t, 0)) / len);
  }
  return worst;
}

}  // namespace stackcount::geom
