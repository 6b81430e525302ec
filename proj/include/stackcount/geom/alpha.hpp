#pragma once

// Alpha shapes from the Delaunay tetrahedralization: a tetrahedron belongs to
// the shape when its circumradius does not exceed alpha (absolute length).

#include "stackcount/geom/delaunay.hpp"

namespace stackcount::geom {

struct AlphaComplex {
  double volume = 0.0;
  std::size_t tetrahedra = 0;
  std::size_t components = 0;
  TriMesh boundary;  // may be non-manifold along pinched edges
};

inline AlphaComplex alpha_complex(std::span<const Vec3> points, double alpha) {
  if (!(alpha > 0.0)) throw DataError("alpha_concave_hull: alpha must be positive");
  Delaunay3 dt(points);
  const auto& tets = dt.tets();
  std::vector<char> kept(tets.size(), 0);
  AlphaComplex out;
  for (std::size_t i = 0; i < tets.size(); ++i) {
    const auto& t = tets[i];
    if (!t.alive || dt.touches_super(t)) continue;
    if (dt.circumradius(t) <= alpha) {
      kept[i] = 1;
      out.volume += dt.volume(t);
      ++out.tetrahedra;
    }
  }

  detail::DisjointSet sets(tets.size());
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  for (std::uint32_t i = 0; i < tets.size(); ++i) {
    if (!kept[i]) continue;
    const auto& t = tets[i];
    for (int f = 0; f < 4; ++f) {
      auto nb = t.nb[f];
      if (nb != Delaunay3::kNone && kept[nb]) {
        sets.unite(i, nb);
        continue;
      }
      std::array<std::uint32_t, 3> tri;
      int k = 0;
      for (int m = 0; m < 4; ++m)
        if (m != f) tri[k++] = t.v[m];
      // Orient away from the opposite vertex.
      Vec3 n = (dt.point(tri[1]) - dt.point(tri[0])).cross(dt.point(tri[2]) - dt.point(tri[0]));
      if (n.dot(dt.point(t.v[f]) - dt.point(tri[0])) > 0.0) std::swap(tri[1], tri[2]);
      Triangle out_tri;
      for (int m = 0; m < 3; ++m) {
        auto [it, inserted] = remap.try_emplace(tri[m], static_cast<std::uint32_t>(out.boundary.vertices.size()));
        if (inserted) out.boundary.vertices.push_back(dt.point(tri[m]));
        out_tri[m] = it->second;
      }
      out.boundary.triangles.push_back(out_tri);
    }
  }
  for (std::uint32_t i = 0; i < tets.size(); ++i)
    if (kept[i] && sets.find(i) == i) ++out.components;
  return out;
}

// Boundary of a connected, nonempty alpha shape.
inline TriMesh alpha_concave_hull(std::span<const Vec3> points, double alpha) {
  AlphaComplex ac = alpha_complex(points, alpha);
  if (ac.components != 1)
    throw DataError("alpha_concave_hull: alpha " + std::to_string(alpha) + " gives " +
                    (ac.components == 0 ? std::string("an empty shape (0 components)")
                                        : "a disconnected shape (" + std::to_string(ac.components) + " components)"));
  return ac.boundary;
}

inline double default_alpha(std::span<const Vec3> points) {
  AABB b;
  for (const auto& p : points) b.expand(p);
  return 0.1 * b.diagonal();
}

}  // namespace stackcount::geom
