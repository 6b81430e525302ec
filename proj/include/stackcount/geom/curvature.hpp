#pragma once

#include "stackcount/geom/hull.hpp"

namespace stackcount::geom {

// Sum over edges of length * signed exterior dihedral angle / 2. Convex edges
// count positive. Linear in uniform scale.
inline double integrated_mean_curvature(const TriMesh& mesh) {
  if (!check_mesh(mesh).watertight) throw DataError("integrated_mean_curvature: mesh is not watertight");
  std::unordered_map<std::uint64_t, std::uint32_t> owner;
  owner.reserve(mesh.triangles.size() * 3);
  for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k)
      owner.emplace(detail::edge_key(mesh.triangles[t][k], mesh.triangles[t][(k + 1) % 3]), t);
  auto normal = [&](std::uint32_t t) {
    return Vec3((mesh.corner(t, 1) - mesh.corner(t, 0)).cross(mesh.corner(t, 2) - mesh.corner(t, 0)).normalized());
  };
  double sum = 0.0;
  for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      std::uint32_t a = mesh.triangles[t][k], b = mesh.triangles[t][(k + 1) % 3];
      if (a > b) continue;  // visit each undirected edge once
      std::uint32_t other = owner.at(detail::edge_key(b, a));
      Vec3 e = mesh.vertices[b] - mesh.vertices[a];
      double len = e.norm();
      Vec3 n1 = normal(t), n2 = normal(other);
      double theta = std::atan2(n1.cross(n2).dot(e / len), n1.dot(n2));
      sum += len * theta;
    }
  }
  return 0.5 * sum;
}

struct ComplexityScore {
  double kappa = 0.0;             // integrated mean curvature
  double scaled_kappa = 0.0;      // kappa / AABB diagonal
  double kappa_term = 0.0;        // scaled_kappa / kappa0
  double convexity_defect = 0.0;  // (V_hull - V) / V_hull
  double total = 0.0;
};

inline double scaled_mean_curvature(const TriMesh& mesh) {
  return integrated_mean_curvature(mesh) / mesh.bounds().diagonal();
}

inline ComplexityScore complexity_score(const TriMesh& mesh, double kappa0) {
  if (!(kappa0 > 0.0)) throw DataError("complexity_score: kappa0 must be positive");
  ComplexityScore c;
  c.kappa = integrated_mean_curvature(mesh);
  c.scaled_kappa = c.kappa / mesh.bounds().diagonal();
  c.kappa_term = c.scaled_kappa / kappa0;
  double v = mesh_volume(mesh);
  double vh = signed_volume(convex_hull(mesh));
  c.convexity_defect = std::clamp((vh - v) / vh, 0.0, 1.0);
  c.total = c.kappa_term + c.convexity_defect;
  return c;
}

}  // namespace stackcount::geom
