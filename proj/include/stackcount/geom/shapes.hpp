#pragma once

// Procedural watertight meshes used as object templates and test fixtures.

#include "stackcount/geom/mesh.hpp"

#include <unordered_map>

namespace stackcount::geom {

namespace detail {

inline void add_quad(TriMesh& m, std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint32_t d) {
  m.triangles.push_back({a, b, c});
  m.triangles.push_back({a, c, d});
}

inline TriMesh orient_outward(TriMesh m) {
  if (signed_volume(m) < 0.0) return flipped(m);
  return m;
}

}  // namespace detail

inline TriMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  detail::add_quad(m, 0, 2, 3, 1);
  detail::add_quad(m, 4, 5, 7, 6);
  detail::add_quad(m, 0, 1, 5, 4);
  detail::add_quad(m, 2, 6, 7, 3);
  detail::add_quad(m, 0, 4, 6, 2);
  detail::add_quad(m, 1, 3, 7, 5);
  return m;
}

inline TriMesh make_cube(double side = 1.0, const Vec3& center = Vec3::Zero()) {
  Vec3 h = Vec3::Constant(0.5 * side);
  return make_box(center - h, center + h);
}

inline TriMesh make_icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  for (Vec3 v : {Vec3(-1, t, 0), Vec3(1, t, 0), Vec3(-1, -t, 0), Vec3(1, -t, 0), Vec3(0, -1, t), Vec3(0, 1, t),
                 Vec3(0, -1, -t), Vec3(0, 1, -t), Vec3(t, 0, -1), Vec3(t, 0, 1), Vec3(-t, 0, -1), Vec3(-t, 0, 1)})
    m.vertices.push_back(v.normalized());
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::unordered_map<std::uint64_t, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      std::uint64_t key = detail::edge_key(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      auto idx = static_cast<std::uint32_t>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Triangle> next;
    next.reserve(m.triangles.size() * 4);
    for (auto tri : m.triangles) {
      auto ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return detail::orient_outward(m);
}

// Solid of revolution about z from a profile running pole to pole; the first
// and last profile points must lie on the axis (rho = 0).
inline TriMesh make_revolved(const std::vector<std::pair<double, double>>& profile, int segments) {
  if (profile.size() < 3) throw DataError("make_revolved: profile too short");
  TriMesh m;
  m.vertices.emplace_back(0.0, 0.0, profile.front().second);
  const std::size_t rings = profile.size() - 2;
  for (std::size_t k = 1; k + 1 < profile.size(); ++k)
    for (int s = 0; s < segments; ++s) {
      double a = 2.0 * kPi * s / segments;
      m.vertices.emplace_back(profile[k].first * std::cos(a), profile[k].first * std::sin(a), profile[k].second);
    }
  auto bottom = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, profile.back().second);
  auto ring = [&](std::size_t r, int s) { return static_cast<std::uint32_t>(1 + r * segments + (s % segments)); };
  for (int s = 0; s < segments; ++s) m.triangles.push_back({0, ring(0, s), ring(0, s + 1)});
  for (std::size_t r = 0; r + 1 < rings; ++r)
    for (int s = 0; s < segments; ++s) detail::add_quad(m, ring(r, s), ring(r + 1, s), ring(r + 1, s + 1), ring(r, s + 1));
  for (int s = 0; s < segments; ++s) m.triangles.push_back({bottom, ring(rings - 1, s + 1), ring(rings - 1, s)});
  return detail::orient_outward(m);
}

// Cylinder of `radius` and straight length `length` capped by hemispheres.
inline TriMesh make_capsule(double radius, double length, int segments = 24, int cap_rings = 6) {
  std::vector<std::pair<double, double>> profile;
  double h = 0.5 * length;
  for (int i = 0; i <= cap_rings; ++i) {
    double a = 0.5 * kPi * (1.0 - double(i) / cap_rings);
    profile.emplace_back(radius * std::cos(a), h + radius * std::sin(a));
  }
  for (int i = 0; i <= cap_rings; ++i) {
    double a = -0.5 * kPi * double(i) / cap_rings;
    profile.emplace_back(radius * std::cos(a), -h + radius * std::sin(a));
  }
  profile.front().first = 0.0;
  profile.back().first = 0.0;
  return make_revolved(profile, segments);
}

inline TriMesh make_torus(double major, double minor, int major_segments = 32, int minor_segments = 16) {
  TriMesh m;
  for (int i = 0; i < major_segments; ++i) {
    double u = 2.0 * kPi * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      double v = 2.0 * kPi * j / minor_segments;
      double rho = major + minor * std::cos(v);
      m.vertices.emplace_back(rho * std::cos(u), rho * std::sin(u), minor * std::sin(v));
    }
  }
  auto idx = [&](int i, int j) {
    return static_cast<std::uint32_t>((i % major_segments) * minor_segments + (j % minor_segments));
  };
  for (int i = 0; i < major_segments; ++i)
    for (int j = 0; j < minor_segments; ++j) detail::add_quad(m, idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
  return detail::orient_outward(m);
}

// L-shaped cross-section extruded along z; `arm` is the arm width relative to
// the unit square. arm = 0.5 removes one quarter of the unit cube.
inline TriMesh make_l_prism(double arm = 0.5) {
  if (!(arm > 0.0 && arm < 1.0)) throw DataError("make_l_prism: arm must be in (0, 1)");
  const std::vector<Eigen::Vector2d> poly = {{0, 0}, {1, 0}, {1, arm}, {arm, arm}, {arm, 1}, {0, 1}};
  TriMesh m;
  for (double z : {0.0, 1.0})
    for (const auto& p : poly) m.vertices.emplace_back(p.x(), p.y(), z);
  const std::uint32_t n = 6;
  // Fan from the reflex corner (index 3).
  const std::array<std::array<std::uint32_t, 3>, 4> cap = {{{3, 4, 5}, {3, 5, 0}, {3, 0, 1}, {3, 1, 2}}};
  for (auto c : cap) {
    m.triangles.push_back({c[0] + n, c[1] + n, c[2] + n});
    m.triangles.push_back({c[0], c[2], c[1]});
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t j = (i + 1) % n;
    detail::add_quad(m, i, j, j + n, i + n);
  }
  return detail::orient_outward(m);
}

// Named templates for the generator and the acceptance suites.
inline TriMesh make_named_shape(const std::string& name) {
  if (name == "cube") return make_cube(1.0);
  if (name == "sphere") return make_icosphere(0.5, 2);
  if (name == "lprism") return make_l_prism(0.5);
  if (name == "torus") return make_torus(1.0, 0.45, 24, 12);
  if (name == "capsule") return make_capsule(0.5, 1.0, 16, 4);
  throw UsageError("unknown shape '" + name + "' (expected cube, sphere, lprism, torus, capsule)");
}

inline const std::vector<std::string>& named_shapes() {
  static const std::vector<std::string> names = {"cube", "sphere", "lprism", "torus", "capsule"};
  return names;
}

}  // namespace stackcount::geom
