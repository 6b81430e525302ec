#pragma once

#include "stackcount/geom/shapes.hpp"

namespace stackcount::simlab {

using geom::AABB;
using geom::TriMesh;

// Open-top box. The base (outer bottom face) sits at base_center; walls and
// floor have thickness wall_ratio * min(inner_dims). Only +z up is supported.
struct ContainerSpec {
  Vec3 inner_dims = Vec3::Ones();
  double wall_ratio = 0.02;
  Vec3 base_center = Vec3::Zero();
  bool has_container = true;
  int up_axis = 2;

  double thickness() const { return wall_ratio * inner_dims.minCoeff(); }

  void validate() const {
    if (!(inner_dims.array() > 0.0).all() || !inner_dims.allFinite())
      throw DataError("container: inner dimensions must be positive");
    if (up_axis != 2) throw UsageError("container: only up_axis = 2 (z) is supported");
    if (!has_container) return;
    if (!(wall_ratio > 0.0)) throw DataError("container: degenerate wall thickness (ratio must be > 0)");
    if (wall_ratio < 0.01 || wall_ratio > 0.05) throw DataError("container: wall thickness ratio must lie in [0.01, 0.05]");
  }

  AABB cavity() const {
    double t = has_container ? thickness() : 0.0;
    Vec3 lo(base_center.x() - inner_dims.x() / 2, base_center.y() - inner_dims.y() / 2, base_center.z() + t);
    return AABB(lo, lo + inner_dims);
  }

  AABB outer() const {
    AABB c = cavity();
    if (!has_container) return c;
    double t = thickness();
    return AABB(Vec3(c.min.x() - t, c.min.y() - t, base_center.z()), Vec3(c.max.x() + t, c.max.y() + t, c.max.z()));
  }

  double floor_z() const { return cavity().min.z(); }
  double rim_z() const { return cavity().max.z(); }
  double ground_z() const { return base_center.z(); }

  // Disjoint axis-aligned slabs covering the shell: floor then four walls.
  std::vector<AABB> slabs() const {
    if (!has_container) return {};
    AABB c = cavity(), o = outer();
    return {
        AABB(o.min, Vec3(o.max.x(), o.max.y(), c.min.z())),
        AABB(Vec3(o.min.x(), o.min.y(), c.min.z()), Vec3(c.min.x(), o.max.y(), o.max.z())),
        AABB(Vec3(c.max.x(), o.min.y(), c.min.z()), Vec3(o.max.x(), o.max.y(), o.max.z())),
        AABB(Vec3(c.min.x(), o.min.y(), c.min.z()), Vec3(c.max.x(), c.min.y(), o.max.z())),
        AABB(Vec3(c.min.x(), c.max.y(), c.min.z()), Vec3(c.max.x(), o.max.y(), o.max.z())),
    };
  }
};

// Watertight open-top shell: outer box minus the cavity, closed across the rim.
inline TriMesh make_container(const ContainerSpec& spec) {
  spec.validate();
  if (!spec.has_container) return {};
  AABB c = spec.cavity(), o = spec.outer();
  TriMesh m;
  auto ring = [&](double x0, double y0, double x1, double y1, double z) {
    auto base = static_cast<std::uint32_t>(m.vertices.size());
    for (const auto& [x, y] : {std::pair{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}) m.vertices.emplace_back(x, y, z);
    return base;
  };
  std::uint32_t ob = ring(o.min.x(), o.min.y(), o.max.x(), o.max.y(), o.min.z());
  std::uint32_t ot = ring(o.min.x(), o.min.y(), o.max.x(), o.max.y(), o.max.z());
  std::uint32_t it = ring(c.min.x(), c.min.y(), c.max.x(), c.max.y(), c.max.z());
  std::uint32_t ib = ring(c.min.x(), c.min.y(), c.max.x(), c.max.y(), c.min.z());
  geom::detail::add_quad(m, ob + 0, ob + 3, ob + 2, ob + 1);  // bottom, facing -z
  geom::detail::add_quad(m, ib + 0, ib + 1, ib + 2, ib + 3);  // cavity floor, facing +z
  for (std::uint32_t k = 0; k < 4; ++k) {
    std::uint32_t n = (k + 1) % 4;
    geom::detail::add_quad(m, ob + k, ob + n, ot + n, ot + k);  // outer wall
    geom::detail::add_quad(m, ot + k, ot + n, it + n, it + k);  // rim
    geom::detail::add_quad(m, it + k, it + n, ib + n, ib + k);  // inner wall
  }
  return m;
}

}  // namespace stackcount::simlab
