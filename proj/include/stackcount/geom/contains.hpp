#pragma once

// Point-in-mesh classification by ray parity.

#include "stackcount/geom/bvh.hpp"

namespace stackcount::geom {

class MeshLocator {
 public:
  MeshLocator() = default;
  explicit MeshLocator(const TriMesh& mesh) : bvh_(mesh) {
    if (!check_mesh(mesh).watertight) throw DataError("contains: mesh is not watertight");
    scale_ = std::max(bvh_.bounds().diagonal(), 1e-300);
  }

  const AABB& bounds() const { return bvh_.bounds(); }
  const MeshBvh& bvh() const { return bvh_; }

  // Strict interior test. Points on the surface may go either way.
  bool contains(const Vec3& p) const {
    if (!bvh_.bounds().contains(p)) return false;
    // Irrational-ish directions make grazing hits rare; a hit within 1e-12
    // of an edge or vertex triggers the next direction in the sequence.
    static const std::array<Vec3, 6> kDirections = {
        Vec3(0.5773502691896258, 0.5773502691896258 + 1.3e-3, 0.5773502691896258 - 2.9e-3).normalized(),
        Vec3(-0.2672612419124244, 0.8017837257372732, 0.5345224838248488),
        Vec3(0.7071067811865476, -0.3162277660168379, -0.6324555320336759).normalized(),
        Vec3(-0.6, -0.64, 0.48),
        Vec3(0.1147, 0.9932, -0.0192).normalized(),
        Vec3(-0.9113, 0.0731, 0.4052).normalized(),
    };
    for (const auto& dir : kDirections) {
      int crossings = 0;
      bool degenerate = false;
      Ray ray{p, dir};
      bvh_.all_hits(ray, 0.0, [&](double t, double u, double v, std::uint32_t) {
        constexpr double kEdgeTol = 1e-12;
        if (u < kEdgeTol || v < kEdgeTol || 1.0 - u - v < kEdgeTol || t < 1e-12 * scale_) {
          degenerate = true;
          return true;
        }
        ++crossings;
        return false;
      });
      if (!degenerate) return (crossings & 1) == 1;
    }
    return false;
  }

 private:
  MeshBvh bvh_;
  double scale_ = 1.0;
};

inline bool contains(const TriMesh& mesh, const Vec3& p) { return MeshLocator(mesh).contains(p); }

}  // namespace stackcount::geom
