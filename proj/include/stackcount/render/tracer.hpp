#pragma once

// Two-level ray caster for a scene: a BVH over posed object instances whose
// leaves share one triangle BVH in the object frame, plus the container
// shell and an infinite ground plane.

#include "stackcount/geom/bvh.hpp"
#include "stackcount/render/raster.hpp"

namespace stackcount::render {

using geom::AABB;
using geom::Ray;
using geom::RigidPose;
using geom::TriMesh;

struct SurfaceHit {
  double t = std::numeric_limits<double>::infinity();
  Label label = kGround;
  bool hit() const { return t != std::numeric_limits<double>::infinity(); }
};

class SceneTracer {
 public:
  SceneTracer(const TriMesh& object, std::vector<RigidPose> poses, const TriMesh& container, double ground_z)
      : object_(object), poses_(std::move(poses)), ground_z_(ground_z) {
    if (!container.triangles.empty()) container_.build(container);
    has_container_ = !container.triangles.empty();
    std::vector<Vec3> corners;
    AABB local = object.bounds();
    for (int k = 0; k < 8; ++k)
      corners.emplace_back(k & 1 ? local.max.x() : local.min.x(), k & 2 ? local.max.y() : local.min.y(),
                           k & 4 ? local.max.z() : local.min.z());
    boxes_.reserve(poses_.size());
    inverse_.reserve(poses_.size());
    for (const auto& p : poses_) {
      AABB b;
      for (const auto& c : corners) b.expand(p.apply(c));
      boxes_.push_back(b);
      inverse_.push_back(p.rotation.conjugate().toRotationMatrix());
    }
    instances_.build(boxes_, 2);
  }

  // `ray.dir` must be unit length so that t is a Euclidean distance.
  SurfaceHit trace(const Ray& ray) const {
    SurfaceHit best;
    if (ray.dir.z() < 0.0) {
      double t = (ground_z_ - ray.origin.z()) / ray.dir.z();
      if (t > 0.0) best = {t, kGround};
    }
    if (has_container_) {
      auto h = container_.closest(ray, 0.0, best.t);
      if (h.hit() && h.t < best.t) best = {h.t, kContainer};
    }
    instances_.traverse(ray, best.t, [&](std::uint32_t i, double& limit) {
      Ray local{inverse_[i] * (ray.origin - poses_[i].translation), inverse_[i] * ray.dir};
      auto h = object_.closest(local, 0.0, limit);
      if (h.hit() && h.t < limit) {
        limit = h.t;
        best = {h.t, kObjects};
      }
      return false;
    });
    return best;
  }

  // Distance from `p` to the nearest object surface, searching within `radius`.
  double object_distance(const Vec3& p, double radius) const {
    double best = std::numeric_limits<double>::infinity();
    AABB q(p - Vec3::Constant(radius), p + Vec3::Constant(radius));
    instances_.query(q, [&](std::uint32_t i) {
      best = std::min(best, object_.distance_within(inverse_[i] * (p - poses_[i].translation), radius));
    });
    return best;
  }

  const std::vector<AABB>& instance_boxes() const { return boxes_; }

 private:
  geom::MeshBvh object_;
  geom::MeshBvh container_;
  bool has_container_ = false;
  std::vector<RigidPose> poses_;
  std::vector<Mat3> inverse_;
  std::vector<AABB> boxes_;
  geom::Bvh instances_;
  double ground_z_;
};

}  // namespace stackcount::render
