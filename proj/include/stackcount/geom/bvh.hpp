#pragma once

// Bounding volume hierarchy with a binned SAH build. Used over triangles
// (mesh queries, rendering) and over instance boxes (scene level).

#include "stackcount/geom/mesh.hpp"

#include <span>

namespace stackcount::geom {

struct Ray {
  Vec3 origin;
  Vec3 dir;  // need not be normalized; t is in units of |dir|
};

struct RayBoxPrecomp {
  Vec3 origin;
  Vec3 inv_dir;
  explicit RayBoxPrecomp(const Ray& r) : origin(r.origin) {
    for (int a = 0; a < 3; ++a) inv_dir[a] = 1.0 / r.dir[a];
  }
  // Entry distance, or +inf when the slab test fails within [0, tmax].
  double enter(const Vec3& lo, const Vec3& hi, double tmax) const {
    double t0 = 0.0, t1 = tmax;
    for (int a = 0; a < 3; ++a) {
      double ta = (lo[a] - origin[a]) * inv_dir[a];
      double tb = (hi[a] - origin[a]) * inv_dir[a];
      if (ta > tb) std::swap(ta, tb);
      // NaN (0 * inf) on a slab boundary keeps the box.
      t0 = ta > t0 ? ta : t0;
      t1 = tb < t1 ? tb : t1;
      if (t0 > t1) return std::numeric_limits<double>::infinity();
    }
    return t0;
  }
};

class Bvh {
 public:
  struct Node {
    Vec3 lo, hi;
    std::uint32_t first = 0;  // leaf: first entry of `order`; inner: right child
    std::uint32_t count = 0;  // > 0 marks a leaf
  };

  Bvh() = default;
  explicit Bvh(std::span<const AABB> boxes, int leaf_size = 4) { build(boxes, leaf_size); }

  void build(std::span<const AABB> boxes, int leaf_size = 4) {
    nodes_.clear();
    order_.resize(boxes.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (boxes.empty()) return;
    std::vector<Vec3> centroids(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) centroids[i] = boxes[i].center();

    struct Task {
      std::uint32_t node, begin, end;
    };
    nodes_.reserve(2 * boxes.size() / std::max(1, leaf_size) + 1);
    nodes_.emplace_back();
    std::vector<Task> stack{{0, 0, static_cast<std::uint32_t>(boxes.size())}};
    constexpr int kBins = 12;
    while (!stack.empty()) {
      Task task = stack.back();
      stack.pop_back();
      AABB bounds, cbounds;
      for (auto i = task.begin; i < task.end; ++i) {
        bounds.expand(boxes[order_[i]]);
        cbounds.expand(centroids[order_[i]]);
      }
      nodes_[task.node].lo = bounds.min;
      nodes_[task.node].hi = bounds.max;
      std::uint32_t n = task.end - task.begin;
      int axis = cbounds.longest_axis();
      double cext = cbounds.extent()[axis];
      if (n <= static_cast<std::uint32_t>(leaf_size) || !(cext > 0.0)) {
        make_leaf(task);
        continue;
      }
      std::array<AABB, kBins> bin_box;
      std::array<std::uint32_t, kBins> bin_count{};
      auto bin_of = [&](std::uint32_t prim) {
        int b = static_cast<int>(kBins * (centroids[prim][axis] - cbounds.min[axis]) / cext);
        return std::clamp(b, 0, kBins - 1);
      };
      for (auto i = task.begin; i < task.end; ++i) {
        int b = bin_of(order_[i]);
        bin_box[b].expand(boxes[order_[i]]);
        ++bin_count[b];
      }
      auto area = [](const AABB& b) {
        if (b.empty()) return 0.0;
        Vec3 e = b.extent();
        return e.x() * e.y() + e.y() * e.z() + e.z() * e.x();
      };
      std::array<double, kBins - 1> left_cost{};
      AABB acc;
      std::uint32_t cnt = 0;
      for (int b = 0; b < kBins - 1; ++b) {
        acc.expand(bin_box[b]);
        cnt += bin_count[b];
        left_cost[b] = area(acc) * cnt;
      }
      acc = AABB();
      cnt = 0;
      double best = std::numeric_limits<double>::infinity();
      int best_split = -1;
      for (int b = kBins - 1; b > 0; --b) {
        acc.expand(bin_box[b]);
        cnt += bin_count[b];
        double cost = left_cost[b - 1] + area(acc) * cnt;
        if (cost < best) {
          best = cost;
          best_split = b;
        }
      }
      double leaf_cost = area(bounds) * n;
      if (n <= 2u * static_cast<std::uint32_t>(leaf_size) && best >= leaf_cost) {
        make_leaf(task);
        continue;
      }
      auto mid_it = std::partition(order_.begin() + task.begin, order_.begin() + task.end,
                                   [&](std::uint32_t p) { return bin_of(p) < best_split; });
      auto mid = static_cast<std::uint32_t>(mid_it - order_.begin());
      if (mid == task.begin || mid == task.end) {
        mid = task.begin + n / 2;
        std::nth_element(order_.begin() + task.begin, order_.begin() + mid, order_.begin() + task.end,
                         [&](std::uint32_t a, std::uint32_t b) { return centroids[a][axis] < centroids[b][axis]; });
      }
      auto left = static_cast<std::uint32_t>(nodes_.size());
      nodes_.emplace_back();
      auto right = static_cast<std::uint32_t>(nodes_.size());
      nodes_.emplace_back();
      nodes_[task.node].first = right;
      nodes_[task.node].count = 0;
      left_of_.resize(nodes_.size(), 0);
      left_of_[task.node] = left;
      stack.push_back({right, mid, task.end});
      stack.push_back({left, task.begin, mid});
    }
    left_of_.resize(nodes_.size(), 0);
  }

  bool empty() const { return nodes_.empty(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::span<const std::uint32_t> order() const { return order_; }

  // Visits primitives whose boxes the ray may hit before `tmax`. The visitor
  // gets (primitive, tmax&) and may shrink tmax; returning true stops early.
  template <class Visit>
  void traverse(const Ray& ray, double tmax, Visit&& visit) const {
    if (nodes_.empty()) return;
    RayBoxPrecomp pre(ray);
    if (pre.enter(nodes_[0].lo, nodes_[0].hi, tmax) == std::numeric_limits<double>::infinity()) return;
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& node = nodes_[stack[--sp]];
      if (node.count > 0) {
        for (std::uint32_t i = 0; i < node.count; ++i)
          if (visit(order_[node.first + i], tmax)) return;
        continue;
      }
      std::uint32_t idx = static_cast<std::uint32_t>(&node - nodes_.data());
      std::uint32_t a = left_of_[idx], b = node.first;
      double ta = pre.enter(nodes_[a].lo, nodes_[a].hi, tmax);
      double tb = pre.enter(nodes_[b].lo, nodes_[b].hi, tmax);
      if (ta > tb) {
        std::swap(a, b);
        std::swap(ta, tb);
      }
      // Push the far child first so the near one is popped next.
      if (tb != std::numeric_limits<double>::infinity()) stack[sp++] = b;
      if (ta != std::numeric_limits<double>::infinity()) stack[sp++] = a;
    }
  }

  template <class Visit>
  void query(const AABB& box, Visit&& visit) const {
    if (nodes_.empty()) return;
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      std::uint32_t idx = stack[--sp];
      const Node& node = nodes_[idx];
      if ((node.lo.array() > box.max.array()).any() || (box.min.array() > node.hi.array()).any()) continue;
      if (node.count > 0) {
        for (std::uint32_t i = 0; i < node.count; ++i) visit(order_[node.first + i]);
        continue;
      }
      stack[sp++] = node.first;
      stack[sp++] = left_of_[idx];
    }
  }

 private:
  template <class Task>
  void make_leaf(const Task& task) {
    nodes_[task.node].first = task.begin;
    nodes_[task.node].count = task.end - task.begin;
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> left_of_;
  std::vector<std::uint32_t> order_;
};

struct TriangleHit {
  double t = std::numeric_limits<double>::infinity();
  std::uint32_t triangle = 0;
  double u = 0.0, v = 0.0;
  bool hit() const { return t != std::numeric_limits<double>::infinity(); }
};

// Moller-Trumbore. Returns false for parallel rays or misses; fills t, u, v.
inline bool intersect_triangle(const Ray& ray, const Vec3& p0, const Vec3& e1, const Vec3& e2, double& t, double& u,
                               double& v) {
  Vec3 pvec = ray.dir.cross(e2);
  double det = e1.dot(pvec);
  if (det == 0.0) return false;
  double inv = 1.0 / det;
  Vec3 tvec = ray.origin - p0;
  u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return false;
  Vec3 qvec = tvec.cross(e1);
  v = ray.dir.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  t = e2.dot(qvec) * inv;
  return true;
}

// Triangle mesh with an acceleration structure for ray queries.
class MeshBvh {
 public:
  MeshBvh() = default;
  explicit MeshBvh(const TriMesh& mesh) { build(mesh); }

  void build(const TriMesh& mesh) {
    mesh.validate_indices();
    p0_.resize(mesh.triangles.size());
    e1_.resize(mesh.triangles.size());
    e2_.resize(mesh.triangles.size());
    std::vector<AABB> boxes(mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
      p0_[i] = mesh.corner(i, 0);
      e1_[i] = mesh.corner(i, 1) - p0_[i];
      e2_[i] = mesh.corner(i, 2) - p0_[i];
      boxes[i].expand(mesh.corner(i, 0));
      boxes[i].expand(mesh.corner(i, 1));
      boxes[i].expand(mesh.corner(i, 2));
    }
    bounds_ = mesh.bounds();
    bvh_.build(boxes, 4);
  }

  const AABB& bounds() const { return bounds_; }
  std::size_t size() const { return p0_.size(); }

  TriangleHit closest(const Ray& ray, double tmin = 0.0, double tmax = std::numeric_limits<double>::infinity()) const {
    TriangleHit best;
    best.t = tmax;
    bool any = false;
    bvh_.traverse(ray, tmax, [&](std::uint32_t tri, double& limit) {
      double t, u, v;
      if (intersect_triangle(ray, p0_[tri], e1_[tri], e2_[tri], t, u, v) && t > tmin && t < limit) {
        limit = t;
        best = {t, tri, u, v};
        any = true;
      }
      return false;
    });
    if (!any) best.t = std::numeric_limits<double>::infinity();
    return best;
  }

  // Visits every hit with t > tmin. Visitor receives (t, u, v, triangle).
  template <class Visit>
  void all_hits(const Ray& ray, double tmin, Visit&& visit) const {
    bvh_.traverse(ray, std::numeric_limits<double>::infinity(), [&](std::uint32_t tri, double&) {
      double t, u, v;
      if (intersect_triangle(ray, p0_[tri], e1_[tri], e2_[tri], t, u, v) && t > tmin) return visit(t, u, v, tri);
      return false;
    });
  }

  Vec3 normal(std::uint32_t tri) const { return e1_[tri].cross(e2_[tri]).normalized(); }

  // Closest point on the surface (brute force over candidate leaves).
  double distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p0_.size(); ++i) best = std::min(best, point_triangle_distance(p, i));
    return best;
  }

  double point_triangle_distance(const Vec3& p, std::size_t tri) const {
    // Ericson, closest point on triangle.
    const Vec3 a = p0_[tri], b = a + e1_[tri], c = a + e2_[tri];
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return (p - a).norm();
    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return (p - b).norm();
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return (p - c).norm();
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
      return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
    double denom = 1.0 / (va + vb + vc);
    return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
  }

  // Surface distance using the hierarchy to prune; `radius` bounds the search.
  double distance_within(const Vec3& p, double radius) const {
    double best = std::numeric_limits<double>::infinity();
    AABB box(p - Vec3::Constant(radius), p + Vec3::Constant(radius));
    bvh_.query(box, [&](std::uint32_t tri) { best = std::min(best, point_triangle_distance(p, tri)); });
    return best;
  }

 private:
  std::vector<Vec3> p0_, e1_, e2_;
  AABB bounds_;
  Bvh bvh_;
};

}  // namespace stackcount::geom
