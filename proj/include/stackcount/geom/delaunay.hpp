#pragma once

// Incremental (Bowyer-Watson) 3D Delaunay tetrahedralization.

#include "stackcount/geom/mesh.hpp"
#include "stackcount/geom/predicates.hpp"

#include <span>
#include <unordered_map>

namespace stackcount::geom {

class Delaunay3 {
 public:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Tet {
    std::array<std::uint32_t, 4> v{};
    std::array<std::uint32_t, 4> nb{kNone, kNone, kNone, kNone};  // opposite v[i]
    bool alive = true;
  };

  explicit Delaunay3(std::span<const Vec3> points) {
    if (points.size() < 4) throw DataError("delaunay: need at least 4 points");
    points_.assign(points.begin(), points.end());
    n_input_ = points.size();
    AABB b;
    for (const auto& p : points_) {
      if (!p.allFinite()) throw DataError("delaunay: non-finite point");
      b.expand(p);
    }
    double span = std::max(b.extent().maxCoeff(), 1e-12);
    Vec3 c = b.center();
    const double k = 2e3 * span;
    points_.push_back(c + k * Vec3(1, 1, 1));
    points_.push_back(c + k * Vec3(1, -1, -1));
    points_.push_back(c + k * Vec3(-1, 1, -1));
    points_.push_back(c + k * Vec3(-1, -1, 1));
    Tet root;
    root.v = {super(0), super(1), super(2), super(3)};
    if (predicates::orient3d(points_[root.v[0]], points_[root.v[1]], points_[root.v[2]], points_[root.v[3]]) < 0)
      std::swap(root.v[2], root.v[3]);
    tets_.push_back(root);
    marks_.push_back(0);

    for (auto i : insertion_order(b)) insert(i);
  }

  bool is_super(std::uint32_t v) const { return v >= n_input_; }
  bool touches_super(const Tet& t) const {
    return is_super(t.v[0]) || is_super(t.v[1]) || is_super(t.v[2]) || is_super(t.v[3]);
  }
  const std::vector<Tet>& tets() const { return tets_; }
  const Vec3& point(std::uint32_t i) const { return points_[i]; }
  std::size_t duplicates() const { return duplicates_; }

  double volume(const Tet& t) const {
    return (point(t.v[1]) - point(t.v[0])).dot((point(t.v[2]) - point(t.v[0])).cross(point(t.v[3]) - point(t.v[0]))) / 6.0;
  }

  double circumradius(const Tet& t) const {
    const Vec3& a = point(t.v[0]);
    Vec3 u = point(t.v[1]) - a, v = point(t.v[2]) - a, w = point(t.v[3]) - a;
    double denom = 2.0 * u.dot(v.cross(w));
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    Vec3 num = u.squaredNorm() * v.cross(w) + v.squaredNorm() * w.cross(u) + w.squaredNorm() * u.cross(v);
    return (num / denom).norm();
  }

 private:
  std::uint32_t super(int k) const { return static_cast<std::uint32_t>(n_input_ + k); }

  std::vector<std::uint32_t> insertion_order(const AABB& b) const {
    // Morton order keeps consecutive insertions spatially close for the walk.
    std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(n_input_);
    Vec3 ext = b.extent().cwiseMax(Vec3::Constant(1e-300));
    auto spread = [](std::uint64_t x) {
      x &= 0x1fffff;
      x = (x | x << 32) & 0x1f00000000ffffULL;
      x = (x | x << 16) & 0x1f0000ff0000ffULL;
      x = (x | x << 8) & 0x100f00f00f00f00fULL;
      x = (x | x << 4) & 0x10c30c30c30c30c3ULL;
      x = (x | x << 2) & 0x1249249249249249ULL;
      return x;
    };
    for (std::uint32_t i = 0; i < n_input_; ++i) {
      Vec3 q = ((points_[i] - b.min).array() / ext.array() * 2097151.0).matrix();
      keyed[i] = {spread(std::uint64_t(q.x())) | spread(std::uint64_t(q.y())) << 1 | spread(std::uint64_t(q.z())) << 2, i};
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::uint32_t> order(n_input_);
    for (std::size_t i = 0; i < n_input_; ++i) order[i] = keyed[i].second;
    return order;
  }

  bool face_separates(const Tet& t, int i, const Vec3& p) const {
    // True when p is strictly beyond the face opposite v[i].
    std::array<Vec3, 4> q = {point(t.v[0]), point(t.v[1]), point(t.v[2]), point(t.v[3])};
    q[i] = p;
    return predicates::orient3d(q[0], q[1], q[2], q[3]) < 0;
  }

  std::uint32_t locate(const Vec3& p) {
    std::uint32_t cur = last_;
    if (cur >= tets_.size() || !tets_[cur].alive) {
      cur = 0;
      while (!tets_[cur].alive) ++cur;
    }
    std::uint64_t steps = 0;
    for (;;) {
      const Tet& t = tets_[cur];
      int start = static_cast<int>(walk_rng_() & 3u);
      bool moved = false;
      for (int k = 0; k < 4; ++k) {
        int i = (start + k) & 3;
        if (face_separates(t, i, p)) {
          if (t.nb[i] == kNone) throw NumericalError("delaunay: point escaped the bounding tetrahedron");
          cur = t.nb[i];
          moved = true;
          break;
        }
      }
      if (!moved) return cur;
      if (++steps > 50 * tets_.size() + 1000) throw NumericalError("delaunay: point location did not terminate");
    }
  }

  bool in_sphere(const Tet& t, const Vec3& p) const {
    return predicates::insphere(point(t.v[0]), point(t.v[1]), point(t.v[2]), point(t.v[3]), p) > 0;
  }

  void insert(std::uint32_t pi) {
    const Vec3& p = points_[pi];
    std::uint32_t start = locate(p);
    for (auto v : tets_[start].v)
      if (points_[v] == p) {
        ++duplicates_;
        return;
      }

    stamp_ += 2;
    const std::uint32_t in_cavity = stamp_, outside = stamp_ + 1;
    cavity_.clear();
    cavity_.push_back(start);
    set_mark(start, in_cavity);
    for (std::size_t k = 0; k < cavity_.size(); ++k) {
      const auto nbs = tets_[cavity_[k]].nb;
      for (auto nb : nbs) {
        if (nb == kNone || mark(nb) == in_cavity || mark(nb) == outside) continue;
        if (in_sphere(tets_[nb], p)) {
          set_mark(nb, in_cavity);
          cavity_.push_back(nb);
        } else {
          set_mark(nb, outside);
        }
      }
    }

    std::unordered_map<std::uint64_t, std::pair<std::uint32_t, int>> open_faces;
    created_.clear();
    for (auto ci : cavity_) {
      for (int i = 0; i < 4; ++i) {
        std::uint32_t nb = tets_[ci].nb[i];
        if (nb != kNone && mark(nb) == in_cavity) continue;
        Tet nt;
        nt.v = tets_[ci].v;
        nt.v[i] = pi;
        nt.nb[i] = nb;
        std::uint32_t id = allocate(nt);
        created_.push_back(id);
        if (nb != kNone)
          for (auto& back : tets_[nb].nb)
            if (back == ci) back = id;
        for (int j = 0; j < 4; ++j) {
          if (j == i) continue;
          // Face opposite v[j] contains p; key it by its other two vertices.
          std::uint32_t a = kNone, b = kNone;
          for (int m = 0; m < 4; ++m) {
            if (m == j || m == i) continue;
            (a == kNone ? a : b) = tets_[id].v[m];
          }
          auto key = edge_key(std::min(a, b), std::max(a, b));
          auto it = open_faces.find(key);
          if (it == open_faces.end()) {
            open_faces.emplace(key, std::make_pair(id, j));
          } else {
            tets_[id].nb[j] = it->second.first;
            tets_[it->second.first].nb[it->second.second] = id;
            open_faces.erase(it);
          }
        }
      }
    }
    for (auto ci : cavity_) {
      tets_[ci].alive = false;
      free_.push_back(ci);
    }
    last_ = created_.back();
  }

  // Cavity slots are released only after the new tetrahedra exist, so a
  // recycled slot never belongs to the cavity being replaced.
  std::uint32_t allocate(const Tet& t) {
    if (!free_.empty()) {
      std::uint32_t id = free_.back();
      free_.pop_back();
      tets_[id] = t;
      return id;
    }
    tets_.push_back(t);
    return static_cast<std::uint32_t>(tets_.size() - 1);
  }

  std::uint32_t mark(std::uint32_t t) const { return t < marks_.size() ? marks_[t] : 0; }
  void set_mark(std::uint32_t t, std::uint32_t m) {
    if (marks_.size() < tets_.size()) marks_.resize(tets_.size(), 0);
    marks_[t] = m;
  }

  static std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t(a) << 32) | b; }

  std::vector<Vec3> points_;
  std::size_t n_input_ = 0;
  std::vector<Tet> tets_;
  std::vector<std::uint32_t> marks_;
  std::vector<std::uint32_t> free_, cavity_, created_;
  std::uint32_t last_ = 0;
  std::uint32_t stamp_ = 0;
  std::size_t duplicates_ = 0;
  std::minstd_rand walk_rng_{12345};
};

}  // namespace stackcount::geom
