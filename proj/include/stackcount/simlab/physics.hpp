#pragma once

// Impulse-based rigid bodies with convex collision proxies.
//
// Contacts come from sample points of one proxy (hull vertices plus points
// along sharp edges) tested against the face planes of the other, in both
// directions. Points within a speculative margin become contacts too, so fast
// bodies stop at the surface instead of tunnelling. Velocities are solved by
// sequential impulses with warm starting and Coulomb friction. Penetration is
// removed by a separate pseudo-velocity pass (split impulse) so position
// correction never adds kinetic energy. Everything runs in a fixed order on one thread so a
// run is bit-reproducible.

#include "stackcount/geom/hull.hpp"

#include <unordered_map>

namespace stackcount::simlab {

using geom::AABB;
using geom::TriMesh;

struct SimParams {
  double timestep = 1.0 / 240.0;
  int max_steps = 2400;  // per batch
  double friction = 0.5;
  double restitution = 0.0;
  double sleep_lin_vel = 1e-3;
  double sleep_ang_vel = 1e-2;
  double gravity = 9.81;
  std::array<int, 3> batch_grid{4, 4, 5};
  int solver_iterations = 10;
  double sleep_time = 0.2;         // seconds below thresholds before sleeping
  double wake_speed = 0.05;        // approach speed that wakes a sleeping body
  double linear_damping = 0.05;    // 1/s
  double angular_damping = 0.2;    // 1/s
  double baumgarte = 0.2;
  double slop = 5e-4;              // allowed penetration, meters
  double max_correction = 0.5;     // cap on positional correction speed, m/s
  double max_speed = 20.0;         // linear speed clamp, m/s

  void validate() const {
    if (!(timestep > 0.0 && timestep <= 1.0 / 60.0)) throw UsageError("sim: timestep must be in (0, 1/60]");
    if (restitution != 0.0) throw UsageError("sim: restitution must be 0");
    if (max_steps < 1 || solver_iterations < 1) throw UsageError("sim: max_steps and solver_iterations must be >= 1");
    if (friction < 0.0) throw UsageError("sim: friction must be >= 0");
    for (int n : batch_grid)
      if (n < 1) throw UsageError("sim: batch grid entries must be >= 1");
  }
};

struct ConvexProxy {
  std::vector<Vec3> points;  // hull vertices, then sharp-edge samples
  std::vector<Vec3> normals;
  std::vector<double> offsets;  // inside iff normals[i].dot(x) <= offsets[i] for all i
  double radius = 0.0;          // max distance of a point from the origin
  AABB box;

  // Max over planes of the signed plane distance, with the arg-max face. Stops
  // early once the distance reaches `cutoff`.
  double plane_distance(const Vec3& p, std::size_t& face,
                        double cutoff = std::numeric_limits<double>::infinity()) const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < normals.size(); ++i) {
      double d = normals[i].dot(p) - offsets[i];
      if (d >= cutoff) return d;
      if (d > best) {
        best = d;
        face = i;
      }
    }
    return best;
  }
};

// Proxy from the convex hull of `mesh` (expressed in the body frame). Edges
// whose dihedral angle exceeds 30 degrees get samples every `edge_spacing`.
inline ConvexProxy make_proxy(const TriMesh& mesh, double edge_spacing) {
  TriMesh hull = geom::convex_hull(mesh);
  ConvexProxy p;
  p.points = hull.vertices;
  std::vector<Vec3> tri_normal(hull.triangles.size());
  for (std::size_t t = 0; t < hull.triangles.size(); ++t) {
    Vec3 n = (hull.corner(t, 1) - hull.corner(t, 0)).cross(hull.corner(t, 2) - hull.corner(t, 0)).normalized();
    tri_normal[t] = n;
    double d = n.dot(hull.corner(t, 0));
    bool dup = false;
    for (std::size_t i = 0; i < p.normals.size() && !dup; ++i)
      dup = p.normals[i].dot(n) > 1.0 - 1e-10 && std::abs(p.offsets[i] - d) < 1e-12 * (1.0 + std::abs(d));
    if (!dup) {
      p.normals.push_back(n);
      p.offsets.push_back(d);
    }
  }
  std::unordered_map<std::uint64_t, std::uint32_t> owner;
  for (std::uint32_t t = 0; t < hull.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k) owner.emplace(geom::detail::edge_key(hull.triangles[t][k], hull.triangles[t][(k + 1) % 3]), t);
  const double cos_sharp = std::cos(30.0 * kPi / 180.0);
  for (std::uint32_t t = 0; t < hull.triangles.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      std::uint32_t a = hull.triangles[t][k], b = hull.triangles[t][(k + 1) % 3];
      if (a > b) continue;
      std::uint32_t other = owner.at(geom::detail::edge_key(b, a));
      if (tri_normal[t].dot(tri_normal[other]) > cos_sharp) continue;
      Vec3 pa = hull.vertices[a], pb = hull.vertices[b];
      int n = static_cast<int>(std::ceil((pb - pa).norm() / edge_spacing)) - 1;
      for (int i = 1; i <= n; ++i) p.points.push_back(pa + (pb - pa) * (double(i) / (n + 1)));
    }
  }
  for (const auto& q : p.points) {
    p.radius = std::max(p.radius, q.norm());
    p.box.expand(q);
  }
  return p;
}

struct Body {
  std::uint32_t proxy = 0;
  Vec3 x = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero(), w = Vec3::Zero();
  Vec3 pv = Vec3::Zero(), pw = Vec3::Zero();  // pseudo velocities, reset every step
  double inv_mass = 0.0;
  Mat3 inv_inertia_local = Mat3::Zero();
  Mat3 inv_inertia_world = Mat3::Zero();
  bool is_static = false;
  bool asleep = false;
  int still_steps = 0;
  AABB box;  // world bounds of the proxy

  bool moving() const { return !is_static && !asleep; }
};

struct StepStats {
  std::size_t awake = 0;
  std::size_t contacts = 0;
};

class World {
 public:
  static constexpr std::uint32_t kGround = std::numeric_limits<std::uint32_t>::max();

  World(const SimParams& params, double ground_z) : params_(params), ground_z_(ground_z) { params_.validate(); }

  std::uint32_t add_proxy(ConvexProxy proxy) {
    proxies_.push_back(std::move(proxy));
    return static_cast<std::uint32_t>(proxies_.size() - 1);
  }

  std::uint32_t add_static(std::uint32_t proxy, const Vec3& x, const Quat& q = Quat::Identity()) {
    Body b;
    b.proxy = proxy;
    b.x = x;
    b.q = q;
    b.is_static = true;
    update_derived(b);
    bodies_.push_back(b);
    return static_cast<std::uint32_t>(bodies_.size() - 1);
  }

  std::uint32_t add_dynamic(std::uint32_t proxy, const Vec3& x, const Quat& q, double mass, const Mat3& inertia) {
    if (!(mass > 0.0)) throw DataError("sim: body mass must be positive");
    Body b;
    b.proxy = proxy;
    b.x = x;
    b.q = q.normalized();
    b.inv_mass = 1.0 / mass;
    b.inv_inertia_local = inertia.inverse();
    update_derived(b);
    bodies_.push_back(b);
    return static_cast<std::uint32_t>(bodies_.size() - 1);
  }

  const std::vector<Body>& bodies() const { return bodies_; }
  const ConvexProxy& proxy(std::uint32_t i) const { return proxies_[i]; }
  const SimParams& params() const { return params_; }
  double ground_z() const { return ground_z_; }

  bool all_asleep() const {
    return std::none_of(bodies_.begin(), bodies_.end(), [](const Body& b) { return b.moving(); });
  }

  void put_to_sleep(std::uint32_t i) {
    Body& b = bodies_[i];
    if (b.is_static) return;
    b.asleep = true;
    b.v.setZero();
    b.w.setZero();
    b.still_steps = 0;
  }

  StepStats step() {
    const double dt = params_.timestep;
    build_contacts();
    wake_on_impact();
    for (auto& b : bodies_) {
      if (!b.moving()) continue;
      b.v.z() -= params_.gravity * dt;
      b.v /= 1.0 + params_.linear_damping * dt;
      b.w /= 1.0 + params_.angular_damping * dt;
    }
    prepare_contacts();
    for (int it = 0; it < params_.solver_iterations; ++it)
      for (auto& c : contacts_) solve(c);
    for (int it = 0; it < params_.solver_iterations; ++it)
      for (auto& c : contacts_) solve_position(c);
    for (auto& b : bodies_) {
      if (!b.moving()) continue;
      double speed = b.v.norm();
      if (speed > params_.max_speed) b.v *= params_.max_speed / speed;
      b.x += (b.v + b.pv) * dt;
      Vec3 w = b.w + b.pw;
      b.pv.setZero();
      b.pw.setZero();
      Quat spin(0.0, w.x(), w.y(), w.z());
      Quat dq = spin * b.q;
      b.q.coeffs() += 0.5 * dt * dq.coeffs();
      b.q.normalize();
      update_derived(b);
      if (b.v.norm() < params_.sleep_lin_vel && b.w.norm() < params_.sleep_ang_vel) {
        if (++b.still_steps * dt >= params_.sleep_time) {
          b.asleep = true;
          b.v.setZero();
          b.w.setZero();
        }
      } else {
        b.still_steps = 0;
      }
    }
    save_warm_start();
    StepStats s;
    s.contacts = contacts_.size();
    for (const auto& b : bodies_) s.awake += b.moving();
    return s;
  }

  // Steps until every body sleeps; returns false if max_steps ran out.
  bool settle() {
    for (int i = 0; i < params_.max_steps; ++i) {
      if (all_asleep()) return true;
      step();
    }
    return all_asleep();
  }

  // Deepest penetration among pairs of bodies (proxy plane distance, meters).
  // Includes sleeping bodies; the ground plane and container are ignored.
  double max_penetration() {
    double worst = 0.0;
    build_contacts(0.0, true);
    for (const auto& c : contacts_)
      if (c.b != kGround && !bodies_[c.a].is_static && !bodies_[c.b].is_static) worst = std::max(worst, -c.sep);
    contacts_.clear();
    return worst;
  }

 private:
  struct Contact {
    std::uint32_t a = 0, b = 0;
    std::uint32_t key = 0;
    Vec3 p, n;
    double sep = 0.0;
    Vec3 ra, rb, t1, t2;
    double mn = 0.0, mt1 = 0.0, mt2 = 0.0;
    double target = 0.0, bias = 0.0;
    double ln = 0.0, lt1 = 0.0, lt2 = 0.0, lp = 0.0;
  };

  struct WarmKey {
    std::uint32_t a, b, key;
    bool operator==(const WarmKey&) const = default;
  };
  struct WarmHash {
    std::size_t operator()(const WarmKey& k) const {
      return splitmix64((std::uint64_t(k.a) << 32 | k.b) ^ (std::uint64_t(k.key) * 0x9e3779b97f4a7c15ULL));
    }
  };
  struct WarmValue {
    double ln;
    Vec3 friction;
  };

  void update_derived(Body& b) {
    Mat3 r = b.q.toRotationMatrix();
    b.inv_inertia_world = r * b.inv_inertia_local * r.transpose();
    const ConvexProxy& p = proxies_[b.proxy];
    // Rotated local AABB: center plus |R| times half extents.
    Vec3 c = r * p.box.center() + b.x;
    Vec3 h = r.cwiseAbs() * (0.5 * p.box.extent());
    b.box = AABB(c - h, c + h);
  }

  double margin_for(const Body& a, const Body* b) const {
    const double dt = params_.timestep;
    double speed = a.v.norm() + a.w.norm() * proxies_[a.proxy].radius;
    if (b && !b->is_static) speed += b->v.norm() + b->w.norm() * proxies_[b->proxy].radius;
    return params_.slop + speed * dt;
  }

  // Points of `pa` (body a) against planes of `pb` (body b). Normals point
  // from b towards a when `flip` is false.
  void collide_points(std::uint32_t ia, std::uint32_t ib, bool flip, std::uint32_t ca, std::uint32_t cb,
                      double margin) {
    const Body& A = bodies_[ia];
    const Body& B = bodies_[ib];
    const ConvexProxy& PA = proxies_[A.proxy];
    const ConvexProxy& PB = proxies_[B.proxy];
    Mat3 ra = A.q.toRotationMatrix(), rb = B.q.toRotationMatrix();
    Mat3 rel = rb.transpose() * ra;
    Vec3 trel = rb.transpose() * (A.x - B.x);
    AABB cull = PB.box.inflated(margin);
    double r2 = (PB.radius + margin) * (PB.radius + margin);
    for (std::uint32_t k = 0; k < PA.points.size(); ++k) {
      Vec3 local = rel * PA.points[k] + trel;
      if (!cull.contains(local) || local.squaredNorm() > r2) continue;
      std::size_t face = 0;
      double sep = PB.plane_distance(local, face, margin);
      if (sep >= margin) continue;
      Contact c;
      c.p = ra * PA.points[k] + A.x;
      Vec3 n = rb * PB.normals[face];
      if (!flip) {
        c.a = ca;
        c.b = cb;
        c.n = n;
      } else {
        c.a = cb;
        c.b = ca;
        c.n = -n;
      }
      c.sep = sep;
      c.key = (k << 1) | (flip ? 1u : 0u);
      contacts_.push_back(c);
    }
  }

  void collide_ground(std::uint32_t ia, double margin) {
    const Body& A = bodies_[ia];
    if (A.box.min.z() - ground_z_ >= margin) return;
    const ConvexProxy& PA = proxies_[A.proxy];
    Mat3 ra = A.q.toRotationMatrix();
    for (std::uint32_t k = 0; k < PA.points.size(); ++k) {
      Vec3 p = ra * PA.points[k] + A.x;
      double sep = p.z() - ground_z_;
      if (sep >= margin) continue;
      Contact c;
      c.a = ia;
      c.b = kGround;
      c.p = p;
      c.n = Vec3::UnitZ();
      c.sep = sep;
      c.key = k << 1;
      contacts_.push_back(c);
    }
  }

  void build_contacts(double fixed_margin = -1.0, bool include_sleeping = false) {
    contacts_.clear();
    pairs_.clear();
    // Uniform-grid broadphase over dynamic bodies.
    double cell = 0.0;
    for (const auto& b : bodies_)
      if (!b.is_static) cell = std::max(cell, b.box.extent().maxCoeff());
    if (cell > 0.0) {
      cell *= 1.01;
      std::vector<std::pair<std::uint64_t, std::uint32_t>> cells;
      for (std::uint32_t i = 0; i < bodies_.size(); ++i) {
        const Body& b = bodies_[i];
        if (b.is_static) continue;
        Vec3 lo = (b.box.min / cell).array().floor(), hi = (b.box.max / cell).array().floor();
        for (long x = long(lo.x()); x <= long(hi.x()); ++x)
          for (long y = long(lo.y()); y <= long(hi.y()); ++y)
            for (long z = long(lo.z()); z <= long(hi.z()); ++z) {
              std::uint64_t key = (std::uint64_t(x + (1 << 20)) << 42) | (std::uint64_t(y + (1 << 20)) << 21) |
                                  std::uint64_t(z + (1 << 20));
              cells.emplace_back(key, i);
            }
      }
      std::sort(cells.begin(), cells.end());
      for (std::size_t s = 0; s < cells.size();) {
        std::size_t e = s;
        while (e < cells.size() && cells[e].first == cells[s].first) ++e;
        for (std::size_t i = s; i < e; ++i)
          for (std::size_t j = i + 1; j < e; ++j) {
            std::uint32_t a = cells[i].second, b = cells[j].second;
            if (!include_sleeping && !bodies_[a].moving() && !bodies_[b].moving()) continue;
            pairs_.emplace_back(std::min(a, b), std::max(a, b));
          }
        s = e;
      }
      std::sort(pairs_.begin(), pairs_.end());
      pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
    }
    for (std::uint32_t i = 0; i < bodies_.size(); ++i) {
      const Body& b = bodies_[i];
      if (!b.moving()) continue;
      for (std::uint32_t s = 0; s < bodies_.size(); ++s)
        if (bodies_[s].is_static) pairs_.emplace_back(i, s);
    }
    for (auto [a, b] : pairs_) {
      const Body& A = bodies_[a];
      const Body& B = bodies_[b];
      double margin = fixed_margin >= 0.0 ? fixed_margin : std::max(margin_for(A, &B), margin_for(B, &A));
      if (!A.box.inflated(margin).intersects(B.box)) continue;
      collide_points(a, b, false, a, b, margin);
      collide_points(b, a, true, b, a, margin);
    }
    for (std::uint32_t i = 0; i < bodies_.size(); ++i) {
      if (!bodies_[i].moving()) continue;
      collide_ground(i, fixed_margin >= 0.0 ? fixed_margin : margin_for(bodies_[i], nullptr));
    }
  }

  Vec3 velocity_at(std::uint32_t i, const Vec3& r) const {
    if (i == kGround) return Vec3::Zero();
    const Body& b = bodies_[i];
    return b.v + b.w.cross(r);
  }

  bool dynamic(std::uint32_t i) const { return i != kGround && bodies_[i].moving(); }

  void wake_on_impact() {
    for (const auto& c : contacts_) {
      if (c.b == kGround) continue;
      for (int side = 0; side < 2; ++side) {
        std::uint32_t sleeper = side ? c.b : c.a, other = side ? c.a : c.b;
        Body& s = bodies_[sleeper];
        const Body& o = bodies_[other];
        if (!s.asleep || !o.moving()) continue;
        // n points from b to a; approach is the speed of `other` towards `sleeper`.
        double vn = (o.v + o.w.cross(c.p - o.x)).dot(c.n);
        double approach = side ? -vn : vn;
        if (approach > params_.wake_speed && c.sep < approach * params_.timestep) {
          s.asleep = false;
          s.still_steps = 0;
        }
      }
    }
  }

  double inv_mass_along(std::uint32_t i, const Vec3& r, const Vec3& dir) const {
    if (!dynamic(i)) return 0.0;
    const Body& b = bodies_[i];
    Vec3 rn = r.cross(dir);
    return b.inv_mass + rn.dot(b.inv_inertia_world * rn);
  }

  void apply(std::uint32_t i, const Vec3& r, const Vec3& impulse) {
    if (!dynamic(i)) return;
    Body& b = bodies_[i];
    b.v += b.inv_mass * impulse;
    b.w += b.inv_inertia_world * r.cross(impulse);
  }

  void prepare_contacts() {
    const double dt = params_.timestep;
    for (auto& c : contacts_) {
      c.ra = c.p - bodies_[c.a].x;
      c.rb = c.b == kGround ? Vec3::Zero() : Vec3(c.p - bodies_[c.b].x);
      c.t1 = std::abs(c.n.x()) < 0.57 ? c.n.cross(Vec3::UnitX()).normalized() : c.n.cross(Vec3::UnitY()).normalized();
      c.t2 = c.n.cross(c.t1);
      auto eff = [&](const Vec3& d) {
        double k = inv_mass_along(c.a, c.ra, d) + inv_mass_along(c.b, c.rb, d);
        return k > 0.0 ? 1.0 / k : 0.0;
      };
      c.mn = eff(c.n);
      c.mt1 = eff(c.t1);
      c.mt2 = eff(c.t2);
      c.target = c.sep > 0.0 ? -c.sep / dt : 0.0;
      c.bias = std::min(params_.baumgarte * std::max(-c.sep - params_.slop, 0.0) / dt, params_.max_correction);
      auto it = warm_.find(WarmKey{c.a, c.b, c.key});
      if (it != warm_.end()) {
        c.ln = it->second.ln;
        c.lt1 = it->second.friction.dot(c.t1);
        c.lt2 = it->second.friction.dot(c.t2);
        Vec3 impulse = c.ln * c.n + c.lt1 * c.t1 + c.lt2 * c.t2;
        apply(c.a, c.ra, impulse);
        apply(c.b, c.rb, -impulse);
      }
    }
  }

  void solve(Contact& c) {
    auto rel = [&]() -> Vec3 { return velocity_at(c.a, c.ra) - velocity_at(c.b, c.rb); };
    // Friction first so the normal row has the last word on penetration.
    double limit = params_.friction * c.ln;
    for (int k = 0; k < 2; ++k) {
      const Vec3& t = k ? c.t2 : c.t1;
      double& acc = k ? c.lt2 : c.lt1;
      double m = k ? c.mt2 : c.mt1;
      double dl = -m * rel().dot(t);
      double next = std::clamp(acc + dl, -limit, limit);
      dl = next - acc;
      acc = next;
      apply(c.a, c.ra, dl * t);
      apply(c.b, c.rb, -dl * t);
    }
    double vn = rel().dot(c.n);
    double dl = c.mn * (c.target - vn);
    double next = std::max(c.ln + dl, 0.0);
    dl = next - c.ln;
    c.ln = next;
    apply(c.a, c.ra, dl * c.n);
    apply(c.b, c.rb, -dl * c.n);
  }

  void solve_position(Contact& c) {
    if (c.bias <= 0.0) return;
    auto pvel = [&](std::uint32_t i, const Vec3& r) -> Vec3 {
      if (!dynamic(i)) return Vec3::Zero();
      const Body& b = bodies_[i];
      return b.pv + b.pw.cross(r);
    };
    double vn = (pvel(c.a, c.ra) - pvel(c.b, c.rb)).dot(c.n);
    double next = std::max(c.lp + c.mn * (c.bias - vn), 0.0);
    double dl = next - c.lp;
    c.lp = next;
    apply_pseudo(c.a, c.ra, dl * c.n);
    apply_pseudo(c.b, c.rb, -dl * c.n);
  }

  void apply_pseudo(std::uint32_t i, const Vec3& r, const Vec3& impulse) {
    if (!dynamic(i)) return;
    Body& b = bodies_[i];
    b.pv += b.inv_mass * impulse;
    b.pw += b.inv_inertia_world * r.cross(impulse);
  }

  void save_warm_start() {
    warm_.clear();
    for (const auto& c : contacts_)
      if (c.ln > 0.0) warm_[WarmKey{c.a, c.b, c.key}] = WarmValue{c.ln, c.lt1 * c.t1 + c.lt2 * c.t2};
  }

  SimParams params_;
  double ground_z_;
  std::vector<ConvexProxy> proxies_;
  std::vector<Body> bodies_;
  std::vector<Contact> contacts_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs_;
  std::unordered_map<WarmKey, WarmValue, WarmHash> warm_;
};

}  // namespace stackcount::simlab
