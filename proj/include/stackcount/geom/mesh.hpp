#pragma once

#include "stackcount/common.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stackcount::geom {

struct AABB {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  AABB() = default;
  AABB(const Vec3& lo, const Vec3& hi) : min(lo), max(hi) {
    if ((lo.array() > hi.array()).any()) throw DataError("AABB: min exceeds max");
  }

  bool empty() const { return (min.array() > max.array()).any(); }
  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void expand(const AABB& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  Vec3 extent() const { return empty() ? Vec3::Zero() : Vec3(max - min); }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const {
    Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
  bool intersects(const AABB& o) const {
    return (min.array() <= o.max.array()).all() && (o.min.array() <= max.array()).all();
  }
  AABB inflated(double r) const {
    AABB b = *this;
    b.min.array() -= r;
    b.max.array() += r;
    return b;
  }
  int longest_axis() const {
    Vec3 e = extent();
    int a = 0;
    if (e.y() > e[a]) a = 1;
    if (e.z() > e[a]) a = 2;
    return a;
  }
};

// Rigid transform applied as R * p + t.
struct RigidPose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  RigidPose() = default;
  RigidPose(const Quat& q, const Vec3& t) : rotation(q), translation(t) {
    if (std::abs(q.norm() - 1.0) > 1e-9) throw DataError("RigidPose: quaternion is not unit length");
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.conjugate() * (p - translation); }
  RigidPose inverse() const {
    Quat qi = rotation.conjugate();
    return RigidPose(qi, -(qi * translation));
  }
  RigidPose operator*(const RigidPose& o) const { return RigidPose(rotation * o.rotation, rotation * o.translation + translation); }
};

using Triangle = std::array<std::uint32_t, 3>;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }

  AABB bounds() const {
    AABB b;
    for (const auto& v : vertices) b.expand(v);
    return b;
  }

  Vec3 corner(std::size_t tri, int k) const { return vertices[triangles[tri][k]]; }

  double triangle_area(std::size_t tri) const {
    return 0.5 * (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0)).norm();
  }

  // Throws when indices are out of range.
  void validate_indices() const {
    for (std::size_t i = 0; i < triangles.size(); ++i)
      for (auto idx : triangles[i])
        if (idx >= vertices.size())
          throw DataError("triangle " + std::to_string(i) + " references vertex " + std::to_string(idx) +
                          " of " + std::to_string(vertices.size()));
  }

  void append(const TriMesh& other) {
    auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (auto t : other.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
};

inline TriMesh transformed(const TriMesh& mesh, const RigidPose& pose) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = pose.apply(v);
  return out;
}

inline TriMesh scaled(const TriMesh& mesh, double s) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v *= s;
  return out;
}

inline TriMesh translated(const TriMesh& mesh, const Vec3& t) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v += t;
  return out;
}

inline TriMesh flipped(const TriMesh& mesh) {
  TriMesh out = mesh;
  for (auto& t : out.triangles) std::swap(t[1], t[2]);
  return out;
}

struct MeshCheck {
  bool watertight = false;
  std::size_t components = 0;
};

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t(a) << 32) | b; }

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

// Watertight: each directed half-edge occurs once and its twin occurs once.
// Components are counted over triangles connected through shared edges.
inline MeshCheck check_mesh(const TriMesh& mesh) {
  MeshCheck report;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> half_edges;
  half_edges.reserve(mesh.triangles.size() * 3);
  for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) half_edges.emplace_back(detail::edge_key(tri[k], tri[(k + 1) % 3]), t);
  }
  std::sort(half_edges.begin(), half_edges.end());

  bool watertight = !mesh.triangles.empty();
  detail::DisjointSet sets(mesh.triangles.size());
  for (std::size_t i = 0; i < half_edges.size(); ++i) {
    if (i + 1 < half_edges.size() && half_edges[i + 1].first == half_edges[i].first) watertight = false;
    std::uint32_t a = static_cast<std::uint32_t>(half_edges[i].first >> 32);
    std::uint32_t b = static_cast<std::uint32_t>(half_edges[i].first & 0xffffffffu);
    auto twin_key = detail::edge_key(b, a);
    auto it = std::lower_bound(half_edges.begin(), half_edges.end(), std::make_pair(twin_key, std::uint32_t{0}));
    if (it == half_edges.end() || it->first != twin_key) {
      watertight = false;
    } else {
      sets.unite(half_edges[i].second, it->second);
    }
    // Unoriented adjacency also links triangles sharing an edge the same way.
    if (i + 1 < half_edges.size() && half_edges[i + 1].first == half_edges[i].first)
      sets.unite(half_edges[i].second, half_edges[i + 1].second);
  }
  report.watertight = watertight;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    if (sets.find(t) == t) ++report.components;
  return report;
}

// Divergence-theorem volume with no topology check.
inline double signed_volume(const TriMesh& mesh) {
  double sum = 0.0;
  for (const auto& t : mesh.triangles)
    sum += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  return sum / 6.0;
}

inline double mesh_volume(const TriMesh& mesh) {
  if (!check_mesh(mesh).watertight) throw DataError("mesh_volume: mesh is not watertight");
  return signed_volume(mesh);
}

struct MassProperties {
  double volume = 0.0;
  Vec3 centroid = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  // about the centroid, unit density
};

// Second moments by signed tetrahedra from the origin (closed, outward mesh).
inline MassProperties mass_properties(const TriMesh& mesh) {
  MassProperties mp;
  double vol = 0.0;
  Vec3 first = Vec3::Zero();
  Mat3 second = Mat3::Zero();  // integral of x x^T
  Mat3 canonical;
  canonical << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  canonical /= 120.0;
  for (const auto& t : mesh.triangles) {
    Mat3 a;
    a.col(0) = mesh.vertices[t[0]];
    a.col(1) = mesh.vertices[t[1]];
    a.col(2) = mesh.vertices[t[2]];
    double det = a.determinant();
    vol += det / 6.0;
    first += det / 24.0 * (a.col(0) + a.col(1) + a.col(2));
    second += det * a * canonical * a.transpose();
  }
  if (std::abs(vol) < 1e-300) throw NumericalError("mass_properties: zero volume");
  mp.volume = vol;
  mp.centroid = first / vol;
  Mat3 c = second - vol * mp.centroid * mp.centroid.transpose();
  mp.inertia = Mat3::Identity() * c.trace() - c;
  return mp;
}

// Uniform scale and translation placing the AABB center at the origin with
// the largest extent equal to `side`.
inline TriMesh normalize_to_cube(const TriMesh& mesh, double side) {
  if (mesh.vertices.empty()) throw DataError("normalize_to_cube: empty mesh");
  AABB b = mesh.bounds();
  double extent = b.extent().maxCoeff();
  if (!(extent > 0.0)) throw DataError("normalize_to_cube: zero-extent mesh");
  double s = side / extent;
  Vec3 c = b.center();
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = (v - c) * s;
  return out;
}

// --- OBJ subset (v / f only) ---------------------------------------------

inline TriMesh parse_obj(std::istream& in, const std::string& origin = "<stream>") {
  TriMesh mesh;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) fail("malformed vertex record");
      if (!p.allFinite()) fail("non-finite vertex coordinate");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::uint32_t> poly;
      std::string tok;
      while (ls >> tok) {
        // Accept v, v/vt, v//vn, v/vt/vn; only the position index is used.
        auto slash = tok.find('/');
        std::string head = tok.substr(0, slash);
        long long idx = 0;
        try {
          std::size_t used = 0;
          idx = std::stoll(head, &used);
          if (used != head.size()) fail("malformed face index '" + tok + "'");
        } catch (const std::logic_error&) {
          fail("malformed face index '" + tok + "'");
        }
        long long n = static_cast<long long>(mesh.vertices.size());
        long long resolved = idx > 0 ? idx - 1 : (idx < 0 ? n + idx : -1);
        if (resolved < 0 || resolved >= n)
          fail("face index " + std::to_string(idx) + " out of range (" + std::to_string(n) + " vertices defined)");
        poly.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (poly.size() < 3) fail("face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
    }
    // Other records (vn, vt, o, g, s, usemtl, mtllib) are ignored.
  }
  return mesh;
}

inline TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open OBJ file " + path.string());
  return parse_obj(in, path.string());
}

inline void write_obj(std::ostream& out, const TriMesh& mesh) {
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write OBJ file " + path.string());
  write_obj(out, mesh);
}

}  // namespace stackcount::geom
