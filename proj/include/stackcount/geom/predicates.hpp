#pragma once

// Orientation and in-sphere tests: floating-point filter with an exact
// rational fallback for near-degenerate configurations.

#include "stackcount/common.hpp"

#include <gmpxx.h>

namespace stackcount::geom::predicates {

namespace detail {

inline double det3(double a0, double a1, double a2, double b0, double b1, double b2, double c0, double c1, double c2) {
  return a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0);
}

inline mpq_class det3q(const mpq_class* a, const mpq_class* b, const mpq_class* c) {
  return a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
}

inline int sign(double x) { return (x > 0.0) - (x < 0.0); }
inline int sign(const mpq_class& x) { return sgn(x); }

}  // namespace detail

// Sign of det[b-a; c-a; d-a]: positive when d lies on the side of plane
// (a, b, c) that (b-a) x (c-a) points to.
inline int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  Vec3 u = b - a, v = c - a, w = d - a;
  double det = detail::det3(u.x(), u.y(), u.z(), v.x(), v.y(), v.z(), w.x(), w.y(), w.z());
  Vec3 au = u.cwiseAbs(), av = v.cwiseAbs(), aw = w.cwiseAbs();
  double perm = au.x() * (av.y() * aw.z() + av.z() * aw.y()) + au.y() * (av.x() * aw.z() + av.z() * aw.x()) +
                au.z() * (av.x() * aw.y() + av.y() * aw.x());
  if (std::abs(det) > 1e-14 * perm) return detail::sign(det);
  mpq_class q[3][3];
  for (int i = 0; i < 3; ++i) {
    q[0][i] = mpq_class(b[i]) - mpq_class(a[i]);
    q[1][i] = mpq_class(c[i]) - mpq_class(a[i]);
    q[2][i] = mpq_class(d[i]) - mpq_class(a[i]);
  }
  return detail::sign(detail::det3q(q[0], q[1], q[2]));
}

// Positive when e lies strictly inside the circumsphere of the positively
// oriented tetrahedron (a, b, c, d); zero when cospherical.
inline int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  const Vec3 r[4] = {a - e, b - e, c - e, d - e};
  double lift[4], alift[4];
  for (int k = 0; k < 4; ++k) {
    lift[k] = r[k].squaredNorm();
    alift[k] = lift[k];
  }
  auto minor = [&](int i, int j, int k) {
    return detail::det3(r[i].x(), r[i].y(), r[i].z(), r[j].x(), r[j].y(), r[j].z(), r[k].x(), r[k].y(), r[k].z());
  };
  auto pminor = [&](int i, int j, int k) {
    Vec3 x = r[i].cwiseAbs(), y = r[j].cwiseAbs(), z = r[k].cwiseAbs();
    return x.x() * (y.y() * z.z() + y.z() * z.y()) + x.y() * (y.x() * z.z() + y.z() * z.x()) +
           x.z() * (y.x() * z.y() + y.y() * z.x());
  };
  double det = -lift[0] * minor(1, 2, 3) + lift[1] * minor(0, 2, 3) - lift[2] * minor(0, 1, 3) + lift[3] * minor(0, 1, 2);
  double perm = alift[0] * pminor(1, 2, 3) + alift[1] * pminor(0, 2, 3) + alift[2] * pminor(0, 1, 3) +
                alift[3] * pminor(0, 1, 2);
  int s;
  if (std::abs(det) > 1e-12 * perm) {
    s = detail::sign(det);
  } else {
    mpq_class q[4][3], l[4];
    const Vec3* p[4] = {&a, &b, &c, &d};
    for (int k = 0; k < 4; ++k) {
      for (int i = 0; i < 3; ++i) q[k][i] = mpq_class((*p[k])[i]) - mpq_class(e[i]);
      l[k] = q[k][0] * q[k][0] + q[k][1] * q[k][1] + q[k][2] * q[k][2];
    }
    mpq_class exact = -l[0] * detail::det3q(q[1], q[2], q[3]) + l[1] * detail::det3q(q[0], q[2], q[3]) -
                      l[2] * detail::det3q(q[0], q[1], q[3]) + l[3] * detail::det3q(q[0], q[1], q[2]);
    s = detail::sign(exact);
  }
  // For this row layout, inside corresponds to a negative determinant when
  // the tetrahedron is positively oriented.
  return -s;
}

}  // namespace stackcount::geom::predicates
