#include "apcsim/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

namespace apcsim {

namespace {
constexpr double kEps = 1e-12;
}

double angular_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  double d = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
  return 2.0 * std::acos(d);
}

Eigen::Vector3d rotation_error(const Eigen::Quaterniond& from, const Eigen::Quaterniond& to) {
  Eigen::Quaterniond q = to * from.conjugate();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  Eigen::AngleAxisd aa(q);
  return aa.angle() * aa.axis();
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "box") return ShapeKind::Box;
  if (s == "cylinder") return ShapeKind::Cylinder;
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "cone") return ShapeKind::Cone;
  if (s == "plane_patch") return ShapeKind::PlanePatch;
  if (s == "capsule") return ShapeKind::Capsule;
  throw ParseError("unknown shape kind: " + s);
}

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::PlanePatch: return "plane_patch";
    case ShapeKind::Capsule: return "capsule";
  }
  return "?";
}

void PrimitiveShape::validate() const {
  local_pose.validate();
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  switch (kind) {
    case ShapeKind::Box:
      if (!positive(dims.x()) || !positive(dims.y()) || !positive(dims.z()))
        throw ValidationError("box dimensions must be positive");
      break;
    case ShapeKind::Cylinder:
    case ShapeKind::Cone:
    case ShapeKind::Capsule:
      if (!positive(dims.x()) || !positive(dims.y()))
        throw ValidationError(to_string(kind) + " needs positive radius and height");
      break;
    case ShapeKind::Sphere:
      if (!positive(dims.x())) throw ValidationError("sphere needs positive radius");
      break;
    case ShapeKind::PlanePatch:
      if (!positive(dims.x()) || !positive(dims.y()))
        throw ValidationError("plane patch needs finite positive extents");
      break;
  }
}

double PrimitiveShape::volume() const {
  switch (kind) {
    case ShapeKind::Box: return dims.x() * dims.y() * dims.z();
    case ShapeKind::Cylinder: return M_PI * dims.x() * dims.x() * dims.y();
    case ShapeKind::Sphere: return 4.0 / 3.0 * M_PI * std::pow(dims.x(), 3);
    case ShapeKind::Cone: return M_PI * dims.x() * dims.x() * dims.y() / 3.0;
    case ShapeKind::PlanePatch: return 0.0;
    case ShapeKind::Capsule:
      return M_PI * dims.x() * dims.x() * dims.y() + 4.0 / 3.0 * M_PI * std::pow(dims.x(), 3);
  }
  return 0.0;
}

double PrimitiveShape::surface_area() const {
  switch (kind) {
    case ShapeKind::Box:
      return 2.0 * (dims.x() * dims.y() + dims.y() * dims.z() + dims.x() * dims.z());
    case ShapeKind::Cylinder:
      return 2.0 * M_PI * dims.x() * dims.y() + 2.0 * M_PI * dims.x() * dims.x();
    case ShapeKind::Sphere: return 4.0 * M_PI * dims.x() * dims.x();
    case ShapeKind::Cone: {
      double slant = std::hypot(dims.x(), dims.y());
      return M_PI * dims.x() * slant + M_PI * dims.x() * dims.x();
    }
    case ShapeKind::PlanePatch: return 2.0 * dims.x() * dims.y();  // both sides
    case ShapeKind::Capsule:
      return 2.0 * M_PI * dims.x() * dims.y() + 4.0 * M_PI * dims.x() * dims.x();
  }
  return 0.0;
}

double PrimitiveShape::bounding_radius() const {
  switch (kind) {
    case ShapeKind::Box: return 0.5 * dims.norm();
    case ShapeKind::Cylinder: return std::hypot(dims.x(), 0.5 * dims.y());
    case ShapeKind::Sphere: return dims.x();
    case ShapeKind::Cone: return std::max(std::hypot(dims.x(), 0.5 * dims.y()), 0.5 * dims.y());
    case ShapeKind::PlanePatch: return 0.5 * std::hypot(dims.x(), dims.y());
    case ShapeKind::Capsule: return 0.5 * dims.y() + dims.x();
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// support / AABB
// ---------------------------------------------------------------------------

namespace {

Eigen::Vector3d support_local(const PrimitiveShape& s, const Eigen::Vector3d& d) {
  switch (s.kind) {
    case ShapeKind::Box:
      return {std::copysign(0.5 * s.dims.x(), d.x()), std::copysign(0.5 * s.dims.y(), d.y()),
              std::copysign(0.5 * s.dims.z(), d.z())};
    case ShapeKind::Sphere: {
      double n = d.norm();
      if (n < kEps) return {s.dims.x(), 0, 0};
      return s.dims.x() / n * d;
    }
    case ShapeKind::Cylinder: {
      Eigen::Vector2d xy(d.x(), d.y());
      double n = xy.norm();
      Eigen::Vector2d radial = n < kEps ? Eigen::Vector2d(s.dims.x(), 0) : Eigen::Vector2d(s.dims.x() / n * xy);
      return {radial.x(), radial.y(), std::copysign(0.5 * s.dims.y(), d.z())};
    }
    case ShapeKind::Cone: {
      Eigen::Vector3d apex(0, 0, 0.5 * s.dims.y());
      Eigen::Vector2d xy(d.x(), d.y());
      double n = xy.norm();
      Eigen::Vector2d radial = n < kEps ? Eigen::Vector2d(s.dims.x(), 0) : Eigen::Vector2d(s.dims.x() / n * xy);
      Eigen::Vector3d rim(radial.x(), radial.y(), -0.5 * s.dims.y());
      return d.dot(apex) >= d.dot(rim) ? apex : rim;
    }
    case ShapeKind::PlanePatch:
      return {std::copysign(0.5 * s.dims.x(), d.x()), std::copysign(0.5 * s.dims.y(), d.y()), 0.0};
    case ShapeKind::Capsule: {
      Eigen::Vector3d dn = d.norm() < kEps ? Eigen::Vector3d(1, 0, 0) : d.normalized();
      return s.dims.x() * dn + Eigen::Vector3d(0, 0, std::copysign(0.5 * s.dims.y(), d.z()));
    }
  }
  return Eigen::Vector3d::Zero();
}

}  // namespace

Eigen::Vector3d support_point(const PlacedShape& s, const Eigen::Vector3d& dir) {
  Eigen::Vector3d local_dir = s.world.linear().transpose() * dir;
  return s.world * support_local(s.shape, local_dir);
}

PlacedShape PlacedShape::make(const PrimitiveShape& s, const Eigen::Isometry3d& item_to_world) {
  PlacedShape p;
  p.shape = s;
  p.world = item_to_world * s.local_pose.isometry();
  // support extremes per axis bound the shape exactly
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d axis = Eigen::Vector3d::Unit(i);
    p.aabb.hi[i] = (p.world * support_local(s, p.world.linear().transpose() * axis))[i];
    p.aabb.lo[i] = (p.world * support_local(s, p.world.linear().transpose() * (-axis)))[i];
  }
  return p;
}

// ---------------------------------------------------------------------------
// point distance (signed, local closed forms)
// ---------------------------------------------------------------------------

namespace {

double point_distance_local(const PrimitiveShape& s, const Eigen::Vector3d& p) {
  switch (s.kind) {
    case ShapeKind::Box: {
      Eigen::Vector3d q = p.cwiseAbs() - 0.5 * s.dims;
      double outside = q.cwiseMax(0.0).norm();
      double inside = std::min(q.maxCoeff(), 0.0);
      return outside + inside;
    }
    case ShapeKind::Sphere:
      return p.norm() - s.dims.x();
    case ShapeKind::Capsule: {
      double hl = 0.5 * s.dims.y();
      double z = std::clamp(p.z(), -hl, hl);
      return (p - Eigen::Vector3d(0, 0, z)).norm() - s.dims.x();
    }
    case ShapeKind::Cylinder: {
      double rho = std::hypot(p.x(), p.y());
      Eigen::Vector2d q(rho - s.dims.x(), std::abs(p.z()) - 0.5 * s.dims.y());
      double outside = q.cwiseMax(0.0).norm();
      double inside = std::min(q.maxCoeff(), 0.0);
      return outside + inside;
    }
    case ShapeKind::Cone: {
      // meridian plane: boundary is the slant edge plus the base edge
      double rho = std::hypot(p.x(), p.y());
      double z = p.z();
      double r = s.dims.x(), h = s.dims.y();
      Eigen::Vector2d q(rho, z);
      Eigen::Vector2d apex(0, 0.5 * h), rim(r, -0.5 * h), base0(0, -0.5 * h);
      auto seg_dist = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& x) {
        Eigen::Vector2d ab = b - a;
        double t = std::clamp((x - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        return (x - (a + t * ab)).norm();
      };
      double d = std::min(seg_dist(apex, rim, q), seg_dist(rim, base0, q));
      bool inside = z >= -0.5 * h && z <= 0.5 * h && rho <= r * (0.5 * h - z) / h;
      return inside ? -d : d;
    }
    case ShapeKind::PlanePatch: {
      Eigen::Vector3d c(std::clamp(p.x(), -0.5 * s.dims.x(), 0.5 * s.dims.x()),
                        std::clamp(p.y(), -0.5 * s.dims.y(), 0.5 * s.dims.y()), 0.0);
      return (p - c).norm();
    }
  }
  return 0.0;
}

/// Closest point on the shape boundary to p, local frame (for swept-pair formulas).
Eigen::Vector3d closest_surface_point_local(const PrimitiveShape& s, const Eigen::Vector3d& p) {
  switch (s.kind) {
    case ShapeKind::Box: {
      Eigen::Vector3d h = 0.5 * s.dims;
      Eigen::Vector3d c = p.cwiseMax(-h).cwiseMin(h);
      if ((c - p).norm() > kEps) return c;  // p outside
      // p inside: push to nearest face
      int axis = 0;
      double best = 1e30;
      for (int i = 0; i < 3; ++i) {
        double d = h[i] - std::abs(p[i]);
        if (d < best) {
          best = d;
          axis = i;
        }
      }
      c = p;
      c[axis] = std::copysign(h[axis], p[axis] == 0.0 ? 1.0 : p[axis]);
      return c;
    }
    case ShapeKind::Sphere: {
      double n = p.norm();
      if (n < kEps) return {s.dims.x(), 0, 0};
      return s.dims.x() / n * p;
    }
    case ShapeKind::Capsule: {
      double hl = 0.5 * s.dims.y();
      Eigen::Vector3d axis_pt(0, 0, std::clamp(p.z(), -hl, hl));
      Eigen::Vector3d dir = p - axis_pt;
      if (dir.norm() < kEps) dir = Eigen::Vector3d(1, 0, 0);
      return axis_pt + s.dims.x() * dir.normalized();
    }
    default: {
      // generic: gradient of the signed distance via central differences
      double h = 1e-7;
      Eigen::Vector3d g;
      for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        e[i] = h;
        g[i] = (point_distance_local(s, p + e) - point_distance_local(s, p - e)) / (2 * h);
      }
      if (g.norm() < kEps) return p;
      return p - point_distance_local(s, p) * g.normalized();
    }
  }
}

}  // namespace

double point_distance(const PlacedShape& s, const Eigen::Vector3d& p) {
  return point_distance_local(s.shape, s.world.inverse() * p);
}

// ---------------------------------------------------------------------------
// GJK distance + directional penetration depth
// ---------------------------------------------------------------------------

namespace {

struct SupportVertex {
  Eigen::Vector3d w, a, b;
};

SupportVertex minkowski_support(const PlacedShape& sa, const PlacedShape& sb, const Eigen::Vector3d& d) {
  SupportVertex v;
  v.a = support_point(sa, d);
  v.b = support_point(sb, -d);
  v.w = v.a - v.b;
  return v;
}

/// Closest point to the origin on the simplex; reduces the simplex to the
/// supporting sub-simplex and returns barycentric weights for it.
Eigen::Vector3d closest_on_simplex(std::vector<SupportVertex>& simplex, std::vector<double>& lambdas) {
  auto bary2 = [&](int i, int j) {
    const Eigen::Vector3d& a = simplex[i].w;
    const Eigen::Vector3d& b = simplex[j].w;
    Eigen::Vector3d ab = b - a;
    double t = ab.squaredNorm() < kEps ? 0.0 : std::clamp(-a.dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return std::pair<Eigen::Vector3d, double>(a + t * ab, t);
  };

  if (simplex.size() == 1) {
    lambdas = {1.0};
    return simplex[0].w;
  }
  if (simplex.size() == 2) {
    auto [p, t] = bary2(0, 1);
    if (t <= 0.0) {
      simplex = {simplex[0]};
      lambdas = {1.0};
    } else if (t >= 1.0) {
      simplex = {simplex[1]};
      lambdas = {1.0};
    } else {
      lambdas = {1.0 - t, t};
    }
    return p;
  }

  auto closest_triangle = [&](int ia, int ib, int ic, Eigen::Vector3d& point, std::array<double, 3>& l,
                              std::array<int, 3>& keep, int& nkeep) {
    const Eigen::Vector3d &a = simplex[ia].w, &b = simplex[ib].w, &c = simplex[ic].w;
    Eigen::Vector3d ab = b - a, ac = c - a, ap = -a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) {
      point = a; l = {1, 0, 0}; keep = {ia, -1, -1}; nkeep = 1; return;
    }
    Eigen::Vector3d bp = -b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) {
      point = b; l = {0, 1, 0}; keep = {ib, -1, -1}; nkeep = 1; return;
    }
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
      double t = d1 / (d1 - d3);
      point = a + t * ab; l = {1 - t, t, 0}; keep = {ia, ib, -1}; nkeep = 2; return;
    }
    Eigen::Vector3d cp = -c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) {
      point = c; l = {0, 0, 1}; keep = {ic, -1, -1}; nkeep = 1; return;
    }
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
      double t = d2 / (d2 - d6);
      point = a + t * ac; l = {1 - t, 0, t}; keep = {ia, ic, -1}; nkeep = 2; return;
    }
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
      double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
      point = b + t * (c - b); l = {0, 1 - t, t}; keep = {ib, ic, -1}; nkeep = 2; return;
    }
    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    point = a + ab * v + ac * w;
    l = {1 - v - w, v, w};
    keep = {ia, ib, ic};
    nkeep = 3;
  };

  if (simplex.size() == 3) {
    Eigen::Vector3d point;
    std::array<double, 3> l;
    std::array<int, 3> keep;
    int nkeep;
    closest_triangle(0, 1, 2, point, l, keep, nkeep);
    std::vector<SupportVertex> ns;
    std::vector<double> nl;
    for (int i = 0; i < nkeep; ++i) {
      ns.push_back(simplex[keep[i]]);
    }
    // lambdas re-derived for the kept sub-simplex
    if (nkeep == 3)
      nl = {l[0], l[1], l[2]};
    else if (nkeep == 1)
      nl = {1.0};
    else {
      // recompute on the segment
      simplex = ns;
      return closest_on_simplex(simplex, lambdas);
    }
    simplex = ns;
    lambdas = nl;
    return point;
  }

  // tetrahedron: test each face, keep the closest feature; origin inside if
  // on the inner side of all faces
  const Eigen::Vector3d &a = simplex[0].w, &b = simplex[1].w, &c = simplex[2].w, &d = simplex[3].w;
  auto outside = [&](const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2,
                     const Eigen::Vector3d& other) {
    Eigen::Vector3d n = (p1 - p0).cross(p2 - p0);
    double sign_other = n.dot(other - p0);
    double sign_origin = n.dot(-p0);
    return sign_other * sign_origin < 0.0 || std::abs(sign_other) < kEps;
  };
  bool out_abc = outside(a, b, c, d);
  bool out_abd = outside(a, b, d, c);
  bool out_acd = outside(a, c, d, b);
  bool out_bcd = outside(b, c, d, a);
  if (!out_abc && !out_abd && !out_acd && !out_bcd) {
    lambdas = {0.25, 0.25, 0.25, 0.25};
    return Eigen::Vector3d::Zero();  // origin enclosed
  }
  double best = 1e30;
  std::vector<SupportVertex> best_simplex;
  std::vector<double> best_l;
  Eigen::Vector3d best_p = Eigen::Vector3d::Zero();
  auto consider = [&](int i, int j, int k) {
    std::vector<SupportVertex> tri = {simplex[i], simplex[j], simplex[k]};
    std::vector<double> l;
    std::vector<SupportVertex> reduced = tri;
    Eigen::Vector3d p = closest_on_simplex(reduced, l);
    if (p.squaredNorm() < best) {
      best = p.squaredNorm();
      best_simplex = reduced;
      best_l = l;
      best_p = p;
    }
  };
  if (out_abc) consider(0, 1, 2);
  if (out_abd) consider(0, 1, 3);
  if (out_acd) consider(0, 2, 3);
  if (out_bcd) consider(1, 2, 3);
  simplex = best_simplex;
  lambdas = best_l;
  return best_p;
}

struct GjkResult {
  bool intersecting = false;
  double distance = 0.0;
  Eigen::Vector3d point_a{Eigen::Vector3d::Zero()};
  Eigen::Vector3d point_b{Eigen::Vector3d::Zero()};
};

GjkResult gjk_distance(const PlacedShape& sa, const PlacedShape& sb) {
  GjkResult res;
  Eigen::Vector3d d0 = sb.aabb.center() - sa.aabb.center();
  if (d0.squaredNorm() < kEps) d0 = Eigen::Vector3d(1, 0, 0);
  std::vector<SupportVertex> simplex = {minkowski_support(sa, sb, d0)};
  std::vector<double> lambdas = {1.0};

  for (int iter = 0; iter < 96; ++iter) {
    Eigen::Vector3d v = closest_on_simplex(simplex, lambdas);
    double vnorm = v.norm();
    if (vnorm < 1e-10 || simplex.size() == 4) {
      res.intersecting = true;
      return res;
    }
    SupportVertex w = minkowski_support(sa, sb, -v);
    double progress = vnorm * vnorm - v.dot(w.w);
    if (progress <= 1e-12 * std::max(1.0, vnorm * vnorm) || iter == 95) {
      res.distance = vnorm;
      res.point_a.setZero();
      res.point_b.setZero();
      for (size_t i = 0; i < simplex.size(); ++i) {
        res.point_a += lambdas[i] * simplex[i].a;
        res.point_b += lambdas[i] * simplex[i].b;
      }
      return res;
    }
    simplex.push_back(w);
  }
  res.intersecting = true;
  return res;
}

/// Penetration depth by minimising the Minkowski-difference support height
/// over directions: exact for polytope pairs (their separating axes are in
/// the candidate set), refined by spherical pattern search otherwise.
double penetration_depth(const PlacedShape& sa, const PlacedShape& sb, Eigen::Vector3d* dir_out,
                         Eigen::Vector3d* pa_out, Eigen::Vector3d* pb_out) {
  auto height = [&](const Eigen::Vector3d& d) {
    return d.dot(support_point(sa, d)) - d.dot(support_point(sb, -d));
  };

  std::vector<Eigen::Vector3d> candidates;
  auto add = [&](Eigen::Vector3d v) {
    double n = v.norm();
    if (n > 1e-9) candidates.push_back(v / n);
  };
  for (int i = 0; i < 3; ++i) {
    add(sa.world.linear().col(i));
    add(-sa.world.linear().col(i));
    add(sb.world.linear().col(i));
    add(-sb.world.linear().col(i));
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d c = sa.world.linear().col(i).cross(sb.world.linear().col(j));
      add(c);
      add(-c);
    }
  add(sb.world.translation() - sa.world.translation());
  add(sa.world.translation() - sb.world.translation());
  // icosahedron vertices for curved-shape coverage
  double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> ico = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                                      {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                                      {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : ico) {
    add(v);
    add(-v);
  }

  Eigen::Vector3d best_d = candidates.front();
  double best_h = height(best_d);
  for (const auto& d : candidates) {
    double h = height(d);
    if (h < best_h) {
      best_h = h;
      best_d = d;
    }
  }

  // local refinement on the direction sphere
  double step = 0.35;
  for (int iter = 0; iter < 80 && step > 1e-9; ++iter) {
    Eigen::Vector3d u = best_d.unitOrthogonal();
    Eigen::Vector3d v = best_d.cross(u);
    bool improved = false;
    const Eigen::Vector3d dirs[4] = {u, -u, v, -v};
    for (const Eigen::Vector3d& t : dirs) {
      Eigen::Vector3d d = (best_d + step * t).normalized();
      double h = height(d);
      if (h < best_h - 1e-15) {
        best_h = h;
        best_d = d;
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }

  if (dir_out) *dir_out = best_d;
  if (pa_out) *pa_out = support_point(sa, best_d);
  if (pb_out) *pb_out = support_point(sb, -best_d);
  return std::max(best_h, 0.0);
}

bool swept_form(const PlacedShape& s, Eigen::Vector3d& p0, Eigen::Vector3d& p1, double& radius) {
  if (s.shape.kind == ShapeKind::Sphere) {
    p0 = p1 = s.world.translation();
    radius = s.shape.dims.x();
    return true;
  }
  if (s.shape.kind == ShapeKind::Capsule) {
    double hl = 0.5 * s.shape.dims.y();
    p0 = s.world * Eigen::Vector3d(0, 0, -hl);
    p1 = s.world * Eigen::Vector3d(0, 0, hl);
    radius = s.shape.dims.x();
    return true;
  }
  return false;
}

double segment_segment_distance(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1, const Eigen::Vector3d& p2,
                                const Eigen::Vector3d& q2, Eigen::Vector3d& c1, Eigen::Vector3d& c2) {
  Eigen::Vector3d d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s, t;
  if (a <= kEps && e <= kEps) {
    s = t = 0.0;
  } else if (a <= kEps) {
    s = 0.0;
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    double c = d1.dot(r);
    if (e <= kEps) {
      t = 0.0;
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      double b = d1.dot(d2), denom = a * e - b * b;
      s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  c1 = p1 + s * d1;
  c2 = p2 + t * d2;
  return (c1 - c2).norm();
}

/// Min distance from a segment to a convex shape boundary; the shape's point
/// distance is convex in space, so distance along the segment is unimodal.
double segment_shape_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const PlacedShape& s,
                              double& t_best) {
  auto f = [&](double t) { return point_distance(s, a + t * (b - a)); };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 64; ++i) {
    double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (f(m1) <= f(m2))
      hi = m2;
    else
      lo = m1;
  }
  t_best = 0.5 * (lo + hi);
  double d = f(t_best);
  double d0 = f(0.0), d1 = f(1.0);
  if (d0 < d) {
    d = d0;
    t_best = 0.0;
  }
  if (d1 < d) {
    d = d1;
    t_best = 1.0;
  }
  return d;
}

}  // namespace

PairResult shape_distance(const PlacedShape& a, const PlacedShape& b) {
  PairResult out;

  Eigen::Vector3d pa0, pa1, pb0, pb1;
  double ra, rb;
  bool a_swept = swept_form(a, pa0, pa1, ra);
  bool b_swept = swept_form(b, pb0, pb1, rb);

  if (a_swept && b_swept) {
    Eigen::Vector3d c1, c2;
    double core = segment_segment_distance(pa0, pa1, pb0, pb1, c1, c2);
    double d = core - ra - rb;
    Eigen::Vector3d n = core > kEps ? ((c2 - c1) / core).eval() : Eigen::Vector3d(0, 0, 1);
    out.point_a = c1 + ra * n;
    out.point_b = c2 - rb * n;
    if (d >= 0.0)
      out.distance = d;
    else
      out.penetration = -d;
    return out;
  }
  if (a_swept || b_swept) {
    const PlacedShape& swept = a_swept ? a : b;
    const PlacedShape& other = a_swept ? b : a;
    Eigen::Vector3d s0, s1;
    double r;
    swept_form(swept, s0, s1, r);
    double t;
    double core = segment_shape_distance(s0, s1, other, t);
    double d = core - r;
    Eigen::Vector3d cp = s0 + t * (s1 - s0);
    Eigen::Vector3d on_other = other.world * closest_surface_point_local(other.shape, other.world.inverse() * cp);
    Eigen::Vector3d n = (on_other - cp).norm() > kEps ? (on_other - cp).normalized() : Eigen::Vector3d(0, 0, 1);
    Eigen::Vector3d on_swept = cp + r * n;
    out.point_a = a_swept ? on_swept : on_other;
    out.point_b = a_swept ? on_other : on_swept;
    if (core >= 0.0 && d >= 0.0) {
      out.distance = d;
    } else if (core >= 0.0) {
      out.penetration = -d;  // core outside, swept surface overlapping
    } else {
      out.penetration = r - core;  // core inside the other shape
    }
    return out;
  }

  GjkResult g = gjk_distance(a, b);
  if (!g.intersecting) {
    out.distance = g.distance;
    out.point_a = g.point_a;
    out.point_b = g.point_b;
    return out;
  }
  Eigen::Vector3d dir, wa, wb;
  out.penetration = penetration_depth(a, b, &dir, &wa, &wb);
  out.point_a = wa;
  out.point_b = wb;
  return out;
}

// ---------------------------------------------------------------------------
// ray casting
// ---------------------------------------------------------------------------

namespace {

std::optional<double> ray_hit_local(const PrimitiveShape& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  auto quadratic = [](double a, double b, double c) -> std::optional<std::pair<double, double>> {
    double disc = b * b - 4 * a * c;
    if (disc < 0 || std::abs(a) < kEps) return std::nullopt;
    double sq = std::sqrt(disc);
    return std::make_pair((-b - sq) / (2 * a), (-b + sq) / (2 * a));
  };
  double best = std::numeric_limits<double>::infinity();
  auto keep = [&](double t) {
    if (t >= 0.0 && t < best) best = t;
  };

  switch (s.kind) {
    case ShapeKind::Box: {
      Eigen::Vector3d h = 0.5 * s.dims;
      double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < kEps) {
          if (std::abs(o[i]) > h[i]) return std::nullopt;
          continue;
        }
        double ta = (-h[i] - o[i]) / d[i], tb = (h[i] - o[i]) / d[i];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
      }
      if (t1 < 0) return std::nullopt;
      return t0 >= 0 ? t0 : t1;
    }
    case ShapeKind::Sphere: {
      auto r = quadratic(d.squaredNorm(), 2 * o.dot(d), o.squaredNorm() - s.dims.x() * s.dims.x());
      if (!r) return std::nullopt;
      keep(r->first);
      keep(r->second);
      break;
    }
    case ShapeKind::Cylinder: {
      double rad = s.dims.x(), hl = 0.5 * s.dims.y();
      auto r = quadratic(d.x() * d.x() + d.y() * d.y(), 2 * (o.x() * d.x() + o.y() * d.y()),
                         o.x() * o.x() + o.y() * o.y() - rad * rad);
      if (r) {
        for (double t : {r->first, r->second})
          if (t >= 0 && std::abs(o.z() + t * d.z()) <= hl) keep(t);
      }
      for (double zc : {-hl, hl}) {
        if (std::abs(d.z()) < kEps) continue;
        double t = (zc - o.z()) / d.z();
        if (t >= 0) {
          Eigen::Vector3d p = o + t * d;
          if (p.x() * p.x() + p.y() * p.y() <= rad * rad) keep(t);
        }
      }
      break;
    }
    case ShapeKind::Cone: {
      double rad = s.dims.x(), h = s.dims.y();
      Eigen::Vector3d apex(0, 0, 0.5 * h);
      double k = rad / h;  // radius growth per unit below apex
      Eigen::Vector3d oo = o - apex;
      // x^2 + y^2 = k^2 (apex_z - z)^2, with z below apex
      double a = d.x() * d.x() + d.y() * d.y() - k * k * d.z() * d.z();
      double b = 2 * (oo.x() * d.x() + oo.y() * d.y() - k * k * oo.z() * d.z());
      double c = oo.x() * oo.x() + oo.y() * oo.y() - k * k * oo.z() * oo.z();
      auto r = quadratic(a, b, c);
      if (r) {
        for (double t : {r->first, r->second}) {
          if (t < 0) continue;
          double z = o.z() + t * d.z();
          if (z <= 0.5 * h && z >= -0.5 * h) keep(t);
        }
      }
      if (std::abs(d.z()) >= kEps) {
        double t = (-0.5 * h - o.z()) / d.z();
        if (t >= 0) {
          Eigen::Vector3d p = o + t * d;
          if (p.x() * p.x() + p.y() * p.y() <= rad * rad) keep(t);
        }
      }
      break;
    }
    case ShapeKind::PlanePatch: {
      if (std::abs(d.z()) < kEps) return std::nullopt;
      double t = -o.z() / d.z();
      if (t < 0) return std::nullopt;
      Eigen::Vector3d p = o + t * d;
      if (std::abs(p.x()) <= 0.5 * s.dims.x() && std::abs(p.y()) <= 0.5 * s.dims.y()) return t;
      return std::nullopt;
    }
    case ShapeKind::Capsule: {
      double rad = s.dims.x(), hl = 0.5 * s.dims.y();
      auto r = quadratic(d.x() * d.x() + d.y() * d.y(), 2 * (o.x() * d.x() + o.y() * d.y()),
                         o.x() * o.x() + o.y() * o.y() - rad * rad);
      if (r) {
        for (double t : {r->first, r->second})
          if (t >= 0 && std::abs(o.z() + t * d.z()) <= hl) keep(t);
      }
      for (double zc : {-hl, hl}) {
        Eigen::Vector3d ctr(0, 0, zc);
        Eigen::Vector3d oc = o - ctr;
        auto rs = quadratic(d.squaredNorm(), 2 * oc.dot(d), oc.squaredNorm() - rad * rad);
        if (rs) {
          keep(rs->first);
          keep(rs->second);
        }
      }
      break;
    }
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

}  // namespace

std::optional<double> ray_hit(const PlacedShape& s, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  Eigen::Isometry3d inv = s.world.inverse();
  Eigen::Vector3d o = inv * origin;
  Eigen::Vector3d d = inv.linear() * dir;
  return ray_hit_local(s.shape, o, d);
}

// ---------------------------------------------------------------------------
// surface sampling
// ---------------------------------------------------------------------------

namespace {

// canonical off-center contacts keep a seal-sized margin to the face edge
constexpr double kEdgeInset = 0.016;

void sample_rect_grid(double sx, double sy, double density, RngStream& rng,
                      const std::function<void(double, double, bool)>& emit) {
  int n = std::max(1, (int)std::lround(density * sx * sy));
  int nx = std::max(1, (int)std::lround(std::sqrt(n * sx / std::max(sy, 1e-9))));
  int ny = std::max(1, (n + nx - 1) / nx);
  // keep edge coverage on faces big enough to matter
  if (sx > 0.03) nx = std::max(nx, 2);
  if (sy > 0.03) ny = std::max(ny, 2);
  emit(0.0, 0.0, true);  // center always present
  if (0.5 * sx > kEdgeInset) {
    emit(0.5 * sx - kEdgeInset, 0.0, true);
    emit(kEdgeInset - 0.5 * sx, 0.0, true);
  }
  if (0.5 * sy > kEdgeInset) {
    emit(0.0, 0.5 * sy - kEdgeInset, true);
    emit(0.0, kEdgeInset - 0.5 * sy, true);
  }
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      double u = (i + 0.5 + 0.6 * (rng.uniform01() - 0.5)) / nx;
      double v = (j + 0.5 + 0.6 * (rng.uniform01() - 0.5)) / ny;
      emit((u - 0.5) * sx, (v - 0.5) * sy, false);
    }
}

void sample_disc(double radius, double density, RngStream& rng,
                 const std::function<void(double, double, bool)>& emit) {
  int n = std::max(5, (int)std::lround(density * M_PI * radius * radius));
  emit(0.0, 0.0, true);
  if (radius > kEdgeInset) {
    double r = radius - kEdgeInset;
    emit(r, 0.0, true);
    emit(-r, 0.0, true);
    emit(0.0, r, true);
    emit(0.0, -r, true);
  }
  // sunflower layout with jitter
  double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    double r = radius * std::sqrt((i + 0.5) / n);
    double th = i * golden + 0.3 * (rng.uniform01() - 0.5);
    emit(r * std::cos(th), r * std::sin(th), false);
  }
}

}  // namespace

std::vector<SurfaceSample> sample_surface(const PrimitiveShape& shape, double density, RngStream& rng) {
  std::vector<SurfaceSample> out;
  const double inf = std::numeric_limits<double>::infinity();

  switch (shape.kind) {
    case ShapeKind::Box: {
      Eigen::Vector3d h = 0.5 * shape.dims;
      for (int axis = 0; axis < 3; ++axis)
        for (int sign = -1; sign <= 1; sign += 2) {
          int u = (axis + 1) % 3, v = (axis + 2) % 3;
          Eigen::Vector3d normal = Eigen::Vector3d::Zero();
          normal[axis] = sign;
          sample_rect_grid(shape.dims[u], shape.dims[v], density, rng, [&](double a, double b, bool) {
            Eigen::Vector3d p = Eigen::Vector3d::Zero();
            p[axis] = sign * h[axis];
            p[u] = a;
            p[v] = b;
            double margin = std::min(h[u] - std::abs(a), h[v] - std::abs(b));
            out.push_back({p, normal, inf, margin});
          });
        }
      break;
    }
    case ShapeKind::Sphere: {
      double r = shape.dims.x();
      int n = std::max(1, (int)std::lround(density * 4.0 * M_PI * r * r));
      double golden = M_PI * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < n; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / n;
        double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        double th = i * golden + 0.2 * (rng.uniform01() - 0.5);
        Eigen::Vector3d nrm(rho * std::cos(th), rho * std::sin(th), z);
        out.push_back({r * nrm, nrm, r, inf});
      }
      // canonical key directions
      for (const Eigen::Vector3d& nrm :
           {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(-1, 0, 0), Eigen::Vector3d(0, 1, 0),
            Eigen::Vector3d(0, -1, 0)})
        out.push_back({r * nrm, nrm, r, inf});
      break;
    }
    case ShapeKind::Cylinder: {
      double r = shape.dims.x(), hl = 0.5 * shape.dims.y();
      int n = std::max(1, (int)std::lround(density * 2.0 * M_PI * r * shape.dims.y()));
      int nth = std::max(3, (int)std::lround(std::sqrt(n * 2.0 * M_PI * r / std::max(shape.dims.y(), 1e-9))));
      int nz = std::max(1, (n + nth - 1) / nth);
      auto lateral = [&](double th, double z) {
        Eigen::Vector3d nrm(std::cos(th), std::sin(th), 0);
        out.push_back({Eigen::Vector3d(r * std::cos(th), r * std::sin(th), z), nrm, r, hl - std::abs(z)});
      };
      for (int i = 0; i < nth; ++i)
        for (int j = 0; j < nz; ++j) {
          double th = 2 * M_PI * (i + 0.5 + 0.6 * (rng.uniform01() - 0.5)) / nth;
          double z = hl * (2.0 * (j + 0.5 + 0.6 * (rng.uniform01() - 0.5)) / nz - 1.0);
          lateral(th, z);
        }
      // canonical mid-height azimuths for straight-on side grasps
      for (int k = 0; k < 8; ++k) lateral(k * M_PI / 4.0, 0.0);
      for (int sign = -1; sign <= 1; sign += 2)
        sample_disc(r, density, rng, [&](double a, double b, bool) {
          double margin = r - std::hypot(a, b);
          out.push_back({Eigen::Vector3d(a, b, sign * hl), Eigen::Vector3d(0, 0, sign), inf, margin});
        });
      break;
    }
    case ShapeKind::Cone: {
      double r = shape.dims.x(), h = shape.dims.y();
      double slant = std::hypot(r, h);
      double alpha = std::atan2(r, h);  // half-angle
      int n = std::max(1, (int)std::lround(density * M_PI * r * slant));
      double golden = M_PI * (3.0 - std::sqrt(5.0));
      auto lateral = [&](double s, double th) {
        double z = 0.5 * h - s * h;
        double rho = s * r;
        Eigen::Vector3d p(rho * std::cos(th), rho * std::sin(th), z);
        Eigen::Vector3d nrm(std::cos(th) * std::cos(alpha), std::sin(th) * std::cos(alpha), std::sin(alpha));
        out.push_back({p, nrm, rho / std::cos(alpha), (1.0 - s) * slant});
      };
      for (int i = 0; i < n; ++i) {
        double s = std::sqrt((i + 0.5) / n);  // area-uniform along the slant
        double th = i * golden + 0.3 * (rng.uniform01() - 0.5);
        lateral(s, th);
      }
      for (int k = 0; k < 8; ++k) lateral(0.6, k * M_PI / 4.0);
      sample_disc(r, density, rng, [&](double a, double b, bool) {
        double margin = r - std::hypot(a, b);
        out.push_back({Eigen::Vector3d(a, b, -0.5 * h), Eigen::Vector3d(0, 0, -1), inf, margin});
      });
      break;
    }
    case ShapeKind::PlanePatch: {
      double hx = 0.5 * shape.dims.x(), hy = 0.5 * shape.dims.y();
      for (int sign = -1; sign <= 1; sign += 2)
        sample_rect_grid(shape.dims.x(), shape.dims.y(), density, rng, [&](double a, double b, bool) {
          double margin = std::min(hx - std::abs(a), hy - std::abs(b));
          out.push_back({Eigen::Vector3d(a, b, 0), Eigen::Vector3d(0, 0, sign), inf, margin});
        });
      break;
    }
    case ShapeKind::Capsule: {
      double r = shape.dims.x(), hl = 0.5 * shape.dims.y();
      PrimitiveShape cyl{ShapeKind::Cylinder, {r, shape.dims.y(), 0}, {}};
      for (auto& s : sample_surface(cyl, density, rng))
        if (std::abs(s.normal.z()) < 0.5) {
          s.flat_margin = inf;  // caps continue the surface
          out.push_back(s);
        }
      int n = std::max(2, (int)std::lround(density * 4.0 * M_PI * r * r));
      double golden = M_PI * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < n; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / n;
        double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        double th = i * golden;
        Eigen::Vector3d nrm(rho * std::cos(th), rho * std::sin(th), z);
        Eigen::Vector3d center(0, 0, z >= 0 ? hl : -hl);
        if ((z >= 0) == (nrm.z() >= 0)) out.push_back({center + r * nrm, nrm, r, inf});
      }
      break;
    }
  }

  // move into the item frame of the shape
  Eigen::Isometry3d iso = shape.local_pose.isometry();
  for (auto& s : out) {
    s.point = iso * s.point;
    s.normal = iso.linear() * s.normal;
  }
  return out;
}

double lowest_point_z(const PlacedShape& s) {
  return support_point(s, Eigen::Vector3d(0, 0, -1)).z();
}

}  // namespace apcsim
