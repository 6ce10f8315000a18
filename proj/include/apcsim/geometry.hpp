#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "apcsim/rng.hpp"

namespace apcsim {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rigid transform as position + unit quaternion.
struct Pose {
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
  Eigen::Quaterniond orientation{Eigen::Quaterniond::Identity()};

  static Pose identity() { return {}; }
  static Pose from_isometry(const Eigen::Isometry3d& iso) {
    return {iso.translation(), Eigen::Quaterniond(iso.rotation())};
  }
  Eigen::Isometry3d isometry() const {
    Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
    iso.linear() = orientation.toRotationMatrix();
    iso.translation() = position;
    return iso;
  }
  Pose compose(const Pose& rhs) const {
    return {position + orientation * rhs.position, (orientation * rhs.orientation).normalized()};
  }
  Pose inverse() const {
    Eigen::Quaterniond qi = orientation.conjugate();
    return {qi * (-position), qi};
  }
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return position + orientation * p; }

  /// Quaternion norm must be within 1e-9 of 1.
  void validate() const {
    if (std::abs(orientation.norm() - 1.0) > 1e-9)
      throw ValidationError("pose orientation is not a unit quaternion");
  }
};

/// Angle between two rotations, radians in [0, pi].
double angular_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Log map of the rotation taking `from` to `to`, as an axis-angle vector.
Eigen::Vector3d rotation_error(const Eigen::Quaterniond& from, const Eigen::Quaterniond& to);

enum class ShapeKind { Box, Cylinder, Sphere, Cone, PlanePatch, Capsule };

ShapeKind shape_kind_from_string(const std::string& s);
std::string to_string(ShapeKind k);

/// Convex primitive in its local frame.
///
/// Conventions (all shapes centered on the local origin):
///   Box        dims = full extents (x, y, z)
///   Cylinder   dims = (radius, height, -), axis +z
///   Sphere     dims = (radius, -, -)
///   Cone       dims = (base radius, height, -), base at z = -h/2, apex at +h/2
///   PlanePatch dims = (extent x, extent y, -), rectangle in the z = 0 plane
///   Capsule    dims = (radius, cylindrical length, -), axis +z
struct PrimitiveShape {
  ShapeKind kind = ShapeKind::Box;
  Eigen::Vector3d dims{0.1, 0.1, 0.1};
  Pose local_pose;

  void validate() const;
  double volume() const;
  double surface_area() const;
  /// Conservative radius of the bounding sphere around the local origin.
  double bounding_radius() const;
};

struct Aabb {
  Eigen::Vector3d lo{Eigen::Vector3d::Constant(1e30)};
  Eigen::Vector3d hi{Eigen::Vector3d::Constant(-1e30)};
  void expand(const Eigen::Vector3d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void merge(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  bool overlaps(const Aabb& o, double margin = 0.0) const {
    return (lo.array() - margin <= o.hi.array()).all() && (o.lo.array() - margin <= hi.array()).all();
  }
  bool contains(const Eigen::Vector3d& p) const {
    return (lo.array() <= p.array()).all() && (p.array() <= hi.array()).all();
  }
  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
};

/// A primitive placed in the world; collision and ray queries operate on these.
struct PlacedShape {
  PrimitiveShape shape;
  Eigen::Isometry3d world;  // local -> world
  Aabb aabb;                // cached, must match `world`

  static PlacedShape make(const PrimitiveShape& s, const Eigen::Isometry3d& item_to_world);
};

/// Signed distance from a world point to the shape surface (negative inside).
/// PlanePatch has no interior; its distance is unsigned.
double point_distance(const PlacedShape& s, const Eigen::Vector3d& p);

/// Support point of the shape in world frame along `dir` (need not be unit).
Eigen::Vector3d support_point(const PlacedShape& s, const Eigen::Vector3d& dir);

struct PairResult {
  double distance = 0.0;     // > 0 when disjoint, 0 otherwise
  double penetration = 0.0;  // > 0 when overlapping, 0 otherwise
  Eigen::Vector3d point_a{Eigen::Vector3d::Zero()};
  Eigen::Vector3d point_b{Eigen::Vector3d::Zero()};
  bool intersecting() const { return penetration > 0.0; }
};

/// Distance / penetration between two convex primitives. Exact closed forms
/// for sphere- and capsule-swept pairs; GJK (distance) + EPA (depth) otherwise.
PairResult shape_distance(const PlacedShape& a, const PlacedShape& b);

/// First-hit ray parameter t >= 0 with origin + t*dir on the shape, if any.
std::optional<double> ray_hit(const PlacedShape& s, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

/// Surface sample with outward normal, in the shape's local frame.
struct SurfaceSample {
  Eigen::Vector3d point;
  Eigen::Vector3d normal;  // outward, unit
  /// Smaller principal radius of curvature at the sample (inf on flats).
  double min_curvature_radius = std::numeric_limits<double>::infinity();
  /// Distance to the nearest face boundary along the surface (inf on closed
  /// surfaces); a suction cup needs this much room to seal.
  double flat_margin = std::numeric_limits<double>::infinity();
};

/// Deterministic surface sampling at approximately `density` points per m^2,
/// stratified with seeded jitter. Face / cap centers are always included.
std::vector<SurfaceSample> sample_surface(const PrimitiveShape& shape, double density, RngStream& rng);

/// Lowest world-frame z over the shape's surface.
double lowest_point_z(const PlacedShape& s);

}  // namespace apcsim
