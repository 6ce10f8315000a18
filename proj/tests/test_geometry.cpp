#include <doctest.h>

#include "apcsim/geometry.hpp"

using namespace apcsim;

namespace {

PlacedShape at(const PrimitiveShape& s, const Eigen::Vector3d& pos,
               const Eigen::Quaterniond& q = Eigen::Quaterniond::Identity()) {
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = q.toRotationMatrix();
  iso.translation() = pos;
  return PlacedShape::make(s, iso);
}

PrimitiveShape box(double x, double y, double z) { return {ShapeKind::Box, {x, y, z}, {}}; }
PrimitiveShape sphere(double r) { return {ShapeKind::Sphere, {r, 0, 0}, {}}; }
PrimitiveShape capsule(double r, double len) { return {ShapeKind::Capsule, {r, len, 0}, {}}; }
PrimitiveShape cylinder(double r, double h) { return {ShapeKind::Cylinder, {r, h, 0}, {}}; }
PrimitiveShape cone(double r, double h) { return {ShapeKind::Cone, {r, h, 0}, {}}; }

}  // namespace

TEST_CASE("pose validation and composition") {
  Pose p;
  p.validate();
  p.orientation = Eigen::Quaterniond(1.0, 1e-3, 0, 0);  // not unit
  CHECK_THROWS_AS(p.validate(), ValidationError);

  Pose a;
  a.position = {1, 2, 3};
  a.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()));
  Pose b = a.inverse();
  Pose id = a.compose(b);
  CHECK(id.position.norm() < 1e-12);
  CHECK(angular_distance(id.orientation, Eigen::Quaterniond::Identity()) < 1e-12);
}

TEST_CASE("sphere-sphere distance closed form") {
  auto a = at(sphere(0.1), {0, 0, 0});
  auto b = at(sphere(0.05), {0.3, 0, 0});
  PairResult r = shape_distance(a, b);
  CHECK(r.distance == doctest::Approx(0.15).epsilon(1e-9));
  CHECK_FALSE(r.intersecting());

  auto c = at(sphere(0.05), {0.12, 0, 0});
  r = shape_distance(a, c);
  CHECK(r.intersecting());
  CHECK(r.penetration == doctest::Approx(0.03).epsilon(1e-9));
}

TEST_CASE("box-capsule tangency vs 1 mm penetration") {
  // capsule axis parallel to a box face: distances are exact closed forms
  auto b = at(box(0.2, 0.2, 0.2), {0, 0, 0});
  double r = 0.03;
  // tangent: capsule center so the swept surface touches the +z face exactly
  auto tangent = at(capsule(r, 0.1), {0, 0, 0.1 + r},
                    Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitX())));
  PairResult rt = shape_distance(b, tangent);
  CHECK_FALSE(rt.penetration > 1e-9);
  CHECK(rt.distance == doctest::Approx(0.0).epsilon(1e-9));

  auto pen = at(capsule(r, 0.1), {0, 0, 0.1 + r - 0.001},
                Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitX())));
  PairResult rp = shape_distance(b, pen);
  CHECK(rp.intersecting());
  CHECK(rp.penetration == doctest::Approx(0.001).epsilon(1e-6));
}

TEST_CASE("box-box penetration matches constructed overlap") {
  auto a = at(box(0.1, 0.1, 0.1), {0, 0, 0});
  auto b = at(box(0.1, 0.1, 0.1), {0.095, 0, 0});  // 5 mm overlap along x
  PairResult r = shape_distance(a, b);
  CHECK(r.intersecting());
  CHECK(r.penetration == doctest::Approx(0.005).epsilon(1e-6));

  auto c = at(box(0.1, 0.1, 0.1), {0.25, 0, 0});
  r = shape_distance(a, c);
  CHECK(r.distance == doctest::Approx(0.15).epsilon(1e-9));
}

TEST_CASE("gjk distance for rotated boxes agrees with support sampling") {
  Eigen::Quaterniond q(Eigen::AngleAxisd(M_PI / 4, Eigen::Vector3d::UnitZ()));
  auto a = at(box(0.2, 0.2, 0.2), {0, 0, 0}, q);
  auto b = at(box(0.2, 0.2, 0.2), {0.5, 0, 0});
  PairResult r = shape_distance(a, b);
  // corner of the rotated box reaches sqrt(2)*0.1 toward +x; face of b at 0.4
  double expected = 0.5 - 0.1 - std::sqrt(2.0) * 0.1;
  CHECK(r.distance == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("cylinder and cone point distances") {
  auto cyl = at(cylinder(0.05, 0.2), {0, 0, 0});
  CHECK(point_distance(cyl, {0.10, 0, 0}) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(point_distance(cyl, {0, 0, 0.15}) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(point_distance(cyl, {0, 0, 0}) == doctest::Approx(-0.05).epsilon(1e-12));

  auto cn = at(cone(0.05, 0.1), {0, 0, 0});
  // apex at z=0.05: point above the apex
  CHECK(point_distance(cn, {0, 0, 0.15}) == doctest::Approx(0.1).epsilon(1e-9));
  // on the base plane below the center
  CHECK(point_distance(cn, {0, 0, -0.1}) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("ray casting against primitives") {
  auto b = at(box(0.2, 0.2, 0.2), {1, 0, 0});
  auto hit = ray_hit(b, {0, 0, 0}, {1, 0, 0});
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(0.9).epsilon(1e-12));
  CHECK_FALSE(ray_hit(b, {0, 0, 0}, {0, 1, 0}).has_value());
  CHECK_FALSE(ray_hit(b, {0, 0, 0}, {-1, 0, 0}).has_value());

  auto s = at(sphere(0.1), {0, 2, 0});
  hit = ray_hit(s, {0, 0, 0}, {0, 1, 0});
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(1.9).epsilon(1e-12));

  auto cn = at(cone(0.1, 0.2), {0, 0, 1});
  // ray straight down the axis from above hits the apex (z = 1.1)
  hit = ray_hit(cn, {0, 0, 2}, {0, 0, -1});
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(0.9).epsilon(1e-6));

  auto cy = at(cylinder(0.1, 0.2), {0, 0, 0});
  hit = ray_hit(cy, {-1, 0, 0}, {1, 0, 0});
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("surface sampling stays on the surface with outward normals") {
  RngStream rng(7, "sampling");
  for (const PrimitiveShape& shape :
       {box(0.1, 0.12, 0.3), cylinder(0.05, 0.2), sphere(0.08), cone(0.06, 0.15), capsule(0.03, 0.2)}) {
    auto samples = sample_surface(shape, 2000.0, rng);
    REQUIRE(samples.size() > 10);
    auto placed = at(shape, {0, 0, 0});
    for (const auto& s : samples) {
      CHECK(std::abs(point_distance(placed, s.point)) < 1e-6);
      CHECK(s.normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
      // outward: stepping along the normal increases distance
      double out = point_distance(placed, s.point + 1e-4 * s.normal);
      CHECK(out > 0.0);
    }
  }
}

TEST_CASE("sphere sampling count tracks density") {
  RngStream rng(3, "sampling");
  double r = 1.0;
  double density = 100.0 / (4.0 * M_PI * r * r);  // want ~100 samples
  auto samples = sample_surface(sphere(r), density, rng);
  CHECK(samples.size() >= 90);
  CHECK(samples.size() <= 110);
  for (const auto& s : samples) {
    // unit sphere: outward normal is the radial direction
    CHECK((s.normal - s.point.normalized()).norm() < 1e-9);
    CHECK(s.min_curvature_radius == doctest::Approx(1.0));
  }
}

TEST_CASE("aabb from support extremes bounds samples") {
  RngStream rng(11, "sampling");
  Eigen::Quaterniond q(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
  auto placed = at(cylinder(0.05, 0.2), {0.3, -0.2, 0.5}, q);
  auto samples = sample_surface(cylinder(0.05, 0.2), 3000.0, rng);
  for (const auto& s : samples) {
    Eigen::Vector3d w = placed.world * s.point;
    CHECK(placed.aabb.contains(w + Eigen::Vector3d::Constant(-1e-9)));
  }
}

TEST_CASE("lowest point z via support") {
  auto b = at(box(0.1, 0.1, 0.3), {0, 0, 1.0});
  CHECK(lowest_point_z(b) == doctest::Approx(0.85).epsilon(1e-12));
  Eigen::Quaterniond tilt(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitY()));
  auto b2 = at(box(0.1, 0.1, 0.3), {0, 0, 1.0}, tilt);
  CHECK(lowest_point_z(b2) == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("swept pair distance against random point-sample oracle") {
  // capsule vs cylinder: compare with dense surface-sample estimates
  RngStream rng(23, "oracle");
  auto a = at(capsule(0.04, 0.3), {0.0, 0.0, 0.0},
              Eigen::Quaterniond(Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY())));
  auto b = at(cylinder(0.06, 0.25), {0.3, 0.1, 0.05});
  PairResult r = shape_distance(a, b);
  REQUIRE_FALSE(r.intersecting());

  RngStream srng(5, "samples");
  auto samples = sample_surface(cylinder(0.06, 0.25), 40000.0, srng);
  double best = 1e9;
  for (const auto& s : samples) {
    Eigen::Vector3d w = b.world * s.point;
    best = std::min(best, point_distance(a, w));
  }
  CHECK(r.distance == doctest::Approx(best).epsilon(0.02));
  CHECK(r.distance <= best + 1e-9);
}
