#include "apcsim/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include "apcsim/json_util.hpp"
#include "apcsim/rng.hpp"

namespace apcsim {

namespace {

JointLimits limits_from_json(const Json& j) {
  JointLimits l;
  l.lo = j.at("lo").get<double>();
  l.hi = j.at("hi").get<double>();
  l.vmax = j.at("vmax").get<double>();
  l.amax = j.at("amax").get<double>();
  if (l.lo >= l.hi) throw ValidationError("joint limits not well-ordered");
  if (l.vmax <= 0 || l.amax <= 0) throw ValidationError("velocity/acceleration limits must be positive");
  return l;
}

PrimitiveShape shape_from_json_local(const Json& j) {
  PrimitiveShape s;
  s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
  const Json& d = j.at("dims");
  s.dims = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < d.size() && i < 3; ++i) s.dims[i] = d[i].get<double>();
  if (j.contains("pose")) s.local_pose = pose_from_json(j.at("pose"));
  return s;
}

}  // namespace

KinematicChain KinematicChain::load(const std::string& path) {
  Json j = load_json_file(path);
  KinematicChain c;
  const Json& rail = j.at("rail");
  c.rail_axis = vec3_from_json(rail.at("axis")).normalized();
  c.carriage_mount = vec3_from_json(rail.at("carriage_mount"));
  c.rail_limits = limits_from_json(rail.at("limits"));

  const Json& joints = j.at("joints");
  if (joints.size() != 7) throw ValidationError("kinematic model must have 7 arm joints");
  for (size_t i = 0; i < 7; ++i) {
    const Json& jj = joints[i];
    ArmJoint a;
    a.origin = vec3_from_json(jj.at("origin"));
    a.axis = vec3_from_json(jj.at("axis")).normalized();
    a.limits = limits_from_json(jj.at("limits"));
    a.link_radius = jj.value("link_radius", 0.07);
    c.joints[i] = a;
  }

  const Json& tool = j.at("tool");
  c.tool_front = pose_from_json(tool.at("front")).isometry();
  c.tool_rotated = pose_from_json(tool.at("rotated")).isometry();
  for (const Json& gb : tool.at("gripper_bodies")) {
    GripperBody b;
    b.name = gb.at("name").get<std::string>();
    b.shape = shape_from_json_local(gb);
    std::string applies = gb.value("cup_state", "both");
    if (applies == "front")
      b.applies_to = GripperBody::AppliesTo::Front;
    else if (applies == "rotated")
      b.applies_to = GripperBody::AppliesTo::Rotated;
    c.gripper_bodies.push_back(b);
  }
  c.carriage_body = shape_from_json_local(j.at("carriage_body"));
  c.pinch_gap_min = tool.value("pinch_gap_min", 0.005);
  c.pinch_gap_max = tool.value("pinch_gap_max", 0.08);
  c.suction_cup_radius = tool.value("suction_cup_radius", 0.015);
  c.standoff = j.value("standoff", 0.08);
  c.lift_height = j.value("lift_height", 0.02);

  // conservative lever-arm bounds: chain length downstream of each joint
  double tool_extent = c.tool_front.translation().norm();
  for (const auto& b : c.gripper_bodies)
    tool_extent = std::max(tool_extent, b.shape.local_pose.position.norm() + b.shape.bounding_radius());
  double total = 0.0;
  c.max_reach = tool_extent;
  for (int i = 6; i >= 0; --i) {
    c.lever_bound[i + 1] = total + tool_extent + c.joints[i].link_radius;
    total += c.joints[i].origin.norm();
    c.max_reach += c.joints[i].origin.norm();
  }
  // leave a reusable bound for the rail too (prismatic: displacement == delta)
  c.lever_bound[0] = 1.0;
  for (int i = 0; i < 7; ++i) c.lever_bound[i + 1] = std::max(c.lever_bound[i + 1], total + tool_extent);
  return c;
}

bool KinematicChain::within_limits(const JointState& q, double tol) const {
  if (q.rail_position < rail_limits.lo - tol || q.rail_position > rail_limits.hi + tol) return false;
  for (int i = 0; i < 7; ++i)
    if (q.joint_angles[i] < joints[i].limits.lo - tol || q.joint_angles[i] > joints[i].limits.hi + tol) return false;
  return true;
}

void KinematicChain::clamp_to_limits(JointState& q) const {
  q.rail_position = std::clamp(q.rail_position, rail_limits.lo, rail_limits.hi);
  for (int i = 0; i < 7; ++i)
    q.joint_angles[i] = std::clamp(q.joint_angles[i], joints[i].limits.lo, joints[i].limits.hi);
}

Eigen::Isometry3d fk_flange(const KinematicChain& chain, const JointState& q) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = chain.carriage_mount + q.rail_position * chain.rail_axis;
  for (int i = 0; i < 7; ++i) {
    t.translate(chain.joints[i].origin);
    t.rotate(Eigen::AngleAxisd(q.joint_angles[i], chain.joints[i].axis));
  }
  return t;
}

Pose fk(const KinematicChain& chain, const JointState& q) {
  if (!chain.within_limits(q)) throw ValidationError("fk: configuration outside joint limits");
  return Pose::from_isometry(fk_flange(chain, q) * chain.tool_transform(q.cup_state));
}

double joint_distance(const JointState& a, const JointState& b) {
  double d = 2.0 * std::abs(a.rail_position - b.rail_position);
  for (int i = 0; i < 7; ++i) d += std::abs(a.joint_angles[i] - b.joint_angles[i]);
  return d;
}

// ---------------------------------------------------------------------------
// inverse kinematics: damped least squares with multi-start
// ---------------------------------------------------------------------------

namespace {

struct FkFrames {
  Eigen::Isometry3d tip;
  std::array<Eigen::Vector3d, 7> joint_origins;
  std::array<Eigen::Vector3d, 7> joint_axes;
};

FkFrames fk_frames(const KinematicChain& chain, const JointState& q) {
  FkFrames f;
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = chain.carriage_mount + q.rail_position * chain.rail_axis;
  for (int i = 0; i < 7; ++i) {
    t.translate(chain.joints[i].origin);
    f.joint_origins[i] = t.translation();
    f.joint_axes[i] = t.linear() * chain.joints[i].axis;
    t.rotate(Eigen::AngleAxisd(q.joint_angles[i], chain.joints[i].axis));
  }
  f.tip = t * chain.tool_transform(q.cup_state);
  return f;
}

bool dls_solve(const KinematicChain& chain, const Pose& target, JointState q, const IkParams& params,
               JointState& out) {
  Eigen::Quaterniond target_q = target.orientation.normalized();
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    FkFrames f = fk_frames(chain, q);
    Eigen::Vector3d pos_err = target.position - f.tip.translation();
    Eigen::Vector3d rot_err = rotation_error(Eigen::Quaterniond(f.tip.rotation()), target_q);
    if (pos_err.norm() <= params.pos_tol && rot_err.norm() <= params.rot_tol) {
      out = q;
      return true;
    }
    Eigen::Matrix<double, 6, 8> jac;
    jac.col(0).head<3>() = chain.rail_axis;
    jac.col(0).tail<3>().setZero();
    for (int i = 0; i < 7; ++i) {
      jac.col(i + 1).head<3>() = f.joint_axes[i].cross(f.tip.translation() - f.joint_origins[i]);
      jac.col(i + 1).tail<3>() = f.joint_axes[i];
    }
    Eigen::Matrix<double, 6, 1> err;
    err.head<3>() = pos_err;
    err.tail<3>() = rot_err;
    Eigen::Matrix<double, 6, 6> jjt = jac * jac.transpose();
    jjt.diagonal().array() += params.damping * params.damping;
    Eigen::Matrix<double, 8, 1> dq = jac.transpose() * jjt.ldlt().solve(err);
    double n = dq.norm();
    if (n > 0.5) dq *= 0.5 / n;
    q.rail_position += dq[0];
    for (int i = 0; i < 7; ++i) q.joint_angles[i] += dq[i + 1];
    chain.clamp_to_limits(q);
  }
  return false;
}

}  // namespace

std::vector<IkSolution> ik_multistart(const KinematicChain& chain, const Pose& target, const JointState& seed,
                                      const IkParams& params) {
  std::vector<IkSolution> solutions;

  // quick workspace reject: beyond reach of any rail position
  Eigen::Vector3d to_target = target.position - chain.carriage_mount;
  Eigen::Vector3d along = to_target.dot(chain.rail_axis) * chain.rail_axis;
  double rail_c = std::clamp(to_target.dot(chain.rail_axis), chain.rail_limits.lo, chain.rail_limits.hi);
  Eigen::Vector3d nearest_base = chain.carriage_mount + rail_c * chain.rail_axis;
  if ((target.position - nearest_base).norm() > chain.max_reach) return solutions;

  // fixed perturbation seeds; wide enough to reach alternate arm postures
  static const std::array<std::array<double, 8>, 8> kPerturbations = {{
      {0.2, 0.4, -0.4, 0.4, -0.4, 0.4, -0.4, 0.4},
      {-0.2, -0.4, 0.4, -0.4, 0.4, -0.4, 0.4, -0.4},
      {0.4, 0.8, 0.8, -0.8, 0.8, -0.8, 0.8, 0.0},
      {-0.4, -0.8, -0.8, 0.8, -0.8, 0.8, -0.8, 0.0},
      {0.0, 1.2, -0.6, 1.2, -0.6, 1.2, -0.6, 1.2},
      {0.0, -1.2, 0.6, -1.2, 0.6, -1.2, 0.6, -1.2},
      {0.6, 0.0, 1.5, 0.0, 1.5, 0.0, 1.5, 0.0},
      {-0.6, 0.0, -1.5, 0.0, -1.5, 0.0, -1.5, 0.0},
  }};

  auto try_start = [&](const JointState& start) {
    JointState s = start;
    chain.clamp_to_limits(s);
    JointState sol;
    if (!dls_solve(chain, target, s, params, sol)) return;
    for (const auto& existing : solutions)
      if (joint_distance(existing.q, sol) < 1e-6) return;
    solutions.push_back({sol, joint_distance(sol, seed)});
  };

  try_start(seed);
  for (const auto& p : kPerturbations) {
    JointState s = seed;
    s.rail_position += p[0];
    for (int i = 0; i < 7; ++i) s.joint_angles[i] += p[i + 1];
    try_start(s);
  }
  if (solutions.empty() && params.extra_restarts > 0) {
    // deterministic uniform restarts; same schedule on every call
    RngStream rng(0x9e3779b9u, "ik-restarts");
    for (int k = 0; k < params.extra_restarts && solutions.empty(); ++k) {
      JointState s = seed;
      s.rail_position = rng.uniform(chain.rail_limits.lo, chain.rail_limits.hi);
      for (int i = 0; i < 7; ++i) s.joint_angles[i] = rng.uniform(chain.joints[i].limits.lo, chain.joints[i].limits.hi);
      try_start(s);
    }
  }

  std::sort(solutions.begin(), solutions.end(),
            [](const IkSolution& a, const IkSolution& b) { return a.seed_distance < b.seed_distance; });
  return solutions;
}

std::optional<JointState> ik(const KinematicChain& chain, const Pose& target, const JointState& seed,
                             const IkParams& params) {
  auto sols = ik_multistart(chain, target, seed, params);
  if (sols.empty()) return std::nullopt;
  return sols.front().q;
}

std::optional<JointState> ik_track(const KinematicChain& chain, const Pose& target, const JointState& seed,
                                   const IkParams& params) {
  JointState start = seed;
  chain.clamp_to_limits(start);
  JointState sol;
  if (!dls_solve(chain, target, start, params, sol)) return std::nullopt;
  return sol;
}

// ---------------------------------------------------------------------------
// collision scene
// ---------------------------------------------------------------------------

CollisionScene CollisionScene::build(const Workcell& cell, const WorldState& world, const ItemCatalog& catalog,
                                     const std::optional<std::string>& excluded_item) {
  CollisionScene scene = static_only(cell);
  for (const auto& [id, st] : world.items) {
    if (excluded_item && id == *excluded_item) continue;
    if (st.location == kGripperLocation || st.location == kStagedLocation || st.location == kFloorLocation) continue;
    for (const auto& ps : item_shapes_at(catalog.get(id), st.pose)) {
      scene.obstacles.push_back(ps);
      scene.names.push_back(id);
      scene.is_item.push_back(true);
    }
  }
  return scene;
}

CollisionScene CollisionScene::static_only(const Workcell& cell) {
  CollisionScene scene;
  scene.obstacles = cell.static_shapes;
  scene.names = cell.static_shape_names;
  scene.is_item.assign(scene.obstacles.size(), false);
  return scene;
}

namespace {

PlacedShape make_capsule_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius) {
  PrimitiveShape s;
  s.kind = ShapeKind::Capsule;
  double len = (b - a).norm();
  s.dims = {radius, std::max(len, 1e-6), 0};
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = 0.5 * (a + b);
  if (len > 1e-9) {
    Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), (b - a) / len);
    t.linear() = q.toRotationMatrix();
  }
  return PlacedShape::make(s, t);
}

}  // namespace

std::vector<PlacedShape> robot_bodies(const KinematicChain& chain, const JointState& q,
                                      std::vector<std::string>* names) {
  std::vector<PlacedShape> bodies;
  auto add = [&](PlacedShape b, const std::string& name) {
    bodies.push_back(std::move(b));
    if (names) names->push_back(name);
  };

  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  Eigen::Vector3d base = chain.carriage_mount + q.rail_position * chain.rail_axis;
  t.translation() = base;
  add(PlacedShape::make(chain.carriage_body, t), "carriage");

  Eigen::Vector3d prev = base;
  Eigen::Isometry3d frame = t;
  for (int i = 0; i < 7; ++i) {
    frame.translate(chain.joints[i].origin);
    Eigen::Vector3d here = frame.translation();
    if ((here - prev).norm() > 0.02)
      add(make_capsule_between(prev, here, chain.joints[i].link_radius), "link_" + std::to_string(i));
    frame.rotate(Eigen::AngleAxisd(q.joint_angles[i], chain.joints[i].axis));
    prev = here;
  }
  Eigen::Isometry3d flange = frame;
  for (const auto& gb : chain.gripper_bodies) {
    if (!chain.union_gripper_envelope && !gb.active_for(q.cup_state)) continue;
    add(PlacedShape::make(gb.shape, flange), gb.name);
  }
  return bodies;
}

bool in_collision(const KinematicChain& chain, const CollisionScene& scene, const JointState& q,
                  CollisionWitness* witness) {
  std::vector<std::string> names;
  auto bodies = robot_bodies(chain, q, witness ? &names : nullptr);
  const double tol = 1e-9;
  for (size_t i = 0; i < bodies.size(); ++i) {
    for (size_t k = 0; k < scene.obstacles.size(); ++k) {
      if (!bodies[i].aabb.overlaps(scene.obstacles[k].aabb)) continue;
      PairResult d = shape_distance(bodies[i], scene.obstacles[k]);
      if (d.penetration > tol) {
        if (witness) *witness = {names[i], scene.names[k], d.penetration};
        return true;
      }
    }
  }
  // self collision: gripper bodies vs forearm links (indices: skip neighbors)
  size_t first_gripper = bodies.size() - chain.gripper_bodies.size();
  for (size_t i = first_gripper; i < bodies.size(); ++i) {
    for (size_t k = 1; k + 3 < first_gripper; ++k) {  // skip wrist-adjacent links
      if (!bodies[i].aabb.overlaps(bodies[k].aabb)) continue;
      PairResult d = shape_distance(bodies[i], bodies[k]);
      if (d.penetration > tol) {
        if (witness) {
          std::vector<std::string> n2;
          robot_bodies(chain, q, &n2);
          *witness = {n2[i], n2[k], d.penetration};
        }
        return true;
      }
    }
  }
  return false;
}

bool segment_in_collision(const KinematicChain& chain, const CollisionScene& scene, const JointState& q_from,
                          const JointState& q_to, double resolution, CollisionWitness* witness) {
  double bound = std::abs(q_to.rail_position - q_from.rail_position);
  for (int i = 0; i < 7; ++i)
    bound += std::abs(q_to.joint_angles[i] - q_from.joint_angles[i]) * chain.lever_bound[i + 1];
  int steps = std::max(1, (int)std::ceil(bound / std::max(resolution, 1e-6)));
  for (int s = 1; s < steps; ++s) {
    double u = (double)s / steps;
    JointState q = q_from;
    q.rail_position += u * (q_to.rail_position - q_from.rail_position);
    for (int i = 0; i < 7; ++i) q.joint_angles[i] += u * (q_to.joint_angles[i] - q_from.joint_angles[i]);
    q.cup_state = q_from.cup_state;
    if (in_collision(chain, scene, q, witness)) return true;
  }
  return false;
}

}  // namespace apcsim
