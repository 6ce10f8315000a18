#include "apcsim/motion_planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "apcsim/json_util.hpp"

namespace apcsim {

std::string to_string(MotionPhase p) {
  switch (p) {
    case MotionPhase::Transit: return "transit";
    case MotionPhase::Approach: return "approach";
    case MotionPhase::Contact: return "contact";
    case MotionPhase::Lift: return "lift";
    case MotionPhase::Retreat: return "retreat";
    case MotionPhase::Shove: return "shove";
  }
  return "?";
}

JointState Trajectory::sample(double t) const {
  if (waypoints.empty()) throw ValidationError("sample on empty trajectory");
  if (t <= waypoints.front().t) return waypoints.front().q;
  if (t >= waypoints.back().t) return waypoints.back().q;
  auto it = std::lower_bound(waypoints.begin(), waypoints.end(), t,
                             [](const TimedWaypoint& w, double tt) { return w.t < tt; });
  const TimedWaypoint& hi = *it;
  const TimedWaypoint& lo = *(it - 1);
  double span = hi.t - lo.t;
  double u = span > 1e-12 ? (t - lo.t) / span : 0.0;
  JointState q = lo.q;
  q.rail_position += u * (hi.q.rail_position - lo.q.rail_position);
  for (int i = 0; i < 7; ++i) q.joint_angles[i] += u * (hi.q.joint_angles[i] - lo.q.joint_angles[i]);
  return q;
}

std::uint64_t Trajectory::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h ^= bits;
    h *= 1099511628211ull;
  };
  for (const auto& w : waypoints) {
    mix(w.t);
    mix(w.q.rail_position);
    for (double a : w.q.joint_angles) mix(a);
    h ^= (std::uint64_t)w.phase;
    h *= 1099511628211ull;
  }
  for (const auto& e : io_events) {
    mix(e.t);
    h ^= fnv1a(e.command);
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// time parametrization
// ---------------------------------------------------------------------------

double trapezoid_duration(double distance, double vmax, double amax) {
  double d = std::abs(distance);
  if (d < 1e-12) return 0.0;
  if (d * amax >= vmax * vmax) return d / vmax + vmax / amax;  // reaches cruise
  return 2.0 * std::sqrt(d / amax);                            // triangular
}

namespace {

struct SegmentProfile {
  double T = 0.0;      // duration
  double sdot = 0.0;   // peak of the normalized profile
  double sddot = 0.0;  // accel of the normalized profile
  double ta = 0.0;     // accel phase length

  double s(double t) const {
    if (T <= 0.0) return 1.0;
    t = std::clamp(t, 0.0, T);
    if (t < ta) return 0.5 * sddot * t * t;
    if (t < T - ta) return 0.5 * sddot * ta * ta + sdot * (t - ta);
    double tau = T - t;
    return 1.0 - 0.5 * sddot * tau * tau;
  }
};

/// Straight joint-space move with a shared normalized trapezoid: the slowest
/// joint pins the profile, every joint stays inside its own limits.
SegmentProfile segment_profile(const KinematicChain& chain, const JointState& a, const JointState& b) {
  double sdot_cap = std::numeric_limits<double>::infinity();
  double sddot_cap = std::numeric_limits<double>::infinity();
  auto apply = [&](double delta, const JointLimits& lim) {
    double d = std::abs(delta);
    if (d < 1e-12) return;
    sdot_cap = std::min(sdot_cap, lim.vmax / d);
    sddot_cap = std::min(sddot_cap, lim.amax / d);
  };
  apply(b.rail_position - a.rail_position, chain.rail_limits);
  for (int i = 0; i < 7; ++i) apply(b.joint_angles[i] - a.joint_angles[i], chain.joints[i].limits);

  SegmentProfile p;
  if (!std::isfinite(sdot_cap)) return p;  // zero-length move
  if (sddot_cap >= sdot_cap * sdot_cap) {  // reaches cruise over unit distance
    p.sdot = sdot_cap;
    p.sddot = sddot_cap;
    p.ta = sdot_cap / sddot_cap;
    p.T = 1.0 / sdot_cap + sdot_cap / sddot_cap;
  } else {  // triangular
    p.sdot = std::sqrt(sddot_cap);
    p.sddot = sddot_cap;
    p.ta = p.sdot / p.sddot;
    p.T = 2.0 * p.ta;
  }
  return p;
}

JointState lerp(const JointState& a, const JointState& b, double u) {
  JointState q = a;
  q.rail_position += u * (b.rail_position - a.rail_position);
  for (int i = 0; i < 7; ++i) q.joint_angles[i] += u * (b.joint_angles[i] - a.joint_angles[i]);
  return q;
}

}  // namespace

Trajectory time_parametrize(const KinematicChain& chain,
                            const std::vector<std::pair<JointState, MotionPhase>>& path,
                            const PlannerParams& params) {
  Trajectory traj;
  if (path.empty()) return traj;
  double t = 0.0;
  traj.waypoints.push_back({0.0, path.front().first, path.front().second});
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    const JointState& a = path[i].first;
    const JointState& b = path[i + 1].first;
    MotionPhase phase = path[i + 1].second;
    SegmentProfile prof = segment_profile(chain, a, b);
    if (prof.T <= 0.0) {
      if (b.cup_state != a.cup_state) traj.waypoints.push_back({t, b, phase});
      continue;
    }
    // sample grid plus the exact profile breakpoints
    std::vector<double> times;
    for (double tt = params.time_sample_dt; tt < prof.T; tt += params.time_sample_dt) times.push_back(tt);
    times.push_back(prof.ta);
    times.push_back(prof.T - prof.ta);
    times.push_back(prof.T);
    std::sort(times.begin(), times.end());
    double last = -1.0;
    for (double tt : times) {
      if (tt <= 0.0 || tt > prof.T + 1e-12 || tt - last < 1e-9) continue;
      last = tt;
      JointState q = lerp(a, b, prof.s(tt));
      q.cup_state = b.cup_state;
      traj.waypoints.push_back({t + tt, q, phase});
    }
    t += prof.T;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// RRT-Connect
// ---------------------------------------------------------------------------

namespace {

double weighted_norm(const JointState& a, const JointState& b) {
  double d2 = 4.0 * (a.rail_position - b.rail_position) * (a.rail_position - b.rail_position);
  for (int i = 0; i < 7; ++i) {
    double d = a.joint_angles[i] - b.joint_angles[i];
    d2 += d * d;
  }
  return std::sqrt(d2);
}

struct Tree {
  std::vector<JointState> nodes;
  std::vector<int> parents;

  int nearest(const JointState& q) const {
    int best = 0;
    double bd = weighted_norm(nodes[0], q);
    for (size_t i = 1; i < nodes.size(); ++i) {
      double d = weighted_norm(nodes[i], q);
      if (d < bd) {
        bd = d;
        best = (int)i;
      }
    }
    return best;
  }
};

JointState step_toward(const JointState& from, const JointState& to, double step) {
  double d = weighted_norm(from, to);
  if (d <= step) return to;
  return lerp(from, to, step / d);
}

enum class ExtendResult { Trapped, Advanced, Reached };

ExtendResult extend(Tree& tree, const JointState& target, double step, const KinematicChain& chain,
                    const CollisionScene& scene, double resolution, int& new_index) {
  int near = tree.nearest(target);
  JointState q_new = step_toward(tree.nodes[near], target, step);
  if (!chain.within_limits(q_new)) return ExtendResult::Trapped;
  if (in_collision(chain, scene, q_new)) return ExtendResult::Trapped;
  if (segment_in_collision(chain, scene, tree.nodes[near], q_new, resolution)) return ExtendResult::Trapped;
  tree.nodes.push_back(q_new);
  tree.parents.push_back(near);
  new_index = (int)tree.nodes.size() - 1;
  return weighted_norm(q_new, target) < 1e-9 ? ExtendResult::Reached : ExtendResult::Advanced;
}

std::vector<JointState> extract_path(const Tree& a, int ai, const Tree& b, int bi) {
  std::vector<JointState> left;
  for (int i = ai; i >= 0; i = a.parents[i]) left.push_back(a.nodes[i]);
  std::reverse(left.begin(), left.end());
  for (int i = bi; i >= 0; i = b.parents[i]) left.push_back(b.nodes[i]);
  return left;
}

std::optional<std::vector<JointState>> rrt_connect(const KinematicChain& chain, const CollisionScene& scene,
                                                   const JointState& start, const JointState& goal,
                                                   const PlannerParams& params, RngStream& rng) {
  // direct connection fast path
  if (!segment_in_collision(chain, scene, start, goal, params.collision_resolution))
    return std::vector<JointState>{start, goal};

  Tree ta, tb;
  ta.nodes = {start};
  ta.parents = {-1};
  tb.nodes = {goal};
  tb.parents = {-1};
  Tree* grow = &ta;
  Tree* connect_tree = &tb;

  for (int iter = 0; iter < params.rrt_max_iterations; ++iter) {
    JointState q_rand = start;
    q_rand.rail_position = rng.uniform(chain.rail_limits.lo, chain.rail_limits.hi);
    for (int i = 0; i < 7; ++i)
      q_rand.joint_angles[i] = rng.uniform(chain.joints[i].limits.lo, chain.joints[i].limits.hi);

    int idx_a = -1;
    if (extend(*grow, q_rand, params.rrt_step, chain, scene, params.collision_resolution, idx_a) !=
        ExtendResult::Trapped) {
      const JointState& q_new = grow->nodes[idx_a];
      int idx_b = -1;
      ExtendResult r = ExtendResult::Advanced;
      while (r == ExtendResult::Advanced)
        r = extend(*connect_tree, q_new, params.rrt_step, chain, scene, params.collision_resolution, idx_b);
      if (r == ExtendResult::Reached) {
        std::vector<JointState> path = grow == &ta ? extract_path(ta, idx_a, tb, idx_b)
                                                   : extract_path(ta, idx_b, tb, idx_a);
        return path;
      }
    }
    std::swap(grow, connect_tree);
  }
  return std::nullopt;
}

void shortcut_smooth(const KinematicChain& chain, const CollisionScene& scene, std::vector<JointState>& path,
                     const PlannerParams& params, RngStream& rng) {
  for (int iter = 0; iter < params.shortcut_iterations && path.size() > 2; ++iter) {
    size_t i = rng.uniform_index(path.size() - 1);
    size_t j = rng.uniform_index(path.size());
    if (i >= j || j - i < 2) continue;
    if (!segment_in_collision(chain, scene, path[i], path[j], params.collision_resolution))
      path.erase(path.begin() + i + 1, path.begin() + j);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// offline library
// ---------------------------------------------------------------------------

bool OfflineLibrary::has(const std::string& from, const std::string& to) const {
  return paths.count(from + "->" + to) > 0 || paths.count(to + "->" + from) > 0;
}

Trajectory OfflineLibrary::get(const std::string& from, const std::string& to) const {
  if (from == to) {
    auto cit = configs.find(from);
    if (cit == configs.end()) throw ValidationError("unknown named pose: " + from);
    Trajectory self;
    self.waypoints.push_back({0.0, cit->second, MotionPhase::Transit});
    return self;
  }
  auto it = paths.find(from + "->" + to);
  if (it != paths.end()) return it->second;
  it = paths.find(to + "->" + from);
  if (it == paths.end()) throw ValidationError("no offline path between " + from + " and " + to);
  Trajectory rev = it->second;
  std::reverse(rev.waypoints.begin(), rev.waypoints.end());
  double end_t = rev.waypoints.empty() ? 0.0 : it->second.waypoints.back().t;
  for (auto& w : rev.waypoints) w.t = end_t - w.t;
  return rev;
}

std::uint64_t library_fingerprint(const KinematicChain& chain, const Workcell& cell, const NamedPoseSet& poses,
                                  std::uint64_t seed, const PlannerParams& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h ^= bits;
    h *= 1099511628211ull;
  };
  for (const auto& [name, pose] : poses.poses) {
    h ^= fnv1a(name);
    h *= 1099511628211ull;
    mix(pose.position.x());
    mix(pose.position.y());
    mix(pose.position.z());
    mix(pose.orientation.w());
    mix(pose.orientation.x());
    mix(pose.orientation.y());
    mix(pose.orientation.z());
  }
  for (const auto& [a, b] : poses.pairs) {
    h ^= fnv1a(a + "->" + b);
    h *= 1099511628211ull;
  }
  for (const auto& s : cell.static_shapes) {
    mix(s.aabb.lo.x());
    mix(s.aabb.lo.y());
    mix(s.aabb.lo.z());
    mix(s.aabb.hi.x());
    mix(s.aabb.hi.y());
    mix(s.aabb.hi.z());
  }
  mix(chain.carriage_mount.x());
  mix(chain.rail_limits.lo);
  mix(chain.rail_limits.hi);
  mix(chain.rail_limits.vmax);
  for (const auto& j : chain.joints) {
    mix(j.origin.z());
    mix(j.limits.lo);
    mix(j.limits.hi);
    mix(j.limits.vmax);
    mix(j.link_radius);
  }
  auto mix_iso = [&](const Eigen::Isometry3d& iso) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) mix(iso.matrix()(r, c));
  };
  mix_iso(chain.tool_front);
  mix_iso(chain.tool_rotated);
  for (const auto& b : chain.gripper_bodies) {
    h ^= fnv1a(b.name);
    h *= 1099511628211ull;
    mix(b.shape.dims.x());
    mix(b.shape.dims.y());
    mix(b.shape.local_pose.position.y());
    mix(b.shape.local_pose.position.z());
  }
  mix(params.rrt_step);
  mix((double)params.rrt_max_iterations);
  mix((double)params.shortcut_iterations);
  h ^= seed;
  h *= 1099511628211ull;
  return h;
}

OfflineLibrary build_offline_library(const KinematicChain& chain_in, const Workcell& cell, const NamedPoseSet& poses,
                                     std::uint64_t seed, const PlannerParams& params) {
  // library paths execute under either cup state, so plan with both envelopes
  KinematicChain chain = chain_in;
  chain.union_gripper_envelope = true;
  OfflineLibrary lib;
  lib.fingerprint = library_fingerprint(chain, cell, poses, seed, params);
  CollisionScene scene = CollisionScene::static_only(cell);

  for (const auto& [name, pose] : poses.poses) {
    auto q = ik(chain, pose, poses.home_seed);
    if (!q) throw ValidationError("named pose not IK-solvable: " + name);
    if (in_collision(chain, scene, *q)) throw ValidationError("named pose in collision: " + name);
    lib.configs[name] = *q;
  }

  for (const auto& [from, to] : poses.pairs) {
    std::string key = from + "->" + to;
    if (from == to) {
      Trajectory t;
      t.waypoints.push_back({0.0, lib.configs.at(from), MotionPhase::Transit});
      lib.paths[key] = t;
      continue;
    }
    RngStream rng(seed, "rrt:" + key);
    auto path = rrt_connect(chain, scene, lib.configs.at(from), lib.configs.at(to), params, rng);
    if (!path) {
      lib.unplannable.push_back(key);
      continue;
    }
    shortcut_smooth(chain, scene, *path, params, rng);
    Trajectory t;
    for (const auto& q : *path) t.waypoints.push_back({0.0, q, MotionPhase::Transit});
    lib.paths[key] = t;
  }
  return lib;
}

std::string OfflineLibrary::to_json() const {
  Json j;
  j["fingerprint"] = fingerprint;
  Json cfgs = Json::object();
  for (const auto& [name, q] : configs) {
    Json arr = Json::array();
    arr.push_back(q.rail_position);
    for (double a : q.joint_angles) arr.push_back(a);
    cfgs[name] = arr;
  }
  j["configs"] = cfgs;
  Json paths_json = Json::object();
  for (const auto& [key, t] : paths) {
    Json wps = Json::array();
    for (const auto& w : t.waypoints) {
      Json arr = Json::array();
      arr.push_back(w.q.rail_position);
      for (double a : w.q.joint_angles) arr.push_back(a);
      wps.push_back(arr);
    }
    paths_json[key] = wps;
  }
  j["paths"] = paths_json;
  j["unplannable"] = unplannable;
  return j.dump();
}

OfflineLibrary OfflineLibrary::from_json(const std::string& text) {
  Json j = parse_json(text, "offline library");
  OfflineLibrary lib;
  lib.fingerprint = j.at("fingerprint").get<std::uint64_t>();
  auto parse_q = [](const Json& arr) {
    JointState q;
    q.rail_position = arr[0].get<double>();
    for (int i = 0; i < 7; ++i) q.joint_angles[i] = arr[i + 1].get<double>();
    return q;
  };
  for (auto& [name, arr] : j.at("configs").items()) lib.configs[name] = parse_q(arr);
  for (auto& [key, wps] : j.at("paths").items()) {
    Trajectory t;
    for (const Json& arr : wps) t.waypoints.push_back({0.0, parse_q(arr), MotionPhase::Transit});
    lib.paths[key] = t;
  }
  lib.unplannable = j.value("unplannable", std::vector<std::string>{});
  return lib;
}

// ---------------------------------------------------------------------------
// online cartesian planning
// ---------------------------------------------------------------------------

namespace {

Pose pose_lerp(const Pose& a, const Pose& b, double u) {
  Pose p;
  p.position = a.position + u * (b.position - a.position);
  p.orientation = a.orientation.slerp(u, b.orientation).normalized();
  return p;
}

/// Track a straight tool-space line with IK continuations; every tracked
/// configuration and inter-waypoint sweep is collision checked.
bool track_segment(const KinematicChain& chain, const CollisionScene& scene, const Pose& from, const Pose& to,
                   MotionPhase phase, const PlannerParams& params, JointState& cursor,
                   std::vector<std::pair<JointState, MotionPhase>>& out, PlanRejection* rejection,
                   double jump_cap = 0.0) {
  if (jump_cap <= 0.0) jump_cap = params.max_track_jump;
  double len = (to.position - from.position).norm() + 0.2 * angular_distance(from.orientation, to.orientation);
  int steps = std::max(1, (int)std::ceil(len / params.cartesian_step));
  for (int s = 1; s <= steps; ++s) {
    Pose target = pose_lerp(from, to, (double)s / steps);
    auto q = ik_track(chain, target, cursor);
    if (!q) q = ik(chain, target, cursor);  // continuation stalled; nearest multi-start solution
    if (!q) {
      if (rejection) {
        rejection->reason = PlanRejection::Reason::IkFailure;
        rejection->detail = "ik failed during " + to_string(phase);
      }
      return false;
    }
    if (weighted_norm(*q, cursor) > jump_cap) {
      if (rejection) {
        rejection->reason = PlanRejection::Reason::IkFailure;
        rejection->detail = "configuration jump during " + to_string(phase);
      }
      return false;
    }
    CollisionWitness w;
    if (in_collision(chain, scene, *q, &w) ||
        segment_in_collision(chain, scene, cursor, *q, params.collision_resolution, &w)) {
      if (rejection) {
        rejection->reason = PlanRejection::Reason::Collision;
        rejection->witness = w.obstacle;
        rejection->detail = to_string(phase) + ":" + w.body;
      }
      return false;
    }
    cursor = *q;
    out.push_back({cursor, phase});
  }
  return true;
}

void mark_item_witness(const CollisionScene& scene, PlanRejection* rejection) {
  if (!rejection || rejection->reason != PlanRejection::Reason::Collision) return;
  for (size_t i = 0; i < scene.names.size(); ++i)
    if (scene.names[i] == rejection->witness) {
      rejection->witness_is_item = scene.is_item[i];
      return;
    }
}

}  // namespace

std::optional<CartesianPlan> plan_cartesian(const KinematicChain& chain, const Workcell& cell,
                                            const WorldState& world, const ItemCatalog& catalog,
                                            const GraspCandidate& candidate, const std::string& target_item,
                                            const std::string& container, const JointState& entry_config,
                                            const PlannerParams& params, PlanRejection* rejection) {
  CupState cup = KinematicChain::cup_for(candidate.strategy);
  JointState cursor = entry_config;
  cursor.cup_state = cup;

  CollisionScene scene_full = CollisionScene::build(cell, world, catalog);
  CollisionScene scene_no_target = CollisionScene::build(cell, world, catalog, target_item);

  Pose entry_tip = fk(chain, cursor);
  Pose contact = candidate.gripper_pose;

  // shrink the standoff when the container leaves no headroom for it
  double standoff_dist = chain.standoff;
  {
    GraspCandidate probe = candidate;
    for (double d : {chain.standoff, 0.06, 0.045, 0.03, 0.02}) {
      probe.gripper_pose = contact;
      probe.gripper_pose.position -= d * candidate.approach_axis;
      bool clear = true;
      for (const auto& body : gripper_bodies_at_candidate(chain, probe)) {
        for (size_t k = 0; k < scene_full.obstacles.size() && clear; ++k) {
          if (!body.aabb.overlaps(scene_full.obstacles[k].aabb)) continue;
          if (shape_distance(body, scene_full.obstacles[k]).intersecting()) clear = false;
        }
        if (!clear) break;
      }
      standoff_dist = d;
      if (clear) break;
    }
  }

  Pose standoff = contact;
  standoff.position -= standoff_dist * candidate.approach_axis;
  Pose precontact = contact;
  precontact.position -= params.contact_press * candidate.approach_axis;

  CartesianPlan plan;
  plan.candidate = candidate;
  plan.waypoints.push_back({cursor, MotionPhase::Approach});

  // ingress from the entry pose, then the straight approach line; posture
  // reconfigurations are fine out here, the sweep check still validates them
  if (!track_segment(chain, scene_full, entry_tip, standoff, MotionPhase::Approach, params, cursor, plan.waypoints,
                     rejection, 2.5)) {
    mark_item_witness(scene_full, rejection);
    return std::nullopt;
  }
  if (!track_segment(chain, scene_full, standoff, precontact, MotionPhase::Approach, params, cursor, plan.waypoints,
                     rejection)) {
    mark_item_witness(scene_full, rejection);
    return std::nullopt;
  }
  if (!track_segment(chain, scene_no_target, precontact, contact, MotionPhase::Contact, params, cursor,
                     plan.waypoints, rejection)) {
    mark_item_witness(scene_no_target, rejection);
    return std::nullopt;
  }

  Pose lift_pose = Pose::from_isometry(fk(chain, cursor).isometry());
  if (candidate.strategy != GraspStrategy::Pinch && chain.lift_height > 0.0) {
    double headroom;
    if (container == kToteLocation) {
      headroom = chain.lift_height;
    } else {
      const BinGeometry& bin = cell.bin(container);
      headroom = std::clamp(bin.inner_hi.z() - 0.01 - lift_pose.position.z(), 0.0, chain.lift_height);
    }
    if (headroom > 1e-4) {
      Pose lifted = lift_pose;
      lifted.position.z() += headroom;
      if (!track_segment(chain, scene_no_target, lift_pose, lifted, MotionPhase::Lift, params, cursor,
                         plan.waypoints, rejection)) {
        mark_item_witness(scene_no_target, rejection);
        return std::nullopt;
      }
      lift_pose = lifted;
    }
  }

  Pose retreat_pose = lift_pose;
  if (container == kToteLocation) {
    retreat_pose.position.z() = cell.tote_inner_hi.z() + 0.22;
  } else {
    const BinGeometry& bin = cell.bin(container);
    retreat_pose.position.x() = bin.inner_lo.x() - 0.05;
  }
  if (!track_segment(chain, scene_no_target, lift_pose, retreat_pose, MotionPhase::Retreat, params, cursor,
                     plan.waypoints, rejection)) {
    mark_item_witness(scene_no_target, rejection);
    return std::nullopt;
  }

  // close the loop back onto the entry configuration so the offline carry
  // path stitches exactly
  JointState entry_cfg = entry_config;
  entry_cfg.cup_state = cup;
  CollisionWitness w;
  if (segment_in_collision(chain, scene_no_target, cursor, entry_cfg, params.collision_resolution, &w)) {
    if (rejection) {
      rejection->reason = PlanRejection::Reason::Collision;
      rejection->witness = w.obstacle;
      rejection->detail = "retreat reconfiguration";
      mark_item_witness(scene_no_target, rejection);
    }
    return std::nullopt;
  }
  plan.waypoints.push_back({entry_cfg, MotionPhase::Retreat});
  return plan;
}

std::optional<CartesianPlan> plan_stow_shove(const KinematicChain& chain, const Workcell& cell,
                                             const std::string& bin_id, double insertion_x, double tip_z,
                                             const JointState& entry_config, GraspStrategy strategy,
                                             const PlannerParams& params, PlanRejection* rejection) {
  // blind push: previous bin contents are not collision obstacles
  CollisionScene scene = CollisionScene::static_only(cell);
  const BinGeometry& bin = cell.bin(bin_id);

  JointState cursor = entry_config;
  cursor.cup_state = KinematicChain::cup_for(strategy);
  Pose entry_tip = fk(chain, cursor);

  Pose mouth = entry_tip;
  mouth.position = {bin.inner_lo.x() - 0.03, bin.center().y(), tip_z};
  Pose deep = mouth;
  deep.position.x() = insertion_x;

  CartesianPlan plan;
  plan.waypoints.push_back({cursor, MotionPhase::Shove});
  if (!track_segment(chain, scene, entry_tip, mouth, MotionPhase::Shove, params, cursor, plan.waypoints, rejection))
    return std::nullopt;
  if (!track_segment(chain, scene, mouth, deep, MotionPhase::Shove, params, cursor, plan.waypoints, rejection))
    return std::nullopt;
  // release happens at the deepest point; retreat straight out
  if (!track_segment(chain, scene, deep, mouth, MotionPhase::Retreat, params, cursor, plan.waypoints, rejection))
    return std::nullopt;
  JointState entry_cfg = entry_config;
  entry_cfg.cup_state = cursor.cup_state;
  if (segment_in_collision(chain, scene, cursor, entry_cfg, params.collision_resolution)) {
    if (rejection) {
      rejection->reason = PlanRejection::Reason::Collision;
      rejection->detail = "shove retreat reconfiguration";
    }
    return std::nullopt;
  }
  plan.waypoints.push_back({entry_cfg, MotionPhase::Retreat});
  return plan;
}

Trajectory stitch_and_time(const KinematicChain& chain, const CartesianPlan& plan, const Trajectory& carry,
                           GraspStrategy strategy, const PlannerParams& params) {
  if (plan.waypoints.empty()) throw ValidationError("stitch: empty cartesian plan");
  std::vector<std::pair<JointState, MotionPhase>> path = plan.waypoints;
  if (!carry.waypoints.empty()) {
    if (joint_distance(plan.end(), carry.start()) > 1e-6)
      throw ValidationError("stitch: discontinuity between retreat end and carry start");
    for (size_t i = 1; i < carry.waypoints.size(); ++i) {
      JointState q = carry.waypoints[i].q;
      q.cup_state = path.back().first.cup_state;
      path.push_back({q, MotionPhase::Transit});
    }
  }

  Trajectory traj = time_parametrize(chain, path, params);

  traj.io_events.push_back({0.0, "configure_strategy:" + to_string(strategy)});
  // grasp activation at the end of the contact phase; the release stays with
  // the executor's drop-off step (or the deepest point of a placement shove)
  double grasp_t = -1.0;
  bool is_shove = false;
  for (const auto& w : traj.waypoints) {
    if (w.phase == MotionPhase::Contact) grasp_t = w.t;
    if (w.phase == MotionPhase::Shove) is_shove = true;
  }
  if (grasp_t >= 0.0) {
    traj.io_events.push_back({grasp_t, strategy == GraspStrategy::Pinch ? "pinch_close" : "suction_on"});
  } else if (is_shove) {
    double release_t = 0.0;
    for (const auto& w : traj.waypoints)
      if (w.phase == MotionPhase::Shove) release_t = w.t;
    traj.io_events.push_back({release_t, strategy == GraspStrategy::Pinch ? "pinch_open" : "suction_off"});
  }
  std::stable_sort(traj.io_events.begin(), traj.io_events.end(),
                   [](const IoEvent& a, const IoEvent& b) { return a.t < b.t; });
  return traj;
}

}  // namespace apcsim
