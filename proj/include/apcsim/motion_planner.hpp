#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apcsim/grasp_planner.hpp"
#include "apcsim/kinematics.hpp"

namespace apcsim {

enum class MotionPhase { Transit, Approach, Contact, Lift, Retreat, Shove };
std::string to_string(MotionPhase p);

struct TimedWaypoint {
  double t = 0.0;
  JointState q;
  MotionPhase phase = MotionPhase::Transit;
};

struct IoEvent {
  double t = 0.0;
  std::string command;  // configure_strategy:<s> | suction_on | suction_off | pinch_close | pinch_open
};

struct Trajectory {
  std::vector<TimedWaypoint> waypoints;
  std::vector<IoEvent> io_events;

  double duration() const { return waypoints.empty() ? 0.0 : waypoints.back().t; }
  const JointState& start() const { return waypoints.front().q; }
  const JointState& end() const { return waypoints.back().q; }
  JointState sample(double t) const;  // linear interpolation between waypoints
  std::uint64_t content_hash() const;
};

struct PlannerParams {
  double rrt_step = 0.05;        // weighted-metric step (rail weighted 2x)
  int rrt_max_iterations = 4000; // deterministic stand-in for the per-pair compute budget
  int shortcut_iterations = 200;
  double cartesian_step = 0.01;      // m of tool travel per tracked waypoint
  double collision_resolution = 0.005;
  double contact_press = 0.012;      // final straight press onto the surface
  double time_sample_dt = 0.05;      // s between emitted trajectory samples
  double max_track_jump = 0.6;       // weighted joint-space jump rejected as a branch switch
};

/// Tool poses the robot moves between with precomputed trajectories.
struct NamedPoseSet {
  std::map<std::string, Pose> poses;
  std::vector<std::pair<std::string, std::string>> pairs;  // directed; reverse derived
  JointState home_seed;
};

class OfflineLibrary {
public:
  std::map<std::string, JointState> configs;  // canonical config per named pose
  std::map<std::string, Trajectory> paths;    // key: "from->to", untimed carry paths (timed on stitch)
  std::vector<std::string> unplannable;
  std::uint64_t fingerprint = 0;

  bool has(const std::string& from, const std::string& to) const;
  /// Stored path, or the reverse pair's path reversed. Throws if absent.
  Trajectory get(const std::string& from, const std::string& to) const;

  std::string to_json() const;
  static OfflineLibrary from_json(const std::string& text);
};

std::uint64_t library_fingerprint(const KinematicChain& chain, const Workcell& cell, const NamedPoseSet& poses,
                                  std::uint64_t seed, const PlannerParams& params);

/// RRT-Connect (with straight-line fast path and shortcut smoothing) between
/// every required named-pose pair over the static scene. Deterministic per seed.
OfflineLibrary build_offline_library(const KinematicChain& chain, const Workcell& cell, const NamedPoseSet& poses,
                                     std::uint64_t seed, const PlannerParams& params = {});

struct CartesianPlan {
  std::vector<std::pair<JointState, MotionPhase>> waypoints;  // untimed
  GraspCandidate candidate;
  double contact_time_fraction = 0.0;  // filled by stitch
  const JointState& start() const { return waypoints.front().first; }
  const JointState& end() const { return waypoints.back().first; }
};

struct PlanRejection {
  enum class Reason { IkFailure, Collision } reason = Reason::IkFailure;
  std::string witness;  // obstacle (item id or static body) for collision rejections
  bool witness_is_item = false;
  std::string detail;
};

/// Straight approach / contact / lift / retreat segments for one candidate,
/// IK-tracked from the container entry configuration and collision-validated.
/// The target item blocks the approach, is ignored during contact, and is
/// carried (ignored) during lift and retreat.
std::optional<CartesianPlan> plan_cartesian(const KinematicChain& chain, const Workcell& cell,
                                            const WorldState& world, const ItemCatalog& catalog,
                                            const GraspCandidate& candidate, const std::string& target_item,
                                            const std::string& container, const JointState& entry_config,
                                            const PlannerParams& params, PlanRejection* rejection = nullptr);

/// Horizontal shove into a bin for stow placement: in to the insertion depth,
/// release, straight back out. Checked against static geometry only.
std::optional<CartesianPlan> plan_stow_shove(const KinematicChain& chain, const Workcell& cell,
                                             const std::string& bin_id, double insertion_x, double tip_z,
                                             const JointState& entry_config, GraspStrategy strategy,
                                             const PlannerParams& params, PlanRejection* rejection = nullptr);

/// Concatenate the cartesian plan and the offline carry path, time-parametrize
/// with synchronized trapezoids under the chain's joint limits, and insert the
/// gripper I/O events. Throws ValidationError on a stitch discontinuity.
Trajectory stitch_and_time(const KinematicChain& chain, const CartesianPlan& plan, const Trajectory& carry,
                           GraspStrategy strategy, const PlannerParams& params);

/// Time-parametrize a bare waypoint path (sense moves, offline paths).
Trajectory time_parametrize(const KinematicChain& chain, const std::vector<std::pair<JointState, MotionPhase>>& path,
                            const PlannerParams& params);

/// Closed-form minimal duration of a rest-to-rest trapezoidal move.
double trapezoid_duration(double distance, double vmax, double amax);

}  // namespace apcsim
