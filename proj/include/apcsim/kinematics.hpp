#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "apcsim/geometry.hpp"
#include "apcsim/joint_state.hpp"
#include "apcsim/world_model.hpp"

namespace apcsim {

struct JointLimits {
  double lo = 0.0, hi = 0.0;
  double vmax = 1.0, amax = 2.0;
};

struct ArmJoint {
  Eigen::Vector3d origin{Eigen::Vector3d::Zero()};  // translation from previous frame
  Eigen::Vector3d axis{Eigen::Vector3d::UnitZ()};
  JointLimits limits;
  double link_radius = 0.07;  // collision capsule radius of the preceding link
};

struct GripperBody {
  std::string name;
  PrimitiveShape shape;  // local_pose relative to the flange
  enum class AppliesTo { Front, Rotated, Both } applies_to = AppliesTo::Both;

  bool active_for(CupState cup) const {
    if (applies_to == AppliesTo::Both) return true;
    return (applies_to == AppliesTo::Front) == (cup == CupState::Front);
  }
};

/// Rail + 7R arm + tool, loaded from the kinematic model file.
struct KinematicChain {
  Eigen::Vector3d rail_axis{0, 1, 0};
  Eigen::Vector3d carriage_mount{Eigen::Vector3d::Zero()};  // base frame origin at rail = 0
  JointLimits rail_limits;
  std::array<ArmJoint, 7> joints;
  Eigen::Isometry3d tool_front = Eigen::Isometry3d::Identity();    // flange -> tip, cup forward
  Eigen::Isometry3d tool_rotated = Eigen::Isometry3d::Identity();  // flange -> tip, cup at 90 deg
  std::vector<GripperBody> gripper_bodies;  // conservative envelope, both cup states
  PrimitiveShape carriage_body;
  double pinch_gap_min = 0.005, pinch_gap_max = 0.08;
  double suction_cup_radius = 0.015;
  double standoff = 0.08;  // cartesian approach start distance
  double lift_height = 0.02;
  double max_reach = 2.0;              // from the shoulder, quick workspace reject
  std::array<double, 8> lever_bound{};  // conservative tool-displacement bound per joint
  /// When set, collision bodies for both cup states are active regardless of
  /// the configuration's cup state (offline library planning).
  bool union_gripper_envelope = false;

  static KinematicChain load(const std::string& path);
  bool within_limits(const JointState& q, double tol = 1e-9) const;
  void clamp_to_limits(JointState& q) const;
  const Eigen::Isometry3d& tool_transform(CupState cup) const {
    return cup == CupState::Front ? tool_front : tool_rotated;
  }
  static CupState cup_for(GraspStrategy s) {
    return s == GraspStrategy::SideTopSuction ? CupState::Rotated : CupState::Front;
  }
};

/// Tool-tip pose for a configuration. Throws on joint-limit violation.
Pose fk(const KinematicChain& chain, const JointState& q);
Eigen::Isometry3d fk_flange(const KinematicChain& chain, const JointState& q);

/// Weighted joint-space distance (rail weighted 2x the arm joints).
double joint_distance(const JointState& a, const JointState& b);

struct IkSolution {
  JointState q;
  double seed_distance = 0.0;
};

struct IkParams {
  int max_iterations = 200;
  double damping = 1e-3;
  double pos_tol = 1e-9;
  double rot_tol = 1e-9;
  int extra_restarts = 24;  // deterministic restarts past the 8 fixed perturbations
};

/// All converged multi-start solutions (deduplicated), sorted by distance to seed.
std::vector<IkSolution> ik_multistart(const KinematicChain& chain, const Pose& target, const JointState& seed,
                                      const IkParams& params = {});

/// Minimal-configuration-change IK: nearest converged multi-start solution.
std::optional<JointState> ik(const KinematicChain& chain, const Pose& target, const JointState& seed,
                             const IkParams& params = {});

/// Single-start continuation from the seed only; used for cartesian tracking.
std::optional<JointState> ik_track(const KinematicChain& chain, const Pose& target, const JointState& seed,
                                   const IkParams& params = {});

struct CollisionWitness {
  std::string body;
  std::string obstacle;
  double penetration = 0.0;
};

/// Obstacles a robot configuration is checked against: the static workcell
/// plus item shapes, minus an optional excluded (target) item.
struct CollisionScene {
  std::vector<PlacedShape> obstacles;
  std::vector<std::string> names;
  std::vector<bool> is_item;

  static CollisionScene build(const Workcell& cell, const WorldState& world, const ItemCatalog& catalog,
                              const std::optional<std::string>& excluded_item = std::nullopt);
  static CollisionScene static_only(const Workcell& cell);
};

/// Robot collision bodies (arm link capsules, carriage, gripper envelope) at q.
std::vector<PlacedShape> robot_bodies(const KinematicChain& chain, const JointState& q,
                                      std::vector<std::string>* names = nullptr);

/// True iff any robot body penetrates an obstacle (tangency does not count).
bool in_collision(const KinematicChain& chain, const CollisionScene& scene, const JointState& q,
                  CollisionWitness* witness = nullptr);

/// Joint-space linear sweep check; step sized so the max tool displacement
/// per step is at most `resolution` (default 5 mm). Endpoints are assumed free.
bool segment_in_collision(const KinematicChain& chain, const CollisionScene& scene, const JointState& q_from,
                          const JointState& q_to, double resolution = 0.005, CollisionWitness* witness = nullptr);

}  // namespace apcsim
