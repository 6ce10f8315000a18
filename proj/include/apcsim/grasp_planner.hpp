#pragma once

#include <string>
#include <vector>

#include "apcsim/kinematics.hpp"
#include "apcsim/world_model.hpp"

namespace apcsim {

/// A 6-DOF tool-tip pose proposed for grasping, with its strategy and score.
struct GraspCandidate {
  Pose gripper_pose;               // tool tip frame: origin at contact, +z = approach_axis
  GraspStrategy strategy = GraspStrategy::FrontSuction;
  Eigen::Vector3d approach_axis{0, 0, -1};  // unit; inward surface normal = direction of travel
  double score = 0.0;
  int source_shape = -1;  // index into the item's shapes, -1 for deformable surface
  Eigen::Vector3d contact_point{Eigen::Vector3d::Zero()};
  double pinch_gap = 0.0;  // pinch candidates only
};

/// Where the target currently sits; orients reachability pruning.
struct GraspContext {
  std::string container;  // "bin_X" or "tote"
  const Workcell* cell = nullptr;

  bool tote() const { return container == kToteLocation; }
  /// Direction a reachable approach travels: into the bin, or down into the tote.
  Eigen::Vector3d approach_inward() const;
  /// Outward normal of the container opening (toward the robot / up for tote).
  Eigen::Vector3d opening_outward() const;
};

struct GraspScoreWeights {
  double com_distance = 1.0;       // per meter
  double tilt = 0.5;               // per radian
  double strategy_preference = 0.1;
};

/// Sample grasp candidates over the item's primitive surfaces: suction at
/// every sample (strategy from the world-frame approach direction), pinch
/// across parallel-face pairs whose gap fits the pinch range.
std::vector<GraspCandidate> synthesize_rigid(const ItemSpec& spec, const Pose& estimated_pose, double density,
                                             const KinematicChain& chain, const GraspContext& ctx, RngStream& rng);

/// One front-suction candidate per surface sample, scored by proximity to
/// the centroid (closer is better), sorted best-first.
std::vector<GraspCandidate> synthesize_deformable(
    const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& surface_samples, const Eigen::Vector3d& centroid);

/// Which items the static gripper-body check ran into, per candidate count;
/// feeds the coordinator's relocation fallback when pruning empties the set.
struct PruneReport {
  std::map<std::string, int> item_blocks;
};

/// Reachability, bottom-face, per-item heuristic-rule and static gripper
/// collision pruning. Pure; idempotent.
std::vector<GraspCandidate> prune(const std::vector<GraspCandidate>& candidates, const ItemSpec& spec,
                                  const Pose& estimated_pose, const WorldState& world, const ItemCatalog& catalog,
                                  const KinematicChain& chain, const GraspContext& ctx,
                                  PruneReport* report = nullptr);

/// Geometry + stability scoring: center-of-mass offset, gravity tilt and
/// strategy preference; stable descending sort with deterministic ties.
std::vector<GraspCandidate> score_rigid(const std::vector<GraspCandidate>& candidates, const ItemSpec& spec,
                                        const Pose& estimated_pose, const std::vector<GraspStrategy>& strategy_order,
                                        const GraspScoreWeights& weights = {});

/// Strategy preference for the item in its current situation, best first.
std::vector<GraspStrategy> select_strategy(const ItemSpec& spec, const Pose& estimated_pose, const GraspContext& ctx);

/// Tip pose for a contact + approach axis, with the gripper body oriented
/// back toward the container opening.
Pose oriented_tip_pose(const Eigen::Vector3d& contact, const Eigen::Vector3d& approach_axis, GraspStrategy strategy,
                       const GraspContext& ctx, const Eigen::Vector3d& gap_axis = Eigen::Vector3d::Zero());

/// Gripper collision bodies placed for a candidate, without solving IK.
std::vector<PlacedShape> gripper_bodies_at_candidate(const KinematicChain& chain, const GraspCandidate& candidate,
                                                     std::vector<std::string>* names = nullptr);

}  // namespace apcsim
