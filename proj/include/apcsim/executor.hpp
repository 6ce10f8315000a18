#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apcsim/events.hpp"
#include "apcsim/motion_planner.hpp"

namespace apcsim {

/// Forces a specific outcome for one grasp attempt of one item.
struct ScriptedAttempt {
  std::optional<bool> grasp_succeeds;
  std::string drop_during;  // "" | "retreat" | "transit" | "dropoff"
};

struct FailureModel {
  double suction_nominal = 0.95;
  double suction_heavy = 0.70;  // items above the mass threshold
  double heavy_mass_threshold = 1.0;
  double alignment_scale = 0.02;  // m; success decays exp(-err/scale)
  double pinch_nominal = 0.90;
  double pinch_gap_scale = 0.01;
  double seal_loss_rate = 0.0;        // 1/s during post-grasp motion
  double seal_loss_mass_scale = 1.0;  // hazard *= (1 + scale * mass)
  double hazard_dt = 0.1;             // 10 Hz hazard sampling
  std::map<std::string, double> item_suction_override;
  std::map<std::string, std::vector<ScriptedAttempt>> scripts;  // consumed per attempt

  void validate() const;
  double suction_success(const ItemSpec& item, GraspStrategy strategy, double alignment_error) const;
  double pinch_success(const ItemSpec& item, double gap_error) const;
  double transit_hazard(double mass) const;
};

/// Where a released item should land, pre-computed by the coordinator.
struct ReleasePlacement {
  std::string location;
  Pose pose;
  std::vector<std::pair<std::string, Pose>> pushed;  // prior contents shoved deeper
};

struct ExecutionSummary {
  bool grasp_attempted = false;
  bool grasp_succeeded = false;
  bool placed = false;
  std::optional<std::string> drop_location;
  double drop_time = 0.0;
  std::string place_location;
};

/// Simulated gripper + motion execution. Owns the vacuum/pinch IO state and
/// one rng stream derived from (scenario seed, "executor").
class Executor {
public:
  Executor(const KinematicChain& chain, const Workcell& cell, const ItemCatalog& catalog, const FailureModel& fm,
           std::uint64_t seed)
      : chain_(chain), cell_(cell), catalog_(catalog), fm_(fm), rng_(seed, "executor") {}

  /// Advance the world along the trajectory, applying gripper I/O, sampling
  /// grasp success and transit seal loss, and appending events to the log.
  ExecutionSummary execute(const Trajectory& trajectory, WorldState& world, const std::string& target_item,
                           int attempt_index, const std::optional<ReleasePlacement>& placement, EventLog& log);

  /// Vacuum sensor: sealed only while an item is attached and suction is on.
  bool check_seal(const WorldState& world) const;
  /// Pinch verification analog: attachment query (0.5 s after close, applied
  /// by the coordinator's timing).
  bool check_attachment(const WorldState& world) const;

  const FailureModel& failure_model() const { return fm_; }

private:
  std::string drop_location_under(const Eigen::Vector3d& tool_xy) const;
  std::optional<Pose> find_drop_pose(const WorldState& world, const std::string& item, const std::string& container);

  const KinematicChain& chain_;
  const Workcell& cell_;
  const ItemCatalog& catalog_;
  FailureModel fm_;
  RngStream rng_;
  bool suction_on_ = false;
  bool pinch_closed_ = false;
};

}  // namespace apcsim
