#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apcsim/world_model.hpp"

namespace apcsim {

struct Viewpoint {
  Pose camera_pose;    // tool pose for the sense move (camera rides on the gripper)
  std::string target;  // "bin_X" or "tote"
  int attempt_index = 0;
  bool robot_mounted = true;  // the tote camera sits on a pole, no sense move
};

struct Detection {
  std::string item_id;
  double confidence = 0.0;
  double visible_fraction = 0.0;
};

struct PoseEstimate {
  bool success = false;
  Pose pose;  // meaningful only on success
  double translational_error_bound = 0.0;
};

struct PerceptionConfig {
  double detect_recall = 1.0;
  double confidence_noise_sd = 0.0;
  double pose_noise_sd_translation = 0.0;  // m
  double pose_noise_sd_rotation = 0.0;     // rad
  double pose_failure_base = 0.0;
  double occlusion_exponent = 2.0;
  double latency = 0.150;  // s of simulated clock per capture
  int max_viewpoint_attempts = 3;
  std::map<std::string, double> item_pose_failure;  // per-item overrides of pose_failure_base

  void validate() const;
};

/// Pre-defined sense poses per container, indexed by attempt.
struct ViewpointTable {
  std::map<std::string, std::vector<Pose>> poses;  // container -> attempt poses
  static ViewpointTable load(const std::string& path);
};

/// Fraction of deterministic rays (cast from the camera through the item's
/// bounding box) that reach this item before any other geometry. 0 when the
/// item is not visible at all.
double visible_fraction(const WorldState& world, const Workcell& cell, const ItemCatalog& catalog,
                        const Eigen::Vector3d& camera_origin, const std::string& item_id, int ray_count = 10000);

struct CaptureResult {
  std::vector<Detection> detections;
  double latency = 0.0;  // caller advances the simulated clock
};

/// One detection per item in the viewed container, each independently kept
/// with probability detect_recall * visible_fraction.
CaptureResult capture(const WorldState& world, const Viewpoint& viewpoint, const PerceptionConfig& cfg,
                      const Workcell& cell, const ItemCatalog& catalog, RngStream& rng);

/// Noisy pose for a detection, or failure driven by the occlusion model.
/// Estimates for nearly-floor-level poses are snapped onto the container
/// floor (objects cannot float).
PoseEstimate estimate_pose(const WorldState& world, const Detection& detection, const Viewpoint& viewpoint,
                           const PerceptionConfig& cfg, const Workcell& cell, const ItemCatalog& catalog,
                           RngStream& rng);

/// The attempt-th pre-defined viewpoint, or nullopt when attempts are exhausted.
std::optional<Viewpoint> next_viewpoint(const ViewpointTable& table, const PerceptionConfig& cfg,
                                        const std::string& target, int attempt_index);

/// Stand-in for the segmented point cloud of a deformable item: visible
/// surface samples with outward normals, position-noised per the config.
std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> segment_surface(const WorldState& world,
                                                                         const ItemCatalog& catalog,
                                                                         const std::string& item_id,
                                                                         const Eigen::Vector3d& camera_origin,
                                                                         const PerceptionConfig& cfg, RngStream& rng,
                                                                         int max_samples = 160);

}  // namespace apcsim
