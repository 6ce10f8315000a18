#pragma once

#include <memory>
#include <string>

#include "apcsim/task_manager.hpp"

namespace apcsim {

/// Everything loaded from a scenario config file: workcell, item catalog,
/// kinematic model, viewpoints, and all tunable parameter blocks.
struct Scenario {
  Workcell cell;
  ItemCatalog catalog;
  KinematicChain chain;
  ViewpointTable viewpoints;
  PerceptionConfig perception;
  FailureModel failure;
  ScoreConfig score;
  TaskConfig task;
  PlannerParams planner;
  NamedPoseSet named_poses;

  /// Relative data paths resolve against the config file's directory.
  static Scenario load(const std::string& config_path);

  /// Offline library for this scenario: loaded from the cache directory when
  /// the fingerprint matches, built (and cached) otherwise.
  OfflineLibrary offline_library(std::uint64_t seed, const std::string& cache_dir, bool force_rebuild = false) const;

  RunContext context(const OfflineLibrary& library) const;
};

}  // namespace apcsim
