#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apcsim/events.hpp"
#include "apcsim/executor.hpp"
#include "apcsim/grasp_planner.hpp"
#include "apcsim/motion_planner.hpp"
#include "apcsim/perception.hpp"

namespace apcsim {

struct TaskConfig {
  int max_attempts = 3;
  int max_relocations = 2;
  double timeout_s = 900.0;
  double grasp_density = 400.0;
  double release_dwell = 0.3;
  GraspScoreWeights score_weights;

  void validate() const;
};

struct TaskPlan {
  std::deque<Operation> queue;
  std::vector<Operation> postponed;
  std::vector<Operation> completed;
  std::vector<Operation> abandoned;
};

/// Score-ordered decomposition of the work order: higher planned points
/// first, ties by fewer occluders, then item id.
TaskPlan plan_task(const WorkOrder& order, const WorldState& world, const ScoreConfig& cfg, const Workcell& cell,
                   const ItemCatalog& catalog);

/// Count of items sitting between the target and the container opening.
int occluder_count(const WorldState& world, const Workcell& cell, const ItemCatalog& catalog,
                   const std::string& item);

struct OperationRow {
  std::string item;
  std::string kind;
  int attempts = 0;
  std::string outcome;
  int points = 0;
  double duration = 0.0;
};

struct RunOutput {
  EventLog log;
  nlohmann::json result_file;
  int total_points = 0;
  int items_completed = 0;
  int items_abandoned = 0;
  bool timed_out = false;
  double sim_time = 0.0;
  WorldState final_world;
  std::vector<OperationRow> rows;

  std::string report_text() const;
};

/// Everything a run needs, assembled by the scenario loader.
struct RunContext {
  const Workcell* cell = nullptr;
  const ItemCatalog* catalog = nullptr;
  const KinematicChain* chain = nullptr;
  const ViewpointTable* viewpoints = nullptr;
  const OfflineLibrary* library = nullptr;
  PerceptionConfig perception;
  FailureModel failure;
  ScoreConfig score;
  TaskConfig task;
  PlannerParams planner;
};

/// The sense-plan-act coordinator: runs the whole work order with the
/// fallback policies (viewpoint retries, postponement, retry-after-seal-loss,
/// occluder relocation) until done or the 900 s task clock runs out.
RunOutput run_task(const RunContext& ctx, const WorkOrder& order, std::uint64_t seed);

}  // namespace apcsim
