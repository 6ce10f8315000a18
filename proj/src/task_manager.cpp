#include "apcsim/task_manager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "apcsim/json_util.hpp"

namespace apcsim {

void TaskConfig::validate() const {
  if (max_attempts < 1 || max_relocations < 0) throw ValidationError("task config: bad retry caps");
  if (timeout_s <= 0.0 || grasp_density <= 0.0) throw ValidationError("task config: bad timeout or density");
}

int occluder_count(const WorldState& world, const Workcell& cell, const ItemCatalog& catalog,
                   const std::string& item) {
  auto it = world.items.find(item);
  if (it == world.items.end()) return 0;
  const std::string& loc = it->second.location;
  Aabb target;
  for (const auto& s : item_shapes_at(catalog.get(item), it->second.pose)) target.merge(s.aabb);

  bool in_tote = loc == kToteLocation;
  if (!in_tote && !cell.is_bin(loc)) return 0;

  int count = 0;
  for (const auto& [id, st] : world.items) {
    if (id == item || st.location != loc) continue;
    Aabb other;
    for (const auto& s : item_shapes_at(catalog.get(id), st.pose)) other.merge(s.aabb);
    bool overlaps_lateral;
    bool nearer_opening;
    if (in_tote) {  // opening is up
      overlaps_lateral = other.lo.x() < target.hi.x() && other.hi.x() > target.lo.x() &&
                         other.lo.y() < target.hi.y() && other.hi.y() > target.lo.y();
      nearer_opening = other.hi.z() > target.hi.z() + 1e-6;
    } else {  // opening faces -x
      overlaps_lateral = other.lo.y() < target.hi.y() && other.hi.y() > target.lo.y() &&
                         other.lo.z() < target.hi.z() && other.hi.z() > target.lo.z();
      nearer_opening = other.lo.x() < target.lo.x() - 1e-6;
    }
    if (overlaps_lateral && nearer_opening) ++count;
  }
  return count;
}

TaskPlan plan_task(const WorkOrder& order, const WorldState& world, const ScoreConfig& cfg, const Workcell& cell,
                   const ItemCatalog& catalog) {
  TaskPlan plan;
  std::vector<std::pair<Operation, int>> ops;  // op, occluders
  for (const auto& target : order.targets) {
    Operation op;
    op.kind = order.mode == "pick" ? Operation::Kind::Pick : Operation::Kind::Stow;
    op.item = target.item;
    op.source = target.source;
    if (op.kind == Operation::Kind::Pick) {
      op.destination = kToteLocation;
    } else {
      // tentative; the actual destination is chosen again when the operation plans
      int best_clutter = std::numeric_limits<int>::max();
      for (const auto& bin : cell.bins) {
        int c = clutter_count(world, bin.id);
        if (c < best_clutter) {
          best_clutter = c;
          op.destination = bin.id;
        }
      }
    }
    op.planned_points = points_for(op, world, cfg);
    ops.emplace_back(op, occluder_count(world, cell, catalog, target.item));
  }
  std::stable_sort(ops.begin(), ops.end(), [](const auto& a, const auto& b) {
    if (a.first.planned_points != b.first.planned_points) return a.first.planned_points > b.first.planned_points;
    if (a.second != b.second) return a.second < b.second;
    return a.first.item < b.first.item;
  });
  for (auto& [op, occ] : ops) plan.queue.push_back(op);
  return plan;
}

// ---------------------------------------------------------------------------
// coordinator
// ---------------------------------------------------------------------------

namespace {

enum class Disposition { Completed, RetryLater, Postponed, Abandoned, RelocationScheduled, TimedOut };

class Coordinator {
public:
  Coordinator(const RunContext& ctx, const WorkOrder& order, std::uint64_t seed)
      : ctx_(ctx),
        order_(order),
        seed_(seed),
        executor_(*ctx.chain, *ctx.cell, *ctx.catalog, ctx.failure, seed),
        perception_rng_(seed, "perception"),
        grasp_rng_(seed, "grasp-sampling") {}

  RunOutput run();

private:
  bool timed_out_now() const { return world_.clock >= ctx_.task.timeout_s; }
  void note_timeout();
  OperationRow& row(const Operation& op);

  bool execute_transit(const Trajectory& traj);
  bool move_to(const std::string& pose_name);
  bool move_direct(const Pose& tool_pose);
  void return_attached_to_source(const Operation& op);

  struct SenseResult {
    bool found = false;
    Pose estimate;
    Detection detection;
    bool exhausted_viewpoints = false;
  };
  SenseResult sense(const Operation& op, const std::string& container);

  struct PlanResult {
    bool ok = false;
    CartesianPlan plan;
    GraspStrategy strategy = GraspStrategy::FrontSuction;
    std::string blocking_item;  // set when every candidate died on one item
  };
  PlanResult plan_grasp(const Operation& op, const std::string& container, const Pose& estimate);

  struct StowTarget {
    ReleasePlacement placement;
    double insertion_x = 0.0;
    double tip_y = 0.0, tip_z = 0.0;
    bool feasible = false;
  };
  StowTarget compute_stow_placement(const std::string& bin_id, const std::string& item);
  std::optional<std::string> choose_destination_bin(const std::string& item, const std::string& exclude_bin);

  Disposition run_operation(Operation& op);
  int points_awarded(const Operation& op) const;
  void dispose(Operation op, Disposition d, const std::string& note);
  void finish_run(RunOutput& out);

  const RunContext& ctx_;
  WorkOrder order_;
  std::uint64_t seed_;
  WorldState world_;
  EventLog log_;
  TaskPlan plan_;
  Executor executor_;
  RngStream perception_rng_;
  RngStream grasp_rng_;
  std::map<std::string, std::string> tracked_;
  std::map<std::string, int> relocations_used_;
  std::map<std::string, std::string> blocked_by_;
  std::map<std::string, OperationRow> rows_;
  std::vector<std::string> row_order_;
  std::string current_pose_ = "home";
  int clutter_at_plan_ = 0;
  int total_points_ = 0;
  bool timed_out_ = false;
  bool timeout_logged_ = false;
};

void Coordinator::note_timeout() {
  timed_out_ = true;
  if (!timeout_logged_) {
    log_.append(world_.clock, "timeout", {{"t", world_.clock}, {"limit", ctx_.task.timeout_s}});
    timeout_logged_ = true;
  }
}

OperationRow& Coordinator::row(const Operation& op) {
  auto it = rows_.find(op.item + "/" + to_string(op.kind));
  if (it == rows_.end()) {
    OperationRow r;
    r.item = op.item;
    r.kind = to_string(op.kind);
    it = rows_.emplace(op.item + "/" + to_string(op.kind), r).first;
    row_order_.push_back(op.item + "/" + to_string(op.kind));
  }
  return it->second;
}

bool Coordinator::execute_transit(const Trajectory& traj) {
  executor_.execute(traj, world_, "", 0, std::nullopt, log_);
  return true;
}

bool Coordinator::move_to(const std::string& pose_name) {
  if (pose_name == current_pose_) return true;
  const OfflineLibrary& lib = *ctx_.library;
  std::vector<std::string> legs;
  if (lib.has(current_pose_, pose_name)) {
    legs = {pose_name};
  } else if (lib.has(current_pose_, "tote_entry") && lib.has("tote_entry", pose_name)) {
    legs = {"tote_entry", pose_name};
  } else if (lib.has(current_pose_, "home") && lib.has("home", pose_name)) {
    legs = {"home", pose_name};
  } else {
    throw ValidationError("no offline route from " + current_pose_ + " to " + pose_name);
  }
  for (const std::string& leg : legs) {
    Trajectory path = lib.get(current_pose_, leg);
    std::vector<std::pair<JointState, MotionPhase>> wp;
    for (const auto& w : path.waypoints) wp.push_back({w.q, MotionPhase::Transit});
    Trajectory timed = time_parametrize(*ctx_.chain, wp, ctx_.planner);
    if (!timed.waypoints.empty()) execute_transit(timed);
    current_pose_ = leg;
  }
  return true;
}

void Coordinator::return_attached_to_source(const Operation& op) {
  if (!executor_.check_attachment(world_)) return;
  // an aborted placement leaves the item on the gripper: put it back where it
  // came from before retrying
  std::string source = tracked_.count(op.item) ? tracked_.at(op.item) : op.source;
  std::string entry = source == kToteLocation ? "tote_entry" : "entry_" + source;
  move_to(entry);
  Trajectory release;
  JointState q = world_.joint_state;
  release.waypoints.push_back({0.0, q, MotionPhase::Transit});
  release.waypoints.push_back({ctx_.task.release_dwell, q, MotionPhase::Transit});
  release.io_events.push_back({ctx_.task.release_dwell, "suction_off"});
  release.io_events.push_back({ctx_.task.release_dwell, "pinch_open"});
  ExecutionSummary rel = executor_.execute(release, world_, op.item, op.attempt_count, std::nullopt, log_);
  if (rel.placed) tracked_[op.item] = rel.place_location;
  log_.append(world_.clock, "returned_to_source", {{"item", op.item}, {"location", tracked_[op.item]}});
}

bool Coordinator::move_direct(const Pose& tool_pose) {
  JointState seed = world_.joint_state;
  auto q = ik(*ctx_.chain, tool_pose, seed);
  if (!q) return false;
  CollisionScene scene = CollisionScene::build(*ctx_.cell, world_, *ctx_.catalog);
  if (in_collision(*ctx_.chain, scene, *q)) return false;
  if (segment_in_collision(*ctx_.chain, scene, seed, *q, ctx_.planner.collision_resolution)) return false;
  Trajectory timed = time_parametrize(*ctx_.chain, {{seed, MotionPhase::Transit}, {*q, MotionPhase::Transit}},
                                      ctx_.planner);
  execute_transit(timed);
  return true;
}

Coordinator::SenseResult Coordinator::sense(const Operation& op, const std::string& container) {
  SenseResult result;
  std::string canonical = container == kToteLocation ? "tote_entry" : "camera_" + container;

  auto hop_back = [&]() {
    JointState canon = ctx_.library->configs.at(canonical);
    if (joint_distance(world_.joint_state, canon) < 1e-9) return;
    Trajectory timed = time_parametrize(
        *ctx_.chain, {{world_.joint_state, MotionPhase::Transit}, {canon, MotionPhase::Transit}}, ctx_.planner);
    execute_transit(timed);
  };

  for (int attempt = 0;; ++attempt) {
    auto vp = next_viewpoint(*ctx_.viewpoints, ctx_.perception, container, attempt);
    if (!vp) {
      result.exhausted_viewpoints = true;
      break;
    }
    if (timed_out_now()) break;

    move_to(canonical);
    bool hopped = false;
    if (vp->robot_mounted && attempt > 0) {
      if (!move_direct(vp->camera_pose)) {
        log_.append(world_.clock, "viewpoint_unreachable", {{"target", container}, {"attempt", attempt}});
        continue;
      }
      hopped = true;
    }

    CaptureResult cap = capture(world_, *vp, ctx_.perception, *ctx_.cell, *ctx_.catalog, perception_rng_);
    world_.clock += cap.latency;
    Json det_json = Json::array();
    for (const auto& d : cap.detections)
      det_json.push_back({{"item", d.item_id}, {"confidence", d.confidence}, {"visible_fraction", d.visible_fraction}});
    log_.append(world_.clock, "sense",
                {{"target", container}, {"attempt", attempt}, {"detections", det_json}, {"latency", cap.latency}});

    const Detection* target_det = nullptr;
    for (const auto& d : cap.detections)
      if (d.item_id == op.item) target_det = &d;
    if (!target_det) {
      if (hopped) hop_back();
      continue;
    }

    PoseEstimate est =
        estimate_pose(world_, *target_det, *vp, ctx_.perception, *ctx_.cell, *ctx_.catalog, perception_rng_);
    log_.append(world_.clock, "pose_estimate",
                {{"item", op.item}, {"success", est.success}, {"attempt", attempt}});
    if (hopped) hop_back();
    if (!est.success) continue;

    result.found = true;
    result.estimate = est.pose;
    result.detection = *target_det;
    break;
  }
  return result;
}

Coordinator::PlanResult Coordinator::plan_grasp(const Operation& op, const std::string& container,
                                                const Pose& estimate) {
  PlanResult result;
  const ItemSpec& spec = ctx_.catalog->get(op.item);
  GraspContext gctx{container, ctx_.cell};

  std::vector<GraspStrategy> strategy_order = select_strategy(spec, estimate, gctx);
  std::vector<GraspCandidate> candidates;
  PruneReport prune_report;
  if (spec.deformable) {
    std::string canonical = container == kToteLocation ? "tote_entry" : "camera_" + container;
    Eigen::Vector3d cam = ctx_.library->configs.count(canonical)
                              ? fk(*ctx_.chain, ctx_.library->configs.at(canonical)).position
                              : estimate.position + Eigen::Vector3d(0, 0, 0.4);
    auto samples = segment_surface(world_, *ctx_.catalog, op.item, cam, ctx_.perception, perception_rng_);
    if (samples.empty()) return result;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& [p, n] : samples) centroid += p;
    centroid /= (double)samples.size();
    candidates = prune(synthesize_deformable(samples, centroid), spec, estimate, world_, *ctx_.catalog, *ctx_.chain,
                       gctx, &prune_report);
  } else {
    auto raw = synthesize_rigid(spec, estimate, ctx_.task.grasp_density, *ctx_.chain, gctx, grasp_rng_);
    auto kept = prune(raw, spec, estimate, world_, *ctx_.catalog, *ctx_.chain, gctx, &prune_report);
    candidates = score_rigid(kept, spec, estimate, strategy_order, ctx_.task.score_weights);
  }
  log_.append(world_.clock, "plan_candidates", {{"item", op.item}, {"count", candidates.size()}});
  if (candidates.empty()) {
    // every candidate died in pruning; if one item caused it, name it so the
    // coordinator can consider moving it out of the way
    int best = 0;
    for (const auto& [id, n] : prune_report.item_blocks)
      if (n > best) {
        best = n;
        result.blocking_item = id;
      }
    return result;
  }

  std::string entry_name = container == kToteLocation ? "tote_entry" : "entry_" + container;
  move_to(entry_name);
  JointState entry_cfg = ctx_.library->configs.at(entry_name);

  std::map<std::string, int> item_witnesses;
  int tried = 0;
  for (const GraspCandidate& c : candidates) {
    if (++tried > 60) break;
    PlanRejection rej;
    auto plan = plan_cartesian(*ctx_.chain, *ctx_.cell, world_, *ctx_.catalog, c, op.item, container, entry_cfg,
                               ctx_.planner, &rej);
    if (plan) {
      result.ok = true;
      result.plan = *plan;
      result.strategy = c.strategy;
      log_.append(world_.clock, "plan_selected",
                  {{"item", op.item},
                   {"strategy", to_string(c.strategy)},
                   {"candidates_tried", tried},
                   {"score", c.score}});
      return result;
    }
    if (rej.reason == PlanRejection::Reason::Collision && rej.witness_is_item) ++item_witnesses[rej.witness];
    log_.append(world_.clock, "plan_reject",
                {{"item", op.item},
                 {"reason", rej.reason == PlanRejection::Reason::Collision ? "collision" : "ik"},
                 {"witness", rej.witness},
                 {"detail", rej.detail}});
  }
  log_.append(world_.clock, "plan_exhausted", {{"item", op.item}, {"candidates_tried", tried}});
  int best = 0;
  for (const auto& [id, n] : item_witnesses)
    if (n > best) {
      best = n;
      result.blocking_item = id;
    }
  return result;
}

std::optional<std::string> Coordinator::choose_destination_bin(const std::string& item,
                                                               const std::string& exclude_bin) {
  const ItemSpec& spec = ctx_.catalog->get(item);
  double need = 1.5 * spec.bounding_volume();
  std::string best;
  int best_clutter = std::numeric_limits<int>::max();
  for (const auto& bin : ctx_.cell->bins) {
    if (bin.id == exclude_bin) continue;
    double bin_volume = bin.depth() * bin.width() * bin.height();
    double used = 0.0;
    int clutter = 0;
    for (const auto& [id, st] : world_.items)
      if (st.location == bin.id) {
        used += ctx_.catalog->get(id).bounding_volume();
        ++clutter;
      }
    if (bin_volume - used < need) continue;
    if (clutter < best_clutter) {
      best_clutter = clutter;
      best = bin.id;
    }
  }
  if (best.empty()) return std::nullopt;
  return best;
}

Coordinator::StowTarget Coordinator::compute_stow_placement(const std::string& bin_id, const std::string& item) {
  StowTarget out;
  const BinGeometry& bin = ctx_.cell->bin(bin_id);
  const ItemSpec& spec = ctx_.catalog->get(item);

  // push existing contents deeper (up to 5 cm) when there is headroom
  struct Entry {
    std::string id;
    Aabb box;
  };
  std::vector<Entry> contents;
  for (const auto& [id, st] : world_.items) {
    if (st.location != bin_id || id == item) continue;
    Aabb box;
    for (const auto& s : item_shapes_at(ctx_.catalog->get(id), st.pose)) box.merge(s.aabb);
    contents.push_back({id, box});
  }
  std::sort(contents.begin(), contents.end(),
            [](const Entry& a, const Entry& b) { return a.box.hi.x() > b.box.hi.x(); });

  double free_back = bin.inner_hi.x() - 0.003;
  for (const auto& e : contents) {
    double shift = std::min(0.05, free_back - e.box.hi.x());
    if (shift > 1e-4) {
      Pose p = world_.items.at(e.id).pose;
      p.position.x() += shift;
      out.placement.pushed.emplace_back(e.id, p);
      free_back = e.box.lo.x() + shift - 0.004;
    } else {
      free_back = std::min(free_back, e.box.lo.x() - 0.004);
    }
  }

  Aabb ib = spec.local_aabb();
  double depth = ib.hi.x() - ib.lo.x();
  double slot_back = free_back;
  double slot_front = slot_back - depth;
  if (slot_front < bin.inner_lo.x() + 0.003) return out;  // no room left

  Pose rest;
  rest.position = {slot_back - ib.hi.x() - 0.0, bin.center().y() - ib.center().y(), bin.floor_z() - ib.lo.z()};
  out.placement.location = bin_id;
  out.placement.pose = rest;

  // shove tip target: carry the attached item just past the slot front
  const ItemState& st = world_.items.at(item);
  if (st.location != kGripperLocation) {
    // planned before the grasp: approximate with the item's own extents
    out.insertion_x = slot_back - depth * 0.5;
  } else {
    out.insertion_x = slot_back - depth * 0.5;
  }
  out.tip_y = bin.center().y();
  double item_height = ib.hi.z() - ib.lo.z();
  double carry_extent = std::max({ib.hi.x() - ib.lo.x(), ib.hi.y() - ib.lo.y(), item_height});
  out.tip_z = std::min(bin.floor_z() + carry_extent + 0.03, bin.inner_hi.z() - 0.05);
  out.tip_z = std::max(out.tip_z, bin.floor_z() + 0.06);
  out.feasible = true;
  return out;
}

Disposition Coordinator::run_operation(Operation& op) {
  op.attempt_count += 1;
  OperationRow& r = row(op);
  r.attempts = op.attempt_count;
  double op_t0 = world_.clock;
  log_.append(world_.clock, "op_start",
              {{"item", op.item},
               {"kind", to_string(op.kind)},
               {"source", op.source},
               {"attempt", op.attempt_count}});

  std::string container = tracked_.count(op.item) ? tracked_.at(op.item) : op.source;
  if (container != kToteLocation && !ctx_.cell->is_bin(container)) {
    r.duration += world_.clock - op_t0;
    return Disposition::Abandoned;
  }

  // --- Sense -------------------------------------------------------------
  SenseResult sensed = sense(op, container);
  if (timed_out_now() && !sensed.found) {
    note_timeout();
    r.duration += world_.clock - op_t0;
    return Disposition::TimedOut;
  }
  if (!sensed.found) {
    // viewpoints exhausted: postpone the target and move on
    r.duration += world_.clock - op_t0;
    return Disposition::Postponed;
  }

  // --- Plan --------------------------------------------------------------
  clutter_at_plan_ = clutter_count(world_, op.kind == Operation::Kind::Pick || op.kind == Operation::Kind::Move
                                               ? container
                                               : op.destination);
  if (op.kind == Operation::Kind::Stow) {
    auto dest = choose_destination_bin(op.item, "");
    if (!dest) {
      r.duration += world_.clock - op_t0;
      return Disposition::Postponed;
    }
    op.destination = *dest;
    clutter_at_plan_ = clutter_count(world_, op.destination);
  }

  PlanResult planned = plan_grasp(op, container, sensed.estimate);
  if (!planned.ok) {
    r.duration += world_.clock - op_t0;
    if (!planned.blocking_item.empty()) {
      blocked_by_[op.item] = planned.blocking_item;
      if (container == kToteLocation) {
        // in the tote the blocker is usually itself a pending target: pick it first
        auto pull = [&](auto& list) {
          for (auto it = list.begin(); it != list.end(); ++it)
            if (it->item == planned.blocking_item) {
              Operation other = *it;
              list.erase(it);
              plan_.queue.push_front(other);
              return true;
            }
          return false;
        };
        bool moved = pull(plan_.queue) || pull(plan_.postponed);
        if (moved) {
          log_.append(world_.clock, "reprioritized",
                      {{"blocking_item", planned.blocking_item}, {"target", op.item}});
        }
        return Disposition::Postponed;
      }
      if (relocations_used_[op.item] < ctx_.task.max_relocations) {
        auto dest = choose_destination_bin(planned.blocking_item, container);
        if (dest) {
          relocations_used_[op.item] += 1;
          Operation move_op;
          move_op.kind = Operation::Kind::Move;
          move_op.item = planned.blocking_item;
          move_op.source = container;
          move_op.destination = *dest;
          log_.append(world_.clock, "relocation",
                      {{"blocking_item", planned.blocking_item},
                       {"target", op.item},
                       {"destination", *dest}});
          plan_.queue.push_front(op);  // retry right after the move
          plan_.queue.push_front(move_op);
          return Disposition::RelocationScheduled;
        }
        return Disposition::Postponed;  // no destination has room
      }
      // relocation budget exhausted; detect mutual blocking
      auto other = blocked_by_.find(planned.blocking_item);
      if (other != blocked_by_.end() && other->second == op.item) {
        log_.append(world_.clock, "stall_detected",
                    {{"items", Json::array({op.item, planned.blocking_item})}});
        for (auto it = plan_.queue.begin(); it != plan_.queue.end();) {
          if (it->item == planned.blocking_item) {
            dispose(*it, Disposition::Abandoned, "stall");
            it = plan_.queue.erase(it);
          } else {
            ++it;
          }
        }
        for (auto it = plan_.postponed.begin(); it != plan_.postponed.end();) {
          if (it->item == planned.blocking_item) {
            dispose(*it, Disposition::Abandoned, "stall");
            it = plan_.postponed.erase(it);
          } else {
            ++it;
          }
        }
        return Disposition::Abandoned;
      }
    }
    return Disposition::Postponed;
  }

  // --- Act ---------------------------------------------------------------
  if (timed_out_now()) {
    note_timeout();
    r.duration += world_.clock - op_t0;
    return Disposition::TimedOut;
  }

  std::string entry_name = container == kToteLocation ? "tote_entry" : "entry_" + container;
  std::string carry_dest =
      op.kind == Operation::Kind::Stow ? "entry_" + op.destination : "tote_entry";
  Trajectory carry = ctx_.library->get(entry_name, carry_dest);
  Trajectory motion = stitch_and_time(*ctx_.chain, planned.plan, carry, planned.strategy, ctx_.planner);
  ExecutionSummary summary = executor_.execute(motion, world_, op.item, op.attempt_count, std::nullopt, log_);
  current_pose_ = carry_dest;

  // --- Verify / Dispose ----------------------------------------------------
  if (!summary.grasp_succeeded) {
    // no seal after the grasp-and-retreat: assume it dropped in the bin and retry later
    log_.append(world_.clock, "fallback",
                {{"item", op.item}, {"kind", "retry_later"}, {"reason", "no_seal_after_retreat"}});
    r.duration += world_.clock - op_t0;
    return Disposition::RetryLater;
  }

  if (summary.drop_location) {
    const std::string& where = *summary.drop_location;
    tracked_[op.item] = where;
    r.duration += world_.clock - op_t0;
    if (where == container) {
      // fell back into the source container: retry later
      log_.append(world_.clock, "fallback",
                  {{"item", op.item}, {"kind", "retry_later"}, {"reason", "seal_lost_in_" + where}});
      return Disposition::RetryLater;
    }
    if (op.kind == Operation::Kind::Pick && where == kToteLocation) {
      // broke the seal over the tote: counts as delivered
      log_.append(world_.clock, "op_complete",
                  {{"item", op.item},
                   {"kind", to_string(op.kind)},
                   {"outcome", "dropped_in_tote"},
                   {"clutter_at_plan", clutter_at_plan_},
                   {"points", points_awarded(op)}});
      total_points_ += points_awarded(op);
      r.outcome = "dropped_in_tote";
      r.points = points_awarded(op);
      return Disposition::Completed;
    }
    // transit drop: penalty, abandoned
    log_.append(world_.clock, "fallback",
                {{"item", op.item}, {"kind", "abandon"}, {"reason", "dropped_in_transit"}});
    return Disposition::Abandoned;
  }

  // carried to the drop-off: release into the tote, or shove into the bin
  if (op.kind == Operation::Kind::Pick) {
    Trajectory release;
    JointState q = world_.joint_state;
    release.waypoints.push_back({0.0, q, MotionPhase::Transit});
    release.waypoints.push_back({ctx_.task.release_dwell, q, MotionPhase::Transit});
    release.io_events.push_back(
        {ctx_.task.release_dwell, planned.strategy == GraspStrategy::Pinch ? "pinch_open" : "suction_off"});
    ExecutionSummary rel = executor_.execute(release, world_, op.item, op.attempt_count, std::nullopt, log_);
    if (!rel.placed && !rel.drop_location) {
      r.duration += world_.clock - op_t0;
      return Disposition::RetryLater;  // transit drop handled elsewhere; defensive
    }
    std::string where = rel.placed ? rel.place_location : *rel.drop_location;
    tracked_[op.item] = where;
    r.duration += world_.clock - op_t0;
    log_.append(world_.clock, "op_complete",
                {{"item", op.item},
                 {"kind", to_string(op.kind)},
                 {"outcome", rel.placed ? "placed" : "dropped_in_tote"},
                 {"clutter_at_plan", clutter_at_plan_},
                 {"points", points_awarded(op)}});
    total_points_ += points_awarded(op);
    r.outcome = rel.placed ? "placed" : "dropped_in_tote";
    r.points = points_awarded(op);
    return Disposition::Completed;
  }

  // stow / move: carry to the destination bin entry and shove it in
  StowTarget stow = compute_stow_placement(op.destination, op.item);
  if (!stow.feasible) {
    log_.append(world_.clock, "placement_infeasible", {{"item", op.item}, {"bin", op.destination}});
    r.duration += world_.clock - op_t0;
    return Disposition::RetryLater;
  }
  move_to("entry_" + op.destination);
  JointState entry_cfg = ctx_.library->configs.at("entry_" + op.destination);
  PlanRejection rej;
  auto shove = plan_stow_shove(*ctx_.chain, *ctx_.cell, op.destination, stow.insertion_x, stow.tip_z, entry_cfg,
                               planned.strategy, ctx_.planner, &rej);
  if (!shove) {
    log_.append(world_.clock, "shove_unplannable", {{"bin", op.destination}, {"detail", rej.detail}});
    r.duration += world_.clock - op_t0;
    return Disposition::RetryLater;
  }
  Trajectory shove_motion = stitch_and_time(*ctx_.chain, *shove, Trajectory{}, planned.strategy, ctx_.planner);
  ExecutionSummary placed = executor_.execute(shove_motion, world_, op.item, op.attempt_count, stow.placement, log_);
  r.duration += world_.clock - op_t0;

  if (placed.placed || (placed.drop_location && *placed.drop_location == op.destination)) {
    tracked_[op.item] = op.destination;
    std::string outcome = placed.placed ? "placed" : "dropped_in_destination";
    log_.append(world_.clock, "op_complete",
                {{"item", op.item},
                 {"kind", to_string(op.kind)},
                 {"outcome", outcome},
                 {"clutter_at_plan", clutter_at_plan_},
                 {"points", points_awarded(op)}});
    total_points_ += points_awarded(op);
    r.outcome = outcome;
    r.points = points_awarded(op);
    return Disposition::Completed;
  }
  if (placed.drop_location) {
    tracked_[op.item] = *placed.drop_location;
    if (*placed.drop_location == container) return Disposition::RetryLater;
    log_.append(world_.clock, "fallback",
                {{"item", op.item}, {"kind", "abandon"}, {"reason", "dropped_in_transit"}});
    return Disposition::Abandoned;
  }
  return Disposition::RetryLater;
}

int Coordinator::points_awarded(const Operation& op) const {
  if (op.kind == Operation::Kind::Move) return 0;
  return ctx_.score.base_points(clutter_at_plan_) + ctx_.score.item_bonus(op.item);
}

void Coordinator::dispose(Operation op, Disposition d, const std::string& note) {
  OperationRow& r = row(op);
  switch (d) {
    case Disposition::Completed:
      plan_.completed.push_back(op);
      break;
    case Disposition::RetryLater:
      if (op.attempt_count >= ctx_.task.max_attempts) {
        log_.append(world_.clock, "op_abandoned",
                    {{"item", op.item}, {"reason", "max_attempts"}, {"attempts", op.attempt_count}});
        r.outcome = "abandoned";
        plan_.abandoned.push_back(op);
      } else {
        log_.append(world_.clock, "op_requeued", {{"item", op.item}, {"attempts", op.attempt_count}});
        plan_.queue.push_back(op);
      }
      break;
    case Disposition::Postponed:
      if (op.attempt_count >= ctx_.task.max_attempts) {
        log_.append(world_.clock, "op_abandoned",
                    {{"item", op.item}, {"reason", note.empty() ? "max_attempts" : note}});
        r.outcome = "abandoned";
        plan_.abandoned.push_back(op);
      } else {
        log_.append(world_.clock, "op_postponed", {{"item", op.item}, {"reason", note}});
        plan_.postponed.push_back(op);
      }
      break;
    case Disposition::Abandoned:
      log_.append(world_.clock, "op_abandoned", {{"item", op.item}, {"reason", note}});
      r.outcome = "abandoned";
      plan_.abandoned.push_back(op);
      break;
    case Disposition::RelocationScheduled:
      break;  // already re-queued
    case Disposition::TimedOut:
      plan_.postponed.push_back(op);
      break;
  }
}

void Coordinator::finish_run(RunOutput& out) {
  // misplacements: tracked belief vs ground truth
  for (const auto& [id, st] : world_.items) {
    std::string believed = tracked_.count(id) ? tracked_.at(id) : st.location;
    if (believed != st.location) {
      log_.append(world_.clock, "misplace", {{"item", id}, {"reported", believed}, {"actual", st.location}});
      total_points_ -= ctx_.score.penalty_misplace;
    }
  }
  // floor drops were logged as drop events; subtract their penalties
  for (const auto& rec : log_.records())
    if (rec.type == "drop" && rec.payload.value("location", "") == kFloorLocation)
      total_points_ -= ctx_.score.penalty_drop;

  Json result;
  result["schema"] = "apc2016/1";
  Json bins = Json::object();
  for (const auto& bin : ctx_.cell->bins) bins[bin.id] = Json::array();
  Json tote = Json::array();
  Json floor = Json::array();
  for (const auto& [id, st] : world_.items) {
    std::string believed = tracked_.count(id) ? tracked_.at(id) : st.location;
    if (believed == kToteLocation)
      tote.push_back(id);
    else if (ctx_.cell->is_bin(believed))
      bins[believed].push_back(id);
    else
      floor.push_back(id);
  }
  result["bin_contents"] = bins;
  result["tote_contents"] = tote;
  result["floor"] = floor;

  out.total_points = total_points_;
  out.result_file = result;
  out.items_completed = (int)plan_.completed.size();
  out.items_abandoned = (int)plan_.abandoned.size();
  out.timed_out = timed_out_;
  out.sim_time = world_.clock;

  log_.append(world_.clock, "run_end",
              {{"total_points", total_points_},
               {"completed", out.items_completed},
               {"abandoned", out.items_abandoned},
               {"result", result}});
  out.final_world = world_;
  for (const auto& key : row_order_) out.rows.push_back(rows_.at(key));
  out.log = log_;
}

RunOutput Coordinator::run() {
  RunOutput out;
  world_ = make_initial_world(order_, *ctx_.cell, *ctx_.catalog, seed_);
  world_.joint_state = ctx_.library->configs.at("home");
  for (const auto& [id, st] : world_.items) tracked_[id] = st.location;

  log_.append(0.0, "run_header",
              {{"schema", "apcsim-trace/1"},
               {"mode", order_.mode},
               {"seed", seed_},
               {"task", parse_json(serialize_work_order(order_), "order")}});

  plan_ = plan_task(order_, world_, ctx_.score, *ctx_.cell, *ctx_.catalog);
  Json plan_json = Json::array();
  for (const auto& op : plan_.queue)
    plan_json.push_back({{"item", op.item}, {"kind", to_string(op.kind)}, {"points", op.planned_points}});
  log_.append(0.0, "plan_task", {{"queue", plan_json}});

  while (true) {
    if (plan_.queue.empty()) {
      // recycle postponed targets that still have attempts left
      if (plan_.postponed.empty() || timed_out_) break;
      bool any = false;
      for (auto& op : plan_.postponed)
        if (op.attempt_count < ctx_.task.max_attempts) {
          plan_.queue.push_back(op);
          any = true;
        } else {
          log_.append(world_.clock, "op_abandoned", {{"item", op.item}, {"reason", "attempts_exhausted"}});
          row(op).outcome = "abandoned";
          plan_.abandoned.push_back(op);
        }
      plan_.postponed.clear();
      if (!any) break;
      continue;
    }
    if (timed_out_now()) {
      note_timeout();
      break;
    }
    Operation op = plan_.queue.front();
    plan_.queue.pop_front();
    Disposition d = run_operation(op);
    if (d != Disposition::Completed) return_attached_to_source(op);
    dispose(op, d, d == Disposition::Postponed ? "plan_or_perception_failure" : "");
    if (d == Disposition::TimedOut) break;
  }
  finish_run(out);
  return out;
}

}  // namespace

std::string RunOutput::report_text() const {
  std::ostringstream os;
  os << "item                                 kind  att  outcome              points  duration_s\n";
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-36s %-5s %3d  %-20s %6d  %10.1f\n", r.item.c_str(), r.kind.c_str(),
                  r.attempts, r.outcome.empty() ? "-" : r.outcome.c_str(), r.points, r.duration);
    os << buf;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf), "total: %d points, %d completed, %d abandoned, %.1f s simulated%s\n", total_points,
                items_completed, items_abandoned, sim_time, timed_out ? " (timed out)" : "");
  os << buf;
  return os.str();
}

RunOutput run_task(const RunContext& ctx, const WorkOrder& order, std::uint64_t seed) {
  ctx.task.validate();
  ctx.perception.validate();
  ctx.failure.validate();
  ctx.score.validate();
  Coordinator coordinator(ctx, order, seed);
  return coordinator.run();
}

}  // namespace apcsim
