#include "apcsim/executor.hpp"

#include <algorithm>
#include <cmath>

namespace apcsim {

void FailureModel::validate() const {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(suction_nominal) || !prob(suction_heavy) || !prob(pinch_nominal))
    throw ValidationError("failure model probabilities must be in [0,1]");
  if (seal_loss_rate < 0.0 || seal_loss_mass_scale < 0.0)
    throw ValidationError("seal loss hazard must be non-negative");
  if (hazard_dt <= 0.0) throw ValidationError("hazard sampling step must be positive");
  for (const auto& [id, p] : item_suction_override)
    if (!prob(p)) throw ValidationError("suction override for " + id + " must be in [0,1]");
}

double FailureModel::suction_success(const ItemSpec& item, GraspStrategy, double alignment_error) const {
  double nominal = item.mass > heavy_mass_threshold ? suction_heavy : suction_nominal;
  if (auto it = item_suction_override.find(item.id); it != item_suction_override.end()) nominal = it->second;
  return std::clamp(nominal * std::exp(-std::abs(alignment_error) / alignment_scale), 0.0, 1.0);
}

double FailureModel::pinch_success(const ItemSpec& item, double gap_error) const {
  double nominal = pinch_nominal;
  if (auto it = item_suction_override.find(item.id); it != item_suction_override.end()) nominal = it->second;
  return std::clamp(nominal * std::exp(-std::abs(gap_error) / pinch_gap_scale), 0.0, 1.0);
}

double FailureModel::transit_hazard(double mass) const {
  return seal_loss_rate * (1.0 + seal_loss_mass_scale * mass);
}

bool Executor::check_seal(const WorldState& world) const {
  if (!suction_on_) return false;
  for (const auto& [id, st] : world.items)
    if (st.location == kGripperLocation) return true;
  return false;
}

bool Executor::check_attachment(const WorldState& world) const {
  for (const auto& [id, st] : world.items)
    if (st.location == kGripperLocation) return true;
  return false;
}

std::string Executor::drop_location_under(const Eigen::Vector3d& tool_pos) const {
  if (tool_pos.x() >= cell_.tote_inner_lo.x() && tool_pos.x() <= cell_.tote_inner_hi.x() &&
      tool_pos.y() >= cell_.tote_inner_lo.y() && tool_pos.y() <= cell_.tote_inner_hi.y())
    return kToteLocation;
  for (const auto& bin : cell_.bins) {
    if (tool_pos.x() >= bin.inner_lo.x() - 0.06 && tool_pos.x() <= bin.inner_hi.x() &&
        tool_pos.y() >= bin.inner_lo.y() && tool_pos.y() <= bin.inner_hi.y() && tool_pos.z() >= bin.inner_lo.z() &&
        tool_pos.z() <= bin.inner_hi.z())
      return bin.id;
  }
  return kFloorLocation;
}

std::optional<Pose> Executor::find_drop_pose(const WorldState& world, const std::string& item,
                                             const std::string& container) {
  const ItemSpec& spec = catalog_.get(item);
  Aabb ib = spec.local_aabb();
  Eigen::Vector3d lo, hi;
  cell_.container_interior(container, lo, hi);
  double margin_x = 0.5 * (ib.hi.x() - ib.lo.x()) + 1e-3;
  double margin_y = 0.5 * (ib.hi.y() - ib.lo.y()) + 1e-3;
  // uniformly random stable poses on the container floor until one is free
  for (int attempt = 0; attempt < 24; ++attempt) {
    double x = rng_.uniform(lo.x() + margin_x, hi.x() - margin_x);
    double y = rng_.uniform(lo.y() + margin_y, hi.y() - margin_y);
    Pose p;
    p.position = {x - ib.center().x(), y - ib.center().y(), lo.z() - ib.lo.z()};
    try {
      WorldState probe = world;
      probe.items.at(item).location = kStagedLocation;
      mutate(probe, PlaceMutation{item, container, p}, cell_, catalog_);
      return p;
    } catch (const IllegalPlacement&) {
      continue;
    }
  }
  return std::nullopt;
}

ExecutionSummary Executor::execute(const Trajectory& trajectory, WorldState& world, const std::string& target_item,
                                   int attempt_index, const std::optional<ReleasePlacement>& placement,
                                   EventLog& log) {
  ExecutionSummary summary;
  if (trajectory.waypoints.empty()) return summary;

  const ItemSpec* target_spec = target_item.empty() ? nullptr : &catalog_.get(target_item);
  const ScriptedAttempt* script = nullptr;
  if (target_spec && attempt_index >= 1) {
    auto it = fm_.scripts.find(target_item);
    if (it != fm_.scripts.end() && attempt_index - 1 < (int)it->second.size())
      script = &it->second[attempt_index - 1];
  }

  double t0 = world.clock;
  log.append(t0, "motion_start",
             {{"duration", trajectory.duration()},
              {"waypoints", trajectory.waypoints.size()},
              {"hash", trajectory.content_hash()}});

  GraspStrategy strategy = GraspStrategy::FrontSuction;
  std::string attached_item;
  Pose grasp_transform;
  // an item may already be riding on the gripper from a previous trajectory
  for (const auto& [id, st] : world.items)
    if (st.location == kGripperLocation) {
      attached_item = id;
      grasp_transform = st.grasp_transform;
    }
  double next_hazard_t = 0.0;
  bool dropped = false;

  // merge waypoints and io events into one time-ordered pass
  size_t io_idx = 0;
  auto handle_io = [&](const IoEvent& ev, const JointState& q_at) {
    double t = t0 + ev.t;
    log.append(t, "io", {{"command", ev.command}});
    if (ev.command.rfind("configure_strategy:", 0) == 0) {
      strategy = strategy_from_string(ev.command.substr(19));
      return;
    }
    if (ev.command == "suction_on" || ev.command == "pinch_close") {
      suction_on_ = ev.command == "suction_on";
      pinch_closed_ = ev.command == "pinch_close";
      if (!target_spec || dropped) return;
      summary.grasp_attempted = true;
      Pose tip = fk(chain_, q_at);
      // alignment error: executed contact point vs the true item surface
      double align = std::numeric_limits<double>::infinity();
      for (const auto& s : item_shapes_at(*target_spec, world.items.at(target_item).pose))
        align = std::min(align, std::abs(point_distance(s, tip.position)));
      double p = ev.command == "suction_on" ? fm_.suction_success(*target_spec, strategy, align)
                                            : fm_.pinch_success(*target_spec, align);
      double u = rng_.uniform01();
      bool success = script && script->grasp_succeeds ? *script->grasp_succeeds : u < p;
      log.append(t, "grasp_sample",
                 {{"item", target_item},
                  {"p", p},
                  {"draw", u},
                  {"alignment_error", align},
                  {"scripted", script && script->grasp_succeeds.has_value()},
                  {"success", success}});
      if (success) {
        Pose item_pose = world.items.at(target_item).pose;
        grasp_transform = Pose::from_isometry(tip.isometry().inverse() * item_pose.isometry());
        world = mutate(world, AttachMutation{target_item, grasp_transform}, cell_, catalog_);
        attached_item = target_item;
        summary.grasp_succeeded = true;
        log.append(t, "attach", {{"item", target_item}});
      }
      return;
    }
    if (ev.command == "suction_off" || ev.command == "pinch_open") {
      suction_on_ = false;
      pinch_closed_ = false;
      if (attached_item.empty() || dropped) return;
      Pose tip = fk(chain_, q_at);
      std::string loc;
      Pose pose;
      std::vector<std::pair<std::string, Pose>> pushed;
      if (placement) {
        loc = placement->location;
        pose = placement->pose;
        pushed = placement->pushed;
      } else {
        loc = drop_location_under(tip.position);
        if (loc != kFloorLocation) {
          auto p = find_drop_pose(world, attached_item, loc);
          if (p)
            pose = *p;
          else
            loc = kFloorLocation;
        }
      }
      for (const auto& [pushed_item, pushed_pose] : pushed) {
        world = mutate(world, PlaceMutation{pushed_item, world.items.at(pushed_item).location, pushed_pose}, cell_,
                       catalog_);
        log.append(t, "pushed_deeper", {{"item", pushed_item}});
      }
      if (loc == kFloorLocation) pose = Pose{tip.position, Eigen::Quaterniond::Identity()};
      world = mutate(world, DetachMutation{attached_item, loc, pose}, cell_, catalog_);
      log.append(t, "place", {{"item", attached_item}, {"location", loc}});
      summary.placed = true;
      summary.place_location = loc;
      attached_item.clear();
    }
  };

  auto drop_now = [&](double t, const JointState& q_at, const std::string& why) {
    Pose tip = fk(chain_, q_at);
    std::string loc = drop_location_under(tip.position);
    Pose pose;
    if (loc != kFloorLocation) {
      auto p = find_drop_pose(world, attached_item, loc);
      if (p)
        pose = *p;
      else
        loc = kFloorLocation;
    }
    if (loc == kFloorLocation)
      pose = Pose{Eigen::Vector3d(tip.position.x(), tip.position.y(), 0.0), Eigen::Quaterniond::Identity()};
    world = mutate(world, DetachMutation{attached_item, loc, pose}, cell_, catalog_);
    log.append(t, "seal_check", {{"sealed", false}, {"at", why}});
    log.append(t, "drop", {{"item", attached_item}, {"location", loc}, {"cause", why}});
    summary.drop_location = loc;
    summary.drop_time = t;
    attached_item.clear();
    suction_on_ = false;
    pinch_closed_ = false;
    dropped = true;
  };

  for (size_t wi = 0; wi < trajectory.waypoints.size(); ++wi) {
    const TimedWaypoint& wp = trajectory.waypoints[wi];
    double t_abs = t0 + wp.t;

    // transit seal-loss hazard while carrying; checked before this
    // waypoint's io so a scripted drop-at-dropoff precedes the release
    if (!attached_item.empty() && !dropped) {
      double mass = catalog_.get(attached_item).mass;
      double hazard = fm_.transit_hazard(mass);
      std::string forced_phase = script ? script->drop_during : "";
      if (!forced_phase.empty()) {
        bool due = false;
        if (forced_phase == "retreat" && wp.phase == MotionPhase::Retreat) due = true;
        if (forced_phase == "transit" && wp.phase == MotionPhase::Transit) due = true;
        if (forced_phase == "dropoff" && wi + 1 == trajectory.waypoints.size()) due = true;
        if (due) drop_now(t_abs, wp.q, "scripted:" + forced_phase);
      } else if (hazard > 0.0) {
        while (next_hazard_t <= wp.t && !dropped) {
          double p_tick = 1.0 - std::exp(-hazard * fm_.hazard_dt);
          double u = rng_.uniform01();
          if (u < p_tick) {
            log.append(t0 + next_hazard_t, "hazard_sample",
                       {{"tick_t", next_hazard_t}, {"p", p_tick}, {"draw", u}, {"lost", true}});
            drop_now(t0 + next_hazard_t, trajectory.sample(next_hazard_t), "transit");
          }
          next_hazard_t += fm_.hazard_dt;
        }
      }
    } else {
      next_hazard_t = wp.t + fm_.hazard_dt;
    }

    while (io_idx < trajectory.io_events.size() && trajectory.io_events[io_idx].t <= wp.t + 1e-12) {
      const IoEvent& ev = trajectory.io_events[io_idx];
      handle_io(ev, trajectory.sample(ev.t));
      ++io_idx;
    }

    world.joint_state = wp.q;
    world.clock = t_abs;

    // seal verification at the end of the retreat
    if (wi + 1 < trajectory.waypoints.size() && wp.phase == MotionPhase::Retreat &&
        trajectory.waypoints[wi + 1].phase == MotionPhase::Transit && summary.grasp_attempted) {
      log.append(t_abs, "seal_check", {{"sealed", check_seal(world)}, {"at", "retreat_end"}});
    }
  }

  // trailing io events (release at the final waypoint)
  while (io_idx < trajectory.io_events.size()) {
    const IoEvent& ev = trajectory.io_events[io_idx];
    handle_io(ev, trajectory.sample(ev.t));
    ++io_idx;
  }

  world.clock = t0 + trajectory.duration();
  log.append(world.clock, "motion_end", {{"t_end", world.clock}});
  return summary;
}

}  // namespace apcsim
