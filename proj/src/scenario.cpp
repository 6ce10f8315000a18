#include "apcsim/scenario.hpp"

#include <filesystem>

#include "apcsim/json_util.hpp"

namespace apcsim {

namespace {

namespace fs = std::filesystem;

std::string resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base_dir / path).lexically_normal().string();
}

ScoreConfig score_from_json(const Json& j) {
  ScoreConfig cfg = ScoreConfig::defaults();
  if (j.contains("clutter_thresholds")) {
    cfg.clutter_thresholds.clear();
    for (const Json& t : j.at("clutter_thresholds"))
      cfg.clutter_thresholds.push_back({t.at(0).get<int>(), t.at(1).get<int>()});
  }
  if (j.contains("bonus"))
    for (auto& [item, pts] : j.at("bonus").items()) cfg.bonus[item] = pts.get<int>();
  cfg.penalty_drop = j.value("penalty_drop", cfg.penalty_drop);
  cfg.penalty_misplace = j.value("penalty_misplace", cfg.penalty_misplace);
  cfg.validate();
  return cfg;
}

PerceptionConfig perception_from_json(const Json& j) {
  PerceptionConfig cfg;
  cfg.detect_recall = j.value("detect_recall", cfg.detect_recall);
  cfg.confidence_noise_sd = j.value("confidence_noise_sd", cfg.confidence_noise_sd);
  cfg.pose_noise_sd_translation = j.value("pose_noise_sd_translation", cfg.pose_noise_sd_translation);
  cfg.pose_noise_sd_rotation = j.value("pose_noise_sd_rotation", cfg.pose_noise_sd_rotation);
  cfg.pose_failure_base = j.value("pose_failure_base", cfg.pose_failure_base);
  cfg.occlusion_exponent = j.value("occlusion_exponent", cfg.occlusion_exponent);
  cfg.latency = j.value("latency", cfg.latency);
  cfg.max_viewpoint_attempts = j.value("max_viewpoint_attempts", cfg.max_viewpoint_attempts);
  if (j.contains("item_pose_failure"))
    for (auto& [item, p] : j.at("item_pose_failure").items()) cfg.item_pose_failure[item] = p.get<double>();
  cfg.validate();
  return cfg;
}

FailureModel failure_from_json(const Json& j) {
  FailureModel fm;
  fm.suction_nominal = j.value("suction_nominal", fm.suction_nominal);
  fm.suction_heavy = j.value("suction_heavy", fm.suction_heavy);
  fm.heavy_mass_threshold = j.value("heavy_mass_threshold", fm.heavy_mass_threshold);
  fm.alignment_scale = j.value("alignment_scale", fm.alignment_scale);
  fm.pinch_nominal = j.value("pinch_nominal", fm.pinch_nominal);
  fm.pinch_gap_scale = j.value("pinch_gap_scale", fm.pinch_gap_scale);
  fm.seal_loss_rate = j.value("seal_loss_rate", fm.seal_loss_rate);
  fm.seal_loss_mass_scale = j.value("seal_loss_mass_scale", fm.seal_loss_mass_scale);
  fm.hazard_dt = j.value("hazard_dt", fm.hazard_dt);
  if (j.contains("item_suction_override"))
    for (auto& [item, p] : j.at("item_suction_override").items()) fm.item_suction_override[item] = p.get<double>();
  if (j.contains("scripts")) {
    for (auto& [item, attempts] : j.at("scripts").items()) {
      std::vector<ScriptedAttempt> list;
      for (const Json& a : attempts) {
        ScriptedAttempt sa;
        if (a.contains("grasp_succeeds")) sa.grasp_succeeds = a.at("grasp_succeeds").get<bool>();
        sa.drop_during = a.value("drop_during", "");
        list.push_back(sa);
      }
      fm.scripts[item] = list;
    }
  }
  fm.validate();
  return fm;
}

TaskConfig task_from_json(const Json& j) {
  TaskConfig cfg;
  cfg.max_attempts = j.value("max_attempts", cfg.max_attempts);
  cfg.max_relocations = j.value("max_relocations", cfg.max_relocations);
  cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
  cfg.grasp_density = j.value("grasp_density", cfg.grasp_density);
  cfg.release_dwell = j.value("release_dwell", cfg.release_dwell);
  cfg.score_weights.com_distance = j.value("weight_com_distance", cfg.score_weights.com_distance);
  cfg.score_weights.tilt = j.value("weight_tilt", cfg.score_weights.tilt);
  cfg.score_weights.strategy_preference = j.value("weight_strategy", cfg.score_weights.strategy_preference);
  cfg.validate();
  return cfg;
}

PlannerParams planner_from_json(const Json& j) {
  PlannerParams p;
  p.rrt_step = j.value("rrt_step", p.rrt_step);
  p.rrt_max_iterations = j.value("rrt_max_iterations", p.rrt_max_iterations);
  p.shortcut_iterations = j.value("shortcut_iterations", p.shortcut_iterations);
  p.cartesian_step = j.value("cartesian_step", p.cartesian_step);
  p.collision_resolution = j.value("collision_resolution", p.collision_resolution);
  p.time_sample_dt = j.value("time_sample_dt", p.time_sample_dt);
  return p;
}

}  // namespace

Scenario Scenario::load(const std::string& config_path) {
  Json j = load_json_file(config_path);
  if (j.value("schema", "") != "apcsim-config/1")
    throw ParseError(config_path + ": missing or unsupported config schema");
  fs::path base = fs::path(config_path).parent_path();

  Scenario s;
  const Json& data = j.at("data");
  s.cell = Workcell::load(resolve(base, data.at("workcell").get<std::string>()));
  s.catalog = ItemCatalog::load(resolve(base, data.at("catalog").get<std::string>()));
  s.chain = KinematicChain::load(resolve(base, data.at("kinematics").get<std::string>()));
  s.viewpoints = ViewpointTable::load(resolve(base, data.at("viewpoints").get<std::string>()));

  s.score = j.contains("score") ? score_from_json(j.at("score")) : ScoreConfig::defaults();
  s.perception = j.contains("perception") ? perception_from_json(j.at("perception")) : PerceptionConfig{};
  s.failure = j.contains("failure") ? failure_from_json(j.at("failure")) : FailureModel{};
  s.task = j.contains("task") ? task_from_json(j.at("task")) : TaskConfig{};
  s.planner = j.contains("planner") ? planner_from_json(j.at("planner")) : PlannerParams{};

  // speed scaling for scenario variants (slow-motion timeout tests)
  double speed_scale = j.value("speed_scale", 1.0);
  if (speed_scale != 1.0) {
    if (speed_scale <= 0.0) throw ValidationError("speed_scale must be positive");
    s.chain.rail_limits.vmax *= speed_scale;
    s.chain.rail_limits.amax *= speed_scale;
    for (auto& joint : s.chain.joints) {
      joint.limits.vmax *= speed_scale;
      joint.limits.amax *= speed_scale;
    }
  }

  // named poses: home, tote entry, per-bin camera and entry poses
  Json model = load_json_file(resolve(base, data.at("kinematics").get<std::string>()));
  if (model.contains("home_seed")) {
    const Json& hs = model.at("home_seed");
    s.named_poses.home_seed.rail_position = hs.at(0).get<double>();
    for (int i = 0; i < 7; ++i) s.named_poses.home_seed.joint_angles[i] = hs.at(i + 1).get<double>();
  }

  Json poses = load_json_file(resolve(base, data.at("viewpoints").get<std::string>()));
  const Json& named = poses.at("named_poses");
  for (auto& [name, pj] : named.items()) s.named_poses.poses[name] = pose_from_json(pj);
  for (const auto& bin : s.cell.bins) {
    if (!s.named_poses.poses.count("camera_" + bin.id))
      throw ValidationError("viewpoints file lacks camera pose for " + bin.id);
    if (!s.named_poses.poses.count("entry_" + bin.id))
      throw ValidationError("viewpoints file lacks entry pose for " + bin.id);
  }
  if (!s.named_poses.poses.count("home") || !s.named_poses.poses.count("tote_entry"))
    throw ValidationError("viewpoints file must define home and tote_entry poses");

  // required directed pairs: home/tote hub plus per-bin spokes
  auto& pairs = s.named_poses.pairs;
  pairs.push_back({"home", "tote_entry"});
  for (const auto& bin : s.cell.bins) {
    pairs.push_back({"home", "camera_" + bin.id});
    pairs.push_back({"tote_entry", "camera_" + bin.id});
    pairs.push_back({"camera_" + bin.id, "entry_" + bin.id});
    pairs.push_back({"entry_" + bin.id, "tote_entry"});
  }

  // viewpoint reachability (robot-mounted cameras only; the tote camera is
  // fixed on a pole above the tote)
  for (const auto& [target, vps] : s.viewpoints.poses) {
    if (target == kToteLocation) continue;
    if (!s.cell.is_bin(target)) throw ValidationError("viewpoint table references unknown container " + target);
    for (const Pose& vp : vps)
      if (!ik(s.chain, vp, s.named_poses.home_seed))
        throw ValidationError("viewpoint for " + target + " is not reachable");
  }
  return s;
}

OfflineLibrary Scenario::offline_library(std::uint64_t seed, const std::string& cache_dir,
                                         bool force_rebuild) const {
  std::uint64_t fp = library_fingerprint(chain, cell, named_poses, seed, planner);
  fs::path cache_file;
  if (!cache_dir.empty()) {
    char name[64];
    std::snprintf(name, sizeof(name), "library_%016llx.json", (unsigned long long)fp);
    cache_file = fs::path(cache_dir) / name;
    if (!force_rebuild && fs::exists(cache_file)) {
      OfflineLibrary lib = OfflineLibrary::from_json(read_file(cache_file.string()));
      if (lib.fingerprint == fp) return lib;
    }
  }
  OfflineLibrary lib = build_offline_library(chain, cell, named_poses, seed, planner);
  if (!cache_dir.empty()) {
    fs::create_directories(cache_dir);
    write_file(cache_file.string(), lib.to_json());
  }
  return lib;
}

RunContext Scenario::context(const OfflineLibrary& library) const {
  RunContext ctx;
  ctx.cell = &cell;
  ctx.catalog = &catalog;
  ctx.chain = &chain;
  ctx.viewpoints = &viewpoints;
  ctx.library = &library;
  ctx.perception = perception;
  ctx.failure = failure;
  ctx.score = score;
  ctx.task = task;
  ctx.planner = planner;
  return ctx;
}

}  // namespace apcsim
