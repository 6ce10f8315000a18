#include "apcsim/perception.hpp"

#include <algorithm>
#include <cmath>

#include "apcsim/json_util.hpp"

namespace apcsim {

void PerceptionConfig::validate() const {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(detect_recall) || !prob(pose_failure_base)) throw ValidationError("perception probabilities must be in [0,1]");
  for (const auto& [id, p] : item_pose_failure)
    if (!prob(p)) throw ValidationError("perception override for " + id + " must be in [0,1]");
  if (latency < 0.0) throw ValidationError("perception latency must be >= 0");
  if (occlusion_exponent <= 0.0) throw ValidationError("occlusion exponent must be positive");
  if (max_viewpoint_attempts < 1) throw ValidationError("need at least one viewpoint attempt");
}

ViewpointTable ViewpointTable::load(const std::string& path) {
  Json j = load_json_file(path);
  ViewpointTable table;
  for (auto& [target, list] : j.at("viewpoints").items()) {
    std::vector<Pose> poses;
    for (const Json& pj : list) poses.push_back(pose_from_json(pj));
    if (poses.empty()) throw ValidationError("viewpoint table: empty pose list for " + target);
    table.poses[target] = poses;
  }
  return table;
}

// ---------------------------------------------------------------------------
// occlusion model
// ---------------------------------------------------------------------------

double visible_fraction(const WorldState& world, const Workcell& cell, const ItemCatalog& catalog,
                        const Eigen::Vector3d& camera_origin, const std::string& item_id, int ray_count) {
  auto target_it = world.items.find(item_id);
  if (target_it == world.items.end()) return 0.0;
  auto target_shapes = item_shapes_at(catalog.get(item_id), target_it->second.pose);

  Aabb target_box;
  for (const auto& s : target_shapes) target_box.merge(s.aabb);

  // occluders: other items plus the static scene, culled to the view cone
  std::vector<PlacedShape> item_storage;
  std::vector<const PlacedShape*> occluders;
  Aabb view_box = target_box;
  view_box.expand(camera_origin);
  for (const auto& [id, st] : world.items) {
    if (id == item_id || st.location == kGripperLocation || st.location == kStagedLocation) continue;
    for (const auto& s : item_shapes_at(catalog.get(id), st.pose))
      if (s.aabb.overlaps(view_box)) item_storage.push_back(s);
  }
  for (const auto& s : item_storage) occluders.push_back(&s);
  for (const auto& s : cell.static_shapes)
    if (s.aabb.overlaps(view_box)) occluders.push_back(&s);

  // deterministic ray targets, independent of the caller's rng stream
  RngStream ray_rng(fnv1a(item_id) ^ 0x5bd1e995u, "occlusion-rays");
  int hits = 0, first_hits = 0;
  for (int i = 0; i < ray_count; ++i) {
    Eigen::Vector3d p(ray_rng.uniform(target_box.lo.x(), target_box.hi.x()),
                      ray_rng.uniform(target_box.lo.y(), target_box.hi.y()),
                      ray_rng.uniform(target_box.lo.z(), target_box.hi.z()));
    Eigen::Vector3d dir = p - camera_origin;
    double len = dir.norm();
    if (len < 1e-9) continue;
    dir /= len;

    double t_target = std::numeric_limits<double>::infinity();
    for (const auto& s : target_shapes)
      if (auto t = ray_hit(s, camera_origin, dir)) t_target = std::min(t_target, *t);
    if (!std::isfinite(t_target)) continue;
    ++hits;

    bool blocked = false;
    for (const PlacedShape* occ : occluders) {
      if (auto t = ray_hit(*occ, camera_origin, dir)) {
        if (*t < t_target - 1e-9) {
          blocked = true;
          break;
        }
      }
    }
    if (!blocked) ++first_hits;
  }
  if (hits == 0) return 0.0;
  return (double)first_hits / hits;
}

// ---------------------------------------------------------------------------
// capture / pose estimation
// ---------------------------------------------------------------------------

CaptureResult capture(const WorldState& world, const Viewpoint& viewpoint, const PerceptionConfig& cfg,
                      const Workcell& cell, const ItemCatalog& catalog, RngStream& rng) {
  if (viewpoint.target != kToteLocation && !cell.is_bin(viewpoint.target))
    throw ValidationError("capture: invalid viewpoint target " + viewpoint.target);

  CaptureResult result;
  result.latency = cfg.latency;
  for (const auto& [id, st] : world.items) {
    if (st.location != viewpoint.target) continue;
    double vf = visible_fraction(world, cell, catalog, viewpoint.camera_pose.position, id);
    double keep = cfg.detect_recall * vf;
    if (rng.uniform01() >= keep) continue;  // dropped with probability 1 - recall*vf
    Detection d;
    d.item_id = id;
    d.visible_fraction = vf;
    d.confidence = std::clamp(keep + (cfg.confidence_noise_sd > 0 ? rng.normal(0.0, cfg.confidence_noise_sd) : 0.0),
                              0.0, 1.0);
    result.detections.push_back(d);
  }
  return result;
}

PoseEstimate estimate_pose(const WorldState& world, const Detection& detection, const Viewpoint& viewpoint,
                           const PerceptionConfig& cfg, const Workcell& cell, const ItemCatalog& catalog,
                           RngStream& rng) {
  auto it = world.items.find(detection.item_id);
  if (it == world.items.end() || it->second.location != viewpoint.target)
    throw ValidationError("estimate_pose: " + detection.item_id + " is not in the viewed container");

  double base = cfg.pose_failure_base;
  if (auto ov = cfg.item_pose_failure.find(detection.item_id); ov != cfg.item_pose_failure.end()) base = ov->second;
  double failure =
      std::clamp(base + std::pow(1.0 - detection.visible_fraction, cfg.occlusion_exponent) * (1.0 - base), 0.0, 1.0);

  PoseEstimate est;
  if (rng.uniform01() < failure) {
    est.success = false;
    return est;
  }

  Pose noisy = it->second.pose;
  if (cfg.pose_noise_sd_translation > 0.0) {
    for (int i = 0; i < 3; ++i) noisy.position[i] += rng.normal(0.0, cfg.pose_noise_sd_translation);
  }
  if (cfg.pose_noise_sd_rotation > 0.0) {
    // random axis, normal-distributed angle
    double z = rng.uniform(-1.0, 1.0);
    double th = rng.uniform(0.0, 2.0 * M_PI);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    Eigen::Vector3d axis(r * std::cos(th), r * std::sin(th), z);
    double angle = rng.normal(0.0, cfg.pose_noise_sd_rotation);
    noisy.orientation = (Eigen::AngleAxisd(angle, axis) * noisy.orientation).normalized();
  }

  // gravity heuristic: objects cannot float just above the container floor
  Eigen::Vector3d lo, hi;
  cell.container_interior(it->second.location, lo, hi);
  double low_z = std::numeric_limits<double>::infinity();
  for (const auto& s : item_shapes_at(catalog.get(detection.item_id), noisy))
    low_z = std::min(low_z, lowest_point_z(s));
  double gap = low_z - lo.z();
  if (gap < 0.02) noisy.position.z() -= gap;

  est.success = true;
  est.pose = noisy;
  est.translational_error_bound = 3.0 * cfg.pose_noise_sd_translation + 1e-6;
  return est;
}

std::optional<Viewpoint> next_viewpoint(const ViewpointTable& table, const PerceptionConfig& cfg,
                                        const std::string& target, int attempt_index) {
  if (attempt_index < 0) throw ValidationError("next_viewpoint: negative attempt index");
  if (attempt_index >= cfg.max_viewpoint_attempts) return std::nullopt;
  auto it = table.poses.find(target);
  if (it == table.poses.end()) throw ValidationError("no viewpoints configured for " + target);
  Viewpoint vp;
  vp.target = target;
  vp.attempt_index = attempt_index;
  // the tote camera is fixed on a pole: attempts repeat the overhead pose
  vp.camera_pose = it->second[std::min<size_t>(attempt_index, it->second.size() - 1)];
  vp.robot_mounted = target != kToteLocation;
  return vp;
}

std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> segment_surface(const WorldState& world,
                                                                         const ItemCatalog& catalog,
                                                                         const std::string& item_id,
                                                                         const Eigen::Vector3d& camera_origin,
                                                                         const PerceptionConfig& cfg, RngStream& rng,
                                                                         int max_samples) {
  auto it = world.items.find(item_id);
  if (it == world.items.end()) throw ValidationError("segment_surface: unknown item " + item_id);
  const ItemSpec& spec = catalog.get(item_id);

  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> out;
  Eigen::Isometry3d iso = it->second.pose.isometry();
  RngStream sample_rng(fnv1a(item_id) ^ 0xc2b2ae35u, "segment-surface");
  for (const auto& shape : spec.shapes) {
    double area = shape.surface_area();
    double density = std::max(200.0, (double)max_samples / std::max(area, 1e-4));
    for (const auto& s : sample_surface(shape, density, sample_rng)) {
      Eigen::Vector3d p = iso * s.point;
      Eigen::Vector3d n = iso.linear() * s.normal;
      if (n.dot(camera_origin - p) <= 0.0) continue;  // back-facing
      if (cfg.pose_noise_sd_translation > 0.0)
        for (int i = 0; i < 3; ++i) p[i] += rng.normal(0.0, cfg.pose_noise_sd_translation);
      out.emplace_back(p, n);
      if ((int)out.size() >= max_samples) return out;
    }
  }
  return out;
}

}  // namespace apcsim
