#include "apcsim/world_model.hpp"

#include <algorithm>
#include <numeric>

#include "apcsim/json_util.hpp"

namespace apcsim {

GraspStrategy strategy_from_string(const std::string& s) {
  if (s == "front_suction") return GraspStrategy::FrontSuction;
  if (s == "side_top_suction") return GraspStrategy::SideTopSuction;
  if (s == "pinch") return GraspStrategy::Pinch;
  throw ParseError("unknown grasp strategy: " + s);
}

std::string to_string(GraspStrategy s) {
  switch (s) {
    case GraspStrategy::FrontSuction: return "front_suction";
    case GraspStrategy::SideTopSuction: return "side_top_suction";
    case GraspStrategy::Pinch: return "pinch";
  }
  return "?";
}

std::string to_string(Operation::Kind k) {
  switch (k) {
    case Operation::Kind::Pick: return "pick";
    case Operation::Kind::Stow: return "stow";
    case Operation::Kind::Move: return "move";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// item catalog
// ---------------------------------------------------------------------------

void ItemSpec::validate() const {
  if (id.empty()) throw ValidationError("item id must be non-empty");
  if (shapes.empty()) throw ValidationError(id + ": needs at least one shape");
  if (mass <= 0.0) throw ValidationError(id + ": mass must be positive");
  if (allowed_strategies.empty()) throw ValidationError(id + ": needs at least one allowed strategy");
  for (const auto& s : shapes) s.validate();

  // the shape union must be connected: union-find over near-touching pairs
  const double adjacency_tol = 1e-3;
  std::vector<int> parent(shapes.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
  Eigen::Isometry3d eye = Eigen::Isometry3d::Identity();
  for (size_t i = 0; i < shapes.size(); ++i)
    for (size_t j = i + 1; j < shapes.size(); ++j) {
      PairResult d = shape_distance(PlacedShape::make(shapes[i], eye), PlacedShape::make(shapes[j], eye));
      if (d.intersecting() || d.distance <= adjacency_tol) parent[find(i)] = find(j);
    }
  int root = find(0);
  for (size_t i = 1; i < shapes.size(); ++i)
    if (find(i) != root) throw ValidationError(id + ": shape union is not connected");
}

Aabb ItemSpec::local_aabb() const {
  Aabb box;
  Eigen::Isometry3d eye = Eigen::Isometry3d::Identity();
  for (const auto& s : shapes) box.merge(PlacedShape::make(s, eye).aabb);
  return box;
}

double ItemSpec::bounding_volume() const {
  Aabb box = local_aabb();
  Eigen::Vector3d e = box.hi - box.lo;
  return e.x() * e.y() * e.z();
}

namespace {

PrimitiveShape shape_from_json(const Json& j) {
  PrimitiveShape s;
  s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
  const Json& d = j.at("dims");
  s.dims = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < d.size() && i < 3; ++i) s.dims[i] = d[i].get<double>();
  if (j.contains("pose")) s.local_pose = pose_from_json(j.at("pose"));
  return s;
}

HeuristicRule rule_from_json(const Json& j) {
  HeuristicRule r;
  r.id = j.at("id").get<std::string>();
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "half_space")
    r.kind = HeuristicRule::Kind::HalfSpace;
  else if (kind == "cone")
    r.kind = HeuristicRule::Kind::Cone;
  else if (kind == "axis_bound")
    r.kind = HeuristicRule::Kind::AxisBound;
  else
    throw ParseError("unknown heuristic rule kind: " + kind);
  r.effect = j.value("effect", "forbid") == "require" ? HeuristicRule::Effect::Require : HeuristicRule::Effect::Forbid;
  r.axis = vec3_from_json(j.at("axis")).normalized();
  r.offset = j.value("offset", 0.0);
  r.angle = j.value("angle_deg", 0.0) * M_PI / 180.0;
  return r;
}

}  // namespace

ItemCatalog ItemCatalog::load(const std::string& path) {
  Json j = load_json_file(path);
  ItemCatalog cat;
  for (const Json& e : j.at("items")) {
    ItemSpec spec;
    spec.id = e.at("id").get<std::string>();
    for (const Json& sj : e.at("shapes")) spec.shapes.push_back(shape_from_json(sj));
    spec.mass = e.at("mass").get<double>();
    if (e.contains("center_of_mass")) spec.center_of_mass = vec3_from_json(e.at("center_of_mass"));
    spec.deformable = e.value("deformable", false);
    for (const Json& s : e.at("allowed_strategies"))
      spec.allowed_strategies.push_back(strategy_from_string(s.get<std::string>()));
    spec.bonus_points = e.value("bonus_points", 0);
    if (e.contains("heuristic_rules"))
      for (const Json& rj : e.at("heuristic_rules")) spec.heuristic_rules.push_back(rule_from_json(rj));
    spec.validate();
    if (cat.specs_.count(spec.id)) throw ValidationError("duplicate item id in catalog: " + spec.id);
    cat.specs_.emplace(spec.id, std::move(spec));
  }
  return cat;
}

const ItemSpec& ItemCatalog::get(const std::string& id) const {
  auto it = specs_.find(id);
  if (it == specs_.end()) throw ValidationError("unknown item: " + id);
  return it->second;
}

// ---------------------------------------------------------------------------
// workcell
// ---------------------------------------------------------------------------

Workcell Workcell::load(const std::string& path) {
  Json j = load_json_file(path);
  Workcell cell;

  const Json& shelf = j.at("shelf");
  Eigen::Vector3d origin = vec3_from_json(shelf.at("front_bottom_left"));  // outer corner, opening side
  double bw = shelf.at("bin_inner_width").get<double>();
  double bh = shelf.at("bin_inner_height").get<double>();
  double bd = shelf.at("bin_inner_depth").get<double>();
  double wall = shelf.at("wall_thickness").get<double>();
  int cols = 3, rows = 4;
  if (bd <= bw) throw ValidationError("bins must be deeper than wide");

  // bin_A..bin_L, row-major from top-left when facing the shelf opening
  const char* names = "ABCDEFGHIJKL";
  double shelf_w = cols * bw + (cols + 1) * wall;
  double shelf_h = rows * bh + (rows + 1) * wall;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      BinGeometry bin;
      bin.id = std::string("bin_") + names[r * cols + c];
      // facing the opening (-x), bin_A is top-left, i.e. largest y, largest z
      double y_lo = origin.y() + shelf_w - (c + 1) * (bw + wall);
      double z_lo = origin.z() + shelf_h - (r + 1) * (bh + wall);
      bin.inner_lo = {origin.x() + wall, y_lo, z_lo};
      bin.inner_hi = {origin.x() + wall + bd, y_lo + bw, z_lo + bh};
      bin.opening_outward_normal = {-1, 0, 0};
      cell.bins.push_back(bin);
    }

  auto add_box = [&](const std::string& name, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    PrimitiveShape s;
    s.kind = ShapeKind::Box;
    s.dims = hi - lo;
    s.local_pose.position = 0.5 * (lo + hi);
    cell.static_shapes.push_back(PlacedShape::make(s, Eigen::Isometry3d::Identity()));
    cell.static_shape_names.push_back(name);
  };

  // shelf structure: back panel, side walls, horizontal shelves, vertical dividers
  double x0 = origin.x(), x1 = origin.x() + wall + bd;
  add_box("shelf_back", {x1, origin.y(), origin.z()}, {x1 + wall, origin.y() + shelf_w, origin.z() + shelf_h});
  for (int c = 0; c <= cols; ++c) {
    double y = origin.y() + c * (bw + wall);
    add_box("shelf_vwall_" + std::to_string(c), {x0, y, origin.z()}, {x1, y + wall, origin.z() + shelf_h});
  }
  for (int r = 0; r <= rows; ++r) {
    double z = origin.z() + r * (bh + wall);
    add_box("shelf_hwall_" + std::to_string(r), {x0, origin.y(), z}, {x1, origin.y() + shelf_w, z + wall});
  }

  const Json& tote = j.at("tote");
  Eigen::Vector3d tlo = vec3_from_json(tote.at("inner_lo"));
  Eigen::Vector3d thi = vec3_from_json(tote.at("inner_hi"));
  double twall = tote.value("wall_thickness", 0.01);
  cell.tote_inner_lo = tlo;
  cell.tote_inner_hi = thi;
  add_box("tote_bottom", {tlo.x() - twall, tlo.y() - twall, tlo.z() - twall}, {thi.x() + twall, thi.y() + twall, tlo.z()});
  add_box("tote_wall_xlo", {tlo.x() - twall, tlo.y() - twall, tlo.z()}, {tlo.x(), thi.y() + twall, thi.z()});
  add_box("tote_wall_xhi", {thi.x(), tlo.y() - twall, tlo.z()}, {thi.x() + twall, thi.y() + twall, thi.z()});
  add_box("tote_wall_ylo", {tlo.x(), tlo.y() - twall, tlo.z()}, {thi.x(), tlo.y(), thi.z()});
  add_box("tote_wall_yhi", {tlo.x(), thi.y(), tlo.z()}, {thi.x(), thi.y() + twall, thi.z()});

  const Json& rail = j.at("rail_envelope");
  cell.rail_envelope.lo = vec3_from_json(rail.at("lo"));
  cell.rail_envelope.hi = vec3_from_json(rail.at("hi"));
  if (x0 - cell.rail_envelope.hi.x() < 0.10)
    throw ValidationError("shelf front face must be at least 0.10 m from the robot base envelope");
  if (cell.bins.size() != 12) throw ValidationError("shelf must have exactly 12 bins");
  return cell;
}

const BinGeometry& Workcell::bin(const std::string& id) const {
  for (const auto& b : bins)
    if (b.id == id) return b;
  throw ValidationError("unknown bin: " + id);
}

bool Workcell::is_bin(const std::string& id) const {
  for (const auto& b : bins)
    if (b.id == id) return true;
  return false;
}

void Workcell::container_interior(const std::string& location, Eigen::Vector3d& lo, Eigen::Vector3d& hi) const {
  if (location == kToteLocation) {
    lo = tote_inner_lo;
    hi = tote_inner_hi;
    return;
  }
  const BinGeometry& b = bin(location);
  lo = b.inner_lo;
  hi = b.inner_hi;
}

// ---------------------------------------------------------------------------
// work order
// ---------------------------------------------------------------------------

WorkOrder load_work_order(const std::string& json_text, const Workcell& cell, const ItemCatalog& catalog) {
  Json j = parse_json(json_text, "work order");
  if (j.value("schema", "") != "apc2016/1") throw ParseError("work order: missing or unsupported schema");
  WorkOrder order;
  order.mode = j.at("mode").get<std::string>();
  if (order.mode != "pick" && order.mode != "stow") throw ValidationError("mode must be pick or stow");

  std::map<std::string, std::string> seen;  // item -> location
  for (auto& [bin, items] : j.at("bin_contents").items()) {
    if (!cell.is_bin(bin)) throw ValidationError("unknown bin in work order: " + bin);
    for (const Json& it : items) {
      std::string id = it.get<std::string>();
      if (!catalog.contains(id)) throw ValidationError("unknown item in work order: " + id);
      if (seen.count(id)) throw ValidationError("item appears in more than one location: " + id);
      seen[id] = bin;
      order.bin_contents[bin].push_back(id);
    }
  }
  for (const Json& it : j.at("tote_contents")) {
    std::string id = it.get<std::string>();
    if (!catalog.contains(id)) throw ValidationError("unknown item in work order: " + id);
    if (seen.count(id)) throw ValidationError("item appears in more than one location: " + id);
    seen[id] = kToteLocation;
    order.tote_contents.push_back(id);
  }
  for (const Json& t : j.at("work_order")) {
    WorkOrderTarget target{t.at("item").get<std::string>(), t.at("source").get<std::string>()};
    auto it = seen.find(target.item);
    if (it == seen.end() || it->second != target.source)
      throw ValidationError("target not present at stated source: " + target.item);
    order.targets.push_back(target);
  }
  if (order.targets.empty()) throw ValidationError("work order has no targets");
  return order;
}

WorkOrder load_work_order_file(const std::string& path, const Workcell& cell, const ItemCatalog& catalog) {
  return load_work_order(read_file(path), cell, catalog);
}

std::string serialize_work_order(const WorkOrder& order) {
  Json j;
  j["schema"] = "apc2016/1";
  j["mode"] = order.mode;
  Json bins = Json::object();
  for (const auto& [bin, items] : order.bin_contents) bins[bin] = items;
  j["bin_contents"] = bins;
  j["tote_contents"] = order.tote_contents;
  Json targets = Json::array();
  for (const auto& t : order.targets) targets.push_back(Json{{"item", t.item}, {"source", t.source}});
  j["work_order"] = targets;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// world state
// ---------------------------------------------------------------------------

std::vector<PlacedShape> item_shapes_at(const ItemSpec& spec, const Pose& pose) {
  std::vector<PlacedShape> out;
  out.reserve(spec.shapes.size());
  Eigen::Isometry3d iso = pose.isometry();
  for (const auto& s : spec.shapes) out.push_back(PlacedShape::make(s, iso));
  return out;
}

int clutter_count(const WorldState& world, const std::string& bin) {
  int n = 0;
  for (const auto& [id, st] : world.items)
    if (st.location == bin) ++n;
  return n;
}

namespace {

void check_placement_legal(const WorldState& world, const std::string& item, const Pose& pose,
                           const std::string& location, const Workcell& cell, const ItemCatalog& catalog) {
  if (location == kFloorLocation || location == kGripperLocation || location == kStagedLocation) return;

  const ItemSpec& spec = catalog.get(item);
  auto shapes = item_shapes_at(spec, pose);

  Eigen::Vector3d lo, hi;
  cell.container_interior(location, lo, hi);
  const double wall_tol = 1e-6;
  for (const auto& s : shapes) {
    if ((s.aabb.lo.array() < lo.array() - wall_tol).any() || (s.aabb.hi.array() > hi.array() + wall_tol).any())
      throw IllegalPlacement(item + " does not fit inside " + location, item, location, 0.0);
  }

  const double overlap_tol = 1e-3;  // 1 mm
  for (const auto& [other_id, st] : world.items) {
    if (other_id == item || st.location != location) continue;
    auto other_shapes = item_shapes_at(catalog.get(other_id), st.pose);
    for (const auto& a : shapes)
      for (const auto& b : other_shapes) {
        if (!a.aabb.overlaps(b.aabb)) continue;
        PairResult d = shape_distance(a, b);
        if (d.penetration > overlap_tol) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "placing %s overlaps %s by %.4f mm", item.c_str(), other_id.c_str(),
                        d.penetration * 1e3);
          throw IllegalPlacement(buf, item, other_id, d.penetration);
        }
      }
  }
}

}  // namespace

WorldState mutate(const WorldState& world, const MutationEvent& event, const Workcell& cell,
                  const ItemCatalog& catalog) {
  WorldState next = world;
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        auto it = next.items.find(ev.item);
        if (it == next.items.end()) throw ValidationError("mutate: unknown item " + ev.item);
        if constexpr (std::is_same_v<T, PlaceMutation>) {
          check_placement_legal(world, ev.item, ev.pose, ev.location, cell, catalog);
          it->second.location = ev.location;
          it->second.pose = ev.pose;
        } else if constexpr (std::is_same_v<T, RemoveMutation>) {
          it->second.location = kStagedLocation;
        } else if constexpr (std::is_same_v<T, AttachMutation>) {
          it->second.location = kGripperLocation;
          it->second.grasp_transform = ev.grasp_transform;
        } else if constexpr (std::is_same_v<T, DetachMutation>) {
          check_placement_legal(world, ev.item, ev.pose, ev.location, cell, catalog);
          it->second.location = ev.location;
          it->second.pose = ev.pose;
        }
      },
      event);
  return next;
}

// ---------------------------------------------------------------------------
// initial placement
// ---------------------------------------------------------------------------

namespace {

/// Rest the item on a floor plane with its AABB center at (x, y), identity
/// orientation.
Pose resting_pose(const ItemSpec& spec, double x, double y, double floor_z) {
  Aabb box = spec.local_aabb();
  Pose p;
  p.position = {x - box.center().x(), y - box.center().y(), floor_z - box.lo.z()};
  return p;
}

/// First legal floor position scanning the container. Bins fill back-to-front
/// center-out (items listed first end up deepest); the tote fills row-major.
void place_scanning(WorldState& world, const std::string& item, const std::string& container, const Workcell& cell,
                    const ItemCatalog& catalog) {
  const ItemSpec& spec = catalog.get(item);
  Aabb ib = spec.local_aabb();
  double hx = 0.5 * (ib.hi.x() - ib.lo.x());
  double hy = 0.5 * (ib.hi.y() - ib.lo.y());
  Eigen::Vector3d lo, hi;
  cell.container_interior(container, lo, hi);
  if (container == kToteLocation) {
    // keep tote items off the walls so the vertical gripper can get at them
    lo.x() += 0.020;
    lo.y() += 0.020;
    hi.x() -= 0.020;
    hi.y() -= 0.020;
  }

  const double step = 0.015;
  const double margin = 1.5e-3;
  std::vector<double> xs, ys;
  for (double x = hi.x() - hx - margin; x >= lo.x() + hx + margin - 1e-9; x -= step) xs.push_back(x);
  // left-to-right at each depth, so items listed together pack side by side
  for (double y = hi.y() - hy - margin; y >= lo.y() + hy + margin - 1e-9; y -= step) ys.push_back(y);
  if (ys.empty()) ys.push_back(0.5 * (lo.y() + hi.y()));
  if (xs.empty()) xs.push_back(0.5 * (lo.x() + hi.x()));
  // the tote keeps working clearance between items so the vertical gripper
  // can descend beside each one
  double gap = container == kToteLocation ? 0.015 : 0.0;

  for (double x : xs) {
    for (double y : ys) {
      Pose pose = resting_pose(spec, x, y, lo.z());
      try {
        check_placement_legal(world, item, pose, container, cell, catalog);
      } catch (const IllegalPlacement&) {
        continue;
      }
      if (gap > 0.0) {
        bool roomy = true;
        auto shapes = item_shapes_at(spec, pose);
        for (const auto& [oid, st] : world.items) {
          if (st.location != container || !roomy) continue;
          for (const auto& a : shapes) {
            for (const auto& b : item_shapes_at(catalog.get(oid), st.pose)) {
              if (!a.aabb.overlaps(b.aabb, gap)) continue;
              if (shape_distance(a, b).distance < gap) {
                roomy = false;
                break;
              }
            }
            if (!roomy) break;
          }
        }
        if (!roomy) continue;
      }
      world.items[item] = {container, pose, {}};
      return;
    }
  }
  throw ValidationError("cannot place " + item + " inside " + container + " without overlap");
}

}  // namespace

WorldState make_initial_world(const WorkOrder& order, const Workcell& cell, const ItemCatalog& catalog,
                              std::uint64_t seed) {
  WorldState world;
  world.rng_seed = seed;
  for (const auto& [bin_id, items] : order.bin_contents)
    for (const auto& item : items) place_scanning(world, item, bin_id, cell, catalog);
  for (const auto& item : order.tote_contents) place_scanning(world, item, kToteLocation, cell, catalog);
  return world;
}

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

ScoreConfig ScoreConfig::defaults() {
  ScoreConfig cfg;
  cfg.clutter_thresholds = {{0, 10}, {3, 15}, {5, 20}};
  return cfg;
}

void ScoreConfig::validate() const {
  if (clutter_thresholds.empty()) throw ValidationError("clutter_thresholds must be non-empty");
  int prev = -1;
  for (const auto& t : clutter_thresholds) {
    if (t.points != 10 && t.points != 15 && t.points != 20)
      throw ValidationError("clutter tier points must be one of 10, 15, 20");
    if (t.min_count <= prev) throw ValidationError("clutter tiers must be strictly increasing");
    prev = t.min_count;
  }
  if (clutter_thresholds.front().min_count != 0) throw ValidationError("first clutter tier must start at 0");
}

int ScoreConfig::base_points(int clutter) const {
  int pts = clutter_thresholds.front().points;
  for (const auto& t : clutter_thresholds)
    if (clutter >= t.min_count) pts = t.points;
  return pts;
}

int ScoreConfig::item_bonus(const std::string& id) const {
  auto it = bonus.find(id);
  return it == bonus.end() ? 0 : it->second;
}

int points_for(const Operation& op, const WorldState& world, const ScoreConfig& cfg) {
  if (op.kind == Operation::Kind::Move) return 0;
  const std::string& scored_bin = op.kind == Operation::Kind::Pick ? op.source : op.destination;
  int clutter = clutter_count(world, scored_bin);
  return cfg.base_points(clutter) + cfg.item_bonus(op.item);
}

}  // namespace apcsim
