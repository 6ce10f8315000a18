#include "apcsim/grasp_planner.hpp"

#include <algorithm>
#include <cmath>

namespace apcsim {

namespace {

constexpr double kReachabilityConeDeg = 75.0;
constexpr double kBottomConeDeg = 75.0;

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c);
}

bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  for (int i = 0; i < 3; ++i) {
    if (a[i] < b[i] - 1e-12) return true;
    if (a[i] > b[i] + 1e-12) return false;
  }
  return false;
}

}  // namespace

Eigen::Vector3d GraspContext::approach_inward() const {
  return tote() ? Eigen::Vector3d(0, 0, -1) : Eigen::Vector3d(-cell->bin(container).opening_outward_normal);
}

Eigen::Vector3d GraspContext::opening_outward() const {
  return tote() ? Eigen::Vector3d(0, 0, 1) : cell->bin(container).opening_outward_normal;
}

Pose oriented_tip_pose(const Eigen::Vector3d& contact, const Eigen::Vector3d& approach_axis, GraspStrategy strategy,
                       const GraspContext& ctx, const Eigen::Vector3d& gap_axis) {
  Eigen::Vector3d z = approach_axis.normalized();
  Eigen::Vector3d preferred;
  if (strategy == GraspStrategy::Pinch && gap_axis.norm() > 1e-9) {
    // fingers close along +y of the tip frame
    preferred = gap_axis;
  } else if (strategy == GraspStrategy::SideTopSuction) {
    // rotated cup: gripper body extends along +y of the tip frame; point it
    // out of the container so the body slopes back toward the opening
    preferred = ctx.opening_outward();
  } else {
    // straight cup on a horizontal approach: roll the wrist so the camera
    // side (-y flange) faces up
    preferred = std::abs(z.z()) > 0.9 ? ctx.opening_outward() : Eigen::Vector3d(0, 0, -1);
  }
  Eigen::Vector3d y = preferred - preferred.dot(z) * z;
  if (y.norm() < 1e-6) y = z.unitOrthogonal();
  y.normalize();
  Eigen::Vector3d x = y.cross(z);
  Eigen::Matrix3d rot;
  rot.col(0) = x;
  rot.col(1) = y;
  rot.col(2) = z;
  Pose p;
  p.position = contact;
  p.orientation = Eigen::Quaterniond(rot).normalized();
  return p;
}

std::vector<PlacedShape> gripper_bodies_at_candidate(const KinematicChain& chain, const GraspCandidate& candidate,
                                                     std::vector<std::string>* names) {
  // place the flange so the strategy's tool tip lands on the candidate pose
  CupState cup = KinematicChain::cup_for(candidate.strategy);
  Eigen::Isometry3d tip = candidate.gripper_pose.isometry();
  Eigen::Isometry3d flange = tip * chain.tool_transform(cup).inverse();
  std::vector<PlacedShape> out;
  for (const auto& gb : chain.gripper_bodies) {
    if (!chain.union_gripper_envelope && !gb.active_for(cup)) continue;
    out.push_back(PlacedShape::make(gb.shape, flange));
    if (names) names->push_back(gb.name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthesis
// ---------------------------------------------------------------------------

namespace {

GraspStrategy suction_strategy_for_axis(const Eigen::Vector3d& approach_world, const GraspContext& ctx) {
  if (ctx.tote()) {
    // everything in the tote is approached from above; a mostly-vertical
    // approach uses the straight cup, oblique ones use the rotated cup
    return angle_between(approach_world, Eigen::Vector3d(0, 0, -1)) < M_PI / 4 ? GraspStrategy::FrontSuction
                                                                               : GraspStrategy::SideTopSuction;
  }
  Eigen::Vector3d inward = ctx.approach_inward();
  return angle_between(approach_world, inward) < M_PI / 4 ? GraspStrategy::FrontSuction
                                                          : GraspStrategy::SideTopSuction;
}

bool strategy_allowed(const ItemSpec& spec, GraspStrategy s) {
  return std::find(spec.allowed_strategies.begin(), spec.allowed_strategies.end(), s) !=
         spec.allowed_strategies.end();
}

}  // namespace

std::vector<GraspCandidate> synthesize_rigid(const ItemSpec& spec, const Pose& estimated_pose, double density,
                                             const KinematicChain& chain, const GraspContext& ctx, RngStream& rng) {
  if (spec.deformable) throw ValidationError("synthesize_rigid: " + spec.id + " is deformable");
  if (density <= 0.0) throw ValidationError("synthesize_rigid: density must be positive");

  std::vector<GraspCandidate> out;
  Eigen::Isometry3d item_to_world = estimated_pose.isometry();

  bool suction_ok =
      strategy_allowed(spec, GraspStrategy::FrontSuction) || strategy_allowed(spec, GraspStrategy::SideTopSuction);

  for (size_t shape_idx = 0; shape_idx < spec.shapes.size(); ++shape_idx) {
    const PrimitiveShape& shape = spec.shapes[shape_idx];

    if (suction_ok) {
      for (const SurfaceSample& s : sample_surface(shape, density, rng)) {
        // a seal is impossible where the surface curves tighter than the cup
        // or the cup overhangs a face edge
        if (s.min_curvature_radius < chain.suction_cup_radius) continue;
        if (s.flat_margin < chain.suction_cup_radius - 1e-9) continue;
        Eigen::Vector3d contact = item_to_world * s.point;
        Eigen::Vector3d approach = -(item_to_world.linear() * s.normal);  // inward normal
        GraspCandidate c;
        c.strategy = suction_strategy_for_axis(approach, ctx);
        if (!strategy_allowed(spec, c.strategy)) {
          c.strategy = c.strategy == GraspStrategy::FrontSuction ? GraspStrategy::SideTopSuction
                                                                 : GraspStrategy::FrontSuction;
          if (!strategy_allowed(spec, c.strategy)) continue;
        }
        c.approach_axis = approach;
        c.contact_point = contact;
        c.gripper_pose = oriented_tip_pose(contact, approach, c.strategy, ctx);
        c.source_shape = (int)shape_idx;
        out.push_back(c);
      }
    }

    if (!strategy_allowed(spec, GraspStrategy::Pinch)) continue;

    // pinch: parallel-face pairs with a gap the fingers can span
    auto emit_pinch = [&](const Eigen::Vector3d& contact_local, const Eigen::Vector3d& approach_local,
                          const Eigen::Vector3d& gap_axis_local, double gap) {
      if (gap < chain.pinch_gap_min || gap > chain.pinch_gap_max) return;
      GraspCandidate c;
      c.strategy = GraspStrategy::Pinch;
      c.pinch_gap = gap;
      c.contact_point = item_to_world * (shape.local_pose.isometry() * contact_local);
      c.approach_axis = (item_to_world.linear() * (shape.local_pose.orientation * approach_local)).normalized();
      Eigen::Vector3d gap_world = item_to_world.linear() * (shape.local_pose.orientation * gap_axis_local);
      c.gripper_pose = oriented_tip_pose(c.contact_point, c.approach_axis, c.strategy, ctx, gap_world);
      c.source_shape = (int)shape_idx;
      out.push_back(c);
    };

    switch (shape.kind) {
      case ShapeKind::Box: {
        Eigen::Vector3d h = 0.5 * shape.dims;
        for (int gap_axis = 0; gap_axis < 3; ++gap_axis) {
          double gap = shape.dims[gap_axis];
          for (int approach_axis = 0; approach_axis < 3; ++approach_axis) {
            if (approach_axis == gap_axis) continue;
            for (int sign = -1; sign <= 1; sign += 2) {
              Eigen::Vector3d contact = Eigen::Vector3d::Zero();
              contact[approach_axis] = -sign * h[approach_axis];  // surface the tip touches
              Eigen::Vector3d approach = Eigen::Vector3d::Zero();
              approach[approach_axis] = sign;
              emit_pinch(contact, approach, Eigen::Vector3d::Unit(gap_axis), gap);
            }
          }
        }
        break;
      }
      case ShapeKind::Cylinder: {
        double r = shape.dims.x(), hh = shape.dims.y();
        // across the diameter, approaching the cap or the side
        emit_pinch({0, 0, 0.5 * hh}, {0, 0, -1}, {1, 0, 0}, 2 * r);
        emit_pinch({0, 0, -0.5 * hh}, {0, 0, 1}, {1, 0, 0}, 2 * r);
        emit_pinch({-r, 0, 0}, {1, 0, 0}, {0, 1, 0}, 2 * r);
        emit_pinch({0, -r, 0}, {0, 1, 0}, {1, 0, 0}, 2 * r);
        // across the caps, fingers along the axis
        emit_pinch({-r, 0, 0}, {1, 0, 0}, {0, 0, 1}, hh);
        emit_pinch({0, -r, 0}, {0, 1, 0}, {0, 0, 1}, hh);
        break;
      }
      case ShapeKind::Sphere: {
        double r = shape.dims.x();
        emit_pinch({0, 0, r}, {0, 0, -1}, {1, 0, 0}, 2 * r);
        emit_pinch({-r, 0, 0}, {1, 0, 0}, {0, 1, 0}, 2 * r);
        break;
      }
      default:
        break;
    }
  }
  return out;
}

std::vector<GraspCandidate> synthesize_deformable(
    const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& surface_samples,
    const Eigen::Vector3d& centroid) {
  if (surface_samples.empty()) throw ValidationError("synthesize_deformable: no surface samples");
  std::vector<GraspCandidate> out;
  out.reserve(surface_samples.size());
  for (const auto& [point, normal] : surface_samples) {
    GraspCandidate c;
    c.strategy = GraspStrategy::FrontSuction;
    c.contact_point = point;
    c.approach_axis = -normal.normalized();
    c.score = -(point - centroid).norm();
    c.source_shape = -1;
    Pose p;
    p.position = point;
    Eigen::Vector3d z = c.approach_axis;
    Eigen::Vector3d y = std::abs(z.z()) > 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 0, 1);
    y = (y - y.dot(z) * z).normalized();
    Eigen::Matrix3d rot;
    rot.col(0) = y.cross(z);
    rot.col(1) = y;
    rot.col(2) = z;
    p.orientation = Eigen::Quaterniond(rot).normalized();
    c.gripper_pose = p;
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(), [](const GraspCandidate& a, const GraspCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return lex_less(a.contact_point, b.contact_point);
  });
  return out;
}

// ---------------------------------------------------------------------------
// pruning
// ---------------------------------------------------------------------------

namespace {

bool violates_rule(const HeuristicRule& rule, const Eigen::Vector3d& contact_item, const Eigen::Vector3d& axis_item) {
  bool matches = false;
  switch (rule.kind) {
    case HeuristicRule::Kind::HalfSpace:
      matches = rule.axis.dot(contact_item) <= rule.offset;
      break;
    case HeuristicRule::Kind::Cone:
      matches = angle_between(axis_item, rule.axis) <= rule.angle;
      break;
    case HeuristicRule::Kind::AxisBound:
      matches = angle_between(axis_item, rule.axis) >= rule.angle;
      break;
  }
  return rule.effect == HeuristicRule::Effect::Forbid ? matches : !matches;
}

}  // namespace

std::vector<GraspCandidate> prune(const std::vector<GraspCandidate>& candidates, const ItemSpec& spec,
                                  const Pose& estimated_pose, const WorldState& world, const ItemCatalog& catalog,
                                  const KinematicChain& chain, const GraspContext& ctx, PruneReport* report) {
  std::vector<GraspCandidate> out;
  Eigen::Vector3d outward_opening = ctx.opening_outward();
  const double cone = kReachabilityConeDeg * M_PI / 180.0;
  const double bottom_cone = kBottomConeDeg * M_PI / 180.0;
  Eigen::Isometry3d world_to_item = estimated_pose.isometry().inverse();

  // obstacles: everything except the target itself
  std::vector<const PlacedShape*> obstacles;
  std::vector<std::string> obstacle_items;  // item id or empty for static geometry
  std::vector<PlacedShape> storage;
  std::vector<std::string> storage_names;
  std::string target_id = spec.id;
  for (const auto& [id, st] : world.items) {
    if (id == target_id || st.location == kGripperLocation || st.location == kStagedLocation ||
        st.location == kFloorLocation)
      continue;
    for (const auto& ps : item_shapes_at(catalog.get(id), st.pose)) {
      storage.push_back(ps);
      storage_names.push_back(id);
    }
  }
  for (const auto& s : ctx.cell->static_shapes) {
    obstacles.push_back(&s);
    obstacle_items.emplace_back();
  }
  for (size_t i = 0; i < storage.size(); ++i) {
    obstacles.push_back(&storage[i]);
    obstacle_items.push_back(storage_names[i]);
  }

  const double clearance = 1e-3;  // static margin; the swept check narrows this online

  for (const GraspCandidate& c : candidates) {
    // "back": the approach would have to come from inside the container
    if (angle_between(c.approach_axis, outward_opening) <= cone) continue;
    // "bottom": contact on a downward-facing surface
    if (angle_between(c.approach_axis, Eigen::Vector3d(0, 0, 1)) <= bottom_cone) continue;

    Eigen::Vector3d contact_item = world_to_item * c.contact_point;
    Eigen::Vector3d axis_item = world_to_item.linear() * c.approach_axis;
    bool rejected = false;
    for (const auto& rule : spec.heuristic_rules)
      if (violates_rule(rule, contact_item, axis_item)) {
        rejected = true;
        break;
      }
    if (rejected) continue;

    GraspCandidate refined = c;
    refined.gripper_pose = oriented_tip_pose(c.contact_point, c.approach_axis, c.strategy, ctx,
                                             c.strategy == GraspStrategy::Pinch
                                                 ? (c.gripper_pose.orientation * Eigen::Vector3d::UnitY()).eval()
                                                 : Eigen::Vector3d::Zero());
    auto bodies = gripper_bodies_at_candidate(chain, refined);
    bool collides = false;
    for (const auto& body : bodies) {
      for (size_t oi = 0; oi < obstacles.size(); ++oi) {
        const PlacedShape* obs = obstacles[oi];
        if (!body.aabb.overlaps(obs->aabb, clearance)) continue;
        PairResult d = shape_distance(body, *obs);
        if (d.intersecting() || d.distance < clearance) {
          collides = true;
          if (report && !obstacle_items[oi].empty()) ++report->item_blocks[obstacle_items[oi]];
          break;
        }
      }
      if (collides) break;
    }
    if (collides) continue;
    out.push_back(refined);
  }
  return out;
}

// ---------------------------------------------------------------------------
// scoring and strategy selection
// ---------------------------------------------------------------------------

std::vector<GraspCandidate> score_rigid(const std::vector<GraspCandidate>& candidates, const ItemSpec& spec,
                                        const Pose& estimated_pose, const std::vector<GraspStrategy>& strategy_order,
                                        const GraspScoreWeights& weights) {
  Eigen::Vector3d com_world = estimated_pose.apply(spec.center_of_mass);
  auto preference = [&](GraspStrategy s) {
    for (size_t i = 0; i < strategy_order.size(); ++i)
      if (strategy_order[i] == s) return 1.0 / (1.0 + (double)i);
    return 0.0;
  };

  std::vector<GraspCandidate> out = candidates;
  for (GraspCandidate& c : out) {
    // lateral offset between the contact and the center of mass, measured in
    // the plane normal to the approach axis (the gravity lever arm)
    Eigen::Vector3d d = com_world - c.contact_point;
    double lateral = (d - d.dot(c.approach_axis) * c.approach_axis).norm();
    double tilt = angle_between(c.approach_axis, Eigen::Vector3d(0, 0, -1));
    c.score = -weights.com_distance * lateral - weights.tilt * tilt + weights.strategy_preference * preference(c.strategy);
  }
  std::stable_sort(out.begin(), out.end(), [](const GraspCandidate& a, const GraspCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return lex_less(a.contact_point, b.contact_point);
  });
  return out;
}

std::vector<GraspStrategy> select_strategy(const ItemSpec& spec, const Pose& estimated_pose, const GraspContext& ctx) {
  if (spec.allowed_strategies.empty()) throw ValidationError(spec.id + ": no allowed strategies");

  if (spec.deformable) return {GraspStrategy::FrontSuction};

  bool suction_possible = strategy_allowed(spec, GraspStrategy::FrontSuction) ||
                          strategy_allowed(spec, GraspStrategy::SideTopSuction);
  if (!suction_possible) return {GraspStrategy::Pinch};

  // exposure: is there headroom above the item for the rotated cup?
  Aabb item_box;
  for (const auto& ps : item_shapes_at(spec, estimated_pose)) item_box.merge(ps.aabb);
  double ceiling = ctx.tote() ? ctx.cell->tote_inner_hi.z() + 0.3 : ctx.cell->bin(ctx.container).inner_hi.z();
  bool top_exposed = ceiling - item_box.hi.z() >= 0.06;

  std::vector<GraspStrategy> order;
  auto push_if_allowed = [&](GraspStrategy s) {
    if (strategy_allowed(spec, s) && std::find(order.begin(), order.end(), s) == order.end()) order.push_back(s);
  };
  if (ctx.tote()) {
    push_if_allowed(GraspStrategy::FrontSuction);  // straight down
    push_if_allowed(GraspStrategy::SideTopSuction);
  } else if (top_exposed) {
    push_if_allowed(GraspStrategy::SideTopSuction);
    push_if_allowed(GraspStrategy::FrontSuction);
  } else {
    push_if_allowed(GraspStrategy::FrontSuction);
    push_if_allowed(GraspStrategy::SideTopSuction);
  }
  push_if_allowed(GraspStrategy::Pinch);
  return order;
}

}  // namespace apcsim
