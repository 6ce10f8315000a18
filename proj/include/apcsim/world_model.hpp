#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "apcsim/geometry.hpp"
#include "apcsim/joint_state.hpp"
#include "apcsim/rng.hpp"

namespace apcsim {

// Location names: "bin_A".."bin_L", "tote", "gripper", "floor", "staged".
inline constexpr const char* kToteLocation = "tote";
inline constexpr const char* kGripperLocation = "gripper";
inline constexpr const char* kFloorLocation = "floor";
inline constexpr const char* kStagedLocation = "staged";

enum class GraspStrategy { FrontSuction, SideTopSuction, Pinch };

GraspStrategy strategy_from_string(const std::string& s);
std::string to_string(GraspStrategy s);

/// Declarative per-item grasp constraint, evaluated in the item frame.
struct HeuristicRule {
  std::string id;
  enum class Kind { HalfSpace, Cone, AxisBound } kind = Kind::HalfSpace;
  enum class Effect { Require, Forbid } effect = Effect::Forbid;
  Eigen::Vector3d axis{0, 0, 1};  // half-space normal / cone axis / reference axis
  double offset = 0.0;            // half-space: axis . p <= offset
  double angle = 0.0;             // cone / axis bound half-angle, radians
};

struct ItemSpec {
  std::string id;
  std::vector<PrimitiveShape> shapes;
  double mass = 0.1;  // kg
  Eigen::Vector3d center_of_mass{Eigen::Vector3d::Zero()};
  bool deformable = false;
  std::vector<GraspStrategy> allowed_strategies;
  int bonus_points = 0;
  std::vector<HeuristicRule> heuristic_rules;

  void validate() const;
  /// Volume of the world-frame AABB of the shape union at rest orientation.
  double bounding_volume() const;
  Aabb local_aabb() const;
};

class ItemCatalog {
public:
  static ItemCatalog load(const std::string& path);
  const ItemSpec& get(const std::string& id) const;
  bool contains(const std::string& id) const { return specs_.count(id) > 0; }
  const std::map<std::string, ItemSpec>& all() const { return specs_; }

private:
  std::map<std::string, ItemSpec> specs_;
};

/// One shelf compartment. The shelf is axis-aligned; the opening faces -x.
struct BinGeometry {
  std::string id;
  Eigen::Vector3d inner_lo;  // world AABB of the interior
  Eigen::Vector3d inner_hi;
  Eigen::Vector3d opening_outward_normal{-1, 0, 0};
  double floor_z() const { return inner_lo.z(); }
  Eigen::Vector3d center() const { return 0.5 * (inner_lo + inner_hi); }
  double depth() const { return inner_hi.x() - inner_lo.x(); }
  double width() const { return inner_hi.y() - inner_lo.y(); }
  double height() const { return inner_hi.z() - inner_lo.z(); }
};

/// Static scene: shelf (12 bins in a 3x4 grid), tote, floor.
struct Workcell {
  std::vector<BinGeometry> bins;  // row-major from top-left: bin_A..bin_L
  Eigen::Vector3d tote_inner_lo, tote_inner_hi;
  std::vector<PlacedShape> static_shapes;       // walls, panels, tote, floor
  std::vector<std::string> static_shape_names;  // parallel to static_shapes
  Aabb rail_envelope;

  static Workcell load(const std::string& path);
  const BinGeometry& bin(const std::string& id) const;
  bool is_bin(const std::string& id) const;
  /// Interior AABB of a container ("bin_X" or "tote").
  void container_interior(const std::string& location, Eigen::Vector3d& lo, Eigen::Vector3d& hi) const;
};

struct WorkOrderTarget {
  std::string item;
  std::string source;
};

struct WorkOrder {
  std::string mode;  // "pick" | "stow"
  std::map<std::string, std::vector<std::string>> bin_contents;
  std::vector<std::string> tote_contents;
  std::vector<WorkOrderTarget> targets;
};

/// Parse + validate a work-order document (schema "apc2016/1").
WorkOrder load_work_order(const std::string& json_text, const Workcell& cell, const ItemCatalog& catalog);
WorkOrder load_work_order_file(const std::string& path, const Workcell& cell, const ItemCatalog& catalog);
/// Canonical serialization; loading then serializing is byte-stable.
std::string serialize_work_order(const WorkOrder& order);

struct ItemState {
  std::string location;
  Pose pose;                      // item frame in world (meaningless while "staged")
  Pose grasp_transform;           // tool->item, valid while location == "gripper"
};

struct WorldState {
  std::map<std::string, ItemState> items;
  JointState joint_state;
  double clock = 0.0;
  std::uint64_t rng_seed = 0;
};

/// Build the initial world from a work order: deterministic placements,
/// deepest-first in listed order inside bins, raster layout in the tote.
WorldState make_initial_world(const WorkOrder& order, const Workcell& cell, const ItemCatalog& catalog,
                              std::uint64_t seed);

std::vector<PlacedShape> item_shapes_at(const ItemSpec& spec, const Pose& pose);

/// Number of items currently located in the bin.
int clutter_count(const WorldState& world, const std::string& bin);

struct PlaceMutation {
  std::string item;
  std::string location;
  Pose pose;
};
struct RemoveMutation {
  std::string item;
};
struct AttachMutation {
  std::string item;
  Pose grasp_transform;  // tool->item at attach instant
};
struct DetachMutation {
  std::string item;
  std::string location;
  Pose pose;
};
using MutationEvent = std::variant<PlaceMutation, RemoveMutation, AttachMutation, DetachMutation>;

struct IllegalPlacement : ValidationError {
  IllegalPlacement(const std::string& msg, std::string a, std::string b, double depth)
      : ValidationError(msg), first(std::move(a)), second(std::move(b)), penetration(depth) {}
  std::string first, second;
  double penetration = 0.0;
};

/// Apply one event to an immutable world, returning the new state.
/// Placement is rejected when it interpenetrates another item by more than
/// 1 mm or leaves the container volume.
WorldState mutate(const WorldState& world, const MutationEvent& event, const Workcell& cell,
                  const ItemCatalog& catalog);

struct ClutterTier {
  int min_count = 0;
  int points = 10;
};

struct ScoreConfig {
  std::vector<ClutterTier> clutter_thresholds;  // sorted ascending by min_count
  std::map<std::string, int> bonus;
  int penalty_drop = 10;
  int penalty_misplace = 10;

  static ScoreConfig defaults();
  void validate() const;
  int base_points(int clutter) const;
  int item_bonus(const std::string& id) const;
};

struct Operation {
  enum class Kind { Pick, Stow, Move } kind = Kind::Pick;
  std::string item;
  std::string source;
  std::string destination;
  int planned_points = 0;
  int attempt_count = 0;
};

std::string to_string(Operation::Kind k);

/// Base points from the clutter tier of the operation's scored bin (source
/// for picks, destination for stows) plus the item bonus. Moves score zero.
int points_for(const Operation& op, const WorldState& world, const ScoreConfig& cfg);

}  // namespace apcsim
