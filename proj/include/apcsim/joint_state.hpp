#pragma once

#include <array>

namespace apcsim {

/// Suction cup wrist state: pointing along the tool axis, or rotated 90
/// degrees for side/top grasps.
enum class CupState { Front, Rotated };

/// Rail carriage position plus the seven arm joints.
struct JointState {
  double rail_position = 0.0;
  std::array<double, 7> joint_angles{};
  CupState cup_state = CupState::Front;

  double operator[](int i) const { return i == 0 ? rail_position : joint_angles[i - 1]; }
  double& operator[](int i) { return i == 0 ? rail_position : joint_angles[i - 1]; }
  static constexpr int dof = 8;
};

}  // namespace apcsim
