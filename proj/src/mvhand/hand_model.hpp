#pragma once

#include <array>
#include <string>
#include <vector>

#include "mvhand/autodiff.hpp"
#include "mvhand/tensor.hpp"

namespace mvhand {

inline constexpr std::size_t kNumJoints = 21;
inline constexpr std::size_t kNumBones = 20;
inline constexpr std::size_t kNumPoseRows = 16;  // row 0 is the global rotation
inline constexpr std::size_t kNumShapeCoeffs = 10;

/// Pose (16 axis-angle rows, row 0 global) and shape (10 coefficients).
struct HandParams {
  Tensor theta;  // {16,3}
  Tensor beta;   // {10}

  static HandParams rest();
};

/// Skeleton topology, rest geometry, shape basis and per-joint sampling
/// ranges. Loaded from the versioned JSON data file (an embedded copy of
/// data/hand_skeleton.json is the default).
struct KinematicTree {
  std::vector<std::string> joint_names;                    // 21
  std::array<int, kNumJoints> parent;                      // root = -1
  std::array<std::array<double, 3>, kNumBones> rest_offsets;   // bone to joint j+1
  std::array<std::array<double, 3>, kNumJoints> rest_joints;
  std::array<int, 15> rotation_assignment;                 // theta row r+1 -> joint id
  std::array<std::array<double, kNumShapeCoeffs>, kNumBones> shape_basis;
  double multiplier_lo = 0.2;
  double multiplier_hi = 5.0;
  std::array<std::array<std::array<double, 2>, 3>, kNumPoseRows> theta_ranges;

  // derived: joint id -> theta row (or -1 when unarticulated)
  std::array<int, kNumJoints> joint_theta_row;

  static const KinematicTree& default_tree();           // embedded data file
  static KinematicTree load(const std::string& path);
  static KinematicTree parse(const std::string& json_text);

  Tensor rest_skeleton() const;  // {21,3}
};

/// Differentiable forward kinematics. theta {16,3}, beta {10} -> joints
/// {21,3}, root at the origin, global rotation applied last.
Var forward_kinematics(const Var& theta, const Var& beta, const KinematicTree& tree);

/// Value-level convenience over the graph version.
Tensor forward_kinematics(const HandParams& params, const KinematicTree& tree);

/// Differentiable per-bone length multipliers: clamp(1 + basis . beta).
Var bone_multipliers(const Var& beta, const KinematicTree& tree);  // {20,1}

/// Euclidean length of each parent->child bone. {21,3} -> {20}.
Tensor bone_lengths(const Tensor& skeleton, const KinematicTree& tree);

/// Value-level Rodrigues (same kernel as the graph op).
Tensor axis_angle_to_matrix(double x, double y, double z);

}  // namespace mvhand
