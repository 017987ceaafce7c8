#pragma once

#include <array>
#include <string>
#include <vector>

#include "mvhand/autodiff.hpp"
#include "mvhand/tensor.hpp"

namespace mvhand {

/// Weak-perspective camera: pixels = s * xy + t. The estimator predicts these
/// per view; there is no rotation because predictions are already
/// root-relative in the camera frame.
struct WeakPerspCam {
  double scale = 1.0;  // pixels per meter, > 0
  double tx = 0.0, ty = 0.0;
};

/// Calibrated pinhole camera, world-to-camera extrinsics, zero skew.
struct PinholeCam {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<double, 3> tvec{0, 0, 0};

  void validate() const;  // orthonormal rotation, det +1, positive focals
  /// Camera center in world coordinates (-R^T t).
  std::array<double, 3> center() const;
};

/// A calibrated multi-camera rig plus the image size shared by all views.
struct CameraRig {
  std::vector<PinholeCam> cams;
  int image_width = 256;
  int image_height = 256;

  std::string to_json() const;
  static CameraRig from_json(const std::string& text);
};

/// Weak-perspective projection, value level. joints {k,3} -> {k,2}.
Tensor project_weak(const Tensor& joints, const WeakPerspCam& cam);

/// Differentiable weak-perspective projection. cam is a {1,3} node holding
/// (s, tx, ty); gradient flows into both joints and camera.
Var project_weak(const Var& joints, const Var& cam);

/// Pinhole projection of world-frame points; throws naming the joint index
/// when a point has non-positive depth.
Tensor project_pinhole(const Tensor& joints_world, const PinholeCam& cam);

/// Depths of world points in the camera frame (z after extrinsics).
std::vector<double> point_depths(const Tensor& joints_world, const PinholeCam& cam);

/// World point -> camera-frame point (R x + t) for all rows.
Tensor world_to_camera(const Tensor& joints_world, const PinholeCam& cam);

/// R_i * R_j^T: maps directions expressed in camera-j coordinates to
/// camera-i coordinates.
Tensor relative_rotation(const PinholeCam& cam_i, const PinholeCam& cam_j);

}  // namespace mvhand
