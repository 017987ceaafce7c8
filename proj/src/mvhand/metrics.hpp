#pragma once

#include <utility>
#include <vector>

#include "mvhand/tensor.hpp"

namespace mvhand {

/// Per-joint Euclidean distances in millimeters (inputs in meters).
std::vector<double> joint_errors_mm(const Tensor& pred, const Tensor& gt);

double mpjpe_mm(const Tensor& pred, const Tensor& gt);
/// MPJPE after translation+scale alignment of pred onto gt.
double nmpjpe_mm(const Tensor& pred, const Tensor& gt);
/// MPJPE after full similarity Procrustes alignment.
double pa_mpjpe_mm(const Tensor& pred, const Tensor& gt);

/// Harmonic mean of precision and recall under an index-corresponded
/// distance threshold (joints stand in for mesh points here).
double f_score(const Tensor& pred, const Tensor& gt, double threshold_mm);

/// PCK(tau) samples over tau in [0, max_threshold_mm]; area under the curve
/// by the trapezoid rule, normalized to [0,1].
double pck_auc(const std::vector<double>& errors_mm, double max_threshold_mm, int steps);
std::vector<std::pair<double, double>> pck_curve(const std::vector<double>& errors_mm,
                                                 double max_threshold_mm, int steps);

/// Mean Euclidean 2D distance in pixels. {k,2} inputs.
double pixel_error_px(const Tensor& pred2d, const Tensor& gt2d);

}  // namespace mvhand
