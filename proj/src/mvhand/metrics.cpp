#include "mvhand/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "mvhand/align.hpp"

namespace mvhand {

std::vector<double> joint_errors_mm(const Tensor& pred, const Tensor& gt) {
  if (!pred.same_shape(gt) || pred.rank() != 2 || pred.dim(1) != 3) {
    throw std::invalid_argument("metrics: joint sets must both be (k,3)");
  }
  const std::size_t k = pred.dim(0);
  std::vector<double> err(k);
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = pred[i * 3 + c] - gt[i * 3 + c];
      s += d * d;
    }
    err[i] = std::sqrt(s) * 1000.0;
  }
  return err;
}

double mpjpe_mm(const Tensor& pred, const Tensor& gt) {
  const auto err = joint_errors_mm(pred, gt);
  double s = 0.0;
  for (double e : err) s += e;
  return s / static_cast<double>(err.size());
}

double nmpjpe_mm(const Tensor& pred, const Tensor& gt) {
  return mpjpe_mm(apply_transform(align_translation_scale(pred, gt), pred), gt);
}

double pa_mpjpe_mm(const Tensor& pred, const Tensor& gt) {
  return mpjpe_mm(apply_transform(procrustes(pred, gt, ProcrustesMode::kSimilarity), pred), gt);
}

double f_score(const Tensor& pred, const Tensor& gt, double threshold_mm) {
  if (!(threshold_mm > 0.0)) throw std::invalid_argument("f_score: threshold must be positive");
  const auto err = joint_errors_mm(pred, gt);
  std::size_t hits = 0;
  for (double e : err) {
    if (e <= threshold_mm) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(err.size());
  const double r = p;  // correspondence is by joint index, so recall matches
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

std::vector<std::pair<double, double>> pck_curve(const std::vector<double>& errors_mm,
                                                 double max_threshold_mm, int steps) {
  if (steps < 2) throw std::invalid_argument("pck_curve: steps must be >= 2");
  if (!(max_threshold_mm > 0.0)) throw std::invalid_argument("pck_curve: max threshold must be positive");
  std::vector<std::pair<double, double>> curve(steps);
  for (int s = 0; s < steps; ++s) {
    const double tau = max_threshold_mm * static_cast<double>(s) / static_cast<double>(steps - 1);
    std::size_t hits = 0;
    for (double e : errors_mm) {
      if (e <= tau) ++hits;
    }
    curve[s] = {tau, errors_mm.empty()
                         ? 0.0
                         : static_cast<double>(hits) / static_cast<double>(errors_mm.size())};
  }
  return curve;
}

double pck_auc(const std::vector<double>& errors_mm, double max_threshold_mm, int steps) {
  const auto curve = pck_curve(errors_mm, max_threshold_mm, steps);
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += 0.5 * (curve[i].second + curve[i - 1].second) * (curve[i].first - curve[i - 1].first);
  }
  return area / max_threshold_mm;
}

double pixel_error_px(const Tensor& pred2d, const Tensor& gt2d) {
  if (!pred2d.same_shape(gt2d) || pred2d.rank() != 2 || pred2d.dim(1) != 2) {
    throw std::invalid_argument("pixel_error: inputs must both be (k,2)");
  }
  const std::size_t k = pred2d.dim(0);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double dx = pred2d[i * 2] - gt2d[i * 2];
    const double dy = pred2d[i * 2 + 1] - gt2d[i * 2 + 1];
    s += std::sqrt(dx * dx + dy * dy);
  }
  return s / static_cast<double>(k);
}

}  // namespace mvhand
