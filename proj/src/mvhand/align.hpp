#pragma once

#include <array>
#include <stdexcept>

#include "mvhand/autodiff.hpp"
#include "mvhand/tensor.hpp"

namespace mvhand {

/// Raised when an alignment problem has no well-defined solution
/// (coincident/collinear points, reflection ties, zero-variance inputs).
class DegeneracyError : public std::runtime_error {
 public:
  explicit DegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

/// y = scale * R * x + t.
struct SimilarityTransform {
  double scale = 1.0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<double, 3> translation{0, 0, 0};

  static SimilarityTransform identity() { return {}; }
  static SimilarityTransform rotation_only(const Tensor& rot3x3);
};

enum class ProcrustesMode {
  kSimilarity,    // scale + rotation + translation (centroid centering)
  kRotationOnly,  // rotation only, centering about the root joint
  kRigid,         // rotation + translation, scale fixed to 1
};

/// Least-squares alignment of source onto target over the mode's transform
/// class. Rotations come from an SVD of the centered cross-covariance with
/// the determinant correction; reflections are never returned.
SimilarityTransform procrustes(const Tensor& source, const Tensor& target, ProcrustesMode mode);

/// Closed-form translation+scale alignment of pred onto gt (no rotation).
SimilarityTransform align_translation_scale(const Tensor& pred, const Tensor& gt);

Tensor apply_transform(const SimilarityTransform& t, const Tensor& points);  // {k,3} -> {k,3}
/// Differentiable in the points; the transform itself is constant.
Var apply_transform(const SimilarityTransform& t, const Var& points);

SimilarityTransform invert(const SimilarityTransform& t);
/// compose(a, b)(x) == a(b(x)).
SimilarityTransform compose(const SimilarityTransform& a, const SimilarityTransform& b);

/// Mean squared residual of T(source) vs target (used by tests and fusion).
double alignment_residual(const SimilarityTransform& t, const Tensor& source, const Tensor& target);

}  // namespace mvhand
