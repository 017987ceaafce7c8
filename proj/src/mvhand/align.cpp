#include "mvhand/align.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mvhand {

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Points as_points(const Tensor& t, const char* who) {
  if (t.rank() != 2 || t.dim(1) != 3) {
    throw std::invalid_argument(std::string(who) + ": points must be (k,3), got " + t.shape_str());
  }
  return Eigen::Map<const Points>(t.data(), t.dim(0), 3);
}

Eigen::Matrix3d rot_of(const SimilarityTransform& t) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t.rotation[i * 3 + j];
  return m;
}

void set_rot(SimilarityTransform& t, const Eigen::Matrix3d& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.rotation[i * 3 + j] = m(i, j);
}

// Kabsch rotation from centered point sets (rows), with degeneracy guards.
// Also reports the corrected singular-value trace for the Umeyama scale.
Eigen::Matrix3d kabsch(const Points& src_c, const Points& dst_c, double* trace_ds) {
  const Eigen::Matrix3d cov =
      dst_c.transpose() * src_c / static_cast<double>(src_c.rows());  // sigma_yx
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d d = svd.singularValues();
  if (!(d(0) > 1e-15)) throw DegeneracyError("procrustes: coincident points");
  if (d(1) < 1e-12 * d(0)) throw DegeneracyError("procrustes: collinear points");
  const bool reflect = svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0;
  if (reflect && (d(1) - d(2)) < 1e-12 * d(0)) {
    // the reflection correction has no unique axis to flip
    throw DegeneracyError("procrustes: ambiguous reflection correction (singular-value tie)");
  }
  Eigen::Vector3d s(1.0, 1.0, reflect ? -1.0 : 1.0);
  if (trace_ds) *trace_ds = (d.array() * s.array()).sum();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

SimilarityTransform SimilarityTransform::rotation_only(const Tensor& rot3x3) {
  SimilarityTransform t;
  for (int i = 0; i < 9; ++i) t.rotation[i] = rot3x3[i];
  return t;
}

SimilarityTransform procrustes(const Tensor& source, const Tensor& target, ProcrustesMode mode) {
  const Points x = as_points(source, "procrustes");
  const Points y = as_points(target, "procrustes");
  if (x.rows() != y.rows()) throw std::invalid_argument("procrustes: point counts differ");
  if (x.rows() < 3) throw DegeneracyError("procrustes: need at least 3 points");

  SimilarityTransform out;
  if (mode == ProcrustesMode::kRotationOnly) {
    const Points xc = x.rowwise() - x.row(0);  // center about the root joint
    const Points yc = y.rowwise() - y.row(0);
    set_rot(out, kabsch(xc, yc, nullptr));
    return out;
  }

  const Eigen::RowVector3d mx = x.colwise().mean();
  const Eigen::RowVector3d my = y.colwise().mean();
  const Points xc = x.rowwise() - mx;
  const Points yc = y.rowwise() - my;
  double trace_ds = 0.0;
  const Eigen::Matrix3d r = kabsch(xc, yc, &trace_ds);
  set_rot(out, r);
  if (mode == ProcrustesMode::kSimilarity) {
    const double var_x = xc.squaredNorm() / static_cast<double>(x.rows());
    if (!(var_x > 0.0)) throw DegeneracyError("procrustes: zero-variance source");
    out.scale = trace_ds / var_x;
    if (!(out.scale > 0.0)) throw DegeneracyError("procrustes: non-positive optimal scale");
  }
  const Eigen::Vector3d t = my.transpose() - out.scale * r * mx.transpose();
  out.translation = {t.x(), t.y(), t.z()};
  return out;
}

SimilarityTransform align_translation_scale(const Tensor& pred, const Tensor& gt) {
  const Points p = as_points(pred, "align_translation_scale");
  const Points g = as_points(gt, "align_translation_scale");
  if (p.rows() != g.rows()) throw std::invalid_argument("align_translation_scale: point counts differ");
  const Eigen::RowVector3d mp = p.colwise().mean();
  const Eigen::RowVector3d mg = g.colwise().mean();
  const Points pc = p.rowwise() - mp;
  const Points gc = g.rowwise() - mg;
  const double denom = pc.squaredNorm();
  if (denom < 1e-30) throw DegeneracyError("align_translation_scale: zero-variance prediction");
  SimilarityTransform t;
  t.scale = (pc.array() * gc.array()).sum() / denom;
  const Eigen::Vector3d tr = mg.transpose() - t.scale * mp.transpose();
  t.translation = {tr.x(), tr.y(), tr.z()};
  return t;
}

Tensor apply_transform(const SimilarityTransform& t, const Tensor& points) {
  const Points p = as_points(points, "apply_transform");
  const Eigen::Matrix3d r = rot_of(t);
  const Eigen::Vector3d tr(t.translation[0], t.translation[1], t.translation[2]);
  std::vector<double> out(p.rows() * 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Map<Eigen::Vector3d>(out.data() + i * 3) =
        t.scale * (r * p.row(i).transpose()) + tr;
  }
  return Tensor::from_vector({static_cast<std::size_t>(p.rows()), 3}, std::move(out));
}

Var apply_transform(const SimilarityTransform& t, const Var& points) {
  const std::size_t k = points.value().dim(0);
  // rows transform as p . R^T; R^T laid out row-major equals R column-major
  std::vector<double> rt(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rt[i * 3 + j] = t.rotation[j * 3 + i];
  Var rotated = matmul(points, Var::constant(Tensor::from_vector({3, 3}, std::move(rt))));
  Var scaled = scalar_mul(rotated, t.scale);
  Var shift = Var::constant(Tensor::from_vector(
      {1, 3}, {t.translation[0], t.translation[1], t.translation[2]}));
  return add(scaled, broadcast_repeat(shift, k));
}

SimilarityTransform invert(const SimilarityTransform& t) {
  const Eigen::Matrix3d r = rot_of(t);
  SimilarityTransform inv;
  inv.scale = 1.0 / t.scale;
  set_rot(inv, r.transpose());
  const Eigen::Vector3d tr(t.translation[0], t.translation[1], t.translation[2]);
  const Eigen::Vector3d it = -(r.transpose() * tr) / t.scale;
  inv.translation = {it.x(), it.y(), it.z()};
  return inv;
}

SimilarityTransform compose(const SimilarityTransform& a, const SimilarityTransform& b) {
  const Eigen::Matrix3d ra = rot_of(a), rb = rot_of(b);
  SimilarityTransform c;
  c.scale = a.scale * b.scale;
  set_rot(c, Eigen::Matrix3d(ra * rb));
  const Eigen::Vector3d tb(b.translation[0], b.translation[1], b.translation[2]);
  const Eigen::Vector3d ta(a.translation[0], a.translation[1], a.translation[2]);
  const Eigen::Vector3d t = a.scale * (ra * tb) + ta;
  c.translation = {t.x(), t.y(), t.z()};
  return c;
}

double alignment_residual(const SimilarityTransform& t, const Tensor& source, const Tensor& target) {
  const Tensor moved = apply_transform(t, source);
  double s = 0.0;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    const double d = moved[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(source.dim(0));
}

}  // namespace mvhand
