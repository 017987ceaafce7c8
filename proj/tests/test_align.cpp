#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "fd_check.hpp"
#include "mvhand/align.hpp"
#include "mvhand/rng.hpp"

using namespace mvhand;

namespace {
Tensor random_points(Rng& rng, std::size_t k = 21) {
  std::vector<double> d(k * 3);
  for (auto& v : d) v = rng.normal(0.0, 0.1);
  return Tensor::from_vector({k, 3}, std::move(d));
}

SimilarityTransform random_similarity(Rng& rng) {
  SimilarityTransform t;
  t.scale = std::exp(rng.uniform(-1.0, 1.0));
  const Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  const Eigen::Matrix3d r =
      Eigen::AngleAxisd(rng.uniform(0.0, 3.0), axis.normalized()).toRotationMatrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.rotation[i * 3 + j] = r(i, j);
  t.translation = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return t;
}

double transform_param_error(const SimilarityTransform& a, const SimilarityTransform& b) {
  double e = std::abs(a.scale - b.scale);
  for (int i = 0; i < 9; ++i) e = std::max(e, std::abs(a.rotation[i] - b.rotation[i]));
  for (int i = 0; i < 3; ++i) e = std::max(e, std::abs(a.translation[i] - b.translation[i]));
  return e;
}
}  // namespace

TEST_CASE("procrustes of identical sets is the identity transform") {
  Rng rng(2);
  Tensor pts = random_points(rng);
  SimilarityTransform t = procrustes(pts, pts, ProcrustesMode::kSimilarity);
  CHECK(transform_param_error(t, SimilarityTransform::identity()) < 1e-12);
  CHECK(alignment_residual(t, pts, pts) < 1e-24);
}

TEST_CASE("procrustes recovers constructed similarity transforms") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor src = random_points(rng);
    SimilarityTransform truth = random_similarity(rng);
    Tensor dst = apply_transform(truth, src);
    SimilarityTransform got = procrustes(src, dst, ProcrustesMode::kSimilarity);
    CHECK(transform_param_error(got, truth) < 1e-9);
    CHECK(alignment_residual(got, src, dst) < 1e-10);
  }
}

TEST_CASE("procrustes rigid mode recovers rotation and translation") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor src = random_points(rng);
    SimilarityTransform truth = random_similarity(rng);
    truth.scale = 1.0;
    Tensor dst = apply_transform(truth, src);
    SimilarityTransform got = procrustes(src, dst, ProcrustesMode::kRigid);
    CHECK(got.scale == 1.0);
    CHECK(transform_param_error(got, truth) < 1e-9);
  }
}

TEST_CASE("rotation-only mode fixes scale and translation and centers on the root") {
  Rng rng(15);
  Tensor src = random_points(rng);
  // make both sets root-relative, as the fusion path does
  std::vector<double> s(src.vec());
  for (std::size_t j = 0; j < 21; ++j)
    for (int c = 0; c < 3; ++c) s[j * 3 + c] -= src[c];
  Tensor src_rel = Tensor::from_vector({21, 3}, s);
  SimilarityTransform rot = random_similarity(rng);
  rot.scale = 1.0;
  rot.translation = {0, 0, 0};
  Tensor dst = apply_transform(rot, src_rel);
  SimilarityTransform got = procrustes(src_rel, dst, ProcrustesMode::kRotationOnly);
  CHECK(got.scale == 1.0);
  CHECK(got.translation[0] == 0.0);
  CHECK(transform_param_error(got, rot) < 1e-9);
}

TEST_CASE("mirrored targets are never matched with a reflection") {
  Rng rng(19);
  Tensor src = random_points(rng);
  std::vector<double> m(src.vec());
  for (std::size_t j = 0; j < 21; ++j) m[j * 3 + 0] = -m[j * 3 + 0];  // mirror in x
  Tensor dst = Tensor::from_vector({21, 3}, m);
  SimilarityTransform t = procrustes(src, dst, ProcrustesMode::kSimilarity);
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = t.rotation[i * 3 + j];
  CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(alignment_residual(t, src, dst) > 1e-6);
}

TEST_CASE("degenerate configurations raise DegeneracyError") {
  std::vector<double> line;
  for (int i = 0; i < 21; ++i) {
    line.push_back(0.01 * i);
    line.push_back(0.02 * i);
    line.push_back(-0.01 * i);
  }
  Tensor collinear = Tensor::from_vector({21, 3}, line);
  Rng rng(23);
  Tensor target = random_points(rng);
  CHECK_THROWS_AS(procrustes(collinear, target, ProcrustesMode::kSimilarity), DegeneracyError);
  Tensor coincident = Tensor::zeros({21, 3});
  CHECK_THROWS_AS(procrustes(coincident, target, ProcrustesMode::kSimilarity), DegeneracyError);
}

TEST_CASE("apply and invert") {
  Rng rng(29);
  Tensor pts = random_points(rng);
  SUBCASE("identity leaves points unchanged") {
    Tensor out = apply_transform(SimilarityTransform::identity(), pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(out[i] == pts[i]);
  }
  SUBCASE("pure scale doubles coordinates") {
    SimilarityTransform t;
    t.scale = 2.0;
    Tensor out = apply_transform(t, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(out[i] == doctest::Approx(2.0 * pts[i]));
  }
  SUBCASE("pure translation inverts to its negation") {
    SimilarityTransform t;
    t.translation = {0.3, -0.4, 0.5};
    SimilarityTransform inv = invert(t);
    CHECK(inv.translation[0] == doctest::Approx(-0.3));
    CHECK(inv.translation[1] == doctest::Approx(0.4));
    CHECK(inv.translation[2] == doctest::Approx(-0.5));
    CHECK(invert(SimilarityTransform::identity()).scale == 1.0);
  }
  SUBCASE("round-trips compose to the identity") {
    for (int trial = 0; trial < 20; ++trial) {
      SimilarityTransform t = random_similarity(rng);
      Tensor back = apply_transform(t, apply_transform(invert(t), pts));
      for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(back[i] - pts[i]) < 1e-12);
      SimilarityTransform c = compose(t, invert(t));
      CHECK(transform_param_error(c, SimilarityTransform::identity()) < 1e-12);
    }
  }
  SUBCASE("graph-side apply matches the value path and passes gradients") {
    SimilarityTransform t = random_similarity(rng);
    Tensor ref = apply_transform(t, pts);
    Var out = apply_transform(t, Var::input(pts));
    for (std::size_t i = 0; i < pts.size(); ++i)
      CHECK(out.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    auto rep = fdcheck::check_op_gradients(
        [&t](const std::vector<Var>& v) { return apply_transform(t, v[0]); }, {pts}, rng);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("translation-scale alignment") {
  Rng rng(37);
  Tensor gt = random_points(rng);
  SUBCASE("recovers scale 0.5 for a doubled prediction") {
    std::vector<double> p(gt.vec());
    for (auto& v : p) v = 2.0 * v + 1.0;
    Tensor pred = Tensor::from_vector({21, 3}, p);
    SimilarityTransform t = align_translation_scale(pred, gt);
    CHECK(t.scale == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(alignment_residual(t, pred, gt) < 1e-24);
  }
  SUBCASE("identity case") {
    SimilarityTransform t = align_translation_scale(gt, gt);
    CHECK(t.scale == doctest::Approx(1.0));
    CHECK(std::abs(t.translation[0]) < 1e-15);
  }
  SUBCASE("rotation is not compensated") {
    SimilarityTransform rot = random_similarity(rng);
    rot.scale = 1.0;
    rot.translation = {0, 0, 0};
    Tensor pred = apply_transform(rot, gt);
    SimilarityTransform t = align_translation_scale(pred, gt);
    CHECK(alignment_residual(t, pred, gt) > 1e-8);
  }
  SUBCASE("zero-variance prediction is degenerate") {
    CHECK_THROWS_AS(align_translation_scale(Tensor::full({21, 3}, 0.5), gt), DegeneracyError);
  }
}

TEST_CASE("procrustes residual is invariant under a common similarity transform") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor src = random_points(rng);
    Tensor dst = random_points(rng);
    const double base =
        alignment_residual(procrustes(src, dst, ProcrustesMode::kSimilarity), src, dst);
    SimilarityTransform common = random_similarity(rng);
    Tensor src2 = apply_transform(common, src);
    Tensor dst2 = apply_transform(common, dst);
    const double moved =
        alignment_residual(procrustes(src2, dst2, ProcrustesMode::kSimilarity), src2, dst2);
    // residual scales with the squared common scale
    CHECK(moved == doctest::Approx(base * common.scale * common.scale).epsilon(1e-9));
  }
}

TEST_CASE("similarity-mode residual never exceeds rotation-only residual") {
  Rng rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor src = random_points(rng);
    Tensor dst = random_points(rng);
    const double sim =
        alignment_residual(procrustes(src, dst, ProcrustesMode::kSimilarity), src, dst);
    const double rot =
        alignment_residual(procrustes(src, dst, ProcrustesMode::kRotationOnly), src, dst);
    CHECK(sim <= rot + 1e-12);
  }
}
