#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "fd_check.hpp"
#include "mvhand/camera.hpp"
#include "mvhand/rng.hpp"

using namespace mvhand;

namespace {
PinholeCam cam_with_rotation(const Eigen::Matrix3d& r) {
  PinholeCam c;
  c.fx = c.fy = 240.0;
  c.cx = c.cy = 128.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c.rotation[i * 3 + j] = r(i, j);
  return c;
}

Eigen::Matrix3d rot_z(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  const Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  return Eigen::AngleAxisd(rng.uniform(0, 3.0), axis.normalized()).toRotationMatrix();
}
}  // namespace

TEST_CASE("weak perspective with unit scale and zero shift is orthographic") {
  Tensor joints = Tensor::from_vector({2, 3}, {0.5, -0.25, 3.0, 1.0, 2.0, -7.0});
  Tensor px = project_weak(joints, WeakPerspCam{1.0, 0.0, 0.0});
  CHECK(px[0] == 0.5);
  CHECK(px[1] == -0.25);
  CHECK(px[2] == 1.0);
  CHECK(px[3] == 2.0);
}

TEST_CASE("weak perspective ignores depth shifts") {
  Rng rng(9);
  Tensor joints = fdcheck::random_tensor(rng, {5, 3});
  std::vector<double> shifted(joints.vec());
  for (std::size_t i = 0; i < 5; ++i) shifted[i * 3 + 2] += 11.0;
  WeakPerspCam cam{3.0, 4.0, 5.0};
  Tensor a = project_weak(joints, cam);
  Tensor b = project_weak(Tensor::from_vector({5, 3}, shifted), cam);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("weak perspective worked example") {
  Tensor joints = Tensor::from_vector({1, 3}, {0.1, -0.1, 0.5});
  Tensor px = project_weak(joints, WeakPerspCam{2.0, 10.0, 20.0});
  CHECK(px[0] == doctest::Approx(10.2));
  CHECK(px[1] == doctest::Approx(19.8));
}

TEST_CASE("weak perspective is affine in the xy coordinates") {
  Rng rng(21);
  Tensor p1 = fdcheck::random_tensor(rng, {4, 3});
  Tensor p2 = fdcheck::random_tensor(rng, {4, 3});
  WeakPerspCam cam{1.7, -3.0, 2.0};
  const double alpha = 0.3;
  std::vector<double> mix(12);
  for (std::size_t i = 0; i < 12; ++i) mix[i] = alpha * p1[i] + (1 - alpha) * p2[i];
  Tensor lhs = project_weak(Tensor::from_vector({4, 3}, mix), cam);
  Tensor a = project_weak(p1, cam), b = project_weak(p2, cam);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(alpha * a[i] + (1 - alpha) * b[i]).epsilon(1e-12));
}

TEST_CASE("differentiable weak projection matches the value path and finite differences") {
  Rng rng(33);
  Tensor joints = fdcheck::random_tensor(rng, {21, 3});
  Tensor cam = Tensor::from_vector({1, 3}, {1.5, 4.0, -2.0});
  Var out = project_weak(Var::input(joints), Var::input(cam));
  Tensor ref = project_weak(joints, WeakPerspCam{1.5, 4.0, -2.0});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.value()[i] == doctest::Approx(ref[i]));

  auto rep = fdcheck::check_op_gradients(
      [](const std::vector<Var>& v) { return project_weak(v[0], v[1]); }, {joints, cam}, rng);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("pinhole projection basics") {
  PinholeCam cam = cam_with_rotation(Eigen::Matrix3d::Identity());
  SUBCASE("optical axis hits the principal point") {
    Tensor p = Tensor::from_vector({1, 3}, {0.0, 0.0, 1.0});
    Tensor px = project_pinhole(p, cam);
    CHECK(px[0] == doctest::Approx(128.0));
    CHECK(px[1] == doctest::Approx(128.0));
  }
  SUBCASE("worked example") {
    Tensor p = Tensor::from_vector({1, 3}, {0.1, 0.0, 1.0});
    Tensor px = project_pinhole(p, cam);
    CHECK(px[0] == doctest::Approx(152.0));
    CHECK(px[1] == doctest::Approx(128.0));
  }
  SUBCASE("non-positive depth names the joint") {
    Tensor p = Tensor::from_vector({2, 3}, {0.0, 0.0, 1.0, 0.0, 0.0, -0.5});
    CHECK_THROWS_WITH_AS(project_pinhole(p, cam), doctest::Contains("joint 1"), std::domain_error);
  }
}

TEST_CASE("relative rotation maps between camera frames") {
  SUBCASE("identical cameras give identity") {
    PinholeCam c = cam_with_rotation(rot_z(0.7));
    Tensor r = relative_rotation(c, c);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(r[i * 3 + j] == doctest::Approx(i == j ? 1.0 : 0.0));
  }
  SUBCASE("identity j and 90-degree i give the 90-degree rotation") {
    Tensor r = relative_rotation(cam_with_rotation(rot_z(M_PI / 2)),
                                 cam_with_rotation(Eigen::Matrix3d::Identity()));
    Eigen::Matrix3d expect = rot_z(M_PI / 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(r[i * 3 + j] == doctest::Approx(expect(i, j)));
  }
  SUBCASE("two-step oracle on random pairs") {
    Rng rng(41);
    for (int t = 0; t < 20; ++t) {
      Eigen::Matrix3d ri = random_rotation(rng), rj = random_rotation(rng);
      Tensor rel = relative_rotation(cam_with_rotation(ri), cam_with_rotation(rj));
      const Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
      const Eigen::Vector3d direct = ri * (rj.transpose() * v);
      for (int i = 0; i < 3; ++i) {
        double got = 0.0;
        for (int j = 0; j < 3; ++j) got += rel[i * 3 + j] * v[j];
        CHECK(got == doctest::Approx(direct[i]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("relative_rotation(a,b) composed with relative_rotation(b,a) is identity") {
    Rng rng(43);
    for (int t = 0; t < 20; ++t) {
      PinholeCam a = cam_with_rotation(random_rotation(rng));
      PinholeCam b = cam_with_rotation(random_rotation(rng));
      Tensor ab = relative_rotation(a, b), ba = relative_rotation(b, a);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = 0.0;
          for (int l = 0; l < 3; ++l) s += ab[i * 3 + l] * ba[l * 3 + j];
          CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-12);
        }
    }
  }
}

TEST_CASE("camera rig JSON round-trip") {
  Rng rng(51);
  CameraRig rig;
  rig.image_width = 256;
  rig.image_height = 256;
  for (int i = 0; i < 3; ++i) {
    PinholeCam c = cam_with_rotation(random_rotation(rng));
    c.tvec = {rng.normal(), rng.normal(), 0.5 + rng.uniform()};
    rig.cams.push_back(c);
  }
  CameraRig back = CameraRig::from_json(rig.to_json());
  REQUIRE(back.cams.size() == 3);
  CHECK(back.image_width == 256);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 9; ++k)
      CHECK(back.cams[i].rotation[k] == doctest::Approx(rig.cams[i].rotation[k]).epsilon(1e-14));
    for (int k = 0; k < 3; ++k)
      CHECK(back.cams[i].tvec[k] == doctest::Approx(rig.cams[i].tvec[k]).epsilon(1e-14));
  }
  CHECK_THROWS(CameraRig::from_json("{\"image_width\": 1}"));
}

TEST_CASE("pinhole validation rejects improper rotations") {
  PinholeCam c;
  c.rotation = {1, 0, 0, 0, 1, 0, 0, 0, -1};  // reflection
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.rotation = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  c.fx = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
