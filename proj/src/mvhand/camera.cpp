#include "mvhand/camera.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>

namespace mvhand {

namespace {
Eigen::Matrix3d rot_of(const std::array<double, 9>& r) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = r[i * 3 + j];
  return m;
}
}  // namespace

void PinholeCam::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("pinhole: focal lengths must be positive");
  const Eigen::Matrix3d r = rot_of(rotation);
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("pinhole: rotation is not a proper rotation");
  }
}

std::array<double, 3> PinholeCam::center() const {
  const Eigen::Matrix3d r = rot_of(rotation);
  const Eigen::Vector3d c = -r.transpose() * Eigen::Vector3d(tvec[0], tvec[1], tvec[2]);
  return {c.x(), c.y(), c.z()};
}

std::string CameraRig::to_json() const {
  nlohmann::json j;
  j["image_width"] = image_width;
  j["image_height"] = image_height;
  j["cameras"] = nlohmann::json::array();
  for (const auto& c : cams) {
    nlohmann::json cj;
    cj["K"] = {{c.fx, 0.0, c.cx}, {0.0, c.fy, c.cy}, {0.0, 0.0, 1.0}};
    cj["R"] = {{c.rotation[0], c.rotation[1], c.rotation[2]},
               {c.rotation[3], c.rotation[4], c.rotation[5]},
               {c.rotation[6], c.rotation[7], c.rotation[8]}};
    cj["tvec"] = {c.tvec[0], c.tvec[1], c.tvec[2]};
    j["cameras"].push_back(cj);
  }
  return j.dump(2);
}

CameraRig CameraRig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  CameraRig rig;
  rig.image_width = j.at("image_width").get<int>();
  rig.image_height = j.at("image_height").get<int>();
  for (const auto& cj : j.at("cameras")) {
    PinholeCam c;
    c.fx = cj.at("K")[0][0].get<double>();
    c.fy = cj.at("K")[1][1].get<double>();
    c.cx = cj.at("K")[0][2].get<double>();
    c.cy = cj.at("K")[1][2].get<double>();
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) c.rotation[r * 3 + k] = cj.at("R")[r][k].get<double>();
    for (int r = 0; r < 3; ++r) c.tvec[r] = cj.at("tvec")[r].get<double>();
    c.validate();
    rig.cams.push_back(c);
  }
  return rig;
}

Tensor project_weak(const Tensor& joints, const WeakPerspCam& cam) {
  const std::size_t k = joints.dim(0);
  std::vector<double> out(k * 2);
  for (std::size_t i = 0; i < k; ++i) {
    out[i * 2 + 0] = cam.scale * joints[i * 3 + 0] + cam.tx;
    out[i * 2 + 1] = cam.scale * joints[i * 3 + 1] + cam.ty;
  }
  return Tensor::from_vector({k, 2}, std::move(out));
}

Var project_weak(const Var& joints, const Var& cam) {
  if (joints.value().rank() != 2 || joints.value().dim(1) != 3)
    throw ShapeError("project_weak", "joints must be (k,3), got " + joints.value().shape_str());
  if (cam.value().shape() != std::vector<std::size_t>{1, 3})
    throw ShapeError("project_weak", "cam must be (1,3), got " + cam.value().shape_str());
  const std::size_t k = joints.value().dim(0);
  Var xy = slice_cols(joints, 0, 2);                                       // {k,2}
  Var s = reshape(broadcast_repeat(slice_cols(cam, 0, 1), 2 * k), {k, 2});  // tile the scalar
  Var t = broadcast_repeat(slice_cols(cam, 1, 2), k);                      // {k,2}
  return add(mul(xy, s), t);
}

Tensor world_to_camera(const Tensor& joints_world, const PinholeCam& cam) {
  const std::size_t k = joints_world.dim(0);
  const Eigen::Matrix3d r = rot_of(cam.rotation);
  const Eigen::Vector3d t(cam.tvec[0], cam.tvec[1], cam.tvec[2]);
  std::vector<double> out(k * 3);
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Vector3d p(joints_world[i * 3], joints_world[i * 3 + 1], joints_world[i * 3 + 2]);
    Eigen::Map<Eigen::Vector3d>(out.data() + i * 3) = r * p + t;
  }
  return Tensor::from_vector({k, 3}, std::move(out));
}

std::vector<double> point_depths(const Tensor& joints_world, const PinholeCam& cam) {
  const Tensor pc = world_to_camera(joints_world, cam);
  std::vector<double> z(pc.dim(0));
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = pc[i * 3 + 2];
  return z;
}

Tensor project_pinhole(const Tensor& joints_world, const PinholeCam& cam) {
  const Tensor pc = world_to_camera(joints_world, cam);
  const std::size_t k = pc.dim(0);
  std::vector<double> out(k * 2);
  for (std::size_t i = 0; i < k; ++i) {
    const double z = pc[i * 3 + 2];
    if (!(z > 0.0)) {
      throw std::domain_error("project_pinhole: joint " + std::to_string(i) +
                              " has non-positive depth " + std::to_string(z));
    }
    out[i * 2 + 0] = cam.fx * pc[i * 3 + 0] / z + cam.cx;
    out[i * 2 + 1] = cam.fy * pc[i * 3 + 1] / z + cam.cy;
  }
  return Tensor::from_vector({k, 2}, std::move(out));
}

Tensor relative_rotation(const PinholeCam& cam_i, const PinholeCam& cam_j) {
  const Eigen::Matrix3d r = rot_of(cam_i.rotation) * rot_of(cam_j.rotation).transpose();
  std::vector<double> out(9);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) out[a * 3 + b] = r(a, b);
  return Tensor::from_vector({3, 3}, std::move(out));
}

}  // namespace mvhand
