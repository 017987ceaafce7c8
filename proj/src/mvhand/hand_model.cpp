#include "mvhand/hand_model.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mvhand {

namespace {
const char* embedded_skeleton_json() {
  static const char* text =
#include "hand_skeleton_data.inc"
      ;
  return text;
}
}  // namespace

HandParams HandParams::rest() {
  return {Tensor::zeros({kNumPoseRows, 3}), Tensor::zeros({kNumShapeCoeffs})};
}

KinematicTree KinematicTree::parse(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  KinematicTree t;
  t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  if (t.joint_names.size() != kNumJoints) throw std::runtime_error("skeleton: need 21 joints");

  const auto parents = j.at("parents").get<std::vector<int>>();
  if (parents.size() != kNumJoints) throw std::runtime_error("skeleton: need 21 parents");
  int roots = 0;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    t.parent[i] = parents[i];
    if (parents[i] < 0) {
      ++roots;
    } else if (static_cast<std::size_t>(parents[i]) >= i) {
      // parents must precede children; this also rules out cycles
      throw std::runtime_error("skeleton: parent index must be smaller than the joint index");
    }
  }
  if (roots != 1 || t.parent[0] != -1) throw std::runtime_error("skeleton: exactly one root (joint 0)");

  const auto offsets = j.at("rest_offsets");
  if (offsets.size() != kNumBones) throw std::runtime_error("skeleton: need 20 rest offsets");
  for (std::size_t b = 0; b < kNumBones; ++b)
    for (int c = 0; c < 3; ++c) t.rest_offsets[b][c] = offsets[b][c].get<double>();

  const auto rest = j.at("rest_joints");
  if (rest.size() != kNumJoints) throw std::runtime_error("skeleton: need 21 rest joints");
  for (std::size_t i = 0; i < kNumJoints; ++i)
    for (int c = 0; c < 3; ++c) t.rest_joints[i][c] = rest[i][c].get<double>();

  // offsets and rest positions must agree
  for (std::size_t i = 1; i < kNumJoints; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double expect = t.rest_joints[t.parent[i]][c] + t.rest_offsets[i - 1][c];
      if (std::abs(expect - t.rest_joints[i][c]) > 1e-12)
        throw std::runtime_error("skeleton: rest_joints inconsistent with rest_offsets at joint " +
                                 std::to_string(i));
    }
  }

  const auto assign = j.at("rotation_assignment").get<std::vector<int>>();
  if (assign.size() != 15) throw std::runtime_error("skeleton: need 15 rotation assignments");
  t.joint_theta_row.fill(-1);
  for (std::size_t r = 0; r < 15; ++r) {
    t.rotation_assignment[r] = assign[r];
    if (assign[r] <= 0 || static_cast<std::size_t>(assign[r]) >= kNumJoints)
      throw std::runtime_error("skeleton: rotation assignment out of range");
    t.joint_theta_row[assign[r]] = static_cast<int>(r) + 1;
  }

  const auto basis = j.at("shape_basis");
  if (basis.size() != kNumBones) throw std::runtime_error("skeleton: need 20 shape basis rows");
  for (std::size_t b = 0; b < kNumBones; ++b)
    for (std::size_t k = 0; k < kNumShapeCoeffs; ++k) t.shape_basis[b][k] = basis[b][k].get<double>();

  t.multiplier_lo = j.at("multiplier_clamp")[0].get<double>();
  t.multiplier_hi = j.at("multiplier_clamp")[1].get<double>();
  if (!(t.multiplier_lo > 0.0 && t.multiplier_hi > t.multiplier_lo))
    throw std::runtime_error("skeleton: bad multiplier clamp");

  const auto ranges = j.at("theta_ranges");
  if (ranges.size() != kNumPoseRows) throw std::runtime_error("skeleton: need 16 theta ranges");
  for (std::size_t r = 0; r < kNumPoseRows; ++r)
    for (int c = 0; c < 3; ++c) {
      t.theta_ranges[r][c][0] = ranges[r][c][0].get<double>();
      t.theta_ranges[r][c][1] = ranges[r][c][1].get<double>();
    }
  return t;
}

KinematicTree KinematicTree::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("skeleton: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const KinematicTree& KinematicTree::default_tree() {
  static const KinematicTree tree = parse(embedded_skeleton_json());
  return tree;
}

Tensor KinematicTree::rest_skeleton() const {
  std::vector<double> d(kNumJoints * 3);
  for (std::size_t i = 0; i < kNumJoints; ++i)
    for (int c = 0; c < 3; ++c) d[i * 3 + c] = rest_joints[i][c];
  return Tensor::from_vector({kNumJoints, 3}, std::move(d));
}

Var bone_multipliers(const Var& beta, const KinematicTree& tree) {
  std::vector<double> basis(kNumBones * kNumShapeCoeffs);
  for (std::size_t b = 0; b < kNumBones; ++b)
    for (std::size_t k = 0; k < kNumShapeCoeffs; ++k)
      basis[b * kNumShapeCoeffs + k] = tree.shape_basis[b][k];
  Var basis_v = Var::constant(Tensor::from_vector({kNumBones, kNumShapeCoeffs}, std::move(basis)));
  Var delta = matmul(basis_v, reshape(beta, {kNumShapeCoeffs, 1}));  // {20,1}
  Var mult = add(Var::constant(Tensor::full({kNumBones, 1}, 1.0)), delta);
  return clamp(mult, tree.multiplier_lo, tree.multiplier_hi);
}

Var forward_kinematics(const Var& theta, const Var& beta, const KinematicTree& tree) {
  if (theta.value().shape() != std::vector<std::size_t>{kNumPoseRows, 3})
    throw ShapeError("forward_kinematics", "theta must be (16,3), got " + theta.value().shape_str());
  if (beta.value().size() != kNumShapeCoeffs)
    throw ShapeError("forward_kinematics", "beta must have 10 elements, got " + beta.value().shape_str());

  Var mult = bone_multipliers(beta, tree);  // {20,1}

  // chain rotations up to and including each joint's own articulation
  std::vector<Var> chain(kNumJoints);
  std::vector<Var> pos(kNumJoints);
  chain[0] = Var::constant(Tensor::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  pos[0] = Var::constant(Tensor::zeros({1, 3}));
  for (std::size_t jnt = 1; jnt < kNumJoints; ++jnt) {
    const int p = tree.parent[jnt];
    const std::size_t bone = jnt - 1;
    Var offset = Var::constant(Tensor::from_vector(
        {1, 3}, {tree.rest_offsets[bone][0], tree.rest_offsets[bone][1], tree.rest_offsets[bone][2]}));
    // scale the bone: tile the single multiplier across xyz
    Var m_b = reshape(broadcast_repeat(gather_rows(mult, {bone}), 3), {1, 3});
    Var local = mul(offset, m_b);
    // row-vector convention: world = local . R_chain(parent)^T
    pos[jnt] = add(pos[p], matmul(local, transpose(chain[p])));
    const int row = tree.joint_theta_row[jnt];
    if (row >= 0) {
      Var r = gather_rows(theta, {static_cast<std::size_t>(row)});
      chain[jnt] = matmul(chain[p], rodrigues(r));
    } else {
      chain[jnt] = chain[p];
    }
  }
  Var joints = concat(pos, 0);  // {21,3}, root at origin
  // global rotation last; rotating about the origin keeps the root in place
  Var global = rodrigues(gather_rows(theta, {0}));
  return matmul(joints, transpose(global));
}

Tensor forward_kinematics(const HandParams& params, const KinematicTree& tree) {
  return forward_kinematics(Var::constant(params.theta), Var::constant(params.beta), tree).value();
}

Tensor bone_lengths(const Tensor& skeleton, const KinematicTree& tree) {
  if (skeleton.shape() != std::vector<std::size_t>{kNumJoints, 3})
    throw std::invalid_argument("bone_lengths: skeleton must be (21,3)");
  std::vector<double> out(kNumBones);
  for (std::size_t jnt = 1; jnt < kNumJoints; ++jnt) {
    const int p = tree.parent[jnt];
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = skeleton[jnt * 3 + c] - skeleton[p * 3 + c];
      s += d * d;
    }
    out[jnt - 1] = std::sqrt(s);
  }
  return Tensor::from_vector({kNumBones}, std::move(out));
}

Tensor axis_angle_to_matrix(double x, double y, double z) {
  return rodrigues(Var::constant(Tensor::from_vector({3}, {x, y, z}))).value();
}

}  // namespace mvhand
