#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "armscript/geometry.hpp"

namespace armscript {

ARMSCRIPT_DEFINE_ERROR(DimensionMismatch);

class IKFailure : public Error {
 public:
  explicit IKFailure(double residual, const std::string& message = "")
      : Error("IKFailure", message + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct ArmJoint {
  enum class Type { Revolute, Prismatic };
  Type type = Type::Revolute;
  Vec3 axis = Vec3::UnitZ();
  Pose origin;  // fixed transform from the previous link frame
  double lo = -M_PI;
  double hi = M_PI;
};

// Collision capsule fixed to link `link` (the frame after that joint moves).
struct LinkCapsule {
  int link = 0;
  Vec3 p0 = Vec3::Zero();
  Vec3 p1 = Vec3::Zero();
  double radius = 0.05;
};

using Configuration = Eigen::VectorXd;

struct ArmModel {
  Pose base;
  std::vector<ArmJoint> joints;
  Pose tool;
  std::vector<LinkCapsule> capsules;
  double max_gripper_width = 0.10;

  std::size_t dof() const { return joints.size(); }

  Configuration home() const { return Configuration::Zero(static_cast<int>(joints.size())); }

  Configuration clamp(Configuration q) const {
    for (std::size_t i = 0; i < joints.size(); ++i) {
      q[static_cast<int>(i)] = std::clamp(q[static_cast<int>(i)], joints[i].lo, joints[i].hi);
    }
    return q;
  }

  bool within_limits(const Configuration& q, double tol = 1e-9) const {
    for (std::size_t i = 0; i < joints.size(); ++i) {
      const double v = q[static_cast<int>(i)];
      if (v < joints[i].lo - tol || v > joints[i].hi + tol) return false;
    }
    return true;
  }
};

inline Pose joint_motion(const ArmJoint& j, double q) {
  if (j.type == ArmJoint::Type::Revolute) return Pose::from_axis_angle(j.axis, q);
  return Pose::from_translation(q * j.axis);
}

// World pose of every link frame (after its joint), base first is implicit.
inline std::vector<Pose> link_frames(const ArmModel& arm, const Configuration& q) {
  if (static_cast<std::size_t>(q.size()) != arm.dof()) {
    throw DimensionMismatch("configuration has " + std::to_string(q.size()) + " values for " +
                            std::to_string(arm.dof()) + " joints");
  }
  std::vector<Pose> frames;
  frames.reserve(arm.joints.size());
  Pose t = arm.base;
  for (std::size_t i = 0; i < arm.joints.size(); ++i) {
    t = compose(compose(t, arm.joints[i].origin), joint_motion(arm.joints[i], q[static_cast<int>(i)]));
    frames.push_back(t);
  }
  return frames;
}

inline Pose fk(const ArmModel& arm, const Configuration& q) {
  const auto frames = link_frames(arm, q);
  return compose(frames.empty() ? arm.base : frames.back(), arm.tool);
}

// Rotation-vector error of `target` relative to `current` (world frame).
inline Vec3 orientation_error(const Mat3& target, const Mat3& current) {
  const Eigen::AngleAxisd aa(target * current.transpose());
  return aa.angle() * aa.axis();
}

constexpr double kIKPositionTol = 1e-4;
constexpr double kIKOrientationTol = 1e-3;
constexpr int kIKMaxIterations = 200;

namespace detail {

inline Eigen::Matrix<double, 6, Eigen::Dynamic> geometric_jacobian(
    const ArmModel& arm, const std::vector<Pose>& frames, const Vec3& ee_position) {
  const int n = static_cast<int>(arm.dof());
  Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
  for (int i = 0; i < n; ++i) {
    const ArmJoint& joint = arm.joints[i];
    const Pose prev =
        i == 0 ? compose(arm.base, joint.origin) : compose(frames[i - 1], joint.origin);
    const Vec3 axis_w = (prev.rotation * joint.axis).normalized();
    if (joint.type == ArmJoint::Type::Revolute) {
      jac.block<3, 1>(0, i) = axis_w.cross(ee_position - prev.translation);
      jac.block<3, 1>(3, i) = axis_w;
    } else {
      jac.block<3, 1>(0, i) = axis_w;
      jac.block<3, 1>(3, i) = Vec3::Zero();
    }
  }
  return jac;
}

}  // namespace detail

// Damped-least-squares IK from `seed`. Steps that fail to reduce the residual
// are rejected and the damping raised; stagnation triggers deterministic
// random restarts, all within the same 200-iteration budget.
inline Configuration ik(const ArmModel& arm, const Pose& target, const Configuration& seed) {
  const int n = static_cast<int>(arm.dof());
  if (seed.size() != n) throw DimensionMismatch("seed dimension mismatch");
  Rng restart_rng(0x1c0ffee ^ static_cast<std::uint64_t>(arm.dof()));

  struct Eval {
    std::vector<Pose> frames;
    Pose ee;
    Vec3 e_pos, e_rot;
    double pos_err, rot_err, residual;
  };
  auto evaluate = [&arm, &target](const Configuration& q) {
    Eval e;
    e.frames = link_frames(arm, q);
    e.ee = compose(e.frames.back(), arm.tool);
    e.e_pos = target.translation - e.ee.translation;
    e.e_rot = orientation_error(target.rotation, e.ee.rotation);
    e.pos_err = e.e_pos.norm();
    e.rot_err = e.e_rot.norm();
    e.residual = e.pos_err + 0.2 * e.rot_err;
    return e;
  };

  // Keep revolute joints inside their limits by exact 2*pi wraps; never clamp
  // mid-iteration (hard clamping creates sticky minima at the bounds).
  auto wrap = [&arm](Configuration q) {
    for (std::size_t i = 0; i < arm.dof(); ++i) {
      if (arm.joints[i].type != ArmJoint::Type::Revolute) continue;
      double v = q[static_cast<int>(i)];
      while (v > arm.joints[i].hi && v - 2.0 * M_PI >= arm.joints[i].lo) v -= 2.0 * M_PI;
      while (v < arm.joints[i].lo && v + 2.0 * M_PI <= arm.joints[i].hi) v += 2.0 * M_PI;
      q[static_cast<int>(i)] = v;
    }
    return q;
  };

  Configuration q = wrap(seed);
  Eval cur = evaluate(q);
  double lambda = 0.05;
  double global_best = cur.residual;
  Configuration global_best_q = q;
  int stall = 0;
  int restarts = 0;
  for (int iter = 1; iter < kIKMaxIterations; ++iter) {
    if (cur.pos_err < kIKPositionTol && cur.rot_err < kIKOrientationTol &&
        arm.within_limits(q)) {
      return q;
    }
    Vec3 e_pos = cur.e_pos;
    if (cur.pos_err > 0.25) e_pos *= 0.25 / cur.pos_err;  // limit the pull on far targets
    const auto jac = detail::geometric_jacobian(arm, cur.frames, cur.ee.translation);
    Eigen::Matrix<double, 6, 1> err;
    err << e_pos, cur.e_rot;
    const Eigen::Matrix<double, 6, 6> jjt =
        jac * jac.transpose() + lambda * lambda * Eigen::Matrix<double, 6, 6>::Identity();
    Configuration dq = jac.transpose() * jjt.ldlt().solve(err);
    const double inf = dq.cwiseAbs().maxCoeff();
    if (inf > 0.5) dq *= 0.5 / inf;

    const Configuration q_try = wrap(q + dq);
    const Eval trial = evaluate(q_try);
    if (trial.pos_err < kIKPositionTol && trial.rot_err < kIKOrientationTol &&
        arm.within_limits(q_try)) {
      return q_try;
    }
    const bool converged_out_of_limits = trial.pos_err < kIKPositionTol &&
                                         trial.rot_err < kIKOrientationTol &&
                                         !arm.within_limits(q_try);
    if (trial.residual < cur.residual - 1e-14 && !converged_out_of_limits) {
      q = q_try;
      cur = trial;
      // near the solution let the damping collapse for Gauss-Newton endgame
      lambda = std::max(cur.residual < 2e-3 ? 1e-5 : 1e-3, lambda * 0.6);
      stall = 0;
    } else {
      lambda = std::min(1.0, lambda * 2.5);
      ++stall;
    }
    if (cur.residual < global_best) {
      global_best = cur.residual;
      global_best_q = q;
    }
    if (stall > 3) {
      ++restarts;
      for (int i = 0; i < n; ++i) {
        q[i] = restart_rng.uniform(arm.joints[i].lo, arm.joints[i].hi);
      }
      cur = evaluate(q);
      lambda = 0.05;
      stall = 0;
    }
  }
  throw IKFailure(global_best, "target unreachable or iteration limit hit");
}

// ---------------------------------------------------------------------------
// arm description file

inline nlohmann::json arm_to_json(const ArmModel& arm) {
  nlohmann::json j;
  j["base"] = nlohmann::json(pose_to_seven(arm.base));
  nlohmann::json joints = nlohmann::json::array();
  for (const ArmJoint& jt : arm.joints) {
    joints.push_back({{"type", jt.type == ArmJoint::Type::Revolute ? "revolute" : "prismatic"},
                      {"axis", {jt.axis.x(), jt.axis.y(), jt.axis.z()}},
                      {"origin", nlohmann::json(pose_to_seven(jt.origin))},
                      {"limits", {jt.lo, jt.hi}}});
  }
  j["joints"] = joints;
  j["tool"] = nlohmann::json(pose_to_seven(arm.tool));
  nlohmann::json caps = nlohmann::json::array();
  for (const LinkCapsule& c : arm.capsules) {
    caps.push_back({{"link", c.link},
                    {"p0", {c.p0.x(), c.p0.y(), c.p0.z()}},
                    {"p1", {c.p1.x(), c.p1.y(), c.p1.z()}},
                    {"radius", c.radius}});
  }
  j["capsules"] = caps;
  j["max_gripper_width"] = arm.max_gripper_width;
  return j;
}

inline ArmModel arm_from_json(const nlohmann::json& j) {
  ArmModel arm;
  auto seven = [](const nlohmann::json& a) {
    std::array<double, 7> v{};
    for (int i = 0; i < 7; ++i) v[i] = a[i].get<double>();
    return pose_from_seven(v);
  };
  if (j.contains("base")) arm.base = seven(j.at("base"));
  for (const auto& jt : j.at("joints")) {
    ArmJoint joint;
    joint.type = jt.at("type").get<std::string>() == "prismatic" ? ArmJoint::Type::Prismatic
                                                                 : ArmJoint::Type::Revolute;
    const auto& ax = jt.at("axis");
    joint.axis = Vec3(ax[0].get<double>(), ax[1].get<double>(), ax[2].get<double>()).normalized();
    joint.origin = seven(jt.at("origin"));
    joint.lo = jt.at("limits")[0].get<double>();
    joint.hi = jt.at("limits")[1].get<double>();
    arm.joints.push_back(joint);
  }
  arm.tool = seven(j.at("tool"));
  for (const auto& cj : j.value("capsules", nlohmann::json::array())) {
    LinkCapsule c;
    c.link = cj.at("link").get<int>();
    const auto& p0 = cj.at("p0");
    const auto& p1 = cj.at("p1");
    c.p0 = Vec3(p0[0].get<double>(), p0[1].get<double>(), p0[2].get<double>());
    c.p1 = Vec3(p1[0].get<double>(), p1[1].get<double>(), p1[2].get<double>());
    c.radius = cj.at("radius").get<double>();
    arm.capsules.push_back(c);
  }
  arm.max_gripper_width = j.value("max_gripper_width", 0.10);
  if (arm.joints.size() < 2) throw DimensionMismatch("arm needs at least 2 joints");
  for (const ArmJoint& jt : arm.joints) {
    if (jt.lo >= jt.hi) throw DimensionMismatch("joint limits must satisfy lo < hi");
  }
  return arm;
}

inline ArmModel load_arm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DimensionMismatch("cannot open arm file '" + path + "'");
  return arm_from_json(nlohmann::json::parse(in));
}

// 6R chain with Franka-like reach. Link 5 carries a slim gripper capsule so
// tabletop grasps clear the surface.
inline ArmModel default_arm() {
  ArmModel arm;
  auto add = [&arm](ArmJoint::Type type, const Vec3& axis, const Vec3& offset, double lo,
                    double hi) {
    ArmJoint j;
    j.type = type;
    j.axis = axis;
    j.origin = Pose::from_translation(offset);
    j.lo = lo;
    j.hi = hi;
    arm.joints.push_back(j);
  };
  add(ArmJoint::Type::Revolute, Vec3::UnitZ(), Vec3(0, 0, 0.11), -2.9, 2.9);
  add(ArmJoint::Type::Revolute, Vec3::UnitY(), Vec3(0, 0, 0.10), -1.9, 1.9);
  add(ArmJoint::Type::Revolute, Vec3::UnitY(), Vec3(0, 0, 0.42), -2.6, 2.6);
  add(ArmJoint::Type::Revolute, Vec3::UnitZ(), Vec3(0, 0, 0.06), -3.15, 3.15);
  add(ArmJoint::Type::Revolute, Vec3::UnitY(), Vec3(0, 0, 0.34), -3.3, 3.3);
  add(ArmJoint::Type::Revolute, Vec3::UnitZ(), Vec3(0, 0, 0.06), -3.15, 3.15);
  arm.tool = Pose::from_translation(Vec3(0, 0, 0.14));
  arm.capsules = {
      {0, Vec3(0, 0, -0.03), Vec3(0, 0, 0.10), 0.060},
      {1, Vec3(0, 0, 0.02), Vec3(0, 0, 0.39), 0.055},
      {3, Vec3(0, 0, 0.05), Vec3(0, 0, 0.29), 0.045},
      {5, Vec3(0, 0, 0.02), Vec3(0, 0, 0.13), 0.020},
  };
  arm.max_gripper_width = 0.10;
  return arm;
}

}  // namespace armscript
