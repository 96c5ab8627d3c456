#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "armscript/perception.hpp"
#include "armscript/planning.hpp"

namespace armscript {

ARMSCRIPT_DEFINE_ERROR(PerceptionEmpty);
ARMSCRIPT_DEFINE_ERROR(UnknownObject);
ARMSCRIPT_DEFINE_ERROR(NotDetectedYet);
ARMSCRIPT_DEFINE_ERROR(ObjectTooWide);
ARMSCRIPT_DEFINE_ERROR(NoFeasibleGrasp);
ARMSCRIPT_DEFINE_ERROR(GripperNotOpen);
ARMSCRIPT_DEFINE_ERROR(NothingToAttach);
ARMSCRIPT_DEFINE_ERROR(DoesNotFit);
ARMSCRIPT_DEFINE_ERROR(ConstraintViolation);
ARMSCRIPT_DEFINE_ERROR(BadAxis);
ARMSCRIPT_DEFINE_ERROR(InvalidArgument);

enum class PerceptionMode { GtDetectionAndPlanning, GtPlanningScene, NoGt };

inline std::string to_string(PerceptionMode mode) {
  switch (mode) {
    case PerceptionMode::GtDetectionAndPlanning: return "gt";
    case PerceptionMode::GtPlanningScene: return "gt-scene";
    case PerceptionMode::NoGt: return "no-gt";
  }
  return "gt";
}

inline PerceptionMode mode_from_string(const std::string& s) {
  if (s == "gt") return PerceptionMode::GtDetectionAndPlanning;
  if (s == "gt-scene") return PerceptionMode::GtPlanningScene;
  if (s == "no-gt") return PerceptionMode::NoGt;
  throw InvalidArgument("unknown perception mode '" + s + "'");
}

struct GraspPose {
  Pose pose;           // tool frame target
  double width = 0.0;  // finger opening, meters
  std::string target;  // instance the grasp was parsed for
};

struct SessionConfig {
  PerceptionMode mode = PerceptionMode::GtDetectionAndPlanning;
  NoiseSpec noise;
  PerceptionConfig perception;
  double occupancy_voxel = 0.02;
  std::uint64_t seed = 0;
  double finger_depth = 0.03;
  double finger_clearance = 0.02;
  double place_clearance = 0.01;
  double grasp_width_margin = 0.01;
  double container_wall = 0.01;   // assumed receptacle wall thickness
  double container_floor = 0.02;  // assumed receptacle floor thickness
};

// Kinematic coupling of the currently attached unit.
struct Attachment {
  std::string name;        // instance-store name
  std::string scene_key;   // obstacle key removed from the planning scene
  bool articulated = false;
  std::string articulated_object;  // owning object name when articulated
  int joint_index = -1;
  Pose grasp_offset;  // object pose relative to the tool (plain objects)
  int object_index = -1;  // index into world.objects (plain objects)
};

struct RobotSession {
  WorldModel world;
  ArmModel arm;
  SessionConfig config;
  PlanningScene scene;
  Configuration q_current;
  bool gripper_open = true;
  double gripper_width = 0.0;
  bool detected = false;
  std::map<std::string, ObjectInstance> instances;
  PointCloud cloud;
  std::optional<Attachment> attached;
  std::string place_receptacle;  // allowed-contact receptacle while placing
  int detect_count = 0;
  int plan_count = 0;
};

inline RobotSession make_session(WorldModel world, ArmModel arm, SessionConfig config) {
  RobotSession s;
  arm.base = world.arm_base;
  s.world = std::move(world);
  s.arm = std::move(arm);
  s.config = std::move(config);
  s.q_current = s.arm.home();
  s.gripper_open = true;
  s.gripper_width = s.arm.max_gripper_width;
  return s;
}

inline Pose tool_pose(const RobotSession& s) { return fk(s.arm, s.q_current); }

namespace detail {

inline std::string sanitize_label(const std::string& label) {
  std::string out = label;
  for (char& c : out) {
    if (c == ' ') c = '_';
  }
  return out;
}

inline const ObjectInstance& lookup(const RobotSession& s, const std::string& name) {
  if (!s.detected) throw NotDetectedYet("call detect_objects first");
  const auto it = s.instances.find(name);
  if (it == s.instances.end()) throw UnknownObject(name);
  return it->second;
}

// Perceived instance names need not equal ground-truth unit names; resolve by
// best bbox overlap when an exact match is missing.
inline std::string resolve_obstacle_key(const std::map<std::string, SceneObstacle>& obstacles,
                                        const std::string& name, const BBox3D& bbox) {
  if (obstacles.count(name)) return name;
  std::string best;
  double best_volume = 0.0;
  for (const auto& [key, obstacle] : obstacles) {
    const Vec3 lo = bbox.min.cwiseMax(obstacle.bbox.min);
    const Vec3 hi = bbox.max.cwiseMin(obstacle.bbox.max);
    if ((lo.array() >= hi.array()).any()) continue;
    const double volume = (hi - lo).prod();
    if (volume > best_volume) {
      best_volume = volume;
      best = key;
    }
  }
  return best.empty() ? name : best;
}

inline std::string resolve_unit_name(const WorldModel& world, const std::string& name,
                                     const BBox3D& bbox) {
  std::string best;
  double best_volume = 0.0;
  for (const WorldUnit& u : world.units()) {
    if (u.name == name) return name;
    const Vec3 lo = bbox.min.cwiseMax(u.aabb.min);
    const Vec3 hi = bbox.max.cwiseMin(u.aabb.max);
    if ((lo.array() >= hi.array()).any()) continue;
    const double volume = (hi - lo).prod();
    if (volume > best_volume) {
      best_volume = volume;
      best = u.name;
    }
  }
  return best.empty() ? name : best;
}

// planning scene as seen by the next motion: placement receptacles are
// allowed contacts until the object is released
inline PlanningScene motion_scene(const RobotSession& s) {
  PlanningScene scene = s.scene;
  if (!s.place_receptacle.empty()) {
    scene.contact_exempt = s.place_receptacle;
    const auto it = s.instances.find(s.place_receptacle);
    if (it != s.instances.end()) {
      scene.exempt_region = it->second.bbox3d.inflated(s.config.occupancy_voxel);
    }
  }
  return scene;
}

inline std::uint64_t next_plan_seed(RobotSession& s) {
  return mix_seed(s.config.seed, 0x91a ^ static_cast<std::uint64_t>(++s.plan_count));
}

// advance the session along an executed trajectory, carrying any payload
inline void commit_motion(RobotSession& s, const Trajectory& traj) {
  if (traj.waypoints.empty()) return;
  s.q_current = traj.waypoints.back().q;
  if (s.attached && !s.attached->articulated && s.attached->object_index >= 0) {
    const Pose tool = tool_pose(s);
    s.world.objects[static_cast<std::size_t>(s.attached->object_index)].pose =
        compose(tool, s.attached->grasp_offset);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// perception skills

inline RobotSession detect_objects(const RobotSession& session,
                                   const std::vector<std::string>& object_list = {}) {
  RobotSession s = session;
  s.detect_count += 1;
  s.instances.clear();
  s.cloud.points.clear();
  s.scene = PlanningScene{};
  s.place_receptacle.clear();

  const auto units = s.world.units();
  auto matches_query = [&object_list](const WorldUnit& u) {
    if (object_list.empty()) return true;
    for (const std::string& q : object_list) {
      if (u.label == q || u.name == q || detail::sanitize_label(u.label) == q) return true;
    }
    return false;
  };

  const bool gt_detection = s.config.mode == PerceptionMode::GtDetectionAndPlanning;
  const bool gt_scene = s.config.mode != PerceptionMode::NoGt;

  if (gt_detection) {
    for (const WorldUnit& u : units) {
      if (!matches_query(u)) continue;
      ObjectInstance inst;
      inst.label = u.label;
      for (const Vec3& p : unit_surface_samples(u, 256)) {
        inst.point_indices.push_back(s.cloud.size());
        s.cloud.points.push_back(p);
      }
      inst.bbox3d = u.aabb;
      s.instances[u.name] = std::move(inst);
    }
  } else {
    std::vector<std::string> queries;
    if (object_list.empty()) {
      for (const WorldUnit& u : units) queries.push_back(u.label);
      std::sort(queries.begin(), queries.end());
      queries.erase(std::unique(queries.begin(), queries.end()), queries.end());
    } else {
      queries = object_list;
    }
    NoiseSpec noise = s.config.noise;
    noise.seed = mix_seed(s.config.seed, 0xde7ec7 ^ static_cast<std::uint64_t>(s.detect_count));
    const PerceivedScene perceived =
        run_perception(s.world, queries, noise, s.config.perception);
    s.cloud = perceived.cloud;
    std::map<std::string, int> name_counts;
    for (const ObjectInstance& inst : perceived.instances) {
      std::string name = detail::sanitize_label(inst.label);
      const int k = name_counts[name]++;
      if (k > 0) name += "_" + std::to_string(k);
      s.instances[name] = inst;
    }
    if (s.config.mode == PerceptionMode::NoGt) {
      s.scene.occupancy =
          make_occupancy(perception_workspace(s.world, s.config.perception.workspace_margin),
                         s.config.occupancy_voxel);
      for (std::size_t v = 0; v < perceived.depths.size(); ++v) {
        s.scene = update_octomap(std::move(s.scene), perceived.depths[v], s.world.cameras[v]);
      }
      for (const auto& [name, inst] : s.instances) {
        SceneObstacle obstacle;
        obstacle.bbox = inst.bbox3d;
        obstacle.solids = {inst.bbox3d};
        s.scene.obstacles[name] = std::move(obstacle);
      }
    }
  }

  if (gt_scene) {
    for (const WorldUnit& u : units) {
      SceneObstacle obstacle;
      obstacle.bbox = u.aabb;
      for (const ShapePiece& piece : u.world_pieces) {
        obstacle.solids.push_back(primitive_aabb(piece.prim, piece.offset));
      }
      s.scene.obstacles[u.name] = std::move(obstacle);
    }
  }

  if (s.instances.empty() && !object_list.empty()) {
    throw PerceptionEmpty("no instances found for the requested objects");
  }
  s.detected = true;
  return s;
}

inline std::vector<std::string> get_object_name_list(const RobotSession& s) {
  if (!s.detected) throw NotDetectedYet("call detect_objects first");
  std::vector<std::string> names;
  for (const auto& [name, inst] : s.instances) names.push_back(name);
  return names;
}

inline BBox3D get_3d_bbox(const RobotSession& s, const std::string& name) {
  return detail::lookup(s, name).bbox3d;
}

inline Vec3 get_object_center_position(const RobotSession& s, const std::string& name) {
  return detail::lookup(s, name).bbox3d.center();
}

// No orientation estimation: identity rotation at the bbox center.
inline Pose get_object_pose(const RobotSession& s, const std::string& name) {
  return Pose::from_translation(get_object_center_position(s, name));
}

inline JointInfo get_object_joint_info(const RobotSession& s, const std::string& name,
                                       const Vec3& position,
                                       const std::string& type_filter = "any") {
  return joint_info(s.world, name, position, type_filter);
}

inline Vec3 get_plane_normal(const RobotSession& s, const std::string& name,
                             const Vec3& position) {
  (void)name;  // object-centric API surface; the fit uses the shared cloud
  if (!s.detected) throw NotDetectedYet("call detect_objects first");
  return plane_normal(s.cloud, position, s.world.arm_base.translation);
}

// ---------------------------------------------------------------------------
// grasp parsing

inline GraspPose parse_central_lift_grasp_pose(const RobotSession& s, const std::string& name,
                                               const std::string& description = "center") {
  const ObjectInstance& inst = detail::lookup(s, name);
  const Vec3 extents = inst.bbox3d.extents();
  const Vec3 center = inst.bbox3d.center();
  const bool close_along_x = extents.x() <= extents.y();
  const double width = std::min(extents.x(), extents.y()) + s.config.grasp_width_margin;
  if (width > s.arm.max_gripper_width) {
    throw ObjectTooWide(name + " needs " + std::to_string(width) + " m opening");
  }
  Vec3 tip = center;
  if (description == "top") {
    tip.z() = std::max(center.z(), inst.bbox3d.max.z() - s.config.finger_depth);
  }
  Mat3 r;
  const Vec3 closing = close_along_x ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 approach(0, 0, -1);
  r.col(0) = closing;
  r.col(1) = approach.cross(closing).normalized();
  r.col(2) = approach;
  if (r.determinant() < 0) r.col(1) = -r.col(1);
  return GraspPose{Pose{r, tip}, width, name};
}

inline GraspPose parse_horizontal_grasp_pose(const RobotSession& s, const std::string& name) {
  const ObjectInstance& inst = detail::lookup(s, name);
  const Vec3 center = inst.bbox3d.center();
  const Vec3 base = s.world.arm_base.translation;
  Vec3 approach(center.x() - base.x(), center.y() - base.y(), 0.0);
  if (approach.norm() < 1e-9) approach = Vec3::UnitX();
  approach.normalize();
  Vec3 tip = center;
  tip.z() = std::max(tip.z(), s.world.table_height + s.config.finger_clearance);
  Mat3 r;
  const Vec3 side = approach.cross(Vec3::UnitZ()).normalized();
  const Vec3 closing = side.cross(approach).normalized();  // vertical-ish
  r.col(0) = closing;
  r.col(1) = side;
  r.col(2) = approach;
  if (r.determinant() < 0) r.col(1) = -r.col(1);
  const double width =
      std::min(inst.bbox3d.extents().z() + s.config.grasp_width_margin, s.arm.max_gripper_width);
  return GraspPose{Pose{r, tip}, width, name};
}

inline GraspPose parse_adaptive_shape_grasp_pose(
    const RobotSession& s, const std::string& name,
    const std::optional<Vec3>& preferred_position = std::nullopt,
    const std::optional<Vec3>& preferred_approach_direction = std::nullopt,
    const std::optional<Vec3>& preferred_plane_normal = std::nullopt) {
  const ObjectInstance& inst = detail::lookup(s, name);
  if (inst.point_indices.size() < 50) {
    throw InsufficientPoints("instance has " + std::to_string(inst.point_indices.size()) +
                             " points");
  }
  std::vector<Vec3> pts;
  pts.reserve(inst.point_indices.size());
  for (std::size_t i : inst.point_indices) pts.push_back(s.cloud.points[i]);
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // eigenvalues ascending: cols 0,1 are the two minor axes
  const Vec3 minor0 = eig.eigenvectors().col(0).normalized();
  const Vec3 minor1 = eig.eigenvectors().col(1).normalized();
  const Vec3 major = eig.eigenvectors().col(2).normalized();

  Vec3 base_dir = inst.bbox3d.center() - s.world.arm_base.translation;
  base_dir.z() = 0;
  if (base_dir.norm() < 1e-9) base_dir = Vec3::UnitX();
  base_dir.normalize();

  struct Candidate {
    Pose pose;
    double width;
    double score;
  };
  std::optional<Candidate> best;
  const double z_lo = inst.bbox3d.min.z(), z_hi = inst.bbox3d.max.z();
  for (const Vec3& closing_axis : {minor0, minor1}) {
    const std::array<Vec3, 4> approaches = {Vec3(0, 0, -1), base_dir, major, Vec3(-major)};
    for (const Vec3& raw_approach : approaches) {
      Vec3 approach = raw_approach - raw_approach.dot(closing_axis) * closing_axis;
      if (approach.norm() < 1e-6) continue;
      approach.normalize();
      for (int h = 0; h < 5; ++h) {
        const double z = z_lo + (z_hi - z_lo) * (0.3 + 0.1 * h);
        // opening needed at this height band
        double lo = 1e30, hi = -1e30;
        int in_band = 0;
        for (const Vec3& p : pts) {
          if (std::abs(p.z() - z) > 0.25 * (z_hi - z_lo) + 1e-6) continue;
          const double along = p.dot(closing_axis);
          lo = std::min(lo, along);
          hi = std::max(hi, along);
          ++in_band;
        }
        if (in_band < 5) continue;
        const double width = (hi - lo) + s.config.grasp_width_margin;
        if (width > s.arm.max_gripper_width) continue;
        Vec3 tip = inst.bbox3d.center();
        tip.z() = std::max(z, s.world.table_height + s.config.finger_clearance);
        Mat3 r;
        Vec3 x = closing_axis - closing_axis.dot(approach) * approach;
        if (x.norm() < 1e-6) continue;
        x.normalize();
        const Vec3 y = approach.cross(x).normalized();
        r.col(0) = x;
        r.col(1) = y;
        r.col(2) = approach;
        if (r.determinant() < 0) r.col(1) = -r.col(1);

        double score = 0.2 * approach.dot(Vec3(0, 0, -1)) + 0.1 * (tip.z() - z_lo);
        if (preferred_position) score -= 5.0 * (tip - *preferred_position).norm();
        if (preferred_approach_direction) {
          score += 10.0 * approach.dot(preferred_approach_direction->normalized());
        }
        if (preferred_plane_normal) {
          score += 10.0 * std::abs(y.dot(preferred_plane_normal->normalized()));
        }
        if (!best || score > best->score) best = Candidate{Pose{r, tip}, width, score};
      }
    }
  }
  if (!best) throw NoFeasibleGrasp(name);
  if (preferred_approach_direction) {
    const double angle = std::acos(std::clamp(
        best->pose.rotation.col(2).dot(preferred_approach_direction->normalized()), -1.0, 1.0));
    if (angle > 30.0 * M_PI / 180.0) throw NoFeasibleGrasp("no grasp near preferred approach");
  }
  return GraspPose{best->pose, best->width, name};
}

// ---------------------------------------------------------------------------
// motion skills

constexpr double kPreGraspRetreat = 0.1;

inline Pose pre_grasp_pose(const Pose& grasp) {
  return Pose{grasp.rotation,
              grasp.translation - grasp.rotation * Vec3(0, 0, kPreGraspRetreat)};
}

// Plans and executes {pre-grasp, grasp}; the gripper stays open.
inline RobotSession grasp(const RobotSession& session, const GraspPose& g) {
  if (!session.gripper_open) throw GripperNotOpen("grasp requires an open gripper");
  RobotSession s = session;
  PlanningScene scene = detail::motion_scene(s);
  if (!g.target.empty()) {
    scene.contact_exempt = g.target;
    const auto it = s.instances.find(g.target);
    if (it != s.instances.end()) {
      scene.exempt_region = it->second.bbox3d.inflated(s.config.occupancy_voxel);
    }
  }
  const Pose pre = pre_grasp_pose(g.pose);
  const Trajectory approach = plan_to_pose(scene, s.arm, s.q_current, pre, detail::next_plan_seed(s));
  detail::commit_motion(s, approach);
  const Trajectory descend = plan_cartesian(scene, s.arm, s.q_current, {g.pose});
  detail::commit_motion(s, descend);
  s.gripper_width = std::min(g.width + s.config.grasp_width_margin, s.arm.max_gripper_width);
  return s;
}

inline RobotSession open_gripper(const RobotSession& session) {
  RobotSession s = session;
  s.gripper_open = true;
  s.gripper_width = s.arm.max_gripper_width;
  return s;
}

inline RobotSession close_gripper(const RobotSession& session) {
  RobotSession s = session;
  if (!s.gripper_open) return s;
  s.gripper_open = false;
  s.gripper_width = 0.0;
  if (s.detected) {
    const Vec3 tip = tool_pose(s).translation;
    double best = 1e30;
    const ObjectInstance* held = nullptr;
    for (const auto& [name, inst] : s.instances) {
      const double d = std::sqrt(inst.bbox3d.squared_distance(tip));
      if (d < best) {
        best = d;
        held = &inst;
      }
    }
    if (held && best <= 0.03) {
      const Vec3 e = held->bbox3d.extents();
      s.gripper_width = std::min({e.x(), e.y(), e.z()});
    }
  }
  return s;
}

inline RobotSession attach_object(const RobotSession& session, const std::string& name) {
  const ObjectInstance& inst = detail::lookup(session, name);
  if (session.gripper_open) throw NothingToAttach("close the gripper first");
  if (session.attached) throw AlreadyAttached(session.attached->name);
  RobotSession s = session;
  const Pose tool = tool_pose(s);
  if (inst.bbox3d.squared_distance(tool.translation) > 0.03 * 0.03) {
    throw NothingToAttach("tool tip is not at '" + name + "'");
  }
  Attachment att;
  att.name = name;
  att.scene_key = detail::resolve_obstacle_key(s.scene.obstacles, name, inst.bbox3d);
  s.scene = scene_attach(s.scene, att.scene_key, tool);

  const std::string unit_name = detail::resolve_unit_name(s.world, name, inst.bbox3d);
  for (std::size_t i = 0; i < s.world.objects.size(); ++i) {
    if (s.world.objects[i].name == unit_name) {
      att.object_index = static_cast<int>(i);
      att.grasp_offset = compose(tool.inverse(), s.world.objects[i].pose);
      break;
    }
  }
  if (att.object_index < 0) {
    // articulated part: motion couples to its driving joint
    for (const WorldUnit& u : s.world.units()) {
      if (u.name != unit_name) continue;
      if (u.articulated_index >= 0 && u.joint_index >= 0) {
        att.articulated = true;
        att.articulated_object =
            s.world.articulated[static_cast<std::size_t>(u.articulated_index)].spec.name;
        att.joint_index = u.joint_index;
      }
      break;
    }
  }
  s.attached = att;
  return s;
}

inline RobotSession detach_object(const RobotSession& session, const std::string& name) {
  if (!session.attached || session.attached->name != name) throw NotAttached(name);
  RobotSession s = session;
  s.scene = scene_detach(s.scene, s.attached->scene_key, tool_pose(s));
  s.attached.reset();
  s.place_receptacle.clear();
  return s;
}

// Registers the receptacle as an allowed contact on success (cleared by
// detach_object / detect_objects), mirroring receptacle handling in the
// planning scene.
inline Pose parse_place_pose(RobotSession& session, const std::string& object_name,
                             const std::optional<std::string>& receptacle_name = std::nullopt,
                             const std::optional<Vec3>& position = std::nullopt) {
  if (receptacle_name.has_value() == position.has_value()) {
    throw InvalidArgument("give exactly one of receptacle_name / position");
  }
  RobotSession& s = session;
  const ObjectInstance& object = detail::lookup(session, object_name);
  const Vec3 obj_extents = object.bbox3d.extents();
  const Mat3 rotation =
      session.attached ? tool_pose(session).rotation : Pose::identity().rotation;

  std::vector<Vec3> candidates;
  if (position) {
    candidates.push_back(*position);
  } else {
    const ObjectInstance& receptacle = detail::lookup(session, *receptacle_name);
    const Vec3 r_ext = receptacle.bbox3d.extents();
    if (obj_extents.x() > r_ext.x() - 2.0 * session.config.container_wall ||
        obj_extents.y() > r_ext.y() - 2.0 * session.config.container_wall) {
      throw DoesNotFit(object_name + " does not fit inside " + *receptacle_name);
    }
    const Vec3 center = receptacle.bbox3d.center();
    const double z = receptacle.bbox3d.min.z() + session.config.container_floor +
                     0.5 * obj_extents.z() + session.config.place_clearance;
    candidates.emplace_back(center.x(), center.y(), z);
    // fallback grid inside the receptacle footprint
    const double span_x = 0.5 * (r_ext.x() - obj_extents.x()) - session.config.container_wall;
    const double span_y = 0.5 * (r_ext.y() - obj_extents.y()) - session.config.container_wall;
    for (int gy = -1; gy <= 1; ++gy) {
      for (int gx = -1; gx <= 1; ++gx) {
        if (gx == 0 && gy == 0) continue;
        candidates.emplace_back(center.x() + gx * std::max(0.0, span_x),
                                center.y() + gy * std::max(0.0, span_y), z);
      }
    }
  }

  double best_residual = 1e30;
  for (const Vec3& candidate : candidates) {
    const Pose target{rotation, candidate};
    try {
      (void)ik(session.arm, target, session.q_current);
      if (receptacle_name) s.place_receptacle = *receptacle_name;
      return target;
    } catch (const IKFailure& e) {
      best_residual = std::min(best_residual, e.residual());
    }
  }
  throw IKFailure(best_residual, "no reachable place pose");
}

inline RobotSession move_to_pose(const RobotSession& session, const Pose& target) {
  RobotSession s = session;
  const Trajectory traj =
      plan_to_pose(detail::motion_scene(s), s.arm, s.q_current, target, detail::next_plan_seed(s));
  detail::commit_motion(s, traj);
  return s;
}

namespace detail {

// Tool motion while holding an articulated part: the commanded translation is
// projected on the joint's single degree of freedom.
inline RobotSession constrained_prismatic_move(const RobotSession& session, const Vec3& axis,
                                               double distance) {
  RobotSession s = session;
  const auto& att = *s.attached;
  ArticulatedObject* obj = nullptr;
  for (ArticulatedObject& a : s.world.articulated) {
    if (a.spec.name == att.articulated_object) obj = &a;
  }
  JointSpec& joint = obj->joints[static_cast<std::size_t>(att.joint_index)];
  const Vec3 joint_axis_world = (obj->spec.pose.rotation * joint.axis).normalized();
  const Vec3 command = axis.normalized() * distance;
  const double along = command.dot(joint_axis_world);
  const Vec3 off_axis = command - along * joint_axis_world;
  if (off_axis.norm() > 0.02) {
    throw ConstraintViolation("commanded motion deviates from the joint axis by " +
                              std::to_string(off_axis.norm()) + " m");
  }
  const double new_state = std::clamp(joint.state + along, joint.lo, joint.hi);
  const double actual = new_state - joint.state;

  const Pose current = tool_pose(s);
  Pose target = current;
  target.translation += actual * joint_axis_world;
  const Trajectory traj = plan_cartesian(detail::motion_scene(s), s.arm, s.q_current, {target});
  detail::commit_motion(s, traj);
  joint.state = new_state;
  return s;
}

}  // namespace detail

inline RobotSession move_in_direction(const RobotSession& session, const Vec3& axis,
                                      double distance) {
  if (distance == 0.0 || axis.norm() < 1e-12) return session;
  if (session.attached && session.attached->articulated) {
    return detail::constrained_prismatic_move(session, axis, distance);
  }
  RobotSession s = session;
  Pose target = tool_pose(s);
  target.translation += axis.normalized() * distance;
  const Trajectory traj = plan_cartesian(detail::motion_scene(s), s.arm, s.q_current, {target});
  detail::commit_motion(s, traj);
  return s;
}

inline std::vector<Pose> generate_arc_path_around_joint(const Pose& current,
                                                        const Vec3& joint_axis,
                                                        const Vec3& joint_position, int n,
                                                        double angle_degrees) {
  if (n < 1) throw InvalidArgument("n must be >= 1");
  if (std::abs(joint_axis.norm() - 1.0) > 1e-6) throw BadAxis("joint axis must be unit length");
  std::vector<Pose> path;
  path.reserve(static_cast<std::size_t>(n));
  const double total = angle_degrees * M_PI / 180.0;
  for (int k = 1; k <= n; ++k) {
    const Pose rot = rotation_about_line(joint_position, joint_axis, total * k / n);
    path.push_back(compose(rot, current));
  }
  return path;
}

inline RobotSession follow_path(const RobotSession& session, const std::vector<Pose>& path) {
  if (path.empty()) return session;
  RobotSession s = session;

  if (s.attached && s.attached->articulated) {
    // revolute coupling: waypoints must stay on the joint's arc
    ArticulatedObject* obj = nullptr;
    for (ArticulatedObject& a : s.world.articulated) {
      if (a.spec.name == s.attached->articulated_object) obj = &a;
    }
    JointSpec& joint = obj->joints[static_cast<std::size_t>(s.attached->joint_index)];
    if (joint.type == JointSpec::Type::Revolute) {
      const Vec3 axis = (obj->spec.pose.rotation * joint.axis).normalized();
      const Vec3 origin = obj->spec.pose.apply(joint.origin);
      const Pose current = tool_pose(s);
      auto radial = [&axis, &origin](const Vec3& p) {
        const Vec3 rel = p - origin;
        return rel - rel.dot(axis) * axis;
      };
      const Vec3 r0 = radial(current.translation);
      double total_angle = 0.0;
      Vec3 prev = r0;
      for (const Pose& p : path) {
        const Vec3 r = radial(p.translation);
        if (std::abs(r.norm() - r0.norm()) > 0.02) {
          throw ConstraintViolation("waypoint leaves the joint arc");
        }
        double step = std::atan2(prev.cross(r).dot(axis), prev.dot(r));
        total_angle += step;
        prev = r;
      }
      const double new_state = std::clamp(joint.state + total_angle, joint.lo, joint.hi);
      const Trajectory traj =
          plan_cartesian(detail::motion_scene(s), s.arm, s.q_current, path);
      detail::commit_motion(s, traj);
      joint.state = new_state;
      return s;
    }
  }

  const Trajectory traj = plan_cartesian(detail::motion_scene(s), s.arm, s.q_current, path);
  detail::commit_motion(s, traj);
  return s;
}

inline Pose get_gripper_pose(const RobotSession& s) { return tool_pose(s); }

}  // namespace armscript
