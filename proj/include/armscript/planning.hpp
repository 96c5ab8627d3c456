#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "armscript/arm.hpp"
#include "armscript/scene.hpp"

namespace armscript {

ARMSCRIPT_DEFINE_ERROR(StartInCollision);
ARMSCRIPT_DEFINE_ERROR(GoalUnreachable);
ARMSCRIPT_DEFINE_ERROR(AlreadyAttached);
ARMSCRIPT_DEFINE_ERROR(NotAttached);

class PlanningTimeout : public Error {
 public:
  explicit PlanningTimeout(int n_samples)
      : Error("PlanningTimeout", std::to_string(n_samples) + " samples exhausted"),
        n_samples_(n_samples) {}
  int n_samples() const { return n_samples_; }

 private:
  int n_samples_;
};

class CartesianIKBreak : public Error {
 public:
  explicit CartesianIKBreak(int step)
      : Error("CartesianIKBreak", "IK failed at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class CollisionOnPath : public Error {
 public:
  explicit CollisionOnPath(int step)
      : Error("CollisionOnPath", "collision at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// ---------------------------------------------------------------------------
// scene

struct OccupancyGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.02;
  std::array<int, 3> dims = {0, 0, 0};
  std::vector<std::uint8_t> blocked;

  bool empty() const { return dims[0] == 0 || blocked.empty(); }

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * dims[1] + iy) * dims[0] + ix;
  }

  BBox3D cell(int ix, int iy, int iz) const {
    const Vec3 lo = origin + voxel_size * Vec3(ix, iy, iz);
    return BBox3D{lo, lo + Vec3::Constant(voxel_size)};
  }

  bool mark(const Vec3& p) {
    if (empty()) return false;
    const Vec3 rel = (p - origin) / voxel_size;
    const int ix = static_cast<int>(std::floor(rel.x()));
    const int iy = static_cast<int>(std::floor(rel.y()));
    const int iz = static_cast<int>(std::floor(rel.z()));
    if (ix < 0 || iy < 0 || iz < 0 || ix >= dims[0] || iy >= dims[1] || iz >= dims[2]) {
      return false;
    }
    blocked[index(ix, iy, iz)] = 1;
    return true;
  }
};

inline OccupancyGrid make_occupancy(const BBox3D& workspace, double voxel_size = 0.02) {
  OccupancyGrid g;
  g.origin = workspace.min;
  g.voxel_size = voxel_size;
  const Vec3 span = workspace.max - workspace.min;
  for (int i = 0; i < 3; ++i) {
    g.dims[i] = std::max(1, static_cast<int>(std::ceil(span[i] / voxel_size)));
  }
  g.blocked.assign(static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2], 0);
  return g;
}

// Collision geometry of one named obstacle: its instance bbox plus the solid
// boxes actually used for checking (piece-level in GT modes, the bbox itself
// for perceived instances).
struct SceneObstacle {
  BBox3D bbox;
  std::vector<BBox3D> solids;
};

// Payload geometry is kept as exact box corners in the tool frame so the
// world-frame AABB never compounds across frame changes.
using BoxCorners = std::array<Vec3, 8>;

inline BoxCorners box_corners(const BBox3D& b) {
  BoxCorners corners;
  for (int k = 0; k < 8; ++k) {
    corners[static_cast<std::size_t>(k)] =
        Vec3(k & 1 ? b.max.x() : b.min.x(), k & 2 ? b.max.y() : b.min.y(),
             k & 4 ? b.max.z() : b.min.z());
  }
  return corners;
}

inline BoxCorners transform_corners(const BoxCorners& corners, const Pose& pose) {
  BoxCorners out;
  for (std::size_t k = 0; k < 8; ++k) out[k] = pose.apply(corners[k]);
  return out;
}

inline BBox3D corners_aabb(const BoxCorners& corners) {
  BBox3D b{corners[0], corners[0]};
  for (const Vec3& c : corners) {
    b.min = b.min.cwiseMin(c);
    b.max = b.max.cwiseMax(c);
  }
  return b;
}

struct AttachedPayload {
  std::string name;
  Pose grasp;  // object frame relative to the tool frame
  BoxCorners bbox_tool;
  std::vector<BoxCorners> solids_tool;
};

// Grasped objects rest against their support (table, drawer face) at the
// moment of attachment; the payload box is shrunk by this much so the
// resting contact does not read as a collision, and re-inflated on detach.
constexpr double kPayloadShrink = 0.01;

inline BBox3D shrink_box(const BBox3D& b, double amount) {
  BBox3D out = b.inflated(-amount);
  for (int i = 0; i < 3; ++i) {
    if (out.min[i] > out.max[i]) {
      const double mid = 0.5 * (b.min[i] + b.max[i]);
      out.min[i] = mid;
      out.max[i] = mid;
    }
  }
  return out;
}

struct PlanningScene {
  OccupancyGrid occupancy;
  std::map<std::string, SceneObstacle> obstacles;
  std::optional<AttachedPayload> attached;
  std::string contact_exempt;              // obstacle collisions ignored for this name
  std::optional<BBox3D> exempt_region;     // occupancy cells inside are ignored
  double instance_margin = 0.005;
};

// Octomap-style marking of back-projected valid depth pixels; occupied cells
// only, no free-space carving.
inline PlanningScene update_octomap(PlanningScene scene, const DepthImage& depth,
                                    const CameraModel& cam) {
  if (scene.occupancy.empty()) return scene;
  const double fx = cam.intrinsics(0, 0), fy = cam.intrinsics(1, 1);
  const double cx = cam.intrinsics(0, 2), cy = cam.intrinsics(1, 2);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double z = depth.at(u, v);
      if (z <= 0.0) continue;
      const Vec3 pc((u + 0.5 - cx) / fx * z, (v + 0.5 - cy) / fy * z, z);
      scene.occupancy.mark(cam.rotation * pc + cam.translation);
    }
  }
  return scene;
}

inline PlanningScene scene_attach(PlanningScene scene, const std::string& name,
                                  const Pose& tool_pose) {
  if (scene.attached) throw AlreadyAttached(scene.attached->name);
  const auto it = scene.obstacles.find(name);
  if (it == scene.obstacles.end()) throw NoSuchObject(name);
  AttachedPayload payload;
  payload.name = name;
  const Pose tool_inv = tool_pose.inverse();
  payload.bbox_tool =
      transform_corners(box_corners(shrink_box(it->second.bbox, kPayloadShrink)), tool_inv);
  for (const BBox3D& s : it->second.solids) {
    payload.solids_tool.push_back(
        transform_corners(box_corners(shrink_box(s, kPayloadShrink)), tool_inv));
  }
  payload.grasp = compose(tool_inv, Pose::from_translation(it->second.bbox.center()));
  scene.obstacles.erase(it);
  scene.attached = std::move(payload);
  return scene;
}

inline BBox3D box_to_world(const BoxCorners& local, const Pose& pose) {
  return corners_aabb(transform_corners(local, pose));
}

inline PlanningScene scene_detach(PlanningScene scene, const std::string& name,
                                  const Pose& tool_pose) {
  if (!scene.attached || scene.attached->name != name) throw NotAttached(name);
  SceneObstacle obstacle;
  obstacle.bbox = box_to_world(scene.attached->bbox_tool, tool_pose).inflated(kPayloadShrink);
  for (const BoxCorners& s : scene.attached->solids_tool) {
    obstacle.solids.push_back(box_to_world(s, tool_pose).inflated(kPayloadShrink));
  }
  scene.obstacles[name] = std::move(obstacle);
  scene.attached.reset();
  return scene;
}

// ---------------------------------------------------------------------------
// distance primitives

inline double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                                       const Vec3& q1) {
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-16 && e <= 1e-16) return r.norm();
  if (a <= 1e-16) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-16) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-16 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return (p0 + s * d1 - (q0 + t * d2)).norm();
}

// Distance from segment to axis-aligned box: dist(p(t), box) is convex in t,
// minimized by ternary search.
inline double segment_box_distance(const Vec3& p0, const Vec3& p1, const BBox3D& box) {
  auto dist = [&](double t) { return std::sqrt(box.squared_distance(p0 + t * (p1 - p0))); };
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 48; ++iter) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (dist(m1) <= dist(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return dist(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// collision checking

namespace detail {

struct WorldCapsule {
  Vec3 p0, p1;
  double radius;
  int link;
};

inline std::vector<WorldCapsule> world_capsules(const ArmModel& arm,
                                                const std::vector<Pose>& frames) {
  std::vector<WorldCapsule> out;
  out.reserve(arm.capsules.size());
  for (const LinkCapsule& c : arm.capsules) {
    const Pose& f = frames[static_cast<std::size_t>(c.link)];
    out.push_back({f.apply(c.p0), f.apply(c.p1), c.radius, c.link});
  }
  return out;
}

inline bool capsule_hits_occupancy(const OccupancyGrid& grid, const Vec3& p0, const Vec3& p1,
                                   double radius,
                                   const std::optional<BBox3D>& exempt = std::nullopt) {
  if (grid.empty()) return false;
  BBox3D reach{p0.cwiseMin(p1) - Vec3::Constant(radius), p0.cwiseMax(p1) + Vec3::Constant(radius)};
  const Vec3 rel0 = (reach.min - grid.origin) / grid.voxel_size;
  const Vec3 rel1 = (reach.max - grid.origin) / grid.voxel_size;
  const int x0 = std::max(0, static_cast<int>(std::floor(rel0.x())));
  const int y0 = std::max(0, static_cast<int>(std::floor(rel0.y())));
  const int z0 = std::max(0, static_cast<int>(std::floor(rel0.z())));
  const int x1 = std::min(grid.dims[0] - 1, static_cast<int>(std::floor(rel1.x())));
  const int y1 = std::min(grid.dims[1] - 1, static_cast<int>(std::floor(rel1.y())));
  const int z1 = std::min(grid.dims[2] - 1, static_cast<int>(std::floor(rel1.z())));
  for (int iz = z0; iz <= z1; ++iz) {
    for (int iy = y0; iy <= y1; ++iy) {
      for (int ix = x0; ix <= x1; ++ix) {
        if (!grid.blocked[grid.index(ix, iy, iz)]) continue;
        const BBox3D cell = grid.cell(ix, iy, iz);
        if (exempt && exempt->contains(cell.center())) continue;
        if (segment_box_distance(p0, p1, cell) < radius) return true;
      }
    }
  }
  return false;
}

inline bool box_hits_occupancy(const OccupancyGrid& grid, const BBox3D& box,
                               const std::optional<BBox3D>& exempt = std::nullopt) {
  if (grid.empty()) return false;
  const Vec3 rel0 = (box.min - grid.origin) / grid.voxel_size;
  const Vec3 rel1 = (box.max - grid.origin) / grid.voxel_size;
  const int x0 = std::max(0, static_cast<int>(std::floor(rel0.x())));
  const int y0 = std::max(0, static_cast<int>(std::floor(rel0.y())));
  const int z0 = std::max(0, static_cast<int>(std::floor(rel0.z())));
  const int x1 = std::min(grid.dims[0] - 1, static_cast<int>(std::floor(rel1.x())));
  const int y1 = std::min(grid.dims[1] - 1, static_cast<int>(std::floor(rel1.y())));
  const int z1 = std::min(grid.dims[2] - 1, static_cast<int>(std::floor(rel1.z())));
  for (int iz = z0; iz <= z1; ++iz) {
    for (int iy = y0; iy <= y1; ++iy) {
      for (int ix = x0; ix <= x1; ++ix) {
        if (!grid.blocked[grid.index(ix, iy, iz)]) continue;
        const BBox3D cell = grid.cell(ix, iy, iz);
        if (exempt && exempt->contains(cell.center())) continue;
        if (box.intersects(cell)) return true;
      }
    }
  }
  return false;
}

}  // namespace detail

// True iff any link capsule intersects occupancy voxels, any obstacle box
// (contact-exempt and attached objects excluded), a non-adjacent link, or the
// attached payload's box intersects obstacles. Touching at exactly zero
// clearance does not collide; a margin is added to obstacle boxes instead.
inline bool collides(const PlanningScene& scene, const ArmModel& arm, const Configuration& q) {
  const auto frames = link_frames(arm, q);
  const auto capsules = detail::world_capsules(arm, frames);

  for (const auto& cap : capsules) {
    if (detail::capsule_hits_occupancy(scene.occupancy, cap.p0, cap.p1, cap.radius,
                                       scene.exempt_region)) {
      return true;
    }
    for (const auto& [name, obstacle] : scene.obstacles) {
      if (name == scene.contact_exempt) continue;
      for (const BBox3D& solid : obstacle.solids) {
        if (segment_box_distance(cap.p0, cap.p1, solid.inflated(scene.instance_margin)) <
            cap.radius) {
          return true;
        }
      }
    }
  }
  // Consecutive capsules along the chain share a joint and are exempt, as in
  // a standard self-collision matrix; capsules are listed in chain order.
  for (std::size_t i = 0; i < capsules.size(); ++i) {
    for (std::size_t j = i + 1; j < capsules.size(); ++j) {
      if (j == i + 1) continue;
      if (std::abs(capsules[i].link - capsules[j].link) < 2) continue;
      if (segment_segment_distance(capsules[i].p0, capsules[i].p1, capsules[j].p0,
                                   capsules[j].p1) < capsules[i].radius + capsules[j].radius) {
        return true;
      }
    }
  }
  if (scene.attached) {
    const Pose tool = compose(frames.back(), arm.tool);
    const BBox3D payload = box_to_world(scene.attached->bbox_tool, tool);
    if (detail::box_hits_occupancy(scene.occupancy, payload, scene.exempt_region)) return true;
    for (const auto& [name, obstacle] : scene.obstacles) {
      if (name == scene.contact_exempt) continue;
      for (const BBox3D& solid : obstacle.solids) {
        if (payload.intersects(solid.inflated(scene.instance_margin))) return true;
      }
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// trajectories and planners

struct Waypoint {
  Configuration q;
  Pose ee;
};

struct Trajectory {
  std::vector<Waypoint> waypoints;
};

constexpr double kRrtStep = 0.1;          // max per-joint extension
constexpr double kEdgeCheckStep = 0.02;   // collision interpolation at planning time
constexpr double kTrajectoryStep = 0.05;  // max per-joint delta between output waypoints
constexpr int kRrtSampleBudget = 50000;
constexpr int kGoalIkSamples = 20;
constexpr int kShortcutIterations = 100;
constexpr double kGoalBias = 0.10;

namespace detail {

inline bool edge_clear(const PlanningScene& scene, const ArmModel& arm, const Configuration& a,
                       const Configuration& b, double step) {
  const double span = (b - a).cwiseAbs().maxCoeff();
  const int n = std::max(1, static_cast<int>(std::ceil(span / step)));
  for (int i = 1; i <= n; ++i) {
    const Configuration q = a + (b - a) * (static_cast<double>(i) / n);
    if (collides(scene, arm, q)) return false;
  }
  return true;
}

inline void densify_into(Trajectory& traj, const ArmModel& arm, const Configuration& from,
                         const Configuration& to) {
  const double span = (to - from).cwiseAbs().maxCoeff();
  const int n = std::max(1, static_cast<int>(std::ceil(span / kTrajectoryStep)));
  for (int i = 1; i <= n; ++i) {
    const Configuration q = from + (to - from) * (static_cast<double>(i) / n);
    traj.waypoints.push_back({q, fk(arm, q)});
  }
}

}  // namespace detail

// RRT with goal biasing and shortcut smoothing; deterministic per seed.
inline Trajectory plan_to_pose(const PlanningScene& scene, const ArmModel& arm,
                               const Configuration& q_start, const Pose& target,
                               std::uint64_t seed) {
  if (static_cast<std::size_t>(q_start.size()) != arm.dof()) {
    throw DimensionMismatch("start configuration");
  }
  if (collides(scene, arm, q_start)) throw StartInCollision("planning start state collides");

  const Pose start_pose = fk(arm, q_start);
  if ((start_pose.translation - target.translation).norm() < kIKPositionTol &&
      orientation_error(target.rotation, start_pose.rotation).norm() < kIKOrientationTol) {
    return Trajectory{{{q_start, start_pose}}};
  }

  Rng rng(mix_seed(seed, 0x9a7));
  const int n = static_cast<int>(arm.dof());

  std::vector<Configuration> goals;
  double best_residual = 1e30;
  for (int k = 0; k < kGoalIkSamples; ++k) {
    Configuration ik_seed = q_start;
    if (k > 0) {
      for (int i = 0; i < n; ++i) ik_seed[i] = rng.uniform(arm.joints[i].lo, arm.joints[i].hi);
    }
    try {
      const Configuration g = ik(arm, target, ik_seed);
      if (collides(scene, arm, g)) continue;
      bool duplicate = false;
      for (const Configuration& existing : goals) {
        if ((existing - g).cwiseAbs().maxCoeff() < 1e-6) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) goals.push_back(g);
    } catch (const IKFailure& e) {
      best_residual = std::min(best_residual, e.residual());
    }
  }
  if (goals.empty()) {
    throw GoalUnreachable("no collision-free IK solution (best residual " +
                          std::to_string(best_residual) + ")");
  }

  struct Node {
    Configuration q;
    int parent;
  };
  std::vector<Node> nodes{{q_start, -1}};
  int goal_node = -1;
  int samples = 0;
  while (samples < kRrtSampleBudget && goal_node < 0) {
    ++samples;
    Configuration target_q(n);
    const bool to_goal = rng.chance(kGoalBias);
    if (to_goal) {
      target_q = goals[rng.uniform_int(goals.size())];
    } else {
      for (int i = 0; i < n; ++i) target_q[i] = rng.uniform(arm.joints[i].lo, arm.joints[i].hi);
    }
    int nearest = 0;
    double nearest_dist = 1e30;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i].q - target_q).norm();
      if (d < nearest_dist) {
        nearest_dist = d;
        nearest = static_cast<int>(i);
      }
    }
    Configuration step = target_q - nodes[nearest].q;
    const double inf = step.cwiseAbs().maxCoeff();
    if (inf < 1e-9) continue;
    if (inf > kRrtStep) step *= kRrtStep / inf;
    const Configuration q_new = arm.clamp(nodes[nearest].q + step);
    if (!detail::edge_clear(scene, arm, nodes[nearest].q, q_new, kEdgeCheckStep)) continue;
    nodes.push_back({q_new, nearest});
    const int new_index = static_cast<int>(nodes.size()) - 1;
    for (const Configuration& g : goals) {
      if ((q_new - g).cwiseAbs().maxCoeff() <= kRrtStep &&
          detail::edge_clear(scene, arm, q_new, g, kEdgeCheckStep)) {
        nodes.push_back({g, new_index});
        goal_node = static_cast<int>(nodes.size()) - 1;
        break;
      }
    }
  }
  if (goal_node < 0) throw PlanningTimeout(samples);

  std::vector<Configuration> path;
  for (int i = goal_node; i >= 0; i = nodes[i].parent) path.push_back(nodes[i].q);
  std::reverse(path.begin(), path.end());

  for (int iter = 0; iter < kShortcutIterations && path.size() > 2; ++iter) {
    const std::size_t i = rng.uniform_int(path.size() - 1);
    const std::size_t j = i + 1 + rng.uniform_int(path.size() - i - 1);
    if (j <= i + 1) continue;
    if (detail::edge_clear(scene, arm, path[i], path[j], kEdgeCheckStep)) {
      path.erase(path.begin() + i + 1, path.begin() + j);
    }
  }

  Trajectory traj;
  traj.waypoints.push_back({path.front(), fk(arm, path.front())});
  for (std::size_t i = 1; i < path.size(); ++i) {
    detail::densify_into(traj, arm, path[i - 1], path[i]);
  }
  return traj;
}

constexpr double kCartesianStepPos = 0.01;               // 1 cm
constexpr double kCartesianStepRot = 2.0 * M_PI / 180.0;  // 2 degrees

// Straight-line SE(3) interpolation with IK chained from the previous
// solution; fails on the first unreachable or colliding step.
inline Trajectory plan_cartesian(const PlanningScene& scene, const ArmModel& arm,
                                 const Configuration& q_start, const std::vector<Pose>& poses) {
  if (collides(scene, arm, q_start)) throw StartInCollision("cartesian start state collides");
  Trajectory traj;
  traj.waypoints.push_back({q_start, fk(arm, q_start)});
  Configuration q_prev = q_start;
  Pose from = traj.waypoints.front().ee;
  int step_index = 0;
  for (const Pose& to : poses) {
    const double dist = (to.translation - from.translation).norm();
    const double angle = std::abs(Eigen::AngleAxisd(to.rotation * from.rotation.transpose()).angle());
    const int n = std::max(1, static_cast<int>(std::ceil(
                                  std::max(dist / kCartesianStepPos, angle / kCartesianStepRot))));
    const Eigen::Quaterniond qa(from.rotation), qb(to.rotation);
    for (int i = 1; i <= n; ++i) {
      ++step_index;
      const double s = static_cast<double>(i) / n;
      Pose mid;
      mid.translation = (1.0 - s) * from.translation + s * to.translation;
      mid.rotation = qa.slerp(s, qb).toRotationMatrix();
      Configuration q_mid;
      try {
        q_mid = ik(arm, mid, q_prev);
      } catch (const IKFailure&) {
        throw CartesianIKBreak(step_index);
      }
      if (!detail::edge_clear(scene, arm, q_prev, q_mid, kEdgeCheckStep)) {
        throw CollisionOnPath(step_index);
      }
      detail::densify_into(traj, arm, q_prev, q_mid);
      q_prev = q_mid;
    }
    from = to;
  }
  return traj;
}

}  // namespace armscript
