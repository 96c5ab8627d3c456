#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "armscript/geometry.hpp"

namespace armscript {

ARMSCRIPT_DEFINE_ERROR(ParseError);
ARMSCRIPT_DEFINE_ERROR(InvalidWorld);
ARMSCRIPT_DEFINE_ERROR(NoSuchJoint);
ARMSCRIPT_DEFINE_ERROR(NoSuchObject);

struct BoxShape {
  Vec3 extents = Vec3::Ones();  // full side lengths
};

struct SphereShape {
  double radius = 0.1;
};

// Axis along local +z.
struct CylinderShape {
  double radius = 0.05;
  double height = 0.1;
};

using PrimitiveShape = std::variant<BoxShape, SphereShape, CylinderShape>;

struct ShapePiece {
  PrimitiveShape prim;
  Pose offset;  // piece pose in its part-group frame
};

// A named rigid group of primitives. Groups of an articulated object may be
// driven by a joint (child_part) or ride along with another group
// (attached_to), e.g. a handle bar fixed to its drawer.
struct PartGroup {
  std::string name;         // empty: folded into the owning object's base unit
  std::string label;        // empty: inherit the object label
  std::string attached_to;  // empty: static relative to the object base
  Pose offset;
  std::vector<ShapePiece> pieces;
};

struct ObjectSpec {
  std::string name;
  std::string label;
  std::vector<PartGroup> groups;
  Pose pose;
  bool graspable = true;
  std::string color;
};

struct JointSpec {
  enum class Type { Prismatic, Revolute };
  Type type = Type::Prismatic;
  Vec3 axis = Vec3::UnitX();  // unit, in the object base frame
  Vec3 origin = Vec3::Zero();  // in the object base frame
  double lo = 0.0;
  double hi = 0.0;
  double state = 0.0;
  std::string child_part;
};

struct ArticulatedObject {
  ObjectSpec spec;
  std::vector<JointSpec> joints;
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depths;  // camera-frame z in meters; 0 = no hit

  float at(int u, int v) const { return depths[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return depths[static_cast<std::size_t>(v) * width + u]; }
};

// ---------------------------------------------------------------------------
// primitive helpers

inline double primitive_surface_area(const PrimitiveShape& prim) {
  if (const auto* b = std::get_if<BoxShape>(&prim)) {
    const Vec3& e = b->extents;
    return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
  }
  if (const auto* s = std::get_if<SphereShape>(&prim)) {
    return 4.0 * M_PI * s->radius * s->radius;
  }
  const auto& c = std::get<CylinderShape>(prim);
  return 2.0 * M_PI * c.radius * (c.radius + c.height);
}

// AABB of a primitive at a world pose. For boxes this equals the AABB of the
// 8 transformed corners; cylinders use their local bounding box.
inline BBox3D primitive_aabb(const PrimitiveShape& prim, const Pose& pose) {
  Vec3 half;
  if (const auto* b = std::get_if<BoxShape>(&prim)) {
    half = 0.5 * b->extents;
  } else if (const auto* s = std::get_if<SphereShape>(&prim)) {
    return BBox3D{pose.translation - Vec3::Constant(s->radius),
                  pose.translation + Vec3::Constant(s->radius)};
  } else {
    const auto& c = std::get<CylinderShape>(prim);
    half = Vec3(c.radius, c.radius, 0.5 * c.height);
  }
  const Vec3 world_half = pose.rotation.cwiseAbs() * half;
  return BBox3D{pose.translation - world_half, pose.translation + world_half};
}

// Nearest intersection distance of ray (origin + t*dir, unit dir) with a
// primitive at `pose`; empty when the ray misses.
inline std::optional<double> ray_primitive(const PrimitiveShape& prim, const Pose& pose,
                                           const Vec3& origin, const Vec3& dir) {
  constexpr double kTMin = 1e-7;
  const Mat3 rt = pose.rotation.transpose();
  const Vec3 o = rt * (origin - pose.translation);
  const Vec3 d = rt * dir;

  if (const auto* s = std::get_if<SphereShape>(&prim)) {
    const double b = o.dot(d);
    const double c = o.squaredNorm() - s->radius * s->radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t < kTMin) t = -b + sq;
    if (t < kTMin) return std::nullopt;
    return t;
  }

  if (const auto* bx = std::get_if<BoxShape>(&prim)) {
    const Vec3 half = 0.5 * bx->extents;
    double t_enter = -1e30, t_exit = 1e30;
    for (int i = 0; i < 3; ++i) {
      if (std::abs(d[i]) < 1e-12) {
        if (o[i] < -half[i] || o[i] > half[i]) return std::nullopt;
        continue;
      }
      double t0 = (-half[i] - o[i]) / d[i];
      double t1 = (half[i] - o[i]) / d[i];
      if (t0 > t1) std::swap(t0, t1);
      t_enter = std::max(t_enter, t0);
      t_exit = std::min(t_exit, t1);
    }
    if (t_exit < std::max(t_enter, kTMin)) return std::nullopt;
    return t_enter >= kTMin ? t_enter : t_exit;
  }

  const auto& cy = std::get<CylinderShape>(prim);
  const double hz = 0.5 * cy.height;
  double best = 1e30;
  // lateral surface
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-14) {
    const double b = (o.x() * d.x() + o.y() * d.y()) / a;
    const double c = (o.x() * o.x() + o.y() * o.y() - cy.radius * cy.radius) / a;
    const double disc = b * b - c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {-b - sq, -b + sq}) {
        if (t >= kTMin && t < best) {
          const double z = o.z() + t * d.z();
          if (z >= -hz && z <= hz) best = t;
        }
      }
    }
  }
  // caps
  if (std::abs(d.z()) > 1e-12) {
    for (double zcap : {-hz, hz}) {
      const double t = (zcap - o.z()) / d.z();
      if (t >= kTMin && t < best) {
        const double x = o.x() + t * d.x();
        const double y = o.y() + t * d.y();
        if (x * x + y * y <= cy.radius * cy.radius) best = t;
      }
    }
  }
  if (best > 1e29) return std::nullopt;
  return best;
}

// Deterministic stratified surface samples of a primitive, in its local frame.
inline void primitive_surface_samples(const PrimitiveShape& prim, int count,
                                      std::vector<Vec3>& out) {
  if (count <= 0) return;
  constexpr double kGolden = 2.399963229728653;  // golden angle

  if (const auto* s = std::get_if<SphereShape>(&prim)) {
    // Fibonacci sphere
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = kGolden * i;
      out.emplace_back(s->radius * r * std::cos(phi), s->radius * r * std::sin(phi),
                       s->radius * z);
    }
    return;
  }

  if (const auto* b = std::get_if<BoxShape>(&prim)) {
    const Vec3 e = b->extents;
    const Vec3 h = 0.5 * e;
    struct Face {
      int axis;
      double sign;
      int ua, va;
      double area;
    };
    std::array<Face, 6> faces = {{{0, +1, 1, 2, e.y() * e.z()},
                                  {0, -1, 1, 2, e.y() * e.z()},
                                  {1, +1, 0, 2, e.x() * e.z()},
                                  {1, -1, 0, 2, e.x() * e.z()},
                                  {2, +1, 0, 1, e.x() * e.y()},
                                  {2, -1, 0, 1, e.x() * e.y()}}};
    double total = 0.0;
    for (const auto& f : faces) total += f.area;
    int assigned = 0;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
      const auto& f = faces[fi];
      int n = (fi + 1 == faces.size())
                  ? count - assigned
                  : static_cast<int>(std::round(count * f.area / total));
      n = std::min(n, count - assigned);
      assigned += n;
      if (n <= 0) continue;
      const double du = e[f.ua], dv = e[f.va];
      int nu = std::max(1, static_cast<int>(std::round(std::sqrt(n * du / std::max(dv, 1e-9)))));
      int nv = std::max(1, (n + nu - 1) / nu);
      int placed = 0;
      for (int j = 0; j < nv && placed < n; ++j) {
        for (int i = 0; i < nu && placed < n; ++i, ++placed) {
          Vec3 p;
          p[f.axis] = f.sign * h[f.axis];
          p[f.ua] = -h[f.ua] + du * (i + 0.5) / nu;
          p[f.va] = -h[f.va] + dv * (j + 0.5) / nv;
          out.push_back(p);
        }
      }
    }
    return;
  }

  const auto& c = std::get<CylinderShape>(prim);
  const double side_area = 2.0 * M_PI * c.radius * c.height;
  const double cap_area = M_PI * c.radius * c.radius;
  const double total = side_area + 2.0 * cap_area;
  const int n_side = static_cast<int>(std::round(count * side_area / total));
  const int n_cap = (count - n_side) / 2;
  const int n_top = count - n_side - n_cap;
  // lateral: golden-angle spiral over (theta, z)
  for (int i = 0; i < n_side; ++i) {
    const double theta = kGolden * i;
    const double z = -0.5 * c.height + c.height * (i + 0.5) / n_side;
    out.emplace_back(c.radius * std::cos(theta), c.radius * std::sin(theta), z);
  }
  // caps: sunflower layout
  for (int cap = 0; cap < 2; ++cap) {
    const int n = cap == 0 ? n_cap : n_top;
    const double z = (cap == 0 ? -0.5 : 0.5) * c.height;
    for (int i = 0; i < n; ++i) {
      const double r = c.radius * std::sqrt((i + 0.5) / std::max(1, n));
      const double theta = kGolden * i;
      out.emplace_back(r * std::cos(theta), r * std::sin(theta), z);
    }
  }
}

// ---------------------------------------------------------------------------
// world model

// A detectable/collidable rigid unit of the world at its current pose:
// a plain object, or one named part group of an articulated object.
struct WorldUnit {
  std::string name;
  std::string label;
  bool graspable = true;
  std::string color;
  std::vector<ShapePiece> world_pieces;  // offsets are world poses
  BBox3D aabb;
  int articulated_index = -1;  // index into WorldModel::articulated, -1 if plain
  int joint_index = -1;        // driving joint within that object, -1 if none
};

struct WorldModel {
  double table_height = 0.75;
  Vec3 table_extents = Vec3(1.5, 1.5, 0.0);  // z filled from table_height
  std::vector<ObjectSpec> objects;
  std::vector<ArticulatedObject> articulated;
  std::vector<CameraModel> cameras;
  Pose arm_base;
  std::uint64_t rng_seed = 0;

  ObjectSpec table_object() const {
    ObjectSpec t;
    t.name = "table";
    t.label = "table";
    t.graspable = false;
    t.color = "wood";
    PartGroup g;
    g.pieces.push_back(
        {BoxShape{Vec3(table_extents.x(), table_extents.y(), table_height)}, Pose{}});
    t.groups.push_back(std::move(g));
    t.pose = Pose::from_translation(Vec3(0, 0, 0.5 * table_height));
    return t;
  }

  std::vector<WorldUnit> units() const;
  const WorldUnit* find_unit(std::vector<WorldUnit>& cache, const std::string& name) const;
};

inline Pose joint_transform(const JointSpec& j) {
  if (j.type == JointSpec::Type::Prismatic) {
    return Pose::from_translation(j.state * j.axis);
  }
  return rotation_about_line(j.origin, j.axis, j.state);
}

namespace detail {

// Motion of a part group in the object base frame, following attached_to chains.
inline Pose group_motion(const ArticulatedObject& obj, const PartGroup& g, int depth = 0) {
  if (depth > 8) throw InvalidWorld("attached_to cycle involving part '" + g.name + "'");
  for (const JointSpec& j : obj.joints) {
    if (!g.name.empty() && j.child_part == g.name) return joint_transform(j);
  }
  if (!g.attached_to.empty()) {
    for (const PartGroup& parent : obj.spec.groups) {
      if (parent.name == g.attached_to) return group_motion(obj, parent, depth + 1);
    }
    throw InvalidWorld("attached_to references unknown part '" + g.attached_to + "'");
  }
  return Pose{};
}

inline int driving_joint(const ArticulatedObject& obj, const PartGroup& g, int depth = 0) {
  if (depth > 8) return -1;
  for (std::size_t ji = 0; ji < obj.joints.size(); ++ji) {
    if (!g.name.empty() && obj.joints[ji].child_part == g.name) return static_cast<int>(ji);
  }
  if (!g.attached_to.empty()) {
    for (const PartGroup& parent : obj.spec.groups) {
      if (parent.name == g.attached_to) return driving_joint(obj, parent, depth + 1);
    }
  }
  return -1;
}

inline void append_group_pieces(const ObjectSpec& spec, const PartGroup& g, const Pose& motion,
                                WorldUnit& unit) {
  const Pose group_world = compose(compose(spec.pose, motion), g.offset);
  for (const ShapePiece& piece : g.pieces) {
    unit.world_pieces.push_back({piece.prim, compose(group_world, piece.offset)});
  }
}

inline void finalize_unit(WorldUnit& unit) {
  bool first = true;
  for (const ShapePiece& piece : unit.world_pieces) {
    const BBox3D b = primitive_aabb(piece.prim, piece.offset);
    if (first) {
      unit.aabb = b;
      first = false;
    } else {
      unit.aabb.min = unit.aabb.min.cwiseMin(b.min);
      unit.aabb.max = unit.aabb.max.cwiseMax(b.max);
    }
  }
}

}  // namespace detail

inline std::vector<WorldUnit> WorldModel::units() const {
  std::vector<WorldUnit> result;
  auto add_plain = [&result](const ObjectSpec& spec) {
    WorldUnit u;
    u.name = spec.name;
    u.label = spec.label;
    u.graspable = spec.graspable;
    u.color = spec.color;
    for (const PartGroup& g : spec.groups) detail::append_group_pieces(spec, g, Pose{}, u);
    detail::finalize_unit(u);
    result.push_back(std::move(u));
  };

  add_plain(table_object());
  for (const ObjectSpec& spec : objects) add_plain(spec);

  for (std::size_t ai = 0; ai < articulated.size(); ++ai) {
    const ArticulatedObject& obj = articulated[ai];
    WorldUnit base;
    base.name = obj.spec.name;
    base.label = obj.spec.label;
    base.graspable = false;
    base.color = obj.spec.color;
    base.articulated_index = static_cast<int>(ai);
    for (const PartGroup& g : obj.spec.groups) {
      if (g.name.empty()) {
        detail::append_group_pieces(obj.spec, g, Pose{}, base);
        continue;
      }
      WorldUnit u;
      u.name = g.name;
      u.label = g.label.empty() ? obj.spec.label : g.label;
      u.graspable = obj.spec.graspable;
      u.color = obj.spec.color;
      u.articulated_index = static_cast<int>(ai);
      u.joint_index = detail::driving_joint(obj, g);
      detail::append_group_pieces(obj.spec, g, detail::group_motion(obj, g), u);
      detail::finalize_unit(u);
      result.push_back(std::move(u));
    }
    if (!base.world_pieces.empty()) {
      detail::finalize_unit(base);
      result.push_back(std::move(base));
    }
  }
  return result;
}

inline const WorldUnit* find_unit(const std::vector<WorldUnit>& units, const std::string& name) {
  for (const WorldUnit& u : units) {
    if (u.name == name) return &u;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// queries

inline BBox3D gt_bbox3d(const WorldModel& world, const std::string& name) {
  const auto units = world.units();
  const WorldUnit* u = find_unit(units, name);
  if (!u) throw NoSuchObject(name);
  return u->aabb;
}

inline WorldModel set_joint_state(const WorldModel& world, const std::string& object_name,
                                  std::size_t joint_index, double value) {
  WorldModel next = world;
  for (ArticulatedObject& obj : next.articulated) {
    if (obj.spec.name != object_name) continue;
    if (joint_index >= obj.joints.size()) {
      throw NoSuchJoint(object_name + " has no joint " + std::to_string(joint_index));
    }
    JointSpec& j = obj.joints[joint_index];
    j.state = std::clamp(value, j.lo, j.hi);
    return next;
  }
  throw NoSuchJoint("no articulated object named '" + object_name + "'");
}

// ---------------------------------------------------------------------------
// depth rendering

inline DepthImage render_depth(const WorldModel& world, const CameraModel& cam) {
  DepthImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.depths.assign(static_cast<std::size_t>(cam.width) * cam.height, 0.0f);

  std::vector<ShapePiece> pieces;
  for (const WorldUnit& u : world.units()) {
    pieces.insert(pieces.end(), u.world_pieces.begin(), u.world_pieces.end());
  }
  if (pieces.empty()) return img;

  const double fx = cam.intrinsics(0, 0), fy = cam.intrinsics(1, 1);
  const double cx = cam.intrinsics(0, 2), cy = cam.intrinsics(1, 2);
  const Vec3 origin = cam.translation;

  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      Vec3 dir_cam((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0);
      dir_cam.normalize();
      const Vec3 dir = cam.rotation * dir_cam;
      double best = 1e30;
      for (const ShapePiece& piece : pieces) {
        if (auto t = ray_primitive(piece.prim, piece.offset, origin, dir)) {
          best = std::min(best, *t);
        }
      }
      if (best < 1e29) img.at(u, v) = static_cast<float>(best * dir_cam.z());
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// ground-truth detections

constexpr int kSurfaceSamplesPerUnit = 1024;

inline std::vector<Vec3> unit_surface_samples(const WorldUnit& unit,
                                              int total = kSurfaceSamplesPerUnit) {
  std::vector<Vec3> samples;
  samples.reserve(total);
  double total_area = 0.0;
  for (const ShapePiece& p : unit.world_pieces) total_area += primitive_surface_area(p.prim);
  int assigned = 0;
  for (std::size_t pi = 0; pi < unit.world_pieces.size(); ++pi) {
    const ShapePiece& p = unit.world_pieces[pi];
    int n = (pi + 1 == unit.world_pieces.size())
                ? total - assigned
                : static_cast<int>(std::round(total * primitive_surface_area(p.prim) / total_area));
    n = std::min(n, total - assigned);
    assigned += n;
    std::vector<Vec3> local;
    primitive_surface_samples(p.prim, n, local);
    for (const Vec3& q : local) samples.push_back(p.offset.apply(q));
  }
  return samples;
}

// Pixel AABB of a unit's projected surface samples. Empty when the unit is
// fully occluded or entirely out of frame.
inline std::optional<BBox2D> unit_detection_bbox(const std::vector<ShapePiece>& all_pieces,
                                                 const WorldUnit& unit, const CameraModel& cam) {
  const std::vector<Vec3> samples = unit_surface_samples(unit);
  BBox2D box{1e30, 1e30, -1e30, -1e30};
  int in_frame = 0;
  bool any_visible = false;
  for (const Vec3& s : samples) {
    const auto px = project(cam, s);
    if (!px) continue;
    if (px->u < 0 || px->u > cam.width - 1 || px->v < 0 || px->v > cam.height - 1) continue;
    ++in_frame;
    box.x_min = std::min(box.x_min, px->u);
    box.y_min = std::min(box.y_min, px->v);
    box.x_max = std::max(box.x_max, px->u);
    box.y_max = std::max(box.y_max, px->v);
    if (!any_visible) {
      const Vec3 to_sample = s - cam.translation;
      const double dist = to_sample.norm();
      const Vec3 dir = to_sample / dist;
      double nearest = 1e30;
      for (const ShapePiece& piece : all_pieces) {
        if (auto t = ray_primitive(piece.prim, piece.offset, cam.translation, dir)) {
          nearest = std::min(nearest, *t);
        }
      }
      if (nearest >= dist - 1e-4) any_visible = true;
    }
  }
  if (in_frame == 0 || !any_visible) return std::nullopt;
  // 2 px guard so the box contains fresh random surface samples too
  box.x_min -= 2.0;
  box.y_min -= 2.0;
  box.x_max += 2.0;
  box.y_max += 2.0;
  return box.clipped(cam.width, cam.height);
}

inline std::vector<std::pair<std::string, BBox2D>> gt_detections(
    const WorldModel& world, const CameraModel& cam, const std::vector<std::string>& labels) {
  std::vector<std::pair<std::string, BBox2D>> result;
  const auto units = world.units();
  std::vector<ShapePiece> all_pieces;
  for (const WorldUnit& u : units) {
    all_pieces.insert(all_pieces.end(), u.world_pieces.begin(), u.world_pieces.end());
  }
  for (const WorldUnit& u : units) {
    if (std::find(labels.begin(), labels.end(), u.label) == labels.end()) continue;
    if (auto box = unit_detection_bbox(all_pieces, u, cam)) {
      result.emplace_back(u.label, *box);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// serialization

namespace detail {

inline nlohmann::json pose_json(const Pose& p) {
  const auto v = pose_to_seven(p);
  return nlohmann::json(v);
}

inline Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 7) throw InvalidWorld("pose must be a 7-element array");
  std::array<double, 7> v{};
  for (int i = 0; i < 7; ++i) v[i] = j[i].get<double>();
  return pose_from_seven(v);
}

inline nlohmann::json primitive_json(const PrimitiveShape& prim) {
  nlohmann::json j;
  if (const auto* b = std::get_if<BoxShape>(&prim)) {
    j["type"] = "box";
    j["extents"] = {b->extents.x(), b->extents.y(), b->extents.z()};
  } else if (const auto* s = std::get_if<SphereShape>(&prim)) {
    j["type"] = "sphere";
    j["radius"] = s->radius;
  } else {
    const auto& c = std::get<CylinderShape>(prim);
    j["type"] = "cylinder";
    j["radius"] = c.radius;
    j["height"] = c.height;
  }
  return j;
}

inline PrimitiveShape primitive_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "box") {
    const auto& e = j.at("extents");
    return BoxShape{Vec3(e[0].get<double>(), e[1].get<double>(), e[2].get<double>())};
  }
  if (type == "sphere") return SphereShape{j.at("radius").get<double>()};
  if (type == "cylinder") {
    return CylinderShape{j.at("radius").get<double>(), j.at("height").get<double>()};
  }
  throw InvalidWorld("unknown primitive type '" + type + "'");
}

inline nlohmann::json shape_json(const std::vector<PartGroup>& groups) {
  if (groups.size() == 1 && groups[0].name.empty() && groups[0].pieces.size() == 1 &&
      groups[0].offset.translation.isZero(0.0) &&
      groups[0].pieces[0].offset.translation.isZero(0.0)) {
    return primitive_json(groups[0].pieces[0].prim);
  }
  nlohmann::json parts = nlohmann::json::array();
  for (const PartGroup& g : groups) {
    nlohmann::json part;
    part["name"] = g.name;
    if (!g.label.empty()) part["label"] = g.label;
    if (!g.attached_to.empty()) part["attached_to"] = g.attached_to;
    part["offset"] = pose_json(g.offset);
    nlohmann::json pieces = nlohmann::json::array();
    for (const ShapePiece& p : g.pieces) {
      nlohmann::json piece = primitive_json(p.prim);
      piece["offset"] = pose_json(p.offset);
      pieces.push_back(piece);
    }
    part["pieces"] = pieces;
    parts.push_back(part);
  }
  return nlohmann::json{{"type", "composite"}, {"parts", parts}};
}

inline std::vector<PartGroup> shape_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type != "composite") {
    PartGroup g;
    g.pieces.push_back({primitive_from_json(j), Pose{}});
    return {g};
  }
  std::vector<PartGroup> groups;
  for (const auto& part : j.at("parts")) {
    PartGroup g;
    g.name = part.value("name", std::string());
    g.label = part.value("label", std::string());
    g.attached_to = part.value("attached_to", std::string());
    if (part.contains("offset")) g.offset = pose_from_json(part.at("offset"));
    for (const auto& piece : part.at("pieces")) {
      ShapePiece p;
      p.prim = primitive_from_json(piece);
      if (piece.contains("offset")) p.offset = pose_from_json(piece.at("offset"));
      g.pieces.push_back(std::move(p));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

inline nlohmann::json object_json(const ObjectSpec& o) {
  nlohmann::json j;
  j["name"] = o.name;
  j["label"] = o.label;
  j["shape"] = shape_json(o.groups);
  j["pose"] = pose_json(o.pose);
  j["graspable"] = o.graspable;
  j["color"] = o.color;
  return j;
}

inline ObjectSpec object_from_json(const nlohmann::json& j) {
  ObjectSpec o;
  o.name = j.at("name").get<std::string>();
  o.label = j.at("label").get<std::string>();
  o.groups = shape_from_json(j.at("shape"));
  o.pose = pose_from_json(j.at("pose"));
  o.graspable = j.value("graspable", true);
  o.color = j.value("color", std::string());
  return o;
}

inline nlohmann::json camera_json(const CameraModel& c) {
  nlohmann::json j;
  j["fx"] = c.intrinsics(0, 0);
  j["fy"] = c.intrinsics(1, 1);
  j["cx"] = c.intrinsics(0, 2);
  j["cy"] = c.intrinsics(1, 2);
  j["width"] = c.width;
  j["height"] = c.height;
  j["pose"] = pose_json(Pose{c.rotation, c.translation});
  return j;
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel c;
  c.intrinsics = Mat3::Identity();
  c.intrinsics(0, 0) = j.at("fx").get<double>();
  c.intrinsics(1, 1) = j.at("fy").get<double>();
  c.intrinsics(0, 2) = j.at("cx").get<double>();
  c.intrinsics(1, 2) = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const Pose p = pose_from_json(j.at("pose"));
  c.rotation = p.rotation;
  c.translation = p.translation;
  return c;
}

}  // namespace detail

// Camera looking from `eye` toward `target`, image x right / y down.
inline CameraModel make_lookat_camera(const Vec3& eye, const Vec3& target, double focal,
                                      int width, int height) {
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.intrinsics = Mat3::Identity();
  cam.intrinsics(0, 0) = focal;
  cam.intrinsics(1, 1) = focal;
  cam.intrinsics(0, 2) = 0.5 * width;
  cam.intrinsics(1, 2) = 0.5 * height;
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = Vec3::UnitY();
  right.normalize();
  const Vec3 down = forward.cross(right).normalized();
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  cam.rotation = r;
  cam.translation = eye;
  return cam;
}

// Three cameras on a 120-degree ring around the table center.
inline std::vector<CameraModel> default_camera_ring(double table_height, int count = 3,
                                                    int resolution = 128) {
  std::vector<CameraModel> cams;
  const Vec3 target(0.0, 0.0, table_height + 0.05);
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * M_PI * i / count;
    const Vec3 eye(1.1 * std::cos(az), 1.1 * std::sin(az), table_height + 0.85);
    cams.push_back(make_lookat_camera(eye, target, 110.0 * resolution / 128.0, resolution,
                                      resolution));
  }
  return cams;
}

inline void validate_world(const WorldModel& world) {
  std::set<std::string> names;
  auto check_object = [&names](const ObjectSpec& o, bool articulated_object) {
    if (o.name.empty()) throw InvalidWorld("object with empty name");
    if (!names.insert(o.name).second) throw InvalidWorld("duplicate name '" + o.name + "'");
    for (const PartGroup& g : o.groups) {
      if (!g.name.empty() && !names.insert(g.name).second) {
        throw InvalidWorld("duplicate name '" + g.name + "'");
      }
      if (!g.name.empty() && !articulated_object && o.groups.size() > 1) {
        // named parts of plain objects are allowed; they fold into one unit
      }
      for (const ShapePiece& p : g.pieces) {
        if (const auto* b = std::get_if<BoxShape>(&p.prim)) {
          if ((b->extents.array() <= 0.0).any()) throw InvalidWorld("non-positive box extents");
        } else if (const auto* s = std::get_if<SphereShape>(&p.prim)) {
          if (s->radius <= 0.0) throw InvalidWorld("non-positive sphere radius");
        } else {
          const auto& c = std::get<CylinderShape>(p.prim);
          if (c.radius <= 0.0 || c.height <= 0.0) throw InvalidWorld("non-positive cylinder size");
        }
      }
    }
  };
  for (const ObjectSpec& o : world.objects) check_object(o, false);
  for (const ArticulatedObject& a : world.articulated) {
    check_object(a.spec, true);
    for (const JointSpec& j : a.joints) {
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw InvalidWorld("joint axis must be unit");
      if (j.lo > j.hi) throw InvalidWorld("joint limits reversed");
      if (j.state < j.lo - 1e-12 || j.state > j.hi + 1e-12) {
        throw InvalidWorld("joint state outside limits");
      }
      bool found = false;
      for (const PartGroup& g : a.spec.groups) found |= (g.name == j.child_part);
      if (!found) throw InvalidWorld("joint child_part '" + j.child_part + "' not found");
    }
  }

  // piece-level interpenetration scan between distinct top-level objects;
  // resting contact (shared boundary) is not an overlap
  struct OwnedPiece {
    int owner;
    BBox3D aabb;
  };
  std::vector<OwnedPiece> all;
  int owner = 0;
  const auto units = world.units();
  std::map<std::string, int> owner_of;  // unit name -> top-level object id
  for (const ObjectSpec& o : world.objects) owner_of[o.name] = owner++;
  for (const ArticulatedObject& a : world.articulated) {
    const int id = owner++;
    owner_of[a.spec.name] = id;
    for (const PartGroup& g : a.spec.groups) {
      if (!g.name.empty()) owner_of[g.name] = id;
    }
  }
  owner_of["table"] = owner++;
  for (const WorldUnit& u : units) {
    const auto it = owner_of.find(u.name);
    const int id = it == owner_of.end() ? owner++ : it->second;
    for (const ShapePiece& p : u.world_pieces) {
      all.push_back({id, primitive_aabb(p.prim, p.offset)});
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (all[i].owner == all[j].owner) continue;
      if (all[i].aabb.intersects(all[j].aabb, 1e-9)) {
        throw InvalidWorld("objects interpenetrate at load");
      }
    }
  }
}

inline nlohmann::json world_to_json(const WorldModel& world) {
  nlohmann::json j;
  j["arm_base"] = detail::pose_json(world.arm_base);
  nlohmann::json arts = nlohmann::json::array();
  for (const ArticulatedObject& a : world.articulated) {
    nlohmann::json aj = detail::object_json(a.spec);
    nlohmann::json joints = nlohmann::json::array();
    for (const JointSpec& jt : a.joints) {
      joints.push_back({{"type", jt.type == JointSpec::Type::Prismatic ? "prismatic" : "revolute"},
                        {"axis", {jt.axis.x(), jt.axis.y(), jt.axis.z()}},
                        {"origin", {jt.origin.x(), jt.origin.y(), jt.origin.z()}},
                        {"limits", {jt.lo, jt.hi}},
                        {"state", jt.state},
                        {"child_part", jt.child_part}});
    }
    aj["joints"] = joints;
    arts.push_back(aj);
  }
  j["articulated"] = arts;
  nlohmann::json cams = nlohmann::json::array();
  for (const CameraModel& c : world.cameras) cams.push_back(detail::camera_json(c));
  j["cameras"] = cams;
  nlohmann::json objs = nlohmann::json::array();
  for (const ObjectSpec& o : world.objects) objs.push_back(detail::object_json(o));
  j["objects"] = objs;
  j["seed"] = world.rng_seed;
  j["table_height"] = world.table_height;
  return j;
}

inline WorldModel world_from_json(const nlohmann::json& j) {
  WorldModel w;
  w.table_height = j.at("table_height").get<double>();
  w.rng_seed = j.value("seed", 0ULL);
  if (j.contains("arm_base")) {
    w.arm_base = detail::pose_from_json(j.at("arm_base"));
  } else {
    w.arm_base = Pose::from_translation(Vec3(-0.50, 0.0, w.table_height));
  }
  for (const auto& oj : j.value("objects", nlohmann::json::array())) {
    w.objects.push_back(detail::object_from_json(oj));
  }
  for (const auto& aj : j.value("articulated", nlohmann::json::array())) {
    ArticulatedObject a;
    a.spec = detail::object_from_json(aj);
    for (const auto& jj : aj.value("joints", nlohmann::json::array())) {
      JointSpec jt;
      const std::string type = jj.at("type").get<std::string>();
      if (type == "prismatic") {
        jt.type = JointSpec::Type::Prismatic;
      } else if (type == "revolute") {
        jt.type = JointSpec::Type::Revolute;
      } else {
        throw InvalidWorld("unknown joint type '" + type + "'");
      }
      const auto& ax = jj.at("axis");
      jt.axis = Vec3(ax[0].get<double>(), ax[1].get<double>(), ax[2].get<double>());
      const auto& og = jj.at("origin");
      jt.origin = Vec3(og[0].get<double>(), og[1].get<double>(), og[2].get<double>());
      jt.lo = jj.at("limits")[0].get<double>();
      jt.hi = jj.at("limits")[1].get<double>();
      jt.state = jj.value("state", 0.0);
      jt.child_part = jj.at("child_part").get<std::string>();
      a.joints.push_back(jt);
    }
    w.articulated.push_back(std::move(a));
  }
  if (j.contains("cameras") && !j.at("cameras").empty()) {
    for (const auto& cj : j.at("cameras")) w.cameras.push_back(detail::camera_from_json(cj));
  } else {
    w.cameras = default_camera_ring(w.table_height);
  }
  validate_world(w);
  return w;
}

inline WorldModel load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  try {
    return world_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidWorld(e.what());
  }
}

inline void save_world(const WorldModel& world, const std::string& path) {
  std::ofstream out(path);
  out << world_to_json(world).dump(2) << "\n";
}

}  // namespace armscript
