#pragma once

#include <string>
#include <vector>

#include "armscript/scene.hpp"

namespace armscript::fixtures {

inline ObjectSpec solid(const std::string& name, const std::string& label, PrimitiveShape prim,
                        const Vec3& position, const std::string& color,
                        const Pose& orientation = Pose{}) {
  ObjectSpec o;
  o.name = name;
  o.label = label;
  o.color = color;
  PartGroup g;
  g.pieces.push_back({std::move(prim), Pose{}});
  o.groups.push_back(std::move(g));
  o.pose = Pose{orientation.rotation, position};
  return o;
}

// Open-top container: 2 cm floor slab plus four walls. The bbox bottom sits
// at `position.z`; interior floor top is exactly 2 cm above it, matching the
// placement heuristic's assumed floor thickness.
inline ObjectSpec open_container(const std::string& name, const std::string& label,
                                 double inner_x, double inner_y, double height,
                                 const Vec3& position, const std::string& color,
                                 double wall = 0.012) {
  ObjectSpec o;
  o.name = name;
  o.label = label;
  o.color = color;
  o.graspable = false;
  const double ox = inner_x + 2 * wall;
  const double oy = inner_y + 2 * wall;
  const double floor_t = 0.02;
  const double wall_h = height - floor_t;
  PartGroup g;
  g.pieces.push_back({BoxShape{Vec3(ox, oy, floor_t)}, Pose::from_translation(Vec3(0, 0, floor_t / 2))});
  const double wz = floor_t + wall_h / 2;
  g.pieces.push_back({BoxShape{Vec3(wall, oy, wall_h)},
                      Pose::from_translation(Vec3(-(ox - wall) / 2, 0, wz))});
  g.pieces.push_back({BoxShape{Vec3(wall, oy, wall_h)},
                      Pose::from_translation(Vec3((ox - wall) / 2, 0, wz))});
  g.pieces.push_back({BoxShape{Vec3(ox - 2 * wall, wall, wall_h)},
                      Pose::from_translation(Vec3(0, -(oy - wall) / 2, wz))});
  g.pieces.push_back({BoxShape{Vec3(ox - 2 * wall, wall, wall_h)},
                      Pose::from_translation(Vec3(0, (oy - wall) / 2, wz))});
  o.groups.push_back(std::move(g));
  o.pose = Pose::from_translation(position);
  return o;
}

inline ObjectSpec plate(const std::string& name, const std::string& label, double radius,
                        const Vec3& position, const std::string& color) {
  return solid(name, label, CylinderShape{radius, 0.02}, position + Vec3(0, 0, 0.01), color);
}

// Cabinet with `n` prismatic drawers facing -x; drawer_0 is the top one.
// Drawer part groups are named <prefix>0..<prefix>n-1 with attached handles.
struct CabinetDims {
  double slot_depth = 0.24;   // x
  double slot_width = 0.26;   // y
  double slot_height = 0.105; // z
  double wall = 0.015;
  double travel = 0.20;
  double handle_out = 0.03;
};

inline ArticulatedObject cabinet(const std::string& name, const Vec3& bottom_center,
                                 int n_drawers, const std::string& color = "wood",
                                 const std::string& prefix = "drawer_",
                                 const CabinetDims& dims = {}) {
  ArticulatedObject cab;
  cab.spec.name = name;
  cab.spec.label = "cabinet";
  cab.spec.color = color;
  cab.spec.graspable = true;  // its drawer handles are
  const double t = dims.wall;
  const double X = dims.slot_depth + t;
  const double Y = dims.slot_width + 2 * t;
  const double Z = n_drawers * (dims.slot_height + t) + t;
  cab.spec.pose = Pose::from_translation(bottom_center + Vec3(0, 0, Z / 2));

  PartGroup shell;
  shell.pieces.push_back(
      {BoxShape{Vec3(t, Y, Z)}, Pose::from_translation(Vec3(X / 2 - t / 2, 0, 0))});
  shell.pieces.push_back(
      {BoxShape{Vec3(X, t, Z)}, Pose::from_translation(Vec3(0, -(Y - t) / 2, 0))});
  shell.pieces.push_back(
      {BoxShape{Vec3(X, t, Z)}, Pose::from_translation(Vec3(0, (Y - t) / 2, 0))});
  for (int level = 0; level <= n_drawers; ++level) {
    const double z = Z / 2 - t / 2 - level * (dims.slot_height + t);
    shell.pieces.push_back({BoxShape{Vec3(X - t, Y - 2 * t, t)},
                            Pose::from_translation(Vec3(-t / 2, 0, z))});
  }
  cab.spec.groups.push_back(std::move(shell));

  const double drawer_depth = dims.slot_depth - 0.02;
  const double drawer_width = dims.slot_width - 0.01;
  const double front_x = -X / 2;
  for (int k = 0; k < n_drawers; ++k) {
    const double slot_top = Z / 2 - t - k * (dims.slot_height + t);
    const double slot_center = slot_top - dims.slot_height / 2;
    const std::string dname = prefix + std::to_string(k);

    PartGroup drawer;
    drawer.name = dname;
    drawer.label = "drawer";
    drawer.offset = Pose::from_translation(Vec3(front_x + drawer_depth / 2, 0, slot_center));
    const double floor_t = 0.012;
    const double wall_h = 0.068;
    const double wall_t = 0.012;
    const double floor_z = -0.04 + floor_t / 2;
    drawer.pieces.push_back({BoxShape{Vec3(drawer_depth, drawer_width, floor_t)},
                             Pose::from_translation(Vec3(0, 0, floor_z))});
    const double wz = -0.04 + floor_t + wall_h / 2;
    drawer.pieces.push_back({BoxShape{Vec3(wall_t, drawer_width, wall_h)},
                             Pose::from_translation(Vec3(-(drawer_depth - wall_t) / 2, 0, wz))});
    drawer.pieces.push_back({BoxShape{Vec3(wall_t, drawer_width, wall_h)},
                             Pose::from_translation(Vec3((drawer_depth - wall_t) / 2, 0, wz))});
    drawer.pieces.push_back({BoxShape{Vec3(drawer_depth - 2 * wall_t, wall_t, wall_h)},
                             Pose::from_translation(Vec3(0, -(drawer_width - wall_t) / 2, wz))});
    drawer.pieces.push_back({BoxShape{Vec3(drawer_depth - 2 * wall_t, wall_t, wall_h)},
                             Pose::from_translation(Vec3(0, (drawer_width - wall_t) / 2, wz))});
    cab.spec.groups.push_back(std::move(drawer));

    PartGroup handle;
    handle.name = dname + "_handle";
    handle.label = "handle";
    handle.attached_to = dname;
    handle.offset =
        Pose::from_translation(Vec3(front_x - dims.handle_out, 0, slot_center));
    handle.pieces.push_back({BoxShape{Vec3(dims.handle_out, 0.02, 0.016)},
                             Pose::from_translation(Vec3(dims.handle_out / 2, 0, 0))});
    handle.pieces.push_back(
        {CylinderShape{0.009, 0.09}, Pose::from_axis_angle(Vec3::UnitX(), M_PI / 2)});
    cab.spec.groups.push_back(std::move(handle));

    JointSpec joint;
    joint.type = JointSpec::Type::Prismatic;
    joint.axis = Vec3(-1, 0, 0);
    joint.origin = Vec3(front_x + drawer_depth / 2, 0, slot_center);
    joint.lo = 0.0;
    joint.hi = dims.travel;
    joint.state = 0.0;
    joint.child_part = dname;
    cab.joints.push_back(joint);
  }
  return cab;
}

inline WorldModel base_world(std::uint64_t seed) {
  WorldModel w;
  w.table_height = 0.75;
  w.table_extents = Vec3(1.5, 1.5, 0.0);
  w.rng_seed = seed;
  w.arm_base = Pose::from_translation(Vec3(-0.50, 0.0, w.table_height));
  w.cameras = default_camera_ring(w.table_height);
  return w;
}

inline WorldModel world_simple_0() {
  WorldModel w = base_world(100);
  const double th = w.table_height;
  w.objects.push_back(
      solid("apple", "apple", SphereShape{0.035}, Vec3(0.02, 0.16, th + 0.035), "red"));
  w.objects.push_back(
      open_container("footed_bowl", "footed bowl", 0.13, 0.13, 0.11, Vec3(0.0, -0.20, th), "grey"));
  return w;
}

inline WorldModel world_simple_1() {
  WorldModel w = base_world(101);
  const double th = w.table_height;
  w.objects.push_back(solid("brown_cup", "brown cup", CylinderShape{0.032, 0.09},
                            Vec3(0.05, 0.24, th + 0.045), "brown"));
  w.objects.push_back(plate("plate_0", "plate", 0.075, Vec3(0.10, -0.02, th), "white"));
  w.objects.push_back(
      solid("lemon", "lemon", SphereShape{0.025}, Vec3(0.10, -0.02, th + 0.045), "yellow"));
  w.objects.push_back(plate("plate_1", "plate", 0.075, Vec3(-0.02, -0.30, th), "white"));
  return w;
}

inline WorldModel world_moderate_0() {
  WorldModel w = base_world(102);
  const double th = w.table_height;
  w.articulated.push_back(cabinet("cabinet", Vec3(0.34, -0.22, th), 3));
  w.objects.push_back(solid("box_0", "box", BoxShape{Vec3(0.045, 0.045, 0.045)},
                            Vec3(0.02, 0.18, th + 0.0225), "green"));
  w.objects.push_back(solid("box_1", "box", BoxShape{Vec3(0.045, 0.045, 0.045)},
                            Vec3(0.13, 0.10, th + 0.0225), "blue"));
  return w;
}

inline WorldModel world_moderate_1() {
  WorldModel w = base_world(103);
  const double th = w.table_height;
  w.objects.push_back(solid("white_mug", "white mug", CylinderShape{0.035, 0.08},
                            Vec3(0.10, 0.22, th + 0.04), "white"));
  w.objects.push_back(open_container("white_bowl", "white bowl", 0.12, 0.12, 0.10,
                                     Vec3(0.02, -0.24, th), "white"));
  w.objects.push_back(open_container("blue_bowl", "blue bowl", 0.12, 0.12, 0.10,
                                     Vec3(0.24, -0.02, th), "blue"));
  return w;
}

inline WorldModel world_moderate_2() {
  WorldModel w = base_world(104);
  const double th = w.table_height;
  w.articulated.push_back(cabinet("cabinet", Vec3(0.34, -0.22, th), 3));
  w.objects.push_back(
      solid("mug", "mug", CylinderShape{0.035, 0.08}, Vec3(0.05, 0.20, th + 0.04), "red"));
  return w;
}

inline WorldModel world_hard_0() {
  WorldModel w = base_world(105);
  const double th = w.table_height;
  w.objects.push_back(
      solid("apple", "apple", SphereShape{0.035}, Vec3(0.04, 0.20, th + 0.035), "red"));
  w.objects.push_back(solid("banana", "banana", CylinderShape{0.02, 0.10},
                            Vec3(0.16, 0.10, th + 0.02), "yellow",
                            Pose::from_axis_angle(Vec3::UnitX(), M_PI / 2)));
  w.objects.push_back(solid("wood_block", "wood block", BoxShape{Vec3(0.05, 0.05, 0.05)},
                            Vec3(0.22, 0.24, th + 0.025), "wood"));
  w.objects.push_back(plate("white_plate", "white plate", 0.10, Vec3(-0.05, -0.26, th), "white"));
  return w;
}

inline WorldModel world_hard_1() {
  WorldModel w = base_world(106);
  const double th = w.table_height;
  w.objects.push_back(
      solid("apple", "apple", SphereShape{0.035}, Vec3(0.02, 0.20, th + 0.035), "red"));
  w.objects.push_back(solid("banana", "banana", CylinderShape{0.02, 0.10},
                            Vec3(0.14, 0.06, th + 0.02), "yellow",
                            Pose::from_axis_angle(Vec3::UnitX(), M_PI / 2)));
  return w;
}

inline WorldModel world_hard_2() {
  WorldModel w = base_world(107);
  const double th = w.table_height;
  w.objects.push_back(
      solid("lemon", "lemon", SphereShape{0.025}, Vec3(0.05, 0.18, th + 0.025), "yellow"));
  w.objects.push_back(
      solid("toy", "toy", CylinderShape{0.03, 0.07}, Vec3(0.16, 0.08, th + 0.035), "green"));
  w.objects.push_back(
      open_container("basket", "basket", 0.20, 0.20, 0.12, Vec3(-0.02, -0.26, th), "woven"));
  return w;
}

inline WorldModel fixture_world(const std::string& id) {
  if (id == "simple_0") return world_simple_0();
  if (id == "simple_1") return world_simple_1();
  if (id == "moderate_0") return world_moderate_0();
  if (id == "moderate_1") return world_moderate_1();
  if (id == "moderate_2") return world_moderate_2();
  if (id == "hard_0") return world_hard_0();
  if (id == "hard_1") return world_hard_1();
  if (id == "hard_2") return world_hard_2();
  throw InvalidWorld("unknown fixture id '" + id + "'");
}

inline std::vector<std::string> fixture_ids() {
  return {"simple_0", "simple_1", "moderate_0", "moderate_1",
          "moderate_2", "hard_0",   "hard_1",     "hard_2"};
}

}  // namespace armscript::fixtures
