#include <catch2/catch_amalgamated.hpp>

#include "armscript/perception.hpp"

using namespace armscript;

namespace {

CameraModel identity_camera(int width = 64, int height = 64, double focal = 60.0) {
  CameraModel cam;
  cam.intrinsics = Mat3::Identity();
  cam.intrinsics(0, 0) = focal;
  cam.intrinsics(1, 1) = focal;
  cam.intrinsics(0, 2) = 0.5 * width;
  cam.intrinsics(1, 2) = 0.5 * height;
  cam.width = width;
  cam.height = height;
  return cam;
}

// tabletop world with three separated solids
WorldModel three_object_world() {
  WorldModel w;
  w.cameras = default_camera_ring(w.table_height);
  auto add = [&w](const std::string& name, PrimitiveShape prim, const Vec3& pos) {
    ObjectSpec o;
    o.name = name;
    o.label = name;
    PartGroup g;
    g.pieces.push_back({prim, Pose{}});
    o.groups.push_back(g);
    o.pose = Pose::from_translation(pos);
    w.objects.push_back(o);
  };
  const double th = w.table_height;
  add("apple", SphereShape{0.04}, Vec3(0.10, 0.18, th + 0.04));
  add("crate", BoxShape{Vec3(0.08, 0.08, 0.09)}, Vec3(-0.12, -0.15, th + 0.045));
  add("can", CylinderShape{0.035, 0.12}, Vec3(0.16, -0.17, th + 0.06));
  return w;
}

}  // namespace

TEST_CASE("integrate_view") {
  const BBox3D ws{Vec3(-0.2, -0.2, 0.90), Vec3(0.2, 0.2, 1.10)};
  const CameraModel cam = identity_camera();

  SECTION("all-invalid depth leaves the volume untouched") {
    TSDFVolume tsdf = make_tsdf(ws, 0.005);
    DepthImage depth;
    depth.width = cam.width;
    depth.height = cam.height;
    depth.depths.assign(64 * 64, 0.0f);
    const TSDFVolume out = integrate_view(tsdf, depth, cam);
    CHECK(out.values == tsdf.values);
    CHECK(out.weights == tsdf.weights);
  }

  SECTION("flat wall at z=1 gives near-zero values at the surface") {
    WorldModel w;
    w.table_height = 0.0;
    w.table_extents = Vec3(0.01, 0.01, 0.0);
    ObjectSpec wall;
    wall.name = "wall";
    wall.label = "wall";
    PartGroup g;
    g.pieces.push_back({BoxShape{Vec3(2, 2, 0.05)}, Pose{}});
    wall.groups.push_back(g);
    wall.pose = Pose::from_translation(Vec3(0, 0, 1.025));
    w.objects.push_back(wall);

    const DepthImage depth = render_depth(w, cam);
    TSDFVolume tsdf = integrate_view(make_tsdf(ws, 0.005), depth, cam);
    int checked = 0;
    for (int iz = 0; iz < tsdf.dims[2]; ++iz) {
      for (int iy = 0; iy < tsdf.dims[1]; ++iy) {
        for (int ix = 0; ix < tsdf.dims[0]; ++ix) {
          const Vec3 c = tsdf.center(ix, iy, iz);
          if (std::abs(c.z() - 1.0) > 0.0026) continue;
          const std::size_t i = tsdf.index(ix, iy, iz);
          if (tsdf.weights[i] <= 0) continue;
          ++checked;
          CHECK(std::abs(tsdf.values[i]) < 0.005);
        }
      }
    }
    CHECK(checked > 100);

    // same view twice: identical values, doubled weights
    const TSDFVolume twice = integrate_view(tsdf, depth, cam);
    for (std::size_t i = 0; i < tsdf.values.size(); ++i) {
      CHECK(std::abs(twice.values[i] - tsdf.values[i]) < 1e-12);
      CHECK(twice.weights[i] == Catch::Approx(2.0 * tsdf.weights[i]));
    }
  }
}

TEST_CASE("fuse") {
  WorldModel w;
  w.table_height = 0.0;
  w.table_extents = Vec3(0.01, 0.01, 0.0);
  ObjectSpec ball;
  ball.name = "ball";
  ball.label = "ball";
  PartGroup g;
  g.pieces.push_back({SphereShape{0.3}, Pose{}});
  ball.groups.push_back(g);
  ball.pose = Pose::from_translation(Vec3(0, 0, 0.5));
  w.objects.push_back(ball);

  std::vector<std::pair<DepthImage, CameraModel>> views;
  for (int i = 0; i < 4; ++i) {
    const double az = 2.0 * M_PI * i / 4;
    const CameraModel cam = make_lookat_camera(Vec3(1.2 * std::cos(az), 1.2 * std::sin(az), 1.4),
                                               Vec3(0, 0, 0.5), 220.0, 256, 256);
    views.emplace_back(render_depth(w, cam), cam);
  }
  const BBox3D ws{Vec3(-0.4, -0.4, 0.1), Vec3(0.4, 0.4, 0.9)};

  SECTION("throws without views") {
    CHECK_THROWS_AS(fuse({}, ws, 0.01), NoViews);
  }

  SECTION("one view equals integrate_view on an empty volume") {
    const TSDFVolume a = fuse({views[0]}, ws, 0.01);
    const TSDFVolume b = integrate_view(make_tsdf(ws, 0.01), views[0].first, views[0].second);
    CHECK(a.values == b.values);
    CHECK(a.weights == b.weights);
  }

  SECTION("view order permutation changes nothing beyond 1e-12") {
    const TSDFVolume a = fuse(views, ws, 0.01);
    auto perm = views;
    std::swap(perm[0], perm[3]);
    std::swap(perm[1], perm[2]);
    const TSDFVolume b = fuse(perm, ws, 0.01);
    CHECK(a.weights == b.weights);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(a.values[i] - b.values[i]));
    }
    CHECK(max_diff < 1e-12);
  }

  SECTION("fused sphere surface lies on the analytic sphere") {
    const TSDFVolume tsdf = fuse(views, ws, 0.005);
    const PointCloud cloud = extract_surface(tsdf);
    REQUIRE(cloud.size() > 500);
    double sq_sum = 0.0;
    double worst = 0.0;
    for (const Vec3& p : cloud.points) {
      const double err = (p - Vec3(0, 0, 0.5)).norm() - 0.3;
      worst = std::max(worst, std::abs(err));
      sq_sum += err * err;
    }
    CHECK(worst < 0.005);  // every point within one voxel of the radius
    CHECK(std::sqrt(sq_sum / cloud.size()) < 0.005);
  }
}

TEST_CASE("extract_surface") {
  const BBox3D ws{Vec3(0, 0, 0), Vec3(0.05, 0.01, 0.01)};
  TSDFVolume tsdf = make_tsdf(ws, 0.01);

  SECTION("uniform positive values yield an empty cloud") {
    std::fill(tsdf.values.begin(), tsdf.values.end(), 0.01);
    std::fill(tsdf.weights.begin(), tsdf.weights.end(), 1.0);
    CHECK(extract_surface(tsdf).empty());
  }

  SECTION("one-dimensional crossing interpolates to the midpoint") {
    std::fill(tsdf.weights.begin(), tsdf.weights.end(), 0.0);
    tsdf.values[tsdf.index(1, 0, 0)] = 0.002;
    tsdf.values[tsdf.index(2, 0, 0)] = -0.002;
    tsdf.weights[tsdf.index(1, 0, 0)] = 1.0;
    tsdf.weights[tsdf.index(2, 0, 0)] = 1.0;
    const PointCloud cloud = extract_surface(tsdf);
    REQUIRE(cloud.size() == 1);
    const Vec3 mid = 0.5 * (tsdf.center(1, 0, 0) + tsdf.center(2, 0, 0));
    CHECK((cloud.points[0] - mid).norm() < 1e-12);
  }

  SECTION("unobserved volume throws") {
    std::fill(tsdf.weights.begin(), tsdf.weights.end(), 0.0);
    CHECK_THROWS_AS(extract_surface(tsdf), EmptyVolume);
  }
}

TEST_CASE("simulated_grounding") {
  const WorldModel w = three_object_world();
  const CameraModel cam = w.cameras[0];
  const std::vector<std::string> queries{"apple", "crate", "can"};

  SECTION("zero noise reproduces gt detections with score 1") {
    const auto noisy = simulated_grounding(w, cam, queries, NoiseSpec{});
    const auto gt = gt_detections(w, cam, queries);
    REQUIRE(noisy.size() == gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
      CHECK(noisy[i].label == gt[i].first);
      CHECK(noisy[i].score == 1.0);
      CHECK(noisy[i].bbox.x_min == gt[i].second.x_min);
      CHECK(noisy[i].bbox.y_max == gt[i].second.y_max);
    }
  }

  SECTION("p_drop = 1 drops everything") {
    NoiseSpec noise;
    noise.p_drop = 1.0;
    CHECK(simulated_grounding(w, cam, queries, noise).empty());
  }

  SECTION("fixed seed is reproducible") {
    NoiseSpec noise;
    noise.jitter_sigma_px = 5.0;
    noise.p_mislabel = 0.2;
    noise.p_enlarge = 0.2;
    noise.seed = 7;
    const auto a = simulated_grounding(w, cam, queries, noise);
    const auto b = simulated_grounding(w, cam, queries, noise);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].label == b[i].label);
      CHECK(a[i].score == b[i].score);
      CHECK(a[i].bbox.x_min == b[i].bbox.x_min);
      CHECK(a[i].bbox.y_min == b[i].bbox.y_min);
      CHECK(a[i].bbox.x_max == b[i].bbox.x_max);
      CHECK(a[i].bbox.y_max == b[i].bbox.y_max);
    }
  }
}

TEST_CASE("membership_vector") {
  const CameraModel cam = identity_camera();
  Rng rng(11);
  PointCloud cloud;
  for (int i = 0; i < 50; ++i) {
    cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 2.5));
  }

  const BBox2D full{0, 0, 63, 63};
  const MembershipVector mv = membership_vector(cloud, cam, full);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto px = project(cam, cloud.points[i]);
    const bool in_image = px && px->u >= 0 && px->u <= 63 && px->v >= 0 && px->v <= 63;
    CHECK(static_cast<bool>(mv.bits[i]) == in_image);
  }

  const MembershipVector none = membership_vector(cloud, cam, BBox2D{-5, -5, -5, -5});
  CHECK(none.count() == 0);

  // brute-force per-point oracle
  const BBox2D some{10, 15, 40, 50};
  const MembershipVector got = membership_vector(cloud, cam, some);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(static_cast<bool>(got.bits[i]) ==
          bbox2d_contains_projection(cam, some, cloud.points[i]));
  }
}

TEST_CASE("pairwise_score") {
  MembershipVector a{{1, 1, 0}};
  MembershipVector b{{1, 0, 0}};
  CHECK(pairwise_score(a, b) == Catch::Approx(0.5));
  CHECK(pairwise_score(a, a) == 1.0);
  MembershipVector c{{0, 0, 1}};
  CHECK(pairwise_score(b, c) == 0.0);
  MembershipVector empty1{{0, 0, 0}}, empty2{{0, 0, 0}};
  CHECK(pairwise_score(empty1, empty2) == 0.0);
  MembershipVector longer{{1, 0, 1, 0}};
  CHECK_THROWS_AS(pairwise_score(a, longer), LengthMismatch);

  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    MembershipVector x, y;
    for (int i = 0; i < 40; ++i) {
      x.bits.push_back(rng.chance(0.5));
      y.bits.push_back(rng.chance(0.5));
    }
    const double s = pairwise_score(x, y);
    CHECK(s == pairwise_score(y, x));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    if (s == 1.0) CHECK(x.bits == y.bits);
  }
}

TEST_CASE("vote_label") {
  CHECK(vote_label({{0, {}, "apple", 1.0}, {1, {}, "apple", 1.0}, {2, {}, "banana", 1.0}}) ==
        "apple");
  CHECK(vote_label({{0, {}, "plum", 0.4}}) == "plum");
  // tie broken by summed score
  CHECK(vote_label({{0, {}, "apple", 0.9}, {1, {}, "banana", 0.4}}) == "apple");
  // score tie falls back to lexicographic order
  CHECK(vote_label({{0, {}, "pear", 0.5}, {1, {}, "fig", 0.5}}) == "fig");
  CHECK_THROWS_AS(vote_label({}), EmptyMatch);
}

namespace {

struct SyntheticScene {
  PointCloud cloud;
  std::vector<CameraModel> cams;
  std::vector<std::vector<Detection2D>> detections;  // per view
  std::vector<std::vector<int>> object_of;           // per view: detection -> object id
};

// Objects as point blobs; detections as tight projected boxes per view.
SyntheticScene make_synthetic_scene(Rng& rng, int n_objects, int n_views = 3) {
  SyntheticScene s;
  std::vector<std::vector<std::size_t>> object_points(n_objects);
  for (int o = 0; o < n_objects; ++o) {
    const Vec3 center(rng.uniform(-0.35, 0.35), rng.uniform(-0.35, 0.35), rng.uniform(0.70, 0.95));
    const double radius = rng.uniform(0.02, 0.05);
    for (int i = 0; i < 60; ++i) {
      Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      object_points[o].push_back(s.cloud.size());
      s.cloud.points.push_back(center + radius * dir);
    }
  }
  for (int v = 0; v < n_views; ++v) {
    const double az = 2.0 * M_PI * v / n_views + 0.3;
    s.cams.push_back(make_lookat_camera(Vec3(1.1 * std::cos(az), 1.1 * std::sin(az), 1.55),
                                        Vec3(0, 0, 0.8), 110.0, 128, 128));
  }
  s.detections.resize(n_views);
  s.object_of.resize(n_views);
  for (int v = 0; v < n_views; ++v) {
    for (int o = 0; o < n_objects; ++o) {
      BBox2D box{1e30, 1e30, -1e30, -1e30};
      int seen = 0;
      for (std::size_t pi : object_points[o]) {
        const auto px = project(s.cams[v], s.cloud.points[pi]);
        if (!px) continue;
        ++seen;
        box.x_min = std::min(box.x_min, px->u);
        box.y_min = std::min(box.y_min, px->v);
        box.x_max = std::max(box.x_max, px->u);
        box.y_max = std::max(box.y_max, px->v);
      }
      if (seen < 10) continue;
      Detection2D det;
      det.view_index = v;
      det.bbox = box;
      det.label = "obj_" + std::to_string(o);
      det.score = 1.0;
      s.detections[v].push_back(det);
      s.object_of[v].push_back(o);
    }
  }
  return s;
}

double matching_total_score(const std::vector<MatchTuple>& tuples,
                            const std::vector<std::vector<Detection2D>>& detections,
                            const PointCloud& cloud, const std::vector<CameraModel>& cams) {
  double total = 0.0;
  for (const MatchTuple& t : tuples) {
    std::vector<MembershipVector> members;
    for (std::size_t v = 0; v < t.per_view.size(); ++v) {
      if (t.per_view[v] < 0) continue;
      members.push_back(membership_vector(cloud, cams[v], detections[v][t.per_view[v]].bbox));
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        total += pairwise_score(members[i], members[j]);
      }
    }
  }
  return total;
}

// Exhaustive enumeration of all groupings (at most one detection per view per
// group) maximizing the summed in-group pairwise score.
double brute_force_best_score(const std::vector<std::vector<Detection2D>>& detections,
                              const PointCloud& cloud, const std::vector<CameraModel>& cams) {
  struct Entry {
    int view;
    MembershipVector membership;
  };
  std::vector<Entry> entries;
  for (std::size_t v = 0; v < detections.size(); ++v) {
    for (const Detection2D& d : detections[v]) {
      entries.push_back({static_cast<int>(v), membership_vector(cloud, cams[v], d.bbox)});
    }
  }
  double best = 0.0;
  struct Group {
    std::uint64_t view_mask = 0;
    std::vector<int> members;
  };
  std::vector<Group> groups;
  std::function<void(std::size_t, double)> recurse = [&](std::size_t e, double score) {
    if (e == entries.size()) {
      best = std::max(best, score);
      return;
    }
    const std::uint64_t bit = 1ULL << entries[e].view;
    const std::size_t n_groups = groups.size();  // deeper levels grow the vector
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
      if (groups[gi].view_mask & bit) continue;
      double add = 0.0;
      for (int m : groups[gi].members) {
        add += pairwise_score(entries[e].membership, entries[m].membership);
      }
      groups[gi].view_mask |= bit;
      groups[gi].members.push_back(static_cast<int>(e));
      recurse(e + 1, score + add);
      groups[gi].members.pop_back();
      groups[gi].view_mask &= ~bit;
    }
    groups.push_back({bit, {static_cast<int>(e)}});
    recurse(e + 1, score);
    groups.pop_back();
  };
  recurse(0, 0.0);
  return best;
}

}  // namespace

TEST_CASE("greedy_match") {
  SECTION("single view produces singletons") {
    Rng rng(1);
    SyntheticScene s = make_synthetic_scene(rng, 3, 1);
    const auto tuples = greedy_match(s.detections, s.cloud, s.cams);
    CHECK(tuples.size() == s.detections[0].size());
    for (const auto& t : tuples) CHECK(t.real_slots() == 1);
  }

  SECTION("two views, two separated objects pair correctly and match brute force") {
    Rng rng(2);
    SyntheticScene s = make_synthetic_scene(rng, 2, 2);
    REQUIRE(s.detections[0].size() == 2);
    REQUIRE(s.detections[1].size() == 2);
    const auto tuples = greedy_match(s.detections, s.cloud, s.cams);
    REQUIRE(tuples.size() == 2);
    for (const auto& t : tuples) {
      REQUIRE(t.real_slots() == 2);
      CHECK(s.object_of[0][t.per_view[0]] == s.object_of[1][t.per_view[1]]);
    }
    const double greedy = matching_total_score(tuples, s.detections, s.cloud, s.cams);
    const double optimal = brute_force_best_score(s.detections, s.cloud, s.cams);
    CHECK(greedy == Catch::Approx(optimal).margin(1e-9));
  }

  SECTION("detection visible in one view only becomes a singleton slot") {
    Rng rng(3);
    SyntheticScene s = make_synthetic_scene(rng, 2, 2);
    s.detections[1].pop_back();  // lose one object in view 1
    s.object_of[1].pop_back();
    const auto tuples = greedy_match(s.detections, s.cloud, s.cams);
    int singletons = 0;
    for (const auto& t : tuples) {
      if (t.real_slots() == 1) ++singletons;
    }
    CHECK(singletons == 1);
  }

  SECTION("outputs never reuse a detection nor pair within a view") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      SyntheticScene s = make_synthetic_scene(rng, 1 + static_cast<int>(rng.uniform_int(4)));
      const auto tuples = greedy_match(s.detections, s.cloud, s.cams);
      std::vector<std::set<int>> used(s.detections.size());
      std::size_t slots = 0;
      for (const auto& t : tuples) {
        REQUIRE(t.per_view.size() == s.detections.size());
        for (std::size_t v = 0; v < t.per_view.size(); ++v) {
          if (t.per_view[v] < 0) continue;
          ++slots;
          CHECK(used[v].insert(t.per_view[v]).second);  // never assigned twice
        }
      }
      std::size_t total = 0;
      for (const auto& d : s.detections) total += d.size();
      CHECK(slots == total);
    }
  }

  SECTION("greedy total score stays within 0.9 of the exhaustive optimum") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
      SyntheticScene s = make_synthetic_scene(rng, 1 + static_cast<int>(rng.uniform_int(4)));
      const auto tuples = greedy_match(s.detections, s.cloud, s.cams);
      const double greedy = matching_total_score(tuples, s.detections, s.cloud, s.cams);
      const double optimal = brute_force_best_score(s.detections, s.cloud, s.cams);
      CHECK(greedy >= 0.9 * optimal - 1e-9);
    }
  }
}

TEST_CASE("segment_instance") {
  Rng rng(6);
  SyntheticScene s = make_synthetic_scene(rng, 2, 3);

  SECTION("single-view match returns exactly the membership bits") {
    MatchTuple t{{0, -1, -1}};
    const auto idx = segment_instance(s.cloud, t, s.detections, s.cams);
    const MembershipVector mv =
        membership_vector(s.cloud, s.cams[0], s.detections[0][0].bbox);
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < mv.bits.size(); ++i) {
      if (mv.bits[i]) expect.push_back(i);
    }
    CHECK(idx == expect);
  }

  SECTION("tuple with no slots throws") {
    MatchTuple t{{-1, -1, -1}};
    CHECK_THROWS_AS(segment_instance(s.cloud, t, s.detections, s.cams), EmptyMatch);
  }

  SECTION("disjoint memberships intersect to nothing") {
    // pair object 0 in view 0 with object 1 in view 1
    REQUIRE(s.detections[0].size() == 2);
    REQUIRE(s.detections[1].size() == 2);
    int d0 = -1, d1 = -1;
    for (std::size_t i = 0; i < s.object_of[0].size(); ++i) {
      if (s.object_of[0][i] == 0) d0 = static_cast<int>(i);
    }
    for (std::size_t i = 0; i < s.object_of[1].size(); ++i) {
      if (s.object_of[1][i] == 1) d1 = static_cast<int>(i);
    }
    MatchTuple t{{d0, d1, -1}};
    CHECK(segment_instance(s.cloud, t, s.detections, s.cams).empty());
  }

  SECTION("sphere plus distractor: recovered points lie in the sphere AABB") {
    // object 0 acts as the target, object 1 as the distractor
    MatchTuple t{{-1, -1, -1}};
    for (std::size_t v = 0; v < 3; ++v) {
      for (std::size_t i = 0; i < s.object_of[v].size(); ++i) {
        if (s.object_of[v][i] == 0) t.per_view[v] = static_cast<int>(i);
      }
    }
    REQUIRE(t.real_slots() == 3);
    const auto idx = segment_instance(s.cloud, t, s.detections, s.cams);
    REQUIRE_FALSE(idx.empty());
    // ground truth AABB of object 0's points, inflated one voxel
    BBox3D gt{Vec3(1e30, 1e30, 1e30), Vec3(-1e30, -1e30, -1e30)};
    for (std::size_t i = 0; i < 60; ++i) {
      gt.min = gt.min.cwiseMin(s.cloud.points[i]);
      gt.max = gt.max.cwiseMax(s.cloud.points[i]);
    }
    const BBox3D inflated = gt.inflated(0.005);
    for (std::size_t i : idx) CHECK(inflated.contains(s.cloud.points[i]));
    // subset of every contributing view's membership
    for (std::size_t v = 0; v < 3; ++v) {
      const MembershipVector mv =
          membership_vector(s.cloud, s.cams[v], s.detections[v][t.per_view[v]].bbox);
      for (std::size_t i : idx) CHECK(mv.bits[i] == 1);
    }
  }
}

TEST_CASE("plane_normal") {
  SECTION("horizontal table points give +z within 2 degrees") {
    PointCloud cloud;
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      cloud.points.emplace_back(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                                0.75 + rng.uniform(-0.0005, 0.0005));
    }
    const Vec3 n = plane_normal(cloud, Vec3(0, 0, 0.75));
    CHECK(std::acos(std::clamp(n.dot(Vec3::UnitZ()), -1.0, 1.0)) < 2.0 * M_PI / 180.0);
  }

  SECTION("vertical drawer face: normal is perpendicular to the drawer axis") {
    PointCloud cloud;
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      cloud.points.emplace_back(0.3 + rng.uniform(-0.0005, 0.0005), rng.uniform(-0.1, 0.1),
                                0.8 + rng.uniform(-0.08, 0.08));
    }
    const Vec3 n = plane_normal(cloud, Vec3(0.3, 0, 0.8));
    const Vec3 drawer_axis = Vec3::UnitX();
    CHECK(std::abs(std::abs(n.dot(drawer_axis)) - 1.0) < 1e-3);  // parallel to x
    CHECK(n.x() < 0.0);  // oriented toward the robot base
    CHECK(std::abs(std::acos(std::clamp(std::abs(n.dot(Vec3::UnitZ())) , -1.0, 1.0)) - M_PI / 2) <
          2.0 * M_PI / 180.0);
  }

  SECTION("too few points") {
    PointCloud cloud;
    for (int i = 0; i < 5; ++i) cloud.points.emplace_back(i * 0.01, 0, 0.75);
    CHECK_THROWS_AS(plane_normal(cloud, Vec3(0, 0, 0.75)), InsufficientPoints);
  }
}

TEST_CASE("joint_info") {
  WorldModel w;
  w.cameras = default_camera_ring(w.table_height);
  ArticulatedObject cab;
  cab.spec.name = "cabinet";
  cab.spec.label = "cabinet";
  cab.spec.pose = Pose::from_translation(Vec3(0.4, 0, w.table_height + 0.3));
  PartGroup drawer;
  drawer.name = "drawer_0";
  drawer.pieces.push_back({BoxShape{Vec3(0.2, 0.3, 0.1)}, Pose{}});
  cab.spec.groups.push_back(drawer);
  PartGroup door;
  door.name = "door_0";
  door.pieces.push_back({BoxShape{Vec3(0.02, 0.3, 0.2)},
                         Pose::from_translation(Vec3(-0.1, 0.15, -0.2))});
  cab.spec.groups.push_back(door);
  JointSpec dj;
  dj.type = JointSpec::Type::Prismatic;
  dj.axis = Vec3(-1, 0, 0);
  dj.origin = Vec3(0, 0, 0.05);
  dj.lo = 0;
  dj.hi = 0.25;
  dj.child_part = "drawer_0";
  cab.joints.push_back(dj);
  JointSpec hj;
  hj.type = JointSpec::Type::Revolute;
  hj.axis = Vec3(0, 0, 1);
  hj.origin = Vec3(-0.1, 0.3, -0.2);
  hj.lo = 0;
  hj.hi = M_PI / 2;
  hj.child_part = "door_0";
  cab.joints.push_back(hj);
  w.articulated.push_back(cab);

  SECTION("prismatic filter returns the world-frame drawer axis exactly") {
    const JointInfo info = joint_info(w, "cabinet", Vec3(0.4, 0, 0.8), "prismatic");
    CHECK(info.type == "prismatic");
    CHECK((info.joint_axis - Vec3(-1, 0, 0)).norm() < 1e-12);
    CHECK((info.joint_position - cab.spec.pose.apply(dj.origin)).norm() < 1e-12);
  }

  SECTION("revolute filter near the hinge returns the door joint") {
    const Vec3 near_hinge = cab.spec.pose.apply(hj.origin) + Vec3(0.01, 0, 0);
    const JointInfo info = joint_info(w, "cabinet", near_hinge, "revolute");
    CHECK(info.type == "revolute");
    CHECK((info.joint_axis - Vec3(0, 0, 1)).norm() < 1e-12);
  }

  SECTION("part names resolve to their owner") {
    const JointInfo info = joint_info(w, "drawer_0", Vec3(0.4, 0, 0.8), "prismatic");
    CHECK(info.type == "prismatic");
  }

  SECTION("errors") {
    WorldModel only_drawer = w;
    only_drawer.articulated[0].joints.resize(1);
    CHECK_THROWS_AS(joint_info(only_drawer, "cabinet", Vec3(0, 0, 0), "revolute"),
                    NoMatchingJoint);
    CHECK_THROWS_AS(joint_info(w, "ghost", Vec3(0, 0, 0), "any"), NoSuchObject);
  }
}

TEST_CASE("full perception pass with zero noise") {
  const WorldModel w = three_object_world();
  PerceptionConfig cfg;
  cfg.voxel_size = 0.01;
  const PerceivedScene scene = run_perception(w, {"apple", "crate", "can"}, NoiseSpec{}, cfg);

  REQUIRE(scene.instances.size() == 3);
  std::map<std::string, int> counts;
  for (const auto& inst : scene.instances) counts[inst.label]++;
  CHECK(counts["apple"] == 1);
  CHECK(counts["crate"] == 1);
  CHECK(counts["can"] == 1);
  for (const auto& inst : scene.instances) {
    const BBox3D gt = gt_bbox3d(w, inst.label);
    CHECK((inst.bbox3d.center() - gt.center()).norm() < 0.05);
    CHECK_FALSE(inst.point_indices.empty());
    const BBox3D rebuilt = bbox3d_of(scene.cloud, inst.point_indices);
    CHECK((rebuilt.min - inst.bbox3d.min).norm() < 1e-12);
    CHECK((rebuilt.max - inst.bbox3d.max).norm() < 1e-12);
  }
}
