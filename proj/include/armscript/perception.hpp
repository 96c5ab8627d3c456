#pragma once

#include <algorithm>
#include <cstring>
#include <functional>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "armscript/scene.hpp"

namespace armscript {

ARMSCRIPT_DEFINE_ERROR(NoViews);
ARMSCRIPT_DEFINE_ERROR(EmptyVolume);
ARMSCRIPT_DEFINE_ERROR(LengthMismatch);
ARMSCRIPT_DEFINE_ERROR(EmptyMatch);
ARMSCRIPT_DEFINE_ERROR(InsufficientPoints);
ARMSCRIPT_DEFINE_ERROR(NoMatchingJoint);

// ---------------------------------------------------------------------------
// TSDF fusion

struct TSDFVolume {
  Vec3 origin = Vec3::Zero();  // min corner
  double voxel_size = 0.005;
  std::array<int, 3> dims = {0, 0, 0};
  double truncation = 0.02;
  std::vector<double> values;   // clamped signed distance, meters
  std::vector<double> weights;  // 0 = never observed

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * dims[1] + iy) * dims[0] + ix;
  }

  Vec3 center(int ix, int iy, int iz) const {
    return origin + voxel_size * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
  }
};

inline TSDFVolume make_tsdf(const BBox3D& workspace, double voxel_size,
                            double truncation_factor = 4.0) {
  TSDFVolume v;
  v.origin = workspace.min;
  v.voxel_size = voxel_size;
  v.truncation = truncation_factor * voxel_size;
  const Vec3 span = workspace.max - workspace.min;
  for (int i = 0; i < 3; ++i) {
    v.dims[i] = std::max(1, static_cast<int>(std::ceil(span[i] / voxel_size)));
  }
  v.values.assign(v.voxel_count(), 0.0);
  v.weights.assign(v.voxel_count(), 0.0);
  return v;
}

// Workspace for a world: object boxes plus the table top band, 10 cm margin.
inline BBox3D perception_workspace(const WorldModel& world, double margin = 0.10) {
  BBox3D box{Vec3(-0.5 * world.table_extents.x(), -0.5 * world.table_extents.y(),
                  world.table_height - 0.02),
             Vec3(0.5 * world.table_extents.x(), 0.5 * world.table_extents.y(),
                  world.table_height)};
  for (const WorldUnit& u : world.units()) {
    if (u.name == "table") continue;
    box.min = box.min.cwiseMin(u.aabb.min);
    box.max = box.max.cwiseMax(u.aabb.max);
  }
  return box.inflated(margin);
}

inline TSDFVolume integrate_view(TSDFVolume tsdf, const DepthImage& depth,
                                 const CameraModel& cam) {
  const Mat3 rt = cam.rotation.transpose();
  const Vec3 t = cam.translation;
  const double fx = cam.intrinsics(0, 0), fy = cam.intrinsics(1, 1);
  const double cx = cam.intrinsics(0, 2), cy = cam.intrinsics(1, 2);
  for (int iz = 0; iz < tsdf.dims[2]; ++iz) {
    for (int iy = 0; iy < tsdf.dims[1]; ++iy) {
      for (int ix = 0; ix < tsdf.dims[0]; ++ix) {
        const Vec3 pc = rt * (tsdf.center(ix, iy, iz) - t);
        if (pc.z() <= kBehindCameraEps) continue;
        const int u = static_cast<int>(std::floor(fx * pc.x() / pc.z() + cx));
        const int v = static_cast<int>(std::floor(fy * pc.y() / pc.z() + cy));
        if (u < 0 || u >= depth.width || v < 0 || v >= depth.height) continue;
        const double d = depth.at(u, v);
        if (d <= 0.0) continue;
        const double sd = d - pc.z();
        if (sd < -tsdf.truncation) continue;  // hidden beyond the surface
        const double clamped = std::min(sd, tsdf.truncation);
        const std::size_t i = tsdf.index(ix, iy, iz);
        const double w = tsdf.weights[i];
        tsdf.values[i] = (tsdf.values[i] * w + clamped) / (w + 1.0);
        tsdf.weights[i] = w + 1.0;
      }
    }
  }
  return tsdf;
}

inline TSDFVolume fuse(const std::vector<std::pair<DepthImage, CameraModel>>& views,
                       const BBox3D& workspace, double voxel_size,
                       double truncation_factor = 4.0) {
  if (views.empty()) throw NoViews("fuse requires at least one view");
  TSDFVolume tsdf = make_tsdf(workspace, voxel_size, truncation_factor);
  for (const auto& [depth, cam] : views) tsdf = integrate_view(std::move(tsdf), depth, cam);
  return tsdf;
}

// One point per sign-changing voxel edge, linearly interpolated; only edges
// with both endpoints observed.
inline PointCloud extract_surface(const TSDFVolume& tsdf) {
  bool any_observed = false;
  for (double w : tsdf.weights) {
    if (w > 0.0) {
      any_observed = true;
      break;
    }
  }
  if (!any_observed) throw EmptyVolume("no observed voxels");

  PointCloud cloud;
  const std::array<std::array<int, 3>, 3> steps = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int iz = 0; iz < tsdf.dims[2]; ++iz) {
    for (int iy = 0; iy < tsdf.dims[1]; ++iy) {
      for (int ix = 0; ix < tsdf.dims[0]; ++ix) {
        const std::size_t i0 = tsdf.index(ix, iy, iz);
        if (tsdf.weights[i0] <= 0.0) continue;
        const double v0 = tsdf.values[i0];
        for (const auto& s : steps) {
          const int jx = ix + s[0], jy = iy + s[1], jz = iz + s[2];
          if (jx >= tsdf.dims[0] || jy >= tsdf.dims[1] || jz >= tsdf.dims[2]) continue;
          const std::size_t i1 = tsdf.index(jx, jy, jz);
          if (tsdf.weights[i1] <= 0.0) continue;
          const double v1 = tsdf.values[i1];
          if (v0 * v1 >= 0.0) continue;
          const double frac = v0 / (v0 - v1);
          const Vec3 a = tsdf.center(ix, iy, iz);
          const Vec3 b = tsdf.center(jx, jy, jz);
          cloud.points.push_back(a + frac * (b - a));
        }
      }
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// simulated 2D grounding

struct Detection2D {
  int view_index = 0;
  BBox2D bbox;
  std::string label;
  double score = 1.0;
};

struct NoiseSpec {
  double jitter_sigma_px = 0.0;
  double p_drop = 0.0;
  double p_mislabel = 0.0;
  double p_enlarge = 0.0;
  std::uint64_t seed = 0;

  bool enabled() const {
    return jitter_sigma_px > 0.0 || p_drop > 0.0 || p_mislabel > 0.0 || p_enlarge > 0.0;
  }
};

inline std::vector<Detection2D> simulated_grounding(const WorldModel& world,
                                                    const CameraModel& cam,
                                                    const std::vector<std::string>& queries,
                                                    const NoiseSpec& noise) {
  std::vector<Detection2D> result;
  Rng rng(noise.seed);
  for (const auto& [label, box] : gt_detections(world, cam, queries)) {
    if (!noise.enabled()) {
      result.push_back({0, box, label, 1.0});
      continue;
    }
    if (rng.chance(noise.p_drop)) continue;
    Detection2D det;
    det.label = label;
    det.bbox = box;
    det.bbox.x_min += rng.normal(0.0, noise.jitter_sigma_px);
    det.bbox.y_min += rng.normal(0.0, noise.jitter_sigma_px);
    det.bbox.x_max += rng.normal(0.0, noise.jitter_sigma_px);
    det.bbox.y_max += rng.normal(0.0, noise.jitter_sigma_px);
    if (det.bbox.x_min > det.bbox.x_max) std::swap(det.bbox.x_min, det.bbox.x_max);
    if (det.bbox.y_min > det.bbox.y_max) std::swap(det.bbox.y_min, det.bbox.y_max);
    if (rng.chance(noise.p_mislabel) && queries.size() > 1) {
      std::vector<std::string> others;
      for (const std::string& q : queries) {
        if (q != label) others.push_back(q);
      }
      det.label = others[rng.uniform_int(others.size())];
    }
    if (rng.chance(noise.p_enlarge)) {
      const double f = rng.uniform(1.5, 3.0);
      const double cu = 0.5 * (det.bbox.x_min + det.bbox.x_max);
      const double cv = 0.5 * (det.bbox.y_min + det.bbox.y_max);
      det.bbox.x_min = cu + f * (det.bbox.x_min - cu);
      det.bbox.x_max = cu + f * (det.bbox.x_max - cu);
      det.bbox.y_min = cv + f * (det.bbox.y_min - cv);
      det.bbox.y_max = cv + f * (det.bbox.y_max - cv);
    }
    det.bbox = det.bbox.clipped(cam.width, cam.height);
    det.score = rng.uniform(0.5, 1.0);
    result.push_back(std::move(det));
  }
  return result;
}

// ---------------------------------------------------------------------------
// cross-view matching

inline MembershipVector membership_vector(const PointCloud& cloud, const CameraModel& cam,
                                          const BBox2D& bbox) {
  MembershipVector mv;
  mv.bits.resize(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    mv.bits[i] = bbox2d_contains_projection(cam, bbox, cloud.points[i]) ? 1 : 0;
  }
  return mv;
}

// One-dimensional IoU of two binary vectors; 0 when both are empty.
inline double pairwise_score(const MembershipVector& a, const MembershipVector& b) {
  if (a.size() != b.size()) throw LengthMismatch("membership vectors differ in length");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct MatchTuple {
  std::vector<int> per_view;  // detection index per view, -1 when absent

  int real_slots() const {
    int n = 0;
    for (int v : per_view) n += (v >= 0);
    return n;
  }
};

constexpr double kDefaultMinMatchScore = 0.25;

// Greedy agglomerative matching over cross-view pairwise scores. Each
// detection joins at most one tuple and a tuple holds at most one detection
// per view; leftovers stay singletons.
inline std::vector<MatchTuple> greedy_match(
    const std::vector<std::vector<Detection2D>>& detections, const PointCloud& cloud,
    const std::vector<CameraModel>& cams, double min_score = kDefaultMinMatchScore) {
  const int n_views = static_cast<int>(detections.size());
  struct Entry {
    int view;
    int index;
    MembershipVector membership;
  };
  std::vector<Entry> entries;
  for (int v = 0; v < n_views; ++v) {
    for (std::size_t i = 0; i < detections[v].size(); ++i) {
      entries.push_back({v, static_cast<int>(i),
                         membership_vector(cloud, cams[v], detections[v][i].bbox)});
    }
  }

  struct Pair {
    double score;
    int a, b;
  };
  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < entries.size(); ++a) {
    for (std::size_t b = a + 1; b < entries.size(); ++b) {
      if (entries[a].view == entries[b].view) continue;
      const double s = pairwise_score(entries[a].membership, entries[b].membership);
      if (s >= min_score) pairs.push_back({s, static_cast<int>(a), static_cast<int>(b)});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  // union-find with per-group view masks
  std::vector<int> parent(entries.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::uint64_t> view_mask(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) view_mask[i] = 1ULL << entries[i].view;
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Pair& p : pairs) {
    const int ra = find(p.a), rb = find(p.b);
    if (ra == rb) continue;
    if (view_mask[ra] & view_mask[rb]) continue;  // would double-book a view
    parent[rb] = ra;
    view_mask[ra] |= view_mask[rb];
  }

  // emit tuples in first-seen detection order
  std::map<int, std::size_t> root_to_tuple;
  std::vector<MatchTuple> tuples;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const int root = find(static_cast<int>(e));
    auto it = root_to_tuple.find(root);
    if (it == root_to_tuple.end()) {
      it = root_to_tuple.emplace(root, tuples.size()).first;
      tuples.push_back(MatchTuple{std::vector<int>(n_views, -1)});
    }
    tuples[it->second].per_view[entries[e].view] = entries[e].index;
  }
  return tuples;
}

// Modal label; ties broken by summed detection score, then lexicographic.
inline std::string vote_label(const std::vector<Detection2D>& matched) {
  if (matched.empty()) throw EmptyMatch("vote_label needs at least one detection");
  std::map<std::string, std::pair<int, double>> tally;  // label -> (count, score sum)
  for (const Detection2D& d : matched) {
    auto& t = tally[d.label];
    t.first += 1;
    t.second += d.score;
  }
  std::string best;
  int best_count = -1;
  double best_score = -1.0;
  for (const auto& [label, t] : tally) {
    const auto [count, score] = t;
    if (count > best_count || (count == best_count && score > best_score) ||
        (count == best_count && score == best_score && label < best)) {
      best = label;
      best_count = count;
      best_score = score;
    }
  }
  return best;
}

// Intersection of membership bits over the tuple's real views.
inline std::vector<std::size_t> segment_instance(
    const PointCloud& cloud, const MatchTuple& match,
    const std::vector<std::vector<Detection2D>>& detections,
    const std::vector<CameraModel>& cams) {
  if (match.real_slots() == 0) throw EmptyMatch("tuple has no detections");
  std::vector<std::uint8_t> keep(cloud.size(), 1);
  for (std::size_t v = 0; v < match.per_view.size(); ++v) {
    if (match.per_view[v] < 0) continue;
    const MembershipVector mv =
        membership_vector(cloud, cams[v], detections[v][match.per_view[v]].bbox);
    for (std::size_t i = 0; i < cloud.size(); ++i) keep[i] &= mv.bits[i];
  }
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keep[i]) indices.push_back(i);
  }
  return indices;
}

struct ObjectInstance {
  std::string label;
  MatchTuple match;
  std::vector<std::size_t> point_indices;
  BBox3D bbox3d;
};

// ---------------------------------------------------------------------------
// plane fitting and joint lookup

// RANSAC plane fit over points within `radius` of `position`; the normal is
// oriented toward the robot base, tie-broken into the +z hemisphere.
inline Vec3 plane_normal(const PointCloud& cloud, const Vec3& position,
                         const Vec3& base_position = Vec3(-0.62, 0.0, 0.75),
                         double radius = 0.10) {
  std::vector<Vec3> local;
  for (const Vec3& p : cloud.points) {
    if ((p - position).norm() <= radius) local.push_back(p);
  }
  if (local.size() < 30) {
    throw InsufficientPoints("plane fit needs >= 30 points, got " +
                             std::to_string(local.size()));
  }
  Rng rng(hash_string("plane_normal") ^ local.size());
  const double inlier_tol = 0.004;
  std::vector<int> best_inliers;
  Vec3 best_normal = Vec3::UnitZ();
  for (int iter = 0; iter < 128; ++iter) {
    const std::size_t i0 = rng.uniform_int(local.size());
    const std::size_t i1 = rng.uniform_int(local.size());
    const std::size_t i2 = rng.uniform_int(local.size());
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    Vec3 n = (local[i1] - local[i0]).cross(local[i2] - local[i0]);
    if (n.norm() < 1e-10) continue;
    n.normalize();
    std::vector<int> inliers;
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (std::abs(n.dot(local[i] - local[i0])) < inlier_tol) inliers.push_back(i);
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_normal = n;
    }
  }
  // refine on inliers via the covariance's smallest eigenvector
  if (best_inliers.size() >= 3) {
    Vec3 centroid = Vec3::Zero();
    for (int i : best_inliers) centroid += local[i];
    centroid /= static_cast<double>(best_inliers.size());
    Mat3 cov = Mat3::Zero();
    for (int i : best_inliers) {
      const Vec3 d = local[i] - centroid;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    best_normal = eig.eigenvectors().col(0).normalized();
  }
  const double toward_base = best_normal.dot(base_position - position);
  if (toward_base < -1e-6) {
    best_normal = -best_normal;
  } else if (std::abs(toward_base) <= 1e-6 && best_normal.z() < 0.0) {
    best_normal = -best_normal;
  }
  return best_normal;
}

struct JointInfo {
  Vec3 joint_position = Vec3::Zero();  // world frame
  Vec3 joint_axis = Vec3::UnitX();     // world frame, unit
  std::string type;                    // "revolute" | "prismatic"
};

// Ground-truth articulation adapter: the filtered joint nearest to `position`.
inline JointInfo joint_info(const WorldModel& world, const std::string& name,
                            const Vec3& position, const std::string& type_filter = "any") {
  const ArticulatedObject* obj = nullptr;
  for (const ArticulatedObject& a : world.articulated) {
    if (a.spec.name == name) {
      obj = &a;
      break;
    }
    for (const PartGroup& g : a.spec.groups) {
      if (g.name == name) {
        obj = &a;
        break;
      }
    }
    if (obj) break;
  }
  if (!obj) throw NoSuchObject("no articulated object or part named '" + name + "'");

  const JointSpec* best = nullptr;
  double best_dist = 1e30;
  for (const JointSpec& j : obj->joints) {
    const bool is_prismatic = j.type == JointSpec::Type::Prismatic;
    if (type_filter == "prismatic" && !is_prismatic) continue;
    if (type_filter == "revolute" && is_prismatic) continue;
    const Vec3 world_origin = obj->spec.pose.apply(j.origin);
    const double d = (world_origin - position).norm();
    if (d < best_dist) {
      best_dist = d;
      best = &j;
    }
  }
  if (!best) throw NoMatchingJoint("object '" + name + "' has no " + type_filter + " joint");
  JointInfo info;
  info.joint_position = obj->spec.pose.apply(best->origin);
  info.joint_axis = (obj->spec.pose.rotation * best->axis).normalized();
  info.type = best->type == JointSpec::Type::Prismatic ? "prismatic" : "revolute";
  return info;
}

// ---------------------------------------------------------------------------
// full perception pass

struct PerceptionConfig {
  double voxel_size = 0.005;
  double truncation_factor = 4.0;
  double min_match_score = kDefaultMinMatchScore;
  double workspace_margin = 0.10;
};

struct PerceivedScene {
  PointCloud cloud;
  std::vector<std::vector<Detection2D>> detections;  // per view
  std::vector<ObjectInstance> instances;
  std::vector<DepthImage> depths;
};

inline PerceivedScene run_perception(const WorldModel& world,
                                     const std::vector<std::string>& queries,
                                     const NoiseSpec& noise, const PerceptionConfig& cfg = {}) {
  PerceivedScene out;
  const auto& cams = world.cameras;
  std::vector<std::pair<DepthImage, CameraModel>> views;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    DepthImage depth = render_depth(world, cams[v]);
    NoiseSpec per_view = noise;
    per_view.seed = mix_seed(noise.seed, v + 1);
    std::vector<Detection2D> dets = simulated_grounding(world, cams[v], queries, per_view);
    for (Detection2D& d : dets) d.view_index = static_cast<int>(v);
    out.detections.push_back(std::move(dets));
    views.emplace_back(depth, cams[v]);
    out.depths.push_back(std::move(depth));
  }
  const TSDFVolume tsdf = fuse(views, perception_workspace(world, cfg.workspace_margin),
                               cfg.voxel_size, cfg.truncation_factor);
  out.cloud = extract_surface(tsdf);

  const auto tuples = greedy_match(out.detections, out.cloud, cams, cfg.min_match_score);
  for (const MatchTuple& tuple : tuples) {
    std::vector<Detection2D> matched;
    for (std::size_t v = 0; v < tuple.per_view.size(); ++v) {
      if (tuple.per_view[v] >= 0) matched.push_back(out.detections[v][tuple.per_view[v]]);
    }
    if (matched.empty()) continue;
    auto indices = segment_instance(out.cloud, tuple, out.detections, cams);
    if (indices.empty()) continue;  // views disagree; reject the tuple
    ObjectInstance inst;
    inst.label = vote_label(matched);
    inst.match = tuple;
    inst.bbox3d = bbox3d_of(out.cloud, indices);
    inst.point_indices = std::move(indices);
    out.instances.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// debug dumps

inline void save_cloud_ascii(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  for (const Vec3& p : cloud.points) {
    out << p.x() << " " << p.y() << " " << p.z() << "\n";
  }
}

// Flat little-endian float32 values with a JSON sidecar ({origin, voxel_size,
// dims}) at <path>.json.
inline void save_tsdf(const TSDFVolume& tsdf, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  for (double v : tsdf.values) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  nlohmann::json side;
  side["origin"] = {tsdf.origin.x(), tsdf.origin.y(), tsdf.origin.z()};
  side["voxel_size"] = tsdf.voxel_size;
  side["dims"] = {tsdf.dims[0], tsdf.dims[1], tsdf.dims[2]};
  std::ofstream sidecar(path + ".json");
  sidecar << side.dump(2) << "\n";
}

}  // namespace armscript
