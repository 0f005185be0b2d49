#include <doctest.h>

#include <limits>
#include <map>
#include <set>

#include "panoslam/synthetic.hpp"

using namespace panoslam;

namespace {

Intrinsics intr64() { return Intrinsics{64.0, 64.0, 32.0, 32.0, 64, 64}; }

bool scenes_equal(const SyntheticScene& a, const SyntheticScene& b) {
  if (a.objects.size() != b.objects.size()) return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    if (a.objects[i].kind != b.objects[i].kind) return false;
    if (a.objects[i].center != b.objects[i].center) return false;
    if (a.objects[i].half_extent != b.objects[i].half_extent) return false;
    if (a.objects[i].class_id != b.objects[i].class_id) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scene generation is deterministic in the seed") {
  SceneSpec spec;
  const SyntheticScene a = generate_scene(spec, 5);
  const SyntheticScene b = generate_scene(spec, 5);
  const SyntheticScene c = generate_scene(spec, 6);
  CHECK(scenes_equal(a, b));
  CHECK(!scenes_equal(a, c));
}

TEST_CASE("a one-box spec yields exactly one instance") {
  SceneSpec spec;
  spec.num_objects = 1;
  const SyntheticScene scene = generate_scene(spec, 3);
  CHECK(scene.objects.size() == 1);
  CHECK(scene.num_instances() == 2);  // room + object
}

TEST_CASE("eight objects are pairwise non-overlapping by AABB") {
  SceneSpec spec;
  spec.num_objects = 8;
  const SyntheticScene scene = generate_scene(spec, 1);
  REQUIRE(scene.objects.size() == 8);
  for (size_t i = 0; i < 8; ++i)
    for (size_t j = i + 1; j < 8; ++j) {
      const Vec3 amin = scene.objects[i].aabb_min(), amax = scene.objects[i].aabb_max();
      const Vec3 bmin = scene.objects[j].aabb_min(), bmax = scene.objects[j].aabb_max();
      const bool overlap =
          (amin.array() <= bmax.array()).all() && (bmin.array() <= amax.array()).all();
      CHECK(!overlap);
    }
  std::set<int> ids;
  for (const auto& o : scene.objects) ids.insert(o.instance_id);
  CHECK(ids.size() == 8);
}

TEST_CASE("an unsatisfiable spec errors after bounded retries") {
  SceneSpec spec;
  spec.num_objects = 500;
  spec.min_size = 0.6;
  spec.max_size = 0.7;
  spec.max_attempts = 600;
  CHECK_THROWS_AS(generate_scene(spec, 1), std::runtime_error);
}

TEST_CASE("empty room renders only walls, camera inside sees no void") {
  SyntheticScene scene;  // no objects
  const CameraPose pose = look_at_pose(Vec3(0, 0, -1), Vec3(0, 0, 1));
  const Frame f = render_ground_truth(scene, pose, intr64());
  for (size_t i = 0; i < f.depth.size(); ++i) {
    CHECK(f.depth[i] > 0);
    CHECK(f.gt_panoptic->instances[i] == 0);  // room instance
  }
}

TEST_CASE("on-axis unit sphere hit depth is analytic") {
  SyntheticScene scene;
  scene.room_min = Vec3(-10, -10, -10);
  scene.room_max = Vec3(10, 10, 10);
  Primitive p;
  p.kind = PrimitiveKind::Sphere;
  p.center = Vec3(0, 0, 2);
  p.half_extent = Vec3::Constant(1.0);  // radius 1
  p.instance_id = 1;
  p.class_id = 1;
  scene.objects.push_back(p);
  const RayHit hit = cast_ray(scene, CameraPose(), intr64(), 32.0, 32.0);
  CHECK(hit.instance == 1);
  CHECK(hit.depth == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("depth raster matches a per-primitive intersection oracle") {
  SceneSpec spec;
  spec.num_objects = 5;
  const SyntheticScene scene = generate_scene(spec, 9);
  const CameraPose pose = look_at_pose(Vec3(0.3, 0.1, -1.0), Vec3(0, 0, 0.2));
  const Intrinsics intr{32, 32, 16, 16, 32, 32};
  const Frame f = render_ground_truth(scene, pose, intr);

  // Straightforward oracle: nearest positive root over every primitive and
  // the room walls, recomputed with homogeneous ray marching in camera z.
  const Mat3 rot_wc = pose.rotation().transpose();
  const Vec3 origin = pose.center();
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const Vec3 dir = rot_wc * Vec3((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int best_inst = -1;
      // Room: exit face of the bounding box.
      {
        double t_exit = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
          const double lo = (scene.room_min[a] - origin[a]) / dir[a];
          const double hi = (scene.room_max[a] - origin[a]) / dir[a];
          t_exit = std::min(t_exit, std::max(lo, hi));
        }
        if (t_exit > 1e-9) {
          best = t_exit;
          best_inst = 0;
        }
      }
      for (const auto& obj : scene.objects) {
        if (obj.kind == PrimitiveKind::Sphere) {
          const Vec3 oc = origin - obj.center;
          const double a = dir.squaredNorm();
          const double b = 2 * oc.dot(dir);
          const double c = oc.squaredNorm() - obj.radius() * obj.radius();
          const double disc = b * b - 4 * a * c;
          if (disc < 0) continue;
          double root = (-b - std::sqrt(disc)) / (2 * a);
          if (root <= 1e-9) root = (-b + std::sqrt(disc)) / (2 * a);
          if (root > 1e-9 && root < best) {
            best = root;
            best_inst = obj.instance_id;
          }
        } else {
          double t0 = -std::numeric_limits<double>::infinity();
          double t1 = std::numeric_limits<double>::infinity();
          const Vec3 bmin = obj.aabb_min(), bmax = obj.aabb_max();
          for (int a = 0; a < 3; ++a) {
            const double lo = (bmin[a] - origin[a]) / dir[a];
            const double hi = (bmax[a] - origin[a]) / dir[a];
            t0 = std::max(t0, std::min(lo, hi));
            t1 = std::min(t1, std::max(lo, hi));
          }
          if (t0 <= t1 && t0 > 1e-9 && t0 < best) {
            best = t0;
            best_inst = obj.instance_id;
          }
        }
      }
      CHECK(f.gt_panoptic->instances(x, y) == best_inst);
      if (best_inst >= 0)
        CHECK(std::abs(f.depth(x, y) - static_cast<double>(static_cast<float>(best))) <= 1e-10);
    }
}

TEST_CASE("ground truth rendering is pose-equivariant under a rigid motion") {
  SceneSpec spec;
  spec.num_objects = 3;
  SyntheticScene scene = generate_scene(spec, 4);
  const CameraPose pose = look_at_pose(Vec3(0.2, 0.0, -0.9), Vec3(0, 0, 0));
  const Frame a = render_ground_truth(scene, pose, intr64());

  // Translate scene and camera together; rasters must match bitwise.
  const Vec3 shift(0.37, -0.21, 0.55);
  SyntheticScene moved = scene;
  moved.room_min += shift;
  moved.room_max += shift;
  for (auto& o : moved.objects) o.center += shift;
  // Keep the procedural texture moving with the geometry.
  const CameraPose moved_pose =
      look_at_pose(Vec3(0.2, 0.0, -0.9) + shift, shift);
  const Frame b = render_ground_truth(moved, moved_pose, intr64());
  int differing = 0;
  for (size_t i = 0; i < a.depth.size(); ++i) {
    if (a.gt_panoptic->instances[i] != b.gt_panoptic->instances[i]) ++differing;
    // Texture is anchored in world space, so colors differ; depth must not.
    if (std::abs(a.depth[i] - b.depth[i]) > 1e-5) ++differing;
  }
  CHECK(differing == 0);
}

TEST_CASE("identity noise config returns the ground-truth partition") {
  SceneSpec spec;
  spec.num_objects = 4;
  const SyntheticScene scene = generate_scene(spec, 11);
  const Frame f =
      render_ground_truth(scene, look_at_pose(Vec3(0, 0, -1), Vec3(0, 0, 0)), intr64());
  const PseudoLabels pseudo = corrupt_labels(*f.gt_panoptic, 16, NoiseConfig{}, 0);

  // Same partition and classes, up to the compaction of instance ids.
  std::vector<int> id_map(scene.num_instances(), -1);
  for (size_t i = 0; i < f.depth.size(); ++i) {
    const int32_t inst = f.gt_panoptic->instances[i];
    const int32_t region = pseudo.regions[i];
    if (inst < 0) {
      CHECK(region == -1);
      continue;
    }
    if (id_map[inst] < 0) id_map[inst] = region;
    CHECK(id_map[inst] == region);
    Eigen::Index cls;
    pseudo.region_classes.row(region).maxCoeff(&cls);
    CHECK(static_cast<int>(cls) == f.gt_panoptic->instance_classes[inst]);
  }
}

TEST_CASE("class flip probability one flips every region with K = 2") {
  PanopticLabels gt;
  gt.instances = LabelImage(8, 8, 0);
  for (int x = 0; x < 8; ++x) gt.instances(x, 0) = 1;
  gt.instance_classes = {0, 1};
  NoiseConfig cfg;
  cfg.class_flip_rate = 1.0;
  const PseudoLabels pseudo = corrupt_labels(gt, 2, cfg, 0);
  REQUIRE(pseudo.num_regions() == 2);
  for (int r = 0; r < 2; ++r) {
    Eigen::Index cls;
    pseudo.region_classes.row(r).maxCoeff(&cls);
    const int original = gt.instance_classes[r];  // identity mapping without permutation
    CHECK(static_cast<int>(cls) == 1 - original);
  }
}

TEST_CASE("realized flip fraction sits inside the binomial 99 percent band") {
  // 400 regions at p = 0.3: sd = sqrt(0.3*0.7/400) ~ 0.0229, 99% ~ +-2.58 sd.
  PanopticLabels gt;
  gt.instances = LabelImage(400, 1, 0);
  for (int x = 0; x < 400; ++x) gt.instances(x, 0) = x;
  gt.instance_classes.assign(400, 3);
  NoiseConfig cfg;
  cfg.class_flip_rate = 0.3;
  cfg.seed = 17;
  const PseudoLabels pseudo = corrupt_labels(gt, 16, cfg, 0);
  int flips = 0;
  for (int r = 0; r < pseudo.num_regions(); ++r) {
    Eigen::Index cls;
    pseudo.region_classes.row(r).maxCoeff(&cls);
    flips += cls != 3;
  }
  const double fraction = flips / 400.0;
  CHECK(fraction > 0.3 - 2.58 * 0.0229);
  CHECK(fraction < 0.3 + 2.58 * 0.0229);
}

TEST_CASE("per-view permutation breaks cross-view region ids but not partitions") {
  SceneSpec spec;
  spec.num_objects = 5;
  const SyntheticScene scene = generate_scene(spec, 21);
  const Frame f =
      render_ground_truth(scene, look_at_pose(Vec3(0, 0, -1), Vec3(0, 0, 0)), intr64());
  NoiseConfig cfg;
  cfg.permute_instances = true;
  cfg.seed = 5;
  const PseudoLabels v0 = corrupt_labels(*f.gt_panoptic, 16, cfg, 0);
  const PseudoLabels v1 = corrupt_labels(*f.gt_panoptic, 16, cfg, 1);
  bool ids_differ = false;
  for (size_t i = 0; i < v0.regions.size(); ++i)
    if (v0.regions[i] != v1.regions[i]) ids_differ = true;
  CHECK(ids_differ);
  // Partition structure itself is preserved by a pure permutation.
  std::map<int32_t, int32_t> mapping;
  for (size_t i = 0; i < v0.regions.size(); ++i) {
    if (v0.regions[i] < 0) continue;
    auto it = mapping.find(v0.regions[i]);
    if (it == mapping.end())
      mapping[v0.regions[i]] = v1.regions[i];
    else
      CHECK(it->second == v1.regions[i]);
  }
}

TEST_CASE("orbit trajectories subtend the requested arc") {
  TrajectorySpec spec;
  spec.frames = 30;
  spec.orbit_arc_deg = 60;
  spec.orbit_radius = 1.2;
  const std::vector<CameraPose> poses = generate_trajectory(spec, 1);
  REQUIRE(poses.size() == 30);
  const Vec3 first = poses.front().center();
  const Vec3 last = poses.back().center();
  const double cos_angle = first.normalized().dot(last.normalized());
  CHECK(std::acos(cos_angle) == doctest::Approx(60.0 * M_PI / 180).epsilon(1e-9));
  for (const auto& p : poses) CHECK(p.center().norm() == doctest::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("consecutive trajectory steps are bounded") {
  for (MotionType motion : {MotionType::Orbit, MotionType::Lateral, MotionType::RandomWalk}) {
    TrajectorySpec spec;
    spec.motion = motion;
    spec.frames = 40;
    spec.max_step = 0.05;
    const std::vector<CameraPose> poses = generate_trajectory(spec, 3);
    for (size_t i = 1; i < poses.size(); ++i) {
      const double step = (poses[i].center() - poses[i - 1].center()).norm();
      CHECK(step <= std::max(0.06, spec.max_step + 1e-9));
    }
  }
}

TEST_CASE("every trajectory frame keeps at least half the rays on geometry") {
  SceneSpec sspec;
  sspec.num_objects = 6;
  const SyntheticScene scene = generate_scene(sspec, 2);
  TrajectorySpec tspec;
  tspec.frames = 12;
  const std::vector<CameraPose> poses = generate_trajectory(tspec, 2);
  const Intrinsics intr{32, 32, 16, 16, 32, 32};
  for (const CameraPose& pose : poses) {
    int hits = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) hits += cast_ray(scene, pose, intr, x, y).instance >= 0;
    CHECK(hits >= 32 * 32 / 2);
  }
}
