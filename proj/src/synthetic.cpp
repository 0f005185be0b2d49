#include "panoslam/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace panoslam {

Vec3 Primitive::aabb_min() const {
  return kind == PrimitiveKind::Box ? Vec3(center - half_extent)
                                    : Vec3(center.array() - radius());
}

Vec3 Primitive::aabb_max() const {
  return kind == PrimitiveKind::Box ? Vec3(center + half_extent)
                                    : Vec3(center.array() + radius());
}

namespace {

bool aabb_overlap(const Vec3& amin, const Vec3& amax, const Vec3& bmin, const Vec3& bmax) {
  return (amin.array() <= bmax.array()).all() && (bmin.array() <= amax.array()).all();
}

Vec3 palette_color(Rng& rng) {
  // Saturated-ish albedos away from gray so instances stay photometrically
  // distinct; exact values are irrelevant, distinctness is what matters.
  return Vec3(0.15 + 0.7 * rng.uniform(), 0.15 + 0.7 * rng.uniform(),
              0.15 + 0.7 * rng.uniform());
}

}  // namespace

SyntheticScene generate_scene(const SceneSpec& spec, uint64_t seed) {
  if (spec.num_objects < 1) throw std::invalid_argument("generate_scene: need at least one object");
  Rng rng(derive_seed(seed, 0x5ce11e));
  SyntheticScene scene;
  scene.room_min = spec.room_min;
  scene.room_max = spec.room_max;

  const Vec3 room_center = 0.5 * (spec.room_min + spec.room_max);
  int attempts = 0;
  while (static_cast<int>(scene.objects.size()) < spec.num_objects) {
    if (++attempts > spec.max_attempts)
      throw std::runtime_error("generate_scene: could not place requested objects without overlap");
    Primitive p;
    p.kind = rng.uniform() < 0.5 ? PrimitiveKind::Box : PrimitiveKind::Sphere;
    const double s = rng.uniform(spec.min_size, spec.max_size);
    if (p.kind == PrimitiveKind::Box)
      p.half_extent = Vec3(0.5 * rng.uniform(spec.min_size, spec.max_size),
                           0.5 * rng.uniform(spec.min_size, spec.max_size), 0.5 * s);
    else
      p.half_extent = Vec3::Constant(0.5 * s);

    const Vec3 margin = p.aabb_max() - p.center;
    Vec3 lo = spec.room_min + margin + Vec3::Constant(0.05);
    Vec3 hi = spec.room_max - margin - Vec3::Constant(0.05);
    if ((lo.array() >= hi.array()).any()) continue;
    p.center = Vec3(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                    rng.uniform(lo.z(), hi.z()));

    // Keep the orbit path clear (horizontal distance from the room center).
    const Vec3 flat(p.center.x() - room_center.x(), 0, p.center.z() - room_center.z());
    const double clearance = p.kind == PrimitiveKind::Sphere
                                 ? p.radius()
                                 : p.half_extent.head<3>().maxCoeff();
    if (flat.norm() < spec.keep_out_radius + clearance) continue;

    bool overlaps = false;
    for (const auto& other : scene.objects)
      if (aabb_overlap(p.aabb_min(), p.aabb_max(), other.aabb_min(), other.aabb_max())) {
        overlaps = true;
        break;
      }
    if (overlaps) continue;

    p.instance_id = static_cast<int>(scene.objects.size()) + 1;
    p.class_id = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(spec.num_classes - 1)));
    p.albedo = palette_color(rng);
    scene.objects.push_back(p);
  }
  return scene;
}

namespace {

/// Ray r(s) = origin + s * dir against a sphere; returns smallest s > eps.
bool hit_sphere(const Vec3& origin, const Vec3& dir, const Vec3& c, double radius, double& s) {
  const Vec3 oc = origin - c;
  const double a = dir.squaredNorm();
  const double b = 2.0 * oc.dot(dir);
  const double cc = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4 * a * cc;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  double root = (-b - sq) / (2 * a);
  if (root <= 1e-9) root = (-b + sq) / (2 * a);
  if (root <= 1e-9) return false;
  s = root;
  return true;
}

/// Slab test; s_out gets the entry parameter, axis/sign describe the face.
bool hit_aabb(const Vec3& origin, const Vec3& dir, const Vec3& bmin, const Vec3& bmax,
              double& s_out, int& axis, double& sign) {
  double t0 = 1e-9, t1 = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  double enter_sign = 0;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / dir[a];
    double near = (bmin[a] - origin[a]) * inv;
    double far = (bmax[a] - origin[a]) * inv;
    double sgn = -1.0;
    if (near > far) {
      std::swap(near, far);
      sgn = 1.0;
    }
    if (near > t0) {
      t0 = near;
      enter_axis = a;
      enter_sign = sgn;
    }
    t1 = std::min(t1, far);
    if (t0 > t1) return false;
  }
  if (enter_axis < 0) return false;  // origin inside the box
  s_out = t0;
  axis = enter_axis;
  sign = enter_sign;
  return true;
}

/// Exit face of a box the ray starts inside of (the room walls).
bool exit_aabb(const Vec3& origin, const Vec3& dir, const Vec3& bmin, const Vec3& bmax,
               double& s_out, int& axis, double& sign) {
  double t1 = std::numeric_limits<double>::infinity();
  int exit_axis = -1;
  double exit_sign = 0;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / dir[a];
    double near = (bmin[a] - origin[a]) * inv;
    double far = (bmax[a] - origin[a]) * inv;
    double sgn = 1.0;
    if (near > far) {
      std::swap(near, far);
      sgn = -1.0;
    }
    if (far < t1) {
      t1 = far;
      exit_axis = a;
      exit_sign = sgn;
    }
  }
  if (exit_axis < 0 || t1 <= 1e-9) return false;
  s_out = t1;
  axis = exit_axis;
  sign = exit_sign;  // inward-facing normal
  return true;
}

Vec3 shade(const SyntheticScene& scene, const Vec3& albedo, const Vec3& normal, const Vec3& point) {
  const double lambert = std::max(0.0, normal.dot(-scene.light_dir));
  const double tex = 1.0 + scene.texture_amplitude *
                               std::sin(scene.texture_frequency * point.x()) *
                               std::sin(scene.texture_frequency * point.y() + 1.3) *
                               std::sin(scene.texture_frequency * point.z() + 2.1);
  Vec3 c = albedo * (0.45 + 0.55 * lambert) * tex;
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

RayHit cast_ray(const SyntheticScene& scene, const CameraPose& pose, const Intrinsics& intr,
                double u, double v) {
  const Mat3 rot_wc = pose.rotation().transpose();
  const Vec3 origin = pose.center();
  // Unnormalized direction with unit camera-z so the ray parameter equals the
  // camera-frame z-depth.
  const Vec3 dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  const Vec3 dir = rot_wc * dir_cam;

  RayHit best;
  best.depth = std::numeric_limits<double>::infinity();

  double s;
  int axis;
  double sign;
  if (exit_aabb(origin, dir, scene.room_min, scene.room_max, s, axis, sign)) {
    best.depth = s;
    best.instance = 0;
    best.normal = Vec3::Zero();
    best.normal[axis] = sign;
    best.point = origin + s * dir;
  }
  for (const auto& obj : scene.objects) {
    if (obj.kind == PrimitiveKind::Sphere) {
      if (hit_sphere(origin, dir, obj.center, obj.radius(), s) && s < best.depth) {
        best.depth = s;
        best.instance = obj.instance_id;
        best.point = origin + s * dir;
        best.normal = (best.point - obj.center).normalized();
      }
    } else {
      if (hit_aabb(origin, dir, obj.aabb_min(), obj.aabb_max(), s, axis, sign) &&
          s < best.depth) {
        best.depth = s;
        best.instance = obj.instance_id;
        best.point = origin + s * dir;
        best.normal = Vec3::Zero();
        best.normal[axis] = sign;
      }
    }
  }
  if (!std::isfinite(best.depth)) best.instance = -1;
  return best;
}

Frame render_ground_truth(const SyntheticScene& scene, const CameraPose& pose,
                          const Intrinsics& intr, int frame_index) {
  Frame frame;
  frame.index = frame_index;
  frame.color = make_color_image(intr.width, intr.height);
  frame.depth = DepthImage(intr.width, intr.height);
  PanopticLabels gt;
  gt.instances = LabelImage(intr.width, intr.height, -1);
  gt.instance_classes.resize(scene.num_instances());
  for (int i = 0; i < scene.num_instances(); ++i) gt.instance_classes[i] = scene.instance_class(i);

  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const RayHit hit = cast_ray(scene, pose, intr, x, y);
      if (hit.instance < 0) continue;  // far-plane miss: depth 0, void label
      const Vec3 albedo =
          hit.instance == 0 ? Vec3(0.62, 0.60, 0.58) : scene.objects[hit.instance - 1].albedo;
      Vec3 c = shade(scene, albedo, hit.normal, hit.point);
      // Quantize to the on-disk precision at the source.
      for (int k = 0; k < 3; ++k)
        c[k] = std::round(c[k] * 255.0) / 255.0;
      frame.color(x, y) = c;
      frame.depth(x, y) = static_cast<double>(static_cast<float>(hit.depth));
      gt.instances(x, y) = hit.instance;
    }
  frame.gt_panoptic = std::move(gt);
  return frame;
}

PseudoLabels corrupt_labels(const PanopticLabels& gt, int num_classes, const NoiseConfig& cfg,
                            uint64_t view_tag) {
  Rng rng(derive_seed(cfg.seed, 0xc0441e, view_tag));
  const int w = gt.instances.width(), h = gt.instances.height();

  // View-local region index space: instances present in this view, in
  // ascending instance-id order, then optionally permuted per view.
  std::vector<int> present;
  for (int32_t id : gt.instances)
    if (id >= 0 && (present.empty() || std::find(present.begin(), present.end(), id) == present.end()))
      present.push_back(id);
  std::sort(present.begin(), present.end());

  std::vector<int> region_of_instance(gt.instance_classes.size(), -1);
  std::vector<int> instance_of_region(present.size());
  std::vector<int> slots(present.size());
  for (size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
  if (cfg.permute_instances) rng.shuffle(slots);
  for (size_t i = 0; i < present.size(); ++i) {
    region_of_instance[present[i]] = slots[i];
    instance_of_region[slots[i]] = present[i];
  }

  PseudoLabels out;
  out.regions = LabelImage(w, h, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int32_t id = gt.instances(x, y);
      out.regions(x, y) = id >= 0 ? region_of_instance[id] : -1;
    }

  // Boundary jitter: a pixel whose neighborhood (Chebyshev radius) contains a
  // different label gets a label resampled uniformly from that neighborhood.
  if (cfg.boundary_radius_px > 0) {
    const LabelImage source = out.regions;
    const int r = cfg.boundary_radius_px;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int32_t own = source(x, y);
        std::vector<int32_t> neighborhood;
        bool mixed = false;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const int32_t lab = source(nx, ny);
            neighborhood.push_back(lab);
            mixed = mixed || lab != own;
          }
        if (mixed)
          out.regions(x, y) = neighborhood[rng.below(neighborhood.size())];
      }
  }

  // Per-region class distribution: one-hot at the (possibly flipped) class.
  out.region_classes = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(present.size()), num_classes);
  for (size_t slot = 0; slot < present.size(); ++slot) {
    int cls = gt.instance_classes[instance_of_region[slot]];
    if (cfg.class_flip_rate > 0 && rng.uniform() < cfg.class_flip_rate) {
      const int offset = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(num_classes - 1)));
      cls = (cls + offset) % num_classes;
    }
    out.region_classes(static_cast<Eigen::Index>(slot), cls) = 1.0;
  }
  return out;
}

CameraPose look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& world_up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(world_up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3(1, 0, 0));
  right.normalize();
  const Vec3 down = forward.cross(right);  // camera y points down in image space

  Mat3 rot_wc;  // camera-to-world, columns are camera axes in world frame
  rot_wc.col(0) = right;
  rot_wc.col(1) = down;
  rot_wc.col(2) = forward;
  const Mat3 rot = rot_wc.transpose();  // world-to-camera

  // Rotation matrix to quaternion (Shepperd's method).
  Vec4 q;
  const double tr = rot.trace();
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2;
    q = Vec4(0.25 * s, (rot(2, 1) - rot(1, 2)) / s, (rot(0, 2) - rot(2, 0)) / s,
             (rot(1, 0) - rot(0, 1)) / s);
  } else if (rot(0, 0) > rot(1, 1) && rot(0, 0) > rot(2, 2)) {
    double s = std::sqrt(1.0 + rot(0, 0) - rot(1, 1) - rot(2, 2)) * 2;
    q = Vec4((rot(2, 1) - rot(1, 2)) / s, 0.25 * s, (rot(0, 1) + rot(1, 0)) / s,
             (rot(0, 2) + rot(2, 0)) / s);
  } else if (rot(1, 1) > rot(2, 2)) {
    double s = std::sqrt(1.0 + rot(1, 1) - rot(0, 0) - rot(2, 2)) * 2;
    q = Vec4((rot(0, 2) - rot(2, 0)) / s, (rot(0, 1) + rot(1, 0)) / s, 0.25 * s,
             (rot(1, 2) + rot(2, 1)) / s);
  } else {
    double s = std::sqrt(1.0 + rot(2, 2) - rot(0, 0) - rot(1, 1)) * 2;
    q = Vec4((rot(1, 0) - rot(0, 1)) / s, (rot(0, 2) + rot(2, 0)) / s,
             (rot(1, 2) + rot(2, 1)) / s, 0.25 * s);
  }
  return CameraPose(q, rot * -eye);
}

std::vector<CameraPose> generate_trajectory(const TrajectorySpec& spec, uint64_t seed) {
  if (spec.frames < 1) throw std::invalid_argument("generate_trajectory: need frames >= 1");
  std::vector<CameraPose> poses;
  poses.reserve(spec.frames);
  Rng rng(derive_seed(seed, 0x7ca1));

  switch (spec.motion) {
    case MotionType::Orbit: {
      const double arc = spec.orbit_arc_deg * M_PI / 180.0;
      for (int t = 0; t < spec.frames; ++t) {
        const double a = spec.frames == 1 ? 0.0 : arc * t / (spec.frames - 1);
        const Vec3 eye(spec.orbit_radius * std::sin(a), spec.orbit_height,
                       -spec.orbit_radius * std::cos(a));
        poses.push_back(look_at_pose(eye + spec.look_at, spec.look_at));
      }
      break;
    }
    case MotionType::Lateral: {
      for (int t = 0; t < spec.frames; ++t) {
        const double x = spec.frames == 1
                             ? 0.0
                             : -spec.lateral_extent / 2 + spec.lateral_extent * t / (spec.frames - 1);
        const Vec3 eye(x, spec.orbit_height, -spec.orbit_radius);
        poses.push_back(look_at_pose(eye + spec.look_at, spec.look_at));
      }
      break;
    }
    case MotionType::RandomWalk: {
      Vec3 eye(0, spec.orbit_height, -spec.orbit_radius);
      for (int t = 0; t < spec.frames; ++t) {
        poses.push_back(look_at_pose(eye + spec.look_at, spec.look_at));
        Vec3 step(rng.uniform(-1, 1), 0.3 * rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (step.norm() > 1e-9) step = step.normalized() * spec.max_step * rng.uniform();
        eye += step;
        // Stay on the orbit annulus so the walk never drifts into geometry.
        Vec3 flat(eye.x(), 0, eye.z());
        const double rad = flat.norm();
        if (rad > 1e-9) {
          const double clamped = std::clamp(rad, 0.8 * spec.orbit_radius, 1.2 * spec.orbit_radius);
          eye.x() *= clamped / rad;
          eye.z() *= clamped / rad;
        }
      }
      break;
    }
  }
  return poses;
}

}  // namespace panoslam
