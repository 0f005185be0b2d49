#include "panoslam/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "panoslam/io.hpp"
#include "panoslam/random.hpp"

namespace panoslam {

namespace {
constexpr uint64_t kKeyframeSubsampleTag = 0x6b66;  // per-frame stream tags
}

SlamSession::SlamSession(const Intrinsics& intr, const SlamConfig& cfg)
    : intr_(intr), cfg_(cfg) {
  intr_.validate();
  head_ = PanopticHead::create(cfg.head.num_regions, cfg.head.num_classes, cfg.head.hidden,
                               derive_seed(cfg.seed, 0x4ead));
}

std::vector<int> SlamSession::keyframe_indices() const {
  std::vector<int> idx;
  idx.reserve(keyframes_.size());
  for (const auto& kf : keyframes_) idx.push_back(kf.frame.index);
  return idx;
}

FrameReport SlamSession::run_mapping(const Frame& frame, const CameraPose& pose,
                                     FrameReport report) {
  const int t = frame.index;
  const bool warmup = t < cfg_.mapping.warmup_frames;
  const bool panoptic_on =
      frame.pseudo.has_value() && (!warmup || cfg_.mapping.panoptic_in_warmup);

  // Assemble the optimization window: best-overlap keyframes plus this frame.
  std::vector<WindowMember> candidates;
  candidates.reserve(keyframes_.size());
  for (const auto& kf : keyframes_)
    if (kf.frame.index != t) candidates.push_back({kf.frame.index, &kf.frame, kf.pose});
  const WindowMember current{t, &frame, pose};
  const std::vector<WindowMember> window =
      select_keyframes(current, candidates, intr_, cfg_.mapping.window_size,
                       cfg_.mapping.keyframe_subsample,
                       derive_seed(cfg_.seed, kKeyframeSubsampleTag, static_cast<uint64_t>(t)));

  WindowTargets targets;
  if (panoptic_on) {
    targets = prepare_window_targets(window, map_, head_, intr_, cfg_.mapping,
                                     cfg_.mapping.stl_enabled);
    report.stl_groups = static_cast<int64_t>(targets.stl_groups);
  }

  const int iterations = warmup ? cfg_.mapping.warmup_iterations : cfg_.mapping.iterations_per_frame;
  for (int it = 0; it < iterations; ++it) {
    const MapStepResult step =
        map_update_step(map_, head_, optimizer_, window, targets, intr_, cfg_.mapping, panoptic_on);
    if (step.status == MapStepStatus::RejectedNonFinite) ++report.map_rejections;
    report.map_loss = step.loss.total;
    report.matched_regions = static_cast<int64_t>(step.loss.matched_regions);
  }
  report.gaussians = static_cast<int64_t>(map_.size());
  return report;
}

FrameReport SlamSession::process_frame(const Frame& frame) {
  if (frame.index != frames_processed_)
    throw std::invalid_argument("process_frame: frames must arrive in stream order");
  frame.validate(intr_);
  FrameReport report;
  report.index = frame.index;

  CameraPose pose;
  if (frame.index == 0) {
    map_ = init_map_from_first_frame(frame, intr_);
    pose_history_.push_back(pose);
    report = run_mapping(frame, pose, report);
  } else {
    const CameraPose& curr = pose_history_.back();
    const CameraPose& prev = pose_history_.size() >= 2 ? pose_history_[pose_history_.size() - 2] : curr;
    const CameraPose init =
        init_pose_constant_velocity(prev, curr, cfg_.tracking.geodesic_velocity);
    const TrackResult tracked = track_frame(map_, frame, init, intr_, cfg_.tracking);
    pose = tracked.pose;
    report.track_status = static_cast<int>(tracked.status);
    report.track_loss = tracked.loss;
    report.track_iterations = tracked.iterations_run;
    pose_history_.push_back(pose);

    const RenderOutput rendered = render(map_, pose, intr_, /*retain=*/false);
    const Image<uint8_t> mask = densification_mask(rendered, frame, cfg_.mapping);
    report.densified = static_cast<int64_t>(densify(map_, frame, mask, pose, intr_));
    optimizer_.ensure_map_size(map_.size());

    report = run_mapping(frame, pose, report);
  }

  if (frame.index % cfg_.mapping.keyframe_interval == 0)
    keyframes_.push_back({frame, pose});
  ++frames_processed_;
  reports_.push_back(report);
  return report;
}

RenderOutput SlamSession::render_view(const CameraPose& pose) const {
  return render(map_, pose, intr_, /*retain=*/false);
}

PanopticSegmentation SlamSession::infer_panoptic(const RenderOutput& rendered) const {
  Eigen::MatrixXd sem(static_cast<Eigen::Index>(rendered.semantic.size()), 3);
  for (size_t i = 0; i < rendered.semantic.size(); ++i)
    sem.row(static_cast<Eigen::Index>(i)) = rendered.semantic[i];
  const RegionLogitsResult logits = region_logits(sem, head_);
  return panoptic_inference(logits.logits, rendered.width, rendered.height,
                            classify_regions_full(head_), cfg_.thresholds);
}

void write_frame_reports(const std::filesystem::path& path,
                         const std::vector<FrameReport>& reports) {
  std::string out = "panoslam_run_log 1\n";
  char line[512];
  for (const FrameReport& r : reports) {
    std::snprintf(line, sizeof(line),
                  "frame %d track_status %d track_loss %.17g track_iters %d map_loss %.17g "
                  "rejections %d gaussians %" PRId64 " densified %" PRId64 " stl_groups %" PRId64
                  " matched %" PRId64 "\n",
                  r.index, r.track_status, r.track_loss, r.track_iterations, r.map_loss,
                  r.map_rejections, r.gaussians, r.densified, r.stl_groups, r.matched_regions);
    out += line;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void SlamSession::export_results(const std::filesystem::path& dir) const {
  if (frames_processed_ == 0) throw std::logic_error("export_results: no frames processed");
  std::filesystem::create_directories(dir);
  write_trajectory(dir / "trajectory_est.txt", pose_history_);
  write_frame_reports(dir / "metrics.txt", reports_);

  std::string kf_list = "panoslam_keyframes 1\n";
  for (const auto& kf : keyframes_) {
    const int idx = kf.frame.index;
    char stem[32];
    std::snprintf(stem, sizeof(stem), "kf_%05d", idx);
    const RenderOutput rendered = render_view(kf.pose);
    write_ppm(dir / (std::string(stem) + ".color.ppm"), rendered.color);
    write_f32_raster(dir / (std::string(stem) + ".depth.f32"), rendered.depth);
    const PanopticSegmentation seg = infer_panoptic(rendered);
    PanopticLabels labels;
    labels.instances = seg.segment_ids;
    labels.instance_classes.reserve(seg.segments.size());
    for (const Segment& s : seg.segments) labels.instance_classes.push_back(s.class_id);
    write_panoptic_raster(dir / (std::string(stem) + ".panoptic.u32"), labels);
    kf_list += "keyframe " + std::to_string(idx) + "\n";
  }
  std::ofstream f(dir / "keyframes.txt", std::ios::binary | std::ios::trunc);
  f.write(kf_list.data(), static_cast<std::streamsize>(kf_list.size()));
}

// ---- checkpointing -----------------------------------------------------------

namespace {

constexpr uint32_t kCheckpointMagic = 0x4b435350;  // "PSCK"
constexpr uint32_t kCheckpointVersion = 1;

void put_pose(BinaryWriter& w, const CameraPose& p) {
  w.doubles(p.quat().data(), 4);
  w.doubles(p.translation().data(), 3);
}

CameraPose get_pose(BinaryReader& r) {
  Vec4 q;
  Vec3 t;
  r.doubles(q.data(), 4);
  r.doubles(t.data(), 3);
  return CameraPose(q, t);
}

void put_matrix(BinaryWriter& w, const Eigen::MatrixXd& m) {
  w.i64(m.rows());
  w.i64(m.cols());
  w.doubles(m.data(), static_cast<size_t>(m.size()));
}

Eigen::MatrixXd get_matrix(BinaryReader& r) {
  const int64_t rows = r.i64(), cols = r.i64();
  Eigen::MatrixXd m(rows, cols);
  r.doubles(m.data(), static_cast<size_t>(m.size()));
  return m;
}

void put_vector(BinaryWriter& w, const Eigen::VectorXd& v) {
  w.i64(v.size());
  w.doubles(v.data(), static_cast<size_t>(v.size()));
}

Eigen::VectorXd get_vector(BinaryReader& r) {
  Eigen::VectorXd v(r.i64());
  r.doubles(v.data(), static_cast<size_t>(v.size()));
  return v;
}

void put_adam(BinaryWriter& w, const AdamState& s) {
  w.i64(s.steps());
  w.i64(static_cast<int64_t>(s.size()));
  w.doubles(s.moment1().data(), s.size());
  w.doubles(s.moment2().data(), s.size());
}

void get_adam(BinaryReader& r, AdamState& s) {
  s.set_steps(r.i64());
  const size_t n = static_cast<size_t>(r.i64());
  s.resize(n);
  r.doubles(s.moment1().data(), n);
  r.doubles(s.moment2().data(), n);
}

}  // namespace

void SlamSession::save_checkpoint(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);

  // Intrinsics + config (numeric fields only, in a fixed order).
  w.f64(intr_.fx); w.f64(intr_.fy); w.f64(intr_.cx); w.f64(intr_.cy);
  w.i64(intr_.width); w.i64(intr_.height);

  const TrackingConfig& tc = cfg_.tracking;
  w.i64(tc.iterations); w.f64(tc.lr_rotation); w.f64(tc.lr_translation);
  w.f64(tc.silhouette_threshold); w.f64(tc.convergence_tol);
  w.f64(tc.lambda_color); w.f64(tc.lambda_depth); w.i64(tc.geodesic_velocity ? 1 : 0);

  const MappingConfig& mc = cfg_.mapping;
  w.f64(mc.lambda_color); w.f64(mc.lambda_depth); w.f64(mc.lambda_ce);
  w.f64(mc.lambda_dice); w.f64(mc.lambda_focal); w.f64(mc.depth_error_factor);
  w.i64(mc.keyframe_interval); w.i64(mc.window_size); w.i64(mc.iterations_per_frame);
  w.i64(mc.warmup_iterations); w.i64(mc.warmup_frames);
  w.f64(mc.lr_centers); w.f64(mc.lr_colors); w.f64(mc.lr_radii); w.f64(mc.lr_opacities);
  w.f64(mc.lr_head); w.f64(mc.focal_alpha); w.f64(mc.focal_gamma); w.f64(mc.no_object_weight);
  w.f64(mc.stl_voxel_size); w.i64(mc.stl_enabled ? 1 : 0); w.i64(mc.panoptic_in_warmup ? 1 : 0);
  w.i64(mc.keyframe_subsample);

  w.i64(cfg_.head.num_regions); w.i64(cfg_.head.num_classes); w.i64(cfg_.head.hidden);
  w.f64(cfg_.thresholds.class_confidence); w.f64(cfg_.thresholds.keep_fraction);
  w.i64(static_cast<int64_t>(cfg_.seed));

  w.i64(frames_processed_);
  w.i64(static_cast<int64_t>(pose_history_.size()));
  for (const CameraPose& p : pose_history_) put_pose(w, p);

  w.i64(static_cast<int64_t>(keyframes_.size()));
  for (const auto& kf : keyframes_) {
    w.i64(kf.frame.index);
    put_pose(w, kf.pose);
  }

  w.i64(static_cast<int64_t>(map_.size()));
  for (size_t i = 0; i < map_.size(); ++i) {
    const SemanticGaussian& g = map_.gaussians[i];
    w.doubles(g.color.data(), 3);
    w.doubles(g.center.data(), 3);
    w.f64(g.radius);
    w.f64(g.opacity);
    w.doubles(g.semantic.data(), 3);
    w.f64(g.sem_radius);
    w.f64(g.sem_opacity);
    w.i64(map_.creation_frame[i]);
  }

  put_matrix(w, head_.region_embeddings);
  put_matrix(w, head_.classifier);
  put_matrix(w, head_.gamma.w1);
  put_vector(w, head_.gamma.b1);
  put_matrix(w, head_.gamma.w2);
  put_vector(w, head_.gamma.b2);

  w.f64(optimizer_.lr_scale());
  for (const AdamState* s : optimizer_.map_states()) put_adam(w, *s);
  for (const AdamState* s : optimizer_.head_states()) put_adam(w, *s);

  w.i64(static_cast<int64_t>(reports_.size()));
  for (const FrameReport& r : reports_) {
    w.i64(r.index); w.i64(r.track_status); w.f64(r.track_loss); w.i64(r.track_iterations);
    w.f64(r.map_loss); w.i64(r.map_rejections); w.i64(r.gaussians); w.i64(r.densified);
    w.i64(r.stl_groups); w.i64(r.matched_regions);
  }
  w.close();
}

std::unique_ptr<SlamSession> SlamSession::load_checkpoint(const std::filesystem::path& path,
                                                          const std::vector<Frame>& all_frames) {
  BinaryReader r(path);
  if (r.u32() != kCheckpointMagic) throw IoError("not a checkpoint: " + path.string());
  if (r.u32() != kCheckpointVersion) throw IoError("unsupported checkpoint version");

  Intrinsics intr;
  intr.fx = r.f64(); intr.fy = r.f64(); intr.cx = r.f64(); intr.cy = r.f64();
  intr.width = static_cast<int>(r.i64()); intr.height = static_cast<int>(r.i64());

  SlamConfig cfg;
  TrackingConfig& tc = cfg.tracking;
  tc.iterations = static_cast<int>(r.i64()); tc.lr_rotation = r.f64(); tc.lr_translation = r.f64();
  tc.silhouette_threshold = r.f64(); tc.convergence_tol = r.f64();
  tc.lambda_color = r.f64(); tc.lambda_depth = r.f64(); tc.geodesic_velocity = r.i64() != 0;

  MappingConfig& mc = cfg.mapping;
  mc.lambda_color = r.f64(); mc.lambda_depth = r.f64(); mc.lambda_ce = r.f64();
  mc.lambda_dice = r.f64(); mc.lambda_focal = r.f64(); mc.depth_error_factor = r.f64();
  mc.keyframe_interval = static_cast<int>(r.i64()); mc.window_size = static_cast<int>(r.i64());
  mc.iterations_per_frame = static_cast<int>(r.i64());
  mc.warmup_iterations = static_cast<int>(r.i64()); mc.warmup_frames = static_cast<int>(r.i64());
  mc.lr_centers = r.f64(); mc.lr_colors = r.f64(); mc.lr_radii = r.f64();
  mc.lr_opacities = r.f64(); mc.lr_head = r.f64(); mc.focal_alpha = r.f64();
  mc.focal_gamma = r.f64(); mc.no_object_weight = r.f64(); mc.stl_voxel_size = r.f64();
  mc.stl_enabled = r.i64() != 0; mc.panoptic_in_warmup = r.i64() != 0;
  mc.keyframe_subsample = static_cast<int>(r.i64());

  cfg.head.num_regions = static_cast<int>(r.i64());
  cfg.head.num_classes = static_cast<int>(r.i64());
  cfg.head.hidden = static_cast<int>(r.i64());
  cfg.thresholds.class_confidence = r.f64();
  cfg.thresholds.keep_fraction = r.f64();
  cfg.seed = static_cast<uint64_t>(r.i64());

  auto session = std::make_unique<SlamSession>(intr, cfg);
  session->frames_processed_ = static_cast<int>(r.i64());

  const int64_t n_poses = r.i64();
  session->pose_history_.clear();
  for (int64_t i = 0; i < n_poses; ++i) session->pose_history_.push_back(get_pose(r));

  const int64_t n_kf = r.i64();
  session->keyframes_.clear();
  for (int64_t i = 0; i < n_kf; ++i) {
    const int64_t idx = r.i64();
    const CameraPose pose = get_pose(r);
    if (idx < 0 || idx >= static_cast<int64_t>(all_frames.size()))
      throw IoError("checkpoint keyframe index outside the provided sequence");
    session->keyframes_.push_back({all_frames[static_cast<size_t>(idx)], pose});
  }

  const int64_t n_gauss = r.i64();
  session->map_.gaussians.resize(static_cast<size_t>(n_gauss));
  session->map_.creation_frame.resize(static_cast<size_t>(n_gauss));
  for (int64_t i = 0; i < n_gauss; ++i) {
    SemanticGaussian& g = session->map_.gaussians[static_cast<size_t>(i)];
    r.doubles(g.color.data(), 3);
    r.doubles(g.center.data(), 3);
    g.radius = r.f64();
    g.opacity = r.f64();
    r.doubles(g.semantic.data(), 3);
    g.sem_radius = r.f64();
    g.sem_opacity = r.f64();
    session->map_.creation_frame[static_cast<size_t>(i)] = static_cast<int32_t>(r.i64());
  }

  session->head_.region_embeddings = get_matrix(r);
  session->head_.classifier = get_matrix(r);
  session->head_.gamma.w1 = get_matrix(r);
  session->head_.gamma.b1 = get_vector(r);
  session->head_.gamma.w2 = get_matrix(r);
  session->head_.gamma.b2 = get_vector(r);

  session->optimizer_.set_lr_scale(r.f64());
  for (AdamState* s : session->optimizer_.map_states()) get_adam(r, *s);
  for (AdamState* s : session->optimizer_.head_states()) get_adam(r, *s);

  const int64_t n_reports = r.i64();
  session->reports_.clear();
  for (int64_t i = 0; i < n_reports; ++i) {
    FrameReport rep;
    rep.index = static_cast<int>(r.i64());
    rep.track_status = static_cast<int>(r.i64());
    rep.track_loss = r.f64();
    rep.track_iterations = static_cast<int>(r.i64());
    rep.map_loss = r.f64();
    rep.map_rejections = static_cast<int>(r.i64());
    rep.gaussians = r.i64();
    rep.densified = r.i64();
    rep.stl_groups = r.i64();
    rep.matched_regions = r.i64();
    session->reports_.push_back(rep);
  }
  return session;
}

}  // namespace panoslam
