#include "panoslam/runner.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace panoslam {

namespace fs = std::filesystem;

SequenceData generate_sequence(const GenerateOptions& opt) {
  const SyntheticScene scene = generate_scene(opt.scene, opt.seed);
  TrajectorySpec traj_spec = opt.trajectory;
  traj_spec.look_at = 0.5 * (scene.room_min + scene.room_max);
  const std::vector<CameraPose> poses = generate_trajectory(traj_spec, opt.seed);

  SequenceData seq;
  seq.intr = opt.intr;
  seq.gt_poses = poses;
  seq.frames.reserve(poses.size());
  for (size_t t = 0; t < poses.size(); ++t) {
    Frame frame = render_ground_truth(scene, poses[t], opt.intr, static_cast<int>(t));
    if (opt.with_pseudo) {
      NoiseConfig noise = opt.noise;
      noise.seed = derive_seed(opt.seed, 0x9015e, noise.seed);
      frame.pseudo = corrupt_labels(*frame.gt_panoptic, opt.scene.num_classes, noise, t);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void generate_to_dir(const GenerateOptions& opt, const fs::path& dir) {
  write_sequence(generate_sequence(opt), dir);
}

std::unique_ptr<SlamSession> run_slam(const SequenceData& seq, const SlamOptions& opt,
                                      const fs::path& out_dir) {
  std::unique_ptr<SlamSession> session;
  if (opt.resume_from)
    session = SlamSession::load_checkpoint(*opt.resume_from, seq.frames);
  else
    session = std::make_unique<SlamSession>(seq.intr, opt.config);

  const int total = opt.stop_after >= 0
                        ? std::min<int>(opt.stop_after, static_cast<int>(seq.frames.size()))
                        : static_cast<int>(seq.frames.size());
  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (int t = session->frames_processed(); t < total; ++t) {
    session->process_frame(seq.frames[t]);
    if (opt.verbose)
      std::fprintf(stderr, "frame %d/%d gaussians %lld\n", t + 1, total,
                   static_cast<long long>(session->map().size()));
    if (!out_dir.empty() && opt.checkpoint_every > 0 &&
        (t + 1) % opt.checkpoint_every == 0 && t + 1 < total) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%05d.bin", t + 1);
      session->save_checkpoint(out_dir / name);
    }
  }
  if (!out_dir.empty()) {
    session->export_results(out_dir);
    session->save_checkpoint(out_dir / "checkpoint_final.bin");
    write_slam_config(out_dir / "config_used.txt", session->config());
  }
  return session;
}

namespace {

struct PooledEval {
  double mse_sum = 0;
  size_t mse_count = 0;
  double ssim_sum = 0, depth_sum = 0;
  int frames = 0;
  int64_t tp = 0, fp = 0, fn = 0;
  double iou_sum = 0;
  // Pooled semantic confusion for mIoU.
  std::map<int, std::array<int64_t, 3>> confusion;  // class -> tp, fp, fn

  void add_frame(const ColorImage& color, const DepthImage& depth,
                 const PanopticSegmentation& pred, const Frame& gt,
                 EvalReport::PerKeyframe& kf, int num_classes) {
    double mse = 0;
    for (size_t i = 0; i < color.size(); ++i) mse += (color[i] - gt.color[i]).squaredNorm();
    mse_sum += mse;
    mse_count += color.size() * 3;
    kf.psnr_db = psnr_db(color, gt.color);
    kf.ssim_value = ssim(color, gt.color);
    kf.depth_l1_cm = depth_l1_cm(depth, gt.depth);
    ssim_sum += kf.ssim_value;
    depth_sum += kf.depth_l1_cm;
    ++frames;

    const PanopticSegmentation gt_seg = segmentation_from_labels(*gt.gt_panoptic);
    const PanopticQuality q = panoptic_quality(pred, gt_seg);
    kf.pq = q.pq;
    kf.sq = q.sq;
    kf.rq = q.rq;
    tp += q.true_positives;
    fp += q.false_positives;
    fn += q.false_negatives;
    iou_sum += q.iou_sum;

    const LabelImage pred_classes = class_raster(pred);
    const LabelImage gt_classes = semantic_raster(*gt.gt_panoptic);
    kf.miou_percent = miou_percent(pred_classes, gt_classes, num_classes);
    for (size_t i = 0; i < gt_classes.size(); ++i) {
      const int32_t g = gt_classes[i];
      if (g < 0) continue;
      const int32_t p = pred_classes[i];
      if (p == g) {
        ++confusion[g][0];
      } else {
        ++confusion[g][2];
        if (p >= 0) ++confusion[p][1];
      }
    }
  }

  void finish(EvalReport& report) {
    report.psnr_db = mse_count == 0 || mse_sum == 0
                         ? std::numeric_limits<double>::infinity()
                         : 10.0 * std::log10(1.0 / (mse_sum / static_cast<double>(mse_count)));
    if (frames > 0) {
      report.ssim_value = ssim_sum / frames;
      report.depth_l1_cm = depth_sum / frames;
    }
    const double denom = tp + 0.5 * fp + 0.5 * fn;
    report.sq = tp == 0 ? 0.0 : 100.0 * iou_sum / static_cast<double>(tp);
    report.rq = denom == 0 ? 0.0 : 100.0 * static_cast<double>(tp) / denom;
    report.pq = report.sq * report.rq / 100.0;

    double iou_acc = 0;
    int classes = 0;
    for (const auto& [cls, c] : confusion) {
      const int64_t gt_present = c[0] + c[2];
      if (gt_present == 0) continue;  // class only predicted, never in gt
      ++classes;
      const int64_t d = c[0] + c[1] + c[2];
      if (d > 0) iou_acc += static_cast<double>(c[0]) / static_cast<double>(d);
    }
    report.miou_percent = classes == 0 ? 0.0 : 100.0 * iou_acc / classes;
  }
};

}  // namespace

EvalReport evaluate_session(const SlamSession& session, const SequenceData& gt) {
  EvalReport report;
  if (!gt.gt_poses) throw std::invalid_argument("evaluate_session: sequence lacks gt poses");
  std::vector<CameraPose> gt_traj(gt.gt_poses->begin(),
                                  gt.gt_poses->begin() + session.trajectory().size());
  report.ate_rmse_cm = ate_rmse_cm(session.trajectory(), gt_traj);

  PooledEval pool;
  for (int idx : session.keyframe_indices()) {
    const RenderOutput rendered = session.render_view(session.pose_of(idx));
    const PanopticSegmentation pred = session.infer_panoptic(rendered);
    EvalReport::PerKeyframe kf;
    kf.index = idx;
    pool.add_frame(rendered.color, rendered.depth, pred, gt.frames[idx], kf,
                   session.config().head.num_classes);
    report.keyframes.push_back(kf);
  }
  pool.finish(report);
  return report;
}

EvalReport evaluate_results(const SequenceData& gt, const fs::path& results_dir) {
  EvalReport report;
  if (!gt.gt_poses) throw std::invalid_argument("evaluate_results: sequence lacks gt poses");

  const std::vector<CameraPose> est = read_trajectory(results_dir / "trajectory_est.txt");
  if (est.size() > gt.gt_poses->size())
    throw IoError("estimated trajectory longer than ground truth (" +
                  std::to_string(est.size()) + " vs " + std::to_string(gt.gt_poses->size()) + ")");
  const std::vector<CameraPose> gt_traj(gt.gt_poses->begin(), gt.gt_poses->begin() + est.size());
  report.ate_rmse_cm = ate_rmse_cm(est, gt_traj);

  std::ifstream kf_in(results_dir / "keyframes.txt");
  if (!kf_in) throw IoError("missing keyframes.txt in " + results_dir.string());
  std::string line;
  std::vector<int> kf_indices;
  while (std::getline(kf_in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "keyframe") {
      int idx;
      ls >> idx;
      kf_indices.push_back(idx);
    }
  }

  // Infer the class count from the gt annotations.
  int num_classes = 0;
  for (const Frame& f : gt.frames)
    if (f.gt_panoptic)
      for (int c : f.gt_panoptic->instance_classes) num_classes = std::max(num_classes, c + 1);

  PooledEval pool;
  for (int idx : kf_indices) {
    if (idx < 0 || idx >= static_cast<int>(gt.frames.size()))
      throw IoError("keyframe index outside ground-truth sequence");
    char stem[32];
    std::snprintf(stem, sizeof(stem), "kf_%05d", idx);
    const ColorImage color = read_ppm(results_dir / (std::string(stem) + ".color.ppm"));
    const DepthImage depth =
        read_f32_raster(results_dir / (std::string(stem) + ".depth.f32"), gt.intr.width,
                        gt.intr.height);
    const PanopticLabels labels = read_panoptic_raster(
        results_dir / (std::string(stem) + ".panoptic.u32"), gt.intr.width, gt.intr.height);
    EvalReport::PerKeyframe kf;
    kf.index = idx;
    pool.add_frame(color, depth, segmentation_from_labels(labels), gt.frames[idx], kf,
                   num_classes);
    report.keyframes.push_back(kf);
  }
  pool.finish(report);
  return report;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

void write_eval_report(const fs::path& path, const EvalReport& r) {
  std::string out = "panoslam_eval_report 1\n";
  out += "ate_rmse_cm " + fmt(r.ate_rmse_cm) + "\n";
  out += "depth_l1_cm " + fmt(r.depth_l1_cm) + "\n";
  out += "psnr_db " + fmt(r.psnr_db) + "\n";
  out += "ssim " + fmt(r.ssim_value) + "\n";
  out += "miou_percent " + fmt(r.miou_percent) + "\n";
  out += "pq " + fmt(r.pq) + "\n";
  out += "sq " + fmt(r.sq) + "\n";
  out += "rq " + fmt(r.rq) + "\n";
  for (const auto& kf : r.keyframes) {
    out += "keyframe " + std::to_string(kf.index) + " psnr_db " + fmt(kf.psnr_db) + " ssim " +
           fmt(kf.ssim_value) + " depth_l1_cm " + fmt(kf.depth_l1_cm) + " miou_percent " +
           fmt(kf.miou_percent) + " pq " + fmt(kf.pq) + " sq " + fmt(kf.sq) + " rq " +
           fmt(kf.rq) + "\n";
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

EvalReport read_eval_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  EvalReport r;
  std::string line;
  bool have_magic = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key;
    if (key == "panoslam_eval_report") {
      have_magic = true;
    } else if (key == "keyframe") {
      EvalReport::PerKeyframe kf;
      ls >> kf.index;
      std::string k, v;
      while (ls >> k >> v) {
        const double d = parse_double(v);
        if (k == "psnr_db") kf.psnr_db = d;
        else if (k == "ssim") kf.ssim_value = d;
        else if (k == "depth_l1_cm") kf.depth_l1_cm = d;
        else if (k == "miou_percent") kf.miou_percent = d;
        else if (k == "pq") kf.pq = d;
        else if (k == "sq") kf.sq = d;
        else if (k == "rq") kf.rq = d;
        else throw IoError("unknown keyframe metric: " + k);
      }
      r.keyframes.push_back(kf);
    } else {
      ls >> value;
      const double d = parse_double(value);
      if (key == "ate_rmse_cm") r.ate_rmse_cm = d;
      else if (key == "depth_l1_cm") r.depth_l1_cm = d;
      else if (key == "psnr_db") r.psnr_db = d;
      else if (key == "ssim") r.ssim_value = d;
      else if (key == "miou_percent") r.miou_percent = d;
      else if (key == "pq") r.pq = d;
      else if (key == "sq") r.sq = d;
      else if (key == "rq") r.rq = d;
      else throw IoError("unknown report key: " + key);
    }
  }
  if (!have_magic) throw IoError("missing report schema line in " + path.string());
  return r;
}

// ---- config files ---------------------------------------------------------

void write_slam_config(const fs::path& path, const SlamConfig& cfg) {
  char buf[128];
  std::string out = "panoslam_config 1\n";
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s %.17g\n", key, v);
    out += buf;
  };
  auto kvi = [&](const char* key, int64_t v) {
    std::snprintf(buf, sizeof(buf), "%s %lld\n", key, static_cast<long long>(v));
    out += buf;
  };
  kvi("tracking.iterations", cfg.tracking.iterations);
  kv("tracking.lr_rotation", cfg.tracking.lr_rotation);
  kv("tracking.lr_translation", cfg.tracking.lr_translation);
  kv("tracking.silhouette_threshold", cfg.tracking.silhouette_threshold);
  kv("tracking.convergence_tol", cfg.tracking.convergence_tol);
  kv("tracking.lambda_color", cfg.tracking.lambda_color);
  kv("tracking.lambda_depth", cfg.tracking.lambda_depth);
  kvi("tracking.geodesic_velocity", cfg.tracking.geodesic_velocity ? 1 : 0);
  kv("mapping.lambda_color", cfg.mapping.lambda_color);
  kv("mapping.lambda_depth", cfg.mapping.lambda_depth);
  kv("mapping.lambda_ce", cfg.mapping.lambda_ce);
  kv("mapping.lambda_dice", cfg.mapping.lambda_dice);
  kv("mapping.lambda_focal", cfg.mapping.lambda_focal);
  kv("mapping.depth_error_factor", cfg.mapping.depth_error_factor);
  kvi("mapping.keyframe_interval", cfg.mapping.keyframe_interval);
  kvi("mapping.window_size", cfg.mapping.window_size);
  kvi("mapping.iterations_per_frame", cfg.mapping.iterations_per_frame);
  kvi("mapping.warmup_iterations", cfg.mapping.warmup_iterations);
  kvi("mapping.warmup_frames", cfg.mapping.warmup_frames);
  kv("mapping.lr_centers", cfg.mapping.lr_centers);
  kv("mapping.lr_colors", cfg.mapping.lr_colors);
  kv("mapping.lr_radii", cfg.mapping.lr_radii);
  kv("mapping.lr_opacities", cfg.mapping.lr_opacities);
  kv("mapping.lr_head", cfg.mapping.lr_head);
  kv("mapping.focal_alpha", cfg.mapping.focal_alpha);
  kv("mapping.focal_gamma", cfg.mapping.focal_gamma);
  kv("mapping.no_object_weight", cfg.mapping.no_object_weight);
  kv("mapping.stl_voxel_size", cfg.mapping.stl_voxel_size);
  kvi("mapping.stl_enabled", cfg.mapping.stl_enabled ? 1 : 0);
  kvi("mapping.panoptic_in_warmup", cfg.mapping.panoptic_in_warmup ? 1 : 0);
  kvi("mapping.keyframe_subsample", cfg.mapping.keyframe_subsample);
  kvi("head.num_regions", cfg.head.num_regions);
  kvi("head.num_classes", cfg.head.num_classes);
  kvi("head.hidden", cfg.head.hidden);
  kv("inference.class_confidence", cfg.thresholds.class_confidence);
  kv("inference.keep_fraction", cfg.thresholds.keep_fraction);
  kvi("seed", static_cast<int64_t>(cfg.seed));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

SlamConfig read_slam_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  SlamConfig cfg;
  std::string line;
  bool have_magic = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key >> value)) throw IoError("malformed config line: " + line);
    if (key == "panoslam_config") {
      if (value != "1") throw IoError("unsupported config schema version " + value);
      have_magic = true;
      continue;
    }
    const double d = parse_double(value);
    const auto i = static_cast<int>(d);
    if (key == "tracking.iterations") cfg.tracking.iterations = i;
    else if (key == "tracking.lr_rotation") cfg.tracking.lr_rotation = d;
    else if (key == "tracking.lr_translation") cfg.tracking.lr_translation = d;
    else if (key == "tracking.silhouette_threshold") cfg.tracking.silhouette_threshold = d;
    else if (key == "tracking.convergence_tol") cfg.tracking.convergence_tol = d;
    else if (key == "tracking.lambda_color") cfg.tracking.lambda_color = d;
    else if (key == "tracking.lambda_depth") cfg.tracking.lambda_depth = d;
    else if (key == "tracking.geodesic_velocity") cfg.tracking.geodesic_velocity = i != 0;
    else if (key == "mapping.lambda_color") cfg.mapping.lambda_color = d;
    else if (key == "mapping.lambda_depth") cfg.mapping.lambda_depth = d;
    else if (key == "mapping.lambda_ce") cfg.mapping.lambda_ce = d;
    else if (key == "mapping.lambda_dice") cfg.mapping.lambda_dice = d;
    else if (key == "mapping.lambda_focal") cfg.mapping.lambda_focal = d;
    else if (key == "mapping.depth_error_factor") cfg.mapping.depth_error_factor = d;
    else if (key == "mapping.keyframe_interval") cfg.mapping.keyframe_interval = i;
    else if (key == "mapping.window_size") cfg.mapping.window_size = i;
    else if (key == "mapping.iterations_per_frame") cfg.mapping.iterations_per_frame = i;
    else if (key == "mapping.warmup_iterations") cfg.mapping.warmup_iterations = i;
    else if (key == "mapping.warmup_frames") cfg.mapping.warmup_frames = i;
    else if (key == "mapping.lr_centers") cfg.mapping.lr_centers = d;
    else if (key == "mapping.lr_colors") cfg.mapping.lr_colors = d;
    else if (key == "mapping.lr_radii") cfg.mapping.lr_radii = d;
    else if (key == "mapping.lr_opacities") cfg.mapping.lr_opacities = d;
    else if (key == "mapping.lr_head") cfg.mapping.lr_head = d;
    else if (key == "mapping.focal_alpha") cfg.mapping.focal_alpha = d;
    else if (key == "mapping.focal_gamma") cfg.mapping.focal_gamma = d;
    else if (key == "mapping.no_object_weight") cfg.mapping.no_object_weight = d;
    else if (key == "mapping.stl_voxel_size") cfg.mapping.stl_voxel_size = d;
    else if (key == "mapping.stl_enabled") cfg.mapping.stl_enabled = i != 0;
    else if (key == "mapping.panoptic_in_warmup") cfg.mapping.panoptic_in_warmup = i != 0;
    else if (key == "mapping.keyframe_subsample") cfg.mapping.keyframe_subsample = i;
    else if (key == "head.num_regions") cfg.head.num_regions = i;
    else if (key == "head.num_classes") cfg.head.num_classes = i;
    else if (key == "head.hidden") cfg.head.hidden = i;
    else if (key == "inference.class_confidence") cfg.thresholds.class_confidence = d;
    else if (key == "inference.keep_fraction") cfg.thresholds.keep_fraction = d;
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
    else throw IoError("unknown config key: " + key);
  }
  if (!have_magic) throw IoError("missing schema version in config " + path.string());
  return cfg;
}

}  // namespace panoslam
