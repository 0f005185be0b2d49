// panoslam command line: generate synthetic sequences, run SLAM, evaluate,
// render from checkpoints, and run the STL ablation.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "panoslam/renderer.hpp"
#include "panoslam/runner.hpp"

namespace fs = std::filesystem;
using namespace panoslam;

namespace {

int data_error(const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  return 2;
}

struct CommonSlamArgs {
  std::string sequence;
  std::string out;
  std::string config_path;
  uint64_t seed = 12345;
  bool no_stl = false;
  int stl_window = 0;  // 0 = keep config value
  int threads = 0;
  int checkpoint_every = 0;
  std::string resume;
  int stop_after = -1;
};

SlamConfig make_config(const CommonSlamArgs& args) {
  SlamConfig cfg;
  if (!args.config_path.empty()) cfg = read_slam_config(args.config_path);
  cfg.seed = args.seed;
  if (args.no_stl) cfg.mapping.stl_enabled = false;
  if (args.stl_window > 0) cfg.mapping.window_size = args.stl_window;
  return cfg;
}

void add_slam_flags(CLI::App* cmd, CommonSlamArgs& args) {
  cmd->add_option("--sequence", args.sequence, "Sequence directory")->required();
  cmd->add_option("--out", args.out, "Output directory")->required();
  cmd->add_option("--config", args.config_path, "Config file (flags override)");
  cmd->add_option("--seed", args.seed, "Run seed");
  cmd->add_flag("--no-stl", args.no_stl, "Disable spatial-temporal lifting");
  cmd->add_option("--stl-window", args.stl_window, "Window size (keyframes + current frame)");
  cmd->add_option("--threads", args.threads, "Worker threads for rendering");
  cmd->add_option("--checkpoint-every", args.checkpoint_every, "Checkpoint interval in frames");
  cmd->add_option("--resume", args.resume, "Resume from a checkpoint file");
  cmd->add_option("--stop-after", args.stop_after, "Process only the first n frames");
}

int run_one_slam(const CommonSlamArgs& args, const fs::path& out_dir) {
  if (!fs::exists(fs::path(args.sequence) / "manifest.txt"))
    return data_error("sequence not found: " + args.sequence);
  const SequenceData seq = read_sequence(args.sequence);
  if (args.threads > 0) set_render_threads(args.threads);
  SlamOptions opt;
  opt.config = make_config(args);
  opt.checkpoint_every = args.checkpoint_every;
  opt.stop_after = args.stop_after;
  opt.verbose = true;
  if (!args.resume.empty()) {
    if (!fs::exists(args.resume)) return data_error("checkpoint not found: " + args.resume);
    opt.resume_from = args.resume;
  }
  auto session = run_slam(seq, opt, out_dir);
  if (seq.gt_poses) {
    const EvalReport report = evaluate_session(*session, seq);
    write_eval_report(out_dir / "eval_report.txt", report);
    std::fprintf(stderr,
                 "ate %.4f cm  depth_l1 %.4f cm  psnr %.2f dB  miou %.2f  pq %.2f\n",
                 report.ate_rmse_cm, report.depth_l1_cm, report.psnr_db, report.miou_percent,
                 report.pq);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panoslam: panoptic Gaussian-splatting SLAM on synthetic RGB-D sequences"};
  app.require_subcommand(1);

  // generate ------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Generate a synthetic RGB-D sequence");
  std::string gen_out;
  uint64_t gen_seed = 1;
  int gen_frames = 50, gen_objects = 8, gen_size = 64;
  double noise_p = 0.0;
  int noise_jitter = 0;
  bool noise_permute = false;
  std::string motion = "orbit";
  gen->add_option("--out", gen_out, "Output sequence directory")->required();
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--frames", gen_frames, "Frame count")->check(CLI::PositiveNumber);
  gen->add_option("--objects", gen_objects, "Object count")->check(CLI::PositiveNumber);
  gen->add_option("--image-size", gen_size, "Square image size in pixels");
  gen->add_option("--motion", motion, "orbit | lateral | random-walk");
  gen->add_option("--noise-flip", noise_p, "Pseudo-label class flip rate p");
  gen->add_option("--noise-jitter", noise_jitter, "Boundary jitter radius in px");
  gen->add_flag("--noise-permute", noise_permute, "Permute instance ids per view");

  // slam ----------------------------------------------------------------
  auto* slam = app.add_subcommand("slam", "Run SLAM over a sequence");
  CommonSlamArgs slam_args;
  add_slam_flags(slam, slam_args);

  // eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluate exported results against ground truth");
  std::string eval_results, eval_gt, eval_out;
  eval->add_option("--results", eval_results, "Results directory")->required();
  eval->add_option("--gt", eval_gt, "Ground-truth sequence directory")->required();
  eval->add_option("--out", eval_out, "Report file")->required();

  // render --------------------------------------------------------------
  auto* rend = app.add_subcommand("render", "Render views from a checkpoint");
  std::string rend_ckpt, rend_seq, rend_out;
  int rend_frame = 0;
  rend->add_option("--checkpoint", rend_ckpt, "Checkpoint file")->required();
  rend->add_option("--sequence", rend_seq, "Sequence the checkpoint was trained on")->required();
  rend->add_option("--frame-index", rend_frame, "Trajectory index to render from");
  rend->add_option("--out", rend_out, "Output directory")->required();

  // ablate ----------------------------------------------------------------
  auto* abl = app.add_subcommand("ablate", "Run the STL ablation (on / off / window 2)");
  CommonSlamArgs abl_args;
  add_slam_flags(abl, abl_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      GenerateOptions opt;
      opt.seed = gen_seed;
      opt.scene.num_objects = gen_objects;
      opt.trajectory.frames = gen_frames;
      if (motion == "orbit") opt.trajectory.motion = MotionType::Orbit;
      else if (motion == "lateral") opt.trajectory.motion = MotionType::Lateral;
      else if (motion == "random-walk") opt.trajectory.motion = MotionType::RandomWalk;
      else return data_error("unknown motion type: " + motion);
      opt.intr = Intrinsics{static_cast<double>(gen_size), static_cast<double>(gen_size),
                            gen_size / 2.0, gen_size / 2.0, gen_size, gen_size};
      opt.noise.class_flip_rate = noise_p;
      opt.noise.boundary_radius_px = noise_jitter;
      opt.noise.permute_instances = noise_permute;
      generate_to_dir(opt, gen_out);
      const SequenceData check = read_sequence(gen_out);  // validate what we wrote
      std::fprintf(stderr, "wrote %zu frames to %s\n", check.frames.size(), gen_out.c_str());
      return 0;
    }
    if (slam->parsed()) return run_one_slam(slam_args, slam_args.out);
    if (eval->parsed()) {
      if (!fs::exists(fs::path(eval_gt) / "manifest.txt"))
        return data_error("sequence not found: " + eval_gt);
      const SequenceData gt = read_sequence(eval_gt);
      const EvalReport report = evaluate_results(gt, eval_results);
      write_eval_report(eval_out, report);
      std::printf("ate_rmse_cm %.6f\ndepth_l1_cm %.6f\npsnr_db %.4f\nmiou %.4f\npq %.4f\n",
                  report.ate_rmse_cm, report.depth_l1_cm, report.psnr_db, report.miou_percent,
                  report.pq);
      return 0;
    }
    if (rend->parsed()) {
      if (!fs::exists(rend_ckpt)) return data_error("checkpoint not found: " + rend_ckpt);
      const SequenceData seq = read_sequence(rend_seq);
      auto session = SlamSession::load_checkpoint(rend_ckpt, seq.frames);
      if (rend_frame < 0 || rend_frame >= session->frames_processed())
        return data_error("frame index outside the checkpointed trajectory");
      fs::create_directories(rend_out);
      const RenderOutput rendered = session->render_view(session->pose_of(rend_frame));
      write_ppm(fs::path(rend_out) / "render.color.ppm", rendered.color);
      write_f32_raster(fs::path(rend_out) / "render.depth.f32", rendered.depth);
      const PanopticSegmentation seg = session->infer_panoptic(rendered);
      PanopticLabels labels;
      labels.instances = seg.segment_ids;
      for (const Segment& s : seg.segments) labels.instance_classes.push_back(s.class_id);
      write_panoptic_raster(fs::path(rend_out) / "render.panoptic.u32", labels);
      return 0;
    }
    if (abl->parsed()) {
      const fs::path out(abl_args.out);
      struct Variant {
        const char* name;
        bool stl;
        int window;
      };
      const Variant variants[] = {{"stl_on", true, 0}, {"stl_off", false, 0}, {"stl_w2", true, 2}};
      std::string summary = "panoslam_ablation 1\n";
      for (const Variant& v : variants) {
        CommonSlamArgs run = abl_args;
        run.no_stl = !v.stl;
        if (v.window > 0) run.stl_window = v.window;
        std::fprintf(stderr, "[ablate] %s\n", v.name);
        const int rc = run_one_slam(run, out / v.name);
        if (rc != 0) return rc;
        const EvalReport rep = read_eval_report(out / v.name / "eval_report.txt");
        char line[256];
        std::snprintf(line, sizeof(line), "%s miou %.4f pq %.4f sq %.4f rq %.4f\n", v.name,
                      rep.miou_percent, rep.pq, rep.sq, rep.rq);
        summary += line;
        std::fputs(line, stdout);
      }
      std::ofstream f(out / "ablation_summary.txt", std::ios::binary | std::ios::trunc);
      f.write(summary.data(), static_cast<std::streamsize>(summary.size()));
      return 0;
    }
  } catch (const IoError& e) {
    return data_error(e.what());
  } catch (const std::invalid_argument& e) {
    return data_error(e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 3;
  }
  return 1;
}
