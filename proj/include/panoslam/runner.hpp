#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "panoslam/io.hpp"
#include "panoslam/metrics.hpp"
#include "panoslam/pipeline.hpp"
#include "panoslam/synthetic.hpp"

namespace panoslam {

struct GenerateOptions {
  SceneSpec scene;
  TrajectorySpec trajectory;
  Intrinsics intr{64.0, 64.0, 32.0, 32.0, 64, 64};
  NoiseConfig noise;
  uint64_t seed = 1;
  bool with_pseudo = true;
};

/// Synthetic scene + trajectory + ray-cast frames + noisy pseudo-labels,
/// all in memory. `generate_to_dir` also writes the sequence.
SequenceData generate_sequence(const GenerateOptions& opt);
void generate_to_dir(const GenerateOptions& opt, const std::filesystem::path& dir);

struct SlamOptions {
  SlamConfig config;
  int checkpoint_every = 0;  // frames; 0 disables checkpointing
  std::optional<std::filesystem::path> resume_from;
  int stop_after = -1;  // process only the first n frames when >= 0
  bool verbose = false;  // per-frame progress on stderr
};

/// Runs the full SLAM loop over a sequence, optionally exporting results and
/// periodic checkpoints into out_dir (pass empty path to skip exporting).
std::unique_ptr<SlamSession> run_slam(const SequenceData& seq, const SlamOptions& opt,
                                      const std::filesystem::path& out_dir);

struct EvalReport {
  double ate_rmse_cm = 0;
  double depth_l1_cm = 0;
  double psnr_db = 0;  // from pooled MSE over keyframes
  double ssim_value = 0;
  double miou_percent = 0;
  double pq = 0, sq = 0, rq = 0;  // pooled over keyframes; pq == sq*rq/100

  struct PerKeyframe {
    int index = 0;
    double psnr_db = 0, ssim_value = 0, depth_l1_cm = 0, miou_percent = 0;
    double pq = 0, sq = 0, rq = 0;
  };
  std::vector<PerKeyframe> keyframes;
};

/// Scores exported results (trajectory + keyframe renders) against the
/// ground-truth sequence.
EvalReport evaluate_results(const SequenceData& gt, const std::filesystem::path& results_dir);

/// Same metrics computed in memory from a live session.
EvalReport evaluate_session(const SlamSession& session, const SequenceData& gt);

void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_eval_report(const std::filesystem::path& path);

/// Key-value config file ("panoslam_config 1" schema line first).
SlamConfig read_slam_config(const std::filesystem::path& path);
void write_slam_config(const std::filesystem::path& path, const SlamConfig& cfg);

}  // namespace panoslam
