#include "panoslam/tracking.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "panoslam/losses.hpp"
#include "panoslam/optimizer.hpp"

namespace panoslam {

CameraPose init_pose_constant_velocity(const CameraPose& prev, const CameraPose& curr,
                                       bool geodesic) {
  if (geodesic) {
    // E_next = (E_curr E_prev^-1) E_curr
    return curr.compose(prev.inverse()).compose(curr);
  }
  Vec4 q_prev = prev.quat();
  if (q_prev.dot(curr.quat()) < 0) q_prev = -q_prev;  // sign alignment
  const Vec4 q_next = 2.0 * curr.quat() - q_prev;
  const Vec3 t_next = 2.0 * curr.translation() - prev.translation();
  if (q_next.norm() < 1e-6) return curr;
  return CameraPose(q_next, t_next);
}

double tracking_loss(const RenderOutput& rendered, const Frame& frame,
                     const TrackingConfig& cfg, size_t* masked_out,
                     ChannelGradients* upstream_out) {
  size_t masked = 0;
  double color_sum = 0, depth_sum = 0;
  std::vector<char> mask(rendered.silhouette.size(), 0);
  for (size_t i = 0; i < rendered.silhouette.size(); ++i) {
    if (rendered.silhouette[i] > cfg.silhouette_threshold && frame.depth[i] > 0) {
      mask[i] = 1;
      ++masked;
      const Vec3 dc = rendered.color[i] - frame.color[i];
      color_sum += dc.cwiseAbs().sum();
      depth_sum += std::abs(rendered.depth[i] - frame.depth[i]);
    }
  }
  if (masked_out) *masked_out = masked;
  if (masked == 0) return 0.0;

  const double inv_n = 1.0 / static_cast<double>(masked);
  if (upstream_out) {
    *upstream_out = ChannelGradients::zeros(rendered.width, rendered.height);
    for (size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      const Vec3 dc = rendered.color[i] - frame.color[i];
      upstream_out->d_color[i] =
          cfg.lambda_color * inv_n * Vec3(l1_grad(dc.x()), l1_grad(dc.y()), l1_grad(dc.z()));
      upstream_out->d_depth[i] =
          cfg.lambda_depth * inv_n * l1_grad(rendered.depth[i] - frame.depth[i]);
    }
  }
  return inv_n * (cfg.lambda_color * color_sum + cfg.lambda_depth * depth_sum);
}

TrackResult track_frame(const GaussianMap& map, const Frame& frame, const CameraPose& init,
                        const Intrinsics& intr, const TrackingConfig& cfg) {
  TrackResult result;
  result.pose = init;

  AdamState adam_rot(4), adam_trans(3);
  CameraPose pose = init;
  double best_loss = std::numeric_limits<double>::infinity();
  double prev_loss = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= cfg.iterations; ++iter) {
    const RenderOutput rendered = render(map, pose, intr, /*retain=*/true);
    size_t masked = 0;
    ChannelGradients upstream;
    const double loss = tracking_loss(rendered, frame, cfg, &masked, &upstream);
    if (masked == 0) {
      // Nothing visible to align against: keep the initialization and flag it.
      if (iter == 0) return {init, 0.0, 0, TrackStatus::DegenerateSilhouette};
      result.status = TrackStatus::DegenerateSilhouette;
      break;
    }
    if (loss < best_loss) {
      best_loss = loss;
      result.pose = pose;
      result.loss = loss;
    }
    result.iterations_run = iter;
    if (iter == cfg.iterations) break;
    if (std::abs(prev_loss - loss) < cfg.convergence_tol) break;
    prev_loss = loss;

    const BackwardResult grads = render_backward(map, rendered, upstream);
    double params[7] = {pose.quat()[0],       pose.quat()[1],       pose.quat()[2],
                        pose.quat()[3],       pose.translation()[0], pose.translation()[1],
                        pose.translation()[2]};
    const double grad[7] = {grads.pose.quat[0],        grads.pose.quat[1],
                            grads.pose.quat[2],        grads.pose.quat[3],
                            grads.pose.translation[0], grads.pose.translation[1],
                            grads.pose.translation[2]};
    adam_rot.begin_step();
    adam_trans.begin_step();
    adam_rot.update(params, grad, 4, cfg.lr_rotation);
    adam_trans.update(params + 4, grad + 4, 3, cfg.lr_translation);
    pose.set(Vec4(params[0], params[1], params[2], params[3]),
             Vec3(params[4], params[5], params[6]));
  }
  return result;
}

}  // namespace panoslam
