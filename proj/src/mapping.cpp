#include "panoslam/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "panoslam/losses.hpp"
#include "panoslam/random.hpp"

namespace panoslam {

Image<uint8_t> densification_mask(const RenderOutput& rendered, const Frame& frame,
                                  const MappingConfig& cfg) {
  if (!rendered.depth.same_size(frame.depth))
    throw std::invalid_argument("densification_mask: dimension mismatch");
  Image<uint8_t> mask(rendered.width, rendered.height, uint8_t{0});

  std::vector<double> residuals;
  residuals.reserve(frame.depth.size());
  for (size_t i = 0; i < frame.depth.size(); ++i)
    if (frame.depth[i] > 0) residuals.push_back(std::abs(rendered.depth[i] - frame.depth[i]));
  double median = 0;
  if (!residuals.empty()) {
    // Upper median; any fixed convention works, it only scales the threshold.
    const size_t mid = residuals.size() / 2;
    std::nth_element(residuals.begin(), residuals.begin() + mid, residuals.end());
    median = residuals[mid];
  }
  const double threshold = cfg.depth_error_factor * median;

  for (size_t i = 0; i < mask.size(); ++i) {
    bool flag = rendered.silhouette[i] < 0.5 || rendered.sem_silhouette[i] < 0.5;
    if (!flag && frame.depth[i] > 0)
      flag = std::abs(rendered.depth[i] - frame.depth[i]) > threshold;
    mask[i] = flag ? 1 : 0;
  }
  return mask;
}

size_t densify(GaussianMap& map, const Frame& frame, const Image<uint8_t>& mask,
               const CameraPose& pose, const Intrinsics& intr) {
  size_t added = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask(x, y) && frame.depth(x, y) > 0) {
        map.add(init_gaussian_at_pixel(frame, intr, pose, x, y), frame.index);
        ++added;
      }
  return added;
}

int64_t count_points_in_frustum(const std::vector<Vec3>& points, const CameraPose& pose,
                                const Intrinsics& intr) {
  int64_t count = 0;
  for (const Vec3& p : points) {
    const Vec3 cam = pose.transform(p);
    if (cam.z() <= kNearPlane) continue;
    const Vec2 px = project_point(cam, intr);
    if (px.x() >= 0 && px.x() <= intr.width - 1 && px.y() >= 0 && px.y() <= intr.height - 1)
      ++count;
  }
  return count;
}

std::vector<WindowMember> select_keyframes(const WindowMember& current,
                                           const std::vector<WindowMember>& keyframes,
                                           const Intrinsics& intr, int window_size,
                                           int max_points, uint64_t seed) {
  // Candidate world points from the current frame's depth.
  std::vector<Vec3> points;
  const DepthImage& depth = current.frame->depth;
  std::vector<size_t> valid;
  valid.reserve(depth.size());
  for (size_t i = 0; i < depth.size(); ++i)
    if (depth[i] > 0) valid.push_back(i);
  if (static_cast<int>(valid.size()) > max_points) {
    Rng rng(seed);
    rng.shuffle(valid);
    valid.resize(max_points);
    std::sort(valid.begin(), valid.end());
  }
  points.reserve(valid.size());
  for (size_t i : valid) {
    const int x = static_cast<int>(i % depth.width());
    const int y = static_cast<int>(i / depth.width());
    points.push_back(current.pose.inverse_transform(backproject_pixel(x, y, depth[i], intr)));
  }

  struct Scored {
    int64_t count;
    int index;  // into keyframes
  };
  std::vector<Scored> scored;
  scored.reserve(keyframes.size());
  for (size_t k = 0; k < keyframes.size(); ++k)
    scored.push_back({count_points_in_frustum(points, keyframes[k].pose, intr),
                      static_cast<int>(k)});
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.count != b.count) return a.count > b.count;
    return keyframes[a.index].frame_index > keyframes[b.index].frame_index;  // recency
  });

  std::vector<WindowMember> window;
  for (int k = 0; k < std::min<int>(window_size - 1, static_cast<int>(scored.size())); ++k)
    window.push_back(keyframes[scored[k].index]);
  window.push_back(current);
  std::sort(window.begin(), window.end(),
            [](const WindowMember& a, const WindowMember& b) { return a.frame_index < b.frame_index; });
  return window;
}

namespace {

Eigen::MatrixXd semantic_as_matrix(const RenderOutput& r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.semantic.size()), 3);
  for (size_t i = 0; i < r.semantic.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = r.semantic[i];
  return m;
}

}  // namespace

WindowTargets prepare_window_targets(const std::vector<WindowMember>& window,
                                     const GaussianMap& map, const PanopticHead& head,
                                     const Intrinsics& intr, const MappingConfig& cfg,
                                     bool stl_enabled) {
  WindowTargets targets;
  targets.frames.resize(window.size());
  const int n_slots = head.num_regions();
  const int k_classes = head.num_classes();
  const Eigen::MatrixXd pred_class_probs = classify_regions_full(head);
  MatchWeights weights;
  weights.lambda_class = cfg.lambda_ce;
  weights.lambda_dice = cfg.lambda_dice;
  weights.lambda_focal = cfg.lambda_focal;
  weights.focal_alpha = cfg.focal_alpha;
  weights.focal_gamma = cfg.focal_gamma;

  for (size_t t = 0; t < window.size(); ++t) {
    FrameTargets& ft = targets.frames[t];
    const Frame& frame = *window[t].frame;
    if (!frame.pseudo || frame.pseudo->num_regions() == 0) continue;
    const PseudoLabels& pseudo = *frame.pseudo;
    const Eigen::Index pixels = static_cast<Eigen::Index>(frame.depth.size());
    const int m_regions = pseudo.num_regions();

    // Render the current prediction and align pseudo regions to head slots.
    const RenderOutput rendered = render(map, window[t].pose, intr, /*retain=*/false);
    const RegionLogitsResult logits = region_logits(semantic_as_matrix(rendered), head);
    Eigen::MatrixXd pred_masks = logits.logits.unaryExpr([](double x) { return sigmoid(x); });

    Eigen::MatrixXd pseudo_masks = Eigen::MatrixXd::Zero(pixels, m_regions);
    for (Eigen::Index p = 0; p < pixels; ++p) {
      const int32_t r = pseudo.regions[static_cast<size_t>(p)];
      if (r >= 0) pseudo_masks(p, r) = 1.0;
    }

    const std::vector<int> match = hungarian_match(pred_masks, pseudo_masks, pred_class_probs,
                                                   pseudo.region_classes, weights);
    std::vector<int> slot_of_pseudo(m_regions, -1);
    ft.slot_to_pseudo.assign(n_slots, -1);
    for (int i = 0; i < n_slots; ++i)
      if (match[i] >= 0) {
        ft.slot_to_pseudo[i] = match[i];
        slot_of_pseudo[match[i]] = i;
      }

    ft.has_labels = true;
    ft.region_targets = Eigen::MatrixXd::Zero(pixels, n_slots);
    for (Eigen::Index p = 0; p < pixels; ++p) {
      const int32_t r = pseudo.regions[static_cast<size_t>(p)];
      if (r >= 0 && slot_of_pseudo[r] >= 0) ft.region_targets(p, slot_of_pseudo[r]) = 1.0;
    }
    ft.class_targets = Eigen::MatrixXd::Zero(n_slots, k_classes);
    for (int i = 0; i < n_slots; ++i)
      if (ft.slot_to_pseudo[i] >= 0)
        ft.class_targets.row(i) = pseudo.region_classes.row(ft.slot_to_pseudo[i]);
  }

  if (!stl_enabled) return targets;

  // Voxel refinement across the window (Eq-12 style averaging).
  std::vector<const Frame*> frames;
  std::vector<CameraPose> poses;
  std::vector<size_t> active;
  std::vector<Eigen::MatrixXd> dists;
  for (size_t t = 0; t < window.size(); ++t) {
    if (!targets.frames[t].has_labels) continue;
    active.push_back(t);
    frames.push_back(window[t].frame);
    poses.push_back(window[t].pose);
    dists.push_back(std::move(targets.frames[t].region_targets));
  }
  if (active.size() >= 1) {
    const VoxelGroups groups = build_voxel_groups(frames, poses, intr, cfg.stl_voxel_size);
    refine_region_distributions(groups, dists);
    targets.stl_groups = groups.groups.size();

    // Class targets unify across the window: slots matched in several frames
    // take the mean of their per-frame class rows.
    const int n = head.num_regions();
    Eigen::MatrixXd class_sum = Eigen::MatrixXd::Zero(n, head.num_classes());
    Eigen::VectorXd class_count = Eigen::VectorXd::Zero(n);
    for (size_t a = 0; a < active.size(); ++a) {
      const FrameTargets& ft = targets.frames[active[a]];
      for (int i = 0; i < n; ++i)
        if (ft.slot_to_pseudo[i] >= 0) {
          class_sum.row(i) += ft.class_targets.row(i);
          class_count[i] += 1.0;
        }
    }
    for (size_t a = 0; a < active.size(); ++a) {
      FrameTargets& ft = targets.frames[active[a]];
      ft.region_targets = std::move(dists[a]);
      for (int i = 0; i < n; ++i)
        if (ft.slot_to_pseudo[i] >= 0 && class_count[i] > 0)
          ft.class_targets.row(i) = class_sum.row(i) / class_count[i];
    }
  }
  return targets;
}

WindowLossResult total_loss(const std::vector<RenderOutput>& renders,
                            const std::vector<WindowMember>& window,
                            const WindowTargets& targets, const PanopticHead& head,
                            const MappingConfig& cfg, bool panoptic_enabled,
                            bool with_gradients) {
  if (renders.size() != window.size())
    throw std::invalid_argument("total_loss: one render per window frame required");
  WindowLossResult result;
  const double inv_t = 1.0 / static_cast<double>(window.size());
  if (with_gradients) {
    result.head_grads = HeadGradients::zeros(head);
    result.upstreams.reserve(window.size());
  }

  const int n_slots = head.num_regions();
  const int k_classes = head.num_classes();

  // Class logits are shared across frames; forward once.
  const Eigen::MatrixXd class_logits = head.region_embeddings * head.classifier;
  const Eigen::MatrixXd class_probs = softmax_rows(class_logits);

  for (size_t t = 0; t < window.size(); ++t) {
    const RenderOutput& r = renders[t];
    const Frame& frame = *window[t].frame;
    ChannelGradients up;
    if (with_gradients) up = ChannelGradients::zeros(r.width, r.height);

    // Color: per-pixel sum over channels, mean over pixels.
    const double inv_pix = 1.0 / static_cast<double>(r.color.size());
    double color_sum = 0;
    for (size_t i = 0; i < r.color.size(); ++i) {
      const Vec3 dc = r.color[i] - frame.color[i];
      color_sum += dc.cwiseAbs().sum();
      if (with_gradients)
        up.d_color[i] = cfg.lambda_color * inv_t * inv_pix *
                        Vec3(l1_grad(dc.x()), l1_grad(dc.y()), l1_grad(dc.z()));
    }
    result.breakdown.color += inv_t * inv_pix * color_sum;

    // Depth: mean over valid pixels.
    size_t valid = 0;
    double depth_sum = 0;
    for (size_t i = 0; i < r.depth.size(); ++i)
      if (frame.depth[i] > 0) {
        ++valid;
        depth_sum += std::abs(r.depth[i] - frame.depth[i]);
      }
    if (valid > 0) {
      const double inv_valid = 1.0 / static_cast<double>(valid);
      result.breakdown.depth += inv_t * inv_valid * depth_sum;
      if (with_gradients)
        for (size_t i = 0; i < r.depth.size(); ++i)
          if (frame.depth[i] > 0)
            up.d_depth[i] =
                cfg.lambda_depth * inv_t * inv_valid * l1_grad(r.depth[i] - frame.depth[i]);
    }

    // Panoptic terms over Hungarian-matched slots.
    static const FrameTargets kNoTargets;
    const FrameTargets& ft = t < targets.frames.size() ? targets.frames[t] : kNoTargets;
    if (panoptic_enabled && ft.has_labels) {
      std::vector<int> active_slots;
      for (int i = 0; i < n_slots; ++i)
        if (ft.slot_to_pseudo[i] >= 0) active_slots.push_back(i);
      result.breakdown.matched_regions += active_slots.size();
      if (active_slots.empty()) {
        result.breakdown.warning_no_match = true;
      } else {
        const Eigen::MatrixXd sem = semantic_as_matrix(r);
        const RegionLogitsResult fwd = region_logits(sem, head);
        const Eigen::Index pixels = sem.rows();
        Eigen::MatrixXd d_logits;
        if (with_gradients) d_logits = Eigen::MatrixXd::Zero(pixels, n_slots);

        const double inv_active = 1.0 / static_cast<double>(active_slots.size());
        double dice_total = 0, focal_total = 0;
        for (int i : active_slots) {
          const Eigen::ArrayXd logit = fwd.logits.col(i).array();
          const Eigen::ArrayXd target = ft.region_targets.col(i).array();
          const Eigen::ArrayXd mask = logit.unaryExpr([](double x) { return sigmoid(x); });

          dice_total += DiceLoss::forward(mask, target);
          double focal_value;
          Eigen::ArrayXd d_focal;
          FocalLoss::forward_backward(logit, target, cfg.focal_alpha, cfg.focal_gamma,
                                      focal_value, d_focal);
          focal_total += focal_value / static_cast<double>(pixels);

          if (with_gradients) {
            const Eigen::ArrayXd d_dice =
                DiceLoss::backward(mask, target) * mask * (1.0 - mask);
            d_logits.col(i) =
                (cfg.lambda_dice * inv_t * inv_active * d_dice +
                 cfg.lambda_focal * inv_t * inv_active / static_cast<double>(pixels) * d_focal)
                    .matrix();
          }
        }
        result.breakdown.dice += inv_t * inv_active * dice_total;
        result.breakdown.focal += inv_t * inv_active * focal_total;

        // Class cross entropy: matched slots get their target distribution
        // (no-object prob 0), the rest a one-hot no-object with a small
        // weight, MaskFormer style.
        double ce_sum = 0, weight_sum = 0;
        Eigen::MatrixXd d_class_logits;
        if (with_gradients) d_class_logits = Eigen::MatrixXd::Zero(n_slots, k_classes + 1);
        for (int i = 0; i < n_slots; ++i) {
          Eigen::ArrayXd tau = Eigen::ArrayXd::Zero(k_classes + 1);
          double w;
          if (ft.slot_to_pseudo[i] >= 0) {
            tau.head(k_classes) = ft.class_targets.row(i).array();
            w = 1.0;
          } else {
            tau[k_classes] = 1.0;
            w = cfg.no_object_weight;
          }
          ce_sum += w * cross_entropy(class_probs.row(i).array().transpose(), tau);
          weight_sum += w;
          if (with_gradients)
            d_class_logits.row(i) =
                w * (class_probs.row(i).array().transpose() - tau).matrix().transpose();
        }
        result.breakdown.ce += inv_t * ce_sum / weight_sum;

        if (with_gradients) {
          const double ce_scale = cfg.lambda_ce * inv_t / weight_sum;
          // class_logits = M * C
          result.head_grads.d_region_embeddings +=
              ce_scale * d_class_logits * head.classifier.transpose();
          result.head_grads.d_classifier +=
              ce_scale * head.region_embeddings.transpose() * d_class_logits;

          const Eigen::MatrixXd d_sem =
              region_logits_backward(sem, head, fwd, d_logits, result.head_grads);
          for (Eigen::Index p = 0; p < d_sem.rows(); ++p)
            up.d_semantic[static_cast<size_t>(p)] = d_sem.row(p).transpose();
        }
      }
    }
    if (with_gradients) result.upstreams.push_back(std::move(up));
  }

  result.total = result.breakdown.weighted_total(cfg);
  result.breakdown.total = result.total;
  return result;
}

void MapOptimizer::ensure_map_size(size_t n) {
  color_.resize(3 * n);
  center_.resize(3 * n);
  radius_.resize(n);
  opacity_.resize(n);
  semantic_.resize(3 * n);
  sem_radius_.resize(n);
  sem_opacity_.resize(n);
}

std::vector<AdamState*> MapOptimizer::map_states() {
  return {&color_, &center_, &radius_, &opacity_, &semantic_, &sem_radius_, &sem_opacity_};
}

std::vector<AdamState*> MapOptimizer::head_states() {
  return {&h_embed_, &h_class_, &h_w1_, &h_b1_, &h_w2_, &h_b2_};
}

std::vector<const AdamState*> MapOptimizer::map_states() const {
  return {&color_, &center_, &radius_, &opacity_, &semantic_, &sem_radius_, &sem_opacity_};
}

std::vector<const AdamState*> MapOptimizer::head_states() const {
  return {&h_embed_, &h_class_, &h_w1_, &h_b1_, &h_w2_, &h_b2_};
}

void MapOptimizer::step(GaussianMap& map, PanopticHead& head, const GaussianGradients& g,
                        const HeadGradients& hg, const MappingConfig& cfg, bool update_head) {
  const size_t n = map.size();
  ensure_map_size(n);
  if (!head_init_) {
    h_embed_.resize(head.region_embeddings.size());
    h_class_.resize(head.classifier.size());
    h_w1_.resize(head.gamma.w1.size());
    h_b1_.resize(head.gamma.b1.size());
    h_w2_.resize(head.gamma.w2.size());
    h_b2_.resize(head.gamma.b2.size());
    head_init_ = true;
  }

  // Gather params into flat buffers, update, scatter back.
  std::vector<double> buf(3 * n);
  auto gather3 = [&](auto getter) {
    for (size_t i = 0; i < n; ++i) {
      const Vec3 v = getter(map.gaussians[i]);
      buf[3 * i] = v.x();
      buf[3 * i + 1] = v.y();
      buf[3 * i + 2] = v.z();
    }
  };
  auto scatter3 = [&](auto setter) {
    for (size_t i = 0; i < n; ++i)
      setter(map.gaussians[i], Vec3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]));
  };
  auto gather1 = [&](auto getter) {
    for (size_t i = 0; i < n; ++i) buf[i] = getter(map.gaussians[i]);
  };
  auto scatter1 = [&](auto setter) {
    for (size_t i = 0; i < n; ++i) setter(map.gaussians[i], buf[i]);
  };

  for (AdamState* s : map_states()) s->begin_step();

  gather3([](const SemanticGaussian& sg) { return sg.color; });
  color_.update(buf.data(), g.color.data()->data(), 3 * n, lr_scale_ * cfg.lr_colors);
  scatter3([](SemanticGaussian& sg, const Vec3& v) { sg.color = v; });

  gather3([](const SemanticGaussian& sg) { return sg.center; });
  center_.update(buf.data(), g.center.data()->data(), 3 * n, lr_scale_ * cfg.lr_centers);
  scatter3([](SemanticGaussian& sg, const Vec3& v) { sg.center = v; });

  gather3([](const SemanticGaussian& sg) { return sg.semantic; });
  semantic_.update(buf.data(), g.semantic.data()->data(), 3 * n, lr_scale_ * cfg.lr_colors);
  scatter3([](SemanticGaussian& sg, const Vec3& v) { sg.semantic = v; });

  gather1([](const SemanticGaussian& sg) { return sg.radius; });
  radius_.update(buf.data(), g.radius.data(), n, lr_scale_ * cfg.lr_radii);
  scatter1([](SemanticGaussian& sg, double v) { sg.radius = v; });

  gather1([](const SemanticGaussian& sg) { return sg.sem_radius; });
  sem_radius_.update(buf.data(), g.sem_radius.data(), n, lr_scale_ * cfg.lr_radii);
  scatter1([](SemanticGaussian& sg, double v) { sg.sem_radius = v; });

  gather1([](const SemanticGaussian& sg) { return sg.opacity; });
  opacity_.update(buf.data(), g.opacity.data(), n, lr_scale_ * cfg.lr_opacities);
  scatter1([](SemanticGaussian& sg, double v) { sg.opacity = v; });

  gather1([](const SemanticGaussian& sg) { return sg.sem_opacity; });
  sem_opacity_.update(buf.data(), g.sem_opacity.data(), n, lr_scale_ * cfg.lr_opacities);
  scatter1([](SemanticGaussian& sg, double v) { sg.sem_opacity = v; });

  map.clamp_parameters();

  if (update_head) {
    for (AdamState* s : head_states()) s->begin_step();
    const double lr = lr_scale_ * cfg.lr_head;
    h_embed_.update(head.region_embeddings.data(), hg.d_region_embeddings.data(),
                    head.region_embeddings.size(), lr);
    h_class_.update(head.classifier.data(), hg.d_classifier.data(), head.classifier.size(), lr);
    h_w1_.update(head.gamma.w1.data(), hg.d_w1.data(), head.gamma.w1.size(), lr);
    h_b1_.update(head.gamma.b1.data(), hg.d_b1.data(), head.gamma.b1.size(), lr);
    h_w2_.update(head.gamma.w2.data(), hg.d_w2.data(), head.gamma.w2.size(), lr);
    h_b2_.update(head.gamma.b2.data(), hg.d_b2.data(), head.gamma.b2.size(), lr);
  }
}

MapStepResult map_update_step(GaussianMap& map, PanopticHead& head, MapOptimizer& opt,
                              const std::vector<WindowMember>& window,
                              const WindowTargets& targets, const Intrinsics& intr,
                              const MappingConfig& cfg, bool panoptic_enabled) {
  std::vector<RenderOutput> renders;
  renders.reserve(window.size());
  for (const WindowMember& m : window) renders.push_back(render(map, m.pose, intr, true));

  WindowLossResult loss = total_loss(renders, window, targets, head, cfg, panoptic_enabled);
  if (!std::isfinite(loss.total)) {
    opt.halve_learning_rates();
    return {loss.breakdown, MapStepStatus::RejectedNonFinite};
  }

  GaussianGradients grads;
  grads.resize(map.size());
  for (size_t t = 0; t < window.size(); ++t) {
    const BackwardResult bw = render_backward(map, renders[t], loss.upstreams[t]);
    grads.add_scaled(bw.gaussians, 1.0);  // upstreams already carry weights and 1/T
  }

  bool finite = true;
  for (size_t i = 0; i < map.size() && finite; ++i)
    finite = grads.center[i].allFinite() && grads.color[i].allFinite() &&
             grads.semantic[i].allFinite() && std::isfinite(grads.radius[i]) &&
             std::isfinite(grads.opacity[i]) && std::isfinite(grads.sem_radius[i]) &&
             std::isfinite(grads.sem_opacity[i]);
  if (!finite) {
    opt.halve_learning_rates();
    return {loss.breakdown, MapStepStatus::RejectedNonFinite};
  }

  opt.step(map, head, grads, loss.head_grads, cfg, panoptic_enabled);
  return {loss.breakdown, MapStepStatus::Ok};
}

}  // namespace panoslam
