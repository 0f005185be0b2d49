#include "panoslam/renderer.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace panoslam {

namespace {
int g_threads = 0;  // 0 = library default
}

void set_render_threads(int n) {
  g_threads = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

std::optional<Projected2DGaussian> project_gaussian(const SemanticGaussian& g,
                                                    const CameraPose& pose,
                                                    const Intrinsics& intr) {
  const Vec3 cam = pose.transform(g.center);
  const double d = cam.z();
  if (d <= kNearPlane) return std::nullopt;

  Projected2DGaussian p;
  p.cam_point = cam;
  p.depth = d;
  p.center_px = Vec2(intr.fx * cam.x() / d + intr.cx, intr.fy * cam.y() / d + intr.cy);
  p.radius_px = intr.fx * g.radius / d;
  p.sem_radius_px = intr.fx * g.sem_radius / d;
  p.opacity = g.opacity;
  p.sem_opacity = g.sem_opacity;
  const double bin_reach = kTileBinSigmas * std::max(p.radius_px, p.sem_radius_px);
  p.reach_sq = bin_reach * bin_reach;

  const double reach = 3.0 * std::max(p.radius_px, p.sem_radius_px);
  if (p.center_px.x() + reach < 0 || p.center_px.x() - reach > intr.width - 1 ||
      p.center_px.y() + reach < 0 || p.center_px.y() - reach > intr.height - 1)
    return std::nullopt;
  return p;
}

namespace {

/// Windowed falloff at q = dist^2 / (2 sigma^2): opacity * exp(-q) * w(q)
/// with w a smoothstep from 1 at kWindowStartQ to 0 at kWindowEndQ.
/// d(falloff)/dq comes back through `dfdq` when non-null.
inline double windowed_falloff(double opacity, double q, double* dfdq = nullptr) {
  if (q >= kWindowEndQ) {
    if (dfdq) *dfdq = 0.0;
    return 0.0;
  }
  const double e = opacity * std::exp(-q);
  if (q <= kWindowStartQ) {
    if (dfdq) *dfdq = -e;
    return e;
  }
  constexpr double taper = kWindowEndQ - kWindowStartQ;
  const double s = (kWindowEndQ - q) / taper;
  const double w = s * s * (3.0 - 2.0 * s);
  if (dfdq) *dfdq = e * (-6.0 * s * (1.0 - s) / taper - w);
  return e * w;
}

struct PixelChannels {
  Vec3 color = Vec3::Zero();
  double depth = 0;
  double silhouette = 0;
  Vec3 semantic = Vec3::Zero();
  double sem_silhouette = 0;
};

/// Per-tile contributor data flattened for the pixel loops; the hot distance
/// test touches only these three arrays.
struct TileScratch {
  std::vector<double> cx, cy, reach_sq;

  void fill(const std::vector<Projected2DGaussian>& projected,
            const std::vector<int32_t>& list) {
    cx.resize(list.size());
    cy.resize(list.size());
    reach_sq.resize(list.size());
    for (size_t k = 0; k < list.size(); ++k) {
      const Projected2DGaussian& g = projected[list[k]];
      cx[k] = g.center_px.x();
      cy[k] = g.center_px.y();
      reach_sq[k] = g.reach_sq;
    }
  }
};

/// Composites one pixel over a depth-ordered contributor list. When `entries`
/// is non-null the (alpha, sem_alpha) pairs are recorded for the backward
/// pass; the backward pass replays the exact same gating from them.
PixelChannels composite_pixel(const std::vector<Projected2DGaussian>& projected,
                              const GaussianMap& map, const std::vector<int32_t>& list,
                              const TileScratch& scratch, double px, double py,
                              std::vector<PixelContribution>* entries) {
  PixelChannels out;
  double t_opt = 1.0, t_sem = 1.0;
  for (size_t k = 0; k < list.size(); ++k) {
    const bool opt_active = t_opt >= kTransmittanceEps;
    const bool sem_active = t_sem >= kTransmittanceEps;
    if (!opt_active && !sem_active) break;

    const double dx = px - scratch.cx[k];
    const double dy = py - scratch.cy[k];
    const double dist_sq = dx * dx + dy * dy;
    // Past the binning footprint both windows are exactly zero; the cheap
    // test skips the exp calls without changing the output.
    if (dist_sq > scratch.reach_sq[k]) continue;
    const Projected2DGaussian& g = projected[list[k]];
    const double f = windowed_falloff(g.opacity, dist_sq / (2.0 * g.radius_px * g.radius_px));
    const double fh =
        windowed_falloff(g.sem_opacity, dist_sq / (2.0 * g.sem_radius_px * g.sem_radius_px));
    if (f < kContributionEps && fh < kContributionEps) continue;

    if (entries) entries->push_back({static_cast<int32_t>(k), f, fh});
    if (opt_active) {
      const double w = f * t_opt;
      out.color += w * map.gaussians[g.source].color;
      out.depth += w * g.depth;
      out.silhouette += w;
      t_opt *= (1.0 - f);
    }
    if (sem_active) {
      const double wh = fh * t_sem;
      out.semantic += wh * map.gaussians[g.source].semantic;
      out.sem_silhouette += wh;
      t_sem *= (1.0 - fh);
    }
  }
  return out;
}

}  // namespace

RenderOutput render(const GaussianMap& map, const CameraPose& pose,
                    const Intrinsics& intr, bool retain) {
  intr.validate();
  RenderOutput out;
  out.width = intr.width;
  out.height = intr.height;
  out.color = make_color_image(intr.width, intr.height);
  out.depth = DepthImage(intr.width, intr.height);
  out.silhouette = ScalarImage(intr.width, intr.height);
  out.semantic = make_color_image(intr.width, intr.height);
  out.sem_silhouette = ScalarImage(intr.width, intr.height);
  out.pose = pose;
  out.intr = intr;
  out.retained = retain;

  out.projected.reserve(map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    auto p = project_gaussian(map.gaussians[i], pose, intr);
    if (p) {
      p->source = static_cast<int32_t>(i);
      out.projected.push_back(*p);
    }
  }

  // Depth-sort once, tie-broken by map index for determinism.
  std::vector<int32_t> order(out.projected.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    const auto& ga = out.projected[a];
    const auto& gb = out.projected[b];
    if (ga.depth != gb.depth) return ga.depth < gb.depth;
    return ga.source < gb.source;
  });

  out.tiles_x = (intr.width + kTileSize - 1) / kTileSize;
  out.tiles_y = (intr.height + kTileSize - 1) / kTileSize;
  out.tiles.resize(static_cast<size_t>(out.tiles_x) * out.tiles_y);
  for (int ty = 0; ty < out.tiles_y; ++ty)
    for (int tx = 0; tx < out.tiles_x; ++tx) {
      TileContributions& t = out.tiles[static_cast<size_t>(ty) * out.tiles_x + tx];
      t.x0 = tx * kTileSize;
      t.y0 = ty * kTileSize;
      t.w = std::min(kTileSize, intr.width - t.x0);
      t.h = std::min(kTileSize, intr.height - t.y0);
    }

  for (int32_t idx : order) {
    const Projected2DGaussian& g = out.projected[idx];
    const double reach = kTileBinSigmas * std::max(g.radius_px, g.sem_radius_px);
    const int tx0 = std::max(0, static_cast<int>(std::floor((g.center_px.x() - reach) / kTileSize)));
    const int tx1 = std::min(out.tiles_x - 1, static_cast<int>(std::floor((g.center_px.x() + reach) / kTileSize)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((g.center_px.y() - reach) / kTileSize)));
    const int ty1 = std::min(out.tiles_y - 1, static_cast<int>(std::floor((g.center_px.y() + reach) / kTileSize)));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        out.tiles[static_cast<size_t>(ty) * out.tiles_x + tx].gaussians.push_back(idx);
  }

  const int n_tiles = static_cast<int>(out.tiles.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int ti = 0; ti < n_tiles; ++ti) {
    TileContributions& tile = out.tiles[ti];
    std::vector<PixelContribution> local;
    TileScratch scratch;
    scratch.fill(out.projected, tile.gaussians);
    tile.offsets.assign(static_cast<size_t>(tile.w) * tile.h + 1, 0);
    for (int py = 0; py < tile.h; ++py)
      for (int px = 0; px < tile.w; ++px) {
        const int gx = tile.x0 + px;
        const int gy = tile.y0 + py;
        const size_t before = local.size();
        const PixelChannels ch = composite_pixel(out.projected, map, tile.gaussians, scratch,
                                                 gx, gy, retain ? &local : nullptr);
        tile.offsets[static_cast<size_t>(py) * tile.w + px + 1] =
            static_cast<int32_t>(local.size() - before);
        out.color(gx, gy) = ch.color;
        out.depth(gx, gy) = ch.depth;
        out.silhouette(gx, gy) = ch.silhouette;
        out.semantic(gx, gy) = ch.semantic;
        out.sem_silhouette(gx, gy) = ch.sem_silhouette;
      }
    for (size_t i = 1; i < tile.offsets.size(); ++i) tile.offsets[i] += tile.offsets[i - 1];
    tile.entries = std::move(local);
  }
  return out;
}

std::vector<RenderOutput::WeightEntry> RenderOutput::pixel_weights(int x, int y) const {
  if (!retained) throw std::logic_error("render output was not retained");
  const int tx = x / kTileSize, ty = y / kTileSize;
  const TileContributions& tile = tiles[static_cast<size_t>(ty) * tiles_x + tx];
  const size_t pix = static_cast<size_t>(y - tile.y0) * tile.w + (x - tile.x0);
  std::vector<WeightEntry> result;
  double t_opt = 1.0, t_sem = 1.0;
  for (int32_t e = tile.offsets[pix]; e < tile.offsets[pix + 1]; ++e) {
    const PixelContribution& c = tile.entries[e];
    WeightEntry we{projected[tile.gaussians[c.local]].source, 0.0, 0.0};
    if (t_opt >= kTransmittanceEps) {
      we.weight = c.alpha * t_opt;
      t_opt *= (1.0 - c.alpha);
    }
    if (t_sem >= kTransmittanceEps) {
      we.sem_weight = c.sem_alpha * t_sem;
      t_sem *= (1.0 - c.sem_alpha);
    }
    result.push_back(we);
  }
  return result;
}

ChannelGradients ChannelGradients::zeros(int w, int h) {
  ChannelGradients g;
  g.d_color = make_color_image(w, h);
  g.d_depth = DepthImage(w, h);
  g.d_silhouette = ScalarImage(w, h);
  g.d_semantic = make_color_image(w, h);
  g.d_sem_silhouette = ScalarImage(w, h);
  return g;
}

void GaussianGradients::resize(size_t n) {
  color.assign(n, Vec3::Zero());
  center.assign(n, Vec3::Zero());
  radius.assign(n, 0.0);
  opacity.assign(n, 0.0);
  semantic.assign(n, Vec3::Zero());
  sem_radius.assign(n, 0.0);
  sem_opacity.assign(n, 0.0);
}

void GaussianGradients::add_scaled(const GaussianGradients& other, double s) {
  for (size_t i = 0; i < color.size(); ++i) {
    color[i] += s * other.color[i];
    center[i] += s * other.center[i];
    radius[i] += s * other.radius[i];
    opacity[i] += s * other.opacity[i];
    semantic[i] += s * other.semantic[i];
    sem_radius[i] += s * other.sem_radius[i];
    sem_opacity[i] += s * other.sem_opacity[i];
  }
}

namespace {

/// Per projected Gaussian, the pixel-space adjoints accumulated over pixels.
struct SplatGrad {
  double mu_x = 0, mu_y = 0;     // d/d center_px
  double sigma = 0;              // d/d radius_px
  double sem_sigma = 0;          // d/d sem_radius_px
  double opacity = 0, sem_opacity = 0;
  double depth_value = 0;        // depth channel value path
  Vec3 color = Vec3::Zero();
  Vec3 semantic = Vec3::Zero();

  void add(const SplatGrad& o) {
    mu_x += o.mu_x; mu_y += o.mu_y;
    sigma += o.sigma; sem_sigma += o.sem_sigma;
    opacity += o.opacity; sem_opacity += o.sem_opacity;
    depth_value += o.depth_value;
    color += o.color; semantic += o.semantic;
  }
};

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

BackwardResult render_backward(const GaussianMap& map, const RenderOutput& out,
                               const ChannelGradients& upstream) {
  if (!out.retained)
    throw std::logic_error("render_backward requires contribution lists (retain = true)");

  const size_t n_proj = out.projected.size();
  std::vector<SplatGrad> grad(n_proj);

  const int n_tiles = static_cast<int>(out.tiles.size());
  std::vector<std::vector<SplatGrad>> tile_grads(n_tiles);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int ti = 0; ti < n_tiles; ++ti) {
    const TileContributions& tile = out.tiles[ti];
    if (tile.gaussians.empty()) continue;
    std::vector<SplatGrad>& local = tile_grads[ti];
    local.assign(tile.gaussians.size(), SplatGrad{});

    // Replay scratch, sized to the longest pixel list in this tile.
    std::vector<double> t_opt_s, t_sem_s, w_s, wh_s;
    std::vector<uint8_t> act_opt_s, act_sem_s;

    for (int py = 0; py < tile.h; ++py)
      for (int px = 0; px < tile.w; ++px) {
        const size_t pix = static_cast<size_t>(py) * tile.w + px;
        const int32_t e0 = tile.offsets[pix];
        const int32_t e1 = tile.offsets[pix + 1];
        if (e0 == e1) continue;
        const int gx = tile.x0 + px;
        const int gy = tile.y0 + py;
        const int k = e1 - e0;

        t_opt_s.resize(k); t_sem_s.resize(k);
        w_s.resize(k); wh_s.resize(k);
        act_opt_s.resize(k); act_sem_s.resize(k);

        // Forward replay of both compositing chains.
        double t_opt = 1.0, t_sem = 1.0;
        for (int i = 0; i < k; ++i) {
          const PixelContribution& c = tile.entries[e0 + i];
          act_opt_s[i] = t_opt >= kTransmittanceEps;
          act_sem_s[i] = t_sem >= kTransmittanceEps;
          t_opt_s[i] = t_opt;
          t_sem_s[i] = t_sem;
          if (act_opt_s[i]) {
            w_s[i] = c.alpha * t_opt;
            t_opt *= (1.0 - c.alpha);
          } else {
            w_s[i] = 0;
          }
          if (act_sem_s[i]) {
            wh_s[i] = c.sem_alpha * t_sem;
            t_sem *= (1.0 - c.sem_alpha);
          } else {
            wh_s[i] = 0;
          }
        }

        const Vec3 u_color = upstream.d_color(gx, gy);
        const double u_depth = upstream.d_depth(gx, gy);
        const double u_sil = upstream.d_silhouette(gx, gy);
        const Vec3 u_sem = upstream.d_semantic(gx, gy);
        const double u_semsil = upstream.d_sem_silhouette(gx, gy);

        // Suffix accumulators: sum over later contributors of w * value,
        // already dotted with the upstream gradient.
        double suffix_opt = 0.0;  // uC·(w c) + uD·(w d) + uF·w
        double suffix_sem = 0.0;
        for (int i = k - 1; i >= 0; --i) {
          const PixelContribution& c = tile.entries[e0 + i];
          const Projected2DGaussian& g = out.projected[tile.gaussians[c.local]];
          SplatGrad& lg = local[c.local];
          const double dxp = gx - g.center_px.x();
          const double dyp = gy - g.center_px.y();
          const double dist_sq = dxp * dxp + dyp * dyp;

          if (act_opt_s[i]) {
            const Vec3& col = map.gaussians[g.source].color;
            const double value_dot = u_color.dot(col) + u_depth * g.depth + u_sil;
            const double df = t_opt_s[i] * value_dot - suffix_opt / (1.0 - c.alpha);
            lg.color += w_s[i] * u_color;
            lg.depth_value += w_s[i] * u_depth;
            const double sigma = g.radius_px;
            const double expo = std::exp(-dist_sq / (2.0 * sigma * sigma));
            lg.opacity += df * expo;
            // d f / d mu = f * (p - mu) / sigma^2
            const double common = df * c.alpha / (sigma * sigma);
            lg.mu_x += common * dxp;
            lg.mu_y += common * dyp;
            lg.sigma += df * c.alpha * dist_sq / (sigma * sigma * sigma);
            suffix_opt += w_s[i] * value_dot;
          }
          if (act_sem_s[i]) {
            const Vec3& sem = map.gaussians[g.source].semantic;
            const double value_dot = u_sem.dot(sem) + u_semsil;
            const double df = t_sem_s[i] * value_dot - suffix_sem / (1.0 - c.sem_alpha);
            lg.semantic += wh_s[i] * u_sem;
            const double sigma = g.sem_radius_px;
            const double expo = std::exp(-dist_sq / (2.0 * sigma * sigma));
            lg.sem_opacity += df * expo;
            const double common = df * c.sem_alpha / (sigma * sigma);
            lg.mu_x += common * dxp;
            lg.mu_y += common * dyp;
            lg.sem_sigma += df * c.sem_alpha * dist_sq / (sigma * sigma * sigma);
            suffix_sem += wh_s[i] * value_dot;
          }
        }
      }
  }

  // Deterministic merge: tile order, then list order within each tile.
  for (int ti = 0; ti < n_tiles; ++ti) {
    const TileContributions& tile = out.tiles[ti];
    for (size_t k = 0; k < tile.gaussians.size(); ++k)
      if (!tile_grads[ti].empty()) grad[tile.gaussians[k]].add(tile_grads[ti][k]);
  }

  BackwardResult result;
  result.gaussians.resize(map.size());

  const Mat3 rot = out.pose.rotation();
  const Mat3 rot_t = rot.transpose();
  const Vec4& q = out.pose.quat();
  const Vec3 qv(q[1], q[2], q[3]);
  const double qw = q[0];
  const double fx = out.intr.fx, fy = out.intr.fy;

  for (size_t pi = 0; pi < n_proj; ++pi) {
    const Projected2DGaussian& g = out.projected[pi];
    const SplatGrad& sg = grad[pi];
    const SemanticGaussian& src = map.gaussians[g.source];
    const double invd = 1.0 / g.depth;
    const double x = g.cam_point.x(), y = g.cam_point.y();

    Vec3 d_cam;
    d_cam.x() = sg.mu_x * fx * invd;
    d_cam.y() = sg.mu_y * fy * invd;
    d_cam.z() = -invd * invd *
                    (sg.mu_x * fx * x + sg.mu_y * fy * y + sg.sigma * fx * src.radius +
                     sg.sem_sigma * fx * src.sem_radius) +
                sg.depth_value;

    auto& gg = result.gaussians;
    gg.color[g.source] += sg.color;
    gg.semantic[g.source] += sg.semantic;
    gg.opacity[g.source] += sg.opacity;
    gg.sem_opacity[g.source] += sg.sem_opacity;
    gg.radius[g.source] += sg.sigma * fx * invd;
    gg.sem_radius[g.source] += sg.sem_sigma * fx * invd;
    gg.center[g.source] += rot_t * d_cam;

    result.pose.translation += d_cam;

    // d(R(q) u)/dq on the ambient 4-vector; u is the world center.
    const Vec3& u = src.center;
    const Vec3 a = qv.cross(u);
    Eigen::Matrix<double, 3, 4> jq;
    jq.col(0) = 2.0 * a;
    jq.block<3, 3>(0, 1) =
        -2.0 * (qw * cross_matrix(u) + cross_matrix(a) + cross_matrix(qv) * cross_matrix(u));
    result.pose.quat += jq.transpose() * d_cam;
  }

  // Tangent projection: rendering normalizes the quaternion, so the gradient
  // lives in the unit sphere's tangent plane.
  result.pose.quat -= q * q.dot(result.pose.quat);
  return result;
}

}  // namespace panoslam
