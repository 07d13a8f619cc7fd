#include "freedrag/point_drag.hpp"

#include <cmath>
#include <limits>

#include "freedrag/sampling.hpp"

namespace freedrag {

void TrackConfig::validate() const {
  detail::require(search_radius > 0.0, "track config: search_radius must be > 0");
  detail::require(motion_step > 0.0, "track config: motion_step must be > 0");
  detail::require(patch_radius >= 0, "track config: patch_radius must be >= 0");
  detail::require(gamma >= 0.0, "track config: gamma must be >= 0");
  detail::require(max_steps >= 0, "track config: max_steps must be >= 0");
  detail::require(terminate_dist > 0.0, "track config: terminate_dist must be > 0");
  detail::require(!learning_rate || *learning_rate > 0.0, "track config: learning_rate must be > 0");
}

DragState init_point_drag_state(const GeneratorBackend& backend, const LatentCode& w0,
                                const std::vector<HandleTarget>& pairs, std::optional<Mask> mask,
                                const TrackConfig& cfg) {
  cfg.validate();
  detail::require(w0.allFinite(), "initial latent must be finite");
  DragState state;
  state.latent = w0;
  state.F0 = std::make_shared<const FeatureMap>(backend.generate(w0));
  if (mask) {
    detail::require(mask->height() == state.F0->height() && mask->width() == state.F0->width(),
                    "mask shape differs from feature map");
  }
  state.mask = std::move(mask);
  for (const auto& pair : pairs) {
    detail::require(pair.handle.allFinite() && pair.target.allFinite(),
                    "handle and target must be finite");
    DragPoint p;
    p.origin = pair.handle;
    p.target = pair.target;
    p.current = pair.handle;
    p.tmpl = sample(*state.F0, pair.handle);
    if ((p.current - p.target).norm() <= cfg.terminate_dist) p.status = PointStatus::Terminated;
    state.points.push_back(std::move(p));
  }
  state.drag_index = 1;
  return state;
}

namespace {

double sgn(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

Point2 motion_offset(const DragPoint& p, const TrackConfig& cfg) {
  const Point2 delta = p.target - p.current;
  const double n = delta.norm();
  if (n == 0.0) return Point2::Zero();
  return cfg.motion_step * delta / n;
}

template <typename Fn>
void for_each_patch_offset(int r, Fn&& fn) {
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) fn(Point2(dx, dy));
  }
}

}  // namespace

std::vector<FeatureVector> motion_targets(const DragState& state, const FeatureMap& F,
                                          const TrackConfig& cfg) {
  std::vector<FeatureVector> targets;
  for (const auto& p : state.points) {
    if (p.status != PointStatus::Active) continue;
    for_each_patch_offset(cfg.patch_radius,
                          [&](const Point2& o) { targets.push_back(sample(F, p.current + o)); });
  }
  return targets;
}

double motion_loss(const DragState& state, const FeatureMap& F,
                   const std::vector<FeatureVector>& targets, const TrackConfig& cfg) {
  double loss = 0.0;
  std::size_t idx = 0;
  for (const auto& p : state.points) {
    if (p.status != PointStatus::Active) continue;
    const Point2 shift = motion_offset(p, cfg);
    for_each_patch_offset(cfg.patch_radius, [&](const Point2& o) {
      loss += (sample(F, p.current + o + shift) - targets.at(idx++)).lpNorm<1>();
    });
  }
  if (state.mask && cfg.gamma != 0.0) loss += cfg.gamma * mask_loss(F, *state.F0, *state.mask);
  return loss;
}

namespace {

FeatureMap motion_cotangent(const DragState& state, const FeatureMap& F,
                            const std::vector<FeatureVector>& targets, const TrackConfig& cfg) {
  FeatureMap cot(F.shape());
  std::size_t idx = 0;
  for (const auto& p : state.points) {
    if (p.status != PointStatus::Active) continue;
    const Point2 shift = motion_offset(p, cfg);
    for_each_patch_offset(cfg.patch_radius, [&](const Point2& o) {
      const Point2 q = p.current + o + shift;
      const FeatureVector u = (sample(F, q) - targets.at(idx++)).unaryExpr(&sgn);
      sample_vjp_accumulate(cot, q, u);
    });
  }
  if (state.mask && cfg.gamma != 0.0) {
    const Mask& M = *state.mask;
    for (int y = 0; y < F.height(); ++y) {
      for (int x = 0; x < F.width(); ++x) {
        if (M(y, x) == 0) cot.cell(y, x) += cfg.gamma * (F.cell(y, x) - state.F0->cell(y, x)).unaryExpr(&sgn);
      }
    }
  }
  return cot;
}

}  // namespace

LossAndGradient motion_loss_and_gradient(const DragState& state, const GeneratorBackend& backend,
                                         const std::vector<FeatureVector>& targets,
                                         const TrackConfig& cfg, const LatentCode& w) {
  const FeatureMap F = backend.generate(w);
  return {motion_loss(state, F, targets, cfg),
          backend.vjp(w, motion_cotangent(state, F, targets, cfg))};
}

void motion_supervision_step(DragState& state, const GeneratorBackend& backend,
                             const TrackConfig& cfg) {
  detail::require(state.active_count() > 0, "motion_supervision_step: no active points");
  const FeatureMap F = backend.generate(state.latent);
  const auto targets = motion_targets(state, F, cfg);
  const double loss = motion_loss(state, F, targets, cfg);
  const LatentCode grad = backend.vjp(state.latent, motion_cotangent(state, F, targets, cfg));
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw DivergedError("non-finite motion loss or gradient at step " +
                            std::to_string(state.substep),
                        state.trace);
  }
  state.latent -= cfg.resolved_learning_rate(backend) * grad;
  ++state.substep;
  state.trace.append_substep_loss(loss);
}

Point2 track(const FeatureVector& feature, const FeatureMap& F, const Point2& prev, double radius) {
  detail::require(radius > 0.0, "track: radius must be > 0");
  detail::require(prev.allFinite(), "track: previous position must be finite");
  detail::require(feature.size() == F.channels(), "track: feature length must equal channel count");
  const int x_lo = std::max(0, static_cast<int>(std::ceil(prev.x() - radius)));
  const int x_hi = std::min(F.width() - 1, static_cast<int>(std::floor(prev.x() + radius)));
  const int y_lo = std::max(0, static_cast<int>(std::ceil(prev.y() - radius)));
  const int y_hi = std::min(F.height() - 1, static_cast<int>(std::floor(prev.y() + radius)));

  Point2 best = prev;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dist = (F.cell(y, x).matrix() - feature).lpNorm<1>();
      if (dist < best_dist) {
        best_dist = dist;
        best = Point2(x, y);
      }
    }
  }
  return best;
}

RunStatus point_drag_status(const DragState& state, const TrackConfig& cfg) {
  if (state.all_terminated()) return RunStatus::Converged;
  if (state.substep >= cfg.max_steps) return RunStatus::StepBudgetExhausted;
  return RunStatus::Running;
}

RunStatus step_point_drag(DragState& state, const GeneratorBackend& backend,
                          const TrackConfig& cfg) {
  if (const auto s = point_drag_status(state, cfg); s != RunStatus::Running) return s;

  const FeatureMap before = backend.generate(state.latent);
  std::vector<double> loss_in;
  for (const auto& p : state.points) {
    loss_in.push_back(p.status == PointStatus::Active
                          ? (sample(before, p.current) - p.tmpl).lpNorm<1>()
                          : 0.0);
  }
  motion_supervision_step(state, backend, cfg);
  const double loss = state.trace.substep_losses().back();
  const FeatureMap F = backend.generate(state.latent);

  for (std::size_t i = 0; i < state.points.size(); ++i) {
    DragPoint& p = state.points[i];
    if (p.status != PointStatus::Active) continue;
    p.L_in = loss_in[i];
    p.current = track(p.tmpl, F, p.current, cfg.search_radius);
    p.L_en = (sample(F, p.current) - p.tmpl).lpNorm<1>();

    DragRecord rec;
    rec.k = state.drag_index;
    rec.point_index = static_cast<int>(i);
    rec.h = p.current;
    rec.L_in = p.L_in;
    rec.L_en = p.L_en;
    rec.lambda = 0.0;
    rec.drag_case = DragCase::Track;
    rec.loss = loss;
    rec.substeps = 1;
    state.trace.append(rec);

    if ((p.current - p.target).norm() <= cfg.terminate_dist) p.status = PointStatus::Terminated;
  }
  ++state.drag_index;
  return point_drag_status(state, cfg);
}

RunStatus run_point_drag(DragState& state, const GeneratorBackend& backend,
                         const TrackConfig& cfg) {
  cfg.validate();
  try {
    RunStatus s = point_drag_status(state, cfg);
    while (s == RunStatus::Running) s = step_point_drag(state, backend, cfg);
    return s;
  } catch (const DivergedError&) {
    return RunStatus::Diverged;
  }
}

}  // namespace freedrag
