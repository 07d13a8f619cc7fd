#include "freedrag/drag.hpp"

#include <cmath>
#include <limits>

#include "freedrag/sampling.hpp"

namespace freedrag {

void DragConfig::validate() const {
  detail::require(l > 0.0, "config: l must be > 0");
  detail::require(d > 0.0, "config: d must be > 0");
  detail::require(r >= 0, "config: r must be >= 0");
  detail::require(gamma >= 0.0, "config: gamma must be >= 0");
  detail::require(lambda_cap > 0.0 && lambda_cap <= 1.0, "config: lambda_cap must be in (0, 1]");
  detail::require(steps_per_drag >= 1, "config: steps_per_drag must be >= 1");
  detail::require(max_total_steps >= 0, "config: max_total_steps must be >= 0");
  detail::require(terminate_dist > 0.0, "config: terminate_dist must be > 0");
  detail::require(!learning_rate || (*learning_rate > 0.0 && std::isfinite(*learning_rate)),
                  "config: learning_rate must be > 0");
}

std::string to_string(DragCase c) {
  switch (c) {
    case DragCase::Advance: return "advance";
    case DragCase::Freeze: return "freeze";
    case DragCase::Fallback: return "fallback";
    case DragCase::Track: return "track";
  }
  return "unknown";
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Converged: return "converged";
    case RunStatus::StepBudgetExhausted: return "step_budget_exhausted";
    case RunStatus::Diverged: return "diverged";
  }
  return "unknown";
}

DragCase drag_case_from_string(const std::string& s) {
  for (auto c : {DragCase::Advance, DragCase::Freeze, DragCase::Fallback, DragCase::Track}) {
    if (to_string(c) == s) return c;
  }
  throw ContractViolation("unknown drag case '" + s + "'");
}

RunStatus run_status_from_string(const std::string& s) {
  for (auto c : {RunStatus::Running, RunStatus::Converged, RunStatus::StepBudgetExhausted,
                 RunStatus::Diverged}) {
    if (to_string(c) == s) return c;
  }
  throw ContractViolation("unknown run status '" + s + "'");
}

bool DragState::all_terminated() const {
  for (const auto& p : points) {
    if (p.status == PointStatus::Active) return false;
  }
  return true;
}

int DragState::active_count() const {
  int n = 0;
  for (const auto& p : points) n += p.status == PointStatus::Active;
  return n;
}

// ---------------------------------------------------------------------------

Calibration calibrate(double l) {
  detail::require(l > 0.0, "calibrate: l must be > 0");
  return {std::log(9.0) / (0.6 * l), 0.2 * l};
}

double lambda_coeff(double L_en, double alpha, double beta, double cap) {
  return std::min(cap, 1.0 / (1.0 + std::exp(alpha * (L_en - beta))));
}

FeatureVector update_template(const FeatureVector& T, const FeatureVector& Fr, double lambda) {
  detail::require(T.size() == Fr.size(), "update_template: length mismatch");
  detail::require(lambda >= 0.0 && lambda <= 1.0, "update_template: lambda must be in [0, 1]");
  return lambda * Fr + (1.0 - lambda) * T;
}

std::vector<Point2> candidate_set(const Point2& h, const Point2& t, double d) {
  std::vector<Point2> out;
  const Point2 delta = t - h;
  const double dist = delta.norm();
  if (dist == 0.0) return out;
  const Point2 dir = delta / dist;
  double last = -1.0;
  for (int j = 1; j <= 10; ++j) {
    const double step = std::min(j * d / 10.0, dist);
    if (step == last) continue;
    last = step;
    out.emplace_back(h + step * dir);
  }
  return out;
}

double discrepancy(const FeatureMap& F, const Point2& q, const FeatureVector& T, int r) {
  return (aggregate(F, q, r) - T).lpNorm<1>();
}

std::optional<Point2> localize(const Point2& h, const Point2& t, const FeatureVector& T, double d,
                               double l, const FeatureMap& F, int r) {
  const auto candidates = candidate_set(h, t, d);
  if (candidates.empty()) return std::nullopt;
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score = std::abs(discrepancy(F, candidates[i], T, r) - l);
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  return candidates[best];
}

PositionUpdate next_position(const DragPoint& point, const FeatureVector& T_next,
                             const DragConfig& cfg, const FeatureMap& F) {
  const Point2& h = point.current;
  const Point2& t = point.target;
  if (!cfg.backtracking || point.L_en <= 0.5 * cfg.l) {
    return {localize(h, t, T_next, cfg.d, cfg.l, F, cfg.r).value_or(h), DragCase::Advance};
  }
  if (point.L_en <= point.L_in) return {h, DragCase::Freeze};

  // Step back by d along the line, but never behind the origin.
  const Point2 start = [&] {
    const Point2 axis = t - point.origin;
    const double len = axis.norm();
    if (len == 0.0) return point.origin;
    const Point2 u = axis / len;
    const Point2 back = h - cfg.d * (t - h).normalized();
    const double s = std::clamp((back - point.origin).dot(u), 0.0, len);
    return Point2(point.origin + s * u);
  }();
  return {localize(start, t, T_next, 2.0 * cfg.d, 0.0, F, cfg.r).value_or(start),
          DragCase::Fallback};
}

// ---------------------------------------------------------------------------

double drag_loss(const std::vector<DragPoint>& points, const FeatureMap& F, int r) {
  double loss = 0.0;
  for (const auto& p : points) {
    if (p.status == PointStatus::Active) loss += discrepancy(F, p.current, p.tmpl, r);
  }
  return loss;
}

double mask_loss(const FeatureMap& F, const FeatureMap& F0, const Mask& M) {
  detail::require(F.shape() == F0.shape(), "mask_loss: feature map shapes differ");
  detail::require(M.height() == F.height() && M.width() == F.width(),
                  "mask_loss: mask shape differs from feature map");
  double loss = 0.0;
  for (int y = 0; y < F.height(); ++y) {
    for (int x = 0; x < F.width(); ++x) {
      if (M(y, x) == 0) loss += (F0.cell(y, x) - F.cell(y, x)).abs().sum();
    }
  }
  return loss;
}

double total_loss(const std::vector<DragPoint>& points, const FeatureMap& F, int r,
                  const FeatureMap& F0, const std::optional<Mask>& M, double gamma) {
  double loss = drag_loss(points, F, r);
  if (M && gamma != 0.0) loss += gamma * mask_loss(F, F0, *M);
  return loss;
}

namespace {
double sgn(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }
}  // namespace

FeatureMap total_loss_cotangent(const std::vector<DragPoint>& points, const FeatureMap& F, int r,
                                const FeatureMap& F0, const std::optional<Mask>& M,
                                double gamma) {
  FeatureMap cot(F.shape());
  for (const auto& p : points) {
    if (p.status != PointStatus::Active) continue;
    const FeatureVector u = (aggregate(F, p.current, r) - p.tmpl).unaryExpr(&sgn);
    aggregate_vjp_accumulate(cot, p.current, r, u);
  }
  if (M && gamma != 0.0) {
    detail::require(F.shape() == F0.shape(), "mask loss: feature map shapes differ");
    for (int y = 0; y < F.height(); ++y) {
      for (int x = 0; x < F.width(); ++x) {
        if ((*M)(y, x) != 0) continue;
        cot.cell(y, x) += gamma * (F.cell(y, x) - F0.cell(y, x)).unaryExpr(&sgn);
      }
    }
  }
  return cot;
}

LossAndGradient total_loss_and_gradient(const DragState& state, const GeneratorBackend& backend,
                                        const DragConfig& cfg, const LatentCode& w) {
  const FeatureMap F = backend.generate(w);
  const double loss = total_loss(state.points, F, cfg.r, *state.F0, state.mask, cfg.gamma);
  const FeatureMap cot =
      total_loss_cotangent(state.points, F, cfg.r, *state.F0, state.mask, cfg.gamma);
  return {loss, backend.vjp(w, cot)};
}

// ---------------------------------------------------------------------------

DragState init_drag_state(const GeneratorBackend& backend, const LatentCode& w0,
                          const std::vector<HandleTarget>& pairs, std::optional<Mask> mask,
                          const DragConfig& cfg) {
  cfg.validate();
  detail::require(w0.allFinite(), "initial latent must be finite");
  DragState state;
  state.latent = w0;
  state.F0 = std::make_shared<const FeatureMap>(backend.generate(w0));
  const FeatureMap& F0 = *state.F0;
  if (mask) {
    detail::require(mask->height() == F0.height() && mask->width() == F0.width(),
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
    // T^0 = F_r(p^0); with lambda^0 = 0 the first drag's template is T^0 too.
    p.tmpl = aggregate(F0, p.origin, cfg.r);
    p.lambda_last = 0.0;
    if ((p.current - p.target).norm() <= cfg.terminate_dist) {
      p.status = PointStatus::Terminated;
    } else {
      p.current = localize(p.origin, p.target, p.tmpl, cfg.d, cfg.l, F0, cfg.r).value_or(p.origin);
      p.L_in = discrepancy(F0, p.current, p.tmpl, cfg.r);
    }
    state.points.push_back(std::move(p));
  }
  state.drag_index = 1;
  return state;
}

namespace {

void descend(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg,
             const FeatureMap& F) {
  detail::require(state.active_count() > 0, "optimize_substep: no active points");
  const double loss = total_loss(state.points, F, cfg.r, *state.F0, state.mask, cfg.gamma);
  const FeatureMap cot =
      total_loss_cotangent(state.points, F, cfg.r, *state.F0, state.mask, cfg.gamma);
  const LatentCode grad = backend.vjp(state.latent, cot);
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw DivergedError("non-finite loss or gradient at substep " + std::to_string(state.substep),
                        state.trace);
  }
  state.latent -= cfg.resolved_learning_rate(backend) * grad;
  ++state.substep;
  state.trace.append_substep_loss(loss);
}

bool all_below_pause(const DragState& state, const FeatureMap& F, const DragConfig& cfg) {
  for (const auto& p : state.points) {
    if (p.status == PointStatus::Active && discrepancy(F, p.current, p.tmpl, cfg.r) >= 0.5 * cfg.l)
      return false;
  }
  return true;
}

}  // namespace

void optimize_substep(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg) {
  descend(state, backend, cfg, backend.generate(state.latent));
}

RunStatus current_status(const DragState& state, const DragConfig& cfg) {
  if (state.all_terminated()) return RunStatus::Converged;
  if (state.substep >= cfg.max_total_steps) return RunStatus::StepBudgetExhausted;
  return RunStatus::Running;
}

RunStatus step_drag(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg) {
  if (const auto s = current_status(state, cfg); s != RunStatus::Running) return s;

  FeatureMap F = backend.generate(state.latent);
  int used = 0;
  while (used < cfg.steps_per_drag && state.substep < cfg.max_total_steps &&
         !all_below_pause(state, F, cfg)) {
    descend(state, backend, cfg, F);
    F = backend.generate(state.latent);
    ++used;
  }

  const double loss = total_loss(state.points, F, cfg.r, *state.F0, state.mask, cfg.gamma);
  const auto [alpha, beta] = calibrate(cfg.l);
  const int k = state.drag_index;

  for (std::size_t i = 0; i < state.points.size(); ++i) {
    DragPoint& p = state.points[i];
    if (p.status != PointStatus::Active) continue;

    const FeatureVector Fr = aggregate(F, p.current, cfg.r);
    p.L_en = (Fr - p.tmpl).lpNorm<1>();
    DragRecord rec;
    rec.k = k;
    rec.point_index = static_cast<int>(i);
    rec.h = p.current;
    rec.L_in = p.L_in;
    rec.L_en = p.L_en;
    rec.loss = loss;
    rec.substeps = used;

    if ((p.current - p.target).norm() <= cfg.terminate_dist) {
      // The content has been dragged onto a point inside the termination radius.
      p.status = PointStatus::Terminated;
      rec.lambda = 0.0;
      rec.drag_case = DragCase::Advance;
      state.trace.append(rec);
      continue;
    }

    const double lambda =
        cfg.update_template ? lambda_coeff(p.L_en, alpha, beta, cfg.lambda_cap) : 0.0;
    const FeatureVector T_next = update_template(p.tmpl, Fr, lambda);
    const auto next = next_position(p, T_next, cfg, F);

    rec.lambda = lambda;
    rec.drag_case = next.drag_case;
    state.trace.append(rec);

    p.lambda_last = lambda;
    p.tmpl = T_next;
    p.current = next.position;
    p.L_in = discrepancy(F, p.current, p.tmpl, cfg.r);
  }
  ++state.drag_index;
  return current_status(state, cfg);
}

RunStatus run_drag(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg) {
  cfg.validate();
  try {
    RunStatus s = current_status(state, cfg);
    while (s == RunStatus::Running) s = step_drag(state, backend, cfg);
    return s;
  } catch (const DivergedError&) {
    return RunStatus::Diverged;
  }
}

}  // namespace freedrag
