#pragma once

#include <vector>

#include "freedrag/backend.hpp"
#include "freedrag/drag.hpp"

namespace freedrag {

/// Point-dragging baseline: alternate motion supervision and nearest-feature
/// tracking inside a square window around the previous handle position.
struct TrackConfig {
  double search_radius = 3.0;  // half-size of the tracking window, px
  double motion_step = 1.0;    // px
  int patch_radius = 3;
  double gamma = 10.0;
  std::optional<double> learning_rate;  // unset: backend default
  int max_steps = 300;
  double terminate_dist = 2.0;

  void validate() const;
  double resolved_learning_rate(const GeneratorBackend& backend) const {
    return learning_rate.value_or(backend.default_learning_rate());
  }
};

/// Fresh baseline state. Each point's `tmpl` holds F0 sampled at its handle,
/// the feature the tracker searches for.
DragState init_point_drag_state(const GeneratorBackend& backend, const LatentCode& w0,
                                const std::vector<HandleTarget>& pairs, std::optional<Mask> mask,
                                const TrackConfig& cfg);

/// Detached targets for motion supervision: sample(F, q) over each active
/// point's patch, in patch order.
std::vector<FeatureVector> motion_targets(const DragState& state, const FeatureMap& F,
                                          const TrackConfig& cfg);

/// sum_i sum_q |sample(F, q + step * dir_i) - target_iq|_1 + gamma * mask loss.
double motion_loss(const DragState& state, const FeatureMap& F,
                   const std::vector<FeatureVector>& targets, const TrackConfig& cfg);

LossAndGradient motion_loss_and_gradient(const DragState& state, const GeneratorBackend& backend,
                                         const std::vector<FeatureVector>& targets,
                                         const TrackConfig& cfg, const LatentCode& w);

/// One gradient step pulling the content at each handle one motion step
/// toward its target. Throws DivergedError.
void motion_supervision_step(DragState& state, const GeneratorBackend& backend,
                             const TrackConfig& cfg);

/// Integer cell in the window [prev +- radius] whose feature is closest in L1
/// to `feature`. Ties resolve to the first cell in row-major order.
Point2 track(const FeatureVector& feature, const FeatureMap& F, const Point2& prev, double radius);

/// One supervision + tracking cycle, recorded with DragCase::Track.
RunStatus step_point_drag(DragState& state, const GeneratorBackend& backend,
                          const TrackConfig& cfg);

RunStatus point_drag_status(const DragState& state, const TrackConfig& cfg);

RunStatus run_point_drag(DragState& state, const GeneratorBackend& backend,
                         const TrackConfig& cfg);

}  // namespace freedrag
