#pragma once

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "freedrag/backend.hpp"
#include "freedrag/feature_map.hpp"

namespace freedrag {

struct DragConfig {
  double l = 0.3;  // target feature discrepancy at the start of a drag
  double d = 3.0;  // max single movement distance, px
  int r = 3;       // patch radius
  double gamma = 10.0;
  double lambda_cap = 0.8;
  int steps_per_drag = 5;
  int max_total_steps = 300;
  std::optional<double> learning_rate;  // unset: backend default
  double terminate_dist = 2.0;

  // Ablations. update_template = false pins lambda to 0; backtracking = false
  // always takes the plain line-search branch.
  bool update_template = true;
  bool backtracking = true;

  void validate() const;
  double resolved_learning_rate(const GeneratorBackend& backend) const {
    return learning_rate.value_or(backend.default_learning_rate());
  }

  static DragConfig preset_a() { return {}; }
  static DragConfig preset_b() {
    DragConfig c;
    c.l = 0.4;
    c.d = 4.0;
    return c;
  }
};

enum class DragCase { Advance, Freeze, Fallback, Track };
enum class PointStatus { Active, Terminated };
enum class RunStatus { Running, Converged, StepBudgetExhausted, Diverged };

std::string to_string(DragCase c);
std::string to_string(RunStatus s);
DragCase drag_case_from_string(const std::string& s);
RunStatus run_status_from_string(const std::string& s);

struct HandleTarget {
  Point2 handle;
  Point2 target;
};

struct DragPoint {
  Point2 origin;
  Point2 target;
  Point2 current;
  FeatureVector tmpl;
  double L_in = 0.0;
  double L_en = 0.0;
  double lambda_last = 0.0;
  PointStatus status = PointStatus::Active;
};

/// One row per point per drag.
struct DragRecord {
  int k = 0;
  int point_index = 0;
  Point2 h = Point2::Zero();  // position optimized during drag k
  double L_in = 0.0;
  double L_en = 0.0;
  double lambda = 0.0;
  DragCase drag_case = DragCase::Advance;
  double loss = 0.0;
  int substeps = 0;

  bool operator==(const DragRecord&) const = default;
};

/// Append-only run log.
class DragTrace {
 public:
  void append(DragRecord record) { records_.push_back(std::move(record)); }
  void append_substep_loss(double loss) { substep_losses_.push_back(loss); }

  const std::vector<DragRecord>& records() const { return records_; }
  const std::vector<double>& substep_losses() const { return substep_losses_; }
  std::size_t size() const { return records_.size(); }

  bool operator==(const DragTrace&) const = default;

 private:
  std::vector<DragRecord> records_;
  std::vector<double> substep_losses_;
};

struct DragState {
  LatentCode latent;
  std::vector<DragPoint> points;
  std::optional<Mask> mask;
  std::shared_ptr<const FeatureMap> F0;  // frozen at initialization
  int drag_index = 0;  // k of the next drag to run
  int substep = 0;     // cumulative optimization substeps
  DragTrace trace;

  bool all_terminated() const;
  int active_count() const;
};

/// Non-finite loss or gradient during an optimization substep.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, DragTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const DragTrace& trace() const { return trace_; }

 private:
  DragTrace trace_;
};

// --- template updating ------------------------------------------------------

struct Calibration {
  double alpha;
  double beta;
};

/// Sigmoid constants such that lambda(0.2 l) = 0.5 and lambda(0.8 l) = 0.1.
Calibration calibrate(double l);

/// min(cap, 1 / (1 + exp(alpha (L_en - beta)))).
double lambda_coeff(double L_en, double alpha, double beta, double cap);

/// lambda * Fr + (1 - lambda) * T.
FeatureVector update_template(const FeatureVector& T, const FeatureVector& Fr, double lambda);

// --- line search -------------------------------------------------------------

/// Points h + j (t - h) / |t - h| for j = 0.1 d, ..., d, with j clamped to
/// |t - h|. Repeated distances after clamping are dropped. Empty if h == t.
std::vector<Point2> candidate_set(const Point2& h, const Point2& t, double d);

/// L1 distance between aggregate(F, q, r) and T.
double discrepancy(const FeatureMap& F, const Point2& q, const FeatureVector& T, int r);

/// Candidate minimizing | discrepancy - l |; ties go to the closest candidate.
/// nullopt when h == t.
std::optional<Point2> localize(const Point2& h, const Point2& t, const FeatureVector& T, double d,
                               double l, const FeatureMap& F, int r);

struct PositionUpdate {
  Point2 position;
  DragCase drag_case;
};

/// Next handle position from the point's L_in / L_en: advance, freeze, or
/// fall back along the segment with a doubled search range.
PositionUpdate next_position(const DragPoint& point, const FeatureVector& T_next,
                             const DragConfig& cfg, const FeatureMap& F);

// --- losses ------------------------------------------------------------------

/// Sum over active points of |aggregate(F, h, r) - T|_1.
double drag_loss(const std::vector<DragPoint>& points, const FeatureMap& F, int r);

/// |(F0 - F) * (1 - M)|_1 with M broadcast over channels.
double mask_loss(const FeatureMap& F, const FeatureMap& F0, const Mask& M);

double total_loss(const std::vector<DragPoint>& points, const FeatureMap& F, int r,
                  const FeatureMap& F0, const std::optional<Mask>& M, double gamma);

/// Cotangent of total_loss with respect to F (sign subgradient, 0 at kinks).
FeatureMap total_loss_cotangent(const std::vector<DragPoint>& points, const FeatureMap& F, int r,
                                const FeatureMap& F0, const std::optional<Mask>& M, double gamma);

/// total_loss(generate(w)) and its gradient with respect to w.
struct LossAndGradient {
  double loss;
  LatentCode gradient;
};
LossAndGradient total_loss_and_gradient(const DragState& state, const GeneratorBackend& backend,
                                        const DragConfig& cfg, const LatentCode& w);

// --- scheduler ---------------------------------------------------------------

/// Fresh state: h = p, T = F_r(p) on F0, lambda = 0, and the first drag
/// position localized. Points already within terminate_dist start terminated.
DragState init_drag_state(const GeneratorBackend& backend, const LatentCode& w0,
                          const std::vector<HandleTarget>& pairs, std::optional<Mask> mask,
                          const DragConfig& cfg);

/// One gradient-descent step on the latent. Throws DivergedError.
void optimize_substep(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg);

/// Runs one drag (substeps, template update, next position, termination).
/// Throws DivergedError.
RunStatus step_drag(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg);

/// Status without stepping: Converged, StepBudgetExhausted, or Running.
RunStatus current_status(const DragState& state, const DragConfig& cfg);

/// Drags until every point terminates or the step budget runs out. Divergence
/// is reported as RunStatus::Diverged with the state left at the failing step.
RunStatus run_drag(DragState& state, const GeneratorBackend& backend, const DragConfig& cfg);

}  // namespace freedrag
