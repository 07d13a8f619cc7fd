#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "freedrag/drag.hpp"
#include "freedrag/point_drag.hpp"
#include "freedrag/problem.hpp"

namespace freedrag {

enum class Method { FreeDrag, PointDrag };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// A dragging instruction with everything needed to replay it.
struct Instruction {
  std::string name;
  std::vector<HandleTarget> points;
  std::optional<Mask> mask;
  Method method = Method::FreeDrag;
  BackendSpec backend;
  std::uint64_t seed = 0;
  DragConfig drag;
  TrackConfig track;

  /// Throws ContractViolation if points are empty or leave the grid.
  void validate() const;
};

/// Channel-averaged grayscale image, H rows by W columns.
using Render = Eigen::ArrayXXd;

Render render(const FeatureMap& F);

/// Same mask, backend and method; each handle becomes the achieved final
/// position and each target the original handle.
Instruction reverse_instruction(const Instruction& inst, const std::vector<Point2>& final_positions);

/// Mean absolute difference normalized by the larger dynamic range of the two
/// renders (1 when both are flat). Symmetric in its arguments.
double ccsd(const Render& original, const Render& roundtrip);

inline constexpr const char* kCcsdKernel = "range_normalized_mad";

/// Blob slot whose initial center is nearest each handle.
std::vector<int> dragged_slots(const Instruction& inst, const GeneratorBackend& backend,
                               const LatentCode& initial);

/// Mean over points of |center of the dragged slot - target|. Throws
/// UnsupportedOperation on non-blob backends.
double mean_distance_oracle(const Instruction& inst, const LatentCode& initial,
                            const LatentCode& final_latent, const GeneratorBackend& backend);

/// Outcome of one drag run.
struct RunResult {
  DragState state;
  RunStatus status = RunStatus::Running;
};

/// Runs inst with its configured method from `start` (the backend's initial
/// latent when unset).
RunResult run_instruction(const Instruction& inst, const GeneratorBackend& backend,
                          const LatentCode& start);

/// Steps the engine for inst once, dispatching on the method.
RunStatus step_instruction(const Instruction& inst, DragState& state,
                           const GeneratorBackend& backend);
DragState init_instruction_state(const Instruction& inst, const GeneratorBackend& backend,
                                 const LatentCode& start);
RunStatus instruction_status(const Instruction& inst, const DragState& state);

struct CaseCounts {
  int advance = 0;
  int freeze = 0;
  int fallback = 0;
  int track = 0;

  int total() const { return advance + freeze + fallback + track; }
};
CaseCounts count_cases(const DragTrace& trace);

/// Mean distance h moves per drag record (consecutive records of one point).
double mean_movement(const DragTrace& trace);

struct MetricReport {
  std::string name;
  Method method = Method::FreeDrag;
  std::string kernel = kCcsdKernel;
  double ccsd = 0.0;
  std::optional<double> mean_distance;
  int steps_used = 0;  // forward + reverse substeps
  int forward_steps = 0;
  double wall_time = 0.0;  // seconds
  RunStatus forward_status = RunStatus::Running;
  RunStatus reverse_status = RunStatus::Running;
  CaseCounts cases;  // forward run
  DragTrace forward_trace;
  double mean_movement = 0.0;
  std::string error;  // non-empty when the run failed

  bool ok() const { return error.empty(); }
};

/// Forward drag, reversed drag from the achieved positions, CCSD between the
/// original and round-trip renders, and the mean-distance oracle on blob
/// backends. Failures are captured in `error`.
MetricReport evaluate_instruction(const Instruction& inst);

struct SuiteOptions {
  std::optional<Method> method;
  /// Applied to each instruction before running.
  std::function<void(Instruction&)> adjust;
  int threads = 0;  // 0: hardware concurrency
};

/// Reports in input order. Deterministic given the instructions' seeds.
std::vector<MetricReport> run_suite(const std::vector<Instruction>& instructions,
                                    const SuiteOptions& options = {});

/// Aggregates over the successful reports of a suite.
struct SuiteSummary {
  int count = 0;
  int failed = 0;
  double mean_ccsd = 0.0;
  std::optional<double> mean_distance;
  double freeze_fraction = 0.0;    // Freeze records / all forward records
  double fallback_fraction = 0.0;  // Fallback records / all forward records
  int exhausted = 0;               // forward runs out of step budget
  int converged = 0;               // forward runs converged
  double mean_movement = 0.0;
  double mean_forward_steps = 0.0;
};
SuiteSummary summarize(const std::vector<MetricReport>& reports);

// --- built-in instruction sets ------------------------------------------------

/// Default blob appearance used by the built-in suites.
BlobGenConfig default_blob_scene();

/// One blob dragged 10 to 40 px on a 64 x 64 grid.
std::vector<Instruction> single_blob_suite(int count, std::uint64_t seed);

/// Multi-blob scenes with one or two drags each.
std::vector<Instruction> standard_suite(int count, std::uint64_t seed);

/// Two identical blobs; the drag passes the twin, which sits inside the
/// tracking window of a point tracker.
std::vector<Instruction> ambiguity_suite(int count, std::uint64_t seed);

}  // namespace freedrag
