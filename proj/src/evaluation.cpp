#include "freedrag/evaluation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

namespace freedrag {

std::string to_string(Method m) { return m == Method::FreeDrag ? "freedrag" : "pointdrag"; }

Method method_from_string(const std::string& s) {
  if (s == "freedrag") return Method::FreeDrag;
  if (s == "pointdrag") return Method::PointDrag;
  throw ContractViolation("unknown method '" + s + "'");
}

void Instruction::validate() const {
  detail::require(!points.empty(), "instruction has no points");
  const auto& b = backend.blobs;
  auto inside = [&](const Point2& p) {
    return p.allFinite() && p.x() >= 0.0 && p.x() <= b.width - 1 && p.y() >= 0.0 &&
           p.y() <= b.height - 1;
  };
  for (const auto& pt : points) {
    detail::require(inside(pt.handle) && inside(pt.target),
                    "instruction points must lie inside the grid");
  }
  if (mask) {
    detail::require(mask->height() == b.height && mask->width() == b.width,
                    "instruction mask shape differs from the grid");
  }
  drag.validate();
  track.validate();
}

Render render(const FeatureMap& F) {
  Render img(F.height(), F.width());
  for (int y = 0; y < F.height(); ++y) {
    for (int x = 0; x < F.width(); ++x) img(y, x) = F.cell(y, x).mean();
  }
  return img;
}

Instruction reverse_instruction(const Instruction& inst, const std::vector<Point2>& final_positions) {
  detail::require(final_positions.size() == inst.points.size(),
                  "reverse_instruction: final position count differs from point count");
  Instruction rev = inst;
  rev.name = inst.name.empty() ? std::string("reverse") : inst.name + "/reverse";
  for (std::size_t i = 0; i < inst.points.size(); ++i) {
    rev.points[i].handle = final_positions[i];
    rev.points[i].target = inst.points[i].handle;
  }
  return rev;
}

double ccsd(const Render& original, const Render& roundtrip) {
  detail::require(original.rows() == roundtrip.rows() && original.cols() == roundtrip.cols(),
                  "ccsd: render shapes differ");
  detail::require(original.size() > 0, "ccsd: empty render");
  const double range = std::max(original.maxCoeff() - original.minCoeff(),
                                roundtrip.maxCoeff() - roundtrip.minCoeff());
  const double mad = (original - roundtrip).abs().mean();
  return mad / (range > 0.0 ? range : 1.0);
}

std::vector<int> dragged_slots(const Instruction& inst, const GeneratorBackend& backend,
                               const LatentCode& initial) {
  const auto centers = object_centers(backend, initial);
  std::vector<int> slots;
  for (const auto& pt : inst.points) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < centers.size(); ++b) {
      const double dist = (centers[b] - pt.handle).norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(b);
      }
    }
    slots.push_back(best);
  }
  return slots;
}

double mean_distance_oracle(const Instruction& inst, const LatentCode& initial,
                            const LatentCode& final_latent, const GeneratorBackend& backend) {
  detail::require(!inst.points.empty(), "mean_distance_oracle: instruction has no points");
  const auto slots = dragged_slots(inst, backend, initial);
  const auto centers = object_centers(backend, final_latent);
  double sum = 0.0;
  for (std::size_t i = 0; i < inst.points.size(); ++i) {
    sum += (centers[slots[i]] - inst.points[i].target).norm();
  }
  return sum / static_cast<double>(inst.points.size());
}

DragState init_instruction_state(const Instruction& inst, const GeneratorBackend& backend,
                                 const LatentCode& start) {
  if (inst.method == Method::FreeDrag) {
    return init_drag_state(backend, start, inst.points, inst.mask, inst.drag);
  }
  return init_point_drag_state(backend, start, inst.points, inst.mask, inst.track);
}

RunStatus step_instruction(const Instruction& inst, DragState& state,
                           const GeneratorBackend& backend) {
  return inst.method == Method::FreeDrag ? step_drag(state, backend, inst.drag)
                                         : step_point_drag(state, backend, inst.track);
}

RunStatus instruction_status(const Instruction& inst, const DragState& state) {
  return inst.method == Method::FreeDrag ? current_status(state, inst.drag)
                                         : point_drag_status(state, inst.track);
}

RunResult run_instruction(const Instruction& inst, const GeneratorBackend& backend,
                          const LatentCode& start) {
  RunResult out;
  out.state = init_instruction_state(inst, backend, start);
  out.status = inst.method == Method::FreeDrag ? run_drag(out.state, backend, inst.drag)
                                               : run_point_drag(out.state, backend, inst.track);
  return out;
}

CaseCounts count_cases(const DragTrace& trace) {
  CaseCounts c;
  for (const auto& r : trace.records()) {
    switch (r.drag_case) {
      case DragCase::Advance: ++c.advance; break;
      case DragCase::Freeze: ++c.freeze; break;
      case DragCase::Fallback: ++c.fallback; break;
      case DragCase::Track: ++c.track; break;
    }
  }
  return c;
}

double mean_movement(const DragTrace& trace) {
  std::vector<std::optional<Point2>> last;
  double sum = 0.0;
  int n = 0;
  for (const auto& r : trace.records()) {
    if (static_cast<std::size_t>(r.point_index) >= last.size()) last.resize(r.point_index + 1);
    auto& prev = last[r.point_index];
    if (prev) {
      sum += (r.h - *prev).norm();
      ++n;
    }
    prev = r.h;
  }
  return n == 0 ? 0.0 : sum / n;
}

MetricReport evaluate_instruction(const Instruction& inst) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricReport rep;
  rep.name = inst.name;
  rep.method = inst.method;
  try {
    inst.validate();
    const Problem problem = make_problem(inst.backend);
    const GeneratorBackend& backend = *problem.backend;

    const RunResult fwd = run_instruction(inst, backend, problem.initial_latent);
    rep.forward_status = fwd.status;
    rep.forward_steps = fwd.state.substep;
    rep.cases = count_cases(fwd.state.trace);
    rep.forward_trace = fwd.state.trace;
    rep.mean_movement = mean_movement(fwd.state.trace);
    if (fwd.status == RunStatus::Diverged) throw std::runtime_error("forward run diverged");

    std::vector<Point2> finals;
    for (const auto& p : fwd.state.points) finals.push_back(p.current);
    const Instruction rev = reverse_instruction(inst, finals);
    const RunResult back = run_instruction(rev, backend, fwd.state.latent);
    rep.reverse_status = back.status;
    rep.steps_used = fwd.state.substep + back.state.substep;
    if (back.status == RunStatus::Diverged) throw std::runtime_error("reverse run diverged");

    rep.ccsd = ccsd(render(*fwd.state.F0), render(backend.generate(back.state.latent)));
    if (inst.backend.type == BackendType::Blob) {
      rep.mean_distance =
          mean_distance_oracle(inst, problem.initial_latent, fwd.state.latent, backend);
    }
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<MetricReport> run_suite(const std::vector<Instruction>& instructions,
                                    const SuiteOptions& options) {
  std::vector<MetricReport> reports(instructions.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < instructions.size(); i = next++) {
      Instruction inst = instructions[i];
      if (options.method) inst.method = *options.method;
      if (options.adjust) options.adjust(inst);
      reports[i] = evaluate_instruction(inst);
    }
  };
  unsigned n = options.threads > 0 ? static_cast<unsigned>(options.threads)
                                   : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(instructions.size(), 1)));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  return reports;
}

SuiteSummary summarize(const std::vector<MetricReport>& reports) {
  SuiteSummary s;
  s.count = static_cast<int>(reports.size());
  CaseCounts cases;
  double md = 0.0;
  int md_n = 0, ok = 0;
  for (const auto& r : reports) {
    if (!r.ok()) {
      ++s.failed;
      continue;
    }
    ++ok;
    s.mean_ccsd += r.ccsd;
    if (r.mean_distance) {
      md += *r.mean_distance;
      ++md_n;
    }
    cases.advance += r.cases.advance;
    cases.freeze += r.cases.freeze;
    cases.fallback += r.cases.fallback;
    cases.track += r.cases.track;
    s.exhausted += r.forward_status == RunStatus::StepBudgetExhausted;
    s.converged += r.forward_status == RunStatus::Converged;
    s.mean_movement += r.mean_movement;
    s.mean_forward_steps += r.forward_steps;
  }
  if (ok > 0) {
    s.mean_ccsd /= ok;
    s.mean_movement /= ok;
    s.mean_forward_steps /= ok;
  }
  if (md_n > 0) s.mean_distance = md / md_n;
  if (cases.total() > 0) {
    s.freeze_fraction = static_cast<double>(cases.freeze) / cases.total();
    s.fallback_fraction = static_cast<double>(cases.fallback) / cases.total();
  }
  return s;
}

}  // namespace freedrag
