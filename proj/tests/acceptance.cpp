// Acceptance harness: one PASS/FAIL line per primary criterion, with details.
//
//   acceptance            exit 0 when every criterion was evaluated
//   acceptance --strict   exit 1 unless every criterion passes

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "freedrag/io.hpp"
#include "freedrag/sampling.hpp"
#include "test_util.hpp"

#ifndef FREEDRAG_CLI_PATH
#error "FREEDRAG_CLI_PATH must name the freedrag executable"
#endif

namespace freedrag {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;

  template <typename... Args>
  void note(const char* format, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    details.emplace_back(buf);
  }
};

struct Criterion {
  std::string name;
  double budget_s;  // wall-clock limit; <= 0 means none
  std::function<Outcome()> check;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// --- criteria --------------------------------------------------------------------

Outcome lambda_identities() {
  Outcome o;
  double worst = 0.0;
  for (double l : {0.1, 0.3, 0.4, 1.0}) {
    const auto [alpha, beta] = calibrate(l);
    const double well = lambda_coeff(0.2 * l, alpha, beta, 1.0);
    const double ill = lambda_coeff(0.8 * l, alpha, beta, 1.0);
    worst = std::max({worst, std::abs(well - 0.5), std::abs(ill - 0.1)});
    o.note("l=%.1f: lambda(0.2l)=%.12f lambda(0.8l)=%.12f", l, well, ill);
  }
  o.note("max deviation %.3g (limit 1e-9)", worst);
  o.pass = worst < 1e-9;
  return o;
}

Outcome gradient_oracle() {
  Outcome o;
  double worst_direct = 0.0, worst_blob = 0.0;
  int ok = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const double d = testing::direct_gradient_error(seed);
    const double b = testing::blob_gradient_error(seed);
    worst_direct = std::max(worst_direct, d);
    worst_blob = std::max(worst_blob, b);
    ok += (d < 1e-4) + (b < 1e-4);
  }
  o.note("direct field: 20 configs, max relative error %.3g", worst_direct);
  o.note("blob backend: 20 configs, max relative error %.3g", worst_blob);
  o.note("%d / 40 below 1e-4", ok);
  o.pass = ok == 40;
  return o;
}

Outcome truth_table() {
  Outcome o;
  const FeatureMap F = testing::random_field({32, 32, 2}, 3, 0.0, 1.0);
  DragConfig cfg;
  cfg.r = 1;
  DragPoint p;
  p.origin = Point2(4, 16);
  p.target = Point2(28, 16);
  p.current = Point2(12, 16);
  const FeatureVector T = aggregate(F, p.origin, cfg.r);
  const Point2 dir = (p.target - p.origin).normalized();
  int matched = 0, cases = 0;
  CaseCounts seen;
  for (int i = 1; i <= 12; ++i) {
    for (int e = 1; e <= 12; ++e) {
      p.L_in = 0.1 * i * cfg.l;
      p.L_en = 0.1 * e * cfg.l;
      ++cases;
      // The rule, stated independently of the implementation.
      DragCase want;
      Point2 where;
      if (p.L_en <= 0.5 * cfg.l) {
        want = DragCase::Advance;
        where = *localize(p.current, p.target, T, cfg.d, cfg.l, F, cfg.r);
        ++seen.advance;
      } else if (p.L_en <= p.L_in) {
        want = DragCase::Freeze;
        where = p.current;
        ++seen.freeze;
      } else {
        want = DragCase::Fallback;
        where = *localize(p.current - cfg.d * dir, p.target, T, 2 * cfg.d, 0.0, F, cfg.r);
        ++seen.fallback;
      }
      const PositionUpdate got = next_position(p, T, cfg, F);
      matched += got.drag_case == want && got.position == where;
    }
  }
  o.note("%d / %d cases match (advance %d, freeze %d, fallback %d)", matched, cases, seen.advance,
         seen.freeze, seen.fallback);
  o.pass = matched == 144 && cases == 144;
  return o;
}

Outcome line_invariant() {
  Outcome o;
  std::vector<Instruction> runs = standard_suite(25, 404);
  for (auto& inst : ambiguity_suite(25, 404)) runs.push_back(std::move(inst));
  double worst = 0.0;
  std::size_t records = 0;
  const auto check = [&](const Instruction& inst, const DragTrace& trace) {
    for (const auto& r : trace.records()) {
      const auto& pt = inst.points[r.point_index];
      worst = std::max(worst, testing::segment_distance(r.h, pt.handle, pt.target));
      ++records;
    }
  };
  for (const auto& inst : runs) {
    const Problem p = make_problem(inst.backend);
    const RunResult fwd = run_instruction(inst, *p.backend, p.initial_latent);
    check(inst, fwd.state.trace);
    std::vector<Point2> finals;
    for (const auto& pt : fwd.state.points) finals.push_back(pt.current);
    const Instruction rev = reverse_instruction(inst, finals);
    check(rev, run_instruction(rev, *p.backend, fwd.state.latent).state.trace);
  }
  o.note("50 runs (forward and reverse), %zu recorded positions", records);
  o.note("max distance to segment %.3g px (limit 1e-6)", worst);
  o.pass = worst <= 1e-6 && records > 0;
  return o;
}

Outcome convergence() {
  Outcome o;
  int good = 0;
  double slowest = 0.0;
  for (const auto& inst : single_blob_suite(20, 1)) {
    const auto t0 = Clock::now();
    const Problem p = make_problem(inst.backend);
    const RunResult r = run_instruction(inst, *p.backend, p.initial_latent);
    const double wall = seconds_since(t0);
    slowest = std::max(slowest, wall);
    const double dist = mean_distance_oracle(inst, p.initial_latent, r.state.latent, *p.backend);
    const double len = (inst.points[0].target - inst.points[0].handle).norm();
    const bool ok = r.status == RunStatus::Converged && dist <= 2.0 && wall < 60.0;
    good += ok;
    o.note("%s len=%.1f status=%s center error=%.2f px %s", inst.name.c_str(), len,
           to_string(r.status).c_str(), dist, ok ? "" : "<-");
  }
  o.note("%d / 20 converged within 2 px (need 18); slowest run %.2f s", good, slowest);
  o.pass = good >= 18;
  return o;
}

SuiteSummary run_and_summarize(const std::vector<Instruction>& insts, const SuiteOptions& opt) {
  return summarize(run_suite(insts, opt));
}

Outcome ambiguity_ab() {
  Outcome o;
  const auto suite = ambiguity_suite(20, 1);
  SuiteOptions free_opt, point_opt;
  free_opt.method = Method::FreeDrag;
  point_opt.method = Method::PointDrag;
  const SuiteSummary f = run_and_summarize(suite, free_opt);
  const SuiteSummary p = run_and_summarize(suite, point_opt);
  o.note("freedrag:  mean distance %.4f px, mean CCSD %.6f, failed %d", f.mean_distance.value_or(-1),
         f.mean_ccsd, f.failed);
  o.note("pointdrag: mean distance %.4f px, mean CCSD %.6f, failed %d", p.mean_distance.value_or(-1),
         p.mean_ccsd, p.failed);
  o.pass = f.failed == 0 && p.failed == 0 && f.mean_distance && p.mean_distance &&
           *p.mean_distance > *f.mean_distance && f.mean_ccsd < p.mean_ccsd;
  return o;
}

Outcome ablation() {
  Outcome o;
  const auto suite = standard_suite(20, 1);
  const auto variant = [&](std::function<void(Instruction&)> adjust) {
    SuiteOptions opt;
    opt.method = Method::FreeDrag;
    opt.adjust = std::move(adjust);
    return run_and_summarize(suite, opt);
  };
  const SuiteSummary full = variant(nullptr);
  const SuiteSummary small = variant([](Instruction& i) {
    i.drag.l = 0.15;
    i.drag.d = 1.5;
  });
  const SuiteSummary no_update = variant([](Instruction& i) { i.drag.update_template = false; });
  const SuiteSummary no_back = variant([](Instruction& i) { i.drag.backtracking = false; });
  const auto line = [&](const char* label, const SuiteSummary& s) {
    o.note("%-16s mean CCSD %.6f  freeze fraction %.4f  exhausted %d/20  failed %d", label,
           s.mean_ccsd, s.freeze_fraction, s.exhausted, s.failed);
  };
  line("full (preset A)", full);
  line("l=0.15 d=1.5", small);
  line("w/o updating", no_update);
  line("w/o backtracking", no_back);
  const bool conservative =
      small.freeze_fraction > full.freeze_fraction && small.exhausted > full.exhausted;
  const bool update_helps = no_update.mean_ccsd > full.mean_ccsd;
  const bool backtracking_helps = no_back.mean_ccsd > full.mean_ccsd;
  o.note("small l/d more conservative (freeze and exhausted up): %s", conservative ? "yes" : "NO");
  o.note("w/o updating worse CCSD than full: %s", update_helps ? "yes" : "NO");
  o.note("w/o backtracking worse CCSD than full: %s", backtracking_helps ? "yes" : "NO");
  o.pass = full.failed + small.failed + no_update.failed + no_back.failed == 0 && conservative &&
           update_helps && backtracking_helps;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "freedrag_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text_file(dir / "inst.json", instruction_to_json(ambiguity_suite(1, 7)[0]).dump(2));
  const std::string cli = FREEDRAG_CLI_PATH;
  const auto invoke = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  bool ok = true;
  for (const char* out : {"run1", "run2"}) {
    ok &= invoke("run --instruction " + (dir / "inst.json").string() + " --out " +
                 (dir / out).string() + " --no-timing") == 0;
  }
  for (const char* out : {"suite1", "suite2"}) {
    ok &= invoke("suite --builtin standard --count 6 --seed 3 --no-timing --out " +
                 (dir / out).string()) == 0;
  }
  o.note("CLI invocations succeeded: %s", ok ? "yes" : "NO");
  int same = 0, files = 0;
  const auto compare = [&](const char* a, const char* b, const char* file) {
    ++files;
    const std::string x = slurp(dir / a / file), y = slurp(dir / b / file);
    const bool eq = !x.empty() && x == y;
    same += eq;
    o.note("%s/%s: %zu bytes, %s", a, file, x.size(), eq ? "identical" : "DIFFERENT");
  };
  for (const char* f : {"trace.csv", "report.json", "render_final.png", "render_final.json"}) {
    compare("run1", "run2", f);
  }
  compare("suite1", "suite2", "report.json");
  compare("suite1", "suite2", "report.csv");

  // In-process: the same suite twice, and single- vs multi-threaded.
  const auto suite = standard_suite(6, 3);
  SuiteOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = run_suite(suite, one), b = run_suite(suite, many), c = run_suite(suite, one);
  bool in_process = true;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    for (const auto* r : {&b[i], &c[i]}) {
      in_process &= r->ccsd == a[i].ccsd && r->mean_distance == a[i].mean_distance &&
                    r->forward_trace == a[i].forward_trace && r->steps_used == a[i].steps_used;
    }
  }
  o.note("in-process suite repeats (1 and 4 threads) bit-identical: %s", in_process ? "yes" : "NO");
  fs::remove_all(dir);
  o.pass = ok && same == files && in_process;
  return o;
}

}  // namespace
}  // namespace freedrag

int main(int argc, char** argv) {
  using namespace freedrag;
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  const std::vector<Criterion> criteria = {
      {"lambda-calibration identities", 1.0, lambda_identities},
      {"gradient oracle (central differences)", 30.0, gradient_oracle},
      {"backtracking truth table (144 cases)", 1.0, truth_table},
      {"line invariant (50 runs)", 120.0, line_invariant},
      {"convergence oracle (single blob, 18/20 within 2 px)", 20 * 60.0, convergence},
      {"ambiguity A/B (duplicated blobs)", 600.0, ambiguity_ab},
      {"ablation direction (l/d, w/o updating, w/o backtracking)", 900.0, ablation},
      {"determinism (CLI and suite)", 0.0, determinism},
  };
  int passed = 0, errors = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    std::string error;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      error = e.what();
      ++errors;
    }
    const double wall = seconds_since(t0);
    const bool in_time = c.budget_s <= 0.0 || wall < c.budget_s;
    const bool pass = error.empty() && o.pass && in_time;
    passed += pass;
    std::printf("%s [PRIMARY] %s (%.2f s", pass ? "PASS" : "FAIL", c.name.c_str(), wall);
    if (c.budget_s > 0.0) std::printf(", budget %.0f s", c.budget_s);
    std::printf(")\n");
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    if (!error.empty()) std::printf("    ERROR: %s\n", error.c_str());
    if (!in_time) std::printf("    over the time budget\n");
    std::fflush(stdout);
  }
  std::printf("%d / %zu primary criteria pass\n", passed, criteria.size());
  if (errors > 0) return 2;
  return strict && passed != static_cast<int>(criteria.size()) ? 1 : 0;
}
