#include "freedrag/cli.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <ostream>

#include "freedrag/io.hpp"
#include "freedrag/server.hpp"

namespace freedrag {

namespace fs = std::filesystem;

namespace {

struct SuiteSource {
  std::string instructions;  // file path; empty means builtin
  std::string builtin = "standard";
  int count = 20;
  std::uint64_t seed = 1;
};

std::vector<Instruction> load_suite(const SuiteSource& src) {
  if (!src.instructions.empty()) return suite_from_json(read_json_file(src.instructions));
  if (src.builtin == "single") return single_blob_suite(src.count, src.seed);
  if (src.builtin == "standard") return standard_suite(src.count, src.seed);
  if (src.builtin == "ambiguity") return ambiguity_suite(src.count, src.seed);
  throw ContractViolation("unknown builtin suite '" + src.builtin + "'");
}

void add_suite_source(CLI::App* cmd, SuiteSource& src) {
  cmd->add_option("--instructions", src.instructions, "Suite JSON file")->check(CLI::ExistingFile);
  cmd->add_option("--builtin", src.builtin, "Built-in suite when no file is given")
      ->check(CLI::IsMember({"single", "standard", "ambiguity"}));
  cmd->add_option("--count", src.count, "Instances in the built-in suite")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", src.seed, "Seed of the built-in suite");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_summary(std::ostream& out, const std::string& label, const SuiteSummary& s) {
  out << label << ": instances=" << s.count << " failed=" << s.failed
      << " mean_ccsd=" << fmt(s.mean_ccsd)
      << " mean_distance=" << (s.mean_distance ? fmt(*s.mean_distance) : std::string("n/a"))
      << " freeze_fraction=" << fmt(s.freeze_fraction)
      << " fallback_fraction=" << fmt(s.fallback_fraction) << " exhausted=" << s.exhausted
      << " converged=" << s.converged << " mean_movement=" << fmt(s.mean_movement)
      << " mean_forward_steps=" << fmt(s.mean_forward_steps) << "\n";
}

void write_reports(const fs::path& dir, const std::vector<MetricReport>& reports,
                   const SuiteSummary& summary, bool timing, const Json& extra) {
  Json list = Json::array();
  for (const auto& r : reports) list.push_back(report_to_json(r, timing));
  Json doc = {{"schema_version", kSchemaVersion},
              {"summary", summary_to_json(summary)},
              {"reports", list}};
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  write_text_file(dir / "report.json", doc.dump(2) + "\n");
  write_text_file(dir / "report.csv", reports_to_csv(reports, timing));
}

// --- run ------------------------------------------------------------------------

struct RunArgs {
  std::string instruction;
  std::string out_dir;
  int drags = -1;
  bool no_timing = false;
};

int do_run(const RunArgs& a, std::ostream& out) {
  const Instruction inst = instruction_from_json(read_json_file(a.instruction));
  const Problem problem = make_problem(inst.backend);
  const GeneratorBackend& backend = *problem.backend;
  const auto t0 = std::chrono::steady_clock::now();

  DragState state = init_instruction_state(inst, backend, problem.initial_latent);
  RunStatus status = instruction_status(inst, state);
  int drags = 0;
  while (status == RunStatus::Running && (a.drags < 0 || drags < a.drags)) {
    try {
      status = step_instruction(inst, state, backend);
    } catch (const DivergedError&) {
      status = RunStatus::Diverged;
    }
    ++drags;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_text_file(dir / "trace.csv", trace_to_csv(state.trace));
  write_render(dir / "render_initial", render(*state.F0));
  write_render(dir / "render_final", render(backend.generate(state.latent)));

  Json finals = Json::array();
  for (const auto& p : state.points) finals.push_back(point_to_json(p.current));
  Json report = {{"schema_version", kSchemaVersion},
                 {"name", inst.name},
                 {"method", to_string(inst.method)},
                 {"status", to_string(status)},
                 {"drags", drags},
                 {"substeps", state.substep},
                 {"trace_rows", state.trace.size()},
                 {"final_positions", finals}};
  const CaseCounts c = count_cases(state.trace);
  report["cases"] = {{"advance", c.advance}, {"freeze", c.freeze}, {"fallback", c.fallback},
                     {"track", c.track}};
  if (inst.backend.type == BackendType::Blob) {
    report["mean_distance"] =
        mean_distance_oracle(inst, problem.initial_latent, state.latent, backend);
  }
  if (!a.no_timing) report["wall_time"] = wall;
  write_text_file(dir / "report.json", report.dump(2) + "\n");

  out << "run: status=" << to_string(status) << " drags=" << drags
      << " substeps=" << state.substep << " -> " << dir.string() << "\n";
  return status == RunStatus::Diverged ? 3 : 0;
}

// --- suite -----------------------------------------------------------------------

struct SuiteArgs {
  SuiteSource src;
  std::string method;
  std::string out_dir;
  std::string emit;
  int threads = 0;
  bool no_timing = false;
};

int do_suite(const SuiteArgs& a, std::ostream& out) {
  const auto instructions = load_suite(a.src);
  if (!a.emit.empty()) write_text_file(a.emit, suite_to_json(instructions).dump(2) + "\n");
  SuiteOptions opt;
  opt.threads = a.threads;
  if (!a.method.empty()) opt.method = method_from_string(a.method);
  const auto reports = run_suite(instructions, opt);
  const SuiteSummary summary = summarize(reports);
  if (!a.out_dir.empty()) write_reports(a.out_dir, reports, summary, !a.no_timing, Json::object());
  print_summary(out, "suite", summary);
  return summary.failed == 0 ? 0 : 4;
}

// --- ablate ----------------------------------------------------------------------

struct AblateArgs {
  SuiteSource src;
  std::optional<double> l;
  std::optional<double> d;
  bool no_update = false;
  bool no_backtracking = false;
  std::string out_dir;
  int threads = 0;
  bool no_timing = false;
};

int do_ablate(const AblateArgs& a, std::ostream& out) {
  const auto instructions = load_suite(a.src);
  SuiteOptions opt;
  opt.threads = a.threads;
  opt.method = Method::FreeDrag;
  opt.adjust = [&](Instruction& inst) {
    if (a.l) inst.drag.l = *a.l;
    if (a.d) inst.drag.d = *a.d;
    if (a.no_update) inst.drag.update_template = false;
    if (a.no_backtracking) inst.drag.backtracking = false;
  };
  // Fail on bad overrides before spending time on the suite.
  if (!instructions.empty()) {
    Instruction probe = instructions.front();
    opt.adjust(probe);
    probe.drag.validate();
  }
  const auto reports = run_suite(instructions, opt);
  const SuiteSummary summary = summarize(reports);

  Json settings = {{"l", a.l ? Json(*a.l) : Json(nullptr)},
                   {"d", a.d ? Json(*a.d) : Json(nullptr)},
                   {"update_template", !a.no_update},
                   {"backtracking", !a.no_backtracking}};
  if (!a.out_dir.empty()) {
    const fs::path dir(a.out_dir);
    write_reports(dir, reports, summary, !a.no_timing, {{"ablation", settings}});
    for (const auto& r : reports) {
      write_text_file(dir / "traces" / (r.name + ".csv"), trace_to_csv(r.forward_trace));
    }
  }
  print_summary(out, "ablate " + settings.dump(), summary);
  return summary.failed == 0 ? 0 : 4;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"FreeDrag feature dragging on synthetic differentiable backends"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Execute one instruction file");
  run_cmd->add_option("--instruction", run.instruction, "Instruction JSON")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out_dir, "Output directory")->required();
  run_cmd->add_option("--drags", run.drags, "Stop after this many drags (default: run to the end)");
  run_cmd->add_flag("--no-timing", run.no_timing, "Omit wall time for byte-stable output");

  SuiteArgs suite;
  auto* suite_cmd = app.add_subcommand("suite", "Run an evaluation suite (forward + reverse)");
  add_suite_source(suite_cmd, suite.src);
  suite_cmd->add_option("--method", suite.method, "Override every instruction's method")
      ->check(CLI::IsMember({"freedrag", "pointdrag"}));
  suite_cmd->add_option("--out", suite.out_dir, "Directory for report.json and report.csv");
  suite_cmd->add_option("--emit-instructions", suite.emit, "Also write the suite as JSON here");
  suite_cmd->add_option("--threads", suite.threads, "Worker threads (0: all cores)");
  suite_cmd->add_flag("--no-timing", suite.no_timing, "Omit wall time for byte-stable output");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run a suite with ablated drag settings");
  add_suite_source(ablate_cmd, ablate.src);
  ablate_cmd->add_option("--l", ablate.l, "Feature discrepancy target l");
  ablate_cmd->add_option("--d", ablate.d, "Max single movement distance d");
  ablate_cmd->add_flag("--no-update", ablate.no_update, "Pin the template update lambda to 0");
  ablate_cmd->add_flag("--no-backtracking", ablate.no_backtracking,
                       "Always take the plain line-search step");
  ablate_cmd->add_option("--out", ablate.out_dir, "Directory for reports and per-run traces");
  ablate_cmd->add_option("--threads", ablate.threads, "Worker threads (0: all cores)");
  ablate_cmd->add_flag("--no-timing", ablate.no_timing, "Omit wall time for byte-stable output");

  std::string host = "127.0.0.1";
  int port = port_from_env();
  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP session service");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (default: FREEDRAG_PORT or 8787)")
      ->check(CLI::Range(1, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version print and succeed; every parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) return do_run(run, out);
    if (*suite_cmd) return do_suite(suite, out);
    if (*ablate_cmd) return do_ablate(ablate, out);
    if (*serve_cmd) {
      serve(host, port);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "freedrag: error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace freedrag
