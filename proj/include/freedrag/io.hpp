#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freedrag/evaluation.hpp"

namespace freedrag {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// --- instruction files ------------------------------------------------------
//
// {
//   "schema_version": 1,
//   "name": "...",                                   optional
//   "backend": {"type": "blob" | "direct", "seed": n, "params": {...}},
//   "points": [{"handle": [x, y], "target": [x, y]}, ...],
//   "mask": {"height": H, "width": W, "rle": [[runs], ...]},   optional
//   "method": "freedrag" | "pointdrag",              optional
//   "config": {"l": ..., "track": {...}, ...}        optional overrides
// }
//
// Malformed documents raise ContractViolation naming the offending field.

/// Runs of alternating 0 / 1 cells per row, starting with 0 (a leading run may
/// be empty). Each row's runs sum to the width.
Json mask_to_rle(const Mask& mask);
Mask mask_from_rle(const Json& j);

Json point_to_json(const Point2& p);
Point2 point_from_json(const Json& j, const std::string& field);

Json backend_to_json(const BackendSpec& spec);
BackendSpec backend_from_json(const Json& j);

/// Every DragConfig / TrackConfig field, TrackConfig under "track".
Json config_to_json(const DragConfig& drag, const TrackConfig& track);
/// Applies the overrides in j; unknown keys are rejected.
void apply_config(const Json& j, DragConfig& drag, TrackConfig& track);

Json instruction_to_json(const Instruction& inst);
Instruction instruction_from_json(const Json& j);

Json points_to_json(const std::vector<HandleTarget>& points);
std::vector<HandleTarget> points_from_json(const Json& j);

/// A suite file is {"schema_version": 1, "instructions": [...]} or a bare
/// array of instructions.
Json suite_to_json(const std::vector<Instruction>& instructions);
std::vector<Instruction> suite_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// --- traces --------------------------------------------------------------------

inline constexpr const char* kTraceHeader = "k,point_index,hx,hy,L_in,L_en,lambda,case,loss,substeps";

/// One row per record; doubles printed with round-trip precision.
std::string trace_to_csv(const DragTrace& trace);
Json record_to_json(const DragRecord& r);
DragRecord record_from_json(const Json& j);
/// Records [from, end) as a JSON array.
Json trace_records_to_json(const DragTrace& trace, std::size_t from = 0);

// --- renders -------------------------------------------------------------------

/// 8-bit grayscale PNG of a render, linearly mapped from [min, max] to
/// [0, 255]. A flat render maps to 0.
struct EncodedRender {
  std::string png;  // raw PNG bytes
  double min = 0.0;
  double max = 0.0;
  int height = 0;
  int width = 0;

  /// Sidecar metadata: scale, shape and the projection used.
  Json sidecar() const;
};
EncodedRender encode_render(const Render& img);

/// Decodes an 8-bit grayscale PNG into quantized levels 0..255.
Eigen::ArrayXXi decode_png_gray(const std::string& png);

std::string base64_encode(const std::string& bytes);

/// {"png_base64", "min", "max", "height", "width", ...}.
Json render_to_json(const Render& img);

/// Writes <stem>.png and <stem>.json.
void write_render(const std::filesystem::path& stem, const Render& img);

// --- reports -------------------------------------------------------------------

Json report_to_json(const MetricReport& r, bool include_timing = true);
std::string reports_to_csv(const std::vector<MetricReport>& reports, bool include_timing = true);
Json summary_to_json(const SuiteSummary& s);

// --- run state -----------------------------------------------------------------

/// Exact round trip of the mutable drag state. F0 is not stored; it is
/// rebuilt from the instruction's initial latent on load.
Json state_to_json(const DragState& state);
DragState state_from_json(const Json& j, std::shared_ptr<const FeatureMap> F0);

Json trace_to_json(const DragTrace& trace);
DragTrace trace_from_json(const Json& j);

}  // namespace freedrag
