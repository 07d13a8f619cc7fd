#include "freedrag/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace freedrag {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ContractViolation(msg); }

void check_object(const Json& j, const std::string& ctx) {
  if (!j.is_object()) fail(ctx + ": expected an object");
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  check_object(j, ctx);
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      fail(ctx + ": unknown field '" + key + "'");
    }
  }
}

const Json& field(const Json& j, const char* key, const std::string& ctx) {
  check_object(j, ctx);
  auto it = j.find(key);
  if (it == j.end()) fail(ctx + ": missing field '" + key + "'");
  return *it;
}

double number(const Json& j, const std::string& ctx) {
  if (!j.is_number()) fail(ctx + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(ctx + ": expected a finite number");
  return v;
}

int integer(const Json& j, const std::string& ctx) {
  if (!j.is_number_integer()) fail(ctx + ": expected an integer");
  return j.get<int>();
}

std::uint64_t unsigned_integer(const Json& j, const std::string& ctx) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    fail(ctx + ": expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

bool boolean(const Json& j, const std::string& ctx) {
  if (!j.is_boolean()) fail(ctx + ": expected a boolean");
  return j.get<bool>();
}

std::string text(const Json& j, const std::string& ctx) {
  if (!j.is_string()) fail(ctx + ": expected a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const Json& j, const std::string& ctx) {
  if (!j.is_array()) fail(ctx + ": expected an array");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(number(v, ctx));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json vector_to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.begin(), v.end())); }

Eigen::VectorXd vector_from_json(const Json& j, const std::string& ctx) {
  const auto v = numbers(j, ctx);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// --- masks -----------------------------------------------------------------------

Json mask_to_rle(const Mask& mask) {
  Json rows = Json::array();
  for (int y = 0; y < mask.height(); ++y) {
    std::vector<int> runs;
    std::uint8_t value = 0;
    int run = 0;
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(y, x) != value) {
        runs.push_back(run);
        value = mask(y, x);
        run = 0;
      }
      ++run;
    }
    runs.push_back(run);
    rows.push_back(runs);
  }
  return {{"height", mask.height()}, {"width", mask.width()}, {"rle", rows}};
}

Mask mask_from_rle(const Json& j) {
  const std::string ctx = "mask";
  check_keys(j, {"height", "width", "rle"}, ctx);
  const int h = integer(field(j, "height", ctx), ctx + ".height");
  const int w = integer(field(j, "width", ctx), ctx + ".width");
  if (h < 1 || w < 1) fail(ctx + ": dimensions must be >= 1");
  const Json& rows = field(j, "rle", ctx);
  if (!rows.is_array() || static_cast<int>(rows.size()) != h) {
    fail(ctx + ".rle: expected one run list per row");
  }
  Mask m(h, w);
  for (int y = 0; y < h; ++y) {
    if (!rows[y].is_array()) fail(ctx + ".rle: each row must be an array");
    int x = 0;
    bool editable = false;
    for (const auto& run : rows[y]) {
      const int n = integer(run, ctx + ".rle");
      if (n < 0 || x + n > w) fail(ctx + ".rle: row " + std::to_string(y) + " overruns the width");
      for (int i = 0; i < n; ++i) m.set(y, x++, editable);
      editable = !editable;
    }
    if (x != w) fail(ctx + ".rle: row " + std::to_string(y) + " does not cover the width");
  }
  return m;
}

// --- points / backend / config -------------------------------------------------------

Json point_to_json(const Point2& p) { return Json::array({p.x(), p.y()}); }

Point2 point_from_json(const Json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2) fail(ctx + ": expected [x, y]");
  return {number(j[0], ctx), number(j[1], ctx)};
}

Json points_to_json(const std::vector<HandleTarget>& points) {
  Json out = Json::array();
  for (const auto& p : points) {
    out.push_back({{"handle", point_to_json(p.handle)}, {"target", point_to_json(p.target)}});
  }
  return out;
}

std::vector<HandleTarget> points_from_json(const Json& j) {
  if (!j.is_array()) fail("points: expected an array");
  std::vector<HandleTarget> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ctx = "points[" + std::to_string(i) + "]";
    check_keys(j[i], {"handle", "target"}, ctx);
    out.push_back({point_from_json(field(j[i], "handle", ctx), ctx + ".handle"),
                   point_from_json(field(j[i], "target", ctx), ctx + ".target")});
  }
  return out;
}

Json backend_to_json(const BackendSpec& spec) {
  const auto& b = spec.blobs;
  Json blobs = Json::array();
  for (const auto& s : b.blobs) {
    blobs.push_back({{"cx", s.cx},
                     {"cy", s.cy},
                     {"amplitude", s.amplitude},
                     {"width", s.width},
                     {"signature", s.signature}});
  }
  Json params = {{"height", b.height},
                 {"width", b.width},
                 {"channels", b.channels},
                 {"channel_width_scale", b.channel_width_scale},
                 {"amplitude_unit", b.amplitude_unit},
                 {"log_width_unit", b.log_width_unit},
                 {"blobs", blobs}};
  if (spec.type == BackendType::Direct) params["noise"] = spec.noise;
  return {{"type", to_string(spec.type)}, {"seed", spec.seed}, {"params", params}};
}

BackendSpec backend_from_json(const Json& j) {
  const std::string ctx = "backend";
  check_keys(j, {"type", "seed", "params"}, ctx);
  BackendSpec spec;
  spec.type = backend_type_from_string(text(field(j, "type", ctx), ctx + ".type"));
  if (j.contains("seed")) spec.seed = unsigned_integer(j["seed"], ctx + ".seed");
  spec.blobs = default_blob_scene();
  spec.blobs.seed = spec.seed;
  if (!j.contains("params")) return spec;

  const Json& p = j["params"];
  const std::string pctx = ctx + ".params";
  check_keys(p,
             {"height", "width", "channels", "channel_width_scale", "amplitude_unit",
              "log_width_unit", "blobs", "noise"},
             pctx);
  auto& b = spec.blobs;
  if (p.contains("height")) b.height = integer(p["height"], pctx + ".height");
  if (p.contains("width")) b.width = integer(p["width"], pctx + ".width");
  if (p.contains("channels")) b.channels = integer(p["channels"], pctx + ".channels");
  if (p.contains("channel_width_scale")) {
    b.channel_width_scale = numbers(p["channel_width_scale"], pctx + ".channel_width_scale");
  }
  if (p.contains("amplitude_unit")) b.amplitude_unit = number(p["amplitude_unit"], pctx + ".amplitude_unit");
  if (p.contains("log_width_unit")) b.log_width_unit = number(p["log_width_unit"], pctx + ".log_width_unit");
  if (p.contains("noise")) spec.noise = number(p["noise"], pctx + ".noise");
  if (p.contains("blobs")) {
    const Json& blobs = p["blobs"];
    if (!blobs.is_array()) fail(pctx + ".blobs: expected an array");
    for (std::size_t i = 0; i < blobs.size(); ++i) {
      const std::string bctx = pctx + ".blobs[" + std::to_string(i) + "]";
      check_keys(blobs[i], {"cx", "cy", "amplitude", "width", "signature"}, bctx);
      BlobSpec s;
      s.cx = number(field(blobs[i], "cx", bctx), bctx + ".cx");
      s.cy = number(field(blobs[i], "cy", bctx), bctx + ".cy");
      if (blobs[i].contains("amplitude")) s.amplitude = number(blobs[i]["amplitude"], bctx + ".amplitude");
      if (blobs[i].contains("width")) s.width = number(blobs[i]["width"], bctx + ".width");
      if (blobs[i].contains("signature")) s.signature = numbers(blobs[i]["signature"], bctx + ".signature");
      b.blobs.push_back(std::move(s));
    }
  }
  return spec;
}

Json config_to_json(const DragConfig& drag, const TrackConfig& track) {
  Json j = {{"l", drag.l},
            {"d", drag.d},
            {"r", drag.r},
            {"gamma", drag.gamma},
            {"lambda_cap", drag.lambda_cap},
            {"steps_per_drag", drag.steps_per_drag},
            {"max_total_steps", drag.max_total_steps},
            {"terminate_dist", drag.terminate_dist},
            {"update_template", drag.update_template},
            {"backtracking", drag.backtracking}};
  if (drag.learning_rate) j["learning_rate"] = *drag.learning_rate;
  Json t = {{"search_radius", track.search_radius},
            {"motion_step", track.motion_step},
            {"patch_radius", track.patch_radius},
            {"gamma", track.gamma},
            {"max_steps", track.max_steps},
            {"terminate_dist", track.terminate_dist}};
  if (track.learning_rate) t["learning_rate"] = *track.learning_rate;
  j["track"] = t;
  return j;
}

void apply_config(const Json& j, DragConfig& drag, TrackConfig& track) {
  const std::string ctx = "config";
  check_keys(j,
             {"l", "d", "r", "gamma", "lambda_cap", "steps_per_drag", "max_total_steps",
              "learning_rate", "terminate_dist", "update_template", "backtracking", "track"},
             ctx);
  if (j.contains("l")) drag.l = number(j["l"], ctx + ".l");
  if (j.contains("d")) drag.d = number(j["d"], ctx + ".d");
  if (j.contains("r")) drag.r = integer(j["r"], ctx + ".r");
  if (j.contains("gamma")) drag.gamma = number(j["gamma"], ctx + ".gamma");
  if (j.contains("lambda_cap")) drag.lambda_cap = number(j["lambda_cap"], ctx + ".lambda_cap");
  if (j.contains("steps_per_drag")) drag.steps_per_drag = integer(j["steps_per_drag"], ctx + ".steps_per_drag");
  if (j.contains("max_total_steps")) drag.max_total_steps = integer(j["max_total_steps"], ctx + ".max_total_steps");
  if (j.contains("learning_rate")) drag.learning_rate = number(j["learning_rate"], ctx + ".learning_rate");
  if (j.contains("terminate_dist")) drag.terminate_dist = number(j["terminate_dist"], ctx + ".terminate_dist");
  if (j.contains("update_template")) drag.update_template = boolean(j["update_template"], ctx + ".update_template");
  if (j.contains("backtracking")) drag.backtracking = boolean(j["backtracking"], ctx + ".backtracking");
  if (j.contains("track")) {
    const Json& t = j["track"];
    const std::string tctx = ctx + ".track";
    check_keys(t,
               {"search_radius", "motion_step", "patch_radius", "gamma", "learning_rate",
                "max_steps", "terminate_dist"},
               tctx);
    if (t.contains("search_radius")) track.search_radius = number(t["search_radius"], tctx + ".search_radius");
    if (t.contains("motion_step")) track.motion_step = number(t["motion_step"], tctx + ".motion_step");
    if (t.contains("patch_radius")) track.patch_radius = integer(t["patch_radius"], tctx + ".patch_radius");
    if (t.contains("gamma")) track.gamma = number(t["gamma"], tctx + ".gamma");
    if (t.contains("learning_rate")) track.learning_rate = number(t["learning_rate"], tctx + ".learning_rate");
    if (t.contains("max_steps")) track.max_steps = integer(t["max_steps"], tctx + ".max_steps");
    if (t.contains("terminate_dist")) track.terminate_dist = number(t["terminate_dist"], tctx + ".terminate_dist");
  }
  drag.validate();
  track.validate();
}

// --- instructions ----------------------------------------------------------------

Json instruction_to_json(const Instruction& inst) {
  Json j = {{"schema_version", kSchemaVersion},
            {"name", inst.name},
            {"seed", inst.seed},
            {"backend", backend_to_json(inst.backend)},
            {"points", points_to_json(inst.points)},
            {"method", to_string(inst.method)},
            {"config", config_to_json(inst.drag, inst.track)}};
  if (inst.mask) j["mask"] = mask_to_rle(*inst.mask);
  return j;
}

Instruction instruction_from_json(const Json& j) {
  const std::string ctx = "instruction";
  check_keys(j, {"schema_version", "name", "seed", "backend", "points", "mask", "method", "config"}, ctx);
  const int version = integer(field(j, "schema_version", ctx), ctx + ".schema_version");
  if (version != kSchemaVersion) {
    fail(ctx + ": unsupported schema_version " + std::to_string(version));
  }
  Instruction inst;
  if (j.contains("name")) inst.name = text(j["name"], ctx + ".name");
  inst.backend = backend_from_json(field(j, "backend", ctx));
  inst.seed = j.contains("seed") ? unsigned_integer(j["seed"], ctx + ".seed") : inst.backend.seed;
  inst.points = points_from_json(field(j, "points", ctx));
  if (j.contains("mask") && !j["mask"].is_null()) inst.mask = mask_from_rle(j["mask"]);
  if (j.contains("method")) inst.method = method_from_string(text(j["method"], ctx + ".method"));
  if (j.contains("config")) apply_config(j["config"], inst.drag, inst.track);
  inst.validate();
  return inst;
}

Json suite_to_json(const std::vector<Instruction>& instructions) {
  Json list = Json::array();
  for (const auto& inst : instructions) list.push_back(instruction_to_json(inst));
  return {{"schema_version", kSchemaVersion}, {"instructions", list}};
}

std::vector<Instruction> suite_from_json(const Json& j) {
  const Json* list = &j;
  if (j.is_object()) {
    check_keys(j, {"schema_version", "instructions"}, "suite");
    const int version = integer(field(j, "schema_version", "suite"), "suite.schema_version");
    if (version != kSchemaVersion) fail("suite: unsupported schema_version " + std::to_string(version));
    list = &field(j, "instructions", "suite");
  }
  if (!list->is_array()) fail("suite: expected an array of instructions");
  std::vector<Instruction> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    try {
      out.push_back(instruction_from_json((*list)[i]));
    } catch (const ContractViolation& e) {
      fail("suite[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// --- traces -------------------------------------------------------------------------

std::string trace_to_csv(const DragTrace& trace) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : trace.records()) {
    out += std::to_string(r.k) + "," + std::to_string(r.point_index) + "," + fmt(r.h.x()) + "," +
           fmt(r.h.y()) + "," + fmt(r.L_in) + "," + fmt(r.L_en) + "," + fmt(r.lambda) + "," +
           to_string(r.drag_case) + "," + fmt(r.loss) + "," + std::to_string(r.substeps) + "\n";
  }
  return out;
}

Json record_to_json(const DragRecord& r) {
  return {{"k", r.k},         {"point_index", r.point_index},
          {"hx", r.h.x()},    {"hy", r.h.y()},
          {"L_in", r.L_in},   {"L_en", r.L_en},
          {"lambda", r.lambda}, {"case", to_string(r.drag_case)},
          {"loss", r.loss},   {"substeps", r.substeps}};
}

DragRecord record_from_json(const Json& j) {
  const std::string ctx = "trace record";
  DragRecord r;
  r.k = integer(field(j, "k", ctx), ctx);
  r.point_index = integer(field(j, "point_index", ctx), ctx);
  r.h = {number(field(j, "hx", ctx), ctx), number(field(j, "hy", ctx), ctx)};
  r.L_in = number(field(j, "L_in", ctx), ctx);
  r.L_en = number(field(j, "L_en", ctx), ctx);
  r.lambda = number(field(j, "lambda", ctx), ctx);
  r.drag_case = drag_case_from_string(text(field(j, "case", ctx), ctx));
  r.loss = number(field(j, "loss", ctx), ctx);
  r.substeps = integer(field(j, "substeps", ctx), ctx);
  return r;
}

Json trace_records_to_json(const DragTrace& trace, std::size_t from) {
  Json out = Json::array();
  for (std::size_t i = from; i < trace.records().size(); ++i) {
    out.push_back(record_to_json(trace.records()[i]));
  }
  return out;
}

Json trace_to_json(const DragTrace& trace) {
  return {{"records", trace_records_to_json(trace)}, {"substep_losses", trace.substep_losses()}};
}

DragTrace trace_from_json(const Json& j) {
  DragTrace t;
  const Json& records = field(j, "records", "trace");
  if (!records.is_array()) fail("trace.records: expected an array");
  for (const auto& r : records) t.append(record_from_json(r));
  for (double v : numbers(field(j, "substep_losses", "trace"), "trace.substep_losses")) {
    t.append_substep_loss(v);
  }
  return t;
}

// --- renders ------------------------------------------------------------------------

namespace {

void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

struct PngReader {
  const std::string* bytes;
  std::size_t pos;
};

void png_read_from_string(png_structp png, png_bytep data, png_size_t length) {
  auto* in = static_cast<PngReader*>(png_get_io_ptr(png));
  if (in->pos + length > in->bytes->size()) png_error(png, "truncated PNG");
  std::copy_n(in->bytes->data() + in->pos, length, reinterpret_cast<char*>(data));
  in->pos += length;
}

}  // namespace

EncodedRender encode_render(const Render& img) {
  detail::require(img.size() > 0, "encode_render: empty render");
  detail::require(img.allFinite(), "encode_render: non-finite render");
  EncodedRender enc;
  enc.height = static_cast<int>(img.rows());
  enc.width = static_cast<int>(img.cols());
  enc.min = img.minCoeff();
  enc.max = img.maxCoeff();
  const double range = enc.max - enc.min;

  std::vector<png_byte> pixels(static_cast<std::size_t>(enc.height) * enc.width);
  for (int y = 0; y < enc.height; ++y) {
    for (int x = 0; x < enc.width; ++x) {
      const double v = range > 0.0 ? (img(y, x) - enc.min) / range : 0.0;
      pixels[static_cast<std::size_t>(y) * enc.width + x] =
          static_cast<png_byte>(std::clamp(std::lround(v * 255.0), 0L, 255L));
    }
  }

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed");
  }
  png_set_write_fn(png, &enc.png, png_write_to_string, nullptr);
  png_set_IHDR(png, info, enc.width, enc.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < enc.height; ++y) {
    png_write_row(png, &pixels[static_cast<std::size_t>(y) * enc.width]);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return enc;
}

Eigen::ArrayXXi decode_png_gray(const std::string& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Eigen::ArrayXXi out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("PNG decoding failed");
  }
  PngReader reader{&bytes, 0};
  png_set_read_fn(png, &reader, png_read_from_string);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("expected an 8-bit grayscale PNG");
  }
  out.resize(h, w);
  std::vector<png_byte> row(w);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) out(y, x) = row[x];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::string base64_encode(const std::string& bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) |
                            std::uint8_t(bytes[i + 2]);
    for (int s : {18, 12, 6, 0}) out += kAlphabet[(v >> s) & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint8_t(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= std::uint8_t(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

Json EncodedRender::sidecar() const {
  return {{"format", "png"},
          {"bit_depth", 8},
          {"projection", "channel_mean"},
          {"normalization", "min_max"},
          {"min", min},
          {"max", max},
          {"height", height},
          {"width", width}};
}

Json render_to_json(const Render& img) {
  const EncodedRender enc = encode_render(img);
  Json j = enc.sidecar();
  j["png_base64"] = base64_encode(enc.png);
  return j;
}

void write_render(const std::filesystem::path& stem, const Render& img) {
  const EncodedRender enc = encode_render(img);
  write_text_file(stem.string() + ".png", enc.png);
  write_text_file(stem.string() + ".json", enc.sidecar().dump(2) + "\n");
}

// --- reports ------------------------------------------------------------------------

Json report_to_json(const MetricReport& r, bool include_timing) {
  Json j = {{"name", r.name},
            {"method", to_string(r.method)},
            {"kernel", r.kernel},
            {"ccsd", r.ccsd},
            {"mean_distance", r.mean_distance ? Json(*r.mean_distance) : Json(nullptr)},
            {"steps_used", r.steps_used},
            {"forward_steps", r.forward_steps},
            {"forward_status", to_string(r.forward_status)},
            {"reverse_status", to_string(r.reverse_status)},
            {"cases",
             {{"advance", r.cases.advance},
              {"freeze", r.cases.freeze},
              {"fallback", r.cases.fallback},
              {"track", r.cases.track}}},
            {"mean_movement", r.mean_movement},
            {"error", r.error}};
  if (include_timing) j["wall_time"] = r.wall_time;
  return j;
}

namespace {

// RFC 4180 field: quoted when it holds a comma, quote or line break.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string reports_to_csv(const std::vector<MetricReport>& reports, bool include_timing) {
  std::ostringstream out;
  out << "name,method,kernel,ccsd,mean_distance,steps_used,forward_steps,forward_status,"
         "reverse_status,advance,freeze,fallback,track,mean_movement,"
      << (include_timing ? "wall_time," : "") << "error\n";
  for (const auto& r : reports) {
    out << csv_field(r.name) << ',' << to_string(r.method) << ',' << r.kernel << ',' << fmt(r.ccsd) << ','
        << (r.mean_distance ? fmt(*r.mean_distance) : "") << ',' << r.steps_used << ','
        << r.forward_steps << ',' << to_string(r.forward_status) << ','
        << to_string(r.reverse_status) << ',' << r.cases.advance << ',' << r.cases.freeze << ','
        << r.cases.fallback << ',' << r.cases.track << ',' << fmt(r.mean_movement) << ','
        << (include_timing ? fmt(r.wall_time) + "," : "") << csv_field(r.error) << '\n';
  }
  return out.str();
}

Json summary_to_json(const SuiteSummary& s) {
  return {{"count", s.count},
          {"failed", s.failed},
          {"mean_ccsd", s.mean_ccsd},
          {"mean_distance", s.mean_distance ? Json(*s.mean_distance) : Json(nullptr)},
          {"freeze_fraction", s.freeze_fraction},
          {"fallback_fraction", s.fallback_fraction},
          {"exhausted", s.exhausted},
          {"converged", s.converged},
          {"mean_movement", s.mean_movement},
          {"mean_forward_steps", s.mean_forward_steps}};
}

// --- run state ----------------------------------------------------------------------

namespace {

std::string to_string(PointStatus s) { return s == PointStatus::Active ? "active" : "terminated"; }

PointStatus point_status_from_string(const std::string& s) {
  if (s == "active") return PointStatus::Active;
  if (s == "terminated") return PointStatus::Terminated;
  fail("unknown point status '" + s + "'");
}

}  // namespace

Json state_to_json(const DragState& state) {
  Json points = Json::array();
  for (const auto& p : state.points) {
    points.push_back({{"origin", point_to_json(p.origin)},
                      {"target", point_to_json(p.target)},
                      {"current", point_to_json(p.current)},
                      {"template", vector_to_json(p.tmpl)},
                      {"L_in", p.L_in},
                      {"L_en", p.L_en},
                      {"lambda", p.lambda_last},
                      {"status", to_string(p.status)}});
  }
  Json j = {{"latent", vector_to_json(state.latent)},
            {"points", points},
            {"drag_index", state.drag_index},
            {"substep", state.substep},
            {"trace", trace_to_json(state.trace)}};
  j["mask"] = state.mask ? mask_to_rle(*state.mask) : Json(nullptr);
  return j;
}

DragState state_from_json(const Json& j, std::shared_ptr<const FeatureMap> F0) {
  const std::string ctx = "state";
  DragState s;
  s.latent = vector_from_json(field(j, "latent", ctx), ctx + ".latent");
  const Json& points = field(j, "points", ctx);
  if (!points.is_array()) fail(ctx + ".points: expected an array");
  for (const auto& pj : points) {
    const std::string pctx = ctx + ".points[]";
    DragPoint p;
    p.origin = point_from_json(field(pj, "origin", pctx), pctx + ".origin");
    p.target = point_from_json(field(pj, "target", pctx), pctx + ".target");
    p.current = point_from_json(field(pj, "current", pctx), pctx + ".current");
    p.tmpl = vector_from_json(field(pj, "template", pctx), pctx + ".template");
    p.L_in = number(field(pj, "L_in", pctx), pctx + ".L_in");
    p.L_en = number(field(pj, "L_en", pctx), pctx + ".L_en");
    p.lambda_last = number(field(pj, "lambda", pctx), pctx + ".lambda");
    p.status = point_status_from_string(text(field(pj, "status", pctx), pctx + ".status"));
    s.points.push_back(std::move(p));
  }
  if (j.contains("mask") && !j["mask"].is_null()) s.mask = mask_from_rle(j["mask"]);
  s.F0 = std::move(F0);
  s.drag_index = integer(field(j, "drag_index", ctx), ctx + ".drag_index");
  s.substep = integer(field(j, "substep", ctx), ctx + ".substep");
  s.trace = trace_from_json(field(j, "trace", ctx));
  return s;
}

}  // namespace freedrag
