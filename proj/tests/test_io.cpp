#include <gtest/gtest.h>

#include <sstream>

#include "freedrag/io.hpp"
#include "test_util.hpp"

namespace freedrag {
namespace {

Mask striped_mask() {
  Mask M(5, 7, 0);
  for (int x = 2; x < 5; ++x) M.set(1, x, true);
  for (int x = 0; x < 7; ++x) M.set(3, x, true);
  M.set(4, 6, true);
  return M;
}

TEST(MaskRle, RoundTrip) {
  const Mask M = striped_mask();
  const Json j = mask_to_rle(M);
  EXPECT_EQ(j["height"], 5);
  EXPECT_EQ(j["width"], 7);
  EXPECT_EQ(j["rle"][0], Json::array({7}));
  EXPECT_EQ(j["rle"][1], Json::array({2, 3, 2}));
  EXPECT_EQ(j["rle"][3], Json::array({0, 7}));
  EXPECT_EQ(mask_from_rle(j), M);
}

TEST(MaskRle, RejectsMalformedRows) {
  EXPECT_THROW(mask_from_rle(Json::parse(R"({"height":1,"width":3,"rle":[[1,1]]})")), ContractViolation);
  EXPECT_THROW(mask_from_rle(Json::parse(R"({"height":2,"width":3,"rle":[[3]]})")), ContractViolation);
  EXPECT_THROW(mask_from_rle(Json::parse(R"({"height":1,"width":3,"rle":[[-1,4]]})")), ContractViolation);
  EXPECT_THROW(mask_from_rle(Json::parse(R"({"height":1,"width":3})")), ContractViolation);
  EXPECT_THROW(mask_from_rle(Json::parse(R"({"height":0,"width":3,"rle":[]})")), ContractViolation);
}

Instruction sample_instruction() {
  Instruction inst = testing::blob_instruction(testing::one_blob(20.25, 31.5),
                                               {{Point2(20.25, 31.5), Point2(40.125, 30)}}, 42);
  inst.name = "sample";
  inst.mask = Mask(64, 64, 1);
  inst.method = Method::PointDrag;
  inst.drag.l = 0.4;
  inst.drag.learning_rate = 1.5;
  inst.track.search_radius = 4.0;
  return inst;
}

TEST(InstructionJson, RoundTripIsExact) {
  const Instruction inst = sample_instruction();
  const Json j = instruction_to_json(inst);
  const Instruction back = instruction_from_json(Json::parse(j.dump()));
  EXPECT_EQ(instruction_to_json(back), j);
  EXPECT_EQ(back.points[0].target, Point2(40.125, 30));
  EXPECT_EQ(back.mask, inst.mask);
  EXPECT_EQ(back.method, Method::PointDrag);
  EXPECT_EQ(back.drag.learning_rate, 1.5);
  EXPECT_EQ(back.track.search_radius, 4.0);
  EXPECT_EQ(back.backend.blobs.blobs[0].cx, 20.25);
  EXPECT_EQ(back.seed, 42u);
}

TEST(InstructionJson, MinimalDocumentUsesDefaults) {
  const Instruction inst = instruction_from_json(Json::parse(R"({
    "schema_version": 1,
    "backend": {"type": "blob", "seed": 3,
                "params": {"blobs": [{"cx": 20, "cy": 20, "amplitude": 0.1, "width": 4}]}},
    "points": [{"handle": [20, 20], "target": [30, 20]}]})"));
  EXPECT_EQ(inst.method, Method::FreeDrag);
  EXPECT_EQ(inst.drag.l, 0.3);
  EXPECT_EQ(inst.drag.d, 3.0);
  EXPECT_EQ(inst.seed, 3u);
  EXPECT_EQ(inst.backend.blobs.height, 64);
  EXPECT_FALSE(inst.mask);
}

TEST(InstructionJson, RejectsBadDocuments) {
  Json j = instruction_to_json(sample_instruction());
  Json bad = j;
  bad["schema_version"] = 2;
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad.erase("schema_version");
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["config"]["lr"] = 1.0;  // unknown key
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["bogus"] = 1;
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["points"][0]["target"] = Json::array({1, 2, 3});
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["points"][0]["target"] = Json::array({100, 2});  // off the grid
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["config"]["l"] = -1.0;
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["method"] = "teleport";
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  bad = j;
  bad["backend"]["type"] = "gan";
  EXPECT_THROW(instruction_from_json(bad), ContractViolation);
  EXPECT_THROW(instruction_from_json(Json::array()), ContractViolation);
}

TEST(SuiteJson, ObjectAndArrayForms) {
  const auto suite = standard_suite(3, 2);
  const Json j = suite_to_json(suite);
  ASSERT_EQ(suite_from_json(j).size(), 3u);
  const auto from_array = suite_from_json(j["instructions"]);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(instruction_to_json(from_array[i]), instruction_to_json(suite[i]));
  }
}

TEST(TraceCsv, HeaderAndRoundTripPrecision) {
  DragTrace t;
  t.append({0, 0, Point2(1.0 / 3.0, 2.5), 0.1, 0.2, 0.30000000000000004, DragCase::Freeze, 1e-17, 5});
  t.append({1, 1, Point2(4, 5), 0, 0, 0, DragCase::Fallback, 2, 5});
  const std::string csv = trace_to_csv(t);
  std::istringstream in(csv);
  std::string header, row0, row1, extra;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, kTraceHeader);
  EXPECT_EQ(row0.substr(0, 4), "0,0,");
  EXPECT_NE(row0.find("0.33333333333333331"), std::string::npos);
  EXPECT_NE(row0.find("0.30000000000000004"), std::string::npos);
  EXPECT_NE(row0.find(",freeze,"), std::string::npos);
  EXPECT_NE(row1.find(",fallback,"), std::string::npos);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(trace_to_csv(DragTrace{}), std::string(kTraceHeader) + "\n");
}

TEST(TraceJson, RoundTrip) {
  DragTrace t;
  t.append({3, 1, Point2(0.1, 0.7), 0.25, 0.125, 0.5, DragCase::Advance, 3.75, 5});
  t.append_substep_loss(0.1);
  EXPECT_EQ(trace_from_json(Json::parse(trace_to_json(t).dump())), t);
  EXPECT_EQ(record_from_json(record_to_json(t.records()[0])), t.records()[0]);
  EXPECT_EQ(trace_records_to_json(t, 1).size(), 0u);
}

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_encode(std::string("\xff\x00\x10", 3)), "/wAQ");
}

TEST(Png, EncodeDecodeRoundTrip) {
  Render img(6, 9);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 9; ++x) img(y, x) = -1.0 + 0.1 * (y * 9 + x);
  }
  const EncodedRender e = encode_render(img);
  EXPECT_EQ(e.png.substr(1, 3), "PNG");
  EXPECT_EQ(e.height, 6);
  EXPECT_EQ(e.width, 9);
  EXPECT_DOUBLE_EQ(e.min, -1.0);
  EXPECT_DOUBLE_EQ(e.max, img(5, 8));
  const Eigen::ArrayXXi levels = decode_png_gray(e.png);
  ASSERT_EQ(levels.rows(), 6);
  ASSERT_EQ(levels.cols(), 9);
  EXPECT_EQ(levels(0, 0), 0);
  EXPECT_EQ(levels(5, 8), 255);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 9; ++x) {
      const double back = e.min + levels(y, x) / 255.0 * (e.max - e.min);
      EXPECT_LE(std::abs(back - img(y, x)), 0.5 / 255.0 * (e.max - e.min) + 1e-12);
    }
  }
  const Json side = e.sidecar();
  EXPECT_EQ(side["projection"], "channel_mean");
  EXPECT_EQ(side["normalization"], "min_max");
}

TEST(Png, FlatRenderMapsToZero) {
  const EncodedRender e = encode_render(Render::Constant(3, 4, 2.5));
  EXPECT_TRUE((decode_png_gray(e.png) == 0).all());
  EXPECT_EQ(render_to_json(Render::Constant(3, 4, 2.5))["png_base64"], base64_encode(e.png));
}

TEST(StateJson, RoundTripContinuesIdentically) {
  const Instruction inst = testing::blob_instruction(testing::one_blob(15, 30),
                                                     {{Point2(15, 30), Point2(40, 30)}});
  const Problem p = make_problem(inst.backend);
  DragState a = init_instruction_state(inst, *p.backend, p.initial_latent);
  step_instruction(inst, a, *p.backend);
  step_instruction(inst, a, *p.backend);
  DragState b = state_from_json(Json::parse(state_to_json(a).dump()), a.F0);
  EXPECT_EQ(b.latent, a.latent);
  EXPECT_EQ(b.trace, a.trace);
  EXPECT_EQ(b.drag_index, a.drag_index);
  EXPECT_EQ(b.substep, a.substep);
  ASSERT_EQ(b.points.size(), 1u);
  EXPECT_EQ(b.points[0].tmpl, a.points[0].tmpl);
  EXPECT_EQ(b.points[0].current, a.points[0].current);
  step_instruction(inst, a, *p.backend);
  step_instruction(inst, b, *p.backend);
  EXPECT_EQ(b.latent, a.latent);
  EXPECT_EQ(b.trace, a.trace);
}

TEST(Reports, JsonAndCsv) {
  MetricReport r;
  r.name = "a,b";
  r.ccsd = 0.25;
  r.mean_distance = 1.5;
  r.error = "boom \"x\"";
  const Json j = report_to_json(r, false);
  EXPECT_EQ(j["ccsd"], 0.25);
  EXPECT_FALSE(j.contains("wall_time"));
  EXPECT_TRUE(report_to_json(r, true).contains("wall_time"));
  const std::string csv = reports_to_csv({r}, false);
  EXPECT_EQ(csv.find("wall_time"), std::string::npos);
  EXPECT_NE(csv.find("\"a,b\""), std::string::npos);
  EXPECT_NE(csv.find("\"boom \"\"x\"\"\""), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

}  // namespace
}  // namespace freedrag
