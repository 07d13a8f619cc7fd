#include <gtest/gtest.h>

#include "freedrag/evaluation.hpp"
#include "test_util.hpp"

namespace freedrag {
namespace {

Instruction two_point_instruction() {
  BlobGenConfig c = default_blob_scene();
  c.blobs = {{15, 15, 0.1, 4, {}}, {45, 45, 0.1, 4, {}}};
  return testing::blob_instruction(c, {{Point2(15, 15), Point2(25, 15)}, {Point2(45, 45), Point2(45, 30)}});
}

TEST(Reverse, UsesAchievedPositions) {
  const Instruction inst = two_point_instruction();
  const Instruction exact = reverse_instruction(inst, {Point2(25, 15), Point2(45, 30)});
  EXPECT_EQ(exact.points[0].handle, Point2(25, 15));
  EXPECT_EQ(exact.points[0].target, Point2(15, 15));
  const Instruction off = reverse_instruction(inst, {Point2(24, 16), Point2(44, 31)});
  EXPECT_EQ(off.points[0].handle, Point2(24, 16));
  EXPECT_EQ(off.points[1].handle, Point2(44, 31));
  EXPECT_EQ(off.points[1].target, Point2(45, 45));
  EXPECT_EQ(off.method, inst.method);
  EXPECT_THROW(reverse_instruction(inst, {Point2(1, 1)}), ContractViolation);
}

TEST(Reverse, TwiceRestoresExactDrags) {
  const Instruction inst = two_point_instruction();
  const Instruction rev = reverse_instruction(inst, {inst.points[0].target, inst.points[1].target});
  const Instruction back = reverse_instruction(rev, {rev.points[0].target, rev.points[1].target});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.points[i].handle, inst.points[i].handle);
    EXPECT_EQ(back.points[i].target, inst.points[i].target);
  }
}

TEST(Ccsd, Examples) {
  Render a = Render::Random(8, 9);
  EXPECT_EQ(ccsd(a, a), 0.0);
  Render img = Render::Zero(4, 4);
  img(0, 0) = 10.0;
  EXPECT_NEAR(ccsd(img, img + 1.0), 0.1, 1e-15);
  EXPECT_THROW(ccsd(Render::Zero(3, 3), Render::Zero(3, 4)), ContractViolation);
}

TEST(Ccsd, SymmetricAndPositiveOnChange) {
  for (int s = 0; s < 10; ++s) {
    std::srand(s);
    const Render a = Render::Random(6, 7), b = Render::Random(6, 7) * 3.0;
    EXPECT_DOUBLE_EQ(ccsd(a, b), ccsd(b, a));
    EXPECT_GT(ccsd(a, b), 0.0);
  }
  Render a = Render::Random(5, 5), b = a;
  b(2, 2) += 1e-9;
  EXPECT_GT(ccsd(a, b), 0.0);
}

TEST(Render, IsTheChannelMean) {
  const FeatureMap F = testing::random_field({3, 4, 2}, 1);
  const Render r = render(F);
  EXPECT_NEAR(r(2, 1), 0.5 * (F(2, 1, 0) + F(2, 1, 1)), 1e-15);
}

TEST(MeanDistance, Examples) {
  const Instruction inst = two_point_instruction();
  BlobBackend backend(inst.backend.blobs);
  const LatentCode w0 = backend.initial_latent();
  LatentCode perfect = w0;
  perfect.segment<2>(0) = Point2(25, 15);
  perfect.segment<2>(4) = Point2(45, 30);
  EXPECT_NEAR(mean_distance_oracle(inst, w0, perfect, backend), 0.0, 1e-15);
  LatentCode short_one = perfect;
  short_one[0] = 23.0;  // 2 px short on the first point
  EXPECT_NEAR(mean_distance_oracle(inst, w0, short_one, backend), 1.0, 1e-15);
}

TEST(MeanDistance, AgreesWithDirectLatentRead) {
  const Instruction inst = two_point_instruction();
  BlobBackend backend(inst.backend.blobs);
  const LatentCode w0 = backend.initial_latent();
  const LatentCode w = w0 + testing::random_vector(w0.size(), 3, -2, 2);
  const double a = std::hypot(w[0] - 25, w[1] - 15);
  const double b = std::hypot(w[4] - 45, w[5] - 30);
  EXPECT_NEAR(mean_distance_oracle(inst, w0, w, backend), 0.5 * (a + b), 1e-12);
}

TEST(MeanDistance, UnsupportedOnDirectField) {
  const Instruction inst = two_point_instruction();
  DirectFieldBackend backend({64, 64, 4});
  const LatentCode w = LatentCode::Zero(backend.latent_length());
  EXPECT_THROW(mean_distance_oracle(inst, w, w, backend), UnsupportedOperation);
}

TEST(Instruction, Validation) {
  Instruction inst = two_point_instruction();
  EXPECT_NO_THROW(inst.validate());
  inst.points[0].target = Point2(70, 10);
  EXPECT_THROW(inst.validate(), ContractViolation);
  inst = two_point_instruction();
  inst.points.clear();
  EXPECT_THROW(inst.validate(), ContractViolation);
  inst = two_point_instruction();
  inst.mask = Mask(10, 10, 1);
  EXPECT_THROW(inst.validate(), ContractViolation);
}

TEST(Evaluate, ZeroLengthDragsGiveZeroCcsd) {
  Instruction inst = two_point_instruction();
  for (auto& p : inst.points) p.target = p.handle;
  const MetricReport rep = evaluate_instruction(inst);
  ASSERT_TRUE(rep.ok()) << rep.error;
  EXPECT_EQ(rep.ccsd, 0.0);
  EXPECT_EQ(rep.steps_used, 0);
  EXPECT_EQ(rep.forward_status, RunStatus::Converged);
}

TEST(Evaluate, ReportsForwardAndReverse) {
  const MetricReport rep = evaluate_instruction(single_blob_suite(1, 3)[0]);
  ASSERT_TRUE(rep.ok()) << rep.error;
  EXPECT_EQ(rep.forward_status, RunStatus::Converged);
  EXPECT_GT(rep.forward_steps, 0);
  EXPECT_GT(rep.steps_used, rep.forward_steps);
  ASSERT_TRUE(rep.mean_distance);
  EXPECT_LT(*rep.mean_distance, 2.0);
  EXPECT_GE(rep.ccsd, 0.0);
  EXPECT_TRUE(std::isfinite(rep.ccsd));
  EXPECT_EQ(rep.cases.total(), static_cast<int>(rep.forward_trace.size()));
}

TEST(Suite, EmptyListGivesEmptyReport) { EXPECT_TRUE(run_suite({}).empty()); }

TEST(Suite, FailuresAreRecordedNotThrown) {
  auto insts = single_blob_suite(2, 1);
  insts[0].points[0].target = Point2(500, 500);
  const auto reports = run_suite(insts);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_FALSE(reports[0].ok());
  EXPECT_TRUE(reports[1].ok());
  const SuiteSummary s = summarize(reports);
  EXPECT_EQ(s.failed, 1);
  EXPECT_EQ(s.count, 2);
}

TEST(Suite, DeterministicAcrossThreadCounts) {
  const auto insts = standard_suite(3, 9);
  SuiteOptions one, many;
  one.threads = 1;
  many.threads = 3;
  const auto a = run_suite(insts, one);
  const auto b = run_suite(insts, many);
  for (std::size_t i = 0; i < insts.size(); ++i) {
    EXPECT_EQ(a[i].ccsd, b[i].ccsd);
    EXPECT_EQ(a[i].mean_distance, b[i].mean_distance);
    EXPECT_EQ(a[i].forward_trace, b[i].forward_trace);
    EXPECT_EQ(a[i].name, insts[i].name);
  }
}

TEST(Suite, MethodOverride) {
  SuiteOptions opt;
  opt.method = Method::PointDrag;
  const auto reports = run_suite(single_blob_suite(1, 2), opt);
  EXPECT_EQ(reports[0].method, Method::PointDrag);
  EXPECT_EQ(reports[0].cases.track, reports[0].cases.total());
}

TEST(Suites, BuiltinsAreWellFormedAndSeeded) {
  for (const auto& make : {single_blob_suite, standard_suite, ambiguity_suite}) {
    const auto a = make(20, 1);
    const auto b = make(20, 1);
    ASSERT_EQ(a.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NO_THROW(a[i].validate());
      EXPECT_EQ(a[i].points[0].target, b[i].points[0].target);
    }
  }
  for (const auto& inst : single_blob_suite(20, 1)) {
    const double len = (inst.points[0].target - inst.points[0].handle).norm();
    EXPECT_GE(len, 10.0);
    EXPECT_LE(len, 40.0);
  }
  for (const auto& inst : ambiguity_suite(20, 1)) {
    ASSERT_EQ(inst.backend.blobs.blobs.size(), 2u);
    EXPECT_EQ(inst.backend.blobs.blobs[0].amplitude, inst.backend.blobs.blobs[1].amplitude);
    EXPECT_EQ(inst.backend.blobs.blobs[0].width, inst.backend.blobs.blobs[1].width);
  }
}

TEST(Summary, Aggregates) {
  std::vector<MetricReport> r(2);
  r[0].ccsd = 0.1;
  r[0].mean_distance = 1.0;
  r[0].cases.advance = 3;
  r[0].cases.freeze = 1;
  r[0].forward_status = RunStatus::Converged;
  r[1].ccsd = 0.3;
  r[1].mean_distance = 3.0;
  r[1].cases.fallback = 4;
  r[1].forward_status = RunStatus::StepBudgetExhausted;
  const SuiteSummary s = summarize(r);
  EXPECT_NEAR(s.mean_ccsd, 0.2, 1e-15);
  EXPECT_NEAR(*s.mean_distance, 2.0, 1e-15);
  EXPECT_NEAR(s.freeze_fraction, 1.0 / 8, 1e-15);
  EXPECT_NEAR(s.fallback_fraction, 0.5, 1e-15);
  EXPECT_EQ(s.exhausted, 1);
  EXPECT_EQ(s.converged, 1);
}

}  // namespace
}  // namespace freedrag
