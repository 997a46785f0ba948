#include "rehab/dataset_builder.hpp"
#include "rehab/knowledge_retrieval.hpp"
#include "rehab/pose_features.hpp"
#include "rehab/segmenter.hpp"
#include "rehab/statistics.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace rehab;

namespace {

pose::RawPoseFrame body25(std::int64_t index) {
  pose::RawPoseFrame frame;
  frame.frame_index = index;
  frame.image_size = {640, 480};
  frame.keypoints.assign(25, pose::RawKeypoint{std::nullopt, 0.0, 0.0, 0.0, 0.05});
  const double swing = 20.0 * std::sin(0.2 * static_cast<double>(index));
  const std::pair<std::size_t, std::array<double, 2>> points[] = {
      {0, {320, 100}}, {1, {320, 160}}, {2, {260, 165}}, {3, {240, 240 + swing}}, {4, {235, 310 + swing}},
      {5, {380, 165}}, {6, {400, 240 - swing}}, {7, {405, 310 - swing}}, {8, {320, 330}}, {15, {305, 90}},
      {16, {335, 90}}, {17, {290, 95}}, {18, {350, 95}}};
  for (const auto& [i, xy] : points) frame.keypoints[i] = {std::nullopt, xy[0], xy[1], 0.0, 0.9};
  return frame;
}

}  // namespace

static void BM_JointAngle(benchmark::State& state) {
  const pose::Vec3 a(1.0, 0.2, 0.1), b(0.0, 0.0, 0.0), c(0.3, 1.0, -0.2);
  for (auto _ : state) benchmark::DoNotOptimize(pose::joint_angle(a, b, c));
}
BENCHMARK(BM_JointAngle);

static void BM_SequenceFeatures(benchmark::State& state) {
  std::vector<pose::RawPoseFrame> frames;
  for (std::int64_t i = 0; i < state.range(0); ++i) frames.push_back(body25(i));
  const auto layout = pose::KeypointLayout::openpose_body25();
  for (auto _ : state) benchmark::DoNotOptimize(pose::sequence_features(frames, layout));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SequenceFeatures)->Arg(60)->Arg(900);

static void BM_ExtractWindows(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(dataset::extract_windows(state.range(0)));
}
BENCHMARK(BM_ExtractWindows)->Arg(900)->Arg(108000);

static void BM_SmoothAndSegment(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<dataset::LabelId> labels;
  while (static_cast<std::int64_t>(labels.size()) < state.range(0)) {
    const auto label = static_cast<dataset::LabelId>(rng() % dataset::kNumClasses);
    labels.insert(labels.end(), 30 + rng() % 200, label);
  }
  labels.resize(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(segment::smooth_and_segment(labels));
}
BENCHMARK(BM_SmoothAndSegment)->Arg(18000);

static void BM_RetrievalSearch(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> n(0.0f, 1.0f);
  const std::size_t dim = 128;
  knowledge::VectorIndex index("synthetic", dim);
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    std::vector<float> e(dim);
    for (auto& x : e) x = n(rng);
    index.add({"c" + std::to_string(i), "chunk", "doc", 1, std::move(e)});
  }
  std::vector<float> q(dim);
  for (auto& x : q) x = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(index.search(q, 3));
}
BENCHMARK(BM_RetrievalSearch)->Arg(1000)->Arg(100000);

static void BM_MannWhitneyExact(benchmark::State& state) {
  const std::vector<double> a = {3, 4, 2, 5, 4, 3}, b = {5, 6, 4, 6, 5, 4};
  for (auto _ : state) benchmark::DoNotOptimize(stats::mann_whitney_u(a, b));
}
BENCHMARK(BM_MannWhitneyExact);

static void BM_ShapiroWilk(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  for (auto& v : x) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(stats::shapiro_wilk(x));
}
BENCHMARK(BM_ShapiroWilk)->Arg(50)->Arg(2000);
BENCHMARK_MAIN();
