#include <benchmark/benchmark.h>

#include <random>

#include "cvheat/dct.hpp"
#include "cvheat/graph.hpp"
#include "cvheat/heat.hpp"
#include "cvheat/louvain.hpp"
#include "cvheat/model.hpp"
#include "cvheat/synthetic.hpp"
#include "cvheat/train.hpp"

using namespace cvheat;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = uni(rng);
  return t;
}

graph::SpatialGraph random_graph(int n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  graph::SpatialGraph g;
  g.nodes.resize(n);
  for (auto& node : g.nodes) {
    node.x = uni(rng) * 100.0;
    node.y = uni(rng) * 100.0;
    node.feat = {uni(rng)};
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (uni(rng) < p) g.add_edge(i, j);
  return g;
}

}  // namespace

static void BM_Dct2(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({n, n}, 1);
  for (auto _ : state) {
    Tensor y = heat::dct2(x);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_Dct2)->RangeMultiplier(2)->Range(8, 128)->Complexity();

static void BM_HcoApply(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto fg = heat::FrequencyGrid::make(n, n);
  const Tensor x = random_tensor({32, n, n}, 2);
  for (auto _ : state) {
    Tensor y = heat::hco_apply(x, 1.3, 1.0, fg);
    benchmark::DoNotOptimize(y.data.data());
  }
}
BENCHMARK(BM_HcoApply)->Arg(16)->Arg(32)->Arg(64);

static void BM_Louvain(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto g = random_graph(n, 8.0 / n, 3);
  for (auto _ : state) {
    auto part = graph::louvain_partition(g);
    benchmark::DoNotOptimize(part.data());
  }
}
BENCHMARK(BM_Louvain)->Arg(64)->Arg(256)->Arg(1024);

static void BM_BuildBundle(benchmark::State& state) {
  synth::SyntheticScene scene;
  scene.width = 128;
  scene.height = 128;
  synth::SceneObject o;
  o.cx = 50;
  o.cy = 60;
  o.vx = 200;
  o.vy = 50;
  o.size = 24;
  scene.objects.push_back(o);
  const auto data = synth::generate_synthetic(scene, 10000, 10000, 4);
  events::EventSlice slice;
  slice.events = data.stream;
  slice.t_start = 0;
  slice.t_end = 10000;
  const auto frame = events::encode_frame(slice, 128, 128);
  graph::GraphConfig gc;
  for (auto _ : state) {
    auto bundle = graph::build_bundle(frame, gc);
    benchmark::DoNotOptimize(bundle.global.nodes.data());
  }
}
BENCHMARK(BM_BuildBundle);

static void BM_ChcoBlockForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  heat::ChcoConfig cc;
  cc.channels = 32;
  cc.fe_dim = 8;
  cc.contour_feat_dim = 16;
  nn::ParamStore ps;
  std::mt19937_64 rng(5);
  const auto block = heat::ChcoBlock::make(ps, "b", cc, rng);
  const auto fg = heat::FrequencyGrid::make(n, n);
  const Tensor x = random_tensor({32, n, n}, 6);
  const Tensor x_of = random_tensor({32, n, n}, 7);
  const Tensor fe = random_tensor({n * n, 8}, 8);
  const Tensor cf = random_tensor({3, 16}, 9);
  for (auto _ : state) {
    nn::Graph g;
    nn::Var y = block.forward(g, g.constant(x), g.constant(x_of), g.constant(fe), g.constant(cf), fg);
    benchmark::DoNotOptimize(g.value(y).data.data());
  }
}
BENCHMARK(BM_ChcoBlockForward)->Arg(16)->Arg(32);

static void BM_TrainStep(benchmark::State& state) {
  pipe::PipelineConfig cfg;
  cfg.resolution = 128;
  cfg.stage_depths = {1, 1, 2, 1};
  cfg.stage_widths = {32, 64, 128, 256};
  cfg.gcn_width = 32;
  cfg.fe_dim = 8;
  cfg.queries = 8;
  cfg.validate();
  std::mt19937_64 rng(11);
  const auto scene = synth::random_scene(128, 1, 1, cfg.slice_interval_us, rng);
  const auto data = synth::generate_synthetic(scene, cfg.slice_interval_us,
                                              cfg.slice_interval_us, 12);
  const auto samples = pipe::prepare_samples(cfg, data.stream, &data.gts);
  pipe::Model model(cfg);
  det::LossWeights w;
  pipe::AdamW opt;
  for (auto _ : state) {
    nn::Graph g;
    auto fwd = model.forward(g, samples[0].frame, samples[0].bundle);
    nn::Var loss = det::detect_loss(g, fwd.pred_boxes, fwd.class_logits, samples[0].gts, w, nullptr);
    model.params().zero_grad();
    g.backward(loss);
    opt.step(model.params());
    benchmark::DoNotOptimize(model.params().all().front().value.data.data());
  }
}
BENCHMARK(BM_TrainStep);

BENCHMARK_MAIN();
