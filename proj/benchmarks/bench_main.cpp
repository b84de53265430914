#include <benchmark/benchmark.h>

#include "cdk/cost.hpp"
#include "cdk/data.hpp"
#include "cdk/detect.hpp"
#include "cdk/model.hpp"
#include "cdk/network.hpp"
#include "cdk/ops.hpp"
#include "cdk/postprocess.hpp"
#include "cdk/rng.hpp"
#include "cdk/train.hpp"

namespace {

cdk::Tensor random_tensor(cdk::Rng& rng, cdk::Shape shape) {
    cdk::Tensor t = cdk::Tensor::zeros(std::move(shape));
    for (double& v : t.mutable_values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    cdk::Rng rng(1);
    const std::int64_t channels = state.range(0);
    cdk::Tensor input = random_tensor(rng, {1, 3, 128, 384});
    cdk::Tensor weights = random_tensor(rng, {channels, 3, 3, 3});
    cdk::Tensor bias = cdk::Tensor::zeros({channels});
    for (auto _ : state) {
        cdk::Tensor out = cdk::conv2d(input, weights, bias, cdk::Stride{2, 2}, cdk::Padding{1, 1});
        benchmark::DoNotOptimize(out.values().data());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_ToyForward(benchmark::State& state) {
    const cdk::ModelSpec spec = cdk::load_spec_file(std::string(CDK_MODELS_DIR) + "/toy.json");
    cdk::WeightStore store = cdk::init_weights(spec, 3);
    cdk::Rng rng(2);
    cdk::Tensor image = random_tensor(rng, {1, 3, 128, 384});
    for (auto _ : state) {
        cdk::ForwardResult out = cdk::forward(spec, store, image);
        benchmark::DoNotOptimize(out.head_raw.values().data());
    }
}
BENCHMARK(BM_ToyForward);

void BM_DecodeFullGrid(benchmark::State& state) {
    cdk::DetectorConfig config;
    config.anchors_per_cell = 9;
    config.class_names = {"car", "cyclist", "pedestrian"};
    config.anchor_shapes.assign(9, {40.0, 40.0});
    cdk::AnchorGrid grid = cdk::make_anchor_grid(config, 76, 22, 1242.0, 375.0);
    cdk::Rng rng(3);
    cdk::Tensor raw = random_tensor(rng, {1, config.head_channels(), 22, 76});
    for (auto _ : state) {
        auto preds = cdk::decode(raw, grid, config);
        benchmark::DoNotOptimize(preds.data());
    }
}
BENCHMARK(BM_DecodeFullGrid);

void BM_Nms1000(benchmark::State& state) {
    cdk::Rng rng(4);
    std::vector<cdk::Detection> dets;
    for (int i = 0; i < 1000; ++i) {
        cdk::Detection d;
        d.class_id = static_cast<int>(rng.uniform_int(0, 2));
        d.score = rng.uniform();
        d.left = rng.uniform(0, 500);
        d.top = rng.uniform(0, 300);
        d.right = d.left + rng.uniform(2, 80);
        d.bottom = d.top + rng.uniform(2, 60);
        dets.push_back(std::move(d));
    }
    for (auto _ : state) {
        auto kept = cdk::nms(dets, 0.4);
        benchmark::DoNotOptimize(kept.data());
    }
}
BENCHMARK(BM_Nms1000);

void BM_AnalyzeBundled(benchmark::State& state) {
    const cdk::ModelSpec spec =
        cdk::load_spec_file(std::string(CDK_MODELS_DIR) + "/squeezedet.json");
    for (auto _ : state) {
        cdk::CostReport report = cdk::analyze(spec, 375, 1242, 1, {});
        benchmark::DoNotOptimize(report.total_flops);
    }
}
BENCHMARK(BM_AnalyzeBundled);

void BM_ToyTrainStep(benchmark::State& state) {
    const cdk::ModelSpec spec = cdk::load_spec_file(std::string(CDK_MODELS_DIR) + "/toy.json");
    cdk::SceneConfig scene_cfg;
    const auto scenes = cdk::make_dataset(5, 2, scene_cfg);
    std::vector<cdk::DatasetEntry> dataset;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        dataset.push_back(cdk::DatasetEntry{"s", scenes[i].image, scenes[i].objects});
    cdk::WeightStore store = cdk::init_weights(spec, 3);
    cdk::TrainConfig config;
    config.batch_size = 2;
    config.max_steps = 1;
    for (auto _ : state) {
        auto logs = cdk::train(spec, store, dataset, config);
        benchmark::DoNotOptimize(logs.data());
    }
}
BENCHMARK(BM_ToyTrainStep);

} // namespace

BENCHMARK_MAIN();
