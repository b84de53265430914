#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdk/cost.hpp"
#include "cdk/error.hpp"
#include "cdk/model.hpp"
#include "cdk/network.hpp"
#include "test_util.hpp"

using namespace cdk;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::filesystem::path models_dir() { return CDK_MODELS_DIR; }

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

// Random-but-valid layer stacks for cross-checking forward against the
// static analyzer.
ModelSpec random_spec(Rng& rng) {
    ModelSpec spec;
    spec.in_channels = rng.uniform_int(1, 3);
    spec.in_height = rng.uniform_int(12, 24);
    spec.in_width = rng.uniform_int(12, 24);
    const std::int64_t depth = rng.uniform_int(1, 5);
    std::int64_t h = spec.in_height, w = spec.in_width;
    for (std::int64_t i = 0; i < depth; ++i) {
        LayerSpec layer;
        layer.name = "layer" + std::to_string(spec.layers.size());
        const std::int64_t kind = rng.uniform_int(0, 2);
        if (kind == 0) {
            layer.kind = LayerKind::conv;
            layer.filters = rng.uniform_int(1, 6);
            const std::int64_t k = rng.uniform_int(1, 3);
            layer.kernel = {k, k};
            layer.stride = {rng.uniform_int(1, 2), rng.uniform_int(1, 2)};
            layer.padding = {rng.uniform_int(0, 1), rng.uniform_int(0, 1)};
            layer.activation = rng.bernoulli(0.5) ? Activation::relu : Activation::none;
        } else if (kind == 1) {
            layer.kind = LayerKind::maxpool;
            const std::int64_t k = rng.uniform_int(2, 3);
            layer.kernel = {k, k};
            layer.stride = {rng.uniform_int(1, 2), rng.uniform_int(1, 2)};
            layer.padding = {0, 0};
        } else {
            layer.kind = LayerKind::fire;
            layer.fire = {rng.uniform_int(1, 4), rng.uniform_int(1, 6), rng.uniform_int(1, 6)};
        }
        if (layer.kind != LayerKind::fire) {
            if (h + 2 * layer.padding.h < layer.kernel.h ||
                w + 2 * layer.padding.w < layer.kernel.w)
                continue; // would underflow; try another layer
            h = (h + 2 * layer.padding.h - layer.kernel.h) / layer.stride.h + 1;
            w = (w + 2 * layer.padding.w - layer.kernel.w) / layer.stride.w + 1;
        }
        spec.layers.push_back(std::move(layer));
    }
    if (spec.layers.empty()) {
        LayerSpec layer;
        layer.name = "layer0";
        layer.kind = LayerKind::fire;
        layer.fire = {2, 3, 3};
        spec.layers.push_back(std::move(layer));
    }
    resolve_channels(spec);
    return spec;
}

} // namespace

TEST_CASE("parse_spec on the bundled squeezedet model") {
    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
    CHECK(spec.layers.size() == 15);
    CHECK(spec.layers.back().kind == LayerKind::convdet);
    CHECK(spec.detector.anchors_per_cell == 9);
    CHECK(spec.detector.class_count() == 3);
    CHECK(spec.detector.head_channels() == 72);
    CHECK(spec.loss.bbox == 5.0);
    CHECK(spec.loss.conf_pos == 75.0);
    CHECK(spec.loss.conf_neg == 100.0);
}

TEST_CASE("parse_spec errors") {
    CHECK_THROWS_WITH_AS(parse_spec(R"({"input":{"c":3,"h":8,"w":8},"layers":[]})"),
                         doctest::Contains("empty model"), Error);
    CHECK_THROWS_AS(
        parse_spec(R"({"input":{"c":3,"h":8,"w":8},"layers":[{"name":"x","kind":"wat"}]})"),
        Error);
    // Duplicate names.
    CHECK_THROWS_AS(parse_spec(R"({"input":{"c":3,"h":8,"w":8},"layers":[
        {"name":"a","kind":"fire","s1x1":1,"e1x1":1,"e3x3":1},
        {"name":"a","kind":"fire","s1x1":1,"e1x1":1,"e3x3":1}]})"),
                    Error);
    // convdet not last.
    CHECK_THROWS_AS(parse_spec(R"({"input":{"c":3,"h":8,"w":8},
        "detector":{"k":1,"classes":["a"],"anchors":[[4,4]]},
        "layers":[
        {"name":"d","kind":"convdet","kernel":[1,1],"stride":[1,1],"padding":[0,0]},
        {"name":"f","kind":"fire","s1x1":1,"e1x1":1,"e3x3":1}]})"),
                    Error);
    // Declared in_channels contradicting the chain.
    CHECK_THROWS_WITH_AS(parse_spec(R"({"input":{"c":3,"h":8,"w":8},"layers":[
        {"name":"f","kind":"fire","in_channels":64,"s1x1":1,"e1x1":1,"e3x3":1}]})"),
                         doctest::Contains("channel-chain mismatch"), Error);
}

TEST_CASE("fire input channels resolve from the predecessor") {
    const ModelSpec spec = parse_spec(R"({
        "input": {"c": 3, "h": 32, "w": 32},
        "layers": [
            {"name": "conv1", "kind": "conv", "filters": 64, "kernel": [3, 3],
             "stride": [1, 1], "padding": [1, 1], "activation": "relu"},
            {"name": "fire2", "kind": "fire", "s1x1": 16, "e1x1": 64, "e3x3": 64}
        ]})");
    CHECK(spec.layers[1].in_channels == 64);
    CHECK(spec.layers[1].out_channels == 128);
}

TEST_CASE("serialize_spec round-trips the bundled files byte for byte") {
    for (const char* name : {"squeezedet.json", "squeezedet_plus.json", "toy.json"}) {
        const std::string text = read_file(models_dir() / name);
        const ModelSpec spec = parse_spec(text);
        CHECK(serialize_spec(spec) == text);
    }
}

TEST_CASE("build_fire") {
    const FireSpec fire{16, 64, 64};
    ModelSpec spec;
    spec.in_channels = 64;
    spec.in_height = 8;
    spec.in_width = 8;
    LayerSpec layer;
    layer.name = "fire";
    layer.kind = LayerKind::fire;
    layer.fire = fire;
    spec.layers.push_back(layer);
    resolve_channels(spec);
    WeightStore store = init_weights(spec, 3);

    SUBCASE("output shape") {
        Rng rng(4);
        Tensor input = testutil::random_tensor(rng, {1, 64, 8, 8});
        Tensor out = build_fire(input, fire, store.fire_weights("fire"));
        CHECK(out.shape() == Shape{1, 128, 8, 8});
    }

    SUBCASE("zero weights and biases give zero output") {
        for (const std::string& name : store.names())
            for (double& v : store.at(name).mutable_values()) v = 0.0;
        Rng rng(4);
        Tensor input = testutil::random_tensor(rng, {1, 64, 8, 8});
        Tensor out = build_fire(input, fire, store.fire_weights("fire"));
        for (double v : out.values()) CHECK(v == 0.0);
    }

    SUBCASE("parameter count matches the by-hand sum") {
        // 64*16 + 16*64 + 9*16*64 + (16 + 64 + 64)
        CHECK(store.parameter_count() == 11408);
    }

    SUBCASE("spatial extents preserved for random inputs") {
        Rng rng(9);
        for (int i = 0; i < 5; ++i) {
            const std::int64_t h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 12);
            Tensor input = testutil::random_tensor(rng, {1, 64, h, w});
            Tensor out = build_fire(input, fire, store.fire_weights("fire"));
            CHECK(out.extent(2) == h);
            CHECK(out.extent(3) == w);
        }
    }
}

TEST_CASE("forward on the bundled spec hits the published grid") {
    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
    WeightStore store = init_weights(spec, 0);

    Rng rng(2);
    Tensor image = testutil::random_tensor(rng, {1, 3, 375, 1242}, 0.0, 1.0);
    ForwardResult result = forward(spec, store, image);
    CHECK(result.head_raw.shape() == Shape{1, 72, 22, 76});
    CHECK(result.feature_map.extent(1) == 768);

    // 0.75x input resolution.
    Tensor small = testutil::random_tensor(rng, {1, 3, 281, 931}, 0.0, 1.0);
    ForwardResult scaled = forward(spec, store, small);
    CHECK(scaled.head_raw.shape() == Shape{1, 72, 16, 57});
}

TEST_CASE("forward shapes equal the analyzer's predictions on random specs") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const ModelSpec spec = random_spec(rng);
        WeightStore store = init_weights(spec, 77);
        Tensor image = testutil::random_tensor(rng, {1, spec.in_channels, spec.in_height,
                                                     spec.in_width});
        std::vector<ForwardTraceEntry> trace;
        forward(spec, store, image, &trace);
        const CostReport report = analyze(spec, spec.in_height, spec.in_width, 1, {});
        REQUIRE(trace.size() == report.layers.size());
        for (std::size_t i = 0; i < trace.size(); ++i) {
            CHECK(trace[i].name == report.layers[i].name);
            CHECK(trace[i].shape == report.layers[i].output_shape);
        }
    }
}

TEST_CASE("init_weights determinism and fan-in scale") {
    const ModelSpec spec = load_spec_file(models_dir() / "toy.json");
    WeightStore a = init_weights(spec, 42);
    WeightStore b = init_weights(spec, 42);
    WeightStore c = init_weights(spec, 43);

    bool all_equal = true, any_differs = false;
    for (const std::string& name : a.names()) {
        const auto va = a.at(name).values();
        const auto vb = b.at(name).values();
        const auto vc = c.at(name).values();
        for (std::size_t i = 0; i < va.size(); ++i) {
            if (va[i] != vb[i]) all_equal = false;
            if (va[i] != vc[i]) any_differs = true;
        }
    }
    CHECK(all_equal);
    CHECK(any_differs);

    for (const std::string& name : a.names()) {
        const Tensor& t = a.at(name);
        if (t.rank() == 1)
            for (double v : t.values()) CHECK(v == 0.0); // biases start at zero
    }

    // std of a 3x3x64 fan-in draw should sit near 1/24 (>10k samples).
    ModelSpec wide;
    wide.in_channels = 64;
    wide.in_height = 8;
    wide.in_width = 8;
    LayerSpec layer;
    layer.name = "conv";
    layer.kind = LayerKind::conv;
    layer.filters = 18;
    layer.kernel = {3, 3};
    layer.stride = {1, 1};
    layer.padding = {1, 1};
    wide.layers.push_back(layer);
    resolve_channels(wide);
    WeightStore ws = init_weights(wide, 7);
    const auto vals = ws.at("conv.weight").values();
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    const double std_dev = std::sqrt(var);
    CHECK(std_dev > (1.0 / 24.0) * 0.8);
    CHECK(std_dev < (1.0 / 24.0) * 1.2);
}

TEST_CASE("weights save/load round trip") {
    const ModelSpec spec = load_spec_file(models_dir() / "toy.json");
    WeightStore store = init_weights(spec, 5);
    const auto path = temp_path("cdk_test_weights.cdkw");
    save_weights(store, path);

    SUBCASE("values survive at 32-bit precision") {
        WeightStore loaded = load_weights(spec, path);
        for (const std::string& name : store.names()) {
            const auto orig = store.at(name).values();
            const auto back = loaded.at(name).values();
            REQUIRE(orig.size() == back.size());
            for (std::size_t i = 0; i < orig.size(); ++i) {
                const double rounded = static_cast<double>(static_cast<float>(orig[i]));
                CHECK(back[i] == rounded);
            }
        }
    }

    SUBCASE("file size is 4 bytes per parameter plus the header") {
        std::ifstream in(path, std::ios::binary);
        in.seekg(0, std::ios::end);
        const std::int64_t size = in.tellg();
        const std::int64_t payload = 4 * store.parameter_count();
        in.seekg(5);
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        const std::int64_t manifest_len = b[0] | (b[1] << 8) |
                                          (static_cast<std::int64_t>(b[2]) << 16) |
                                          (static_cast<std::int64_t>(b[3]) << 24);
        CHECK(size == 9 + manifest_len + payload); // magic + u32 + manifest + payload
    }

    SUBCASE("loading against a mismatched spec fails") {
        const ModelSpec other = load_spec_file(models_dir() / "squeezedet.json");
        CHECK_THROWS_AS(load_weights(other, path), Error);
    }

    SUBCASE("truncated file fails") {
        const auto truncated = temp_path("cdk_test_weights_trunc.cdkw");
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string bytes = buf.str();
        bytes.resize(bytes.size() / 2);
        std::ofstream out(truncated, std::ios::binary);
        out << bytes;
        out.close();
        CHECK_THROWS_AS(load_weights(spec, truncated), Error);
        std::filesystem::remove(truncated);
    }

    std::filesystem::remove(path);
}
