#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cdk/cost.hpp"
#include "cdk/error.hpp"
#include "cdk/model.hpp"
#include "test_util.hpp"

using namespace cdk;

namespace {
std::filesystem::path models_dir() { return CDK_MODELS_DIR; }

const LayerCost& layer_named(const CostReport& report, const std::string& name) {
    for (const LayerCost& lc : report.layers)
        if (lc.name == name) return lc;
    REQUIRE_MESSAGE(false, "no layer named " << name);
    static LayerCost dummy;
    return dummy;
}
} // namespace

TEST_CASE("detection-head parameter formulas") {
    HeadSpec yolo;
    yolo.filter_w = 3;
    yolo.filter_h = 3;
    yolo.channels = 1024;
    yolo.feat_w = 7;
    yolo.feat_h = 7;
    yolo.out_w = 7;
    yolo.out_h = 7;
    yolo.fc1_width = 4096;
    yolo.anchors = 2;
    yolo.classes = 20;

    SUBCASE("published head sizes") {
        CHECK(params_convdet(yolo) == 460800);
        CHECK(params_fcdet(yolo) == 211542016);
        const double ratio = static_cast<double>(params_fcdet(yolo)) /
                             static_cast<double>(params_convdet(yolo));
        CHECK(ratio > 455.0);
        CHECK(ratio < 465.0);
        CHECK(params_rpn(yolo) == 1024 * 2 * 5);
    }

    SUBCASE("degenerate corners") {
        HeadSpec tiny;
        tiny.filter_w = 1;
        tiny.filter_h = 1;
        tiny.channels = 1;
        tiny.feat_w = 1;
        tiny.feat_h = 1;
        tiny.out_w = 1;
        tiny.out_h = 1;
        tiny.fc1_width = 1;
        tiny.anchors = 1;
        tiny.classes = 0;
        CHECK(params_convdet(tiny) == 5);
        CHECK(params_fcdet(tiny) == 1 * (1 + 1 * (5 + 0)));
        tiny.anchors = 0;
        CHECK(params_rpn(tiny) == 0);
        tiny.anchors = 1;
        CHECK(params_rpn(tiny) == 5);
    }

    SUBCASE("1x1 convdet with C=0 reduces to the proposal-only head") {
        HeadSpec h = yolo;
        h.filter_w = 1;
        h.filter_h = 1;
        h.classes = 0;
        CHECK(params_convdet(h) == params_rpn(h));
    }

    SUBCASE("bundled head: 3*3*768*9*8") {
        HeadSpec bundled;
        bundled.filter_w = 3;
        bundled.filter_h = 3;
        bundled.channels = 768;
        bundled.anchors = 9;
        bundled.classes = 3;
        CHECK(params_convdet(bundled) == 497664);
    }
}

TEST_CASE("compare_heads capability table") {
    HeadSpec h;
    h.filter_w = 3;
    h.filter_h = 3;
    h.channels = 1024;
    h.feat_w = 7;
    h.feat_h = 7;
    h.out_w = 7;
    h.out_h = 7;
    h.fc1_width = 4096;
    h.anchors = 2;
    h.classes = 20;
    const auto rows = compare_heads(h);
    CHECK(rows[0].name == "rpn");
    CHECK(rows[0].proposes_regions);
    CHECK_FALSE(rows[0].classifies);
    CHECK(rows[0].params == 10240);
    CHECK(rows[1].name == "convdet");
    CHECK(rows[1].classifies);
    CHECK(rows[1].params == 460800);
    CHECK(rows[2].name == "fcdet");
    CHECK(rows[2].classifies);
    CHECK(rows[2].params == 211542016);
}

TEST_CASE("analyze on the bundled model at full resolution") {
    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
    const CostReport report = analyze(spec, 375, 1242, 1, {});

    SUBCASE("headline totals sit on the published row") {
        CHECK(report.model_mb > 7.9 * 0.9);
        CHECK(report.model_mb < 7.9 * 1.1);
        CHECK(report.activation_mb > 117.0 * 0.85);
        CHECK(report.activation_mb < 117.0 * 1.15);
        CHECK(static_cast<double>(report.total_flops) > 9.7e9 * 0.8);
        CHECK(static_cast<double>(report.total_flops) < 9.7e9 * 1.2);
    }

    SUBCASE("first conv stores 28.3 MB unfused, about 7 MB fused") {
        const LayerCost& conv1 = layer_named(report, "conv1");
        const double conv1_mb = static_cast<double>(conv1.activation_bytes) / kBytesPerMb;
        CHECK(conv1_mb == doctest::Approx(28.3).epsilon(0.01));

        AnalyzeOptions fused;
        fused.fuse_conv_pool = true;
        const CostReport freport = analyze(spec, 375, 1242, 1, fused);
        const LayerCost& fconv1 = layer_named(freport, "conv1");
        const double fused_mb = static_cast<double>(fconv1.activation_bytes) / kBytesPerMb;
        CHECK(fused_mb == doctest::Approx(7.0).epsilon(0.05));
        CHECK(layer_named(freport, "pool1").activation_bytes == 0);
        CHECK(freport.activation_mb < report.activation_mb);
    }

    SUBCASE("scale-down resolution lands on the published row") {
        const CostReport small = analyze(spec, 281, 931, 1, {});
        CHECK(static_cast<double>(small.total_flops) > 5.3e9 * 0.8);
        CHECK(static_cast<double>(small.total_flops) < 5.3e9 * 1.2);
        CHECK(small.activation_mb > 65.8 * 0.85);
        CHECK(small.activation_mb < 65.8 * 1.15);
    }

    SUBCASE("activation and flops scale linearly with batch") {
        const CostReport b2 = analyze(spec, 375, 1242, 2, {});
        CHECK(b2.activation_mb == doctest::Approx(2.0 * report.activation_mb).epsilon(1e-12));
        CHECK(b2.total_flops == 2 * report.total_flops);
        CHECK(b2.total_params == report.total_params);
    }

    SUBCASE("conv flops scale roughly with resolution squared") {
        for (const double r : {0.75, 1.5}) {
            const auto h = static_cast<std::int64_t>(std::lround(375 * r));
            const auto w = static_cast<std::int64_t>(std::lround(1242 * r));
            const CostReport scaled = analyze(spec, h, w, 1, {});
            const double ratio = static_cast<double>(scaled.total_flops) /
                                 static_cast<double>(report.total_flops);
            CHECK(ratio > r * r * 0.9);
            CHECK(ratio < r * r * 1.1);
        }
    }
}

TEST_CASE("analyze on the plus-size bundled model") {
    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet_plus.json");
    const CostReport report = analyze(spec, 375, 1242, 1, {});
    CHECK(report.model_mb > 26.8 * 0.95);
    CHECK(report.model_mb < 26.8 * 1.05);
    CHECK(report.layers.back().output_shape == Shape{1, 72, 22, 76});
}

TEST_CASE("sram_check") {
    SUBCASE("the 5 MB model + 11 MB pair boundary case fits a 16 MB budget exactly") {
        CostReport synthetic;
        synthetic.model_mb = 5.0;
        synthetic.peak_pair_mb = 11.0;
        synthetic.peak_pair_first = "a";
        synthetic.peak_pair_second = "b";
        const SramVerdict verdict = sram_check(synthetic, 16.0);
        CHECK(verdict.fits);
        CHECK(verdict.required_mb == 16.0);
        const SramVerdict tighter = sram_check(synthetic, 15.999);
        CHECK_FALSE(tighter.fits);
    }

    SUBCASE("zero budget never fits") {
        CostReport synthetic;
        synthetic.model_mb = 5.0;
        synthetic.peak_pair_mb = 10.0;
        const SramVerdict verdict = sram_check(synthetic, 0.0);
        CHECK_FALSE(verdict.fits);
        CHECK(verdict.required_mb == 15.0);
    }

    SUBCASE("bundled model at full resolution exceeds 16 MB and conv1 is limiting") {
        const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
        const CostReport report = analyze(spec, 375, 1242, 1, {});
        const SramVerdict verdict = sram_check(report, 16.0);
        CHECK_FALSE(verdict.fits);
        const bool conv1_limits =
            verdict.limiting_first == "conv1" || verdict.limiting_second == "conv1";
        CHECK(conv1_limits);
    }
}

TEST_CASE("report serialization carries the headline totals") {
    const ModelSpec spec = load_spec_file(models_dir() / "toy.json");
    const CostReport report = analyze(spec, 128, 384, 1, {});
    const SramVerdict verdict = sram_check(report, 16.0);
    const std::string text = report_to_text(report, &verdict);
    CHECK(text.find("totals:") != std::string::npos);
    CHECK(text.find("conv1") != std::string::npos);
    const std::string json_text = report_to_json(report, &verdict);
    CHECK(json_text.find("\"model_mb\"") != std::string::npos);
    CHECK(json_text.find("\"sram\"") != std::string::npos);
}
