// Acceptance suite: one pass/fail line per criterion, exit code = failures.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cdk/cost.hpp"
#include "cdk/data.hpp"
#include "cdk/detect.hpp"
#include "cdk/energy.hpp"
#include "cdk/loss.hpp"
#include "cdk/model.hpp"
#include "cdk/network.hpp"
#include "cdk/postprocess.hpp"
#include "cdk/tape.hpp"
#include "cdk/train.hpp"
#include "loss_oracle.hpp"
#include "test_util.hpp"

using namespace cdk;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

bool within(double value, double target, double tolerance) {
    return value >= target * (1.0 - tolerance) && value <= target * (1.0 + tolerance);
}

std::filesystem::path models_dir() { return CDK_MODELS_DIR; }

// ---- 1. detection-head parameter formulas -------------------------------

Outcome head_formula_exactness() {
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
    const std::int64_t fc = params_fcdet(h);
    const std::int64_t conv = params_convdet(h);
    const double ratio = static_cast<double>(fc) / static_cast<double>(conv);
    const bool pass = fc == 211542016 && conv == 460800 && ratio >= 455.0 && ratio <= 465.0;
    return {pass, fmt("fcdet=%lld convdet=%lld ratio=%.2f", static_cast<long long>(fc),
                      static_cast<long long>(conv), ratio)};
}

// ---- 2. bundled-model cost totals ----------------------------------------

Outcome bundled_totals() {
    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
    const CostReport full = analyze(spec, 375, 1242, 1, {});
    const CostReport small = analyze(spec, 281, 931, 1, {});
    const bool pass = within(full.model_mb, 7.9, 0.10) &&
                      within(full.activation_mb, 117.0, 0.15) &&
                      within(static_cast<double>(full.total_flops), 9.7e9, 0.20) &&
                      within(static_cast<double>(small.total_flops), 5.3e9, 0.20) &&
                      within(small.activation_mb, 65.8, 0.15);
    return {pass, fmt("model=%.2fMB act=%.1fMB flops=%.2fe9 | scale-down flops=%.2fe9 act=%.1fMB",
                      full.model_mb, full.activation_mb,
                      static_cast<double>(full.total_flops) / 1e9,
                      static_cast<double>(small.total_flops) / 1e9, small.activation_mb)};
}

// ---- 3. convention pins ---------------------------------------------------

Outcome convention_pins() {
    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
    const CostReport plain = analyze(spec, 375, 1242, 1, {});
    AnalyzeOptions fuse;
    fuse.fuse_conv_pool = true;
    const CostReport fused = analyze(spec, 375, 1242, 1, fuse);

    double conv1_mb = 0.0, conv1_fused_mb = 0.0;
    for (const LayerCost& lc : plain.layers)
        if (lc.name == "conv1") conv1_mb = static_cast<double>(lc.activation_bytes) / kBytesPerMb;
    for (const LayerCost& lc : fused.layers)
        if (lc.name == "conv1")
            conv1_fused_mb = static_cast<double>(lc.activation_bytes) / kBytesPerMb;

    const Shape head = plain.layers.back().output_shape; // [1, 72, 22, 76]
    const std::int64_t anchors = head[2] * head[3] * spec.detector.anchors_per_cell;

    const bool pass = within(conv1_mb, 28.3, 0.01) && within(conv1_fused_mb, 7.0, 0.05) &&
                      anchors == 15048;
    return {pass, fmt("conv1=%.3fMB fused=%.3fMB anchors=%lld", conv1_mb, conv1_fused_mb,
                      static_cast<long long>(anchors))};
}

// ---- 4. energy-table arithmetic -------------------------------------------

Outcome energy_table() {
    struct Row {
        double power, fps, printed;
        int decimals;
    };
    const Row rows[] = {
        {80.9, 57.2, 1.4, 1},   {89.9, 31.3, 2.9, 1},   {77.8, 92.5, 0.84, 2},
        {82.9, 51.4, 1.6, 1},   {128.3, 32.1, 4.0, 1},  {153.9, 16.6, 9.3, 1},
        {95.4, 22.5, 4.2, 1},   {200.1, 1.7, 117.7, 1}, {143.1, 2.9, 49.3, 1},
        {187.3, 25.8, 7.3, 1},
    };
    int matched = 0;
    for (const Row& row : rows) {
        const double scale = std::pow(10.0, row.decimals);
        const double rounded = std::round(energy_per_frame(row.power, row.fps) * scale) / scale;
        if (std::abs(rounded - row.printed) < 1e-9) ++matched;
    }
    const double fps = std::round(fps_from_count(4952, 192.0) * 10.0) / 10.0;
    const bool pass = matched == 10 && std::abs(fps - 25.8) < 1e-9;
    return {pass, fmt("%d/10 rows at printed precision, fps(4952,192)=%.1f", matched, fps)};
}

// ---- 5. transform round trip ----------------------------------------------

Outcome transform_round_trip() {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const Box anchor{rng.uniform(0, 1000), rng.uniform(0, 1000), rng.uniform(1, 500),
                         rng.uniform(1, 500)};
        const Box gt{rng.uniform(0, 1000), rng.uniform(0, 1000), rng.uniform(1, 500),
                     rng.uniform(1, 500)};
        const Box back = transform(anchor, inverse_transform(gt, anchor));
        worst = std::max({worst, testutil::rel_err(back.x, gt.x), testutil::rel_err(back.y, gt.y),
                          testutil::rel_err(back.w, gt.w), testutil::rel_err(back.h, gt.h)});
    }
    return {worst < 1e-9, fmt("worst rel err %.3g over 10000 pairs", worst)};
}

// ---- 6. loss gradient vs finite differences -------------------------------

Outcome gradient_fidelity() {
    DetectorConfig config;
    config.anchors_per_cell = 2;
    config.class_names = {"a", "b", "c"};
    config.anchor_shapes = {{12.0, 10.0}, {22.0, 18.0}};
    AnchorGrid grid = make_anchor_grid(config, 3, 3, 48.0, 48.0);
    const lossoracle::Geometry geom{3, 3, 2, 3};

    Rng rng(606);
    const GroundTruth gts{LabeledBox{Box{15.0, 13.0, 11.0, 9.0}, 1},
                          LabeledBox{Box{33.0, 31.0, 17.0, 13.0}, 2}};
    const AnchorAssignment assignment = assign_anchors(gts, grid);
    Tensor raw = testutil::random_tensor(rng, {1, config.head_channels(), 3, 3}, -1.5, 1.5);
    raw.set_requires_grad(true);

    Tape tape;
    {
        Tape::Scope scope(tape);
        tape.backward(total_loss(raw, assignment, grid, config, LossWeights{}).loss);
    }

    // The confidence targets are constants of the gradient, so the finite
    // differences run against the oracle with them frozen at the base point.
    const auto gamma_g = lossoracle::gamma_targets(raw.values(), geom, grid, assignment);
    auto f = [&]() {
        return lossoracle::total(raw.values(), geom, assignment, LossWeights{}, gamma_g);
    };
    const auto fd = testutil::finite_diff(raw, f, 1e-5);
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i)
        worst = std::max(worst, testutil::rel_err(raw.grad()[i], fd[i]));
    return {worst < 1e-4, fmt("max rel err %.3g over %zu logits", worst, fd.size())};
}

// ---- 7. suppression against the quadratic reference ------------------------

std::vector<Detection> nms_reference(const std::vector<Detection>& dets, double threshold) {
    std::vector<Detection> kept;
    std::vector<bool> alive(dets.size(), true);
    while (true) {
        std::int64_t best = -1;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (!alive[i]) continue;
            if (best < 0 || dets[i].score > dets[static_cast<std::size_t>(best)].score)
                best = static_cast<std::int64_t>(i);
        }
        if (best < 0) break;
        const std::size_t b = static_cast<std::size_t>(best);
        alive[b] = false;
        kept.push_back(dets[b]);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (!alive[i] || dets[i].class_id != dets[b].class_id) continue;
            if (iou(dets[b].box(), dets[i].box()) > threshold) alive[i] = false;
        }
    }
    return kept;
}

Outcome nms_equivalence() {
    Rng rng(808);
    for (int instance = 0; instance < 100; ++instance) {
        std::vector<Detection> dets;
        dets.reserve(1000);
        for (int i = 0; i < 1000; ++i) {
            Detection d;
            d.image_id = "img";
            d.class_id = static_cast<int>(rng.uniform_int(0, 2));
            d.score = rng.uniform();
            d.left = rng.uniform(0, 500);
            d.top = rng.uniform(0, 300);
            d.right = d.left + rng.uniform(2, 80);
            d.bottom = d.top + rng.uniform(2, 60);
            dets.push_back(std::move(d));
        }
        const auto fast = nms(dets, 0.4);
        const auto slow = nms_reference(dets, 0.4);
        if (fast.size() != slow.size())
            return {false, fmt("instance %d sizes differ (%zu vs %zu)", instance, fast.size(),
                               slow.size())};
        for (std::size_t i = 0; i < fast.size(); ++i)
            if (fast[i].score != slow[i].score || fast[i].left != slow[i].left ||
                fast[i].class_id != slow[i].class_id)
                return {false, fmt("instance %d diverges at rank %zu", instance, i)};
    }
    return {true, "100 instances of 1000 boxes identical"};
}

// ---- 8 & 9. toy end-to-end training ---------------------------------------

struct TrainingArtifacts {
    bool trained = false;
    double loss0 = 0.0, loss_final = 0.0, recall64 = 0.0, seconds = 0.0;
    std::vector<std::vector<Prediction>> per_image_preds;
    std::vector<GroundTruth> per_image_gts;
};

TrainingArtifacts run_toy_training() {
    TrainingArtifacts art;
    const ModelSpec spec = load_spec_file(models_dir() / "toy.json");
    SceneConfig scenes_cfg;
    const auto scenes = make_dataset(20240611, 8, scenes_cfg);
    std::vector<DatasetEntry> dataset;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        dataset.push_back(
            DatasetEntry{"scene" + std::to_string(i), scenes[i].image, scenes[i].objects});

    TrainConfig config;
    config.batch_size = 8;
    config.max_steps = 2000;
    config.lr0 = 0.01;
    config.lr_decay_factor = 0.5;
    config.lr_decay_step = 10000;
    config.momentum = 0.1;
    config.horizontal_flip = false;
    config.seed = 7;

    WeightStore store = init_weights(spec, config.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto logs = train(spec, store, dataset, config);
    art.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    art.loss0 = logs.front().parts.total;
    art.loss_final = logs.back().parts.total;

    for (const DatasetEntry& entry : dataset) {
        art.per_image_preds.push_back(predict(spec, store, entry.image));
        art.per_image_gts.push_back(entry.gts);
    }
    const std::vector<std::int64_t> n64{64};
    art.recall64 = recall_sweep(art.per_image_preds, art.per_image_gts, n64, 0.5)
                       .points.front()
                       .recall;
    art.trained = true;
    return art;
}

Outcome toy_end_to_end(const TrainingArtifacts& art) {
    const bool pass = art.trained && art.loss_final < 0.1 * art.loss0 && art.recall64 >= 0.9 &&
                      art.seconds < 600.0;
    return {pass, fmt("loss %.4f -> %.4f (ratio %.3f), recall@64 %.3f, %.0fs", art.loss0,
                      art.loss_final, art.loss_final / art.loss0, art.recall64, art.seconds)};
}

Outcome recall_monotonicity(const TrainingArtifacts& art) {
    if (!art.trained) return {false, "training artifacts unavailable"};
    std::vector<std::int64_t> ns;
    for (std::int64_t n = 1; n < 1728; n *= 2) ns.push_back(n);
    ns.push_back(1728);
    const RecallCurve curve = recall_sweep(art.per_image_preds, art.per_image_gts, ns, 0.5);
    for (std::size_t i = 1; i < curve.points.size(); ++i)
        if (curve.points[i].recall < curve.points[i - 1].recall)
            return {false, fmt("recall drops between n=%lld and n=%lld",
                               static_cast<long long>(curve.points[i - 1].n_box),
                               static_cast<long long>(curve.points[i].n_box))};
    return {true, fmt("non-decreasing over %zu points, final %.3f", curve.points.size(),
                      curve.points.back().recall)};
}

// ---- 10. SRAM narrative ----------------------------------------------------

Outcome sram_narrative() {
    CostReport synthetic;
    synthetic.model_mb = 5.0;
    synthetic.peak_pair_mb = 11.0;
    const SramVerdict boundary = sram_check(synthetic, 16.0);
    const SramVerdict below = sram_check(synthetic, 15.999);

    const ModelSpec spec = load_spec_file(models_dir() / "squeezedet.json");
    const CostReport report = analyze(spec, 375, 1242, 1, {});
    const SramVerdict real = sram_check(report, 16.0);
    const bool conv1_limits =
        real.limiting_first == "conv1" || real.limiting_second == "conv1";

    const bool pass = boundary.fits && boundary.required_mb == 16.0 && !below.fits &&
                      !real.fits && conv1_limits;
    return {pass, fmt("5+11 vs 16MB fits=%d (required %.1f), real pair %s+%s %.1fMB",
                      boundary.fits ? 1 : 0, boundary.required_mb, real.limiting_first.c_str(),
                      real.limiting_second.c_str(), real.required_mb)};
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](int index, const char* name, const Outcome& outcome) {
        std::printf("[%s] %2d. %s: %s\n", outcome.pass ? "PASS" : "FAIL", index, name,
                    outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    };

    report(1, "head-formula exactness", head_formula_exactness());
    report(2, "bundled-model cost totals", bundled_totals());
    report(3, "convention pins", convention_pins());
    report(4, "energy-table arithmetic", energy_table());
    report(5, "transform round trip", transform_round_trip());
    report(6, "gradient fidelity", gradient_fidelity());
    report(7, "suppression oracle equivalence", nms_equivalence());

    const TrainingArtifacts art = run_toy_training();
    report(8, "toy end-to-end training", toy_end_to_end(art));
    report(9, "recall monotonicity", recall_monotonicity(art));
    report(10, "sram narrative", sram_narrative());

    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures;
}
