// cdk — anchor-based detection workbench: synthetic data, toy training,
// detection, static cost analysis, power-trace energy analysis, recall sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdk/cost.hpp"
#include "cdk/data.hpp"
#include "cdk/energy.hpp"
#include "cdk/error.hpp"
#include "cdk/model.hpp"
#include "cdk/network.hpp"
#include "cdk/postprocess.hpp"
#include "cdk/train.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::pair<std::int64_t, std::int64_t> parse_wxh(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos)
        cdk::fail("E_VALUE", "expected WxH, got '" + text + "'");
    return {std::stoll(text.substr(0, x)), std::stoll(text.substr(x + 1))};
}

void write_text(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) cdk::fail("E_IO", "cannot write '" + path + "'");
    out << content;
    if (!out) cdk::fail("E_IO", "write failure on '" + path + "'");
}

int cmd_gen_data(std::int64_t n, std::int64_t height, std::int64_t width, std::uint64_t seed,
                 const std::string& out_dir, const std::string& classes) {
    cdk::SceneConfig config;
    config.height = height;
    config.width = width;
    const std::vector<std::string> class_names = split_list(classes);
    config.class_count = static_cast<std::int64_t>(class_names.size());
    const auto scenes = cdk::make_dataset(seed, n, config);
    cdk::write_dataset_dir(out_dir, scenes, class_names);
    std::cout << "wrote " << scenes.size() << " scenes to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& spec_path, const std::string& data_dir,
              const std::string& out_path, const std::string& log_path,
              const cdk::TrainConfig& config) {
    const cdk::ModelSpec spec = cdk::load_spec_file(spec_path);
    auto dataset = cdk::load_dataset_dir(data_dir, spec.detector.class_names);
    cdk::WeightStore store = cdk::init_weights(spec, config.seed);

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::binary);
        if (!log) cdk::fail("E_IO", "cannot write loss log '" + log_path + "'");
    }
    const auto logs = cdk::train(spec, store, dataset, config, log_path.empty() ? nullptr : &log);
    cdk::save_weights(store, out_path);
    std::printf("trained %lld steps: total %.6g -> %.6g\n",
                static_cast<long long>(config.max_steps), logs.front().parts.total,
                logs.back().parts.total);
    return 0;
}

int cmd_detect(const std::string& spec_path, const std::string& weights_path,
               const std::string& image_path, std::int64_t top, double nms_iou,
               const std::string& out_path) {
    const cdk::ModelSpec spec = cdk::load_spec_file(spec_path);
    const cdk::WeightStore store = cdk::load_weights(spec, weights_path);
    const cdk::Tensor image = cdk::read_image_tensor(image_path);
    const std::string image_id = std::filesystem::path(image_path).stem().string();

    auto preds = cdk::predict(spec, store, image);
    preds = cdk::top_n(preds, top);

    std::vector<cdk::Detection> dets;
    dets.reserve(preds.size());
    for (const cdk::Prediction& p : preds) {
        cdk::Detection d;
        d.image_id = image_id;
        d.class_id = p.class_id;
        d.class_name = spec.detector.class_names[static_cast<std::size_t>(p.class_id)];
        d.score = p.score;
        d.left = p.box.left();
        d.top = p.box.top();
        d.right = p.box.right();
        d.bottom = p.box.bottom();
        dets.push_back(std::move(d));
    }
    dets = cdk::nms(dets, nms_iou);

    std::ostringstream os;
    char line[512];
    for (const cdk::Detection& d : dets) {
        std::snprintf(line, sizeof(line), "%s %s %.9g %.3f %.3f %.3f %.3f\n", d.image_id.c_str(),
                      d.class_name.c_str(), d.score, d.left, d.top, d.right, d.bottom);
        os << line;
    }
    write_text(out_path, os.str());
    return 0;
}

int cmd_analyze(const std::string& spec_path, const std::string& input, std::int64_t batch,
                bool fuse, std::int64_t flops_per_mac, double sram_mb, bool as_json) {
    const cdk::ModelSpec spec = cdk::load_spec_file(spec_path);
    std::int64_t h = spec.in_height, w = spec.in_width;
    if (!input.empty()) {
        auto [pw, ph] = parse_wxh(input);
        w = pw;
        h = ph;
    }
    cdk::AnalyzeOptions options;
    options.fuse_conv_pool = fuse;
    options.flops_per_mac = flops_per_mac;
    const cdk::CostReport report = cdk::analyze(spec, h, w, batch, options);
    const cdk::SramVerdict verdict = cdk::sram_check(report, sram_mb);
    std::cout << (as_json ? cdk::report_to_json(report, &verdict)
                          : cdk::report_to_text(report, &verdict));
    return 0;
}

int cmd_energy(const std::string& trace_path, std::optional<double> fps,
               std::optional<std::int64_t> frames, std::optional<double> seconds,
               double threshold, bool bridge_dips, bool as_json) {
    if (!fps && !(frames && seconds))
        cdk::fail("E_VALUE", "provide --fps or both --frames and --seconds");
    const cdk::PowerTrace trace = cdk::load_trace_file(trace_path);
    const cdk::WorkingPeriod period = cdk::find_working_period(trace, threshold, bridge_dips);

    cdk::EnergyReport report;
    report.avg_power_w = cdk::middle_third_average(trace, period);
    report.fps = fps ? *fps : cdk::fps_from_count(*frames, *seconds);
    report.joules_per_frame = cdk::energy_per_frame(report.avg_power_w, report.fps);
    report.period_start_s = trace.samples[period.start].t;
    report.period_end_s = trace.samples[period.end].t;
    std::cout << (as_json ? cdk::energy_report_to_json(report)
                          : cdk::energy_report_to_text(report));
    return 0;
}

int cmd_recall_sweep(const std::string& spec_path, const std::string& weights_path,
                     const std::string& data_dir, const std::string& n_values, double iou_thr,
                     const std::string& out_path) {
    const cdk::ModelSpec spec = cdk::load_spec_file(spec_path);
    const cdk::WeightStore store = cdk::load_weights(spec, weights_path);
    const auto dataset = cdk::load_dataset_dir(data_dir, spec.detector.class_names);

    std::vector<std::vector<cdk::Prediction>> per_image_preds;
    std::vector<cdk::GroundTruth> per_image_gts;
    for (const cdk::DatasetEntry& entry : dataset) {
        per_image_preds.push_back(cdk::predict(spec, store, entry.image));
        per_image_gts.push_back(entry.gts);
    }

    std::vector<std::int64_t> ns;
    if (!n_values.empty()) {
        for (const std::string& item : split_list(n_values)) ns.push_back(std::stoll(item));
    } else {
        const std::int64_t total = static_cast<std::int64_t>(per_image_preds.front().size());
        for (std::int64_t n = 8; n < total; n *= 2) ns.push_back(n);
        ns.push_back(total);
    }

    const cdk::RecallCurve curve = cdk::recall_sweep(per_image_preds, per_image_gts, ns, iou_thr);
    std::ostringstream os;
    os << "n,recall\n";
    char line[64];
    for (const cdk::RecallPoint& pt : curve.points) {
        std::snprintf(line, sizeof(line), "%lld,%.9g\n", static_cast<long long>(pt.n_box),
                      pt.recall);
        os << line;
    }
    write_text(out_path, os.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cdk: detection-pipeline workbench"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic rectangle dataset");
    std::int64_t gen_n = 8, gen_h = 128, gen_w = 384;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "dataset";
    std::string gen_classes = "red,green,blue";
    gen->add_option("--n", gen_n, "Image count")->check(CLI::PositiveNumber);
    gen->add_option("--height", gen_h, "Image height");
    gen->add_option("--width", gen_w, "Image width");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--classes", gen_classes, "Comma-separated class names (up to 3)");

    // train
    auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
    std::string tr_spec, tr_data, tr_out = "weights.cdkw", tr_log = "loss_log.csv";
    cdk::TrainConfig tr_config;
    tr->add_option("--spec", tr_spec, "Model spec JSON")->required();
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--out", tr_out, "Output weights file");
    tr->add_option("--loss-log", tr_log, "Loss log CSV path (empty to skip)");
    tr->add_option("--steps", tr_config.max_steps, "Step count");
    tr->add_option("--batch", tr_config.batch_size, "Batch size");
    tr->add_option("--seed", tr_config.seed, "Init/shuffle seed");
    tr->add_option("--lr0", tr_config.lr0, "Initial learning rate");
    tr->add_option("--lr-decay-factor", tr_config.lr_decay_factor, "LR decay factor");
    tr->add_option("--lr-decay-step", tr_config.lr_decay_step, "LR decay step size");
    tr->add_option("--momentum", tr_config.momentum, "Momentum coefficient");
    tr->add_flag("--flip", tr_config.horizontal_flip, "Random horizontal flip augmentation");

    // detect
    auto* det = app.add_subcommand("detect", "Run detection on one image tensor");
    std::string det_spec, det_weights, det_image, det_out;
    std::int64_t det_top = 64;
    double det_nms = 0.4;
    det->add_option("--spec", det_spec, "Model spec JSON")->required();
    det->add_option("--weights", det_weights, "Weights file")->required();
    det->add_option("--image", det_image, "Image tensor file")->required();
    det->add_option("--top-n", det_top, "Detections kept before suppression");
    det->add_option("--nms-iou", det_nms, "Suppression IOU threshold");
    det->add_option("--out", det_out, "Output file (stdout when omitted)");

    // analyze
    auto* an = app.add_subcommand("analyze", "Static cost analysis of a model spec");
    std::string an_spec, an_input;
    std::int64_t an_batch = 1, an_fpm = 2;
    double an_sram = 16.0;
    bool an_fuse = false, an_json = false;
    an->add_option("--spec", an_spec, "Model spec JSON")->required();
    an->add_option("--input", an_input, "Input resolution WxH (defaults to the model file)");
    an->add_option("--batch", an_batch, "Batch size");
    an->add_flag("--fuse", an_fuse, "Fuse conv layers into following max pools");
    an->add_option("--flops-per-mac", an_fpm, "FLOPs counted per multiply-accumulate");
    an->add_option("--sram-mb", an_sram, "SRAM budget for the schedulability check");
    an->add_flag("--json", an_json, "Emit JSON instead of the text table");

    // energy
    auto* en = app.add_subcommand("energy", "Energy-per-frame from a power trace");
    std::string en_trace;
    double en_threshold = 20.0;
    bool en_bridge = false, en_json = false;
    std::optional<double> en_fps, en_seconds;
    std::optional<std::int64_t> en_frames;
    double en_fps_v = 0.0, en_seconds_v = 0.0;
    std::int64_t en_frames_v = 0;
    en->add_option("trace", en_trace, "Power trace CSV (t_s,power_w)")->required();
    auto* fps_opt = en->add_option("--fps", en_fps_v, "Inference speed, frames per second");
    auto* frames_opt = en->add_option("--frames", en_frames_v, "Processed frame count");
    auto* seconds_opt = en->add_option("--seconds", en_seconds_v, "Wall-clock duration");
    en->add_option("--threshold", en_threshold, "Working-period power threshold (W)");
    en->add_flag("--bridge-dips", en_bridge, "Bridge sub-threshold dips shorter than 3 samples");
    en->add_flag("--json", en_json, "Emit JSON instead of text");

    // recall-sweep
    auto* rs = app.add_subcommand("recall-sweep", "Recall as a function of kept boxes");
    std::string rs_spec, rs_weights, rs_data, rs_n, rs_out;
    double rs_iou = 0.5;
    rs->add_option("--spec", rs_spec, "Model spec JSON")->required();
    rs->add_option("--weights", rs_weights, "Weights file")->required();
    rs->add_option("--data", rs_data, "Dataset directory")->required();
    rs->add_option("--n-values", rs_n, "Comma-separated box counts (default: powers of two)");
    rs->add_option("--iou", rs_iou, "Match IOU threshold");
    rs->add_option("--out", rs_out, "Output CSV (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_n, gen_h, gen_w, gen_seed, gen_out, gen_classes);
        if (tr->parsed()) return cmd_train(tr_spec, tr_data, tr_out, tr_log, tr_config);
        if (det->parsed())
            return cmd_detect(det_spec, det_weights, det_image, det_top, det_nms, det_out);
        if (an->parsed())
            return cmd_analyze(an_spec, an_input, an_batch, an_fuse, an_fpm, an_sram, an_json);
        if (en->parsed()) {
            if (fps_opt->count()) en_fps = en_fps_v;
            if (frames_opt->count()) en_frames = en_frames_v;
            if (seconds_opt->count()) en_seconds = en_seconds_v;
            return cmd_energy(en_trace, en_fps, en_frames, en_seconds, en_threshold, en_bridge,
                              en_json);
        }
        if (rs->parsed()) return cmd_recall_sweep(rs_spec, rs_weights, rs_data, rs_n, rs_iou, rs_out);
    } catch (const cdk::Error& e) {
        std::cerr << "cdk: error [" << e.code() << "] " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "cdk: error [E_INTERNAL] " << e.what() << "\n";
        return 1;
    }
    return 0;
}
