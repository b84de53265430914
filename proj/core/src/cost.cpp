#include "cdk/cost.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cdk/error.hpp"
#include "cdk/ops.hpp"

namespace cdk {

using nlohmann::json;

std::int64_t params_convdet(const HeadSpec& h) {
    return h.filter_w * h.filter_h * h.channels * h.anchors * (5 + h.classes);
}

std::int64_t params_fcdet(const HeadSpec& h) {
    return h.fc1_width *
           (h.feat_w * h.feat_h * h.channels + h.out_w * h.out_h * (5 * h.anchors + h.classes));
}

std::int64_t params_rpn(const HeadSpec& h) { return h.channels * h.anchors * 5; }

std::array<HeadComparisonRow, 3> compare_heads(const HeadSpec& h) {
    return {HeadComparisonRow{"rpn", true, false, params_rpn(h)},
            HeadComparisonRow{"convdet", true, true, params_convdet(h)},
            HeadComparisonRow{"fcdet", true, true, params_fcdet(h)}};
}

namespace {

struct Unit {
    std::string name;
    std::int64_t params = 0;
    std::int64_t flops = 0;
    std::int64_t out_c = 0, out_h = 0, out_w = 0;
    bool is_conv = false;    // conv or convdet, fusion candidate
    bool is_pool = false;
};

std::int64_t conv_flops(std::int64_t c_in, std::int64_t kh, std::int64_t kw, std::int64_t c_out,
                        std::int64_t oh, std::int64_t ow, std::int64_t flops_per_mac,
                        bool with_relu) {
    const std::int64_t out_elems = c_out * oh * ow;
    std::int64_t f = flops_per_mac * kh * kw * c_in * out_elems; // MACs
    f += out_elems;                                              // bias adds
    if (with_relu) f += out_elems;
    return f;
}

} // namespace

CostReport analyze(const ModelSpec& spec, std::int64_t input_h, std::int64_t input_w,
                   std::int64_t batch, const AnalyzeOptions& options) {
    if (batch < 1) fail("E_VALUE", "batch must be >= 1");
    if (options.flops_per_mac < 1) fail("E_VALUE", "flops_per_mac must be >= 1");

    // Flatten the layer chain into stored-activation units.
    std::vector<Unit> units;
    std::int64_t c = spec.in_channels, h = input_h, w = input_w;
    for (const LayerSpec& layer : spec.layers) {
        switch (layer.kind) {
            case LayerKind::conv:
            case LayerKind::convdet: {
                const std::int64_t oh = conv_output_extent(h, layer.kernel.h, layer.stride.h,
                                                           layer.padding.h);
                const std::int64_t ow = conv_output_extent(w, layer.kernel.w, layer.stride.w,
                                                           layer.padding.w);
                Unit u;
                u.name = layer.name;
                u.params = layer.out_channels * c * layer.kernel.h * layer.kernel.w +
                           layer.out_channels;
                u.flops = conv_flops(c, layer.kernel.h, layer.kernel.w, layer.out_channels, oh, ow,
                                     options.flops_per_mac, layer.activation == Activation::relu);
                u.out_c = layer.out_channels;
                u.out_h = oh;
                u.out_w = ow;
                u.is_conv = true;
                units.push_back(std::move(u));
                c = layer.out_channels;
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::maxpool: {
                const std::int64_t oh = conv_output_extent(h, layer.kernel.h, layer.stride.h,
                                                           layer.padding.h);
                const std::int64_t ow = conv_output_extent(w, layer.kernel.w, layer.stride.w,
                                                           layer.padding.w);
                Unit u;
                u.name = layer.name;
                u.flops = c * oh * ow; // one op per output element
                u.out_c = c;
                u.out_h = oh;
                u.out_w = ow;
                u.is_pool = true;
                units.push_back(std::move(u));
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::fire: {
                const FireSpec& f = layer.fire;
                Unit sq;
                sq.name = layer.name + "/squeeze";
                sq.params = f.s1x1 * c + f.s1x1;
                sq.flops = conv_flops(c, 1, 1, f.s1x1, h, w, options.flops_per_mac, true);
                sq.out_c = f.s1x1;
                sq.out_h = h;
                sq.out_w = w;
                units.push_back(std::move(sq));

                Unit ex;
                ex.name = layer.name + "/expand";
                ex.params = f.e1x1 * f.s1x1 + f.e1x1 + f.e3x3 * f.s1x1 * 9 + f.e3x3;
                ex.flops = conv_flops(f.s1x1, 1, 1, f.e1x1, h, w, options.flops_per_mac, true) +
                           conv_flops(f.s1x1, 3, 3, f.e3x3, h, w, options.flops_per_mac, true);
                ex.out_c = f.out_channels();
                ex.out_h = h;
                ex.out_w = w;
                units.push_back(std::move(ex));
                c = f.out_channels();
                break;
            }
        }
    }

    CostReport report;
    report.fused = options.fuse_conv_pool;
    report.batch = batch;
    report.input_h = input_h;
    report.input_w = input_w;
    report.flops_per_mac = options.flops_per_mac;

    for (std::size_t i = 0; i < units.size(); ++i) {
        const Unit& u = units[i];
        LayerCost cost;
        cost.name = u.name;
        cost.params = u.params;
        cost.flops = batch * u.flops;
        cost.output_shape = Shape{batch, u.out_c, u.out_h, u.out_w};
        std::int64_t stored_elems = batch * u.out_c * u.out_h * u.out_w;
        if (options.fuse_conv_pool && u.is_conv && i + 1 < units.size() &&
            units[i + 1].is_pool) {
            const Unit& pool = units[i + 1];
            stored_elems = batch * pool.out_c * pool.out_h * pool.out_w;
        } else if (options.fuse_conv_pool && u.is_pool && i > 0 && units[i - 1].is_conv) {
            stored_elems = 0; // the fused conv already stores this output
        }
        cost.activation_bytes = 4 * stored_elems;
        report.layers.push_back(std::move(cost));
    }

    std::int64_t act_bytes = 0;
    for (const LayerCost& lc : report.layers) {
        report.total_params += lc.params;
        report.total_flops += lc.flops;
        act_bytes += lc.activation_bytes;
    }
    report.model_mb = 4.0 * static_cast<double>(report.total_params) / kBytesPerMb;
    report.activation_mb = static_cast<double>(act_bytes) / kBytesPerMb;

    // Peak over consecutive stored activations, skipping fused-away entries.
    const LayerCost* prev = nullptr;
    for (const LayerCost& lc : report.layers) {
        if (lc.activation_bytes == 0) continue;
        if (prev) {
            const double pair_mb =
                static_cast<double>(prev->activation_bytes + lc.activation_bytes) / kBytesPerMb;
            if (pair_mb > report.peak_pair_mb) {
                report.peak_pair_mb = pair_mb;
                report.peak_pair_first = prev->name;
                report.peak_pair_second = lc.name;
            }
        }
        prev = &lc;
    }
    return report;
}

SramVerdict sram_check(const CostReport& report, double sram_mb) {
    SramVerdict verdict;
    verdict.required_mb = report.model_mb + report.peak_pair_mb;
    verdict.fits = verdict.required_mb <= sram_mb;
    verdict.limiting_first = report.peak_pair_first;
    verdict.limiting_second = report.peak_pair_second;
    return verdict;
}

std::string report_to_json(const CostReport& report, const SramVerdict* verdict) {
    json root;
    root["input"] = {{"h", report.input_h}, {"w", report.input_w}, {"batch", report.batch}};
    root["fused"] = report.fused;
    root["flops_per_mac"] = report.flops_per_mac;
    root["layers"] = json::array();
    for (const LayerCost& lc : report.layers) {
        root["layers"].push_back({{"name", lc.name},
                                  {"params", lc.params},
                                  {"flops", lc.flops},
                                  {"activation_bytes", lc.activation_bytes},
                                  {"output_shape", lc.output_shape}});
    }
    root["totals"] = {{"params", report.total_params},
                      {"model_mb", report.model_mb},
                      {"flops", report.total_flops},
                      {"activation_mb", report.activation_mb},
                      {"peak_pair_mb", report.peak_pair_mb},
                      {"peak_pair", {report.peak_pair_first, report.peak_pair_second}}};
    if (verdict) {
        root["sram"] = {{"fits", verdict->fits},
                        {"required_mb", verdict->required_mb},
                        {"limiting_pair", {verdict->limiting_first, verdict->limiting_second}}};
    }
    return root.dump(2) + "\n";
}

std::string report_to_text(const CostReport& report, const SramVerdict* verdict) {
    std::ostringstream os;
    char line[192];
    std::snprintf(line, sizeof(line), "%-18s %14s %16s %12s %16s\n", "layer", "params", "flops",
                  "act (MB)", "output");
    os << line;
    for (const LayerCost& lc : report.layers) {
        std::snprintf(line, sizeof(line), "%-18s %14lld %16lld %12.3f %16s\n", lc.name.c_str(),
                      static_cast<long long>(lc.params), static_cast<long long>(lc.flops),
                      static_cast<double>(lc.activation_bytes) / kBytesPerMb,
                      shape_str(lc.output_shape).c_str());
        os << line;
    }
    std::snprintf(line, sizeof(line),
                  "totals: flops %.2fe9  model %.1f MB  activation %.1f MB  peak pair %.1f MB "
                  "(%s + %s)\n",
                  static_cast<double>(report.total_flops) / 1e9, report.model_mb,
                  report.activation_mb, report.peak_pair_mb, report.peak_pair_first.c_str(),
                  report.peak_pair_second.c_str());
    os << line;
    if (verdict) {
        std::snprintf(line, sizeof(line), "sram: %s (requires %.1f MB: model + %s/%s pair)\n",
                      verdict->fits ? "fits" : "does not fit", verdict->required_mb,
                      verdict->limiting_first.c_str(), verdict->limiting_second.c_str());
        os << line;
    }
    return os.str();
}

} // namespace cdk
