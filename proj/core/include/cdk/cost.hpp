#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cdk/model.hpp"

namespace cdk {

/// Geometry of a detection head for the parameter-count comparisons.
struct HeadSpec {
    std::int64_t filter_w = 0;   // F_w
    std::int64_t filter_h = 0;   // F_h
    std::int64_t channels = 0;   // Ch_f, feature-map channels
    std::int64_t feat_w = 0;     // W_f
    std::int64_t feat_h = 0;     // H_f
    std::int64_t out_w = 0;      // W_o
    std::int64_t out_h = 0;      // H_o
    std::int64_t fc1_width = 0;  // F_fc1
    std::int64_t anchors = 0;    // K
    std::int64_t classes = 0;    // C
};

/// F_w * F_h * Ch_f * K * (5 + C)   (biases excluded)
std::int64_t params_convdet(const HeadSpec& h);

/// F_fc1 * (W_f*H_f*Ch_f + W_o*H_o*(5K + C))
std::int64_t params_fcdet(const HeadSpec& h);

/// Ch_f * K * 5   (region proposals only, no classification outputs)
std::int64_t params_rpn(const HeadSpec& h);

struct HeadComparisonRow {
    std::string name;
    bool proposes_regions = false;
    bool classifies = false;
    std::int64_t params = 0;
};

std::array<HeadComparisonRow, 3> compare_heads(const HeadSpec& h);

/// One stored activation in the flattened layer chain. Fire modules
/// contribute a squeeze row and an expand row.
struct LayerCost {
    std::string name;
    std::int64_t params = 0;
    std::int64_t flops = 0;
    std::int64_t activation_bytes = 0; // 4 bytes per stored element, 0 if fused away
    Shape output_shape;
};

struct AnalyzeOptions {
    bool fuse_conv_pool = false; // a conv feeding a maxpool stores the pooled output
    std::int64_t flops_per_mac = 2;
};

/// MB means 2^20 bytes throughout.
struct CostReport {
    std::vector<LayerCost> layers;
    std::int64_t total_params = 0;
    double model_mb = 0.0; // 4 bytes per parameter
    std::int64_t total_flops = 0;
    double activation_mb = 0.0;
    double peak_pair_mb = 0.0; // max over consecutive stored activations
    std::string peak_pair_first, peak_pair_second;
    bool fused = false;
    std::int64_t batch = 1;
    std::int64_t input_h = 0, input_w = 0;
    std::int64_t flops_per_mac = 2;
};

CostReport analyze(const ModelSpec& spec, std::int64_t input_h, std::int64_t input_w,
                   std::int64_t batch, const AnalyzeOptions& options);

struct SramVerdict {
    bool fits = false;
    double required_mb = 0.0; // model + peak consecutive-pair activations
    std::string limiting_first, limiting_second;
};

/// Fits iff model size plus the peak consecutive-pair activation total
/// stays within the budget.
SramVerdict sram_check(const CostReport& report, double sram_mb);

std::string report_to_json(const CostReport& report, const SramVerdict* verdict);
std::string report_to_text(const CostReport& report, const SramVerdict* verdict);

constexpr double kBytesPerMb = 1024.0 * 1024.0;

} // namespace cdk
