#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdk/detect.hpp"
#include "cdk/loss.hpp"
#include "cdk/ops.hpp"

namespace cdk {

/// Squeeze/expand filter counts of a fire module. Output channel count is
/// e1x1 + e3x3; the 3x3 expand runs with padding 1 so spatial extents hold.
struct FireSpec {
    std::int64_t s1x1 = 0;
    std::int64_t e1x1 = 0;
    std::int64_t e3x3 = 0;

    std::int64_t out_channels() const { return e1x1 + e3x3; }
};

enum class LayerKind { conv, maxpool, fire, convdet };
enum class Activation { none, relu };

const char* to_string(LayerKind kind);
const char* to_string(Activation act);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::int64_t filters = 0; // conv only; convdet derives K*(5+C)
    Window kernel{3, 3};
    Stride stride{1, 1};
    Padding padding{0, 0};
    Activation activation = Activation::none;
    FireSpec fire{};

    // Resolved by validation from the predecessor chain.
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
};

struct ModelSpec {
    std::int64_t in_channels = 3;
    std::int64_t in_height = 0;
    std::int64_t in_width = 0;
    std::vector<LayerSpec> layers;
    DetectorConfig detector;
    LossWeights loss;

    bool has_convdet() const;
    const LayerSpec& convdet_layer() const;
};

/// Validates structure (unique names, convdet last, known kinds) and resolves
/// the per-layer channel chain from the input channel count.
void resolve_channels(ModelSpec& spec);

ModelSpec parse_spec(const std::string& json_text);
ModelSpec load_spec_file(const std::filesystem::path& path);

/// Canonical JSON form; parse_spec(serialize_spec(m)) round-trips losslessly.
std::string serialize_spec(const ModelSpec& spec);

} // namespace cdk
