#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdk/model.hpp"
#include "cdk/tensor.hpp"

namespace cdk {

struct FireWeights {
    Tensor squeeze_w, squeeze_b;
    Tensor expand1_w, expand1_b;
    Tensor expand3_w, expand3_b;
};

/// Named parameter tensors for a model, in deterministic layer order.
/// Weight files hold the same tensors rounded to 32-bit floats.
class WeightStore {
public:
    WeightStore() = default;

    const std::vector<std::string>& names() const { return names_; }
    bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    void add(std::string name, Tensor tensor);

    std::int64_t parameter_count() const;
    std::vector<Tensor> parameters() const; // handles, in name order
    void zero_grads();

    FireWeights fire_weights(const std::string& layer_name) const;

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> tensors_;
};

/// Parameter tensor names and shapes implied by a model spec, in order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec);

/// Deterministic initialization: weights ~ N(0, 1/fan_in), biases zero.
WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed);

/// File format: magic "CDKW1", u32 LE manifest byte length, manifest JSON
/// ([{name, shape, offset}...], offsets into the payload), then the payload
/// of little-endian IEEE-754 32-bit values in manifest order.
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const ModelSpec& spec, const std::filesystem::path& path);

/// Squeeze conv + relu feeding parallel 1x1 and 3x3 expand convs (the 3x3
/// padded by 1), relu on each, concatenated on channels. `squeeze_out`, when
/// given, receives the intermediate squeeze activation.
Tensor build_fire(const Tensor& input, const FireSpec& spec, const FireWeights& weights,
                  Tensor* squeeze_out = nullptr);

struct ForwardTraceEntry {
    std::string name;
    Shape shape;
};

struct ForwardResult {
    Tensor feature_map; // input of the detection head (or last layer output)
    Tensor head_raw;    // undefined when the model has no convdet layer
};

/// Runs the layer stack on an NCHW image batch. Records on the active tape
/// when one is installed. `trace`, when given, receives one entry per stored
/// activation (fire modules contribute squeeze and expand entries).
ForwardResult forward(const ModelSpec& spec, const WeightStore& weights, const Tensor& image,
                      std::vector<ForwardTraceEntry>* trace = nullptr);

} // namespace cdk
