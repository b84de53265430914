#include "cdk/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cdk/error.hpp"
#include "cdk/ops.hpp"
#include "cdk/rng.hpp"

namespace cdk {

using nlohmann::json;

const Tensor& WeightStore::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) fail("E_STATE", "no parameter named '" + name + "'");
    return it->second;
}

Tensor& WeightStore::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) fail("E_STATE", "no parameter named '" + name + "'");
    return it->second;
}

void WeightStore::add(std::string name, Tensor tensor) {
    if (tensors_.count(name)) fail("E_STATE", "duplicate parameter name '" + name + "'");
    names_.push_back(name);
    tensors_.emplace(std::move(name), std::move(tensor));
}

std::int64_t WeightStore::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& name : names_) n += at(name).numel();
    return n;
}

std::vector<Tensor> WeightStore::parameters() const {
    std::vector<Tensor> out;
    out.reserve(names_.size());
    for (const auto& name : names_) out.push_back(at(name));
    return out;
}

void WeightStore::zero_grads() {
    for (const auto& name : names_) tensors_.at(name).zero_grad();
}

FireWeights WeightStore::fire_weights(const std::string& layer_name) const {
    FireWeights fw;
    fw.squeeze_w = at(layer_name + ".squeeze.weight");
    fw.squeeze_b = at(layer_name + ".squeeze.bias");
    fw.expand1_w = at(layer_name + ".expand1x1.weight");
    fw.expand1_b = at(layer_name + ".expand1x1.bias");
    fw.expand3_w = at(layer_name + ".expand3x3.weight");
    fw.expand3_b = at(layer_name + ".expand3x3.bias");
    return fw;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec) {
    std::vector<std::pair<std::string, Shape>> layout;
    for (const LayerSpec& layer : spec.layers) {
        switch (layer.kind) {
            case LayerKind::conv:
            case LayerKind::convdet:
                layout.emplace_back(layer.name + ".weight",
                                    Shape{layer.out_channels, layer.in_channels, layer.kernel.h,
                                          layer.kernel.w});
                layout.emplace_back(layer.name + ".bias", Shape{layer.out_channels});
                break;
            case LayerKind::fire:
                layout.emplace_back(layer.name + ".squeeze.weight",
                                    Shape{layer.fire.s1x1, layer.in_channels, 1, 1});
                layout.emplace_back(layer.name + ".squeeze.bias", Shape{layer.fire.s1x1});
                layout.emplace_back(layer.name + ".expand1x1.weight",
                                    Shape{layer.fire.e1x1, layer.fire.s1x1, 1, 1});
                layout.emplace_back(layer.name + ".expand1x1.bias", Shape{layer.fire.e1x1});
                layout.emplace_back(layer.name + ".expand3x3.weight",
                                    Shape{layer.fire.e3x3, layer.fire.s1x1, 3, 3});
                layout.emplace_back(layer.name + ".expand3x3.bias", Shape{layer.fire.e3x3});
                break;
            case LayerKind::maxpool:
                break;
        }
    }
    return layout;
}

WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    WeightStore store;
    for (auto& [name, shape] : parameter_layout(spec)) {
        Tensor t = Tensor::zeros(shape);
        if (shape.size() == 4) {
            const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
            const double sigma = 1.0 / std::sqrt(fan_in);
            for (double& v : t.mutable_values()) v = sigma * rng.normal();
        }
        t.set_requires_grad(true);
        store.add(name, std::move(t));
    }
    return store;
}

namespace {
constexpr char kWeightsMagic[5] = {'C', 'D', 'K', 'W', '1'};
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
    json manifest = json::array();
    std::int64_t offset = 0;
    for (const std::string& name : store.names()) {
        const Tensor& t = store.at(name);
        manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += 4 * t.numel();
    }
    const std::string manifest_text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) fail("E_IO", "cannot write weights file '" + path.string() + "'");
    out.write(kWeightsMagic, sizeof(kWeightsMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(manifest_text.size());
    unsigned char len_bytes[4] = {static_cast<unsigned char>(len & 0xFF),
                                  static_cast<unsigned char>((len >> 8) & 0xFF),
                                  static_cast<unsigned char>((len >> 16) & 0xFF),
                                  static_cast<unsigned char>((len >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(len_bytes), 4);
    out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
    for (const std::string& name : store.names()) {
        for (double v : store.at(name).values()) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            unsigned char b[4] = {static_cast<unsigned char>(bits & 0xFF),
                                  static_cast<unsigned char>((bits >> 8) & 0xFF),
                                  static_cast<unsigned char>((bits >> 16) & 0xFF),
                                  static_cast<unsigned char>((bits >> 24) & 0xFF)};
            out.write(reinterpret_cast<const char*>(b), 4);
        }
    }
    if (!out) fail("E_IO", "write failure on '" + path.string() + "'");
}

WeightStore load_weights(const ModelSpec& spec, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("E_IO", "cannot open weights file '" + path.string() + "'");
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, kWeightsMagic, 5) != 0)
        fail("E_PARSE", "not a weights file: '" + path.string() + "'");
    unsigned char len_bytes[4];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 4))
        fail("E_PARSE", "truncated weights file '" + path.string() + "'");
    const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) |
                              (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                              (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                              (static_cast<std::uint32_t>(len_bytes[3]) << 24);
    std::string manifest_text(len, '\0');
    if (!in.read(manifest_text.data(), len))
        fail("E_PARSE", "truncated weights manifest in '" + path.string() + "'");

    json manifest;
    try {
        manifest = json::parse(manifest_text);
    } catch (const json::parse_error& e) {
        fail("E_PARSE", std::string("malformed weights manifest: ") + e.what());
    }

    const auto layout = parameter_layout(spec);
    if (!manifest.is_array() || manifest.size() != layout.size())
        fail("E_PARSE", "weights manifest does not match the model spec (" +
                            std::to_string(manifest.size()) + " tensors, expected " +
                            std::to_string(layout.size()) + ")");

    WeightStore store;
    std::int64_t expected_offset = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const json& entry = manifest[i];
        const std::string name = entry.at("name").get<std::string>();
        const Shape shape = entry.at("shape").get<Shape>();
        const std::int64_t offset = entry.at("offset").get<std::int64_t>();
        if (name != layout[i].first || shape != layout[i].second)
            fail("E_PARSE", "weights manifest entry '" + name + "' does not match the model spec");
        if (offset != expected_offset)
            fail("E_PARSE", "weights manifest offset mismatch for '" + name + "'");
        const std::int64_t count = shape_numel(shape);
        std::vector<double> values(static_cast<std::size_t>(count));
        for (std::int64_t v = 0; v < count; ++v) {
            unsigned char b[4];
            if (!in.read(reinterpret_cast<char*>(b), 4))
                fail("E_PARSE", "truncated weights payload at '" + name + "'");
            const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                       (static_cast<std::uint32_t>(b[1]) << 8) |
                                       (static_cast<std::uint32_t>(b[2]) << 16) |
                                       (static_cast<std::uint32_t>(b[3]) << 24);
            float f;
            std::memcpy(&f, &bits, 4);
            values[static_cast<std::size_t>(v)] = static_cast<double>(f);
        }
        Tensor t = Tensor::from_values(shape, std::move(values));
        t.set_requires_grad(true);
        store.add(name, std::move(t));
        expected_offset += 4 * count;
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        fail("E_PARSE", "trailing bytes after weights payload in '" + path.string() + "'");
    return store;
}

Tensor build_fire(const Tensor& input, const FireSpec& spec, const FireWeights& weights,
                  Tensor* squeeze_out) {
    if (weights.squeeze_w.extent(0) != spec.s1x1 || weights.expand1_w.extent(0) != spec.e1x1 ||
        weights.expand3_w.extent(0) != spec.e3x3)
        fail("E_SHAPE", "fire weights do not match the fire spec");
    Tensor squeezed = relu(conv2d(input, weights.squeeze_w, weights.squeeze_b, Stride{1, 1},
                                  Padding{0, 0}));
    if (squeeze_out) *squeeze_out = squeezed;
    Tensor e1 = relu(conv2d(squeezed, weights.expand1_w, weights.expand1_b, Stride{1, 1},
                            Padding{0, 0}));
    Tensor e3 = relu(conv2d(squeezed, weights.expand3_w, weights.expand3_b, Stride{1, 1},
                            Padding{1, 1}));
    return concat_channels(e1, e3);
}

ForwardResult forward(const ModelSpec& spec, const WeightStore& weights, const Tensor& image,
                      std::vector<ForwardTraceEntry>* trace) {
    if (image.rank() != 4)
        fail("E_SHAPE", "forward expects an NCHW image batch, got " + shape_str(image.shape()));
    if (image.extent(1) != spec.in_channels)
        fail("E_SHAPE", "image has " + std::to_string(image.extent(1)) + " channels, model wants " +
                            std::to_string(spec.in_channels));

    auto trace_push = [&](const std::string& name, const Tensor& t) {
        if (trace) trace->push_back(ForwardTraceEntry{name, t.shape()});
    };

    ForwardResult result;
    Tensor x = image;
    for (const LayerSpec& layer : spec.layers) {
        switch (layer.kind) {
            case LayerKind::conv:
            case LayerKind::convdet: {
                if (layer.kind == LayerKind::convdet) result.feature_map = x;
                x = conv2d(x, weights.at(layer.name + ".weight"), weights.at(layer.name + ".bias"),
                           layer.stride, layer.padding);
                if (layer.activation == Activation::relu) x = relu(x);
                trace_push(layer.name, x);
                break;
            }
            case LayerKind::maxpool:
                x = maxpool2d(x, layer.kernel, layer.stride, layer.padding);
                trace_push(layer.name, x);
                break;
            case LayerKind::fire: {
                Tensor squeezed;
                x = build_fire(x, layer.fire, weights.fire_weights(layer.name), &squeezed);
                trace_push(layer.name + "/squeeze", squeezed);
                trace_push(layer.name + "/expand", x);
                break;
            }
        }
    }
    if (spec.has_convdet())
        result.head_raw = x;
    else
        result.feature_map = x;
    return result;
}

} // namespace cdk
