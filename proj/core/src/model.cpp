#include "cdk/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cdk/error.hpp"

namespace cdk {

using nlohmann::json;

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::fire: return "fire";
        case LayerKind::convdet: return "convdet";
    }
    return "?";
}

const char* to_string(Activation act) { return act == Activation::relu ? "relu" : "none"; }

bool ModelSpec::has_convdet() const {
    return !layers.empty() && layers.back().kind == LayerKind::convdet;
}

const LayerSpec& ModelSpec::convdet_layer() const {
    if (!has_convdet()) fail("E_STATE", "model has no detection head layer");
    return layers.back();
}

void resolve_channels(ModelSpec& spec) {
    if (spec.layers.empty()) fail("E_PARSE", "empty model");
    if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1)
        fail("E_PARSE", "model input extents must be positive");

    std::unordered_set<std::string> names;
    std::int64_t channels = spec.in_channels;
    for (std::size_t idx = 0; idx < spec.layers.size(); ++idx) {
        LayerSpec& layer = spec.layers[idx];
        if (layer.name.empty()) fail("E_PARSE", "layer " + std::to_string(idx) + " has no name");
        if (!names.insert(layer.name).second)
            fail("E_PARSE", "duplicate layer name '" + layer.name + "'");
        if (layer.kind == LayerKind::convdet && idx + 1 != spec.layers.size())
            fail("E_PARSE", "convdet layer '" + layer.name + "' must be last");

        if (layer.in_channels != 0 && layer.in_channels != channels)
            fail("E_PARSE", "channel-chain mismatch at '" + layer.name + "': declared " +
                                std::to_string(layer.in_channels) + ", derived " +
                                std::to_string(channels));
        layer.in_channels = channels;

        switch (layer.kind) {
            case LayerKind::conv:
                if (layer.filters < 1)
                    fail("E_PARSE", "conv layer '" + layer.name + "' needs filters >= 1");
                layer.out_channels = layer.filters;
                break;
            case LayerKind::maxpool:
                layer.out_channels = channels;
                break;
            case LayerKind::fire:
                if (layer.fire.s1x1 < 1 || layer.fire.e1x1 < 1 || layer.fire.e3x3 < 1)
                    fail("E_PARSE", "fire layer '" + layer.name + "' needs positive filter counts");
                layer.out_channels = layer.fire.out_channels();
                break;
            case LayerKind::convdet:
                spec.detector.validate();
                layer.filters = spec.detector.head_channels();
                layer.out_channels = layer.filters;
                break;
        }
        if (layer.kind != LayerKind::fire && (layer.kernel.h < 1 || layer.kernel.w < 1))
            fail("E_PARSE", "layer '" + layer.name + "' has invalid kernel extents");
        channels = layer.out_channels;
    }
}

namespace {

[[noreturn]] void parse_fail(const std::string& message) { fail("E_PARSE", message); }

std::int64_t get_int(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number_integer())
        parse_fail(where + ": missing integer field '" + key + "'");
    return j[key].get<std::int64_t>();
}

double get_num(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number())
        parse_fail(where + ": missing numeric field '" + key + "'");
    return j[key].get<double>();
}

std::pair<std::int64_t, std::int64_t> get_int_pair(const json& j, const char* key,
                                                   const std::string& where) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
        parse_fail(where + ": field '" + key + "' must be a [h, w] pair");
    return {j[key][0].get<std::int64_t>(), j[key][1].get<std::int64_t>()};
}

LayerSpec parse_layer(const json& j) {
    LayerSpec layer;
    if (!j.contains("name") || !j["name"].is_string()) parse_fail("layer is missing a name");
    layer.name = j["name"].get<std::string>();
    const std::string where = "layer '" + layer.name + "'";

    if (!j.contains("kind") || !j["kind"].is_string())
        parse_fail(where + " is missing a kind");
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "conv")
        layer.kind = LayerKind::conv;
    else if (kind == "maxpool")
        layer.kind = LayerKind::maxpool;
    else if (kind == "fire")
        layer.kind = LayerKind::fire;
    else if (kind == "convdet")
        layer.kind = LayerKind::convdet;
    else
        parse_fail(where + ": unknown layer kind '" + kind + "'");

    if (j.contains("in_channels")) layer.in_channels = get_int(j, "in_channels", where);

    if (j.contains("activation")) {
        const std::string act = j["activation"].get<std::string>();
        if (act == "relu")
            layer.activation = Activation::relu;
        else if (act == "none")
            layer.activation = Activation::none;
        else
            parse_fail(where + ": unknown activation '" + act + "'");
    }

    switch (layer.kind) {
        case LayerKind::conv:
            layer.filters = get_int(j, "filters", where);
            [[fallthrough]];
        case LayerKind::convdet:
        case LayerKind::maxpool: {
            auto [kh, kw] = get_int_pair(j, "kernel", where);
            layer.kernel = Window{kh, kw};
            auto [sh, sw] = get_int_pair(j, "stride", where);
            layer.stride = Stride{sh, sw};
            auto [ph, pw] = get_int_pair(j, "padding", where);
            layer.padding = Padding{ph, pw};
            break;
        }
        case LayerKind::fire:
            layer.fire.s1x1 = get_int(j, "s1x1", where);
            layer.fire.e1x1 = get_int(j, "e1x1", where);
            layer.fire.e3x3 = get_int(j, "e3x3", where);
            break;
    }
    return layer;
}

std::string format_number(double v) {
    if (std::floor(v) == v && std::abs(v) < 1e15)
        return std::to_string(static_cast<std::int64_t>(v));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

ModelSpec parse_spec(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        parse_fail(std::string("malformed model spec JSON: ") + e.what());
    }
    if (!root.is_object()) parse_fail("model spec must be a JSON object");

    ModelSpec spec;
    if (!root.contains("input") || !root["input"].is_object())
        parse_fail("model spec is missing 'input'");
    const json& input = root["input"];
    spec.in_channels = get_int(input, "c", "input");
    spec.in_height = get_int(input, "h", "input");
    spec.in_width = get_int(input, "w", "input");

    if (!root.contains("layers") || !root["layers"].is_array())
        parse_fail("model spec is missing 'layers'");
    if (root["layers"].empty()) parse_fail("empty model");
    for (const json& jl : root["layers"]) spec.layers.push_back(parse_layer(jl));

    if (root.contains("detector")) {
        const json& det = root["detector"];
        spec.detector.anchors_per_cell = get_int(det, "k", "detector");
        if (!det.contains("classes") || !det["classes"].is_array())
            parse_fail("detector: missing 'classes' array");
        for (const json& c : det["classes"]) spec.detector.class_names.push_back(c.get<std::string>());
        if (!det.contains("anchors") || !det["anchors"].is_array())
            parse_fail("detector: missing 'anchors' array");
        for (const json& a : det["anchors"]) {
            if (!a.is_array() || a.size() != 2) parse_fail("detector: anchors must be [w, h] pairs");
            spec.detector.anchor_shapes.emplace_back(a[0].get<double>(), a[1].get<double>());
        }
    }

    if (root.contains("loss")) {
        const json& loss = root["loss"];
        spec.loss.bbox = get_num(loss, "lambda_bbox", "loss");
        spec.loss.conf_pos = get_num(loss, "lambda_conf_pos", "loss");
        spec.loss.conf_neg = get_num(loss, "lambda_conf_neg", "loss");
    }

    resolve_channels(spec);
    return spec;
}

ModelSpec load_spec_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("E_IO", "cannot open model spec '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

std::string serialize_spec(const ModelSpec& spec) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"input\": {\"c\": " << spec.in_channels << ", \"h\": " << spec.in_height
       << ", \"w\": " << spec.in_width << "},\n";
    os << "  \"layers\": [\n";
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        os << "    {\"name\": \"" << layer.name << "\", \"kind\": \"" << to_string(layer.kind)
           << "\"";
        switch (layer.kind) {
            case LayerKind::conv:
                os << ", \"filters\": " << layer.filters;
                [[fallthrough]];
            case LayerKind::convdet:
            case LayerKind::maxpool:
                os << ", \"kernel\": [" << layer.kernel.h << ", " << layer.kernel.w << "]"
                   << ", \"stride\": [" << layer.stride.h << ", " << layer.stride.w << "]"
                   << ", \"padding\": [" << layer.padding.h << ", " << layer.padding.w << "]";
                break;
            case LayerKind::fire:
                os << ", \"s1x1\": " << layer.fire.s1x1 << ", \"e1x1\": " << layer.fire.e1x1
                   << ", \"e3x3\": " << layer.fire.e3x3;
                break;
        }
        if (layer.kind == LayerKind::conv)
            os << ", \"activation\": \"" << to_string(layer.activation) << "\"";
        os << "}" << (i + 1 < spec.layers.size() ? "," : "") << "\n";
    }
    os << "  ],\n";
    if (spec.detector.anchors_per_cell > 0) {
        os << "  \"detector\": {\n";
        os << "    \"k\": " << spec.detector.anchors_per_cell << ",\n";
        os << "    \"classes\": [";
        for (std::size_t i = 0; i < spec.detector.class_names.size(); ++i)
            os << (i ? ", " : "") << "\"" << spec.detector.class_names[i] << "\"";
        os << "],\n";
        os << "    \"anchors\": [";
        for (std::size_t i = 0; i < spec.detector.anchor_shapes.size(); ++i) {
            const auto& [w, h] = spec.detector.anchor_shapes[i];
            os << (i ? ", " : "") << "[" << format_number(w) << ", " << format_number(h) << "]";
        }
        os << "]\n";
        os << "  },\n";
    }
    os << "  \"loss\": {\"lambda_bbox\": " << format_number(spec.loss.bbox)
       << ", \"lambda_conf_pos\": " << format_number(spec.loss.conf_pos)
       << ", \"lambda_conf_neg\": " << format_number(spec.loss.conf_neg) << "}\n";
    os << "}\n";
    return os.str();
}

} // namespace cdk
