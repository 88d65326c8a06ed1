#include "fixy/model_ir.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <json.hpp>

namespace fixy {

using nlohmann::json;

std::string_view to_string(LayerKind k) {
    switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::depthwise_conv2d: return "depthwise_conv2d";
    case LayerKind::pointwise_conv2d: return "pointwise_conv2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    }
    return "?";
}

std::string_view to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

LayerKind parse_layer_kind(std::string_view s) {
    for (auto k : {LayerKind::conv2d, LayerKind::depthwise_conv2d, LayerKind::pointwise_conv2d,
                   LayerKind::batch_norm, LayerKind::relu, LayerKind::maxpool})
        if (to_string(k) == s) return k;
    throw UnsupportedOpError("layer kind '" + std::string(s) + "'");
}

bool is_conv(LayerKind k) {
    return k == LayerKind::conv2d || k == LayerKind::depthwise_conv2d ||
           k == LayerKind::pointwise_conv2d;
}

const Layer& Model::layer(const std::string& id) const {
    for (const auto& l : layers)
        if (l.id == id) return l;
    throw ParameterError("no layer '" + id + "'");
}

const LayerTensors& Model::tensors(const std::string& id) const {
    auto it = weight_store.find(id);
    if (it == weight_store.end()) throw ParameterError("no tensors for layer '" + id + "'");
    return it->second;
}

namespace {

std::int64_t expected_weight_count(const Layer& l) {
    switch (l.kind) {
    case LayerKind::conv2d: return std::int64_t{l.kh} * l.kw * l.in_ch * l.out_ch;
    case LayerKind::depthwise_conv2d: return std::int64_t{l.kh} * l.kw * l.out_ch;
    case LayerKind::pointwise_conv2d: return std::int64_t{l.in_ch} * l.out_ch;
    case LayerKind::batch_norm: return 4 * std::int64_t{l.out_ch};
    default: return 0;
    }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key))
        throw ParseError(path + "." + key + ": missing");
    const json& v = obj.at(key);
    try {
        if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) throw ParseError(path + "." + key + ": expected integer");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ParseError(path + "." + key + ": expected string");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ParseError(path + "." + key + ": expected number");
        }
        return v.get<T>();
    } catch (const json::exception&) {
        throw ParseError(path + "." + key + ": wrong type");
    }
}

struct TensorRef {
    std::int64_t offset = 0;
    std::int64_t count = 0;
};

TensorRef tensor_ref(const json& obj, const char* key, const std::string& path) {
    const std::string p = path + "." + key;
    const json& t = obj.at(key);
    if (!t.is_object()) throw ParseError(p + ": expected object");
    TensorRef r{field<int>(t, "offset", p), field<int>(t, "count", p)};
    if (r.offset < 0) throw ParseError(p + ".offset: negative");
    if (r.count < 0) throw ParseError(p + ".count: negative");
    return r;
}

std::vector<float> read_floats(std::string_view blob, TensorRef r) {
    std::vector<float> out(static_cast<std::size_t>(r.count));
    for (std::int64_t i = 0; i < r.count; ++i) {
        std::uint32_t bits = 0;
        const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + r.offset + 4 * i);
        bits = std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
               std::uint32_t{p[3]} << 24;
        out[static_cast<std::size_t>(i)] = std::bit_cast<float>(bits);
    }
    return out;
}

void append_floats(std::string& blob, const std::vector<float>& v) {
    for (float f : v) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
}

Shape3 layer_output(const Layer& l, Shape3 in) {
    Shape3 out = in;
    out.c = l.out_ch;
    if (is_conv(l.kind) || l.kind == LayerKind::maxpool) {
        if (l.stride <= 0) throw ShapeError(l.id + ": non-positive stride");
        if (l.pad == Padding::same) {
            out.h = (in.h + l.stride - 1) / l.stride;
            out.w = (in.w + l.stride - 1) / l.stride;
        } else {
            out.h = (in.h - l.kh) / l.stride + 1;
            out.w = (in.w - l.kw) / l.stride + 1;
            if (in.h < l.kh || in.w < l.kw) out.h = out.w = 0;
        }
    }
    if (out.h <= 0 || out.w <= 0 || out.c <= 0)
        throw ShapeError(l.id + ": non-positive output dimension " + to_string(out));
    return out;
}

} // namespace

void validate_model(const Model& m) {
    if (m.layers.empty()) return;
    if (m.input.h <= 0 || m.input.w <= 0 || m.input.c <= 0)
        throw ShapeError("input dimensions must be positive");
    int ch = m.input.c;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const Layer& l = m.layers[i];
        const std::string p = "layers[" + std::to_string(i) + "]";
        if (l.in_ch != ch)
            throw ShapeError(p + " (" + l.id + "): in_ch " + std::to_string(l.in_ch) +
                             " does not match incoming " + std::to_string(ch) + " channels");
        if (l.kh <= 0 || l.kw <= 0) throw ParseError(p + ".k: non-positive kernel");
        if (l.stride <= 0) throw ParseError(p + ".stride: non-positive");
        switch (l.kind) {
        case LayerKind::depthwise_conv2d:
        case LayerKind::batch_norm:
        case LayerKind::relu:
        case LayerKind::maxpool:
            if (l.out_ch != l.in_ch)
                throw ShapeError(p + " (" + l.id + "): " + std::string(to_string(l.kind)) +
                                 " must preserve channel count");
            break;
        case LayerKind::pointwise_conv2d:
            if (l.kh != 1 || l.kw != 1) throw ShapeError(p + " (" + l.id + "): pointwise kernel must be 1x1");
            break;
        case LayerKind::conv2d: break;
        }
        const bool has_weights = m.weight_store.count(l.id) > 0;
        const std::int64_t need = expected_weight_count(l);
        if (need == 0 && has_weights) {
            const auto& t = m.weight_store.at(l.id);
            if (!t.weights.empty() || !t.gamma.empty())
                throw ParseError(p + ".weights: " + std::string(to_string(l.kind)) + " carries no weights");
        }
        if (need > 0) {
            if (!has_weights) throw IntegrityError(p + " (" + l.id + "): missing tensors");
            const auto& t = m.weight_store.at(l.id);
            if (l.kind == LayerKind::batch_norm) {
                for (const auto* v : {&t.gamma, &t.beta, &t.mean, &t.var})
                    if (static_cast<int>(v->size()) != l.out_ch)
                        throw IntegrityError(p + " (" + l.id + "): batch_norm vectors must have " +
                                             std::to_string(l.out_ch) + " entries");
            } else {
                if (static_cast<std::int64_t>(t.weights.size()) != need)
                    throw IntegrityError(p + " (" + l.id + "): expected " + std::to_string(need) +
                                         " weights, have " + std::to_string(t.weights.size()));
                if (static_cast<int>(t.bias.size()) != l.out_ch)
                    throw IntegrityError(p + " (" + l.id + "): bias must have out_ch entries");
            }
        }
        ch = l.out_ch;
    }
    for (const auto& [id, t] : m.weight_store) {
        (void)t;
        if (std::none_of(m.layers.begin(), m.layers.end(), [&](const Layer& l) { return l.id == id; }))
            throw IntegrityError("weight_store references unknown layer '" + id + "'");
    }
}

Model parse_model(std::string_view manifest_text, std::string_view weights_blob) {
    json doc;
    try {
        doc = json::parse(manifest_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("manifest: expected a JSON object");

    Model m;
    m.name = field<std::string>(doc, "name", "manifest");
    if (!doc.contains("input")) throw ParseError("manifest.input: missing");
    const json& in = doc["input"];
    m.input = {field<int>(in, "h", "input"), field<int>(in, "w", "input"), field<int>(in, "c", "input"),
               field<int>(in, "bits", "input")};
    if (doc.contains("head")) m.head_classes = field<int>(doc["head"], "classes", "head");
    if (!doc.contains("layers") || !doc["layers"].is_array()) throw ParseError("manifest.layers: missing or not an array");

    std::int64_t cursor = 0; // byte offset expected for the next tensor
    struct Pending {
        std::string id;
        LayerKind kind;
        std::optional<TensorRef> w, b;
    };
    std::vector<Pending> pending;

    const json& layers = doc["layers"];
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const json& j = layers[i];
        const std::string p = "layers[" + std::to_string(i) + "]";
        Layer l;
        l.id = field<std::string>(j, "id", p);
        l.kind = parse_layer_kind(field<std::string>(j, "kind", p));
        if (j.contains("k")) {
            const json& k = j["k"];
            if (!k.is_array() || k.size() != 2 || !k[0].is_number_integer() || !k[1].is_number_integer())
                throw ParseError(p + ".k: expected [int,int]");
            l.kh = k[0].get<int>();
            l.kw = k[1].get<int>();
        }
        l.stride = j.contains("stride") ? field<int>(j, "stride", p) : 1;
        if (j.contains("pad")) {
            const auto pad = field<std::string>(j, "pad", p);
            if (pad == "same") l.pad = Padding::same;
            else if (pad == "valid") l.pad = Padding::valid;
            else throw ParseError(p + ".pad: expected \"same\" or \"valid\"");
        }
        l.in_ch = field<int>(j, "in_ch", p);
        l.out_ch = field<int>(j, "out_ch", p);
        if (j.contains("bn")) {
            if (!j["bn"].is_object()) throw ParseError(p + ".bn: expected object");
            if (j["bn"].contains("eps")) l.bn_eps = field<double>(j["bn"], "eps", p + ".bn");
        }
        if (std::any_of(m.layers.begin(), m.layers.end(), [&](const Layer& o) { return o.id == l.id; }))
            throw ParseError(p + ".id: duplicate '" + l.id + "'");

        Pending pd{l.id, l.kind, {}, {}};
        if (j.contains("weights")) {
            pd.w = tensor_ref(j, "weights", p);
            if (expected_weight_count(l) == 0)
                throw ParseError(p + ".weights: " + std::string(to_string(l.kind)) + " carries no weights");
            if (pd.w->count != expected_weight_count(l))
                throw ParseError(p + ".weights.count: expected " + std::to_string(expected_weight_count(l)) +
                                 " for the declared shape, got " + std::to_string(pd.w->count));
        } else if (expected_weight_count(l) > 0) {
            throw ParseError(p + ".weights: missing");
        }
        if (j.contains("bias")) {
            if (!is_conv(l.kind)) throw ParseError(p + ".bias: only convolutions carry a bias");
            pd.b = tensor_ref(j, "bias", p);
            if (pd.b->count != l.out_ch) throw ParseError(p + ".bias.count: expected out_ch entries");
        }
        for (auto* r : {&pd.w, &pd.b}) {
            if (!*r) continue;
            if ((*r)->offset != cursor)
                throw IntegrityError(p + ": tensor offset " + std::to_string((*r)->offset) +
                                     " breaks declaration order (expected " + std::to_string(cursor) + ")");
            cursor += 4 * (*r)->count;
        }
        m.layers.push_back(l);
        pending.push_back(std::move(pd));
    }

    if (static_cast<std::int64_t>(weights_blob.size()) != cursor)
        throw IntegrityError("weight blob has " + std::to_string(weights_blob.size()) +
                             " bytes, manifest declares " + std::to_string(cursor));

    for (std::size_t i = 0; i < pending.size(); ++i) {
        const Pending& pd = pending[i];
        if (!pd.w) continue;
        LayerTensors t;
        auto values = read_floats(weights_blob, *pd.w);
        if (pd.kind == LayerKind::batch_norm) {
            const auto c = values.size() / 4;
            t.gamma.assign(values.begin(), values.begin() + c);
            t.beta.assign(values.begin() + c, values.begin() + 2 * c);
            t.mean.assign(values.begin() + 2 * c, values.begin() + 3 * c);
            t.var.assign(values.begin() + 3 * c, values.end());
        } else {
            t.weights = std::move(values);
            if (pd.b) {
                t.bias = read_floats(weights_blob, *pd.b);
                t.bias_declared = true;
            } else {
                t.bias.assign(static_cast<std::size_t>(m.layers[i].out_ch), 0.0f);
            }
        }
        m.weight_store.emplace(pd.id, std::move(t));
    }
    validate_model(m);
    return m;
}

SerializedModel serialize_model(const Model& m) {
    SerializedModel out;
    json doc;
    doc["name"] = m.name;
    doc["input"] = {{"h", m.input.h}, {"w", m.input.w}, {"c", m.input.c}, {"bits", m.input.bits}};
    if (m.head_classes > 0) doc["head"] = {{"classes", m.head_classes}};
    json layers = json::array();
    for (const auto& l : m.layers) {
        json j;
        j["id"] = l.id;
        j["kind"] = std::string(to_string(l.kind));
        j["k"] = {l.kh, l.kw};
        j["stride"] = l.stride;
        j["pad"] = std::string(to_string(l.pad));
        j["in_ch"] = l.in_ch;
        j["out_ch"] = l.out_ch;
        auto it = m.weight_store.find(l.id);
        if (it != m.weight_store.end()) {
            const LayerTensors& t = it->second;
            const auto offset = static_cast<std::int64_t>(out.blob.size());
            if (l.kind == LayerKind::batch_norm) {
                for (const auto* v : {&t.gamma, &t.beta, &t.mean, &t.var}) append_floats(out.blob, *v);
                j["weights"] = {{"offset", offset}, {"count", 4 * t.gamma.size()}};
                j["bn"] = {{"eps", l.bn_eps}};
            } else if (!t.weights.empty()) {
                append_floats(out.blob, t.weights);
                j["weights"] = {{"offset", offset}, {"count", t.weights.size()}};
                if (t.bias_declared) {
                    j["bias"] = {{"offset", out.blob.size()}, {"count", t.bias.size()}};
                    append_floats(out.blob, t.bias);
                }
            }
        }
        layers.push_back(std::move(j));
    }
    doc["layers"] = std::move(layers);
    out.manifest = doc.dump(2);
    return out;
}

std::int64_t ShapedModel::feature_macs() const {
    std::int64_t s = 0;
    for (auto v : layer_macs) s += v;
    return s;
}

ShapedModel infer_shapes(const Model& m, Shape3 input) {
    ShapedModel s;
    s.model = m;
    s.input_shape = input;
    if (!m.layers.empty() && input.c != m.layers.front().in_ch)
        throw ShapeError("input has " + std::to_string(input.c) + " channels, first layer expects " +
                         std::to_string(m.layers.front().in_ch));
    Shape3 cur = input;
    for (const auto& l : m.layers) {
        if (l.in_ch != cur.c) throw ShapeError(l.id + ": channel mismatch");
        const Shape3 out = layer_output(l, cur);
        const std::int64_t px = std::int64_t{out.h} * out.w;
        std::int64_t macs = 0, params = 0;
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::pointwise_conv2d:
            macs = px * l.kh * l.kw * l.in_ch * l.out_ch;
            params = std::int64_t{l.kh} * l.kw * l.in_ch * l.out_ch + l.out_ch;
            break;
        case LayerKind::depthwise_conv2d:
            macs = px * l.kh * l.kw * l.out_ch;
            params = std::int64_t{l.kh} * l.kw * l.out_ch + l.out_ch;
            break;
        case LayerKind::batch_norm: params = 2 * std::int64_t{l.out_ch}; break;
        default: break;
        }
        s.activation_shapes.push_back(out);
        s.layer_macs.push_back(macs);
        s.layer_params.push_back(params);
        cur = out;
    }
    if (m.head_classes > 0) {
        s.head_macs = std::int64_t{cur.c} * m.head_classes;
        s.head_params = s.head_macs + m.head_classes;
    }
    s.mac_count = s.feature_macs() + s.head_macs;
    s.param_count = s.head_params;
    for (auto p : s.layer_params) s.param_count += p;
    return s;
}

std::int64_t layer_ops(const ShapedModel& s, std::size_t i) {
    const Layer& l = s.model.layers[i];
    if (is_conv(l.kind)) return 2 * s.layer_macs[i];
    if (l.kind == LayerKind::batch_norm) return 2 * static_cast<std::int64_t>(s.activation_shapes[i].size());
    return 0;
}

std::vector<std::size_t> conv_unit_starts(const Model& m) {
    std::vector<std::size_t> starts;
    bool after_depthwise = false;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerKind k = m.layers[i].kind;
        if (k == LayerKind::conv2d || k == LayerKind::depthwise_conv2d) {
            starts.push_back(i);
            after_depthwise = k == LayerKind::depthwise_conv2d;
        } else if (k == LayerKind::pointwise_conv2d) {
            if (!after_depthwise) starts.push_back(i);
            after_depthwise = false;
        }
    }
    return starts;
}

int conv_unit_count(const Model& m) { return static_cast<int>(conv_unit_starts(m).size()); }

namespace {

ShapedModel slice(const ShapedModel& s, std::size_t begin, std::size_t end, bool with_head) {
    ShapedModel out;
    out.model.name = s.model.name;
    out.model.input = s.model.input;
    out.input_shape = s.input_of(begin);
    out.model.input.h = out.input_shape.h;
    out.model.input.w = out.input_shape.w;
    out.model.input.c = out.input_shape.c;
    if (begin > 0) out.model.input.bits = 8;
    for (std::size_t i = begin; i < end; ++i) {
        const Layer& l = s.model.layers[i];
        out.model.layers.push_back(l);
        if (auto it = s.model.weight_store.find(l.id); it != s.model.weight_store.end())
            out.model.weight_store.emplace(it->first, it->second);
        out.activation_shapes.push_back(s.activation_shapes[i]);
        out.layer_macs.push_back(s.layer_macs[i]);
        out.layer_params.push_back(s.layer_params[i]);
    }
    if (with_head) {
        out.model.head_classes = s.model.head_classes;
        out.head_macs = s.head_macs;
        out.head_params = s.head_params;
    }
    out.mac_count = out.feature_macs() + out.head_macs;
    out.param_count = out.head_params;
    for (auto p : out.layer_params) out.param_count += p;
    return out;
}

} // namespace

ModelSplit split_model(const ShapedModel& shaped, int n_fixed, bool adaptive_bn) {
    const auto starts = conv_unit_starts(shaped.model);
    const int units = static_cast<int>(starts.size());
    if (n_fixed < 0 || n_fixed > units)
        throw ParameterError("n_fixed " + std::to_string(n_fixed) + " outside [0, " + std::to_string(units) + "]");
    const std::size_t boundary =
        n_fixed == units ? shaped.model.layers.size() : starts[static_cast<std::size_t>(n_fixed)];

    ModelSplit sp;
    sp.split_index = n_fixed;
    sp.layer_boundary = boundary;
    sp.adaptive_bn = adaptive_bn;
    sp.fixed_part = slice(shaped, 0, boundary, false);
    sp.programmable_part = slice(shaped, boundary, shaped.model.layers.size(), true);
    sp.fixed_macs = sp.fixed_part.mac_count;
    sp.programmable_macs = sp.programmable_part.mac_count;

    std::int64_t total_ops = 0, fixed_ops = 0;
    for (std::size_t i = 0; i < shaped.model.layers.size(); ++i) {
        const auto ops = layer_ops(shaped, i);
        total_ops += ops;
        if (i >= boundary) continue;
        // Adaptive BN keeps batch-norm programmable, so its ops are not fixed.
        if (adaptive_bn && shaped.model.layers[i].kind == LayerKind::batch_norm) continue;
        fixed_ops += ops;
    }
    sp.fixed_ops_fraction = total_ops > 0 ? static_cast<double>(fixed_ops) / total_ops : 0.0;
    const auto feature = shaped.feature_macs();
    sp.fixed_mac_fraction = feature > 0 ? static_cast<double>(sp.fixed_macs) / feature : 0.0;
    return sp;
}

OpsParams count_ops_params(const ShapedModel& shaped) { return {shaped.mac_count, shaped.param_count}; }

} // namespace fixy
