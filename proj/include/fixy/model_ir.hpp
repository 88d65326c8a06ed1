#pragma once

// Neutral model interchange format: a JSON manifest plus a little-endian
// float32 weight blob. Parsing, validation, shape inference, work counting
// and fixed/programmable splitting all live here.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fixy/tensor.hpp"

namespace fixy {

enum class LayerKind { conv2d, depthwise_conv2d, pointwise_conv2d, batch_norm, relu, maxpool };
enum class Padding { same, valid };

std::string_view to_string(LayerKind k);
std::string_view to_string(Padding p);
LayerKind parse_layer_kind(std::string_view s);

bool is_conv(LayerKind k);

struct InputSpec {
    int h = 0;
    int w = 0;
    int c = 0;
    int bits = 8;

    Shape3 shape() const { return {h, w, c}; }
    bool operator==(const InputSpec&) const = default;
};

struct Layer {
    std::string id;
    LayerKind kind = LayerKind::conv2d;
    int kh = 1;
    int kw = 1;
    int stride = 1;
    Padding pad = Padding::same;
    int in_ch = 0;
    int out_ch = 0;
    double bn_eps = 1e-3; ///< batch_norm only

    bool operator==(const Layer&) const = default;
};

/// Raw float tensors bound to one layer.
/// conv: weights [out][in][kh][kw] plus bias[out] (zeros when undeclared).
/// depthwise: weights [ch][kh][kw] plus bias[ch].
/// batch_norm: gamma, beta, mean, var, each [ch].
struct LayerTensors {
    std::vector<float> weights;
    std::vector<float> bias;
    bool bias_declared = false;
    std::vector<float> gamma, beta, mean, var;

    bool operator==(const LayerTensors&) const = default;
};

struct Model {
    std::string name;
    InputSpec input;
    std::vector<Layer> layers;
    std::map<std::string, LayerTensors> weight_store;
    /// Classifier width of the (unmodeled) FC head; 0 when the model has none.
    /// Counted in whole-model MAC/param totals, never lowered to hardware.
    int head_classes = 0;

    const Layer& layer(const std::string& id) const;
    const LayerTensors& tensors(const std::string& id) const;
    bool operator==(const Model&) const = default;
};

struct ShapedModel {
    Model model;
    Shape3 input_shape;
    std::vector<Shape3> activation_shapes; ///< output of each layer
    std::vector<std::int64_t> layer_macs;
    std::vector<std::int64_t> layer_params;
    std::int64_t head_macs = 0;
    std::int64_t head_params = 0;
    std::int64_t mac_count = 0;   ///< layers + head
    std::int64_t param_count = 0; ///< layers + head

    Shape3 input_of(std::size_t layer_index) const {
        return layer_index == 0 ? input_shape : activation_shapes[layer_index - 1];
    }
    Shape3 output_shape() const {
        return activation_shapes.empty() ? input_shape : activation_shapes.back();
    }
    /// Sum of per-layer MACs, excluding the classifier head.
    std::int64_t feature_macs() const;
};

/// Operation count of one layer: 2 per MAC for convolutions, 2 per output
/// element for batch_norm (scale + shift), nothing for relu/maxpool.
std::int64_t layer_ops(const ShapedModel& s, std::size_t layer_index);

struct ModelSplit {
    ShapedModel fixed_part;
    ShapedModel programmable_part;
    int split_index = 0;            ///< number of CONV units fixed
    std::size_t layer_boundary = 0; ///< first layer index of the programmable part
    bool adaptive_bn = true;
    double fixed_ops_fraction = 0.0; ///< ops convention of the accuracy tables
    double fixed_mac_fraction = 0.0; ///< fixed MACs / feature MACs
    std::int64_t fixed_macs = 0;
    std::int64_t programmable_macs = 0; ///< includes the head
};

struct OpsParams {
    std::int64_t macs = 0;
    std::int64_t params = 0;
};

/// Parse a manifest and its weight blob into a validated Model.
Model parse_model(std::string_view manifest_text, std::string_view weights_blob);

/// Serialise a Model back to manifest text and blob bytes. Tensors are laid
/// out contiguously in declaration order.
struct SerializedModel {
    std::string manifest;
    std::string blob;
};
SerializedModel serialize_model(const Model& m);

/// Check the structural invariants of a model (chain consistency, tensor sizes).
void validate_model(const Model& m);

ShapedModel infer_shapes(const Model& m, Shape3 input);
inline ShapedModel infer_shapes(const Model& m) { return infer_shapes(m, m.input.shape()); }

/// Indices of layers that start a CONV unit. A depthwise layer and the
/// pointwise layer that follows it form one unit.
std::vector<std::size_t> conv_unit_starts(const Model& m);
int conv_unit_count(const Model& m);

ModelSplit split_model(const ShapedModel& shaped, int n_fixed, bool adaptive_bn = true);

OpsParams count_ops_params(const ShapedModel& shaped);

// MobileNetV1 reference builder ------------------------------------------------

struct WeightSource {
    enum class Kind { random_seeded, from_blob } kind = Kind::random_seeded;
    std::uint64_t seed = 42;
    std::string blob; ///< from_blob: tensors in serialize_model order
};

/// Channel count after width scaling: nearest multiple of 8, minimum 8.
int scale_channels(int channels, double alpha);

Model build_mobilenet(double alpha, InputSpec input = {224, 224, 3, 8},
                      const WeightSource& source = {});

} // namespace fixy
