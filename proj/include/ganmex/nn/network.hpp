#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ganmex/tensor/autodiff.hpp"

namespace ganmex::nn {

enum class LayerKind { conv2d, dense, relu, leaky_relu, sigmoid, avg_pool, upsample, dropout, flatten, softmax };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One step of a sequential network. Only conv2d and dense carry parameters.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::string name;
    std::size_t units = 0;    // conv output channels or dense width
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t window = 0;   // pooling window or upsampling factor
    double rate = 0.0;        // dropout probability or leaky slope
    double init_gain = 1.0;   // multiplies the He-normal initialization scale

    static LayerSpec conv2d(std::string name, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t padding = 0, double gain = 1.0);
    static LayerSpec dense(std::string name, std::size_t units, double gain = 1.0);
    static LayerSpec relu();
    static LayerSpec leaky_relu(double slope);
    static LayerSpec sigmoid();
    static LayerSpec avg_pool(std::size_t window);
    static LayerSpec upsample(std::size_t factor);
    static LayerSpec dropout(double p);
    static LayerSpec flatten();
    static LayerSpec softmax();

    bool has_parameters() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
    /// True for layers whose action on their input is affine.
    bool is_affine() const noexcept;
    void validate() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Parameter {
    std::string name;   // "<layer>.weight" / "<layer>.bias"
    std::size_t layer;  // index into Network::layers()
    Tensor value;
};

enum class Mode { inference, training };

struct ForwardOptions {
    Mode mode = Mode::inference;
    std::mt19937_64* rng = nullptr;  // required for dropout in training mode
};

class Network {
public:
    /// `input_shape` is the per-sample shape, e.g. {C, H, W}.
    static Network build(Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed);
    /// Rebuilds a network from a description and explicit parameter values.
    static Network assemble(Shape input_shape, std::vector<LayerSpec> layers, std::vector<Parameter> params);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::vector<Parameter>& parameters() noexcept { return params_; }
    /// Per-sample output shape of layer `i` (after applying it).
    const Shape& layer_output_shape(std::size_t i) const { return shapes_.at(i + 1); }
    const Shape& output_shape() const { return shapes_.back(); }
    std::size_t output_size() const;
    bool ends_with_softmax() const noexcept;

    std::size_t layer_index(std::string_view name) const;
    /// Names of parameterized layers, input to output.
    std::vector<std::string> parameterized_layers() const;
    /// Parameter indices belonging to layer `i`.
    std::span<const std::size_t> layer_parameters(std::size_t i) const { return layer_params_.at(i); }

    /// Places the parameters on a tape, as variables when `trainable`.
    std::vector<Var> bind(Tape& tape, bool trainable) const;

    /// Runs every layer. `input` is [N, input_shape...].
    Var forward(Tape& tape, std::span<const Var> params, Var input, const ForwardOptions& options = {}) const;
    /// Applies a single layer.
    Var apply_layer(std::size_t i, Tape& tape, std::span<const Var> params, Var input,
                    const ForwardOptions& options = {}) const;

    /// Inference-mode forward of a batch.
    Tensor predict(const Tensor& batch) const;

    /// Architecture as JSON text (input shape and layer list, no parameters).
    std::string describe() const;

private:
    void infer_shapes();

    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Parameter> params_;
    std::vector<std::vector<std::size_t>> layer_params_;
    std::vector<Shape> shapes_;
};

/// Parses the text produced by Network::describe().
std::pair<Shape, std::vector<LayerSpec>> parse_description(std::string_view text);

/// Prepends a batch axis of 1.
Tensor as_batch(const Tensor& sample);

/// Output vector for a single sample (class probabilities for softmax networks).
std::vector<double> predict_probs(const Network& net, const Tensor& sample);
std::size_t predict_class(const Network& net, const Tensor& sample);

/// Copy of `net` whose named layer parameters are replaced by i.i.d. Gaussians,
/// each tensor rescaled to its original L2 norm. Zero-norm tensors stay zero.
Network randomize_layer(const Network& net, std::string_view layer, std::uint64_t seed);

/// Parameterized layers from output to input: the cascading randomization order.
std::vector<std::string> cascade_order(const Network& net);

}  // namespace ganmex::nn
