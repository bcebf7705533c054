#include "ganmex/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ganmex/tensor/random.hpp"

namespace ganmex::nn {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::conv2d, "conv2d"},   {LayerKind::dense, "dense"},       {LayerKind::relu, "relu"},
    {LayerKind::leaky_relu, "leaky_relu"}, {LayerKind::sigmoid, "sigmoid"}, {LayerKind::avg_pool, "avg_pool"},
    {LayerKind::upsample, "upsample"}, {LayerKind::dropout, "dropout"}, {LayerKind::flatten, "flatten"},
    {LayerKind::softmax, "softmax"},
};

}  // namespace

std::string_view to_string(LayerKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv2d(std::string name, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t padding, double gain) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.name = std::move(name);
    s.units = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.init_gain = gain;
    return s;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units, double gain) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.name = std::move(name);
    s.units = units;
    s.init_gain = gain;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::leaky_relu(double slope) {
    LayerSpec s;
    s.kind = LayerKind::leaky_relu;
    s.rate = slope;
    return s;
}

LayerSpec LayerSpec::sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::sigmoid;
    return s;
}

LayerSpec LayerSpec::avg_pool(std::size_t window) {
    LayerSpec s;
    s.kind = LayerKind::avg_pool;
    s.window = window;
    return s;
}

LayerSpec LayerSpec::upsample(std::size_t factor) {
    LayerSpec s;
    s.kind = LayerKind::upsample;
    s.window = factor;
    return s;
}

LayerSpec LayerSpec::dropout(double p) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = p;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::softmax;
    return s;
}

bool LayerSpec::is_affine() const noexcept {
    switch (kind) {
        case LayerKind::conv2d:
        case LayerKind::dense:
        case LayerKind::avg_pool:
        case LayerKind::upsample:
        case LayerKind::dropout:
        case LayerKind::flatten:
            return true;
        default:
            return false;
    }
}

void LayerSpec::validate() const {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("layer '" + (name.empty() ? std::string(to_string(kind)) : name) + "': " + what);
    };
    switch (kind) {
        case LayerKind::conv2d:
            if (units == 0 || kernel == 0 || stride == 0) fail("channels, kernel and stride must be positive");
            break;
        case LayerKind::dense:
            if (units == 0) fail("units must be positive");
            break;
        case LayerKind::avg_pool:
        case LayerKind::upsample:
            if (window == 0) fail("window must be positive");
            break;
        case LayerKind::dropout:
            if (!(rate >= 0.0 && rate < 1.0)) fail("dropout probability must lie in [0,1)");
            break;
        default:
            break;
    }
    if (has_parameters() && name.empty()) fail("parameterized layers need a name");
}

Network Network::build(Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed) {
    Network net;
    net.input_shape_ = std::move(input_shape);
    net.layers_ = std::move(layers);
    net.infer_shapes();
    for (std::size_t i = 0; i < net.layers_.size(); ++i) {
        const LayerSpec& spec = net.layers_[i];
        if (!spec.has_parameters()) continue;
        const Shape& in = net.shapes_[i];
        Rng rng(mix_seed(seed, i));
        Shape wshape;
        std::size_t fan_in;
        if (spec.kind == LayerKind::conv2d) {
            wshape = {spec.units, in[0], spec.kernel, spec.kernel};
            fan_in = in[0] * spec.kernel * spec.kernel;
        } else {
            wshape = {in[0], spec.units};
            fan_in = in[0];
        }
        const double stddev = spec.init_gain * std::sqrt(2.0 / static_cast<double>(fan_in));
        std::normal_distribution<double> normal(0.0, 1.0);
        Tensor w(wshape);
        for (auto& v : w.values()) v = stddev * normal(rng);
        net.params_[net.layer_params_[i][0]].value = std::move(w);
    }
    return net;
}

Network Network::assemble(Shape input_shape, std::vector<LayerSpec> layers, std::vector<Parameter> params) {
    Network net;
    net.input_shape_ = std::move(input_shape);
    net.layers_ = std::move(layers);
    net.infer_shapes();
    if (params.size() != net.params_.size()) {
        throw std::invalid_argument("network: expected " + std::to_string(net.params_.size()) + " parameters, got " +
                                    std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& slot = net.params_[i];
        if (params[i].name != slot.name) {
            throw std::invalid_argument("network: parameter " + std::to_string(i) + " is '" + params[i].name +
                                        "', expected '" + slot.name + "'");
        }
        if (params[i].value.shape() != slot.value.shape()) {
            throw_shape_error("network: parameter '" + slot.name + "'", {params[i].value.shape(), slot.value.shape()});
        }
        slot.value = std::move(params[i].value);
    }
    return net;
}

void Network::infer_shapes() {
    if (input_shape_.empty()) throw std::invalid_argument("network: empty input shape");
    shapes_.assign(1, input_shape_);
    params_.clear();
    layer_params_.assign(layers_.size(), {});
    std::set<std::string> names;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& spec = layers_[i];
        spec.validate();
        if (!spec.name.empty() && !names.insert(spec.name).second) {
            throw std::invalid_argument("network: duplicate layer name '" + spec.name + "'");
        }
        const Shape& in = shapes_.back();
        Shape out;
        auto bad = [&](const std::string& what) {
            throw_shape_error("layer " + std::to_string(i) + " (" + std::string(to_string(spec.kind)) + ")", {in}, what);
        };
        switch (spec.kind) {
            case LayerKind::conv2d: {
                if (in.size() != 3) bad("conv2d expects [C,H,W]");
                if (in[1] + 2 * spec.padding < spec.kernel || in[2] + 2 * spec.padding < spec.kernel) {
                    bad("kernel does not fit");
                }
                const std::size_t ho = (in[1] + 2 * spec.padding - spec.kernel) / spec.stride + 1;
                const std::size_t wo = (in[2] + 2 * spec.padding - spec.kernel) / spec.stride + 1;
                out = {spec.units, ho, wo};
                layer_params_[i] = {params_.size(), params_.size() + 1};
                params_.push_back({spec.name + ".weight", i, Tensor({spec.units, in[0], spec.kernel, spec.kernel})});
                params_.push_back({spec.name + ".bias", i, Tensor({spec.units})});
                break;
            }
            case LayerKind::dense:
                if (in.size() != 1) bad("dense expects a flat input; insert flatten");
                out = {spec.units};
                layer_params_[i] = {params_.size(), params_.size() + 1};
                params_.push_back({spec.name + ".weight", i, Tensor({in[0], spec.units})});
                params_.push_back({spec.name + ".bias", i, Tensor({spec.units})});
                break;
            case LayerKind::avg_pool:
                if (in.size() != 3 || in[1] < spec.window || in[2] < spec.window) bad("pool window does not fit");
                out = {in[0], in[1] / spec.window, in[2] / spec.window};
                break;
            case LayerKind::upsample:
                if (in.size() != 3) bad("upsample expects [C,H,W]");
                out = {in[0], in[1] * spec.window, in[2] * spec.window};
                break;
            case LayerKind::flatten:
                out = {shape_numel(in)};
                break;
            case LayerKind::softmax:
                if (in.size() != 1) bad("softmax expects a flat input");
                out = in;
                break;
            default:
                out = in;
        }
        shapes_.push_back(std::move(out));
    }
}

std::size_t Network::output_size() const { return shape_numel(shapes_.back()); }

bool Network::ends_with_softmax() const noexcept {
    return !layers_.empty() && layers_.back().kind == LayerKind::softmax;
}

std::size_t Network::layer_index(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].name == name) return i;
    }
    throw std::invalid_argument("network: unknown layer '" + std::string(name) + "'");
}

std::vector<std::string> Network::parameterized_layers() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) {
        if (l.has_parameters()) out.push_back(l.name);
    }
    return out;
}

std::vector<Var> Network::bind(Tape& tape, bool trainable) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
    return vars;
}

Var Network::apply_layer(std::size_t i, Tape& tape, std::span<const Var> params, Var input,
                         const ForwardOptions& options) const {
    const LayerSpec& spec = layers_.at(i);
    switch (spec.kind) {
        case LayerKind::conv2d: {
            const auto& idx = layer_params_[i];
            return ops::conv2d(input, params[idx[0]], params[idx[1]], spec.stride, spec.padding);
        }
        case LayerKind::dense: {
            const auto& idx = layer_params_[i];
            return ops::dense(input, params[idx[0]], params[idx[1]]);
        }
        case LayerKind::relu:
            return ops::relu(input);
        case LayerKind::leaky_relu:
            return ops::leaky_relu(input, spec.rate);
        case LayerKind::sigmoid:
            return ops::sigmoid(input);
        case LayerKind::avg_pool:
            return ops::avg_pool(input, spec.window);
        case LayerKind::upsample:
            return ops::upsample_nearest(input, spec.window);
        case LayerKind::flatten:
            return ops::flatten(input);
        case LayerKind::softmax:
            return ops::softmax(input);
        case LayerKind::dropout: {
            if (options.mode == Mode::inference || spec.rate == 0.0) return input;
            if (!options.rng) throw std::invalid_argument("dropout in training mode needs an rng");
            Tensor mask(input.shape());
            const double keep = 1.0 - spec.rate;
            std::bernoulli_distribution draw(keep);
            for (auto& m : mask.values()) m = draw(*options.rng) ? 1.0 / keep : 0.0;
            return ops::mul(input, tape.constant(std::move(mask)));
        }
    }
    throw std::logic_error("unhandled layer kind");
}

Var Network::forward(Tape& tape, std::span<const Var> params, Var input, const ForwardOptions& options) const {
    const Shape& s = input.shape();
    if (s.size() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), s.begin() + 1)) {
        throw_shape_error("network forward", {s, input_shape_}, "input does not match [N, input_shape]");
    }
    if (params.size() != params_.size()) throw std::invalid_argument("network forward: parameter count mismatch");
    Var h = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = apply_layer(i, tape, params, h, options);
    return h;
}

Tensor Network::predict(const Tensor& batch) const {
    Tape tape;
    auto params = bind(tape, false);
    return forward(tape, params, tape.constant(batch)).value();
}

std::string Network::describe() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        layers.push_back({{"kind", to_string(l.kind)},
                          {"name", l.name},
                          {"units", l.units},
                          {"kernel", l.kernel},
                          {"stride", l.stride},
                          {"padding", l.padding},
                          {"window", l.window},
                          {"rate", l.rate},
                          {"init_gain", l.init_gain}});
    }
    nlohmann::json doc{{"input_shape", input_shape_}, {"layers", layers}};
    return doc.dump();
}

std::pair<Shape, std::vector<LayerSpec>> parse_description(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("network description: ") + e.what());
    }
    try {
        Shape input = doc.at("input_shape").get<Shape>();
        std::vector<LayerSpec> layers;
        for (const auto& l : doc.at("layers")) {
            LayerSpec s;
            s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
            s.name = l.at("name").get<std::string>();
            s.units = l.at("units").get<std::size_t>();
            s.kernel = l.at("kernel").get<std::size_t>();
            s.stride = l.at("stride").get<std::size_t>();
            s.padding = l.at("padding").get<std::size_t>();
            s.window = l.at("window").get<std::size_t>();
            s.rate = l.at("rate").get<double>();
            s.init_gain = l.at("init_gain").get<double>();
            layers.push_back(std::move(s));
        }
        return {std::move(input), std::move(layers)};
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("network description: ") + e.what());
    }
}

Tensor as_batch(const Tensor& sample) {
    Shape s{1};
    s.insert(s.end(), sample.shape().begin(), sample.shape().end());
    return sample.reshaped(std::move(s));
}

std::vector<double> predict_probs(const Network& net, const Tensor& sample) {
    if (sample.shape() != net.input_shape()) throw_shape_error("predict_probs", {sample.shape(), net.input_shape()});
    const Tensor out = net.predict(as_batch(sample));
    return out.to_vector();
}

std::size_t predict_class(const Network& net, const Tensor& sample) {
    const auto p = predict_probs(net, sample);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

Network randomize_layer(const Network& net, std::string_view layer, std::uint64_t seed) {
    const std::size_t li = net.layer_index(layer);
    if (!net.layers()[li].has_parameters()) {
        throw std::invalid_argument("randomize_layer: layer '" + std::string(layer) + "' has no parameters");
    }
    Network out = net;
    std::uint64_t stream = 0;
    for (std::size_t pi : out.layer_parameters(li)) {
        Tensor& t = out.parameters()[pi].value;
        const double norm = t.l2_norm();
        if (norm == 0.0) {
            ++stream;
            continue;
        }
        Rng rng(mix_seed(seed, stream++));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& v : t.values()) v = normal(rng);
        const double fresh = t.l2_norm();
        t *= norm / fresh;
    }
    return out;
}

std::vector<std::string> cascade_order(const Network& net) {
    auto names = net.parameterized_layers();
    std::reverse(names.begin(), names.end());
    return names;
}

}  // namespace ganmex::nn
