#include "ganmex/attribution/attribution.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <tuple>

#include "ganmex/io/binary.hpp"
#include "ganmex/tensor/random.hpp"

namespace ganmex::attribution {

namespace {

constexpr std::size_t kChunk = 64;

void check_classes(const nn::Network& net, std::size_t c_o, std::size_t c_t) {
    const std::size_t k = net.output_size();
    if (c_o >= k || c_t >= k) {
        throw std::invalid_argument("class pair (" + std::to_string(c_o) + ", " + std::to_string(c_t) +
                                    ") out of range for " + std::to_string(k) + " outputs");
    }
}

void check_sample(const nn::Network& net, const Tensor& x, const char* op) {
    if (x.shape() != net.input_shape()) throw_shape_error(op, {x.shape(), net.input_shape()});
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw_shape_error(op, {a.shape(), b.shape()}, "input and baseline differ");
}

Tensor output_seed(std::size_t n, std::size_t k, std::size_t c_o, std::size_t c_t) {
    Tensor s({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        s[i * k + c_o] += 1.0;
        s[i * k + c_t] -= 1.0;
    }
    return s;
}

// Sums (x - x~_k) * grad f(x~_k + alpha_k (x - x~_k)) over a list of (baseline, alpha) pairs.
template <class BaselineOf>
Tensor accumulate_path_terms(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t,
                             std::size_t total, const std::vector<double>& alphas, BaselineOf baseline_of) {
    const std::size_t d = x.numel();
    Tensor acc(x.shape());
    for (std::size_t first = 0; first < total; first += kChunk) {
        const std::size_t n = std::min(kChunk, total - first);
        Shape bs = x.shape();
        bs.insert(bs.begin(), n);
        Tensor batch(bs);
        for (std::size_t r = 0; r < n; ++r) {
            const Tensor& b = baseline_of(first + r);
            const double a = alphas[first + r];
            for (std::size_t i = 0; i < d; ++i) batch[r * d + i] = b[i] + a * (x[i] - b[i]);
        }
        const Tensor g = score_delta_gradients(net, batch, c_o, c_t);
        for (std::size_t r = 0; r < n; ++r) {
            const Tensor& b = baseline_of(first + r);
            for (std::size_t i = 0; i < d; ++i) acc[i] += (x[i] - b[i]) * g[r * d + i];
        }
    }
    return acc;
}

SaliencyMap with_provenance(SaliencyMap m, nlohmann::json p) {
    m.provenance = std::move(p);
    return m;
}

nlohmann::json pair_provenance(std::string_view method, std::size_t c_o, std::size_t c_t) {
    return {{"method", std::string(method)}, {"c_o", c_o}, {"c_t", c_t}};
}

}  // namespace

double SaliencyMap::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double SaliencyMap::l1() const {
    double s = 0.0;
    for (double v : values) s += std::abs(v);
    return s;
}

SaliencyMap channel_aggregate(const Tensor& chw) {
    if (chw.rank() != 3) throw_shape_error("channel_aggregate", {chw.shape()}, "expected [C,H,W]");
    SaliencyMap m;
    m.height = chw.dim(1);
    m.width = chw.dim(2);
    const std::size_t hw = m.height * m.width;
    m.values.assign(hw, 0.0);
    for (std::size_t c = 0; c < chw.dim(0); ++c) {
        for (std::size_t p = 0; p < hw; ++p) m.values[p] += chw[c * hw + p];
    }
    for (double v : m.values) {
        if (!std::isfinite(v)) throw std::runtime_error("attribution produced a non-finite value");
    }
    return m;
}

std::vector<double> score_deltas(const nn::Network& net, const Tensor& batch, std::size_t c_o, std::size_t c_t) {
    check_classes(net, c_o, c_t);
    const Tensor out = net.predict(batch);
    const std::size_t k = out.dim(1);
    std::vector<double> f(out.dim(0));
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = out[i * k + c_o] - out[i * k + c_t];
    return f;
}

double score_delta(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t) {
    check_sample(net, x, "score_delta");
    return score_deltas(net, nn::as_batch(x), c_o, c_t)[0];
}

Tensor score_delta_gradients(const nn::Network& net, const Tensor& batch, std::size_t c_o, std::size_t c_t) {
    check_classes(net, c_o, c_t);
    Tape tape;
    const auto params = net.bind(tape, false);
    Var in = tape.variable(batch);
    Var out = net.forward(tape, params, in);
    tape.backward(out, output_seed(batch.dim(0), out.shape()[1], c_o, c_t));
    return tape.grad(in);
}

Tensor integrated_gradients_raw(const nn::Network& net, const Tensor& x, const Tensor& baseline, std::size_t c_o,
                                std::size_t c_t, std::size_t steps) {
    check_sample(net, x, "integrated_gradients");
    check_same(x, baseline, "integrated_gradients");
    if (steps == 0) throw std::invalid_argument("integrated_gradients: steps must be positive");
    std::vector<double> alphas(steps);
    for (std::size_t k = 0; k < steps; ++k) alphas[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    Tensor acc = accumulate_path_terms(net, x, c_o, c_t, steps, alphas, [&](std::size_t) -> const Tensor& {
        return baseline;
    });
    return acc * (1.0 / static_cast<double>(steps));
}

SaliencyMap integrated_gradients(const nn::Network& net, const data::Image& x, const data::Image& baseline,
                                 std::size_t c_o, std::size_t c_t, std::size_t steps) {
    auto p = pair_provenance("ig", c_o, c_t);
    p["steps"] = steps;
    return with_provenance(channel_aggregate(integrated_gradients_raw(net, x.tensor(), baseline.tensor(), c_o, c_t, steps)),
                           std::move(p));
}

Tensor expected_gradients_raw(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t,
                              const data::LabeledDataset& train, std::size_t samples, std::uint64_t seed) {
    check_sample(net, x, "expected_gradients");
    if (samples == 0) throw std::invalid_argument("expected_gradients: samples must be positive");
    const auto pool = train.indices_of_class(c_t);
    if (pool.empty()) {
        throw std::invalid_argument("expected_gradients: training set has no images of target class " +
                                    std::to_string(c_t));
    }
    Rng rng(seed);
    std::vector<std::size_t> pick(samples);
    std::vector<double> alphas(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        pick[k] = pool[uniform_index(rng, pool.size())];
        alphas[k] = (static_cast<double>(k) + uniform01(rng)) / static_cast<double>(samples);
        check_same(x, train.images[pick[k]].tensor(), "expected_gradients");
    }
    Tensor acc = accumulate_path_terms(net, x, c_o, c_t, samples, alphas, [&](std::size_t k) -> const Tensor& {
        return train.images[pick[k]].tensor();
    });
    return acc * (1.0 / static_cast<double>(samples));
}

SaliencyMap expected_gradients(const nn::Network& net, const data::Image& x, std::size_t c_o, std::size_t c_t,
                               const data::LabeledDataset& train, std::size_t samples, std::uint64_t seed) {
    auto p = pair_provenance("eg", c_o, c_t);
    p["samples"] = samples;
    p["seed"] = seed;
    return with_provenance(channel_aggregate(expected_gradients_raw(net, x.tensor(), c_o, c_t, train, samples, seed)),
                           std::move(p));
}

Tensor deeplift_raw(const nn::Network& net, const Tensor& x, const Tensor& baseline, std::size_t c_o,
                    std::size_t c_t) {
    check_sample(net, x, "deeplift");
    check_same(x, baseline, "deeplift");
    check_classes(net, c_o, c_t);
    const auto& layers = net.layers();
    const std::size_t L = layers.size();

    // Activations entering each layer, plus the final output, for x and the baseline.
    std::vector<Tensor> ax, ab;
    {
        Tape tape;
        const auto params = net.bind(tape, false);
        Var hx = tape.constant(nn::as_batch(x)), hb = tape.constant(nn::as_batch(baseline));
        for (std::size_t i = 0; i < L; ++i) {
            ax.push_back(hx.value());
            ab.push_back(hb.value());
            hx = net.apply_layer(i, tape, params, hx);
            hb = net.apply_layer(i, tape, params, hb);
        }
        ax.push_back(hx.value());
        ab.push_back(hb.value());
    }

    Tensor m = output_seed(1, ax[L].numel(), c_o, c_t);
    for (std::size_t li = L; li-- > 0;) {
        const nn::LayerSpec& spec = layers[li];
        const Tensor &in_x = ax[li], &in_b = ab[li], &out_x = ax[li + 1], &out_b = ab[li + 1];
        switch (spec.kind) {
            case nn::LayerKind::relu:
            case nn::LayerKind::leaky_relu:
            case nn::LayerKind::sigmoid:
            case nn::LayerKind::softmax: {
                for (std::size_t i = 0; i < m.numel(); ++i) {
                    const double din = in_x[i] - in_b[i];
                    double r;
                    if (std::abs(din) > kDeepLiftEpsilon) {
                        r = (out_x[i] - out_b[i]) / din;
                    } else if (spec.kind == nn::LayerKind::relu) {
                        r = in_x[i] > 0.0 ? 1.0 : 0.0;
                    } else if (spec.kind == nn::LayerKind::leaky_relu) {
                        r = in_x[i] > 0.0 ? 1.0 : spec.rate;
                    } else {
                        r = out_x[i] * (1.0 - out_x[i]);  // sigmoid and softmax diagonal
                    }
                    m[i] *= r;
                }
                break;
            }
            case nn::LayerKind::dropout:
                break;  // identity at inference
            default: {
                // Affine layer: multipliers flow back through the linear part.
                Tape tape;
                const auto params = net.bind(tape, false);
                Var in = tape.variable(in_x);
                Var out = net.apply_layer(li, tape, params, in);
                tape.backward(out, m.reshaped(out.shape()));
                m = tape.grad(in);
            }
        }
    }
    Tensor a = m.reshaped(x.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] *= x[i] - baseline[i];
    return a;
}

SaliencyMap deeplift_rescale(const nn::Network& net, const data::Image& x, const data::Image& baseline,
                             std::size_t c_o, std::size_t c_t) {
    return with_provenance(channel_aggregate(deeplift_raw(net, x.tensor(), baseline.tensor(), c_o, c_t)),
                           pair_provenance("deeplift", c_o, c_t));
}

SaliencyMap occlusion1(const nn::Network& net, const data::Image& x, const data::Image& baseline, std::size_t c_o,
                       std::size_t c_t) {
    const Tensor& xt = x.tensor();
    const Tensor& bt = baseline.tensor();
    check_sample(net, xt, "occlusion1");
    check_same(xt, bt, "occlusion1");
    const double fx = score_delta(net, xt, c_o, c_t);
    const std::size_t C = x.channels(), hw = x.pixel_count(), d = xt.numel();
    SaliencyMap m;
    m.height = x.height();
    m.width = x.width();
    m.values.assign(hw, 0.0);
    for (std::size_t first = 0; first < hw; first += kChunk) {
        const std::size_t n = std::min(kChunk, hw - first);
        Tensor batch({n, C, x.height(), x.width()});
        for (std::size_t r = 0; r < n; ++r) {
            std::copy(xt.data(), xt.data() + d, batch.data() + r * d);
            for (std::size_t c = 0; c < C; ++c) batch[r * d + c * hw + first + r] = bt[c * hw + first + r];
        }
        const auto f = score_deltas(net, batch, c_o, c_t);
        for (std::size_t r = 0; r < n; ++r) m.values[first + r] = fx - f[r];
    }
    m.provenance = pair_provenance("occlusion1", c_o, c_t);
    return m;
}

Tensor deepshap_raw(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t,
                    std::span<const data::Image> background) {
    if (background.empty()) throw std::invalid_argument("deepshap: empty background");
    Tensor acc(x.shape());
    for (const auto& b : background) acc += deeplift_raw(net, x, b.tensor(), c_o, c_t);
    return acc * (1.0 / static_cast<double>(background.size()));
}

SaliencyMap deepshap_avg(const nn::Network& net, const data::Image& x, std::size_t c_o, std::size_t c_t,
                         std::span<const data::Image> background) {
    auto p = pair_provenance("deepshap", c_o, c_t);
    p["background_count"] = background.size();
    return with_provenance(channel_aggregate(deepshap_raw(net, x.tensor(), c_o, c_t, background)), std::move(p));
}

namespace {

constexpr std::pair<MethodKind, std::string_view> kMethodNames[] = {
    {MethodKind::ig, "ig"},
    {MethodKind::eg, "eg"},
    {MethodKind::deeplift, "deeplift"},
    {MethodKind::occlusion1, "occlusion1"},
    {MethodKind::deepshap, "deepshap"},
};

}  // namespace

std::string_view to_string(MethodKind kind) {
    for (auto [k, n] : kMethodNames) {
        if (k == kind) return n;
    }
    return "unknown";
}

MethodKind method_kind_from_string(std::string_view name) {
    for (auto [k, n] : kMethodNames) {
        if (n == name) return k;
    }
    throw std::invalid_argument("unknown attribution method '" + std::string(name) +
                                "' (expected ig, eg, deeplift, occlusion1 or deepshap)");
}

void Method::validate() const {
    if (kind == MethodKind::ig && steps == 0) throw std::invalid_argument("ig: steps must be positive");
    if (kind == MethodKind::eg && samples == 0) throw std::invalid_argument("eg: samples must be positive");
    if (kind == MethodKind::deepshap && background_count == 0) {
        throw std::invalid_argument("deepshap: background_count must be positive");
    }
}

nlohmann::json Method::to_json() const {
    nlohmann::json j{{"kind", std::string(to_string(kind))}};
    switch (kind) {
        case MethodKind::ig: j["steps"] = steps; break;
        case MethodKind::eg: j["samples"] = samples; j["seed"] = seed; break;
        case MethodKind::deepshap: j["background_count"] = background_count; j["seed"] = seed; break;
        default: break;
    }
    return j;
}

void AttributionRequest::validate(std::size_t class_count) const {
    method.validate();
    if (c_o >= class_count || c_t >= class_count) {
        throw std::invalid_argument("class pair (" + std::to_string(c_o) + ", " + std::to_string(c_t) +
                                    ") out of range for " + std::to_string(class_count) + " classes");
    }
    if (c_o == c_t) throw std::invalid_argument("one-vs-one attribution requires c_o != c_t");
    if (method.kind != MethodKind::eg && method.kind != MethodKind::deepshap) {
        baseline.with_target(c_t).validate(class_count);
    }
}

std::vector<data::Image> target_background(const data::LabeledDataset& train, std::size_t target, std::size_t count,
                                           std::uint64_t seed) {
    const auto pool = train.indices_of_class(target);
    if (pool.empty()) {
        throw std::invalid_argument("training set has no images of target class " + std::to_string(target));
    }
    Rng rng(seed);
    std::vector<data::Image> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) out.push_back(train.images[pool[uniform_index(rng, pool.size())]]);
    return out;
}

SaliencyMap attribute(const nn::Network& net, const AttributionRequest& req, const data::LabeledDataset& train) {
    req.validate(net.output_size());
    const auto& x = req.x;
    SaliencyMap m;
    nlohmann::json base_info;
    switch (req.method.kind) {
        case MethodKind::eg:
            m = expected_gradients(net, x, req.c_o, req.c_t, train, req.method.samples, req.method.seed);
            base_info = "target-class training prior";
            break;
        case MethodKind::deepshap: {
            const auto bg = target_background(train, req.c_t, req.method.background_count, req.method.seed);
            m = deepshap_avg(net, x, req.c_o, req.c_t, bg);
            m.provenance["seed"] = req.method.seed;
            base_info = "target-class training prior";
            break;
        }
        default: {
            // Targeted baselines always explain against the request's target class.
            const auto spec = req.baseline.with_target(req.c_t);
            const auto b = baselines::make_baseline(spec, x, train);
            if (req.method.kind == MethodKind::ig) m = integrated_gradients(net, x, b, req.c_o, req.c_t, req.method.steps);
            else if (req.method.kind == MethodKind::deeplift) m = deeplift_rescale(net, x, b, req.c_o, req.c_t);
            else m = occlusion1(net, x, b, req.c_o, req.c_t);
            base_info = spec.label();
            m.provenance["baseline_score_delta"] = score_delta(net, b.tensor(), req.c_o, req.c_t);
        }
    }
    m.provenance["method"] = req.method.to_json();
    m.provenance["baseline"] = base_info;
    m.provenance["score_delta"] = score_delta(net, x.tensor(), req.c_o, req.c_t);
    return m;
}

std::string saliency_to_csv(const SaliencyMap& map) {
    std::string out = "row,col,value\n";
    char buf[64];
    for (std::size_t r = 0; r < map.height; ++r) {
        for (std::size_t c = 0; c < map.width; ++c) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", r, c, map.at(r, c));
            out += buf;
        }
    }
    return out;
}

SaliencyMap saliency_from_csv(std::string_view text) {
    auto fail = [](std::size_t line, const std::string& what) {
        throw io::FormatError("saliency csv line " + std::to_string(line) + ": " + what);
    };
    std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
    std::size_t line_no = 0, rows = 0, cols = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != "row,col,value") fail(1, "expected header 'row,col,value'");
            continue;
        }
        if (line.empty()) continue;
        std::size_t r = 0, c = 0;
        double v = 0.0;
        const char* p = line.data();
        const char* e = line.data() + line.size();
        auto res = std::from_chars(p, e, r);
        if (res.ec != std::errc{} || res.ptr == e || *res.ptr != ',') fail(line_no, "bad row");
        res = std::from_chars(res.ptr + 1, e, c);
        if (res.ec != std::errc{} || res.ptr == e || *res.ptr != ',') fail(line_no, "bad col");
        res = std::from_chars(res.ptr + 1, e, v);
        if (res.ec != std::errc{} || res.ptr != e || !std::isfinite(v)) fail(line_no, "bad value");
        cells.emplace_back(r, c, v);
        rows = std::max(rows, r + 1);
        cols = std::max(cols, c + 1);
    }
    if (line_no == 0) fail(1, "empty file");
    if (cells.size() != rows * cols) fail(line_no, "cells do not cover a full grid");
    SaliencyMap m;
    m.height = rows;
    m.width = cols;
    m.values.assign(rows * cols, 0.0);
    std::vector<char> seen(rows * cols, 0);
    for (auto [r, c, v] : cells) {
        if (seen[r * cols + c]++) fail(line_no, "duplicate cell " + std::to_string(r) + "," + std::to_string(c));
        m.values[r * cols + c] = v;
    }
    return m;
}

std::string sidecar_path(const std::string& csv_path) { return csv_path + ".header.json"; }

void save_saliency(const SaliencyMap& map, const std::string& csv_path) {
    nlohmann::json header{{"height", map.height}, {"width", map.width}, {"provenance", map.provenance}};
    io::write_file_atomic(csv_path, saliency_to_csv(map));
    io::write_file_atomic(sidecar_path(csv_path), header.dump(2) + "\n");
}

SaliencyMap load_saliency(const std::string& csv_path) {
    SaliencyMap m = saliency_from_csv(io::read_file(csv_path));
    const auto side = sidecar_path(csv_path);
    if (std::filesystem::exists(side)) {
        const auto header = nlohmann::json::parse(io::read_file(side));
        if (header.at("height").get<std::size_t>() != m.height || header.at("width").get<std::size_t>() != m.width) {
            throw io::FormatError("saliency sidecar " + side + " disagrees with the CSV grid");
        }
        m.provenance = header.value("provenance", nlohmann::json::object());
    }
    return m;
}

}  // namespace ganmex::attribution
