#include "ganmex/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ganmex/tensor/random.hpp"

namespace ganmex::nn {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (kind == OptimizerKind::adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw std::invalid_argument("optimizer: adam betas must lie in [0,1)");
        }
        if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: adam epsilon must be positive");
    }
}

Optimizer::Optimizer(OptimizerConfig config, const std::vector<Parameter>& params) : config_(config) {
    config_.validate();
    if (config_.kind == OptimizerKind::adam) {
        for (const auto& p : params) {
            m_.push_back(Tensor::like(p.value));
            v_.push_back(Tensor::like(p.value));
        }
    }
}

void Optimizer::step(std::vector<Parameter>& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size()) throw std::invalid_argument("optimizer: gradient count mismatch");
    ++t_;
    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            double* w = params[i].value.data();
            const double* g = grads[i].data();
            for (std::size_t k = 0; k < grads[i].numel(); ++k) w[k] -= lr * g[k];
        }
        return;
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* w = params[i].value.data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        const double* g = grads[i].data();
        for (std::size_t k = 0; k < grads[i].numel(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
        }
    }
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
    optimizer.validate();
}

TrainingDiverged::TrainingDiverged(std::size_t epoch_, long last_finite)
    : std::runtime_error("training diverged in epoch " + std::to_string(epoch_) + " (loss not finite); last finite epoch: " +
                         (last_finite < 0 ? std::string("none") : std::to_string(last_finite))),
      epoch(epoch_),
      last_finite_epoch(last_finite) {}

namespace {

Var cross_entropy_loss(Var probs, std::span<const std::size_t> labels) {
    return ops::scale(ops::mean(ops::log_clamped(ops::pick(probs, labels), 1e-12)), -1.0);
}

}  // namespace

Network train_classifier(const data::LabeledDataset& ds, std::vector<LayerSpec> layers, const TrainConfig& cfg,
                         TrainLog* log) {
    if (ds.empty()) throw std::invalid_argument("train_classifier: empty dataset");
    Network net = Network::build(ds.image_shape(), std::move(layers), mix_seed(cfg.seed, 1));
    return train_classifier(ds, std::move(net), cfg, log);
}

Network train_classifier(const data::LabeledDataset& ds, Network net, const TrainConfig& cfg, TrainLog* log) {
    cfg.validate();
    if (ds.empty()) throw std::invalid_argument("train_classifier: empty dataset");
    ds.validate();
    if (!net.ends_with_softmax()) throw std::invalid_argument("train_classifier: network must end with softmax");
    if (net.output_size() != ds.class_count) {
        throw std::invalid_argument("train_classifier: network has " + std::to_string(net.output_size()) +
                                    " outputs but the dataset has " + std::to_string(ds.class_count) + " classes");
    }

    Rng rng(mix_seed(cfg.seed, 2));
    Optimizer opt(cfg.optimizer, net.parameters());
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    long last_finite = -1;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<std::size_t> labels;
            for (auto i : idx) labels.push_back(ds.labels[i]);

            Tape tape;
            const auto params = net.bind(tape, true);
            ForwardOptions fo{Mode::training, &rng};
            Var probs = net.forward(tape, params, tape.constant(data::stack_images(ds, idx)), fo);
            Var loss = cross_entropy_loss(probs, labels);
            const double value = loss.value().item();
            if (!std::isfinite(value)) throw TrainingDiverged(epoch, last_finite);
            total += value * static_cast<double>(idx.size());
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (auto p : params) grads.push_back(tape.grad(p));
            opt.step(net.parameters(), grads);
        }
        const double mean = total / static_cast<double>(ds.size());
        bool params_finite = true;
        for (const auto& p : net.parameters()) params_finite = params_finite && p.value.all_finite();
        if (!params_finite) throw TrainingDiverged(epoch, last_finite);
        last_finite = static_cast<long>(epoch);
        if (log) log->epoch_loss.push_back(mean);
    }
    return net;
}

Tensor predict_dataset(const Network& net, const data::LabeledDataset& ds, std::size_t batch) {
    if (ds.empty()) throw std::invalid_argument("predict_dataset: empty dataset");
    const std::size_t k = net.output_size();
    Tensor out({ds.size(), k});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        idx.clear();
        for (std::size_t i = start; i < std::min(ds.size(), start + batch); ++i) idx.push_back(i);
        const Tensor p = net.predict(data::stack_images(ds, idx));
        std::copy_n(p.data(), p.numel(), out.data() + start * k);
    }
    return out;
}

double cross_entropy(const Network& net, const data::LabeledDataset& ds) {
    const Tensor p = predict_dataset(net, ds);
    const std::size_t k = p.dim(1);
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) total -= std::log(std::max(p[i * k + ds.labels[i]], 1e-12));
    return total / static_cast<double>(ds.size());
}

double accuracy(const Network& net, const data::LabeledDataset& ds) {
    const Tensor p = predict_dataset(net, ds);
    const std::size_t k = p.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* row = p.data() + i * k;
        if (static_cast<std::size_t>(std::max_element(row, row + k) - row) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<LayerSpec> reference_classifier(std::size_t class_count) {
    return {
        LayerSpec::conv2d("CNN1", 16, 6, 2, 2),
        LayerSpec::relu(),
        LayerSpec::conv2d("CNN2", 32, 6, 2, 2),
        LayerSpec::relu(),
        LayerSpec::flatten(),
        LayerSpec::dense("FC", 64),
        LayerSpec::relu(),
        LayerSpec::dropout(0.5),
        LayerSpec::dense("Output", class_count),
        LayerSpec::softmax(),
    };
}

std::vector<LayerSpec> linear_classifier(std::size_t class_count) {
    return {LayerSpec::flatten(), LayerSpec::dense("Output", class_count), LayerSpec::softmax()};
}

}  // namespace ganmex::nn
