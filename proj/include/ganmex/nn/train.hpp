#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ganmex/data/dataset.hpp"
#include "ganmex/nn/network.hpp"

namespace ganmex::nn {

enum class OptimizerKind { sgd, adam };
std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// Gradient-descent state for one parameter list.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, const std::vector<Parameter>& params);

    /// Applies one update; `grads[i]` matches `params[i]`.
    void step(std::vector<Parameter>& params, const std::vector<Tensor>& grads);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    OptimizerConfig config_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;

    /// Epochs may be 0 (returns the initialized network); everything else must be positive.
    void validate() const;
};

/// Thrown when the training loss stops being finite.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, long last_finite_epoch);
    std::size_t epoch;
    /// -1 when no epoch completed with a finite loss.
    long last_finite_epoch;
};

struct TrainLog {
    std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

/// Minibatch cross-entropy training of a softmax classifier.
Network train_classifier(const data::LabeledDataset& ds, std::vector<LayerSpec> layers, const TrainConfig& cfg,
                         TrainLog* log = nullptr);

/// Same as above starting from given weights; `net` must end with a softmax.
Network train_classifier(const data::LabeledDataset& ds, Network net, const TrainConfig& cfg,
                         TrainLog* log = nullptr);

/// Mean cross-entropy of the network on the dataset in inference mode.
double cross_entropy(const Network& net, const data::LabeledDataset& ds);

/// Class probabilities for every image, computed in batches. Row i is image i.
Tensor predict_dataset(const Network& net, const data::LabeledDataset& ds, std::size_t batch = 256);

double accuracy(const Network& net, const data::LabeledDataset& ds);

/// Two stride-2 6x6 convolutions (CNN1, CNN2), a 64-unit dense layer (FC),
/// dropout 0.5 and a softmax head (Output).
std::vector<LayerSpec> reference_classifier(std::size_t class_count);

/// Flatten followed by a softmax regression head.
std::vector<LayerSpec> linear_classifier(std::size_t class_count);

}  // namespace ganmex::nn
