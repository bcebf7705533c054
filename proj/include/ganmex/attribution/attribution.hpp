#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ganmex/baselines/baselines.hpp"
#include "ganmex/data/dataset.hpp"
#include "ganmex/nn/network.hpp"

namespace ganmex::attribution {

/// Signed per-pixel attribution over the spatial grid of the explained image.
struct SaliencyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;  // row-major
    nlohmann::json provenance = nlohmann::json::object();

    double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    double sum() const;
    double l1() const;
};

/// Sums per-channel attributions [C, H, W] over channels.
SaliencyMap channel_aggregate(const Tensor& chw);

/// S_{c_o}(x) - S_{c_t}(x) on the network outputs (probabilities for softmax heads).
double score_delta(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t);
/// Score delta for every row of a [N, C, H, W] batch.
std::vector<double> score_deltas(const nn::Network& net, const Tensor& batch, std::size_t c_o, std::size_t c_t);
/// Gradient of the score delta for every row of a batch, same shape as the batch.
Tensor score_delta_gradients(const nn::Network& net, const Tensor& batch, std::size_t c_o, std::size_t c_t);

/// Midpoint-rule integrated gradients along the straight path from `baseline` to `x`.
Tensor integrated_gradients_raw(const nn::Network& net, const Tensor& x, const Tensor& baseline, std::size_t c_o,
                                std::size_t c_t, std::size_t steps);
SaliencyMap integrated_gradients(const nn::Network& net, const data::Image& x, const data::Image& baseline,
                                 std::size_t c_o, std::size_t c_t, std::size_t steps = 200);

/// Monte-Carlo expected gradients with baselines drawn from the target class of
/// `train` and alpha stratified over [0, 1).
Tensor expected_gradients_raw(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t,
                              const data::LabeledDataset& train, std::size_t samples, std::uint64_t seed);
SaliencyMap expected_gradients(const nn::Network& net, const data::Image& x, std::size_t c_o, std::size_t c_t,
                               const data::LabeledDataset& train, std::size_t samples, std::uint64_t seed);

inline constexpr double kDeepLiftEpsilon = 1e-6;

/// DeepLIFT with the rescale rule. Elementwise nonlinearities and the softmax
/// head use per-unit delta-out over delta-in, so attributions sum to the score delta.
Tensor deeplift_raw(const nn::Network& net, const Tensor& x, const Tensor& baseline, std::size_t c_o,
                    std::size_t c_t);
SaliencyMap deeplift_rescale(const nn::Network& net, const data::Image& x, const data::Image& baseline,
                             std::size_t c_o, std::size_t c_t);

/// a_p = f(x) - f(x with every channel of pixel p taken from the baseline).
SaliencyMap occlusion1(const nn::Network& net, const data::Image& x, const data::Image& baseline, std::size_t c_o,
                       std::size_t c_t);

/// Mean DeepLIFT map over a background set of baselines.
Tensor deepshap_raw(const nn::Network& net, const Tensor& x, std::size_t c_o, std::size_t c_t,
                    std::span<const data::Image> background);
SaliencyMap deepshap_avg(const nn::Network& net, const data::Image& x, std::size_t c_o, std::size_t c_t,
                         std::span<const data::Image> background);

enum class MethodKind { ig, eg, deeplift, occlusion1, deepshap };
std::string_view to_string(MethodKind kind);
MethodKind method_kind_from_string(std::string_view name);

struct Method {
    MethodKind kind = MethodKind::ig;
    std::size_t steps = 200;            // ig
    std::size_t samples = 200;          // eg
    std::size_t background_count = 16;  // deepshap
    std::uint64_t seed = 0;             // eg, deepshap

    void validate() const;
    nlohmann::json to_json() const;
};

struct AttributionRequest {
    data::Image x;
    std::size_t c_o = 0;
    std::size_t c_t = 1;
    Method method;
    /// Baseline for ig, deeplift and occlusion1. eg and deepshap draw theirs from
    /// the target class of the training set.
    baselines::BaselineSpec baseline;

    void validate(std::size_t class_count) const;
};

/// Runs one request. `train` supplies mdts/random_target baselines and the eg/deepshap priors.
SaliencyMap attribute(const nn::Network& net, const AttributionRequest& request, const data::LabeledDataset& train);

/// Target-class background for deepshap: `count` training images drawn with replacement.
std::vector<data::Image> target_background(const data::LabeledDataset& train, std::size_t target, std::size_t count,
                                           std::uint64_t seed);

/// CSV with header "row,col,value" and %.17g values; provenance goes to a JSON sidecar.
std::string saliency_to_csv(const SaliencyMap& map);
SaliencyMap saliency_from_csv(std::string_view text);
void save_saliency(const SaliencyMap& map, const std::string& csv_path);
SaliencyMap load_saliency(const std::string& csv_path);
/// Sidecar path for a saliency CSV: "<csv>.header.json".
std::string sidecar_path(const std::string& csv_path);

}  // namespace ganmex::attribution
