#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ganmex/attribution/attribution.hpp"
#include "ganmex/baselines/baselines.hpp"
#include "ganmex/data/dataset.hpp"
#include "ganmex/gan/ganmex.hpp"
#include "ganmex/nn/train.hpp"

namespace ganmex::evaluation {

using attribution::SaliencyMap;

// ---- Perturbation ---------------------------------------------------------

struct PerturbationCurve {
    /// values[k] is the score delta after k flips; values[0] is the unperturbed input.
    std::vector<double> values;
    /// Pixel indices in flip order.
    std::vector<std::size_t> order;
};

/// Pixels by descending signed saliency, ties by index.
std::vector<std::size_t> flip_order(const SaliencyMap& map);

/// Flips pixels (every channel, v -> 1 - v) cumulatively in flip order.
/// `max_flips` limits the curve to that many steps.
PerturbationCurve perturbation_curve(const nn::Network& net, const data::Image& x, const SaliencyMap& map,
                                     std::size_t c_o, std::size_t c_t,
                                     std::optional<std::size_t> max_flips = std::nullopt);

/// (1 / (L + 1)) * sum_{k=0..L} (values[0] - values[k]); L defaults to the whole curve.
double aopc(const PerturbationCurve& curve, std::optional<std::size_t> L = std::nullopt);

// ---- Map statistics -------------------------------------------------------

/// Sparsity of |a|. Throws std::domain_error for an all-zero map.
double gini_index(const SaliencyMap& map);

/// Empty when either side has zero variance or fewer than three points.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
/// Pearson correlation of average ranks.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);
std::vector<double> average_ranks(std::span<const double> v);

/// f(x) - f(x with pixel i replaced by `replacement`'s pixel i), for every pixel.
std::vector<double> single_pixel_impacts(const nn::Network& net, const data::Image& x,
                                         const data::Image& replacement, std::size_t c_o, std::size_t c_t);

/// Pearson correlation between a_i and the impact of flipping pixel i to 1 - x_i.
std::optional<double> faithfulness(const nn::Network& net, const data::Image& x, const SaliencyMap& map,
                                   std::size_t c_o, std::size_t c_t);

/// Spearman correlation between |a_i| and |f(x) - f(x with pixel i from the baseline)|.
std::optional<double> monotonicity(const nn::Network& net, const data::Image& x, const data::Image& baseline,
                                   const SaliencyMap& map, std::size_t c_o, std::size_t c_t);

/// Mean |a| over the common set divided by mean |a| over the distinguishing set.
/// +infinity when the distinguishing set carries no attribution.
double inverse_localization(const SaliencyMap& map, const data::FeatureSets& sets);

/// Mean pairwise L1 distance between maps, relative to their mean L1 norm.
double relative_map_spread(std::span<const SaliencyMap> maps);

// ---- ROAR -----------------------------------------------------------------

/// Saliency for `x` explained as c_o versus c_t.
using PairSaliency = std::function<SaliencyMap(const data::Image& x, std::size_t c_o, std::size_t c_t)>;

struct RoarConfig {
    std::vector<double> fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    nn::TrainConfig train{5, 32, {}, 0};
};

struct RoarResult {
    std::vector<double> fractions;
    /// Test accuracy per fraction; empty where retraining diverged.
    std::vector<std::optional<double>> accuracies;
    double baseline_accuracy = 0.0;
    double aoroarc = 0.0;
    std::size_t diverged = 0;
};

/// Removes the top fraction of each image's pixels (mean fill), retrains a binary
/// classifier on the (c, c2) pair and records test accuracy per fraction.
RoarResult roar_curve(const PairSaliency& saliency, std::size_t c, std::size_t c2, const data::LabeledDataset& train,
                      const data::LabeledDataset& test, const RoarConfig& cfg);

/// Images with pixels replaced by `fill` at the given indices (all channels).
data::Image remove_pixels(const data::Image& x, std::span<const std::size_t> pixels, const data::Image& fill);

/// Uniformly random maps, fixed per (seed, image content).
PairSaliency random_saliency(std::uint64_t seed);

// ---- Cascading randomization ----------------------------------------------

struct CascadeConfig {
    attribution::Method method;
    /// Baseline template; targeted kinds are retargeted to each sample's c_t.
    baselines::BaselineSpec baseline;
    /// When set and the baseline is a classifier-coupled GANMEX model, each stage
    /// retrains GANMEX against the randomized classifier with this config.
    std::optional<gan::GanmexConfig> regenerate_ganmex;
    std::size_t samples = 20;
    std::uint64_t seed = 0;
};

struct CascadeStage {
    std::string layer;  // last randomized layer; empty for the original model
    /// Spearman of |a| against the original maps, per sample; empty when undefined.
    std::vector<std::optional<double>> per_sample;
    double mean = 0.0;  // over defined samples
    std::size_t undefined = 0;
};

struct CascadeReport {
    std::vector<std::size_t> sample_indices;
    std::vector<std::size_t> origins, targets;
    std::vector<CascadeStage> stages;
};

/// Randomizes `layer_order` cumulatively (norm-preserving) and compares each stage's
/// maps to the original ones. Samples are drawn from `eval` with c_o the label and
/// c_t a random other class.
CascadeReport cascading_randomization_report(const nn::Network& net, const CascadeConfig& cfg,
                                             const std::vector<std::string>& layer_order,
                                             const data::LabeledDataset& train, const data::LabeledDataset& eval,
                                             const std::function<void(const std::string&)>& progress = {});

// ---- Reports --------------------------------------------------------------

struct MetricReport {
    std::string metric;
    std::vector<std::string> sample_ids;
    /// NaN marks an undefined sample; it is excluded from the aggregate.
    std::vector<double> values;
    nlohmann::json config = nlohmann::json::object();

    void add(std::string id, double value);
    void add(std::string id, std::optional<double> value);
    double aggregate() const;
    std::size_t undefined() const;
    /// "sample,value" rows followed by "mean,<aggregate>".
    std::string to_csv() const;
};

struct Histogram {
    double lo = 0.0, hi = 0.0;
    std::vector<std::size_t> counts;
    std::string to_csv() const;  // bin_lo,bin_hi,count
};

/// Equal-width bins over [min, max] of the values; the last bin is closed.
Histogram make_histogram(std::span<const double> values, std::size_t bins);

struct DistanceRow {
    std::string baseline;
    double mean_distance = 0.0;
    double mean_edge_distance = 0.0;
    std::vector<double> distances;
    std::vector<double> edge_distances;
};

struct DistanceReport {
    std::vector<DistanceRow> rows;
    baselines::ClassDistanceStats class_stats;
    std::string to_csv() const;
};

/// Per-baseline mean L2 and edge-region distance over `eval`; targeted kinds use a
/// random other class per image drawn from `seed`.
DistanceReport distance_report(const data::LabeledDataset& eval, const data::LabeledDataset& train,
                               std::span<const baselines::BaselineSpec> specs, const data::PixelMask& edge_mask,
                               std::size_t pair_samples, std::uint64_t seed);

/// %.17g formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace ganmex::evaluation
