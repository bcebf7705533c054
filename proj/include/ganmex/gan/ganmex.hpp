#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ganmex/data/dataset.hpp"
#include "ganmex/nn/train.hpp"
#include "ganmex/tensor/random.hpp"

namespace ganmex::gan {

inline constexpr double kLogEpsilon = 1e-7;

struct GanmexConfig {
    double lambda_src = 1.0;       // adversarial term on fakes
    double lambda_cls = 1.0;       // target-class term on fakes
    double lambda_rec = 10.0;      // cycle reconstruction
    double lambda_sim = 1.0;       // similarity to the input
    double lambda_cls_real = 1.0;  // real-image classification (standalone GAN only)
    std::size_t steps = 1500;
    std::size_t batch_size = 16;
    std::size_t d_steps = 1;
    nn::OptimizerConfig g_optimizer{nn::OptimizerKind::adam, 1e-3, 0.5, 0.999, 1e-8};
    nn::OptimizerConfig d_optimizer{nn::OptimizerKind::adam, 5e-4, 0.5, 0.999, 1e-8};
    /// Uses -log D(G(x)) for the generator's adversarial term instead of log(1 - D(G(x))).
    bool non_saturating = false;
    /// Width of the first generator layer; deeper layers use twice this.
    std::size_t generator_width = 16;
    /// Inputs are squeezed into [margin, 1 - margin] before the logit so that
    /// the untrained generator is a near-identity map.
    double identity_margin = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const GanmexConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
GanmexConfig config_from_json(const nlohmann::json& j);

struct GanmexModel {
    nn::Network generator;      // input [C + K, H, W], logit-space residual [C, H, W]
    nn::Network discriminator;  // input [C, H, W], realism probability
    /// Standalone ablation only: the class discriminator trained with the generator.
    std::optional<nn::Network> class_discriminator;
    GanmexConfig config;
    std::size_t class_count = 0;
    Shape image_shape;
    std::uint64_t classifier_hash = 0;
    std::size_t trained_steps = 0;

    bool standalone() const noexcept { return class_discriminator.has_value(); }
};

/// Fresh generator and discriminator for images of `image_shape` with `class_count` classes.
GanmexModel init_model(const Shape& image_shape, std::size_t class_count, const GanmexConfig& cfg);

/// Generator pass on a tape. `x` is [N, C, H, W]; `classes` has one entry per row.
Var generate(const GanmexModel& model, Tape& tape, std::span<const Var> g_params, Var x,
             std::span<const std::size_t> classes);

/// Per-term generator loss values; `total` is their weighted sum.
struct GeneratorLoss {
    double total = 0.0;
    double adversarial = 0.0;     // mean log(1 - D(x~)), or mean -log D(x~) when non-saturating
    double classification = 0.0;  // mean -log S_c(x~)
    double reconstruction = 0.0;  // mean |x - G(x~, c')|
    double similarity = 0.0;      // mean |x - x~|
};

struct LossWeights {
    double src = 1.0, cls = 1.0, rec = 10.0, sim = 1.0;
    bool non_saturating = false;
    static LossWeights from(const GanmexConfig& cfg);
};

struct GeneratorLossVars {
    Var total, adversarial, classification, reconstruction, similarity;
};

/// Assembles the generator objective from its parts: the input batch `x`, the
/// fakes `x_tilde`, realism scores `d_fake` [N,1], target-class probabilities
/// `s_target` [N], and the cycle reconstruction `x_rec`.
GeneratorLossVars generator_loss_from_parts(Var x, Var x_tilde, Var d_fake, Var s_target, Var x_rec,
                                            const LossWeights& w);

/// Generator objective for a batch with original labels and target classes.
/// `classifier` supplies S (the frozen model, or the class discriminator for the standalone GAN).
GeneratorLoss generator_loss(const GanmexModel& model, const nn::Network& classifier, const Tensor& x,
                             std::span<const std::size_t> labels, std::span<const std::size_t> targets);

/// -mean log D(x) - mean log(1 - D(G(x, c))), with the generator held constant.
double discriminator_loss(const GanmexModel& model, const Tensor& x, std::span<const std::size_t> targets);

/// Discriminator objective on a tape with the fakes supplied as a constant.
Var discriminator_loss_var(const nn::Network& discriminator, Tape& tape, std::span<const Var> d_params, Var real,
                           Var fake);

struct StepRecord {
    std::size_t step = 0;
    double d_loss = 0.0;
    double cls_real = 0.0;  // standalone GAN only
    GeneratorLoss g;
};

class GanDiverged : public std::runtime_error {
public:
    GanDiverged(std::size_t step, std::string component);
    std::size_t step;
    std::string component;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Trains GANMEX against a frozen classifier whose classes match the dataset.
GanmexModel train_ganmex(const nn::Network& classifier, const data::LabeledDataset& ds, const GanmexConfig& cfg,
                         const StepCallback& on_step = {});

/// Same pipeline with a class discriminator trained from scratch in place of the classifier.
GanmexModel train_standalone_gan(const data::LabeledDataset& ds, const GanmexConfig& cfg,
                                 const StepCallback& on_step = {});

/// G(x, c_t) for a single image.
data::Image generate_baseline(const GanmexModel& model, const data::Image& x, std::size_t target);

/// G(x_i, targets_i) for a [N, C, H, W] batch.
Tensor generate_batch(const GanmexModel& model, const Tensor& x, std::span<const std::size_t> targets);

/// Samples a target class uniformly among classes other than `label`.
std::size_t sample_target(Rng& rng, std::size_t label, std::size_t class_count);

inline constexpr std::string_view kGanMagic = "GMXGAN1";
std::string serialize_model(const GanmexModel& model);
GanmexModel deserialize_model(std::string_view bytes);
void save_model(const GanmexModel& model, const std::string& path);
/// Loads a model and verifies that it was trained against `classifier`.
GanmexModel load_model(const std::string& path, const nn::Network& classifier);
GanmexModel load_model_unchecked(const std::string& path);

/// Raised when a model is paired with a classifier other than the one it was trained against.
class ClassifierMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ganmex::gan
