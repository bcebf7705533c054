#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "ganmex/data/dataset.hpp"
#include "ganmex/gan/ganmex.hpp"

namespace ganmex::baselines {

enum class BaselineKind { zero, max, uniform, blur, mdts, random_target, ganmex };

std::string_view to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(std::string_view name);

struct BaselineSpec {
    BaselineKind kind = BaselineKind::zero;
    /// Required for mdts, random_target and ganmex; ignored by the static kinds.
    std::optional<std::size_t> target_class;
    double value = 0.5;  // uniform fill
    double sigma = 1.0;  // blur
    std::uint64_t seed = 0;  // random_target
    std::shared_ptr<const gan::GanmexModel> model;

    static BaselineSpec zero();
    static BaselineSpec max();
    static BaselineSpec uniform(double value);
    static BaselineSpec blur(double sigma);
    static BaselineSpec mdts(std::size_t target);
    static BaselineSpec random_target(std::size_t target, std::uint64_t seed);
    static BaselineSpec ganmex(std::shared_ptr<const gan::GanmexModel> model, std::size_t target);

    bool needs_target() const noexcept;
    /// Same spec with the target replaced (no-op for kinds that ignore it).
    BaselineSpec with_target(std::size_t target) const;
    /// Throws std::invalid_argument. `class_count` bounds the target when known.
    void validate(std::optional<std::size_t> class_count = std::nullopt) const;
    /// Short label such as "zero", "blur(2)" or "ganmex".
    std::string label() const;
};

/// Baseline image for `x`. `train` may be empty for kinds that do not read it.
data::Image make_baseline(const BaselineSpec& spec, const data::Image& x, const data::LabeledDataset& train);

/// Separable Gaussian blur, kernel truncated at 3 sigma, edges clamped.
data::Image gaussian_blur(const data::Image& x, double sigma);

struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Closest training image of class `target` in L2; ties go to the lowest index.
Neighbor nearest_of_class(const data::Image& x, const data::LabeledDataset& train, std::size_t target);

/// Euclidean distance over all channels and pixels.
double baseline_distance(const data::Image& x, const data::Image& baseline);

/// L2 distance over the pixels selected by `mask` (all channels).
double edge_region_distance(const data::Image& x, const data::Image& baseline, const data::PixelMask& mask);

struct ClassDistanceStats {
    double intra = 0.0;
    double inter = 0.0;
    double intra_stderr = 0.0;
    double inter_stderr = 0.0;
    std::size_t samples = 0;
};

/// Monte-Carlo mean distance over `samples` same-class and `samples` cross-class pairs.
ClassDistanceStats class_distance_stats(const data::LabeledDataset& ds, std::size_t samples, std::uint64_t seed);

}  // namespace ganmex::baselines
