#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ganmex/tensor/tensor.hpp"

namespace ganmex::data {

/// Image tensor of shape [C, H, W] with values clamped to [0, 1].
class Image {
public:
    Image() = default;
    Image(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
    /// Clamps every value into [0, 1]. Non-finite values are rejected.
    explicit Image(Tensor chw);

    std::size_t channels() const { return pixels_.dim(0); }
    std::size_t height() const { return pixels_.dim(1); }
    std::size_t width() const { return pixels_.dim(2); }
    std::size_t pixel_count() const { return height() * width(); }

    const Tensor& tensor() const noexcept { return pixels_; }
    const Shape& shape() const noexcept { return pixels_.shape(); }

    double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels_[(c * height() + y) * width() + x]; }
    void set(std::size_t c, std::size_t y, std::size_t x, double v);

    friend bool operator==(const Image& a, const Image& b) { return a.pixels_ == b.pixels_; }

private:
    Tensor pixels_;
};

enum class Split { train, test };
std::string_view to_string(Split split);

/// How per-image masks map onto the common/distinguishing feature sets.
enum class MaskSemantics {
    none,
    /// Mask marks the distinguishing set for every class pair (binary color-fruit).
    foreground,
    /// Mask marks object pixels; classes are (object, scene) pairs.
    object_scene,
};
std::string_view to_string(MaskSemantics m);
MaskSemantics mask_semantics_from_string(std::string_view s);

/// Per-pixel boolean map, row-major over H*W.
using PixelMask = std::vector<std::uint8_t>;

struct LabeledDataset {
    std::string name;
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;
    Split split = Split::train;

    MaskSemantics mask_semantics = MaskSemantics::none;
    std::vector<PixelMask> masks;
    /// Colored glyphs: per-image color id (0 red, 1 green, 2 blue).
    std::vector<std::size_t> color_ids;
    /// Composite: per-class (object, scene) factors.
    std::vector<std::pair<std::size_t, std::size_t>> class_factors;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
    bool has_masks() const noexcept { return !masks.empty(); }
    Shape image_shape() const;
    std::vector<std::size_t> indices_of_class(std::size_t c) const;

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

/// Common (S_c) and distinguishing (S_d) pixel sets for a one-vs-one pair; the
/// two always partition the image.
struct FeatureSets {
    PixelMask common;
    PixelMask distinguishing;
};

/// Ground-truth feature sets for explaining image `index` as c_o versus c_t.
/// Empty when the dataset has no masks or the pair shares no factor.
std::optional<FeatureSets> feature_sets(const LabeledDataset& ds, std::size_t index, std::size_t c_o,
                                        std::size_t c_t);

/// Leftmost and rightmost quarter of the columns.
PixelMask edge_region_mask(std::size_t height, std::size_t width);

/// Per-pixel, per-channel mean.
Image dataset_mean(const LabeledDataset& ds);

/// Stacks images [first, first+count) into a [N, C, H, W] batch.
Tensor stack_images(const LabeledDataset& ds, std::span<const std::size_t> indices);
Tensor stack_images(std::span<const Image> images);
Image unstack_image(const Tensor& batch, std::size_t i);

/// Dataset container: magic "GMXDAT1", header, images, labels, masks, metadata.
inline constexpr std::string_view kDatasetMagic = "GMXDAT1";
std::string serialize_dataset(const LabeledDataset& ds);
LabeledDataset deserialize_dataset(std::string_view bytes);
void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

}  // namespace ganmex::data
