#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ganmex/attribution/attribution.hpp"
#include "ganmex/data/dataset.hpp"

namespace ganmex::cli {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Diverging colormap scaled by max |a|: blue positive, red negative, white zero.
RgbImage render_saliency(const attribution::SaliencyMap& map);
/// Grayscale images are replicated across channels; values are clamped to [0, 1].
RgbImage render_image(const data::Image& image);

std::string encode_png(const RgbImage& image);
/// Encodes and writes atomically.
void write_png(const RgbImage& image, const std::string& path);

}  // namespace ganmex::cli
