#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "ganmex/data/dataset.hpp"

namespace ganmex::data {

// Every generator is a pure function of its arguments. The train and test
// splits draw from separate random streams of the same seed.

/// Grayscale digit-like stroke glyphs with random affine jitter.
/// Requires 1 <= class_count <= 10 and size >= 12.
LabeledDataset gen_glyphs(std::size_t class_count, std::size_t size, std::size_t per_class, std::uint64_t seed,
                          Split split = Split::train);

/// Two-class RGB dataset: a red (class 0) or orange (class 1) disk on a pastel
/// gradient background. The mask marks disk pixels.
LabeledDataset gen_color_fruit(std::size_t size, std::size_t per_class, std::uint64_t seed,
                               Split split = Split::train);

/// Grayscale object shapes pasted onto scene textures; each (object, scene)
/// pair is a class, numbered object * scenes + scene. Requires objects*scenes >= 4.
LabeledDataset gen_composite(std::size_t objects, std::size_t scenes, std::size_t size, std::size_t per_class,
                             std::uint64_t seed, Split split = Split::train);

/// The glyph dataset for the same arguments, each image drawn in one pure
/// channel (0 red, 1 green, 2 blue) chosen uniformly at random.
LabeledDataset gen_colored_glyphs(std::size_t class_count, std::size_t size, std::size_t per_class,
                                  std::uint64_t seed, Split split = Split::train);

/// Channel carrying the largest total intensity.
std::size_t dominant_channel(const Image& image);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes single-channel images as IDX files; pixel values are rounded to bytes.
void write_idx(const LabeledDataset& ds, const std::string& images_path, const std::string& labels_path);

}  // namespace ganmex::data
