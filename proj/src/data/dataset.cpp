#include "ganmex/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ganmex/io/binary.hpp"

namespace ganmex::data {

Image::Image(std::size_t channels, std::size_t height, std::size_t width, double fill)
    : pixels_({channels, height, width}, std::clamp(fill, 0.0, 1.0)) {}

Image::Image(Tensor chw) : pixels_(std::move(chw)) {
    if (pixels_.rank() != 3) throw_shape_error("image", {pixels_.shape()}, "expected [C,H,W]");
    for (auto& v : pixels_.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("image: non-finite pixel value");
        v = std::clamp(v, 0.0, 1.0);
    }
}

void Image::set(std::size_t c, std::size_t y, std::size_t x, double v) {
    pixels_[(c * height() + y) * width() + x] = std::clamp(v, 0.0, 1.0);
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::string_view to_string(MaskSemantics m) {
    switch (m) {
        case MaskSemantics::foreground:
            return "foreground";
        case MaskSemantics::object_scene:
            return "object_scene";
        default:
            return "none";
    }
}

MaskSemantics mask_semantics_from_string(std::string_view s) {
    if (s == "none") return MaskSemantics::none;
    if (s == "foreground") return MaskSemantics::foreground;
    if (s == "object_scene") return MaskSemantics::object_scene;
    throw std::invalid_argument("unknown mask semantics '" + std::string(s) + "'");
}

Shape LabeledDataset::image_shape() const {
    if (images.empty()) throw std::invalid_argument("dataset '" + name + "' is empty");
    return images.front().shape();
}

std::vector<std::size_t> LabeledDataset::indices_of_class(std::size_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == c) out.push_back(i);
    }
    return out;
}

void LabeledDataset::validate() const {
    auto fail = [&](const std::string& what) { throw std::invalid_argument("dataset '" + name + "': " + what); };
    if (labels.size() != images.size()) fail("label count differs from image count");
    if (class_count == 0) fail("class_count must be positive");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) fail("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) + " out of range");
    }
    if (!images.empty()) {
        const Shape s = images.front().shape();
        for (const auto& im : images) {
            if (im.shape() != s) fail("mixed image shapes");
        }
    }
    if (!masks.empty()) {
        if (masks.size() != images.size()) fail("mask count differs from image count");
        for (const auto& m : masks) {
            if (m.size() != images.front().pixel_count()) fail("mask size differs from pixel count");
        }
    }
    if (!color_ids.empty() && color_ids.size() != images.size()) fail("color id count differs from image count");
    if (mask_semantics == MaskSemantics::object_scene && class_factors.size() != class_count) {
        fail("object/scene datasets need one factor pair per class");
    }
}

std::optional<FeatureSets> feature_sets(const LabeledDataset& ds, std::size_t index, std::size_t c_o,
                                        std::size_t c_t) {
    if (!ds.has_masks() || ds.mask_semantics == MaskSemantics::none) return std::nullopt;
    const PixelMask& m = ds.masks.at(index);
    FeatureSets sets;
    sets.distinguishing.resize(m.size());
    sets.common.resize(m.size());
    bool object_differs = true;
    if (ds.mask_semantics == MaskSemantics::object_scene) {
        const auto [obj_o, scene_o] = ds.class_factors.at(c_o);
        const auto [obj_t, scene_t] = ds.class_factors.at(c_t);
        const bool same_scene = scene_o == scene_t;
        const bool same_object = obj_o == obj_t;
        if (same_scene == same_object) return std::nullopt;  // neither or both shared
        object_differs = same_scene;
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
        const bool on_object = m[i] != 0;
        const bool distinguishing = object_differs ? on_object : !on_object;
        sets.distinguishing[i] = distinguishing ? 1 : 0;
        sets.common[i] = distinguishing ? 0 : 1;
    }
    return sets;
}

PixelMask edge_region_mask(std::size_t height, std::size_t width) {
    PixelMask mask(height * width, 0);
    const std::size_t band = width / 4;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            if (x < band || x >= width - band) mask[y * width + x] = 1;
        }
    }
    return mask;
}

Image dataset_mean(const LabeledDataset& ds) {
    if (ds.empty()) throw std::invalid_argument("dataset_mean: empty dataset");
    Tensor acc = Tensor::like(ds.images.front().tensor());
    for (const auto& im : ds.images) acc += im.tensor();
    acc *= 1.0 / static_cast<double>(ds.size());
    return Image(std::move(acc));
}

Tensor stack_images(std::span<const Image> images) {
    if (images.empty()) throw std::invalid_argument("stack_images: no images");
    const Shape& s = images.front().shape();
    const std::size_t per = shape_numel(s);
    Tensor out({images.size(), s[0], s[1], s[2]});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != s) throw_shape_error("stack_images", {s, images[i].shape()});
        std::copy_n(images[i].tensor().data(), per, out.data() + i * per);
    }
    return out;
}

Tensor stack_images(const LabeledDataset& ds, std::span<const std::size_t> indices) {
    std::vector<Image> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(ds.images.at(i));
    return stack_images(picked);
}

Image unstack_image(const Tensor& batch, std::size_t i) {
    if (batch.rank() != 4 || i >= batch.dim(0)) throw_shape_error("unstack_image", {batch.shape()});
    const Shape s{batch.dim(1), batch.dim(2), batch.dim(3)};
    const std::size_t per = shape_numel(s);
    std::vector<double> v(batch.data() + i * per, batch.data() + (i + 1) * per);
    return Image(Tensor(s, std::move(v)));
}

std::string serialize_dataset(const LabeledDataset& ds) {
    ds.validate();
    io::BinaryWriter w;
    w.raw(kDatasetMagic);
    w.str(ds.name);
    w.u64(ds.class_count);
    w.u8(ds.split == Split::train ? 0 : 1);
    w.u64(ds.images.size());
    for (const auto& im : ds.images) w.tensor(im.tensor());
    for (auto l : ds.labels) w.u64(l);
    w.str(to_string(ds.mask_semantics));
    w.u64(ds.masks.size());
    for (const auto& m : ds.masks) {
        w.u64(m.size());
        w.raw(std::string_view(reinterpret_cast<const char*>(m.data()), m.size()));
    }
    w.u64(ds.color_ids.size());
    for (auto c : ds.color_ids) w.u64(c);
    w.u64(ds.class_factors.size());
    for (auto [o, s] : ds.class_factors) {
        w.u64(o);
        w.u64(s);
    }
    return w.bytes();
}

LabeledDataset deserialize_dataset(std::string_view bytes) {
    io::BinaryReader r(bytes);
    io::expect_magic(r, kDatasetMagic);
    LabeledDataset ds;
    ds.name = r.str("name");
    ds.class_count = r.u64("class_count");
    const auto split = r.u8("split");
    if (split > 1) throw io::FormatError("invalid split tag at byte " + std::to_string(r.offset() - 1));
    ds.split = split == 0 ? Split::train : Split::test;
    const auto n = r.u64("image count");
    if (n > bytes.size()) throw io::FormatError("implausible image count " + std::to_string(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::string field = "image[" + std::to_string(i) + "]";
        Tensor t = r.tensor(field);
        if (t.rank() != 3) throw io::FormatError(field + ": expected rank 3");
        ds.images.emplace_back(std::move(t));
    }
    for (std::uint64_t i = 0; i < n; ++i) ds.labels.push_back(r.u64("label[" + std::to_string(i) + "]"));
    try {
        ds.mask_semantics = mask_semantics_from_string(r.str("mask_semantics"));
    } catch (const std::invalid_argument& e) {
        throw io::FormatError(e.what());
    }
    const auto nm = r.u64("mask count");
    if (nm > n) throw io::FormatError("mask count exceeds image count");
    for (std::uint64_t i = 0; i < nm; ++i) {
        const std::string field = "mask[" + std::to_string(i) + "]";
        const auto len = r.u64(field + ".size");
        const std::string raw = r.raw(static_cast<std::size_t>(len), field);
        ds.masks.emplace_back(raw.begin(), raw.end());
    }
    const auto nc = r.u64("color id count");
    if (nc > n) throw io::FormatError("color id count exceeds image count");
    for (std::uint64_t i = 0; i < nc; ++i) ds.color_ids.push_back(r.u64("color_id"));
    const auto nf = r.u64("class factor count");
    if (nf > 4096) throw io::FormatError("implausible class factor count");
    for (std::uint64_t i = 0; i < nf; ++i) {
        const auto o = r.u64("factor.object");
        const auto s = r.u64("factor.scene");
        ds.class_factors.emplace_back(o, s);
    }
    r.expect_end("dataset container");
    try {
        ds.validate();
    } catch (const std::invalid_argument& e) {
        throw io::FormatError(e.what());
    }
    return ds;
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
    io::write_file_atomic(path, serialize_dataset(ds));
}

LabeledDataset load_dataset(const std::string& path) { return deserialize_dataset(io::read_file(path)); }

}  // namespace ganmex::data
