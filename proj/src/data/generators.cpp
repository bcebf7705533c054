#include "ganmex/data/generators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "ganmex/io/binary.hpp"
#include "ganmex/tensor/random.hpp"

namespace ganmex::data {
namespace {

struct Point {
    double x;
    double y;
};
using Stroke = std::vector<Point>;

// Glyph skeletons in a unit box, y pointing down.
const std::array<std::vector<Stroke>, 10>& glyph_skeletons() {
    static const std::array<std::vector<Stroke>, 10> table = [] {
        std::array<std::vector<Stroke>, 10> t;
        Stroke ring;
        for (int i = 0; i <= 16; ++i) {
            const double a = 2.0 * std::numbers::pi * i / 16.0;
            ring.push_back({0.5 + 0.24 * std::cos(a), 0.5 + 0.34 * std::sin(a)});
        }
        t[0] = {ring};
        t[1] = {{{0.52, 0.14}, {0.52, 0.86}}, {{0.34, 0.3}, {0.52, 0.14}}};
        t[2] = {{{0.28, 0.3}, {0.4, 0.16}, {0.6, 0.16}, {0.72, 0.3}, {0.66, 0.46}, {0.28, 0.85}, {0.74, 0.85}}};
        t[3] = {{{0.28, 0.18}, {0.68, 0.18}, {0.48, 0.46}, {0.7, 0.62}, {0.62, 0.84}, {0.28, 0.82}}};
        t[4] = {{{0.62, 0.86}, {0.62, 0.14}, {0.26, 0.6}, {0.76, 0.6}}};
        t[5] = {{{0.72, 0.16}, {0.34, 0.16}, {0.3, 0.46}, {0.6, 0.44}, {0.72, 0.62}, {0.6, 0.84}, {0.28, 0.82}}};
        t[6] = {{{0.66, 0.16}, {0.4, 0.34}, {0.3, 0.6}, {0.4, 0.84}, {0.62, 0.84}, {0.7, 0.64}, {0.56, 0.5},
                 {0.32, 0.58}}};
        t[7] = {{{0.26, 0.16}, {0.74, 0.16}, {0.44, 0.86}}};
        t[8] = {{{0.5, 0.5}, {0.32, 0.34}, {0.5, 0.15}, {0.68, 0.34}, {0.5, 0.5}, {0.3, 0.68}, {0.5, 0.86},
                 {0.7, 0.68}, {0.5, 0.5}}};
        t[9] = {{{0.68, 0.4}, {0.46, 0.5}, {0.32, 0.34}, {0.5, 0.15}, {0.68, 0.28}, {0.68, 0.4}, {0.6, 0.86}}};
        return t;
    }();
    return table;
}

double segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint64_t split_stream(Split split) { return split == Split::train ? 0 : 1; }

Image render_glyph(std::size_t digit, std::size_t size, Rng& rng) {
    const double scale = static_cast<double>(size) * uniform(rng, 0.62, 0.84);
    const double angle = uniform(rng, -0.26, 0.26);
    const double shear = uniform(rng, -0.22, 0.22);
    const double aspect = uniform(rng, 0.8, 1.15);
    const double shift = 0.1 * static_cast<double>(size);
    const double cx = 0.5 * static_cast<double>(size) + uniform(rng, -shift, shift);
    const double cy = 0.5 * static_cast<double>(size) + uniform(rng, -shift, shift);
    const double width = static_cast<double>(size) / 16.0 * uniform(rng, 1.3, 1.9);
    const double ink = uniform(rng, 0.8, 1.0);
    const double c = std::cos(angle), s = std::sin(angle);

    std::vector<Stroke> strokes;
    for (const auto& stroke : glyph_skeletons()[digit]) {
        Stroke out;
        for (auto [ux, uy] : stroke) {
            const double lx = (ux - 0.5 + shear * (uy - 0.5)) * scale * aspect;
            const double ly = (uy - 0.5) * scale;
            out.push_back({cx + c * lx - s * ly, cy + s * lx + c * ly});
        }
        strokes.push_back(std::move(out));
    }

    Image img(1, size, size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const Point p{x + 0.5, y + 0.5};
            double d = 1e9;
            for (const auto& stroke : strokes) {
                for (std::size_t k = 0; k + 1 < stroke.size(); ++k) d = std::min(d, segment_distance(p, stroke[k], stroke[k + 1]));
            }
            const double coverage = std::clamp(0.5 * width - d + 0.5, 0.0, 1.0);
            img.set(0, y, x, ink * coverage);
        }
    }
    return img;
}

void check_size(std::size_t size, std::size_t minimum, const char* who) {
    if (size < minimum) {
        throw std::invalid_argument(std::string(who) + ": size must be at least " + std::to_string(minimum));
    }
}

// Object shapes and scene textures for the composite dataset.
enum class Shape2D { disk, cross, triangle, ring, square, diamond };
constexpr std::size_t kShapeCount = 6;
constexpr std::size_t kSceneCount = 6;

bool inside_shape(Shape2D shape, double dx, double dy, double r) {
    const double ax = std::abs(dx), ay = std::abs(dy);
    switch (shape) {
        case Shape2D::disk:
            return dx * dx + dy * dy <= r * r;
        case Shape2D::square:
            return ax <= 0.82 * r && ay <= 0.82 * r;
        case Shape2D::triangle:
            return dy <= 0.8 * r && dy >= -r && ax <= 0.5 * (dy + r) * 0.95;
        case Shape2D::cross:
            return (ax <= 0.34 * r && ay <= r) || (ay <= 0.34 * r && ax <= r);
        case Shape2D::diamond:
            return ax + ay <= 1.1 * r;
        case Shape2D::ring: {
            const double d2 = dx * dx + dy * dy;
            return d2 <= r * r && d2 >= 0.3 * r * r;
        }
    }
    return false;
}

double scene_value(std::size_t scene, double x, double y, double period, double phase, double lo, double hi) {
    const double two_pi = 2.0 * std::numbers::pi;
    double t = 0.0;
    switch (scene) {
        case 0:  // horizontal stripes
            t = 0.5 + 0.5 * std::sin(two_pi * (y / period) + phase);
            break;
        case 1:  // vertical stripes
            t = 0.5 + 0.5 * std::sin(two_pi * (x / period) + phase);
            break;
        case 2:  // checkerboard
            t = (static_cast<long>(std::floor(x / (0.5 * period) + phase)) +
                 static_cast<long>(std::floor(y / (0.5 * period) + phase))) % 2 == 0
                    ? 1.0
                    : 0.0;
            break;
        case 3:  // diagonal stripes
            t = 0.5 + 0.5 * std::sin(two_pi * ((x + y) / (1.2 * period)) + phase);
            break;
        case 4:  // dots
            t = 0.5 + 0.5 * std::sin(two_pi * x / period + phase) * std::sin(two_pi * y / period + phase);
            break;
        default:  // radial rings
            t = 0.5 + 0.5 * std::cos(two_pi * std::hypot(x - 8.0, y - 8.0) / period + phase);
            break;
    }
    return lo + (hi - lo) * t;
}

std::uint32_t read_be32(io::BinaryReader& r, std::string_view field) {
    const std::string b = r.raw(4, field);
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[0])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[3]));
}

void write_be32(std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

}  // namespace

LabeledDataset gen_glyphs(std::size_t class_count, std::size_t size, std::size_t per_class, std::uint64_t seed,
                          Split split) {
    if (class_count == 0 || class_count > 10) throw std::invalid_argument("gen_glyphs: class_count must be in [1, 10]");
    check_size(size, 12, "gen_glyphs");
    Rng rng(mix_seed(seed, split_stream(split)));
    LabeledDataset ds;
    ds.name = "glyphs";
    ds.class_count = class_count;
    ds.split = split;
    for (std::size_t i = 0; i < per_class * class_count; ++i) {
        const std::size_t label = i % class_count;
        ds.images.push_back(render_glyph(label, size, rng));
        ds.labels.push_back(label);
    }
    return ds;
}

LabeledDataset gen_color_fruit(std::size_t size, std::size_t per_class, std::uint64_t seed, Split split) {
    check_size(size, 8, "gen_color_fruit");
    Rng rng(mix_seed(seed, 10 + split_stream(split)));
    LabeledDataset ds;
    ds.name = "color_fruit";
    ds.class_count = 2;
    ds.split = split;
    ds.mask_semantics = MaskSemantics::foreground;
    const double unit = static_cast<double>(size) / 16.0;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const std::size_t label = i % 2;
        std::array<double, 3> bg;
        for (auto& v : bg) v = uniform(rng, 0.6, 0.95);
        const double gx = uniform(rng, -0.08, 0.08), gy = uniform(rng, -0.08, 0.08);

        const double r = unit * uniform(rng, 3.2, 5.2);
        const double n = static_cast<double>(size);
        const double cx = uniform(rng, r, n - r), cy = uniform(rng, r, n - r);
        const double value = uniform(rng, 0.85, 1.0);
        const std::array<double, 3> fruit = label == 0
            ? std::array<double, 3>{value, value * uniform(rng, 0.0, 0.12), value * uniform(rng, 0.0, 0.1)}
            : std::array<double, 3>{value, value * uniform(rng, 0.45, 0.6), value * uniform(rng, 0.0, 0.1)};

        Image img(3, size, size);
        PixelMask mask(size * size, 0);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const double d = std::hypot(px - cx, py - cy);
                const double alpha = std::clamp(r - d + 0.5, 0.0, 1.0);
                // A blob pixel keeps the fruit color exactly so class hues never mix.
                const bool on_blob = alpha >= 0.5;
                mask[y * size + x] = on_blob ? 1 : 0;
                const double shade = 1.0 + gx * (px / n - 0.5) * 2.0 + gy * (py / n - 0.5) * 2.0;
                for (std::size_t ch = 0; ch < 3; ++ch) img.set(ch, y, x, on_blob ? fruit[ch] : bg[ch] * shade);
            }
        }
        ds.images.push_back(std::move(img));
        ds.masks.push_back(std::move(mask));
        ds.labels.push_back(label);
    }
    return ds;
}

LabeledDataset gen_composite(std::size_t objects, std::size_t scenes, std::size_t size, std::size_t per_class,
                             std::uint64_t seed, Split split) {
    if (objects == 0 || scenes == 0 || objects * scenes < 4) {
        throw std::invalid_argument("gen_composite: objects * scenes must be at least 4");
    }
    if (objects > kShapeCount || scenes > kSceneCount) {
        throw std::invalid_argument("gen_composite: at most 6 objects and 6 scenes are available");
    }
    check_size(size, 12, "gen_composite");
    Rng rng(mix_seed(seed, 20 + split_stream(split)));
    LabeledDataset ds;
    ds.name = "composite";
    ds.class_count = objects * scenes;
    ds.split = split;
    ds.mask_semantics = MaskSemantics::object_scene;
    for (std::size_t o = 0; o < objects; ++o) {
        for (std::size_t s = 0; s < scenes; ++s) ds.class_factors.emplace_back(o, s);
    }
    const double unit = static_cast<double>(size) / 16.0;
    const double n = static_cast<double>(size);
    for (std::size_t i = 0; i < per_class * ds.class_count; ++i) {
        const std::size_t label = i % ds.class_count;
        const auto [object, scene] = ds.class_factors[label];
        const double period = unit * uniform(rng, 3.5, 5.0);
        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double lo = uniform(rng, 0.05, 0.2), hi = uniform(rng, 0.45, 0.6);
        const double r = unit * uniform(rng, 3.4, 4.6);
        const double cx = uniform(rng, r, n - r), cy = uniform(rng, r, n - r);
        const double ink = uniform(rng, 0.85, 1.0);

        Image img(1, size, size);
        PixelMask mask(size * size, 0);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const bool on_object = inside_shape(static_cast<Shape2D>(object), px - cx, py - cy, r);
                mask[y * size + x] = on_object ? 1 : 0;
                img.set(0, y, x, on_object ? ink : scene_value(scene, px / unit, py / unit, period / unit, phase, lo, hi));
            }
        }
        ds.images.push_back(std::move(img));
        ds.masks.push_back(std::move(mask));
        ds.labels.push_back(label);
    }
    return ds;
}

LabeledDataset gen_colored_glyphs(std::size_t class_count, std::size_t size, std::size_t per_class,
                                  std::uint64_t seed, Split split) {
    LabeledDataset gray = gen_glyphs(class_count, size, per_class, seed, split);
    Rng rng(mix_seed(seed, 30 + split_stream(split)));
    LabeledDataset ds;
    ds.name = "colored_glyphs";
    ds.class_count = gray.class_count;
    ds.split = split;
    ds.labels = gray.labels;
    for (const auto& g : gray.images) {
        const std::size_t color = uniform_index(rng, 3);
        Image img(3, size, size);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) img.set(color, y, x, g.at(0, y, x));
        }
        ds.images.push_back(std::move(img));
        ds.color_ids.push_back(color);
    }
    return ds;
}

std::size_t dominant_channel(const Image& image) {
    std::size_t best = 0;
    double best_sum = -1.0;
    for (std::size_t c = 0; c < image.channels(); ++c) {
        double sum = 0.0;
        for (std::size_t y = 0; y < image.height(); ++y) {
            for (std::size_t x = 0; x < image.width(); ++x) sum += image.at(c, y, x);
        }
        if (sum > best_sum) {
            best_sum = sum;
            best = c;
        }
    }
    return best;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string image_bytes = io::read_file(images_path);
    const std::string label_bytes = io::read_file(labels_path);

    io::BinaryReader ir(image_bytes);
    const auto image_magic = read_be32(ir, "image magic");
    if (image_magic != 0x00000803) throw io::FormatError(images_path + ": bad IDX image magic at byte 0");
    const auto n = read_be32(ir, "image count");
    const auto rows = read_be32(ir, "rows");
    const auto cols = read_be32(ir, "cols");
    if (rows == 0 || cols == 0) throw io::FormatError(images_path + ": zero image extent");
    const std::uint64_t pixels = static_cast<std::uint64_t>(rows) * cols;
    if (image_bytes.size() - ir.offset() != n * pixels) {
        throw io::FormatError(images_path + ": expected " + std::to_string(n * pixels) + " pixel bytes after header, found " +
                              std::to_string(image_bytes.size() - ir.offset()));
    }

    io::BinaryReader lr(label_bytes);
    const auto label_magic = read_be32(lr, "label magic");
    if (label_magic != 0x00000801) throw io::FormatError(labels_path + ": bad IDX label magic at byte 0");
    const auto nl = read_be32(lr, "label count");
    if (nl != n) {
        throw io::FormatError("IDX length mismatch: " + std::to_string(n) + " images, " + std::to_string(nl) + " labels");
    }
    if (label_bytes.size() - lr.offset() != nl) throw io::FormatError(labels_path + ": label payload length mismatch");

    LabeledDataset ds;
    ds.name = "idx";
    std::size_t max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string raw = ir.raw(static_cast<std::size_t>(pixels), "pixels");
        std::vector<double> values(raw.size());
        for (std::size_t k = 0; k < raw.size(); ++k) values[k] = static_cast<unsigned char>(raw[k]) / 255.0;
        ds.images.emplace_back(Tensor({1, rows, cols}, std::move(values)));
        const std::size_t label = lr.u8("label");
        max_label = std::max(max_label, label);
        ds.labels.push_back(label);
    }
    ds.class_count = n == 0 ? 1 : max_label + 1;
    return ds;
}

void write_idx(const LabeledDataset& ds, const std::string& images_path, const std::string& labels_path) {
    if (ds.empty()) throw std::invalid_argument("write_idx: empty dataset");
    const Shape s = ds.image_shape();
    if (s[0] != 1) throw std::invalid_argument("write_idx: IDX export supports single-channel images only");
    std::string images, labels;
    write_be32(images, 0x00000803);
    write_be32(images, static_cast<std::uint32_t>(ds.size()));
    write_be32(images, static_cast<std::uint32_t>(s[1]));
    write_be32(images, static_cast<std::uint32_t>(s[2]));
    write_be32(labels, 0x00000801);
    write_be32(labels, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.images[i].tensor().values()) images.push_back(static_cast<char>(std::lround(v * 255.0)));
        if (ds.labels[i] > 255) throw std::invalid_argument("write_idx: label exceeds one byte");
        labels.push_back(static_cast<char>(ds.labels[i]));
    }
    io::write_file_atomic(images_path, images);
    io::write_file_atomic(labels_path, labels);
}

}  // namespace ganmex::data
