#include "cli/png.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <stdexcept>

#include <png.h>

#include "ganmex/io/binary.hpp"

namespace ganmex::cli {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

}  // namespace

RgbImage render_saliency(const attribution::SaliencyMap& map) {
    RgbImage img{map.width, map.height, std::vector<std::uint8_t>(map.width * map.height * 3)};
    double scale = 0.0;
    for (double v : map.values) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double t = scale > 0.0 ? map.values[i] / scale : 0.0;
        const double fade = 1.0 - std::abs(t);
        std::uint8_t* px = &img.pixels[i * 3];
        if (t >= 0.0) {
            px[0] = to_byte(fade);
            px[1] = to_byte(fade);
            px[2] = 255;
        } else {
            px[0] = 255;
            px[1] = to_byte(fade);
            px[2] = to_byte(fade);
        }
    }
    return img;
}

RgbImage render_image(const data::Image& image) {
    const std::size_t hw = image.pixel_count(), C = image.channels();
    RgbImage img{image.width(), image.height(), std::vector<std::uint8_t>(hw * 3)};
    for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t c = 0; c < 3; ++c) img.pixels[p * 3 + c] = to_byte(image.tensor()[(C == 1 ? 0 : c) * hw + p]);
    }
    return img;
}

std::string encode_png(const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3 || image.width == 0 || image.height == 0) {
        throw std::invalid_argument("encode_png: pixel buffer does not match a non-empty width x height RGB image");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    std::string out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: encoding failed");
    }
    png_set_write_fn(png, &out, append_bytes, nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < image.height; ++r) {
        png_write_row(png, const_cast<png_bytep>(&image.pixels[r * image.width * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const RgbImage& image, const std::string& path) { io::write_file_atomic(path, encode_png(image)); }

}  // namespace ganmex::cli
