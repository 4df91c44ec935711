#include "gdc/png_io.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "gdc/errors.hpp"

namespace gdc {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError(fmt::format("cannot open '{}'", path));
    return f;
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

bool has_png_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() == 8 && !png_sig_cmp(sig, 0, 8);
}

RgbImage read_rgb8_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path));
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError(fmt::format("'{}' is not a binary PPM (P6)", path));
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw IoError(fmt::format("truncated PPM header in '{}'", path));
    };
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw IoError(fmt::format("'{}': only maxval 255 PPM supported", path));
    in.get();  // single whitespace after header
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(3) * w * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw IoError(fmt::format("truncated PPM payload in '{}'", path));
    }
    RgbImage img;
    img.h = h;
    img.w = w;
    img.rgb.resize(raw.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
            }
        }
    }
    return img;
}

}  // namespace

RgbImage read_rgb8(const std::string& path) {
    if (!has_png_magic(path)) return read_rgb8_ppm(path);

    FilePtr f = open_file(path, "rb");
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("libpng: read struct allocation failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("libpng: info struct allocation failed");
    if (setjmp(png_jmpbuf(r.png))) throw IoError(fmt::format("libpng: failed reading '{}'", path));

    png_init_io(r.png, f.get());
    png_read_info(r.png, r.info);

    png_set_strip_16(r.png);
    png_set_palette_to_rgb(r.png);
    png_set_expand_gray_1_2_4_to_8(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    const int w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int h = static_cast<int>(png_get_image_height(r.png, r.info));
    if (png_get_channels(r.png, r.info) != 3) {
        throw IoError(fmt::format("'{}': expected RGB after expansion", path));
    }

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(3) * w * h);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    RgbImage img;
    img.h = h;
    img.w = w;
    img.rgb.resize(raw.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
            }
        }
    }
    return img;
}

void write_rgb8_png(const std::string& path, const RgbImage& img) {
    FilePtr f = open_file(path, "wb");
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) throw IoError("libpng: write struct allocation failed");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) throw IoError("libpng: info struct allocation failed");
    if (setjmp(png_jmpbuf(wr.png))) throw IoError(fmt::format("libpng: failed writing '{}'", path));

    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(3) * img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(img.at(c, y, x));
        }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

void write_rgb8_ppm(const std::string& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot open '{}'", path));
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) out.put(static_cast<char>(to_byte(img.at(c, y, x))));
        }
    }
    if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

std::vector<std::uint16_t> read_gray16_png(const std::string& path, int& h, int& w) {
    FilePtr f = open_file(path, "rb");
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("libpng: read struct allocation failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("libpng: info struct allocation failed");
    if (setjmp(png_jmpbuf(r.png))) throw IoError(fmt::format("libpng: failed reading '{}'", path));

    png_init_io(r.png, f.get());
    png_read_info(r.png, r.info);

    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
        throw IoError(fmt::format("'{}': depth PNG must be 16-bit grayscale, got {}-bit type {}",
                                  path, bit_depth, color_type));
    }
    w = static_cast<int>(png_get_image_width(r.png, r.info));
    h = static_cast<int>(png_get_image_height(r.png, r.info));

    // PNG stores 16-bit samples big-endian; swap to host order.
    png_set_swap(r.png);
    png_read_update_info(r.png, r.info);

    std::vector<std::uint16_t> data(static_cast<std::size_t>(h) * w);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = reinterpret_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * w);
    }
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return data;
}

void write_gray16_png(const std::string& path, int h, int w, const std::uint16_t* data) {
    FilePtr f = open_file(path, "wb");
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) throw IoError("libpng: write struct allocation failed");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) throw IoError("libpng: info struct allocation failed");
    if (setjmp(png_jmpbuf(wr.png))) throw IoError(fmt::format("libpng: failed writing '{}'", path));

    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    png_set_swap(wr.png);

    std::vector<std::uint16_t> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        std::memcpy(row.data(), data + static_cast<std::size_t>(y) * w, row.size() * 2);
        png_write_row(wr.png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(wr.png, nullptr);
}

}  // namespace gdc
