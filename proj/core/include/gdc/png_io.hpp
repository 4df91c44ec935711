#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gdc {

// 8-bit RGB image as planar float (c, y, x) in [0, 1].
struct RgbImage {
    int h = 0;
    int w = 0;
    std::vector<float> rgb;  // 3*h*w

    float& at(int c, int y, int x) { return rgb[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    float at(int c, int y, int x) const {
        return rgb[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
};

// Reads an 8-bit RGB image from PNG or binary PPM (P6). Grayscale PNGs are
// replicated to three channels.
RgbImage read_rgb8(const std::string& path);
void write_rgb8_png(const std::string& path, const RgbImage& img);
void write_rgb8_ppm(const std::string& path, const RgbImage& img);

// 16-bit single-channel PNG, the depth carrier. Rejects any other bit depth
// or channel layout.
std::vector<std::uint16_t> read_gray16_png(const std::string& path, int& h, int& w);
void write_gray16_png(const std::string& path, int h, int w, const std::uint16_t* data);

}  // namespace gdc
