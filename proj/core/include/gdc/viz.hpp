#pragma once

#include <optional>

#include "gdc/guided_conv.hpp"
#include "gdc/png_io.hpp"

namespace gdc {

struct DepthMap;

// Per-pixel 2D vectors obtained by reducing each generated kernel.
struct VectorField {
    int h = 0;
    int w = 0;
    std::vector<float> vx, vy;

    float& x_at(int y, int x) { return vx[static_cast<std::size_t>(y) * w + x]; }
    float& y_at(int y, int x) { return vy[static_cast<std::size_t>(y) * w + x]; }
    float x_at(int y, int x) const { return vx[static_cast<std::size_t>(y) * w + x]; }
    float y_at(int y, int x) const { return vy[static_cast<std::size_t>(y) * w + x]; }
};

// Inner product of each pixel's 3x3 kernel with the Prewitt pair
//   Px = [[-1,0,1],[-1,0,1],[-1,0,1]],  Py = Px^T,
// giving the weighted x/y shift of the kernel. Requires K == 3 and is linear
// in the kernels.
template <typename T>
VectorField kernels_to_field(const ChannelwiseKernels<T>& kernels, int batch_index, int channel);

// Flow-style color code: hue encodes the vector angle, saturation the
// magnitude normalized by the given percentile of the field's magnitudes.
// An all-zero field renders uniform white.
RgbImage field_to_color(const VectorField& field, double percentile = 99.0);

// Fixed blue-to-red colormap over [min, max] of the valid pixels, or over the
// supplied range. Invalid pixels render black.
RgbImage depth_to_color(const DepthMap& depth,
                        std::optional<std::pair<float, float>> range = std::nullopt);

}  // namespace gdc
