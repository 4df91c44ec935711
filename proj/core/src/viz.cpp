#include "gdc/viz.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "gdc/data.hpp"
#include "gdc/errors.hpp"

namespace gdc {

namespace {

constexpr float kPrewittX[9] = {-1, 0, 1, -1, 0, 1, -1, 0, 1};
constexpr float kPrewittY[9] = {-1, -1, -1, 0, 0, 0, 1, 1, 1};

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    // h in [0, 1) around the wheel.
    const float hh = (h - std::floor(h)) * 6.0f;
    const int sector = static_cast<int>(hh) % 6;
    const float f = hh - std::floor(hh);
    const float p = v * (1 - s);
    const float q = v * (1 - s * f);
    const float t = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace

template <typename T>
VectorField kernels_to_field(const ChannelwiseKernels<T>& kernels, int batch_index, int channel) {
    if (kernels.K != 3) {
        throw ValueError(fmt::format("kernels_to_field: Prewitt reduction needs K=3, got K={}",
                                     kernels.K));
    }
    const Shape4 s = kernels.weights.shape();
    if (batch_index < 0 || batch_index >= s.n || channel < 0 || channel >= kernels.M) {
        throw ValueError(fmt::format("kernels_to_field: batch {} / channel {} out of range",
                                     batch_index, channel));
    }
    VectorField f;
    f.h = s.h;
    f.w = s.w;
    f.vx.assign(static_cast<std::size_t>(s.h) * s.w, 0.0f);
    f.vy.assign(static_cast<std::size_t>(s.h) * s.w, 0.0f);
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            float ax = 0.0f, ay = 0.0f;
            for (int k = 0; k < 9; ++k) {
                const float w = static_cast<float>(kernels.at(batch_index, channel, k, y, x));
                ax += w * kPrewittX[k];
                ay += w * kPrewittY[k];
            }
            f.x_at(y, x) = ax;
            f.y_at(y, x) = ay;
        }
    }
    return f;
}

RgbImage field_to_color(const VectorField& field, double percentile) {
    if (percentile <= 0.0 || percentile > 100.0) {
        throw ValueError("field_to_color: percentile outside (0, 100]");
    }
    std::vector<float> mags(field.vx.size());
    for (std::size_t i = 0; i < mags.size(); ++i) {
        mags[i] = std::hypot(field.vx[i], field.vy[i]);
    }
    std::vector<float> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(sorted.size()) - 1,
                         std::ceil(percentile / 100.0 * static_cast<double>(sorted.size())) - 1));
    const float norm = sorted.empty() ? 0.0f : sorted[rank];

    RgbImage img;
    img.h = field.h;
    img.w = field.w;
    img.rgb.assign(static_cast<std::size_t>(3) * field.h * field.w, 1.0f);
    if (norm <= 0.0f) return img;  // zero field: uniform white

    for (int y = 0; y < field.h; ++y) {
        for (int x = 0; x < field.w; ++x) {
            const float vx = field.x_at(y, x);
            const float vy = field.y_at(y, x);
            const float mag = std::hypot(vx, vy);
            const float hue =
                static_cast<float>((std::atan2(vy, vx) + M_PI) / (2.0 * M_PI));  // [0,1)
            const float sat = std::min(1.0f, mag / norm);
            float r, g, b;
            hsv_to_rgb(hue, sat, 1.0f, r, g, b);
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    }
    return img;
}

RgbImage depth_to_color(const DepthMap& depth, std::optional<std::pair<float, float>> range) {
    float lo = 0.0f, hi = 0.0f;
    if (range) {
        lo = range->first;
        hi = range->second;
    } else {
        lo = std::numeric_limits<float>::max();
        hi = std::numeric_limits<float>::lowest();
        for (float v : depth.m) {
            if (v > 0.0f) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (lo > hi) {
            lo = 0.0f;
            hi = 1.0f;
        }
    }
    const float span = hi > lo ? hi - lo : 1.0f;

    RgbImage img;
    img.h = depth.h;
    img.w = depth.w;
    img.rgb.assign(static_cast<std::size_t>(3) * depth.h * depth.w, 0.0f);
    for (int y = 0; y < depth.h; ++y) {
        for (int x = 0; x < depth.w; ++x) {
            const float v = depth.at(y, x);
            if (!(v > 0.0f)) continue;  // invalid stays black
            const float u = std::clamp((v - lo) / span, 0.0f, 1.0f);
            // Piecewise blue -> cyan -> green -> yellow -> red ramp.
            const float s4 = u * 4.0f;
            float r = 0, g = 0, b = 0;
            if (s4 < 1.0f) {
                r = 0; g = s4; b = 1;
            } else if (s4 < 2.0f) {
                r = 0; g = 1; b = 2.0f - s4;
            } else if (s4 < 3.0f) {
                r = s4 - 2.0f; g = 1; b = 0;
            } else {
                r = 1; g = 4.0f - s4; b = 0;
            }
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    }
    return img;
}

template VectorField kernels_to_field(const ChannelwiseKernels<float>&, int, int);
template VectorField kernels_to_field(const ChannelwiseKernels<double>&, int, int);

}  // namespace gdc
