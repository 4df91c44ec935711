#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gdc {

struct DepthMap;

// Depth completion evaluation over the ground-truth validity mask.
// Depth inputs are in meters; rmse_mm/mae_mm convert to millimeters and the
// inverse-depth errors to 1/km. delta_i is the percentage of masked pixels
// whose prediction-to-truth ratio (either direction) is strictly below
// 1.25^i.
struct MetricReport {
    double rmse_m = 0.0;
    double rmse_mm = 0.0;
    double mae_mm = 0.0;
    double irmse_per_km = 0.0;
    double imae_per_km = 0.0;
    double rel = 0.0;
    double delta_1 = 0.0;
    double delta_2 = 0.0;
    double delta_3 = 0.0;
    std::int64_t n_pixels = 0;
    // Masked pixels whose prediction was <= 0 and clamped to the epsilon for
    // the ratio-based terms (inverse depth, rel, delta). Untrained networks
    // emit such values; they are counted rather than rejected.
    std::int64_t clamped_pixels = 0;

    std::string to_kv() const;
    std::string to_json() const;
};

// pred/gt in meters; the mask is the set of gt pixels > 0. Throws ShapeError
// on size mismatch and ValueError when the mask is empty.
MetricReport evaluate(const DepthMap& pred, const DepthMap& gt, double clamp_eps_m = 1e-3);

// Same, over raw spans (row-major h*w); gt > 0 defines the mask.
MetricReport evaluate_span(const float* pred, const float* gt, std::int64_t count,
                           double clamp_eps_m = 1e-3);

// Mean of per-image reports (benchmark convention: metrics are computed per
// frame, then averaged).
MetricReport average_reports(const std::vector<MetricReport>& reports);

}  // namespace gdc
