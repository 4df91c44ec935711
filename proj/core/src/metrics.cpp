#include "gdc/metrics.hpp"

#include <fmt/format.h>

#include <cmath>

#include "gdc/data.hpp"
#include "gdc/errors.hpp"

namespace gdc {

MetricReport evaluate_span(const float* pred, const float* gt, std::int64_t count,
                           double clamp_eps_m) {
    MetricReport r;
    double se = 0.0, ae = 0.0, ise = 0.0, iae = 0.0, rel = 0.0;
    std::int64_t d1 = 0, d2 = 0, d3 = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (std::int64_t i = 0; i < count; ++i) {
        const double g = gt[i];
        if (!(g > 0.0)) continue;
        const double p = pred[i];
        ++r.n_pixels;
        const double e = p - g;
        se += e * e;
        ae += std::abs(e);
        // Ratio-based terms need a positive prediction; clamp and count.
        double pc = p;
        if (!(pc > 0.0) || !std::isfinite(pc)) {
            pc = clamp_eps_m;
            ++r.clamped_pixels;
        }
        const double ip = 1000.0 / pc;  // 1/km with depth in meters
        const double ig = 1000.0 / g;
        ise += (ip - ig) * (ip - ig);
        iae += std::abs(ip - ig);
        rel += std::abs(pc - g) / g;
        const double ratio = std::max(pc / g, g / pc);
        if (ratio < t1) ++d1;
        if (ratio < t2) ++d2;
        if (ratio < t3) ++d3;
    }
    if (r.n_pixels == 0) throw ValueError("evaluate: empty validity mask");
    const double n = static_cast<double>(r.n_pixels);
    r.rmse_m = std::sqrt(se / n);
    r.rmse_mm = 1000.0 * r.rmse_m;
    r.mae_mm = 1000.0 * (ae / n);
    r.irmse_per_km = std::sqrt(ise / n);
    r.imae_per_km = iae / n;
    r.rel = rel / n;
    r.delta_1 = 100.0 * d1 / n;
    r.delta_2 = 100.0 * d2 / n;
    r.delta_3 = 100.0 * d3 / n;
    return r;
}

MetricReport evaluate(const DepthMap& pred, const DepthMap& gt, double clamp_eps_m) {
    if (pred.h != gt.h || pred.w != gt.w) {
        throw ShapeError(fmt::format("evaluate: prediction {}x{} vs ground truth {}x{}", pred.h,
                                     pred.w, gt.h, gt.w));
    }
    return evaluate_span(pred.m.data(), gt.m.data(), static_cast<std::int64_t>(gt.m.size()),
                         clamp_eps_m);
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw ValueError("average_reports: no reports");
    MetricReport r;
    for (const MetricReport& x : reports) {
        r.rmse_m += x.rmse_m;
        r.rmse_mm += x.rmse_mm;
        r.mae_mm += x.mae_mm;
        r.irmse_per_km += x.irmse_per_km;
        r.imae_per_km += x.imae_per_km;
        r.rel += x.rel;
        r.delta_1 += x.delta_1;
        r.delta_2 += x.delta_2;
        r.delta_3 += x.delta_3;
        r.n_pixels += x.n_pixels;
        r.clamped_pixels += x.clamped_pixels;
    }
    const double k = static_cast<double>(reports.size());
    r.rmse_m /= k;
    r.rmse_mm /= k;
    r.mae_mm /= k;
    r.irmse_per_km /= k;
    r.imae_per_km /= k;
    r.rel /= k;
    r.delta_1 /= k;
    r.delta_2 /= k;
    r.delta_3 /= k;
    return r;
}

std::string MetricReport::to_kv() const {
    return fmt::format(
        "rmse_mm={:.6f}\nmae_mm={:.6f}\nirmse_per_km={:.6f}\nimae_per_km={:.6f}\n"
        "rmse_m={:.9f}\nrel={:.9f}\ndelta_1={:.6f}\ndelta_2={:.6f}\ndelta_3={:.6f}\n"
        "n_pixels={}\nclamped_pixels={}\n",
        rmse_mm, mae_mm, irmse_per_km, imae_per_km, rmse_m, rel, delta_1, delta_2, delta_3,
        n_pixels, clamped_pixels);
}

std::string MetricReport::to_json() const {
    return fmt::format(
        "{{\n"
        "  \"depth\": {{\"rmse_mm\": {:.6f}, \"mae_mm\": {:.6f}, \"rmse_m\": {:.9f}}},\n"
        "  \"inverse_depth\": {{\"irmse_per_km\": {:.6f}, \"imae_per_km\": {:.6f}}},\n"
        "  \"relative\": {{\"rel\": {:.9f}, \"delta_1\": {:.6f}, \"delta_2\": {:.6f}, "
        "\"delta_3\": {:.6f}}},\n"
        "  \"pixels\": {{\"evaluated\": {}, \"clamped\": {}}}\n"
        "}}",
        rmse_mm, mae_mm, rmse_m, irmse_per_km, imae_per_km, rel, delta_1, delta_2, delta_3,
        n_pixels, clamped_pixels);
}

}  // namespace gdc
