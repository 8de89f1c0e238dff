#ifndef VGM_EVAL_METRICS_HPP
#define VGM_EVAL_METRICS_HPP

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "vgm/core/image.hpp"
#include "vgm/gaussian/rasterizer.hpp"
#include "vgm/vdc/ssim.hpp"

namespace vgm {

/// Six-decimal fixed notation used by every CSV column.
inline std::string format_fixed(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

/// Value reported for identical images.
inline constexpr double psnr_cap = 99.0;

namespace detail {

template<typename A, typename B>
double psnr_impl(const A& a, const B& b, const MaskImage* mask)
{
    if (!a.same_size(b) || (mask && !mask->same_size(a))) {
        throw std::invalid_argument("psnr: image sizes differ");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (mask && (*mask)[p] == 0) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double e = static_cast<double>(a[p][c]) - static_cast<double>(b[p][c]);
            sum += e * e;
        }
        ++n;
    }
    if (n == 0) {
        throw std::invalid_argument("psnr: empty mask");
    }
    const double mse = sum / (3.0 * static_cast<double>(n));
    if (mse == 0.0) {
        return psnr_cap;
    }
    return std::min(psnr_cap, 10.0 * std::log10(1.0 / mse));
}

} // namespace detail

/// 10 log10(1 / MSE) over all channels of the pixels selected by `mask` (nonzero entries), or all pixels.
inline double psnr(const RgbImage& a, const RgbImage& b, const MaskImage* mask = nullptr)
{
    return detail::psnr_impl(a, b, mask);
}

inline double psnr(const ColorImage& a, const RgbImage& b, const MaskImage* mask = nullptr)
{
    return detail::psnr_impl(a, b, mask);
}

inline double mean_ssim(const ColorImage& a, const RgbImage& b)
{
    const ScalarImage m = ssim_map(luma_image(a), luma_image(b));
    double s = 0.0;
    for (const double v : m) {
        s += v;
    }
    return s / static_cast<double>(m.size());
}

inline double mean_ssim(const RgbImage& a, const RgbImage& b)
{
    const ScalarImage m = ssim_map(luma_image(a), luma_image(b));
    double s = 0.0;
    for (const double v : m) {
        s += v;
    }
    return s / static_cast<double>(m.size());
}

inline std::size_t mask_count(const MaskImage& m)
{
    std::size_t n = 0;
    for (const auto v : m) {
        n += v != 0;
    }
    return n;
}

/// Colour image clamped to [0, 1] in single precision.
inline RgbImage to_rgb(const ColorImage& c)
{
    RgbImage out(c.width(), c.height());
    for (std::size_t p = 0; p < c.size(); ++p) {
        out[p] = c[p].cwiseMax(0.0).cwiseMin(1.0).cast<float>();
    }
    return out;
}

} // namespace vgm

#endif // VGM_EVAL_METRICS_HPP
