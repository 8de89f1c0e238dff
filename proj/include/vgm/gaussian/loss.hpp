#ifndef VGM_GAUSSIAN_LOSS_HPP
#define VGM_GAUSSIAN_LOSS_HPP

#include <cmath>
#include <stdexcept>

#include "vgm/gaussian/rasterizer.hpp"

namespace vgm {

struct LossResult {
    double total = 0.0;
    double color = 0.0;
    double depth = 0.0;
    std::size_t depth_pixels = 0; // valid observed depth samples (the depth-term denominator)
    ScalarImage residual;         // per-pixel mean absolute colour error
    ColorImage d_color;           // dL/d(rendered colour)
    ScalarImage d_depth;          // dL/d(rendered depth)
};

namespace detail {
inline double sign(double v)
{
    return (v > 0.0) - (v < 0.0);
}
} // namespace detail

/// Mean L1 colour error plus lambda_d times the depth L1 error. The depth sum runs over pixels with a
/// valid observation and rendered alpha above `alpha_mask`, and is divided by the number of valid
/// observations.
inline LossResult compute_loss(const RenderOutput& out, const RgbImage& rgb, const DepthImage& depth, double lambda_d,
                               double alpha_mask = 0.5)
{
    const int w = out.color.width(), h = out.color.height();
    if (!rgb.same_size(w, h) || !depth.same_size(w, h)) {
        throw std::invalid_argument("loss: image sizes do not match the render");
    }
    LossResult r;
    r.residual = ScalarImage(w, h, 0.0);
    r.d_color = ColorImage(w, h, Vec3::Zero());
    r.d_depth = ScalarImage(w, h, 0.0);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const double color_scale = 1.0 / (3.0 * static_cast<double>(n));
    for (std::size_t p = 0; p < n; ++p) {
        const Vec3 diff = out.color[p] - rgb[p].cast<double>();
        r.residual[p] = diff.cwiseAbs().sum() / 3.0;
        r.color += diff.cwiseAbs().sum();
        for (int c = 0; c < 3; ++c) {
            r.d_color[p][c] = detail::sign(diff[c]) * color_scale;
        }
        if (valid_depth(depth[p])) {
            ++r.depth_pixels;
        }
    }
    r.color *= color_scale;
    if (r.depth_pixels > 0 && lambda_d != 0.0) {
        const double depth_scale = 1.0 / static_cast<double>(r.depth_pixels);
        for (std::size_t p = 0; p < n; ++p) {
            if (!valid_depth(depth[p]) || !(out.alpha[p] > alpha_mask)) {
                continue;
            }
            const double diff = out.depth[p] - static_cast<double>(depth[p]);
            r.depth += std::abs(diff);
            r.d_depth[p] = lambda_d * detail::sign(diff) * depth_scale;
        }
        r.depth *= depth_scale;
    }
    r.total = r.color + lambda_d * r.depth;
    return r;
}

} // namespace vgm

#endif // VGM_GAUSSIAN_LOSS_HPP
