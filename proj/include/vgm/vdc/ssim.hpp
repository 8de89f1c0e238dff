#ifndef VGM_VDC_SSIM_HPP
#define VGM_VDC_SSIM_HPP

#include <stdexcept>
#include <vector>

#include "vgm/core/image.hpp"
#include "vgm/gaussian/rasterizer.hpp"

namespace vgm {

struct SsimParams {
    int radius = 2; // 5x5 window
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

inline ScalarImage luma_image(const RgbImage& img)
{
    ScalarImage out(img.width(), img.height());
    for (std::size_t p = 0; p < img.size(); ++p) {
        out[p] = 0.299 * img[p].x() + 0.587 * img[p].y() + 0.114 * img[p].z();
    }
    return out;
}

inline ScalarImage luma_image(const ColorImage& img)
{
    ScalarImage out(img.width(), img.height());
    for (std::size_t p = 0; p < img.size(); ++p) {
        out[p] = 0.299 * img[p].x() + 0.587 * img[p].y() + 0.114 * img[p].z();
    }
    return out;
}

/// Per-pixel SSIM of two grey images over a square window clipped at the borders, with sample
/// (N - 1) variances and covariance.
inline ScalarImage ssim_map(const ScalarImage& a, const ScalarImage& b, const SsimParams& params = {})
{
    if (!a.same_size(b)) {
        throw std::invalid_argument("ssim: image sizes differ");
    }
    const int w = a.width(), h = a.height();
    // Summed-area tables of a, b, a^2, b^2, ab.
    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    std::vector<double> sa(stride * (h + 1)), sb(sa.size()), saa(sa.size()), sbb(sa.size()), sab(sa.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double va = a(x, y), vb = b(x, y);
            const std::size_t i = (y + 1) * stride + x + 1, l = i - 1, u = i - stride, ul = u - 1;
            sa[i] = va + sa[l] + sa[u] - sa[ul];
            sb[i] = vb + sb[l] + sb[u] - sb[ul];
            saa[i] = va * va + saa[l] + saa[u] - saa[ul];
            sbb[i] = vb * vb + sbb[l] + sbb[u] - sbb[ul];
            sab[i] = va * vb + sab[l] + sab[u] - sab[ul];
        }
    }
    const auto box = [&](const std::vector<double>& t, int x0, int y0, int x1, int y1) {
        return t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0];
    };
    // Second moment about the mean; the same expression serves variance and covariance so equal
    // inputs give bit-equal terms.
    const auto central = [](double sxy, double sx, double sy, double n) { return (sxy - sx * sy / n) / (n - 1.0); };

    ScalarImage out(w, h);
    const int r = params.radius;
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
            const double n = static_cast<double>((x1 - x0) * (y1 - y0));
            const double s_a = box(sa, x0, y0, x1, y1), s_b = box(sb, x0, y0, x1, y1);
            const double mu_a = s_a / n, mu_b = s_b / n;
            const double var_a = central(box(saa, x0, y0, x1, y1), s_a, s_a, n);
            const double var_b = central(box(sbb, x0, y0, x1, y1), s_b, s_b, n);
            const double cov = central(box(sab, x0, y0, x1, y1), s_a, s_b, n);
            out(x, y) = ((2.0 * mu_a * mu_b + params.c1) * (2.0 * cov + params.c2)) /
                        ((mu_a * mu_a + mu_b * mu_b + params.c1) * (var_a + var_b + params.c2));
        }
    }
    return out;
}

} // namespace vgm

#endif // VGM_VDC_SSIM_HPP
