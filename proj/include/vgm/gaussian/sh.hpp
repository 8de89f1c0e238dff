#ifndef VGM_GAUSSIAN_SH_HPP
#define VGM_GAUSSIAN_SH_HPP

#include <array>
#include <stdexcept>

#include "vgm/core/geometry.hpp"

namespace vgm {

/// RGB coefficients of the real spherical-harmonics basis up to degree 3, ordered by (l, m).
using ShCoeffs = std::array<Vec3, 16>;

namespace sh {

inline constexpr int max_degree = 3;
inline constexpr double c0 = 0.28209479177387814;
inline constexpr double c1 = 0.4886025119029199;
inline constexpr std::array<double, 5> c2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                                             0.5462742152960396};
inline constexpr std::array<double, 7> c3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                                             -0.4570457994644658, 1.445305721320277,  -0.5900435899266435};

/// Colour offset added after the SH sum so zero coefficients give mid grey.
inline constexpr double offset = 0.5;

inline constexpr int coeff_count(int degree)
{
    return (degree + 1) * (degree + 1);
}

inline void check_degree(int degree)
{
    if (degree < 0 || degree > max_degree) {
        throw std::invalid_argument("sh: degree must be in [0, 3]");
    }
}

/// Basis values for a unit direction; entries beyond the degree are zero.
inline std::array<double, 16> basis(const Vec3& d, int degree)
{
    std::array<double, 16> b{};
    b[0] = c0;
    if (degree < 1) {
        return b;
    }
    const double x = d.x(), y = d.y(), z = d.z();
    b[1] = -c1 * y;
    b[2] = c1 * z;
    b[3] = -c1 * x;
    if (degree < 2) {
        return b;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = c2[0] * x * y;
    b[5] = c2[1] * y * z;
    b[6] = c2[2] * (2.0 * zz - xx - yy);
    b[7] = c2[3] * x * z;
    b[8] = c2[4] * (xx - yy);
    if (degree < 3) {
        return b;
    }
    b[9] = c3[0] * y * (3.0 * xx - yy);
    b[10] = c3[1] * x * y * z;
    b[11] = c3[2] * y * (4.0 * zz - xx - yy);
    b[12] = c3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = c3[4] * x * (4.0 * zz - xx - yy);
    b[14] = c3[5] * z * (xx - yy);
    b[15] = c3[6] * x * (xx - 3.0 * yy);
    return b;
}

/// Partial derivatives of each basis polynomial with respect to the direction components.
inline std::array<Vec3, 16> basis_gradient(const Vec3& d, int degree)
{
    std::array<Vec3, 16> g;
    g.fill(Vec3::Zero());
    if (degree < 1) {
        return g;
    }
    const double x = d.x(), y = d.y(), z = d.z();
    g[1] = Vec3(0.0, -c1, 0.0);
    g[2] = Vec3(0.0, 0.0, c1);
    g[3] = Vec3(-c1, 0.0, 0.0);
    if (degree < 2) {
        return g;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    g[4] = c2[0] * Vec3(y, x, 0.0);
    g[5] = c2[1] * Vec3(0.0, z, y);
    g[6] = c2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = c2[3] * Vec3(z, 0.0, x);
    g[8] = c2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) {
        return g;
    }
    g[9] = c3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = c3[1] * Vec3(y * z, x * z, x * y);
    g[11] = c3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = c3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = c3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = c3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = c3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    return g;
}

/// Unclamped colour: sum of coefficients times basis, plus the offset.
inline Vec3 raw_color(const ShCoeffs& coeffs, const std::array<double, 16>& y, int degree)
{
    Vec3 c = Vec3::Constant(offset);
    for (int k = 0; k < coeff_count(degree); ++k) {
        c += y[k] * coeffs[k];
    }
    return c;
}

/// DC coefficient that renders `rgb` under the offset convention.
inline Vec3 dc_from_rgb(const Vec3& rgb)
{
    return (rgb - Vec3::Constant(offset)) / c0;
}

} // namespace sh

/// View-dependent colour for a unit view direction, clamped at zero.
inline Vec3 evaluate_sh(const ShCoeffs& coeffs, const Vec3& view_dir, int degree = sh::max_degree)
{
    sh::check_degree(degree);
    if (std::abs(view_dir.norm() - 1.0) > 1e-6) {
        throw std::invalid_argument("evaluate_sh: view direction must be unit length");
    }
    return sh::raw_color(coeffs, sh::basis(view_dir, degree), degree).cwiseMax(0.0);
}

} // namespace vgm

#endif // VGM_GAUSSIAN_SH_HPP
