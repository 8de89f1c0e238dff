#ifndef VGM_GAUSSIAN_PRIMITIVE_HPP
#define VGM_GAUSSIAN_PRIMITIVE_HPP

#include <array>
#include <cmath>
#include <cstdint>

#include "vgm/gaussian/sh.hpp"
#include "vgm/tsdf/morton.hpp"

namespace vgm {

using GaussianId = std::uint64_t;

inline double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

inline double logit(double p)
{
    return std::log(p / (1.0 - p));
}

/// Anisotropic 3D Gaussian with view-dependent colour.
struct GaussianPrimitive {
    Vec3 mean = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0); // quaternion (w, x, y, z)
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    ShCoeffs sh = [] {
        ShCoeffs c;
        c.fill(Vec3::Zero());
        return c;
    }();
    MortonCode birth_code = 0;
    std::uint32_t birth_frame = 0;

    double opacity() const
    {
        return sigmoid(opacity_logit);
    }

    Vec3 scale() const
    {
        return log_scale.array().exp();
    }
};

/// Flat parameter vector layout used by gradients and the optimizer.
namespace param {
inline constexpr int mean = 0;
inline constexpr int rotation = 3;
inline constexpr int log_scale = 7;
inline constexpr int opacity = 10;
inline constexpr int sh = 11;
inline constexpr int count = 11 + 48;

inline constexpr int sh_index(int coeff, int channel)
{
    return sh + 3 * coeff + channel;
}
} // namespace param

using ParamVector = std::array<double, param::count>;

inline ParamVector pack(const GaussianPrimitive& g)
{
    ParamVector p{};
    for (int i = 0; i < 3; ++i) {
        p[param::mean + i] = g.mean[i];
        p[param::log_scale + i] = g.log_scale[i];
    }
    for (int i = 0; i < 4; ++i) {
        p[param::rotation + i] = g.rotation[i];
    }
    p[param::opacity] = g.opacity_logit;
    for (int k = 0; k < 16; ++k) {
        for (int c = 0; c < 3; ++c) {
            p[param::sh_index(k, c)] = g.sh[k][c];
        }
    }
    return p;
}

inline void unpack(const ParamVector& p, GaussianPrimitive& g)
{
    for (int i = 0; i < 3; ++i) {
        g.mean[i] = p[param::mean + i];
        g.log_scale[i] = p[param::log_scale + i];
    }
    for (int i = 0; i < 4; ++i) {
        g.rotation[i] = p[param::rotation + i];
    }
    g.opacity_logit = p[param::opacity];
    for (int k = 0; k < 16; ++k) {
        for (int c = 0; c < 3; ++c) {
            g.sh[k][c] = p[param::sh_index(k, c)];
        }
    }
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quaternion_matrix(const Vec4& q)
{
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to the unit quaternion components (before normalization).
inline Vec4 quaternion_matrix_backward(const Vec4& q, const Mat3& dR)
{
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 g;
    g[0] = 2.0 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) + x * dR(2, 1));
    g[1] = 2.0 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2.0 * x * dR(1, 1) - w * dR(1, 2) + z * dR(2, 0) + w * dR(2, 1) -
                  2.0 * x * dR(2, 2));
    g[2] = 2.0 * (-2.0 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) - w * dR(2, 0) + z * dR(2, 1) -
                  2.0 * y * dR(2, 2));
    g[3] = 2.0 * (-2.0 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) - 2.0 * z * dR(1, 1) + y * dR(1, 2) + x * dR(2, 0) +
                  y * dR(2, 1));
    return g;
}

} // namespace vgm

#endif // VGM_GAUSSIAN_PRIMITIVE_HPP
