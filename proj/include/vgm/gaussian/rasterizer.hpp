#ifndef VGM_GAUSSIAN_RASTERIZER_HPP
#define VGM_GAUSSIAN_RASTERIZER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "vgm/core/geometry.hpp"
#include "vgm/core/image.hpp"
#include "vgm/gaussian/gaussian_map.hpp"

namespace vgm {

using ColorImage = Image<Vec3>;
using ScalarImage = Image<double>;

struct RenderSettings {
    double dilation = 0.3;           // px^2 added to the projected covariance diagonal
    double max_gaussian_value = 0.999;
    double min_transmittance = 1e-4;
    int sh_degree = sh::max_degree;
};

struct RenderOutput {
    ColorImage color;
    ScalarImage depth; // unnormalized blend of z
    ScalarImage alpha;
};

struct ProjectedGaussian {
    Vec2 mean;
    Mat2 cov;
    double z;
};

namespace detail {

/// Everything the forward pass derives per visible Gaussian, kept for the reverse pass.
struct Splat {
    std::size_t index = 0;
    GaussianId id = 0;
    Vec3 t_cam;
    Eigen::Matrix<double, 2, 3> J;
    Mat3 R, M, V; // rotation, R*S, camera-frame covariance
    Vec3 s;
    Vec4 q_unit;
    double q_norm = 1.0;
    Vec2 mean;
    Mat2 cov;
    double conic_a = 0, conic_b = 0, conic_c = 0;
    double z = 0;
    Vec3 view_vec;
    std::array<double, 16> basis{};
    ShCoeffs sh;
    Vec3 raw_color;
    Vec3 color;
    double opacity = 0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

inline std::optional<Splat> make_splat(const GaussianPrimitive& g, const Pose& pose, const Intrinsics& K, const RenderSettings& rs)
{
    Splat sp;
    const Mat3 Rc_t = pose.rotation.transpose();
    sp.t_cam = Rc_t * (g.mean - pose.translation);
    const double tx = sp.t_cam.x(), ty = sp.t_cam.y(), tz = sp.t_cam.z();
    if (!(tz > K.near)) {
        return std::nullopt;
    }
    sp.q_norm = g.rotation.norm();
    if (!(sp.q_norm > 0.0)) {
        return std::nullopt;
    }
    sp.q_unit = g.rotation / sp.q_norm;
    sp.R = quaternion_matrix(sp.q_unit);
    sp.s = g.scale();
    sp.M = sp.R * sp.s.asDiagonal();
    const Mat3 cov3 = sp.M * sp.M.transpose();
    sp.V = Rc_t * cov3 * pose.rotation;
    const double inv_z = 1.0 / tz;
    sp.J << K.fx * inv_z, 0.0, -K.fx * tx * inv_z * inv_z, 0.0, K.fy * inv_z, -K.fy * ty * inv_z * inv_z;
    sp.cov = sp.J * sp.V * sp.J.transpose();
    sp.cov(0, 1) = sp.cov(1, 0) = 0.5 * (sp.cov(0, 1) + sp.cov(1, 0));
    sp.cov(0, 0) += rs.dilation;
    sp.cov(1, 1) += rs.dilation;
    const double det = sp.cov(0, 0) * sp.cov(1, 1) - sp.cov(0, 1) * sp.cov(0, 1);
    if (!(det > 0.0)) {
        return std::nullopt;
    }
    sp.conic_a = sp.cov(1, 1) / det;
    sp.conic_b = -sp.cov(0, 1) / det;
    sp.conic_c = sp.cov(0, 0) / det;
    sp.mean = Vec2(K.fx * tx * inv_z + K.cx, K.fy * ty * inv_z + K.cy);
    sp.z = tz;

    const double rx = 3.0 * std::sqrt(sp.cov(0, 0));
    const double ry = 3.0 * std::sqrt(sp.cov(1, 1));
    const double fx0 = std::ceil(sp.mean.x() - rx), fx1 = std::floor(sp.mean.x() + rx);
    const double fy0 = std::ceil(sp.mean.y() - ry), fy1 = std::floor(sp.mean.y() + ry);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > K.width - 1 || fy0 > K.height - 1) {
        return std::nullopt;
    }
    sp.x0 = static_cast<int>(std::max(fx0, 0.0));
    sp.x1 = static_cast<int>(std::min(fx1, K.width - 1.0));
    sp.y0 = static_cast<int>(std::max(fy0, 0.0));
    sp.y1 = static_cast<int>(std::min(fy1, K.height - 1.0));

    sp.view_vec = g.mean - pose.translation;
    const Vec3 dir = sp.view_vec.normalized();
    sp.basis = sh::basis(dir, rs.sh_degree);
    sp.sh = g.sh;
    sp.raw_color = sh::raw_color(g.sh, sp.basis, rs.sh_degree);
    sp.color = sp.raw_color.cwiseMax(0.0);
    sp.opacity = g.opacity();
    return sp;
}

} // namespace detail

/// EWA projection of a Gaussian: 2D mean, dilated 2D covariance and camera depth. Absent when the
/// Gaussian is not beyond the near range or its 3-sigma box misses the image.
inline std::optional<ProjectedGaussian> project_gaussian(const GaussianPrimitive& g, const Pose& pose, const Intrinsics& K,
                                                         const RenderSettings& rs = {})
{
    const auto sp = detail::make_splat(g, pose, K, rs);
    if (!sp) {
        return std::nullopt;
    }
    return ProjectedGaussian{sp->mean, sp->cov, sp->z};
}

/// Software splatting renderer. Keeps the forward state of the last render so gradients can be
/// pulled back to the primitives.
class Rasterizer {
    public:
    explicit Rasterizer(const RenderSettings& settings = {}) : settings_(settings)
    {
        sh::check_degree(settings.sh_degree);
    }

    const RenderSettings& settings() const
    {
        return settings_;
    }

    const RenderOutput& render(const GaussianMap& map, const Pose& pose, const Intrinsics& K)
    {
        pose_ = pose;
        K_ = K;
        map_size_ = map.size();
        unsorted_.clear();
        for (std::size_t i = 0; i < map.size(); ++i) {
            auto sp = detail::make_splat(map[i], pose, K, settings_);
            if (sp) {
                sp->index = i;
                sp->id = map.id(i);
                unsorted_.push_back(std::move(*sp));
            }
        }
        // Front to back; equal depths fall back to insertion id.
        std::vector<std::size_t> order(unsorted_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& sa = unsorted_[a];
            const auto& sb = unsorted_[b];
            return sa.z < sb.z || (sa.z == sb.z && sa.id < sb.id);
        });
        splats_.clear();
        splats_.reserve(order.size());
        for (const std::size_t i : order) {
            splats_.push_back(std::move(unsorted_[i]));
        }

        const int w = K.width, h = K.height;
        out_.color = ColorImage(w, h, Vec3::Zero());
        out_.depth = ScalarImage(w, h, 0.0);
        out_.alpha = ScalarImage(w, h, 0.0);
        transmittance_.assign(static_cast<std::size_t>(w) * h, 1.0);
        done_.assign(static_cast<std::size_t>(w) * h, 0);
        records_.clear();

        const double clamp = settings_.max_gaussian_value;
        const double t_min = settings_.min_transmittance;
        for (std::size_t s = 0; s < splats_.size(); ++s) {
            const auto& sp = splats_[s];
            for (int y = sp.y0; y <= sp.y1; ++y) {
                const double dy = y - sp.mean.y();
                for (int x = sp.x0; x <= sp.x1; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    if (done_[p]) {
                        continue;
                    }
                    const double dx = x - sp.mean.x();
                    const double q = sp.conic_a * dx * dx + 2.0 * sp.conic_b * dx * dy + sp.conic_c * dy * dy;
                    const double n = std::exp(-0.5 * q);
                    const double a = sp.opacity * std::min(n, clamp);
                    double& T = transmittance_[p];
                    if (T * (1.0 - a) < t_min) {
                        done_[p] = 1;
                        continue;
                    }
                    const double weight = a * T;
                    out_.color[p] += weight * sp.color;
                    out_.depth[p] += weight * sp.z;
                    records_.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(p), a, T, n});
                    T *= 1.0 - a;
                }
            }
        }
        for (std::size_t p = 0; p < transmittance_.size(); ++p) {
            out_.alpha[p] = 1.0 - transmittance_[p];
        }
        return out_;
    }

    const RenderOutput& output() const
    {
        return out_;
    }

    std::size_t visible_count() const
    {
        return splats_.size();
    }

    /// Map positions of the Gaussians that survived culling in the last render.
    std::vector<std::size_t> visible_indices() const
    {
        std::vector<std::size_t> out;
        out.reserve(splats_.size());
        for (const auto& sp : splats_) {
            out.push_back(sp.index);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Reverse pass of the last render. `d_color` and `d_depth` are dL/d(rendered pixel); gradients
    /// w.r.t. every primitive parameter are accumulated into `grads` (indexed by map position).
    void backward(const ColorImage& d_color, const ScalarImage& d_depth, std::vector<ParamVector>& grads) const
    {
        grads.assign(map_size_, ParamVector{});
        const std::size_t npix = transmittance_.size();
        std::vector<Vec3> suffix_c(npix, Vec3::Zero());
        std::vector<double> suffix_d(npix, 0.0);
        std::vector<Accum> acc(splats_.size());
        const double clamp = settings_.max_gaussian_value;
        const int w = K_.width;

        for (auto r = records_.rbegin(); r != records_.rend(); ++r) {
            const auto& sp = splats_[r->splat];
            auto& ac = acc[r->splat];
            const std::size_t p = r->pixel;
            const double a = r->a, T = r->T;
            const Vec3& dc = d_color[p];
            const double dd = d_depth[p];
            const double inv = 1.0 / (1.0 - a);
            const double dl_da = dc.dot(sp.color * T - suffix_c[p] * inv) + dd * (sp.z * T - suffix_d[p] * inv);
            ac.color += a * T * dc;
            ac.z += a * T * dd;
            suffix_c[p] += a * T * sp.color;
            suffix_d[p] += a * T * sp.z;

            const double n_hat = std::min(r->n, clamp);
            ac.opacity += dl_da * n_hat;
            if (r->n < clamp) {
                const double dl_dq = -0.5 * r->n * sp.opacity * dl_da;
                const double dx = static_cast<double>(p % w) - sp.mean.x();
                const double dy = static_cast<double>(p / w) - sp.mean.y();
                ac.ga += dl_dq * dx * dx;
                ac.gb += dl_dq * dx * dy;
                ac.gc += dl_dq * dy * dy;
                ac.mean2d.x() += -2.0 * dl_dq * (sp.conic_a * dx + sp.conic_b * dy);
                ac.mean2d.y() += -2.0 * dl_dq * (sp.conic_b * dx + sp.conic_c * dy);
            }
        }

        for (std::size_t s = 0; s < splats_.size(); ++s) {
            backward_splat(splats_[s], acc[s], grads[splats_[s].index]);
        }
    }

    private:
    struct Record {
        std::uint32_t splat;
        std::uint32_t pixel;
        double a, T, n;
    };

    struct Accum {
        Vec3 color = Vec3::Zero();
        double z = 0, opacity = 0;
        double ga = 0, gb = 0, gc = 0; // dL/dconic as a full symmetric matrix
        Vec2 mean2d = Vec2::Zero();
    };

    void backward_splat(const detail::Splat& sp, const Accum& ac, ParamVector& g) const
    {
        const double fx = K_.fx, fy = K_.fy;
        const double tx = sp.t_cam.x(), ty = sp.t_cam.y(), tz = sp.t_cam.z();

        // conic -> 2D covariance
        Mat2 Q;
        Q << sp.conic_a, sp.conic_b, sp.conic_b, sp.conic_c;
        Mat2 Gq;
        Gq << ac.ga, ac.gb, ac.gb, ac.gc;
        const Mat2 G2 = -Q * Gq * Q;

        // 2D covariance -> camera covariance and Jacobian
        const Mat3 dV = sp.J.transpose() * G2 * sp.J;
        const Eigen::Matrix<double, 2, 3> dJ = 2.0 * G2 * sp.J * sp.V;
        const Mat3 dcov3 = pose_.rotation * dV * pose_.rotation.transpose();
        const Mat3 dM = 2.0 * dcov3 * sp.M;

        Mat3 dR;
        Vec3 ds;
        for (int j = 0; j < 3; ++j) {
            dR.col(j) = dM.col(j) * sp.s[j];
            ds[j] = dM.col(j).dot(sp.R.col(j));
        }
        for (int j = 0; j < 3; ++j) {
            g[param::log_scale + j] += ds[j] * sp.s[j];
        }
        const Vec4 dq_unit = quaternion_matrix_backward(sp.q_unit, dR);
        const Vec4 dq = (dq_unit - sp.q_unit * sp.q_unit.dot(dq_unit)) / sp.q_norm;
        for (int j = 0; j < 4; ++j) {
            g[param::rotation + j] += dq[j];
        }

        // camera point: projection, depth and Jacobian
        Vec3 dt = Vec3::Zero();
        const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
        dt.x() += ac.mean2d.x() * fx * iz;
        dt.y() += ac.mean2d.y() * fy * iz;
        dt.z() += -ac.mean2d.x() * fx * tx * iz2 - ac.mean2d.y() * fy * ty * iz2;
        dt.z() += ac.z;
        dt.z() += -dJ(0, 0) * fx * iz2 - dJ(1, 1) * fy * iz2;
        dt.x() += -dJ(0, 2) * fx * iz2;
        dt.y() += -dJ(1, 2) * fy * iz2;
        dt.z() += dJ(0, 2) * 2.0 * fx * tx * iz3 + dJ(1, 2) * 2.0 * fy * ty * iz3;
        Vec3 dmean = pose_.rotation * dt;

        // colour -> SH coefficients and view direction
        Vec3 dcolor = ac.color;
        for (int c = 0; c < 3; ++c) {
            if (!(sp.raw_color[c] > 0.0)) {
                dcolor[c] = 0.0;
            }
        }
        const int nc = sh::coeff_count(settings_.sh_degree);
        for (int k = 0; k < nc; ++k) {
            for (int c = 0; c < 3; ++c) {
                g[param::sh_index(k, c)] += sp.basis[k] * dcolor[c];
            }
        }
        if (settings_.sh_degree > 0) {
            const double len = sp.view_vec.norm();
            const Vec3 dir = sp.view_vec / len;
            const auto bg = sh::basis_gradient(dir, settings_.sh_degree);
            Vec3 ddir = Vec3::Zero();
            for (int k = 1; k < nc; ++k) {
                ddir += sp.sh[k].dot(dcolor) * bg[k];
            }
            dmean += (ddir - dir * dir.dot(ddir)) / len;
        }
        for (int j = 0; j < 3; ++j) {
            g[param::mean + j] += dmean[j];
        }

        g[param::opacity] += ac.opacity * sp.opacity * (1.0 - sp.opacity);
    }

    private:
    RenderSettings settings_;
    Pose pose_;
    Intrinsics K_;
    std::size_t map_size_ = 0;
    std::vector<detail::Splat> splats_, unsorted_;
    std::vector<double> transmittance_;
    std::vector<char> done_;
    std::vector<Record> records_;
    RenderOutput out_;
};

/// Convenience forward render.
inline RenderOutput render(const GaussianMap& map, const Pose& pose, const Intrinsics& K, const RenderSettings& settings = {})
{
    Rasterizer r(settings);
    return r.render(map, pose, K);
}

} // namespace vgm

#endif // VGM_GAUSSIAN_RASTERIZER_HPP
