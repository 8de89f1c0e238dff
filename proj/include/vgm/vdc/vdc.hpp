#ifndef VGM_VDC_VDC_HPP
#define VGM_VDC_VDC_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "vgm/core/frame.hpp"
#include "vgm/gaussian/gaussian_map.hpp"
#include "vgm/gaussian/rasterizer.hpp"
#include "vgm/tsdf/tsdf_map.hpp"
#include "vgm/vdc/quadtree.hpp"
#include "vgm/vdc/ssim.hpp"

namespace vgm {

struct DetectSettings {
    double tau_s = 0.6;
    bool appearance = true; // SSIM test
    bool geometry = true;   // TSDF weight test
    /// Leaves whose mean rendered alpha is below this are filled regardless of the two tests.
    double coverage_alpha = 0.5;
    /// A voxel counts as settled once its weight exceeds 1 by more than this.
    double weight_slack = 1e-9;
};

/// Leaf indices selected for initialization. A leaf may appear in several lists; `selected` is their
/// sorted union.
struct VariationReport {
    std::vector<std::size_t> appearance;
    std::vector<std::size_t> geometry;
    std::vector<std::size_t> coverage;
    std::vector<std::size_t> selected;
    std::vector<double> leaf_ssim;
    std::size_t no_center_depth = 0; // leaves the geometry test skipped
};

inline double mean_over_leaf(const ScalarImage& img, const QuadLeaf& leaf)
{
    double sum = 0.0;
    for (int y = leaf.y0; y < leaf.y0 + leaf.height; ++y) {
        for (int x = leaf.x0; x < leaf.x0 + leaf.width; ++x) {
            sum += img(x, y);
        }
    }
    return sum / leaf.pixel_count();
}

inline bool usable_center_depth(float d, const Intrinsics& K)
{
    return valid_depth(d) && d > K.near && d <= K.far;
}

/// Runs the appearance and geometry tests on every leaf of the current frame.
inline VariationReport detect_variations(const std::vector<QuadLeaf>& leaves, const RenderOutput& rendered, const Frame& frame,
                                         const TsdfMap& tsdf, const Intrinsics& K, const DetectSettings& s = {})
{
    VariationReport rep;
    rep.leaf_ssim.resize(leaves.size(), 1.0);
    ScalarImage ssim;
    if (s.appearance) {
        ssim = ssim_map(luma_image(rendered.color), luma_image(frame.rgb));
    }
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const QuadLeaf& leaf = leaves[i];
        bool any = false;
        if (s.appearance) {
            rep.leaf_ssim[i] = mean_over_leaf(ssim, leaf);
            if (rep.leaf_ssim[i] < s.tau_s) {
                rep.appearance.push_back(i);
                any = true;
            }
        }
        if (s.geometry) {
            const PixelCoord c = leaf.center();
            const float d = frame.depth(static_cast<int>(c.u), static_cast<int>(c.v));
            if (!usable_center_depth(d, K)) {
                ++rep.no_center_depth;
            }
            else {
                const auto v = tsdf.query(backproject(c, d, frame.pose, K));
                if (!v || v->w <= 1.0 + s.weight_slack) {
                    rep.geometry.push_back(i);
                    any = true;
                }
            }
        }
        if (mean_over_leaf(rendered.alpha, leaf) < s.coverage_alpha) {
            rep.coverage.push_back(i);
            any = true;
        }
        if (any) {
            rep.selected.push_back(i);
        }
    }
    return rep;
}

struct InitSettings {
    /// Multiplies the per-meter TSDF gradient before it shapes the scale.
    double gradient_scale = 1.0;
    double min_scale = 1e-6;
    double max_scale = 10.0;
};

struct InitResult {
    std::vector<GaussianPrimitive> gaussians;
    std::size_t skipped = 0; // leaves without usable centre depth
};

/// Per-axis scale of a new primitive: extent d = L * D / fx spread along n = 1 / (1 + |g|), so the
/// primitive is thin where the field varies fast.
inline Vec3 initial_scale(double half_side, double depth, double fx, const std::optional<Vec3>& gradient)
{
    const double d = half_side * depth / fx;
    Vec3 n = Vec3::Ones();
    if (gradient) {
        n = (Vec3::Ones() + gradient->cwiseAbs()).cwiseInverse();
    }
    return d * n / n.norm();
}

/// One primitive per selected leaf, placed at the back-projected leaf centre.
inline InitResult initialize_gaussians(const std::vector<QuadLeaf>& leaves, const std::vector<std::size_t>& selected,
                                       const Frame& frame, const TsdfMap& tsdf, const Intrinsics& K, const InitSettings& s = {})
{
    InitResult out;
    out.gaussians.reserve(selected.size());
    for (const std::size_t i : selected) {
        const QuadLeaf& leaf = leaves[i];
        const PixelCoord c = leaf.center();
        const int px = static_cast<int>(c.u), py = static_cast<int>(c.v);
        const float d = frame.depth(px, py);
        if (!usable_center_depth(d, K)) {
            ++out.skipped;
            continue;
        }
        GaussianPrimitive g;
        g.mean = backproject(c, d, frame.pose, K);
        auto grad = tsdf.gradient(g.mean);
        if (grad) {
            *grad *= s.gradient_scale;
        }
        const Vec3 scale = initial_scale(leaf.half_side(), d, K.fx, grad).cwiseMax(s.min_scale).cwiseMin(s.max_scale);
        g.log_scale = scale.array().log();
        g.opacity_logit = 0.0;
        g.sh[0] = sh::dc_from_rgb(frame.rgb(px, py).cast<double>());
        g.birth_code = tsdf.morton_of(g.mean).value_or(0);
        g.birth_frame = static_cast<std::uint32_t>(frame.index);
        out.gaussians.push_back(g);
    }
    return out;
}

struct PruneReport {
    std::size_t deleted_voxels = 0;
    std::size_t floater_voxels = 0;
    std::size_t deleted_gaussians = 0;
    std::size_t floater_gaussians = 0;
};

/// Removes primitives born in voxels the current depth frame shows as emptied or as floaters.
inline PruneReport prune_gaussians(GaussianMap& map, const TsdfMap& tsdf, const Frame& frame, const Intrinsics& K, double tau_p,
                                   int stride = 1)
{
    const RaycastResult rc = tsdf.raycast_changed(frame.depth, frame.pose, K, tau_p, stride);
    PruneReport rep;
    rep.deleted_voxels = rc.deleted.size();
    rep.floater_voxels = rc.floaters.size();
    rep.deleted_gaussians = map.remove_by_morton(rc.deleted);
    rep.floater_gaussians = map.remove_by_morton(rc.floaters);
    return rep;
}

} // namespace vgm

#endif // VGM_VDC_VDC_HPP
