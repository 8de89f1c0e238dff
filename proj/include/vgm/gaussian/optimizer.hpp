#ifndef VGM_GAUSSIAN_OPTIMIZER_HPP
#define VGM_GAUSSIAN_OPTIMIZER_HPP

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vgm/core/frame.hpp"
#include "vgm/gaussian/loss.hpp"

namespace vgm {

struct AdamSettings {
    double lr_mean = 1.6e-4; // multiplied by scene_extent
    double lr_rotation = 1e-3;
    double lr_log_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 1.25e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
    double scene_extent = 1.0;
    double min_scale = 1e-6;
    double max_scale = 10.0;
};

/// Adam with per-primitive moments and step counts, keyed by primitive id. Primitives without state
/// start from zero moments.
class AdamOptimizer {
    public:
    explicit AdamOptimizer(const AdamSettings& s = {}) : s_(s)
    {
        for (int i = 0; i < param::count; ++i) {
            lr_[i] = learning_rate(i);
        }
    }

    const AdamSettings& settings() const
    {
        return s_;
    }

    /// Steps the primitives at map positions `indices` with gradients `grads` (indexed by position).
    void step(GaussianMap& map, const std::vector<ParamVector>& grads, const std::vector<std::size_t>& indices)
    {
        const double log_min = std::log(s_.min_scale), log_max = std::log(s_.max_scale);
        for (const std::size_t i : indices) {
            Moments& st = state_[map.id(i)];
            ++st.t;
            const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(st.t));
            const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(st.t));
            ParamVector p = pack(map[i]);
            const ParamVector& g = grads[i];
            for (int k = 0; k < param::count; ++k) {
                st.m[k] = s_.beta1 * st.m[k] + (1.0 - s_.beta1) * g[k];
                st.v[k] = s_.beta2 * st.v[k] + (1.0 - s_.beta2) * g[k] * g[k];
                const double m_hat = st.m[k] / bc1;
                const double v_hat = st.v[k] / bc2;
                p[k] -= lr_[k] * m_hat / (std::sqrt(v_hat) + s_.eps);
            }
            GaussianPrimitive& prim = map[i];
            unpack(p, prim);
            const double qn = prim.rotation.norm();
            if (qn > 0.0) {
                prim.rotation /= qn;
            }
            else {
                prim.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
            }
            prim.log_scale = prim.log_scale.cwiseMax(log_min).cwiseMin(log_max);
        }
    }

    /// Drops state of primitives no longer in `map`.
    void retain(const GaussianMap& map)
    {
        const std::unordered_set<GaussianId> live(map.ids().begin(), map.ids().end());
        std::erase_if(state_, [&](const auto& kv) { return !live.count(kv.first); });
    }

    std::size_t state_size() const
    {
        return state_.size();
    }

    private:
    struct Moments {
        ParamVector m{};
        ParamVector v{};
        std::uint64_t t = 0;
    };

    double learning_rate(int k) const
    {
        if (k < param::rotation) {
            return s_.lr_mean * s_.scene_extent;
        }
        if (k < param::log_scale) {
            return s_.lr_rotation;
        }
        if (k < param::opacity) {
            return s_.lr_log_scale;
        }
        if (k == param::opacity) {
            return s_.lr_opacity;
        }
        return k < param::sh_index(1, 0) ? s_.lr_sh_dc : s_.lr_sh_rest;
    }

    AdamSettings s_;
    ParamVector lr_{};
    std::unordered_map<GaussianId, Moments> state_;
};

/// Runs `iterations` render / loss / reverse / Adam steps, cycling through `frames` in order.
/// Returns the loss of each iteration (measured before its step).
inline std::vector<double> optimize(GaussianMap& map, const std::vector<const Frame*>& frames, const Intrinsics& K, int iterations,
                                    AdamOptimizer& opt, Rasterizer& raster, double lambda_d)
{
    if (iterations < 1) {
        throw std::invalid_argument("optimize: iterations must be >= 1");
    }
    if (frames.empty()) {
        throw std::invalid_argument("optimize: no frames");
    }
    std::vector<double> trace;
    trace.reserve(iterations);
    std::vector<ParamVector> grads;
    for (int it = 0; it < iterations; ++it) {
        const Frame& f = *frames[static_cast<std::size_t>(it) % frames.size()];
        const RenderOutput& out = raster.render(map, f.pose, K);
        const LossResult loss = compute_loss(out, f.rgb, f.depth, lambda_d);
        trace.push_back(loss.total);
        raster.backward(loss.d_color, loss.d_depth, grads);
        opt.step(map, grads, raster.visible_indices());
    }
    return trace;
}

} // namespace vgm

#endif // VGM_GAUSSIAN_OPTIMIZER_HPP
