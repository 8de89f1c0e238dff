#ifndef VGM_PIPELINE_MAPPER_HPP
#define VGM_PIPELINE_MAPPER_HPP

#include <chrono>
#include <random>
#include <string>
#include <vector>

#include "vgm/dataset/sequence.hpp"
#include "vgm/gaussian/optimizer.hpp"
#include "vgm/pipeline/config.hpp"
#include "vgm/vdc/vdc.hpp"

namespace vgm {

/// Frames promoted for joint optimization, in arrival order.
struct KeyframePool {
    std::vector<Frame> frames;
    int last_keyframe_index = -1;

    bool empty() const
    {
        return frames.empty();
    }

    std::size_t size() const
    {
        return frames.size();
    }
};

/// min(k, pool_size) distinct pool positions drawn uniformly without replacement (partial
/// Fisher-Yates), in draw order.
inline std::vector<std::size_t> select_keyframe_batch(std::size_t pool_size, int k, std::mt19937_64& rng)
{
    std::vector<std::size_t> idx(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) {
        idx[i] = i;
    }
    const std::size_t take = std::min(pool_size, static_cast<std::size_t>(std::max(k, 0)));
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool_size - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(take);
    return idx;
}

/// Why a frame becomes a keyframe, or an empty string when it does not. `gap` is the distance to the
/// previous keyframe.
inline std::string keyframe_reason(bool pool_empty, std::size_t pruned, std::size_t initialized, int gap, const MapConfig& cfg)
{
    if (pool_empty) {
        return "first";
    }
    if (pruned + initialized > static_cast<std::size_t>(cfg.tau_k)) {
        return "change";
    }
    if (gap >= cfg.keyframe_spacing) {
        return "spacing";
    }
    return {};
}

enum class Stage { integrate, prune, detect, optimize };

struct FrameReport {
    int frame = 0;
    IntegrationReport integration;
    PruneReport prune;
    std::size_t leaves = 0;
    std::size_t avd = 0;
    std::size_t gvd = 0;
    std::size_t fill = 0;
    std::size_t initialized = 0;
    std::size_t init_skipped = 0;
    std::size_t gaussians = 0; // live count after the frame
    bool keyframe = false;
    std::string keyframe_reason; // "first", "change", "spacing" or empty
    std::vector<double> loss;
    std::vector<Stage> stages;          // in execution order
    std::vector<double> stage_ms;       // duration of each entry in `stages`
    std::vector<double> stage_start_ms; // start of each entry, relative to the frame start

    std::size_t pruned() const
    {
        return prune.deleted_gaussians + prune.floater_gaussians;
    }
};

inline const char* stage_name(Stage s)
{
    switch (s) {
    case Stage::integrate:
        return "integrate";
    case Stage::prune:
        return "prune";
    case Stage::detect:
        return "detect";
    case Stage::optimize:
        return "optimize";
    }
    return "?";
}

/// Per-frame orchestration: TSDF fusion, pruning, variation detection and initialization, keyframe
/// bookkeeping and optimization.
class Mapper {
    public:
    Mapper(const MapConfig& cfg, const SequenceInfo& info)
        : cfg_(cfg), K_(info.intrinsics), tsdf_(TsdfMap::from_bounds(info.bbox_lo, info.bbox_hi, tsdf_params(cfg))),
          opt_(adam_settings(cfg, info)), raster_(render_settings(cfg)), rng_(cfg.rng_seed)
    {
        cfg_.validate();
        K_.validate();
        if (K_.width != cfg_.render_width || K_.height != cfg_.render_height) {
            throw DimensionMismatchError("dimension mismatch: sequence is " + std::to_string(K_.width) + "x" + std::to_string(K_.height) +
                                         ", config render size is " + std::to_string(cfg_.render_width) + "x" +
                                         std::to_string(cfg_.render_height));
        }
    }

    FrameReport process_frame(const Frame& frame)
    {
        if (!frame.rgb.same_size(K_.width, K_.height) || !frame.depth.same_size(K_.width, K_.height)) {
            throw DimensionMismatchError("dimension mismatch: frame " + std::to_string(frame.index));
        }
        frame.pose.validate(1e-6);
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        FrameReport rep;
        rep.frame = frame.index;
        auto stage = [&](Stage s, auto&& body) {
            const auto start = clock::now();
            body();
            const auto end = clock::now();
            rep.stages.push_back(s);
            rep.stage_start_ms.push_back(std::chrono::duration<double, std::milli>(start - t0).count());
            rep.stage_ms.push_back(std::chrono::duration<double, std::milli>(end - start).count());
        };

        bool any_depth = false;
        for (const float d : frame.depth) {
            any_depth = any_depth || (valid_depth(d) && d <= K_.far);
        }

        stage(Stage::integrate, [&] {
            if (any_depth) {
                rep.integration = tsdf_.integrate_frame(frame.depth, frame.pose, K_);
            }
        });
        stage(Stage::prune, [&] {
            if (any_depth && cfg_.enable_prune) {
                rep.prune = prune_gaussians(map_, tsdf_, frame, K_, cfg_.tau_p, cfg_.raycast_stride);
                opt_.retain(map_);
            }
        });
        stage(Stage::detect, [&] {
            const RenderOutput& prior = raster_.render(map_, frame.pose, K_);
            const auto leaves = build_quadtree(frame.rgb, {cfg_.quadtree_min_side, cfg_.quadtree_max_side, cfg_.quadtree_mse});
            DetectSettings ds;
            ds.tau_s = cfg_.tau_s;
            ds.appearance = cfg_.enable_avd;
            ds.geometry = cfg_.enable_gvd && any_depth;
            const VariationReport vr = detect_variations(leaves, prior, frame, tsdf_, K_, ds);
            InitSettings is;
            is.gradient_scale = cfg_.init_gradient_scale;
            const InitResult init = initialize_gaussians(leaves, vr.selected, frame, tsdf_, K_, is);
            map_.insert(init.gaussians);
            rep.leaves = leaves.size();
            rep.avd = vr.appearance.size();
            rep.gvd = vr.geometry.size();
            rep.fill = vr.coverage.size();
            rep.initialized = init.gaussians.size();
            rep.init_skipped = init.skipped;
        });
        stage(Stage::optimize, [&] {
            const int gap = pool_.last_keyframe_index < 0 ? -1 : frame.index - pool_.last_keyframe_index;
            rep.keyframe_reason = keyframe_reason(pool_.empty(), rep.pruned(), rep.initialized, gap, cfg_);
            rep.keyframe = !rep.keyframe_reason.empty();
            if (map_.empty()) {
                if (rep.keyframe) {
                    promote(frame);
                }
                return;
            }
            std::vector<const Frame*> frames{&frame};
            int iterations = cfg_.iters_regular;
            if (rep.keyframe) {
                for (const std::size_t i : select_keyframe_batch(pool_.size(), cfg_.keyframe_batch, rng_)) {
                    frames.push_back(&pool_.frames[i]);
                }
                iterations = cfg_.iters_keyframe;
            }
            rep.loss = optimize(map_, frames, K_, iterations, opt_, raster_, cfg_.lambda_d);
            if (rep.keyframe) {
                promote(frame);
            }
        });
        rep.gaussians = map_.size();
        return rep;
    }

    /// Renders the current map; the result stays valid until the next call.
    const RenderOutput& render(const Pose& pose)
    {
        return eval_raster_.render(map_, pose, K_);
    }

    const GaussianMap& gaussians() const
    {
        return map_;
    }

    const TsdfMap& tsdf() const
    {
        return tsdf_;
    }

    const KeyframePool& pool() const
    {
        return pool_;
    }

    const MapConfig& config() const
    {
        return cfg_;
    }

    const Intrinsics& intrinsics() const
    {
        return K_;
    }

    static TsdfParams tsdf_params(const MapConfig& c)
    {
        TsdfParams p;
        p.voxel_size = c.voxel_size;
        p.truncation = c.truncation;
        p.epsilon_f = c.epsilon_f;
        p.change_weight = c.change_weight;
        p.floater_threshold = c.floater_threshold;
        return p;
    }

    static AdamSettings adam_settings(const MapConfig& c, const SequenceInfo& info)
    {
        AdamSettings a;
        a.lr_mean = c.lr_mean;
        a.lr_rotation = c.lr_rotation;
        a.lr_log_scale = c.lr_log_scale;
        a.lr_opacity = c.lr_opacity;
        a.lr_sh_dc = c.lr_sh_dc;
        a.lr_sh_rest = c.lr_sh_rest;
        a.scene_extent = 0.5 * (info.bbox_hi - info.bbox_lo).norm();
        return a;
    }

    static RenderSettings render_settings(const MapConfig& c)
    {
        RenderSettings r;
        r.sh_degree = c.sh_degree;
        return r;
    }

    private:
    void promote(const Frame& frame)
    {
        pool_.frames.push_back(frame);
        pool_.last_keyframe_index = frame.index;
    }

    MapConfig cfg_;
    Intrinsics K_;
    TsdfMap tsdf_;
    GaussianMap map_;
    AdamOptimizer opt_;
    Rasterizer raster_;
    Rasterizer eval_raster_{raster_.settings()};
    KeyframePool pool_;
    std::mt19937_64 rng_;
};

} // namespace vgm

#endif // VGM_PIPELINE_MAPPER_HPP
