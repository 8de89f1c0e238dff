#ifndef VGM_PIPELINE_RUN_HPP
#define VGM_PIPELINE_RUN_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vgm/eval/metrics.hpp"
#include "vgm/pipeline/mapper.hpp"

namespace vgm {

inline constexpr int metrics_schema_version = 1;

/// Quality of the map rendered at a frame's pose right after the frame was processed.
struct MetricRow {
    int frame = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> changed_psnr; // absent without change-mask pixels
    std::size_t changed_pixels = 0;
    std::size_t gaussians = 0;
    std::size_t pruned_deleted = 0;
    std::size_t pruned_floaters = 0;
    std::size_t initialized = 0;
    std::size_t avd = 0;
    std::size_t gvd = 0;
    std::size_t fill = 0;
    bool keyframe = false;
    std::string keyframe_reason;
    double final_loss = 0.0;
};

inline std::string metrics_csv_header()
{
    return "frame,psnr,ssim,changed_psnr,changed_pixels,gaussians,pruned_deleted,pruned_floaters,initialized,avd,gvd,fill,keyframe,"
           "keyframe_reason,final_loss";
}

inline std::string to_csv(const MetricRow& r)
{
    std::string s = std::to_string(r.frame) + ',' + format_fixed(r.psnr) + ',' + format_fixed(r.ssim) + ',' +
                    (r.changed_psnr ? format_fixed(*r.changed_psnr) : std::string()) + ',' + std::to_string(r.changed_pixels) + ',' +
                    std::to_string(r.gaussians) + ',' + std::to_string(r.pruned_deleted) + ',' + std::to_string(r.pruned_floaters) + ',' +
                    std::to_string(r.initialized) + ',' + std::to_string(r.avd) + ',' + std::to_string(r.gvd) + ',' + std::to_string(r.fill) +
                    ',' + (r.keyframe ? "1" : "0") + ',' + r.keyframe_reason + ',' + format_fixed(r.final_loss);
    return s;
}

inline MetricRow evaluate_frame(Mapper& mapper, const Frame& frame, const std::optional<MaskImage>& mask, const FrameReport& rep)
{
    MetricRow row;
    row.frame = frame.index;
    const RenderOutput& out = mapper.render(frame.pose);
    const RgbImage rendered = to_rgb(out.color);
    row.psnr = psnr(rendered, frame.rgb);
    row.ssim = mean_ssim(rendered, frame.rgb);
    if (mask) {
        row.changed_pixels = mask_count(*mask);
        if (row.changed_pixels > 0) {
            row.changed_psnr = psnr(rendered, frame.rgb, &*mask);
        }
    }
    row.gaussians = rep.gaussians;
    row.pruned_deleted = rep.prune.deleted_gaussians;
    row.pruned_floaters = rep.prune.floater_gaussians;
    row.initialized = rep.initialized;
    row.avd = rep.avd;
    row.gvd = rep.gvd;
    row.fill = rep.fill;
    row.keyframe = rep.keyframe;
    row.keyframe_reason = rep.keyframe_reason;
    row.final_loss = rep.loss.empty() ? 0.0 : rep.loss.back();
    return row;
}

struct RunOptions {
    std::optional<std::string> out_dir; // nothing is written without one
    int render_every = 10;              // 0 disables render dumps
    /// Called after each frame with the live mapper.
    std::function<void(Mapper&, const Frame&, const FrameReport&, const MetricRow&)> on_frame;
};

struct RunSummary {
    std::vector<MetricRow> rows;
    double wall_seconds = 0.0;
};

/// Mean of `field` over rows with index >= first_frame; rows where it is absent are skipped.
inline std::optional<double> window_mean(const std::vector<MetricRow>& rows, int first_frame,
                                         const std::function<std::optional<double>(const MetricRow&)>& field)
{
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.frame < first_frame) {
            continue;
        }
        if (const auto v = field(r)) {
            s += *v;
            ++n;
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return s / n;
}

/// Runs the mapper over every frame of `src`. With an output directory, writes config.txt,
/// metrics.csv, timing.csv, renders/NNNNNN.png every `render_every` frames (and the last frame) and the
/// final gaussians.bin / tsdf.bin snapshots.
inline RunSummary run_sequence(const FrameSource& src, const MapConfig& cfg, const RunOptions& opts = {})
{
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    Mapper mapper(cfg, src.info());
    std::ofstream metrics, timing;
    fs::path root;
    if (opts.out_dir) {
        root = *opts.out_dir;
        fs::create_directories(root / "renders");
        std::ofstream(root / "config.txt") << to_text(cfg);
        metrics.open(root / "metrics.csv");
        timing.open(root / "timing.csv");
        if (!metrics || !timing) {
            throw std::runtime_error("cannot write to " + root.string());
        }
        metrics << "# vgm metrics v" << metrics_schema_version << '\n' << metrics_csv_header() << '\n';
        timing << "frame,integrate_ms,prune_ms,detect_ms,optimize_ms\n";
    }
    RunSummary summary;
    for (int i = 0; i < src.size(); ++i) {
        const Frame frame = src.frame(i);
        const auto mask = src.mask(i);
        const FrameReport rep = mapper.process_frame(frame);
        const MetricRow row = evaluate_frame(mapper, frame, mask, rep);
        summary.rows.push_back(row);
        if (opts.out_dir) {
            metrics << to_csv(row) << '\n';
            timing << i;
            for (const double ms : rep.stage_ms) {
                timing << ',' << format_fixed(ms);
            }
            timing << '\n';
            if ((opts.render_every > 0 && i % opts.render_every == 0) || i + 1 == src.size()) {
                char name[32];
                std::snprintf(name, sizeof(name), "%06d.png", i);
                png::write_rgb((root / "renders" / name).string(), to_rgb(mapper.render(frame.pose).color));
            }
        }
        if (opts.on_frame) {
            opts.on_frame(mapper, frame, rep, row);
        }
    }
    if (opts.out_dir) {
        mapper.gaussians().save((root / "gaussians.bin").string());
        mapper.tsdf().save((root / "tsdf.bin").string());
        if (!metrics || !timing) {
            throw std::runtime_error("write failed under " + root.string());
        }
    }
    summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return summary;
}

} // namespace vgm

#endif // VGM_PIPELINE_RUN_HPP
