#ifndef VGM_PIPELINE_ABLATION_HPP
#define VGM_PIPELINE_ABLATION_HPP

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "vgm/pipeline/run.hpp"

namespace vgm {

/// The full configuration and one variant per disabled component, all sharing `base`'s budget.
inline std::vector<std::pair<std::string, MapConfig>> ablation_configs(const MapConfig& base)
{
    MapConfig full = base;
    full.enable_prune = full.enable_avd = full.enable_gvd = true;
    MapConfig no_prune = full, no_avd = full, no_gvd = full;
    no_prune.enable_prune = false;
    no_avd.enable_avd = false;
    no_gvd.enable_gvd = false;
    return {{"full", full}, {"no_prune", no_prune}, {"no_avd", no_avd}, {"no_gvd", no_gvd}};
}

/// Every component off: what remains is coverage filling plus optimization.
inline MapConfig baseline_config(MapConfig c)
{
    c.enable_prune = c.enable_avd = c.enable_gvd = false;
    return c;
}

/// Means over the final `window` frames of a run.
struct RunScore {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> changed_psnr;
    std::size_t gaussians = 0;
    double wall_seconds = 0.0;
};

inline RunScore score_run(const std::string& name, const RunSummary& s, int window = 50)
{
    RunScore r;
    r.name = name;
    if (s.rows.empty()) {
        return r;
    }
    const int first = s.rows.back().frame + 1 - window;
    r.psnr = window_mean(s.rows, first, [](const MetricRow& m) { return std::optional<double>(m.psnr); }).value_or(0.0);
    r.ssim = window_mean(s.rows, first, [](const MetricRow& m) { return std::optional<double>(m.ssim); }).value_or(0.0);
    r.changed_psnr = window_mean(s.rows, first, [](const MetricRow& m) { return m.changed_psnr; });
    r.gaussians = s.rows.back().gaussians;
    r.wall_seconds = s.wall_seconds;
    return r;
}

inline std::string score_csv_header()
{
    return "rank,config,changed_psnr,psnr,ssim,gaussians,wall_seconds";
}

/// Rows ranked by changed-region PSNR (runs without one last), ties by global PSNR.
inline std::string scores_to_csv(std::vector<RunScore> scores)
{
    std::stable_sort(scores.begin(), scores.end(), [](const RunScore& a, const RunScore& b) {
        const double ca = a.changed_psnr.value_or(-1e300), cb = b.changed_psnr.value_or(-1e300);
        return ca != cb ? ca > cb : a.psnr > b.psnr;
    });
    std::string out = score_csv_header() + '\n';
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const RunScore& s = scores[i];
        out += std::to_string(i + 1) + ',' + s.name + ',' + (s.changed_psnr ? format_fixed(*s.changed_psnr) : std::string()) + ',' +
               format_fixed(s.psnr) + ',' + format_fixed(s.ssim) + ',' + std::to_string(s.gaussians) + ',' + format_fixed(s.wall_seconds) + '\n';
    }
    return out;
}

} // namespace vgm

#endif // VGM_PIPELINE_ABLATION_HPP
