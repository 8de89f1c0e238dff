#ifndef VGM_EVAL_RUN_EVAL_HPP
#define VGM_EVAL_RUN_EVAL_HPP

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vgm/dataset/sequence.hpp"
#include "vgm/eval/metrics.hpp"

namespace vgm {

struct EvalRow {
    int frame = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> changed_psnr;
    std::size_t changed_pixels = 0;
};

inline std::string eval_csv_header()
{
    return "frame,psnr,ssim,changed_psnr,changed_pixels";
}

inline std::string to_csv(const EvalRow& r)
{
    return std::to_string(r.frame) + ',' + format_fixed(r.psnr) + ',' + format_fixed(r.ssim) + ',' +
           (r.changed_psnr ? format_fixed(*r.changed_psnr) : std::string()) + ',' + std::to_string(r.changed_pixels);
}

/// Scores every renders/NNNNNN.png of a run directory against the matching ground-truth frame of `src`,
/// in frame order. Scores are computed on the stored 8-bit renders, so they can differ slightly from
/// the in-run metrics.
inline std::vector<EvalRow> evaluate_run(const std::string& run_dir, const FrameSource& src)
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(run_dir) / "renders";
    if (!fs::is_directory(dir)) {
        throw MissingFileError("missing file: " + dir.string());
    }
    std::vector<std::pair<int, fs::path>> renders;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string stem = e.path().stem().string();
        if (e.path().extension() != ".png" || stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
            continue;
        }
        renders.emplace_back(std::stoi(stem), e.path());
    }
    std::sort(renders.begin(), renders.end());
    std::vector<EvalRow> rows;
    for (const auto& [index, path] : renders) {
        if (index >= src.size()) {
            throw DimensionMismatchError("dimension mismatch: " + path.string() + " has no frame in a " + std::to_string(src.size()) +
                                         "-frame sequence");
        }
        const RgbImage img = png::read_rgb(path.string());
        const Frame gt = src.frame(index);
        if (!img.same_size(gt.rgb)) {
            throw DimensionMismatchError("dimension mismatch: " + path.string() + " is " + std::to_string(img.width()) + "x" +
                                         std::to_string(img.height()) + ", sequence is " + std::to_string(gt.rgb.width()) + "x" +
                                         std::to_string(gt.rgb.height()));
        }
        EvalRow r;
        r.frame = index;
        r.psnr = psnr(img, gt.rgb);
        r.ssim = mean_ssim(img, gt.rgb);
        if (const auto mask = src.mask(index)) {
            r.changed_pixels = mask_count(*mask);
            if (r.changed_pixels > 0) {
                r.changed_psnr = psnr(img, gt.rgb, &*mask);
            }
        }
        rows.push_back(r);
    }
    return rows;
}

} // namespace vgm

#endif // VGM_EVAL_RUN_EVAL_HPP
