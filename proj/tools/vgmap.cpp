// Command-line front end: generate synthetic sequences, map them, score runs and compare ablations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vgm/eval/run_eval.hpp"
#include "vgm/pipeline/ablation.hpp"

namespace {

namespace fs = std::filesystem;

// Exit codes, one per failure class.
constexpr int exit_usage = 1;
constexpr int exit_config = 2;
constexpr int exit_missing = 3;
constexpr int exit_dimension = 4;
constexpr int exit_other = 5;

struct MapArgs {
    std::string config;
    std::string seq;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> disable;
    int render_every = 10;
};

vgm::MapConfig resolve_config(const MapArgs& a, const vgm::SequenceInfo& info)
{
    vgm::MapConfig c;
    c.render_width = info.intrinsics.width;
    c.render_height = info.intrinsics.height;
    if (!a.config.empty()) {
        c = vgm::load_config(a.config, c);
    }
    if (a.seed) {
        c.rng_seed = *a.seed;
    }
    for (const auto& d : a.disable) {
        if (d == "prune") {
            c.enable_prune = false;
        }
        else if (d == "avd") {
            c.enable_avd = false;
        }
        else if (d == "gvd") {
            c.enable_gvd = false;
        }
    }
    c.validate();
    return c;
}

void print_progress(const vgm::FrameReport& rep, const vgm::MetricRow& row, int total)
{
    if (row.frame % 10 != 0 && row.frame + 1 != total) {
        return;
    }
    std::printf("frame %4d/%d  psnr %6.2f  gaussians %6zu  pruned %4zu  init %4zu%s\n", row.frame + 1, total, row.psnr, row.gaussians, rep.pruned(),
                rep.initialized, rep.keyframe ? "  keyframe" : "");
    std::fflush(stdout);
}

vgm::RunSummary run_one(const vgm::FrameSource& src, const vgm::MapConfig& cfg, const std::string& out, int render_every, bool quiet)
{
    vgm::RunOptions o;
    o.out_dir = out;
    o.render_every = render_every;
    if (!quiet) {
        o.on_frame = [&](vgm::Mapper&, const vgm::Frame&, const vgm::FrameReport& rep, const vgm::MetricRow& row) {
            print_progress(rep, row, src.size());
        };
    }
    return vgm::run_sequence(src, cfg, o);
}

void print_score(const vgm::RunScore& s)
{
    std::printf("%-9s psnr %.3f  ssim %.4f  changed-region psnr %s  gaussians %zu  %.1f s\n", s.name.c_str(), s.psnr, s.ssim,
                s.changed_psnr ? vgm::format_fixed(*s.changed_psnr).c_str() : "n/a", s.gaussians, s.wall_seconds);
}

int cmd_map(const MapArgs& a, bool quiet)
{
    const auto src = vgm::open_sequence(a.seq);
    const vgm::MapConfig cfg = resolve_config(a, src->info());
    const vgm::RunSummary s = run_one(*src, cfg, a.out, a.render_every, quiet);
    print_score(vgm::score_run("run", s));
    return 0;
}

int cmd_eval(const std::string& seq, const std::string& run_dir)
{
    const auto src = vgm::open_sequence(seq);
    const auto rows = vgm::evaluate_run(run_dir, *src);
    const fs::path path = fs::path(run_dir) / "eval.csv";
    std::ofstream os(path);
    os << vgm::eval_csv_header() << '\n';
    double psnr = 0.0, changed = 0.0;
    int n_changed = 0;
    for (const auto& r : rows) {
        os << vgm::to_csv(r) << '\n';
        psnr += r.psnr;
        if (r.changed_psnr) {
            changed += *r.changed_psnr;
            ++n_changed;
        }
    }
    if (!os) {
        throw std::runtime_error("write failed: " + path.string());
    }
    std::printf("%zu renders  mean psnr %.3f", rows.size(), rows.empty() ? 0.0 : psnr / rows.size());
    if (n_changed > 0) {
        std::printf("  mean changed-region psnr %.3f over %d", changed / n_changed, n_changed);
    }
    std::printf("\n");
    return 0;
}

int cmd_ablate(const MapArgs& a, bool quiet)
{
    const auto src = vgm::open_sequence(a.seq);
    const vgm::MapConfig base = resolve_config(a, src->info());
    std::vector<vgm::RunScore> scores;
    for (const auto& [name, cfg] : vgm::ablation_configs(base)) {
        if (!quiet) {
            std::printf("== %s\n", name.c_str());
        }
        const vgm::RunSummary s = run_one(*src, cfg, (fs::path(a.out) / name).string(), a.render_every, quiet);
        scores.push_back(vgm::score_run(name, s));
        print_score(scores.back());
    }
    const fs::path path = fs::path(a.out) / "ablation.csv";
    std::ofstream os(path);
    os << vgm::scores_to_csv(scores);
    if (!os) {
        throw std::runtime_error("write failed: " + path.string());
    }
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
}

struct GenArgs {
    std::string scene;
    std::string out;
    bool static_scene = false;
    std::optional<int> frames;
    std::optional<double> noise;
    bool write_scene = false;
};

int cmd_gen(const GenArgs& g)
{
    vgm::SceneSpec spec;
    if (!g.scene.empty()) {
        spec = vgm::load_scene_file(g.scene);
    }
    else {
        spec = g.static_scene ? vgm::static_desk_scene() : vgm::default_desk_scene();
    }
    if (g.frames) {
        spec.frames = *g.frames;
        if (spec.change_frame && *spec.change_frame >= spec.frames) {
            spec.change_frame.reset();
        }
    }
    if (g.noise) {
        spec.depth_noise = *g.noise;
    }
    spec.validate();
    fs::create_directories(g.out);
    if (g.write_scene) {
        std::ofstream(fs::path(g.out) / "scene.json") << vgm::scene_to_json(spec).dump(2) << '\n';
    }
    vgm::write_sequence(vgm::SyntheticSource(spec), g.out);
    std::printf("wrote %d frames to %s\n", spec.frames, g.out.c_str());
    return 0;
}

void add_map_flags(CLI::App* cmd, MapArgs& a)
{
    cmd->add_option("--config", a.config, "key = value config file (defaults otherwise)");
    cmd->add_option("--seq", a.seq, "manifest, sequence directory or scene .json")->required();
    cmd->add_option("--out", a.out, "run directory")->required();
    cmd->add_option("--seed", a.seed, "overrides rng_seed");
    cmd->add_option("--disable", a.disable, "component to switch off")->check(CLI::IsMember({"prune", "avd", "gvd"}))->take_all();
    cmd->add_option("--render-every", a.render_every, "render dump cadence in frames, 0 for final frame only")->check(CLI::NonNegativeNumber);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Online Gaussian mapping for scenes that change between visits"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only print summaries");

    MapArgs map_args, ablate_args;
    auto* map = app.add_subcommand("map", "map a sequence into a run directory");
    add_map_flags(map, map_args);

    std::string eval_seq, eval_out;
    auto* eval = app.add_subcommand("eval", "score a run's renders against ground truth, writing eval.csv");
    eval->add_option("--seq", eval_seq, "sequence the run was made from")->required();
    eval->add_option("--out", eval_out, "run directory")->required();

    auto* ablate = app.add_subcommand("ablate", "run full, no-prune, no-avd and no-gvd, writing ablation.csv");
    add_map_flags(ablate, ablate_args);

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen", "write a synthetic sequence");
    gen->add_option("--scene", gen_args.scene, "scene .json (default: built-in desk scene)");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_flag("--static", gen_args.static_scene, "built-in desk scene without changes");
    gen->add_option("--frames", gen_args.frames, "frame count")->check(CLI::PositiveNumber);
    gen->add_option("--noise", gen_args.noise, "depth noise sigma in meters")->check(CLI::NonNegativeNumber);
    gen->add_flag("--write-scene", gen_args.write_scene, "also write scene.json");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        if (*map) {
            return cmd_map(map_args, quiet);
        }
        if (*eval) {
            return cmd_eval(eval_seq, eval_out);
        }
        if (*ablate) {
            return cmd_ablate(ablate_args, quiet);
        }
        return cmd_gen(gen_args);
    }
    catch (const vgm::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_config;
    }
    catch (const vgm::MissingFileError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_missing;
    }
    catch (const vgm::DimensionMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_dimension;
    }
    catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_other;
    }
}
