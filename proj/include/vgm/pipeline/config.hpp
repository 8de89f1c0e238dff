#ifndef VGM_PIPELINE_CONFIG_HPP
#define VGM_PIPELINE_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "vgm/core/errors.hpp"

namespace vgm {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Every tunable of a mapping run. Serialized as "key = value" lines.
struct MapConfig {
    // TSDF
    double voxel_size = 0.01;
    double truncation = 0.04;
    double epsilon_f = 0.3;
    double change_weight = -5.0;
    double floater_threshold = 0.95;
    // variation-aware density control
    double tau_s = 0.6;
    double tau_p = 0.2;
    int raycast_stride = 1;
    int quadtree_min_side = 8;
    int quadtree_max_side = 64;
    double quadtree_mse = 4e-4;
    double init_gradient_scale = 1.0; // multiplies the per-meter TSDF gradient before it shapes initial scales
    bool enable_prune = true;
    bool enable_avd = true;
    bool enable_gvd = true;
    // keyframes and optimization
    int tau_k = 200;
    int keyframe_spacing = 10;
    int keyframe_batch = 4;
    int iters_keyframe = 10;
    int iters_regular = 3;
    double lambda_d = 0.5;
    double lr_mean = 1.6e-4;
    double lr_rotation = 1e-3;
    double lr_log_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 1.25e-4;
    int sh_degree = 3;
    // run
    std::uint64_t rng_seed = 0;
    int render_width = 160;
    int render_height = 120;

    template<typename Self, typename Fn>
    static void visit(Self& c, Fn&& fn)
    {
        fn("voxel_size", c.voxel_size);
        fn("truncation", c.truncation);
        fn("epsilon_f", c.epsilon_f);
        fn("change_weight", c.change_weight);
        fn("floater_threshold", c.floater_threshold);
        fn("tau_s", c.tau_s);
        fn("tau_p", c.tau_p);
        fn("raycast_stride", c.raycast_stride);
        fn("quadtree_min_side", c.quadtree_min_side);
        fn("quadtree_max_side", c.quadtree_max_side);
        fn("quadtree_mse", c.quadtree_mse);
        fn("init_gradient_scale", c.init_gradient_scale);
        fn("enable_prune", c.enable_prune);
        fn("enable_avd", c.enable_avd);
        fn("enable_gvd", c.enable_gvd);
        fn("tau_k", c.tau_k);
        fn("keyframe_spacing", c.keyframe_spacing);
        fn("keyframe_batch", c.keyframe_batch);
        fn("iters_keyframe", c.iters_keyframe);
        fn("iters_regular", c.iters_regular);
        fn("lambda_d", c.lambda_d);
        fn("lr_mean", c.lr_mean);
        fn("lr_rotation", c.lr_rotation);
        fn("lr_log_scale", c.lr_log_scale);
        fn("lr_opacity", c.lr_opacity);
        fn("lr_sh_dc", c.lr_sh_dc);
        fn("lr_sh_rest", c.lr_sh_rest);
        fn("sh_degree", c.sh_degree);
        fn("rng_seed", c.rng_seed);
        fn("render_width", c.render_width);
        fn("render_height", c.render_height);
    }

    void validate() const
    {
        const auto require = [](bool ok, const char* what) {
            if (!ok) {
                throw ConfigError(std::string("config: ") + what);
            }
        };
        require(voxel_size > 0.0, "voxel_size must be > 0");
        require(truncation >= voxel_size, "truncation must be >= voxel_size");
        require(epsilon_f > 0.0, "epsilon_f must be > 0");
        require(change_weight < 0.0, "change_weight must be < 0");
        require(floater_threshold > 0.0 && floater_threshold < 1.0, "floater_threshold must lie in (0, 1)");
        require(tau_s > 0.0 && tau_s < 1.0, "tau_s must lie in (0, 1)");
        require(tau_p > 0.0 && tau_p < 1.0, "tau_p must lie in (0, 1)");
        require(raycast_stride >= 1, "raycast_stride must be >= 1");
        require(quadtree_min_side >= 4 && quadtree_max_side >= quadtree_min_side, "need 4 <= quadtree_min_side <= quadtree_max_side");
        require(quadtree_mse >= 0.0, "quadtree_mse must be >= 0");
        require(tau_k >= 0, "tau_k must be >= 0");
        require(keyframe_spacing >= 1, "keyframe_spacing must be >= 1");
        require(keyframe_batch >= 0, "keyframe_batch must be >= 0");
        require(iters_keyframe >= 1 && iters_regular >= 1, "iteration counts must be >= 1");
        require(lambda_d >= 0.0, "lambda_d must be >= 0");
        require(sh_degree >= 0 && sh_degree <= 3, "sh_degree must lie in [0, 3]");
        require(render_width >= 8 && render_height >= 8, "render size must be at least 8x8");
    }
};

inline std::string to_text(const MapConfig& c)
{
    std::ostringstream os;
    os << std::setprecision(17);
    MapConfig::visit(c, [&](const char* key, const auto& v) { os << key << " = " << v << '\n'; });
    return os.str();
}

/// Applies one "key = value" assignment. Unknown keys and unparsable values are errors.
inline void set_config_value(MapConfig& c, const std::string& key, const std::string& value)
{
    bool found = false;
    MapConfig::visit(c, [&](const char* k, auto& field) {
        if (key != k) {
            return;
        }
        found = true;
        std::istringstream is(value);
        std::string rest;
        using T = std::decay_t<decltype(field)>;
        T parsed{};
        if constexpr (std::is_same_v<T, bool>) {
            std::string word;
            is >> word;
            if (word == "1" || word == "true") {
                parsed = true;
            }
            else if (word == "0" || word == "false") {
                parsed = false;
            }
            else {
                is.setstate(std::ios::failbit);
            }
        }
        else {
            is >> parsed;
        }
        if (!is || (is >> rest)) {
            throw ConfigError("config: bad value for " + key + ": '" + value + "'");
        }
        field = parsed;
    });
    if (!found) {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

inline MapConfig parse_config(const std::string& text, MapConfig c = {})
{
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
}

/// Reads a config file; keys it does not mention keep their value in `base`.
inline MapConfig load_config(const std::string& path, const MapConfig& base = {})
{
    std::ifstream is(path);
    if (!is) {
        throw MissingFileError("missing file: " + path);
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), base);
}

} // namespace vgm

#endif // VGM_PIPELINE_CONFIG_HPP
