#ifndef VGM_DATASET_SCENE_HPP
#define VGM_DATASET_SCENE_HPP

#include <climits>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgm/core/frame.hpp"

namespace vgm {

enum class ShapeKind { sphere, box, plane };

/// Analytic shape with a Lambertian albedo, present for frames [begin, end).
struct ScenePrimitive {
    ShapeKind kind = ShapeKind::sphere;
    Vec3 center = Vec3::Zero();       // sphere, box
    double radius = 0.0;              // sphere
    Vec3 half_extents = Vec3::Zero(); // axis-aligned box
    Vec3 normal = Vec3::UnitZ();      // plane: normal . x = offset
    double offset = 0.0;
    Vec3 albedo = Vec3::Constant(0.5);
    int begin = 0;
    int end = INT_MAX;

    bool alive(int frame) const
    {
        return frame >= begin && frame < end;
    }

    bool is_static() const
    {
        return begin <= 0 && end == INT_MAX;
    }
};

struct SceneLight {
    double ambient = 0.35;
    double intensity = 0.65;
    Vec3 direction = Vec3(0.4, 0.3, -1.0).normalized(); // direction the light travels
};

struct CameraWaypoint {
    int frame = 0;
    Vec3 eye = Vec3::Zero();
    Vec3 target = Vec3::UnitX();
};

/// Camera path: a circular orbit around `target`, or linear interpolation between waypoints.
struct Trajectory {
    bool orbit = true;
    Vec3 center = Vec3::Zero(); // orbit centre on the ground
    double radius = 1.0;
    double height = 0.7;
    Vec3 target = Vec3::Zero();
    int frames_per_revolution = 200;
    double phase = 0.0; // radians
    std::vector<CameraWaypoint> waypoints;

    Pose pose(int frame) const
    {
        if (orbit) {
            const double a = phase + 2.0 * M_PI * frame / frames_per_revolution;
            const Vec3 eye = center + Vec3(radius * std::cos(a), radius * std::sin(a), height);
            return look_at(eye, target);
        }
        if (waypoints.empty()) {
            throw std::invalid_argument("trajectory: no waypoints");
        }
        if (frame <= waypoints.front().frame) {
            return look_at(waypoints.front().eye, waypoints.front().target);
        }
        for (std::size_t i = 1; i < waypoints.size(); ++i) {
            const auto& a = waypoints[i - 1];
            const auto& b = waypoints[i];
            if (frame == b.frame) {
                return look_at(b.eye, b.target);
            }
            if (frame < b.frame) {
                const double t = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
                return look_at(a.eye + t * (b.eye - a.eye), a.target + t * (b.target - a.target));
            }
        }
        return look_at(waypoints.back().eye, waypoints.back().target);
    }
};

struct SceneSpec {
    Intrinsics intrinsics;
    int frames = 0;
    std::optional<int> change_frame;
    double depth_noise = 0.0; // metres, standard deviation
    std::uint64_t noise_seed = 1;
    Vec3 bbox_lo = Vec3::Zero();
    Vec3 bbox_hi = Vec3::Ones();
    SceneLight light;
    std::vector<ScenePrimitive> primitives;
    Trajectory trajectory;

    void validate() const
    {
        intrinsics.validate();
        if (frames <= 0) {
            throw std::invalid_argument("scene: frames must be positive");
        }
        if (change_frame && (*change_frame <= 0 || *change_frame >= frames)) {
            throw std::invalid_argument("scene: change_frame out of range");
        }
        if (!(depth_noise >= 0.0)) {
            throw std::invalid_argument("scene: depth_noise must be >= 0");
        }
        if (!((bbox_hi - bbox_lo).minCoeff() > 0.0)) {
            throw std::invalid_argument("scene: empty bounding box");
        }
        bool any_static = false;
        for (const auto& p : primitives) {
            any_static = any_static || p.is_static();
            if (p.begin >= p.end) {
                throw std::invalid_argument("scene: primitive with empty lifetime");
            }
            if ((p.kind == ShapeKind::sphere && !(p.radius > 0.0)) || (p.kind == ShapeKind::box && !(p.half_extents.minCoeff() > 0.0)) ||
                (p.kind == ShapeKind::plane && !(p.normal.norm() > 0.0))) {
                throw std::invalid_argument("scene: degenerate primitive");
            }
        }
        if (!any_static) {
            throw std::invalid_argument("scene: needs at least one static primitive");
        }
        if (trajectory.orbit ? trajectory.frames_per_revolution <= 0 : trajectory.waypoints.empty()) {
            throw std::invalid_argument("scene: bad trajectory");
        }
        for (std::size_t i = 1; i < trajectory.waypoints.size(); ++i) {
            if (trajectory.waypoints[i].frame <= trajectory.waypoints[i - 1].frame) {
                throw std::invalid_argument("scene: waypoint frames must increase");
            }
        }
    }
};

struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    int primitive = -1;
    Vec3 normal = Vec3::Zero();
};

/// Ray parameter of the nearest intersection with o + t d for t > 0; d need not be unit length.
inline std::optional<RayHit> intersect(const ScenePrimitive& p, const Vec3& o, const Vec3& d)
{
    constexpr double eps = 1e-9;
    RayHit h;
    switch (p.kind) {
    case ShapeKind::sphere: {
        const Vec3 oc = o - p.center;
        const double a = d.squaredNorm(), b = oc.dot(d), c = oc.squaredNorm() - p.radius * p.radius;
        const double disc = b * b - a * c;
        if (disc < 0.0) {
            return std::nullopt;
        }
        const double root = std::sqrt(disc);
        double t = (-b - root) / a;
        if (t <= eps) {
            t = (-b + root) / a;
        }
        if (t <= eps) {
            return std::nullopt;
        }
        h.t = t;
        h.normal = (o + t * d - p.center) / p.radius;
        return h;
    }
    case ShapeKind::box: {
        const Vec3 lo = p.center - p.half_extents, hi = p.center + p.half_extents;
        double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
        int axis0 = -1, axis1 = -1;
        for (int k = 0; k < 3; ++k) {
            if (d[k] == 0.0) {
                if (o[k] < lo[k] || o[k] > hi[k]) {
                    return std::nullopt;
                }
                continue;
            }
            double a = (lo[k] - o[k]) / d[k], b = (hi[k] - o[k]) / d[k];
            if (a > b) {
                std::swap(a, b);
            }
            if (a > t0) {
                t0 = a;
                axis0 = k;
            }
            if (b < t1) {
                t1 = b;
                axis1 = k;
            }
        }
        if (t0 > t1 || t1 <= eps) {
            return std::nullopt;
        }
        const bool inside = t0 <= eps;
        h.t = inside ? t1 : t0;
        const int axis = inside ? axis1 : axis0;
        h.normal = Vec3::Zero();
        h.normal[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
        return h;
    }
    case ShapeKind::plane: {
        const double denom = p.normal.dot(d);
        if (denom == 0.0) {
            return std::nullopt;
        }
        const double t = (p.offset - p.normal.dot(o)) / denom;
        if (t <= eps) {
            return std::nullopt;
        }
        h.t = t;
        h.normal = p.normal.normalized();
        return h;
    }
    }
    return std::nullopt;
}

/// Nearest hit among primitives alive at `frame`.
inline RayHit trace(const SceneSpec& spec, int frame, const Vec3& o, const Vec3& d)
{
    RayHit best;
    for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        const auto& p = spec.primitives[i];
        if (!p.alive(frame)) {
            continue;
        }
        const auto h = intersect(p, o, d);
        if (h && h->t < best.t) {
            best = *h;
            best.primitive = static_cast<int>(i);
        }
    }
    return best;
}

/// One rendered view: shaded colour, exact z-depth (0 on a miss) and the hit primitive per pixel.
struct SceneView {
    RgbImage rgb;
    DepthImage depth;
    Image<int> primitive;
};

inline SceneView render_view(const SceneSpec& spec, int frame, const Pose& pose)
{
    const Intrinsics& K = spec.intrinsics;
    SceneView v{RgbImage(K.width, K.height, Rgb::Zero()), DepthImage(K.width, K.height, 0.0f), Image<int>(K.width, K.height, -1)};
    const Vec3 to_light = -spec.light.direction.normalized();
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            // Camera-frame ray with unit z, so the ray parameter is the z-depth.
            const Vec3 d = pose.rotation * K.ray(x, y);
            const RayHit h = trace(spec, frame, pose.translation, d);
            if (h.primitive < 0) {
                continue;
            }
            Vec3 n = h.normal;
            if (n.dot(d) > 0.0) {
                n = -n;
            }
            const double shade = spec.light.ambient + spec.light.intensity * std::max(0.0, n.dot(to_light));
            const Vec3 c = (spec.primitives[h.primitive].albedo * shade).cwiseMin(1.0).cwiseMax(0.0);
            v.rgb(x, y) = c.cast<float>();
            v.depth(x, y) = static_cast<float>(h.t);
            v.primitive(x, y) = h.primitive;
        }
    }
    return v;
}

/// Pixels whose nearest primitive or depth differs from the frame-0 configuration seen from the same pose.
inline MaskImage change_mask(const SceneSpec& spec, const SceneView& view, const Pose& pose)
{
    const SceneView ref = render_view(spec, 0, pose);
    MaskImage mask(view.depth.width(), view.depth.height(), 0);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (ref.primitive[p] != view.primitive[p] || ref.depth[p] != view.depth[p]) {
            mask[p] = 255;
        }
    }
    return mask;
}

struct SyntheticFrame {
    Frame frame;
    MaskImage mask;
};

/// Ray-traced frame `i` of the scene. Depth noise, if any, is added after the mask is computed and
/// is seeded per frame so frames can be produced in any order.
inline SyntheticFrame render_synthetic_frame(const SceneSpec& spec, int i)
{
    if (i < 0 || i >= spec.frames) {
        throw std::out_of_range("scene: frame index out of range");
    }
    const Pose pose = spec.trajectory.pose(i);
    SceneView view = render_view(spec, i, pose);
    SyntheticFrame out;
    out.mask = change_mask(spec, view, pose);
    if (spec.depth_noise > 0.0) {
        std::mt19937_64 rng(spec.noise_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i));
        std::normal_distribution<double> noise(0.0, spec.depth_noise);
        for (float& d : view.depth) {
            if (valid_depth(d)) {
                d = static_cast<float>(std::max(1e-3, d + noise(rng)));
            }
        }
    }
    out.frame.index = i;
    out.frame.timestamp = i / 30.0;
    out.frame.pose = pose;
    out.frame.rgb = std::move(view.rgb);
    out.frame.depth = std::move(view.depth);
    return out;
}

/// Desk-scale room with three semi-static changes at the midpoint: a box disappears, a sphere
/// coloured like the floor appears, and a second box moves.
inline SceneSpec default_desk_scene()
{
    SceneSpec s;
    s.intrinsics.fx = s.intrinsics.fy = 140.0;
    s.intrinsics.cx = 79.5;
    s.intrinsics.cy = 59.5;
    s.intrinsics.width = 160;
    s.intrinsics.height = 120;
    s.intrinsics.near = 0.1;
    s.intrinsics.far = 5.0;
    s.frames = 400;
    s.change_frame = 200;
    s.bbox_lo = Vec3(-1.6, -1.6, -0.1);
    s.bbox_hi = Vec3(1.6, 1.6, 1.5);

    auto plane = [](const Vec3& n, double off, const Vec3& albedo) {
        ScenePrimitive p;
        p.kind = ShapeKind::plane;
        p.normal = n;
        p.offset = off;
        p.albedo = albedo;
        return p;
    };
    auto box = [](const Vec3& c, const Vec3& h, const Vec3& albedo, int begin, int end) {
        ScenePrimitive p;
        p.kind = ShapeKind::box;
        p.center = c;
        p.half_extents = h;
        p.albedo = albedo;
        p.begin = begin;
        p.end = end;
        return p;
    };
    const Vec3 floor_albedo(0.75, 0.7, 0.6);
    s.primitives.push_back(plane(Vec3::UnitZ(), 0.0, floor_albedo));
    s.primitives.push_back(plane(Vec3::UnitX(), 1.5, Vec3(0.55, 0.65, 0.8)));
    s.primitives.push_back(plane(Vec3::UnitX(), -1.5, Vec3(0.8, 0.6, 0.55)));
    s.primitives.push_back(plane(Vec3::UnitY(), 1.5, Vec3(0.6, 0.75, 0.55)));
    s.primitives.push_back(plane(Vec3::UnitY(), -1.5, Vec3(0.7, 0.7, 0.72)));
    // Static furniture.
    s.primitives.push_back(box(Vec3(-0.35, 0.3, 0.1), Vec3(0.12, 0.1, 0.1), Vec3(0.3, 0.55, 0.3), 0, INT_MAX));
    // Removed at the change.
    s.primitives.push_back(box(Vec3(0.15, -0.2, 0.09), Vec3(0.1, 0.08, 0.09), Vec3(0.85, 0.2, 0.15), 0, 200));
    // Added at the change, close to the floor colour.
    ScenePrimitive sphere;
    sphere.kind = ShapeKind::sphere;
    sphere.center = Vec3(-0.15, -0.3, 0.1);
    sphere.radius = 0.1;
    sphere.albedo = floor_albedo;
    sphere.begin = 200;
    s.primitives.push_back(sphere);
    // Moved at the change.
    s.primitives.push_back(box(Vec3(0.3, 0.3, 0.07), Vec3(0.07, 0.07, 0.07), Vec3(0.2, 0.3, 0.85), 0, 200));
    s.primitives.push_back(box(Vec3(0.0, 0.1, 0.07), Vec3(0.07, 0.07, 0.07), Vec3(0.2, 0.3, 0.85), 200, INT_MAX));

    s.trajectory.orbit = true;
    s.trajectory.center = Vec3::Zero();
    s.trajectory.radius = 1.0;
    s.trajectory.height = 0.7;
    s.trajectory.target = Vec3(0.0, 0.0, 0.1);
    s.trajectory.frames_per_revolution = 200;
    return s;
}

/// The desk room with only its static content.
inline SceneSpec static_desk_scene(int frames = 200)
{
    SceneSpec s = default_desk_scene();
    std::vector<ScenePrimitive> kept;
    for (const auto& p : s.primitives) {
        if (p.is_static()) {
            kept.push_back(p);
        }
    }
    s.primitives = kept;
    s.frames = frames;
    s.change_frame.reset();
    return s;
}

// ---- JSON ----

namespace detail {

inline Vec3 vec3_from_json(const nlohmann::json& j, const char* what)
{
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument(std::string("scene json: ") + what + " must be a 3-vector");
    }
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline nlohmann::json vec3_to_json(const Vec3& v)
{
    return nlohmann::json::array({v.x(), v.y(), v.z()});
}

} // namespace detail

inline nlohmann::json scene_to_json(const SceneSpec& s)
{
    using nlohmann::json;
    const Intrinsics& K = s.intrinsics;
    json j;
    j["intrinsics"] = {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}, {"width", K.width}, {"height", K.height},
                       {"near", K.near}, {"far", K.far}};
    j["frames"] = s.frames;
    j["change_frame"] = s.change_frame ? json(*s.change_frame) : json(nullptr);
    j["depth_noise"] = s.depth_noise;
    j["noise_seed"] = s.noise_seed;
    j["bbox"] = {detail::vec3_to_json(s.bbox_lo), detail::vec3_to_json(s.bbox_hi)};
    j["light"] = {{"ambient", s.light.ambient}, {"intensity", s.light.intensity}, {"direction", detail::vec3_to_json(s.light.direction)}};
    json prims = json::array();
    for (const auto& p : s.primitives) {
        json q;
        switch (p.kind) {
        case ShapeKind::sphere:
            q = {{"type", "sphere"}, {"center", detail::vec3_to_json(p.center)}, {"radius", p.radius}};
            break;
        case ShapeKind::box:
            q = {{"type", "box"}, {"center", detail::vec3_to_json(p.center)}, {"half_extents", detail::vec3_to_json(p.half_extents)}};
            break;
        case ShapeKind::plane:
            q = {{"type", "plane"}, {"normal", detail::vec3_to_json(p.normal)}, {"offset", p.offset}};
            break;
        }
        q["albedo"] = detail::vec3_to_json(p.albedo);
        q["begin"] = p.begin;
        q["end"] = p.end == INT_MAX ? json(nullptr) : json(p.end);
        prims.push_back(q);
    }
    j["primitives"] = prims;
    const Trajectory& t = s.trajectory;
    if (t.orbit) {
        j["trajectory"] = {{"type", "orbit"}, {"center", detail::vec3_to_json(t.center)}, {"radius", t.radius}, {"height", t.height},
                           {"target", detail::vec3_to_json(t.target)}, {"frames_per_revolution", t.frames_per_revolution}, {"phase", t.phase}};
    }
    else {
        json pts = json::array();
        for (const auto& w : t.waypoints) {
            pts.push_back({{"frame", w.frame}, {"eye", detail::vec3_to_json(w.eye)}, {"target", detail::vec3_to_json(w.target)}});
        }
        j["trajectory"] = {{"type", "waypoints"}, {"points", pts}};
    }
    return j;
}

/// Parses a scene; missing optional fields keep their defaults, unknown shape or trajectory types are errors.
inline SceneSpec scene_from_json(const nlohmann::json& j)
{
    SceneSpec s;
    try {
        const auto& k = j.at("intrinsics");
        s.intrinsics.fx = k.at("fx").get<double>();
        s.intrinsics.fy = k.at("fy").get<double>();
        s.intrinsics.cx = k.at("cx").get<double>();
        s.intrinsics.cy = k.at("cy").get<double>();
        s.intrinsics.width = k.at("width").get<int>();
        s.intrinsics.height = k.at("height").get<int>();
        s.intrinsics.near = k.value("near", 0.1);
        s.intrinsics.far = k.value("far", 10.0);
        s.frames = j.at("frames").get<int>();
        if (j.contains("change_frame") && !j["change_frame"].is_null()) {
            s.change_frame = j["change_frame"].get<int>();
        }
        s.depth_noise = j.value("depth_noise", 0.0);
        s.noise_seed = j.value("noise_seed", std::uint64_t{1});
        s.bbox_lo = detail::vec3_from_json(j.at("bbox").at(0), "bbox");
        s.bbox_hi = detail::vec3_from_json(j.at("bbox").at(1), "bbox");
        if (j.contains("light")) {
            const auto& l = j["light"];
            s.light.ambient = l.value("ambient", s.light.ambient);
            s.light.intensity = l.value("intensity", s.light.intensity);
            if (l.contains("direction")) {
                s.light.direction = detail::vec3_from_json(l["direction"], "light.direction");
            }
        }
        for (const auto& q : j.at("primitives")) {
            ScenePrimitive p;
            const std::string type = q.at("type").get<std::string>();
            if (type == "sphere") {
                p.kind = ShapeKind::sphere;
                p.center = detail::vec3_from_json(q.at("center"), "center");
                p.radius = q.at("radius").get<double>();
            }
            else if (type == "box") {
                p.kind = ShapeKind::box;
                p.center = detail::vec3_from_json(q.at("center"), "center");
                p.half_extents = detail::vec3_from_json(q.at("half_extents"), "half_extents");
            }
            else if (type == "plane") {
                p.kind = ShapeKind::plane;
                p.normal = detail::vec3_from_json(q.at("normal"), "normal");
                p.offset = q.at("offset").get<double>();
            }
            else {
                throw std::invalid_argument("scene json: unknown primitive type '" + type + "'");
            }
            p.albedo = detail::vec3_from_json(q.at("albedo"), "albedo");
            p.begin = q.value("begin", 0);
            if (q.contains("end") && !q["end"].is_null()) {
                p.end = q["end"].get<int>();
            }
            s.primitives.push_back(p);
        }
        const auto& t = j.at("trajectory");
        const std::string type = t.at("type").get<std::string>();
        if (type == "orbit") {
            s.trajectory.orbit = true;
            s.trajectory.center = detail::vec3_from_json(t.at("center"), "trajectory.center");
            s.trajectory.radius = t.at("radius").get<double>();
            s.trajectory.height = t.at("height").get<double>();
            s.trajectory.target = detail::vec3_from_json(t.at("target"), "trajectory.target");
            s.trajectory.frames_per_revolution = t.at("frames_per_revolution").get<int>();
            s.trajectory.phase = t.value("phase", 0.0);
        }
        else if (type == "waypoints") {
            s.trajectory.orbit = false;
            for (const auto& w : t.at("points")) {
                s.trajectory.waypoints.push_back(
                    {w.at("frame").get<int>(), detail::vec3_from_json(w.at("eye"), "eye"), detail::vec3_from_json(w.at("target"), "target")});
            }
        }
        else {
            throw std::invalid_argument("scene json: unknown trajectory type '" + type + "'");
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("scene json: ") + e.what());
    }
    s.validate();
    return s;
}

} // namespace vgm

#endif // VGM_DATASET_SCENE_HPP
