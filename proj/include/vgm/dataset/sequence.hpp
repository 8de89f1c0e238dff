#ifndef VGM_DATASET_SEQUENCE_HPP
#define VGM_DATASET_SEQUENCE_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgm/core/errors.hpp"
#include "vgm/core/frame.hpp"
#include "vgm/core/png_io.hpp"
#include "vgm/dataset/scene.hpp"

namespace vgm {

struct SequenceInfo {
    Intrinsics intrinsics;
    double depth_scale = 5000.0;
    Vec3 bbox_lo = Vec3::Zero();
    Vec3 bbox_hi = Vec3::Ones();
    std::optional<int> change_frame;
};

/// Random-access RGB-D sequence with optional ground-truth change masks.
class FrameSource {
    public:
    virtual ~FrameSource() = default;
    virtual const SequenceInfo& info() const = 0;
    virtual int size() const = 0;
    virtual Frame frame(int i) const = 0;
    virtual std::optional<MaskImage> mask(int i) const = 0;
};

/// What a frame looks like after a write/read cycle: 8-bit colour, depth on the 1/depth_scale grid,
/// pose through its text quaternion.
inline Frame quantized(Frame f, double depth_scale)
{
    for (auto& c : f.rgb) {
        for (int k = 0; k < 3; ++k) {
            c[k] = png::from_byte(png::to_byte(c[k]));
        }
    }
    for (float& d : f.depth) {
        if (!valid_depth(d)) {
            d = 0.0f;
            continue;
        }
        const double q = std::min(65535.0, std::max(0.0, std::round(static_cast<double>(d) * depth_scale)));
        d = static_cast<float>(q / depth_scale);
    }
    const Eigen::Quaterniond q = f.pose.quaternion();
    f.pose = Pose::from_quaternion(f.pose.translation, q.x(), q.y(), q.z(), q.w());
    return f;
}

/// Synthetic scene served as if it had been written to disk and read back.
class SyntheticSource : public FrameSource {
    public:
    explicit SyntheticSource(SceneSpec spec, double depth_scale = 5000.0) : spec_(std::move(spec))
    {
        spec_.validate();
        info_.intrinsics = spec_.intrinsics;
        info_.depth_scale = depth_scale;
        info_.bbox_lo = spec_.bbox_lo;
        info_.bbox_hi = spec_.bbox_hi;
        info_.change_frame = spec_.change_frame;
    }

    const SequenceInfo& info() const override
    {
        return info_;
    }

    int size() const override
    {
        return spec_.frames;
    }

    Frame frame(int i) const override
    {
        return quantized(render_synthetic_frame(spec_, i).frame, info_.depth_scale);
    }

    std::optional<MaskImage> mask(int i) const override
    {
        return render_synthetic_frame(spec_, i).mask;
    }

    const SceneSpec& spec() const
    {
        return spec_;
    }

    private:
    SceneSpec spec_;
    SequenceInfo info_;
};

struct ManifestEntry {
    double timestamp = 0.0;
    std::string rgb;
    std::string depth;
    Pose pose;
};

/// Text manifest:
///   vgscene v1
///   intrinsics fx fy cx cy w h depth_scale
///   bbox x0 y0 z0 x1 y1 z1
///   [range near far] [change_frame N] [masks DIR]
///   t rgb_path depth_path tx ty tz qx qy qz qw    (one line per frame)
/// Paths are relative to the manifest's directory; a mask shares its frame's RGB file name.
struct SequenceManifest {
    SequenceInfo info;
    std::optional<std::string> mask_dir;
    std::vector<ManifestEntry> entries;
};

inline void write_manifest(const std::string& path, const SequenceManifest& m)
{
    std::ofstream os(path);
    if (!os) {
        throw MissingFileError("cannot open for writing: " + path);
    }
    os << std::setprecision(17);
    const Intrinsics& K = m.info.intrinsics;
    os << "vgscene v1\n";
    os << "intrinsics " << K.fx << ' ' << K.fy << ' ' << K.cx << ' ' << K.cy << ' ' << K.width << ' ' << K.height << ' '
       << static_cast<long long>(m.info.depth_scale) << '\n';
    os << "bbox " << m.info.bbox_lo.x() << ' ' << m.info.bbox_lo.y() << ' ' << m.info.bbox_lo.z() << ' ' << m.info.bbox_hi.x() << ' '
       << m.info.bbox_hi.y() << ' ' << m.info.bbox_hi.z() << '\n';
    os << "range " << K.near << ' ' << K.far << '\n';
    if (m.info.change_frame) {
        os << "change_frame " << *m.info.change_frame << '\n';
    }
    if (m.mask_dir) {
        os << "masks " << *m.mask_dir << '\n';
    }
    for (const auto& e : m.entries) {
        const Eigen::Quaterniond q = e.pose.quaternion();
        os << e.timestamp << ' ' << e.rgb << ' ' << e.depth << ' ' << e.pose.translation.x() << ' ' << e.pose.translation.y() << ' '
           << e.pose.translation.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
    }
    if (!os) {
        throw std::runtime_error("write failed: " + path);
    }
}

inline SequenceManifest read_manifest(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw MissingFileError("missing file: " + path);
    }
    SequenceManifest m;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
        throw ManifestFormatError(path + ":" + std::to_string(lineno) + ": " + what + ": '" + line + "'");
    };
    bool header = false, have_intrinsics = false, have_bbox = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream ls(line);
        if (!header) {
            std::string a, b;
            if (!(ls >> a >> b) || a != "vgscene" || b != "v1") {
                fail("expected header 'vgscene v1'");
            }
            header = true;
            continue;
        }
        std::string key;
        ls >> key;
        std::string rest;
        if (key == "intrinsics") {
            Intrinsics& K = m.info.intrinsics;
            long long scale = 0;
            if (!(ls >> K.fx >> K.fy >> K.cx >> K.cy >> K.width >> K.height >> scale) || (ls >> rest) || scale <= 0) {
                fail("malformed intrinsics line");
            }
            m.info.depth_scale = static_cast<double>(scale);
            have_intrinsics = true;
        }
        else if (key == "bbox") {
            Vec3& lo = m.info.bbox_lo;
            Vec3& hi = m.info.bbox_hi;
            if (!(ls >> lo.x() >> lo.y() >> lo.z() >> hi.x() >> hi.y() >> hi.z()) || (ls >> rest) || !((hi - lo).minCoeff() > 0.0)) {
                fail("malformed bbox line");
            }
            have_bbox = true;
        }
        else if (key == "range") {
            if (!(ls >> m.info.intrinsics.near >> m.info.intrinsics.far) || (ls >> rest)) {
                fail("malformed range line");
            }
        }
        else if (key == "change_frame") {
            int c = 0;
            if (!(ls >> c) || (ls >> rest)) {
                fail("malformed change_frame line");
            }
            m.info.change_frame = c;
        }
        else if (key == "masks") {
            std::string dir;
            if (!(ls >> dir) || (ls >> rest)) {
                fail("malformed masks line");
            }
            m.mask_dir = dir;
        }
        else {
            std::istringstream fs(line);
            ManifestEntry e;
            double tx, ty, tz, qx, qy, qz, qw;
            if (!(fs >> e.timestamp >> e.rgb >> e.depth >> tx >> ty >> tz >> qx >> qy >> qz >> qw) || (fs >> rest)) {
                fail("malformed pose line");
            }
            try {
                e.pose = Pose::from_quaternion(Vec3(tx, ty, tz), qx, qy, qz, qw);
            }
            catch (const std::invalid_argument&) {
                fail("malformed pose line");
            }
            if (!e.pose.translation.allFinite() || std::abs(Eigen::Vector4d(qx, qy, qz, qw).norm() - 1.0) > 1e-3) {
                fail("malformed pose line");
            }
            if (!m.entries.empty() && !(e.timestamp > m.entries.back().timestamp)) {
                fail("timestamps must increase");
            }
            m.entries.push_back(e);
        }
    }
    if (!header) {
        throw ManifestFormatError(path + ": empty manifest");
    }
    if (!have_intrinsics || !have_bbox) {
        throw ManifestFormatError(path + ": missing intrinsics or bbox line");
    }
    try {
        m.info.intrinsics.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ManifestFormatError(path + ": " + e.what());
    }
    if (m.info.change_frame && (*m.info.change_frame < 0 || *m.info.change_frame >= static_cast<int>(m.entries.size()))) {
        throw ManifestFormatError(path + ": change_frame out of range");
    }
    return m;
}

/// Sequence on disk described by a manifest; images are decoded on demand.
class DiskSequence : public FrameSource {
    public:
    explicit DiskSequence(const std::string& manifest_path) : manifest_(read_manifest(manifest_path)), root_(std::filesystem::path(manifest_path).parent_path())
    {
        for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
            for (const auto& rel : {manifest_.entries[i].rgb, manifest_.entries[i].depth}) {
                if (!std::filesystem::exists(root_ / rel)) {
                    throw MissingFileError("missing file: " + (root_ / rel).string() + " (frame " + std::to_string(i) + ")");
                }
            }
        }
    }

    const SequenceInfo& info() const override
    {
        return manifest_.info;
    }

    int size() const override
    {
        return static_cast<int>(manifest_.entries.size());
    }

    const SequenceManifest& manifest() const
    {
        return manifest_;
    }

    Frame frame(int i) const override
    {
        const ManifestEntry& e = entry(i);
        Frame f;
        f.index = i;
        f.timestamp = e.timestamp;
        f.pose = e.pose;
        f.rgb = png::read_rgb(existing(e.rgb, i));
        f.depth = png::read_depth(existing(e.depth, i), manifest_.info.depth_scale);
        check_size(f.rgb.width(), f.rgb.height(), e.rgb, i);
        check_size(f.depth.width(), f.depth.height(), e.depth, i);
        return f;
    }

    std::optional<MaskImage> mask(int i) const override
    {
        if (!manifest_.mask_dir) {
            return std::nullopt;
        }
        const std::string rel = (std::filesystem::path(*manifest_.mask_dir) / std::filesystem::path(entry(i).rgb).filename()).string();
        MaskImage m = png::read_mask(existing(rel, i));
        check_size(m.width(), m.height(), rel, i);
        return m;
    }

    private:
    const ManifestEntry& entry(int i) const
    {
        if (i < 0 || i >= size()) {
            throw std::out_of_range("sequence: frame index out of range");
        }
        return manifest_.entries[i];
    }

    std::string existing(const std::string& rel, int i) const
    {
        const auto p = root_ / rel;
        if (!std::filesystem::exists(p)) {
            throw MissingFileError("missing file: " + p.string() + " (frame " + std::to_string(i) + ")");
        }
        return p.string();
    }

    void check_size(int w, int h, const std::string& rel, int i) const
    {
        const Intrinsics& K = manifest_.info.intrinsics;
        if (w != K.width || h != K.height) {
            std::ostringstream os;
            os << "dimension mismatch: " << (root_ / rel).string() << " is " << w << "x" << h << ", expected " << K.width << "x" << K.height
               << " (frame " << i << ")";
            throw DimensionMismatchError(os.str());
        }
    }

    SequenceManifest manifest_;
    std::filesystem::path root_;
};

/// Writes every frame of `src` (and its masks, when present) under `dir` with a manifest.txt.
inline void write_sequence(const FrameSource& src, const std::string& dir)
{
    namespace fs = std::filesystem;
    const fs::path root(dir);
    fs::create_directories(root / "rgb");
    fs::create_directories(root / "depth");
    SequenceManifest m;
    m.info = src.info();
    const bool masks = src.size() > 0 && src.mask(0).has_value();
    if (masks) {
        fs::create_directories(root / "mask");
        m.mask_dir = "mask";
    }
    for (int i = 0; i < src.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.png", i);
        const Frame f = src.frame(i);
        png::write_rgb((root / "rgb" / name).string(), f.rgb);
        png::write_depth((root / "depth" / name).string(), f.depth, m.info.depth_scale);
        if (masks) {
            png::write_mask((root / "mask" / name).string(), *src.mask(i));
        }
        m.entries.push_back({f.timestamp, std::string("rgb/") + name, std::string("depth/") + name, f.pose});
    }
    write_manifest((root / "manifest.txt").string(), m);
}

/// Reads a scene description written by scene_to_json.
inline SceneSpec load_scene_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw MissingFileError("missing file: " + path);
    }
    nlohmann::json j;
    try {
        is >> j;
    }
    catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return scene_from_json(j);
}

/// Opens a sequence from a manifest file, a directory holding manifest.txt, or a scene .json that is
/// rendered on the fly.
inline std::unique_ptr<FrameSource> open_sequence(const std::string& path)
{
    namespace fs = std::filesystem;
    if (fs::path(path).extension() == ".json") {
        return std::make_unique<SyntheticSource>(load_scene_file(path));
    }
    if (fs::is_directory(path)) {
        return std::make_unique<DiskSequence>((fs::path(path) / "manifest.txt").string());
    }
    return std::make_unique<DiskSequence>(path);
}

} // namespace vgm

#endif // VGM_DATASET_SEQUENCE_HPP
