#ifndef VGM_TSDF_TSDF_MAP_HPP
#define VGM_TSDF_TSDF_MAP_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgm/core/errors.hpp"
#include "vgm/core/geometry.hpp"
#include "vgm/core/image.hpp"
#include "vgm/tsdf/morton.hpp"
#include "vgm/tsdf/octree.hpp"

namespace vgm {

/// Truncated signed distance F in [-1, 1] and fusion weight W. W == 0 marks an unallocated cell.
struct TsdfVoxel {
    float f = 1.0f;
    float w = 0.0f;

    bool allocated() const
    {
        return w >= 1.0f;
    }

    bool operator==(const TsdfVoxel&) const = default;
};

struct TsdfParams {
    double voxel_size = 0.01;
    double truncation = 0.04;
    double epsilon_f = 0.3;
    double change_weight = -5.0;
    double floater_threshold = 0.95;
};

struct IntegrationReport {
    std::size_t allocated = 0;
    std::size_t updated = 0;
    std::size_t changed = 0;
};

/// Voxels found along the observed free-space segment of each ray.
struct RaycastResult {
    std::vector<MortonCode> deleted;
    std::vector<MortonCode> floaters;
};

/// Truncation used by the fusion rule: max(-1, min(1, x / mu)).
inline double truncate_sdf(double sdf, double mu)
{
    return std::max(-1.0, std::min(1.0, sdf / mu));
}

/// Applies one observation F_t to a voxel with the variation-aware weight rule.
/// Returns the weight W_t that was used.
inline double fuse_voxel(TsdfVoxel& v, double f_t, const TsdfParams& params)
{
    if (!v.allocated()) {
        v.f = static_cast<float>(f_t);
        v.w = 1.0f;
        return 1.0;
    }
    const double f = v.f;
    const double w = v.w;
    const double w_t = std::abs(f_t - f) < params.epsilon_f ? 1.0 : params.change_weight;
    const double abs_w_t = std::abs(w_t);
    v.f = static_cast<float>((abs_w_t * f_t + w * f) / (abs_w_t + w));
    v.w = static_cast<float>(std::max(1.0, w + w_t));
    return w_t;
}

/// Number of samples z_t = near + t * s with z_t < depth - s.
inline int ray_sample_count(double near, double voxel_size, double depth)
{
    const double span = (depth - voxel_size - near) / voxel_size;
    if (!(span > 0.0)) {
        return 0;
    }
    return static_cast<int>(std::ceil(span - 1e-9));
}

struct TsdfBlock {
    static constexpr int edge = 8;
    static constexpr int volume = edge * edge * edge;

    std::array<TsdfVoxel, volume> voxels{};

    static int local_index(int x, int y, int z)
    {
        return x + edge * (y + edge * z);
    }

    TsdfVoxel& at(const Eigen::Vector3i& local)
    {
        return voxels[local_index(local.x(), local.y(), local.z())];
    }

    const TsdfVoxel& at(const Eigen::Vector3i& local) const
    {
        return voxels[local_index(local.x(), local.y(), local.z())];
    }
};

/// Sparse TSDF voxel map organised as an octree of 8^3 blocks and addressed by Morton code.
class TsdfMap {
    public:
    using Octree = SparseOctree<TsdfBlock, TsdfBlock::edge>;

    TsdfMap(const Vec3& origin, int size_voxels, const TsdfParams& params) : params_(params), origin_(origin), octree_(size_voxels)
    {
        if (!(params.voxel_size > 0.0) || !(params.truncation > 0.0) || !(params.epsilon_f > 0.0)) {
            throw std::invalid_argument("tsdf: voxel size, truncation and epsilon_F must be positive");
        }
    }

    /// Map whose grid covers the axis-aligned box [lo, hi].
    static TsdfMap from_bounds(const Vec3& lo, const Vec3& hi, const TsdfParams& params)
    {
        const Vec3 extent = hi - lo;
        if (!(extent.minCoeff() > 0.0)) {
            throw std::invalid_argument("tsdf: empty bounding box");
        }
        const int size = static_cast<int>(std::ceil(extent.maxCoeff() / params.voxel_size));
        return TsdfMap(lo, std::max(size, 1), params);
    }

    const TsdfParams& params() const
    {
        return params_;
    }

    double voxel_size() const
    {
        return params_.voxel_size;
    }

    const Vec3& origin() const
    {
        return origin_;
    }

    int size() const
    {
        return octree_.size();
    }

    const Octree& octree() const
    {
        return octree_;
    }

    std::optional<Eigen::Vector3i> voxel_index(const Vec3& p) const
    {
        const Vec3 g = ((p - origin_) / params_.voxel_size).array().floor();
        const double limit = octree_.size();
        if (!(g.minCoeff() >= 0.0) || !(g.maxCoeff() < limit)) {
            return std::nullopt;
        }
        return g.cast<int>();
    }

    Vec3 voxel_center(const Eigen::Vector3i& idx) const
    {
        return origin_ + params_.voxel_size * (idx.cast<double>() + Vec3::Constant(0.5));
    }

    std::optional<MortonCode> morton_of(const Vec3& p) const
    {
        const auto idx = voxel_index(p);
        if (!idx) {
            return std::nullopt;
        }
        return morton::encode(*idx);
    }

    std::optional<TsdfVoxel> voxel(const Eigen::Vector3i& idx) const
    {
        const TsdfBlock* block = octree_.find(idx);
        if (!block) {
            return std::nullopt;
        }
        const TsdfVoxel& v = block->at(idx - Octree::block_origin(idx));
        if (!v.allocated()) {
            return std::nullopt;
        }
        return v;
    }

    /// Voxel containing a world point; absent if unallocated.
    std::optional<TsdfVoxel> query(const Vec3& p) const
    {
        const auto idx = voxel_index(p);
        if (!idx) {
            return std::nullopt;
        }
        return voxel(*idx);
    }

    /// Central difference of F over the six face neighbours, per meter.
    std::optional<Vec3> gradient(const Vec3& p) const
    {
        const auto idx = voxel_index(p);
        if (!idx) {
            return std::nullopt;
        }
        Vec3 g;
        for (int axis = 0; axis < 3; ++axis) {
            Eigen::Vector3i step = Eigen::Vector3i::Zero();
            step[axis] = 1;
            const auto plus = voxel(*idx + step);
            const auto minus = voxel(*idx - step);
            if (!plus || !minus) {
                return std::nullopt;
            }
            g[axis] = (static_cast<double>(plus->f) - static_cast<double>(minus->f)) / (2.0 * params_.voxel_size);
        }
        return g;
    }

    /// Direct write access for tests and map loading. Allocates the containing block.
    void set_voxel(const Eigen::Vector3i& idx, const TsdfVoxel& v)
    {
        TsdfBlock& block = octree_.allocate(idx);
        block.at(idx - Octree::block_origin(idx)) = v;
    }

    std::size_t allocated_voxel_count() const
    {
        std::size_t n = 0;
        octree_.for_each_block([&](const Eigen::Vector3i&, const TsdfBlock& b) {
            for (const auto& v : b.voxels) {
                n += v.allocated() ? 1 : 0;
            }
        });
        return n;
    }

    /// Visits allocated voxels in Morton order: fn(code, index, voxel).
    template<typename Fn>
    void for_each_voxel(Fn&& fn) const
    {
        const auto& order = local_morton_order();
        octree_.for_each_block([&](const Eigen::Vector3i& origin, const TsdfBlock& b) {
            for (const auto& local : order) {
                const TsdfVoxel& v = b.at(local);
                if (v.allocated()) {
                    const Eigen::Vector3i idx = origin + local;
                    fn(morton::encode(idx), idx, v);
                }
            }
        });
    }

    /// Fuses one depth frame.
    ///
    /// Every voxel whose center projects into the image onto a valid depth sample is visited:
    /// unallocated voxels are allocated when their signed distance lies in [-mu, mu];
    /// allocated voxels are fused unless they lie more than mu behind the surface.
    IntegrationReport integrate_frame(const DepthImage& depth, const Pose& pose, const Intrinsics& K)
    {
        if (!depth.same_size(K.width, K.height)) {
            throw std::invalid_argument("tsdf integrate: depth image size does not match intrinsics");
        }
        const double mu = params_.truncation;
        const Mat3 rot_t = pose.rotation.transpose();
        IntegrationReport report;

        auto frustum_rect = [&](const Eigen::Vector3i& node_origin, int node_size, Eigen::Vector4i& rect, double& zmin, double& zmax) {
            const Vec3 lo = voxel_center(node_origin);
            const Vec3 hi = voxel_center(node_origin + Eigen::Vector3i::Constant(node_size - 1));
            double umin = std::numeric_limits<double>::infinity(), umax = -umin;
            double vmin = umin, vmax = -umin;
            zmin = umin;
            zmax = -umin;
            bool clipped = false;
            for (int c = 0; c < 8; ++c) {
                const Vec3 corner((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(), (c & 4) ? hi.z() : lo.z());
                const Vec3 pc = rot_t * (corner - pose.translation);
                zmin = std::min(zmin, pc.z());
                zmax = std::max(zmax, pc.z());
                if (!(pc.z() > K.near)) {
                    clipped = true;
                    continue;
                }
                const double u = K.fx * pc.x() / pc.z() + K.cx;
                const double v = K.fy * pc.y() / pc.z() + K.cy;
                umin = std::min(umin, u);
                umax = std::max(umax, u);
                vmin = std::min(vmin, v);
                vmax = std::max(vmax, v);
            }
            // Slack absorbs rounding differences between corner and per-voxel projections.
            constexpr double slack = 1e-6;
            if (!(zmax > K.near)) {
                return false;
            }
            if (clipped) {
                rect = Eigen::Vector4i(0, 0, K.width - 1, K.height - 1);
                return true;
            }
            rect = Eigen::Vector4i(std::max(0, pixel_index(umin - slack)), std::max(0, pixel_index(vmin - slack)),
                                   std::min(K.width - 1, pixel_index(umax + slack)), std::min(K.height - 1, pixel_index(vmax + slack)));
            return rect[0] <= rect[2] && rect[1] <= rect[3];
        };

        // Allocated blocks: hierarchical frustum culling over the allocated part of the tree.
        auto node_test = [&](const Eigen::Vector3i& node_origin, int node_size, bool allocated) {
            if (!allocated) {
                return false;
            }
            Eigen::Vector4i rect;
            double zmin, zmax;
            return frustum_rect(node_origin, node_size, rect, zmin, zmax);
        };
        std::vector<Eigen::Vector3i> candidates;
        octree_.traverse(node_test, [&](const Eigen::Vector3i& block_origin, TsdfBlock* block) {
            if (block) {
                candidates.push_back(block_origin);
            }
        });

        // Unallocated blocks that may hold a voxel within mu of an observed surface. Such a voxel's
        // centre lies in its pixel's footprint with |z - D| <= mu, so it is within `reach` of a
        // sample on that pixel's central ray; blocks of the samples are dilated to cover it.
        const double s = params_.voxel_size;
        const int edge = TsdfBlock::edge;
        double max_depth = 0.0, max_ray = 0.0;
        for (int y = 0; y < K.height; ++y) {
            for (int x = 0; x < K.width; ++x) {
                if (usable_depth(depth(x, y), K)) {
                    max_depth = std::max(max_depth, static_cast<double>(depth(x, y)));
                    max_ray = std::max(max_ray, K.ray(x, y).norm());
                }
            }
        }
        const double footprint = (max_depth + mu) * 0.5 * std::hypot(1.0 / K.fx, 1.0 / K.fy);
        const double reach = footprint + 0.5 * s * max_ray;
        const int dilate = static_cast<int>(std::ceil(reach / (edge * s)));
        const std::int64_t blocks = octree_.size() / edge;
        // Block coordinates are offset by `dilate` so that blocks just outside the grid stay non-negative.
        const std::int64_t span = blocks + 2 * dilate;
        std::vector<std::int64_t> hit;
        for (int y = 0; y < K.height; ++y) {
            for (int x = 0; x < K.width; ++x) {
                const float d = depth(x, y);
                if (!usable_depth(d, K)) {
                    continue;
                }
                const Vec3 dir = pose.rotation * K.ray(x, y);
                const int steps = static_cast<int>(std::ceil(2.0 * mu / s));
                for (int k = 0; k <= steps; ++k) {
                    const double z = std::min(static_cast<double>(d) + mu, static_cast<double>(d) - mu + k * s);
                    const Vec3 b = (((pose.translation + z * dir - origin_) / s).array().floor() / edge).floor() + dilate;
                    if ((b.array() < 0.0).any() || (b.array() >= static_cast<double>(span)).any()) {
                        continue;
                    }
                    const std::int64_t key = (static_cast<std::int64_t>(b.z()) * span + static_cast<std::int64_t>(b.y())) * span + static_cast<std::int64_t>(b.x());
                    if (hit.empty() || hit.back() != key) {
                        hit.push_back(key);
                    }
                }
            }
        }
        std::sort(hit.begin(), hit.end());
        hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
        std::vector<std::int64_t> seeds;
        for (const std::int64_t key : hit) {
            const std::int64_t bx = key % span - dilate, by = (key / span) % span - dilate, bz = key / (span * span) - dilate;
            for (std::int64_t dz = -dilate; dz <= dilate; ++dz) {
                for (std::int64_t dy = -dilate; dy <= dilate; ++dy) {
                    for (std::int64_t dx = -dilate; dx <= dilate; ++dx) {
                        const std::int64_t x = bx + dx, y = by + dy, z = bz + dz;
                        if (x >= 0 && y >= 0 && z >= 0 && x < blocks && y < blocks && z < blocks) {
                            seeds.push_back((z * blocks + y) * blocks + x);
                        }
                    }
                }
            }
        }
        std::sort(seeds.begin(), seeds.end());
        seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
        for (const std::int64_t key : seeds) {
            const Eigen::Vector3i block_origin(static_cast<int>(key % blocks) * edge, static_cast<int>((key / blocks) % blocks) * edge,
                                               static_cast<int>(key / (blocks * blocks)) * edge);
            if (!octree_.find(block_origin)) {
                candidates.push_back(block_origin);
            }
        }

        for (const Eigen::Vector3i& block_origin : candidates) {
            TsdfBlock* block = octree_.find(block_origin);
            TsdfBlock scratch;
            TsdfBlock& target = block ? *block : scratch;
            bool touched = false;
            for (int z = 0; z < TsdfBlock::edge; ++z) {
                for (int y = 0; y < TsdfBlock::edge; ++y) {
                    for (int x = 0; x < TsdfBlock::edge; ++x) {
                        const Eigen::Vector3i idx = block_origin + Eigen::Vector3i(x, y, z);
                        const Vec3 p = voxel_center(idx);
                        const auto proj = project(p, pose, K);
                        if (!proj) {
                            continue;
                        }
                        const int px = pixel_index(proj->pixel.u);
                        const int py = pixel_index(proj->pixel.v);
                        if (!K.contains(px, py)) {
                            continue;
                        }
                        const float d = depth(px, py);
                        if (!usable_depth(d, K)) {
                            continue;
                        }
                        const double sdf = static_cast<double>(d) - (pose.translation - p).norm() / K.ray(proj->pixel.u, proj->pixel.v).norm();
                        TsdfVoxel& v = target.voxels[TsdfBlock::local_index(x, y, z)];
                        if (v.allocated()) {
                            if (sdf < -mu) {
                                continue;
                            }
                            const double w_t = fuse_voxel(v, truncate_sdf(sdf, mu), params_);
                            ++report.updated;
                            report.changed += w_t < 0.0 ? 1 : 0;
                        }
                        else if (std::abs(sdf) <= mu) {
                            fuse_voxel(v, truncate_sdf(sdf, mu), params_);
                            ++report.allocated;
                            touched = true;
                        }
                    }
                }
            }
            if (!block && touched) {
                octree_.allocate(block_origin) = scratch;
            }
        }
        return report;
    }

    /// Walks z_t = near + t * s for every `stride`-th pixel while z_t < D[u] - s and collects the
    /// Morton codes of allocated voxels with F < tau_p (deleted) or F > floater threshold.
    RaycastResult raycast_changed(const DepthImage& depth, const Pose& pose, const Intrinsics& K, double tau_p, int stride = 1) const
    {
        if (!(tau_p > 0.0 && tau_p < 1.0)) {
            throw std::invalid_argument("raycast: tau_p must lie in (0, 1)");
        }
        if (stride < 1) {
            throw std::invalid_argument("raycast: stride must be >= 1");
        }
        if (!depth.same_size(K.width, K.height)) {
            throw std::invalid_argument("raycast: depth image size does not match intrinsics");
        }
        RaycastResult out;
        const double s = params_.voxel_size;
        const float floater = static_cast<float>(params_.floater_threshold);
        const TsdfBlock* cached = nullptr;
        Eigen::Vector3i cached_origin = Eigen::Vector3i::Constant(-1);
        for (int y = 0; y < K.height; y += stride) {
            for (int x = 0; x < K.width; x += stride) {
                const float d = depth(x, y);
                if (!usable_depth(d, K)) {
                    continue;
                }
                const Vec3 dir = pose.rotation * K.ray(x, y);
                const int n = ray_sample_count(K.near, s, d);
                for (int t = 0; t < n; ++t) {
                    const double z = K.near + t * s;
                    const auto idx = voxel_index(pose.translation + z * dir);
                    if (!idx) {
                        continue;
                    }
                    const Eigen::Vector3i origin = Octree::block_origin(*idx);
                    if (origin != cached_origin) {
                        cached = octree_.find(*idx);
                        cached_origin = origin;
                    }
                    if (!cached) {
                        continue;
                    }
                    const TsdfVoxel& v = cached->at(*idx - origin);
                    if (!v.allocated()) {
                        continue;
                    }
                    if (v.f < tau_p) {
                        out.deleted.push_back(morton::encode(*idx));
                    }
                    else if (v.f > floater) {
                        out.floaters.push_back(morton::encode(*idx));
                    }
                }
            }
        }
        for (auto* codes : {&out.deleted, &out.floaters}) {
            std::sort(codes->begin(), codes->end());
            codes->erase(std::unique(codes->begin(), codes->end()), codes->end());
        }
        return out;
    }

    /// Snapshot: 32-byte header ("VGTSDF01", s, mu, origin xyz as f32, u32 record count), then
    /// (u64 Morton code, f32 F, f32 W) records in Morton order. Little-endian.
    void save(std::ostream& os) const
    {
        std::vector<char> records;
        std::uint32_t count = 0;
        for_each_voxel([&](MortonCode code, const Eigen::Vector3i&, const TsdfVoxel& v) {
            char rec[16];
            put_le(rec, code);
            put_le(rec + 8, v.f);
            put_le(rec + 12, v.w);
            records.insert(records.end(), rec, rec + 16);
            ++count;
        });
        char header[32] = {};
        std::memcpy(header, magic, 8);
        put_le(header + 8, static_cast<float>(params_.voxel_size));
        put_le(header + 12, static_cast<float>(params_.truncation));
        put_le(header + 16, static_cast<float>(origin_.x()));
        put_le(header + 20, static_cast<float>(origin_.y()));
        put_le(header + 24, static_cast<float>(origin_.z()));
        put_le(header + 28, count);
        os.write(header, 32);
        os.write(records.data(), static_cast<std::streamsize>(records.size()));
        if (!os) {
            throw std::runtime_error("tsdf save: write failed");
        }
    }

    void save(const std::string& path) const
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) {
            throw std::runtime_error("cannot open for writing: " + path);
        }
        save(os);
    }

    /// Parameters other than voxel size and truncation are taken from `params`.
    static TsdfMap load(std::istream& is, TsdfParams params = {})
    {
        char header[32];
        if (!is.read(header, 32) || std::memcmp(header, magic, 8) != 0) {
            throw std::runtime_error("tsdf load: bad header");
        }
        params.voxel_size = get_le<float>(header + 8);
        params.truncation = get_le<float>(header + 12);
        const Vec3 origin(get_le<float>(header + 16), get_le<float>(header + 20), get_le<float>(header + 24));
        const auto count = get_le<std::uint32_t>(header + 28);
        std::vector<std::pair<Eigen::Vector3i, TsdfVoxel>> voxels;
        voxels.reserve(count);
        int extent = 1;
        for (std::uint32_t i = 0; i < count; ++i) {
            char rec[16];
            if (!is.read(rec, 16)) {
                throw std::runtime_error("tsdf load: truncated record stream");
            }
            const Eigen::Vector3i idx = morton::decode(get_le<std::uint64_t>(rec));
            const TsdfVoxel v{get_le<float>(rec + 8), get_le<float>(rec + 12)};
            if (!v.allocated() || !(std::abs(v.f) <= 1.0f)) {
                throw std::runtime_error("tsdf load: invalid voxel record");
            }
            extent = std::max(extent, idx.maxCoeff() + 1);
            voxels.emplace_back(idx, v);
        }
        TsdfMap map(origin, extent, params);
        for (const auto& [idx, v] : voxels) {
            map.set_voxel(idx, v);
        }
        return map;
    }

    static TsdfMap load(const std::string& path, TsdfParams params = {})
    {
        std::ifstream is(path, std::ios::binary);
        if (!is) {
            throw MissingFileError("missing file: " + path);
        }
        return load(is, params);
    }

    private:
    static constexpr char magic[9] = "VGTSDF01";

    static bool usable_depth(float d, const Intrinsics& K)
    {
        return valid_depth(d) && d <= K.far;
    }

    static const std::array<Eigen::Vector3i, TsdfBlock::volume>& local_morton_order()
    {
        static const auto order = [] {
            std::array<Eigen::Vector3i, TsdfBlock::volume> o;
            for (int i = 0; i < TsdfBlock::volume; ++i) {
                o[i] = morton::decode(static_cast<MortonCode>(i));
            }
            return o;
        }();
        return order;
    }

    template<typename T>
    static void put_le(char* dst, T value)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes, bytes + sizeof(T));
        }
        std::memcpy(dst, bytes, sizeof(T));
    }

    template<typename T>
    static T get_le(const char* src)
    {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, src, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes, bytes + sizeof(T));
        }
        T value;
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }

    TsdfParams params_;
    Vec3 origin_;
    Octree octree_;
};

} // namespace vgm

#endif // VGM_TSDF_TSDF_MAP_HPP
