#ifndef VGM_GAUSSIAN_GAUSSIAN_MAP_HPP
#define VGM_GAUSSIAN_GAUSSIAN_MAP_HPP

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "vgm/core/errors.hpp"
#include "vgm/gaussian/primitive.hpp"

namespace vgm {

/// Live Gaussian primitives in insertion order, with a Morton-code index over their birth voxels.
/// Ids are assigned on insertion and never reused.
class GaussianMap {
    public:
    std::size_t size() const
    {
        return prims_.size();
    }

    bool empty() const
    {
        return prims_.empty();
    }

    const GaussianPrimitive& operator[](std::size_t i) const
    {
        return prims_[i];
    }

    GaussianPrimitive& operator[](std::size_t i)
    {
        return prims_[i];
    }

    GaussianId id(std::size_t i) const
    {
        return ids_[i];
    }

    const std::vector<GaussianPrimitive>& primitives() const
    {
        return prims_;
    }

    const std::vector<GaussianId>& ids() const
    {
        return ids_;
    }

    GaussianId next_id() const
    {
        return next_id_;
    }

    GaussianId insert(const GaussianPrimitive& g)
    {
        const GaussianId id = next_id_++;
        prims_.push_back(g);
        ids_.push_back(id);
        index_.emplace(g.birth_code, id);
        return id;
    }

    std::vector<GaussianId> insert(const std::vector<GaussianPrimitive>& gs)
    {
        std::vector<GaussianId> out;
        out.reserve(gs.size());
        for (const auto& g : gs) {
            out.push_back(insert(g));
        }
        return out;
    }

    /// Ids of live primitives born in voxel `code`.
    std::vector<GaussianId> born_in(MortonCode code) const
    {
        std::vector<GaussianId> out;
        const auto [lo, hi] = index_.equal_range(code);
        for (auto it = lo; it != hi; ++it) {
            out.push_back(it->second);
        }
        return out;
    }

    /// Removes every primitive whose birth code is in `codes`. Returns the number removed.
    template<typename Range>
    std::size_t remove_by_morton(const Range& codes)
    {
        std::unordered_set<GaussianId> doomed;
        for (const MortonCode code : codes) {
            const auto [lo, hi] = index_.equal_range(code);
            for (auto it = lo; it != hi; ++it) {
                doomed.insert(it->second);
            }
            index_.erase(lo, hi);
        }
        if (doomed.empty()) {
            return 0;
        }
        std::size_t out = 0;
        for (std::size_t i = 0; i < prims_.size(); ++i) {
            if (doomed.count(ids_[i])) {
                continue;
            }
            if (out != i) {
                prims_[out] = std::move(prims_[i]);
                ids_[out] = ids_[i];
            }
            ++out;
        }
        const std::size_t removed = prims_.size() - out;
        prims_.resize(out);
        ids_.resize(out);
        return removed;
    }

    std::size_t remove_by_morton(std::initializer_list<MortonCode> codes)
    {
        return remove_by_morton(std::vector<MortonCode>(codes));
    }

    std::size_t index_size() const
    {
        return index_.size();
    }

    /// Snapshot: "VGGS0001", then one 248-byte record per primitive: mean(3), quaternion(4), log_scale(3),
    /// opacity_logit, 48 SH values as f32, birth code u64, birth frame u32. Little-endian.
    void save(std::ostream& os) const
    {
        os.write(magic, 8);
        std::vector<char> rec(record_size);
        for (const auto& g : prims_) {
            const ParamVector p = pack(g);
            char* dst = rec.data();
            for (double v : p) {
                put_le(dst, static_cast<float>(v));
                dst += 4;
            }
            put_le(dst, static_cast<std::uint64_t>(g.birth_code));
            put_le(dst + 8, g.birth_frame);
            os.write(rec.data(), record_size);
        }
        if (!os) {
            throw std::runtime_error("gaussian map save: write failed");
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

    static GaussianMap load(std::istream& is)
    {
        char header[8];
        if (!is.read(header, 8) || std::memcmp(header, magic, 8) != 0) {
            throw std::runtime_error("gaussian map load: bad header");
        }
        GaussianMap map;
        std::vector<char> rec(record_size);
        while (true) {
            is.read(rec.data(), record_size);
            const auto got = is.gcount();
            if (got == 0) {
                break;
            }
            if (got != record_size) {
                throw std::runtime_error("gaussian map load: truncated record");
            }
            ParamVector p{};
            const char* src = rec.data();
            for (double& v : p) {
                v = get_le<float>(src);
                src += 4;
            }
            GaussianPrimitive g;
            unpack(p, g);
            g.birth_code = get_le<std::uint64_t>(src);
            g.birth_frame = get_le<std::uint32_t>(src + 8);
            map.insert(g);
        }
        return map;
    }

    static GaussianMap load(const std::string& path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is) {
            throw MissingFileError("missing file: " + path);
        }
        return load(is);
    }

    private:
    static constexpr char magic[9] = "VGGS0001";
    static constexpr std::streamsize record_size = 4 * param::count + 8 + 4;

    template<typename T>
    static void put_le(char* dst, T value)
    {
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

    std::vector<GaussianPrimitive> prims_;
    std::vector<GaussianId> ids_;
    std::multimap<MortonCode, GaussianId> index_;
    GaussianId next_id_ = 0;
};

} // namespace vgm

#endif // VGM_GAUSSIAN_GAUSSIAN_MAP_HPP
