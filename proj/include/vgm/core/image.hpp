#ifndef VGM_CORE_IMAGE_HPP
#define VGM_CORE_IMAGE_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace vgm {

using Rgb = Eigen::Vector3f;

/// Dense row-major image.
template<typename T>
class Image {
    public:
    Image() = default;

    Image(int width, int height, const T& value = T{}) : width_(width), height_(height), data_(checked_size(width, height), value)
    {
    }

    int width() const
    {
        return width_;
    }

    int height() const
    {
        return height_;
    }

    std::size_t size() const
    {
        return data_.size();
    }

    bool empty() const
    {
        return data_.empty();
    }

    bool same_size(int w, int h) const
    {
        return width_ == w && height_ == h;
    }

    template<typename U>
    bool same_size(const Image<U>& other) const
    {
        return width_ == other.width() && height_ == other.height();
    }

    T& operator()(int x, int y)
    {
        assert(x >= 0 && y >= 0 && x < width_ && y < height_);
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    const T& operator()(int x, int y) const
    {
        assert(x >= 0 && y >= 0 && x < width_ && y < height_);
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    T& operator[](std::size_t i)
    {
        return data_[i];
    }

    const T& operator[](std::size_t i) const
    {
        return data_[i];
    }

    T* data()
    {
        return data_.data();
    }

    const T* data() const
    {
        return data_.data();
    }

    auto begin()
    {
        return data_.begin();
    }
    auto end()
    {
        return data_.end();
    }
    auto begin() const
    {
        return data_.begin();
    }
    auto end() const
    {
        return data_.end();
    }

    void fill(const T& value)
    {
        std::fill(data_.begin(), data_.end(), value);
    }

    bool operator==(const Image& other) const
    {
        return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
    }

    private:
    static std::size_t checked_size(int w, int h)
    {
        if (w < 0 || h < 0) {
            throw std::invalid_argument("image: negative dimensions");
        }
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using RgbImage = Image<Rgb>;
using DepthImage = Image<float>;
using MaskImage = Image<std::uint8_t>;

/// A depth sample is valid when it is positive and finite.
inline bool valid_depth(float d)
{
    return d > 0.0f && std::isfinite(d);
}

inline float luma(const Rgb& c)
{
    return 0.299f * c.x() + 0.587f * c.y() + 0.114f * c.z();
}

} // namespace vgm

#endif // VGM_CORE_IMAGE_HPP
