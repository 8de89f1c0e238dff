#ifndef VGM_VDC_QUADTREE_HPP
#define VGM_VDC_QUADTREE_HPP

#include <stdexcept>
#include <vector>

#include "vgm/core/geometry.hpp"
#include "vgm/core/image.hpp"

namespace vgm {

struct QuadtreeParams {
    int min_side = 8;
    int max_side = 64;
    double mse_threshold = 4e-4;
};

/// Square patch of a quadtree decomposition, clipped to the image.
struct QuadLeaf {
    int x0 = 0, y0 = 0;
    int side = 0;           // node side before clipping (power of two)
    int width = 0, height = 0; // clipped extent

    PixelCoord center() const
    {
        return {static_cast<double>(x0 + width / 2), static_cast<double>(y0 + height / 2)};
    }

    double half_side() const
    {
        return side / 2.0;
    }

    int pixel_count() const
    {
        return width * height;
    }
};

namespace detail {

/// Summed-area tables of the three channels and their squares.
class ChannelIntegrals {
    public:
    explicit ChannelIntegrals(const RgbImage& img) : w_(img.width()), h_(img.height()), sum_((w_ + 1) * (h_ + 1), Vec3::Zero()), sq_((w_ + 1) * (h_ + 1), Vec3::Zero())
    {
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                const Vec3 v = img(x, y).cast<double>();
                sum_[at(x + 1, y + 1)] = v + sum_[at(x, y + 1)] + sum_[at(x + 1, y)] - sum_[at(x, y)];
                sq_[at(x + 1, y + 1)] = v.cwiseProduct(v) + sq_[at(x, y + 1)] + sq_[at(x + 1, y)] - sq_[at(x, y)];
            }
        }
    }

    /// Mean over channels of the per-channel variance in [x0, x1) x [y0, y1).
    double mse(int x0, int y0, int x1, int y1) const
    {
        const double n = static_cast<double>(x1 - x0) * (y1 - y0);
        const Vec3 s = box(sum_, x0, y0, x1, y1);
        const Vec3 q = box(sq_, x0, y0, x1, y1);
        const Vec3 var = (q - s.cwiseProduct(s) / n) / n;
        return var.cwiseMax(0.0).mean();
    }

    private:
    std::size_t at(int x, int y) const
    {
        return static_cast<std::size_t>(y) * (w_ + 1) + x;
    }

    Vec3 box(const std::vector<Vec3>& t, int x0, int y0, int x1, int y1) const
    {
        return t[at(x1, y1)] - t[at(x0, y1)] - t[at(x1, y0)] + t[at(x0, y0)];
    }

    int w_, h_;
    std::vector<Vec3> sum_, sq_;
};

} // namespace detail

/// MSE-driven quadtree over the image padded to a power-of-two square. Nodes larger than max_side
/// always split; smaller nodes split while their colour MSE exceeds the threshold and they are
/// larger than min_side. Leaves are listed in depth-first (Z) order.
inline std::vector<QuadLeaf> build_quadtree(const RgbImage& img, const QuadtreeParams& params = {})
{
    if (params.min_side < 4 || params.max_side < params.min_side) {
        throw std::invalid_argument("quadtree: need 4 <= min_side <= max_side");
    }
    if ((params.min_side & (params.min_side - 1)) || (params.max_side & (params.max_side - 1))) {
        throw std::invalid_argument("quadtree: sides must be powers of two");
    }
    std::vector<QuadLeaf> leaves;
    if (img.empty()) {
        return leaves;
    }
    const detail::ChannelIntegrals integrals(img);
    int root = params.min_side;
    while (root < img.width() || root < img.height()) {
        root *= 2;
    }
    struct Node {
        int x, y, side;
    };
    std::vector<Node> stack{{0, 0, root}};
    while (!stack.empty()) {
        const Node n = stack.back();
        stack.pop_back();
        const int x1 = std::min(n.x + n.side, img.width());
        const int y1 = std::min(n.y + n.side, img.height());
        if (n.x >= x1 || n.y >= y1) {
            continue;
        }
        const bool split = n.side > params.max_side ||
                           (n.side > params.min_side && integrals.mse(n.x, n.y, x1, y1) > params.mse_threshold);
        if (!split) {
            leaves.push_back({n.x, n.y, n.side, x1 - n.x, y1 - n.y});
            continue;
        }
        const int h = n.side / 2;
        // Pushed in reverse so they pop in Z order.
        stack.push_back({n.x + h, n.y + h, h});
        stack.push_back({n.x, n.y + h, h});
        stack.push_back({n.x + h, n.y, h});
        stack.push_back({n.x, n.y, h});
    }
    return leaves;
}

} // namespace vgm

#endif // VGM_VDC_QUADTREE_HPP
