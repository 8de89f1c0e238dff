#ifndef VGM_TSDF_OCTREE_HPP
#define VGM_TSDF_OCTREE_HPP

#include <array>
#include <cstddef>
#include <memory>
#include <stdexcept>

#include <Eigen/Core>

namespace vgm {

/// Sparse pointer octree whose leaves are dense BlockSize^3 blocks.
///
/// Children are ordered by their octant index (bit 0 = x, bit 1 = y, bit 2 = z), so a
/// depth-first traversal visits blocks in Morton order of their coordinates.
template<typename BlockT, int BlockSize = 8>
class SparseOctree {
    static_assert(BlockSize >= 1 && (BlockSize & (BlockSize - 1)) == 0, "block size must be a power of two");

    struct Node {
        std::array<std::unique_ptr<Node>, 8> children;
        std::unique_ptr<BlockT> block;
    };

    public:
    static constexpr int block_size = BlockSize;

    /// `size` is the edge length in voxels, rounded up to a power of two >= BlockSize.
    explicit SparseOctree(int size)
    {
        if (size <= 0 || size > (1 << 21)) {
            throw std::invalid_argument("octree: size must be in (0, 2^21]");
        }
        size_ = BlockSize;
        while (size_ < size) {
            size_ *= 2;
        }
        root_ = std::make_unique<Node>();
    }

    int size() const
    {
        return size_;
    }

    std::size_t block_count() const
    {
        return block_count_;
    }

    bool contains(const Eigen::Vector3i& voxel) const
    {
        return voxel.x() >= 0 && voxel.y() >= 0 && voxel.z() >= 0 && voxel.x() < size_ && voxel.y() < size_ && voxel.z() < size_;
    }

    static Eigen::Vector3i block_origin(const Eigen::Vector3i& voxel)
    {
        return Eigen::Vector3i(voxel.x() & ~(BlockSize - 1), voxel.y() & ~(BlockSize - 1), voxel.z() & ~(BlockSize - 1));
    }

    const BlockT* find(const Eigen::Vector3i& voxel) const
    {
        if (!contains(voxel)) {
            return nullptr;
        }
        const Node* node = root_.get();
        for (int half = size_ / 2; half >= BlockSize; half /= 2) {
            node = node->children[octant(voxel, half)].get();
            if (!node) {
                return nullptr;
            }
        }
        return node->block.get();
    }

    BlockT* find(const Eigen::Vector3i& voxel)
    {
        return const_cast<BlockT*>(static_cast<const SparseOctree&>(*this).find(voxel));
    }

    /// Returns the block containing `voxel`, creating the path if needed.
    BlockT& allocate(const Eigen::Vector3i& voxel)
    {
        if (!contains(voxel)) {
            throw std::out_of_range("octree: voxel outside the tree");
        }
        Node* node = root_.get();
        for (int half = size_ / 2; half >= BlockSize; half /= 2) {
            auto& child = node->children[octant(voxel, half)];
            if (!child) {
                child = std::make_unique<Node>();
            }
            node = child.get();
        }
        if (!node->block) {
            node->block = std::make_unique<BlockT>();
            ++block_count_;
        }
        return *node->block;
    }

    /// Visits allocated blocks in Morton order: fn(block_origin, block).
    template<typename Fn>
    void for_each_block(Fn&& fn) const
    {
        for_each_block_impl(root_.get(), Eigen::Vector3i::Zero(), size_, fn);
    }

    template<typename Fn>
    void for_each_block(Fn&& fn)
    {
        for_each_block_impl(root_.get(), Eigen::Vector3i::Zero(), size_, fn);
    }

    /// Hierarchical traversal over the implicit tree, including unallocated regions.
    ///
    /// `test(origin, size, allocated)` decides whether to descend into a node; at block
    /// granularity `leaf(origin, block_or_null)` is called for every node that passed.
    template<typename Test, typename Leaf>
    void traverse(Test&& test, Leaf&& leaf)
    {
        traverse_impl(root_.get(), Eigen::Vector3i::Zero(), size_, test, leaf);
    }

    private:
    static int octant(const Eigen::Vector3i& voxel, int half)
    {
        return ((voxel.x() & half) ? 1 : 0) | ((voxel.y() & half) ? 2 : 0) | ((voxel.z() & half) ? 4 : 0);
    }

    static Eigen::Vector3i child_origin(const Eigen::Vector3i& origin, int half, int i)
    {
        return origin + Eigen::Vector3i((i & 1) ? half : 0, (i & 2) ? half : 0, (i & 4) ? half : 0);
    }

    template<typename NodeT, typename Fn>
    static void for_each_block_impl(NodeT* node, const Eigen::Vector3i& origin, int size, Fn& fn)
    {
        if (!node) {
            return;
        }
        if (size == BlockSize) {
            if (node->block) {
                fn(origin, *node->block);
            }
            return;
        }
        const int half = size / 2;
        for (int i = 0; i < 8; ++i) {
            for_each_block_impl(node->children[i].get(), child_origin(origin, half, i), half, fn);
        }
    }

    template<typename Test, typename Leaf>
    static void traverse_impl(Node* node, const Eigen::Vector3i& origin, int size, Test& test, Leaf& leaf)
    {
        if (!test(origin, size, node != nullptr)) {
            return;
        }
        if (size == BlockSize) {
            leaf(origin, node ? node->block.get() : nullptr);
            return;
        }
        const int half = size / 2;
        for (int i = 0; i < 8; ++i) {
            traverse_impl(node ? node->children[i].get() : nullptr, child_origin(origin, half, i), half, test, leaf);
        }
    }

    int size_ = BlockSize;
    std::size_t block_count_ = 0;
    std::unique_ptr<Node> root_;
};

} // namespace vgm

#endif // VGM_TSDF_OCTREE_HPP
