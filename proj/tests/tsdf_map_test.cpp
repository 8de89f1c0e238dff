#include <cstring>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <gtest/gtest.h>

#include "support/depth_scenes.hpp"
#include "support/tsdf_dense_oracle.hpp"
#include "vgm/tsdf/tsdf_map.hpp"

using vgm::Vec3;

namespace {

vgm::TsdfParams default_params()
{
    return vgm::TsdfParams{};
}

} // namespace

TEST(FuseVoxel, ChangedObservationUsesNegativeWeight)
{
    vgm::TsdfVoxel v{0.5f, 4.0f};
    const double w_t = vgm::fuse_voxel(v, 0.1, default_params());
    EXPECT_EQ(w_t, -5.0);
    EXPECT_NEAR(v.f, (5.0 * 0.1 + 4.0 * 0.5) / 9.0, 1e-6);
    EXPECT_NEAR(v.f, 0.2778, 1e-4);
    EXPECT_EQ(v.w, 1.0f);
}

TEST(FuseVoxel, ConsistentObservationAccumulates)
{
    vgm::TsdfVoxel v{0.2f, 3.0f};
    const double w_t = vgm::fuse_voxel(v, 0.25, default_params());
    EXPECT_EQ(w_t, 1.0);
    EXPECT_NEAR(v.f, 0.2125, 1e-6);
    EXPECT_EQ(v.w, 4.0f);
}

TEST(FuseVoxel, UnallocatedVoxelTakesObservation)
{
    vgm::TsdfVoxel v;
    EXPECT_FALSE(v.allocated());
    vgm::fuse_voxel(v, -0.4, default_params());
    EXPECT_FLOAT_EQ(v.f, -0.4f);
    EXPECT_EQ(v.w, 1.0f);
}

TEST(TruncateSdf, ClampsToUnitRange)
{
    EXPECT_EQ(vgm::truncate_sdf(0.0, 0.04), 0.0);
    EXPECT_EQ(vgm::truncate_sdf(1.0, 0.04), 1.0);
    EXPECT_EQ(vgm::truncate_sdf(-1.0, 0.04), -1.0);
    EXPECT_DOUBLE_EQ(vgm::truncate_sdf(0.02, 0.04), 0.5);
}

TEST(TsdfIntegrate, VoxelOnSurfaceGetsZeroDistance)
{
    // Voxel (0,0,0) is centered at (0, 0, 1); the camera looks straight at it.
    vgm::TsdfMap map(Vec3(-0.005, -0.005, 0.995), 64, default_params());
    auto K = vgm::testing::small_intrinsics(33, 33, 100.0);
    K.cx = 16.0;
    K.cy = 16.0;
    const vgm::DepthImage depth(K.width, K.height, 1.0f);
    const auto report = map.integrate_frame(depth, vgm::Pose::identity(), K);
    EXPECT_GT(report.allocated, 0u);
    const auto v = map.query(Vec3(0.0, 0.0, 1.0));
    ASSERT_TRUE(v);
    EXPECT_EQ(v->f, 0.0f);
    EXPECT_EQ(v->w, 1.0f);
}

TEST(TsdfIntegrate, RejectsMismatchedDepth)
{
    vgm::TsdfMap map(Vec3::Zero(), 64, default_params());
    const auto K = vgm::testing::small_intrinsics();
    EXPECT_THROW(map.integrate_frame(vgm::DepthImage(10, 10), vgm::Pose::identity(), K), std::invalid_argument);
}

TEST(TsdfIntegrate, InvalidDepthContributesNothing)
{
    vgm::TsdfMap map(Vec3(-0.5, -0.5, 0.0), 128, default_params());
    const auto K = vgm::testing::small_intrinsics();
    vgm::DepthImage depth(K.width, K.height, 0.0f);
    depth(3, 3) = std::numeric_limits<float>::quiet_NaN();
    depth(4, 4) = std::numeric_limits<float>::infinity();
    const auto report = map.integrate_frame(depth, vgm::Pose::identity(), K);
    EXPECT_EQ(report.allocated, 0u);
    EXPECT_EQ(map.allocated_voxel_count(), 0u);
}

class OctreeVsDense : public ::testing::TestWithParam<std::tuple<int, int, double>> {};

TEST_P(OctreeVsDense, BitForBit)
{
    const Vec3 origin = Vec3::Zero();
    const int n = 64;
    const auto params = default_params();
    vgm::TsdfMap map(origin, n, params);
    vgm::testing::DenseTsdf oracle(origin, n, params.voxel_size, params.truncation, params.epsilon_f, params.change_weight);
    const auto [w, h, f] = GetParam();
    const auto K = vgm::testing::small_intrinsics(w, h, f);
    std::mt19937_64 rng(11 + w);
    for (int frame = 0; frame < 8; ++frame) {
        const auto [depth, pose] = vgm::testing::random_cube_frame(rng, origin, n * params.voxel_size, K);
        map.integrate_frame(depth, pose, K);
        oracle.integrate(depth, pose, K);
    }
    std::size_t allocated = 0;
    for (int z = 0; z < n; ++z) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const auto& c = oracle.at(x, y, z);
                const auto v = map.voxel(Eigen::Vector3i(x, y, z));
                if (c.w < 1.0f) {
                    ASSERT_FALSE(v) << x << " " << y << " " << z;
                    continue;
                }
                ++allocated;
                ASSERT_TRUE(v) << x << " " << y << " " << z;
                ASSERT_EQ(std::memcmp(&v->f, &c.f, sizeof(float)), 0);
                ASSERT_EQ(std::memcmp(&v->w, &c.w, sizeof(float)), 0);
                ASSERT_GE(v->w, 1.0f);
                ASSERT_LE(std::abs(v->f), 1.0f);
            }
        }
    }
    EXPECT_GT(allocated, 1000u);
    EXPECT_EQ(allocated, map.allocated_voxel_count());
}

// The wide-angle case has pixel footprints larger than a block at the far range.
INSTANTIATE_TEST_SUITE_P(Cameras, OctreeVsDense,
                         ::testing::Values(std::make_tuple(80, 60, 70.0), std::make_tuple(40, 30, 12.0), std::make_tuple(96, 72, 200.0)));

TEST(TsdfIntegrate, RepeatedIdenticalFrameConverges)
{
    vgm::TsdfMap map(Vec3(-1.0, -1.0, 0.0), 256, default_params());
    const auto K = vgm::testing::small_intrinsics();
    vgm::testing::DepthScene scene;
    scene.planes.push_back({Vec3::UnitZ(), 1.0});
    const vgm::DepthImage depth = scene.render(vgm::Pose::identity(), K);

    // Seed the map with an offset surface so the first fused value differs from the target.
    vgm::testing::DepthScene shifted;
    shifted.planes.push_back({Vec3::UnitZ(), 1.01});
    map.integrate_frame(shifted.render(vgm::Pose::identity(), K), vgm::Pose::identity(), K);

    const Vec3 probe(0.0, 0.0, 1.004);
    double prev_gap = std::numeric_limits<double>::infinity();
    const double target = vgm::truncate_sdf(1.0 - 1.005, map.params().truncation);
    for (int i = 0; i < 10; ++i) {
        map.integrate_frame(depth, vgm::Pose::identity(), K);
        const auto v = map.query(probe);
        ASSERT_TRUE(v);
        const double gap = std::abs(v->f - target);
        EXPECT_LT(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 0.03);
}

TEST(TsdfIntegrate, VacatedSurfaceRespondsPromptly)
{
    vgm::TsdfMap map(Vec3(-1.0, -1.0, 0.0), 256, default_params());
    const auto K = vgm::testing::small_intrinsics();
    vgm::testing::DepthScene before;
    before.planes.push_back({Vec3::UnitZ(), 1.0});
    vgm::testing::DepthScene after;
    after.planes.push_back({Vec3::UnitZ(), 1.5});
    const auto d_before = before.render(vgm::Pose::identity(), K);
    const auto d_after = after.render(vgm::Pose::identity(), K);
    for (int i = 0; i < 5; ++i) {
        map.integrate_frame(d_before, vgm::Pose::identity(), K);
    }
    const Vec3 probe(0.0, 0.0, 1.005);
    ASSERT_EQ(map.query(probe)->w, 5.0f);
    map.integrate_frame(d_after, vgm::Pose::identity(), K);
    auto v = map.query(probe);
    ASSERT_TRUE(v);
    EXPECT_EQ(v->w, 1.0f);
    double prev = v->f;
    for (int i = 0; i < 5; ++i) {
        map.integrate_frame(d_after, vgm::Pose::identity(), K);
        v = map.query(probe);
        EXPECT_GT(v->f, prev);
        EXPECT_GE(v->w, 1.0f);
        prev = v->f;
    }
}

TEST(TsdfQuery, CenterBoundaryAndEmptySpace)
{
    vgm::TsdfMap map(Vec3::Zero(), 64, default_params());
    map.set_voxel({3, 4, 5}, {0.25f, 2.0f});
    map.set_voxel({4, 4, 5}, {-0.5f, 3.0f});
    const auto c = map.query(map.voxel_center({3, 4, 5}));
    ASSERT_TRUE(c);
    EXPECT_EQ(c->f, 0.25f);
    EXPECT_EQ(c->w, 2.0f);
    // Just across the +x face of voxel (3,4,5).
    const Vec3 across = map.voxel_center({3, 4, 5}) + Vec3(0.005 + 1e-7, 0.0, 0.0);
    const auto n = map.query(across);
    ASSERT_TRUE(n);
    EXPECT_EQ(n->f, -0.5f);
    EXPECT_FALSE(map.query(Vec3(0.5, 0.5, 0.5)));
    EXPECT_FALSE(map.query(Vec3(-1.0, 0.0, 0.0)));
    EXPECT_FALSE(map.query(Vec3(100.0, 0.0, 0.0)));
}

TEST(TsdfGradient, PlanarFieldGivesInverseTruncation)
{
    const auto params = default_params();
    vgm::TsdfMap map(Vec3(-0.1, -0.1, -0.1), 32, params);
    for (int z = 0; z < 20; ++z) {
        for (int y = 5; y < 15; ++y) {
            for (int x = 5; x < 15; ++x) {
                const double zc = map.voxel_center({x, y, z}).z();
                map.set_voxel({x, y, z}, {static_cast<float>(std::clamp(zc / params.truncation, -1.0, 1.0)), 3.0f});
            }
        }
    }
    const auto g = map.gradient(map.voxel_center({10, 10, 10}));
    ASSERT_TRUE(g);
    EXPECT_NEAR(g->x(), 0.0, 1e-6);
    EXPECT_NEAR(g->y(), 0.0, 1e-6);
    EXPECT_NEAR(g->z(), 1.0 / params.truncation, 1e-6);
}

TEST(TsdfGradient, ConstantFieldIsZeroAndMissingNeighbourIsAbsent)
{
    vgm::TsdfMap map(Vec3::Zero(), 32, default_params());
    for (int z = 0; z < 5; ++z) {
        for (int y = 0; y < 5; ++y) {
            for (int x = 0; x < 5; ++x) {
                map.set_voxel({x, y, z}, {0.3f, 1.0f});
            }
        }
    }
    const auto g = map.gradient(map.voxel_center({2, 2, 2}));
    ASSERT_TRUE(g);
    EXPECT_EQ(*g, Vec3::Zero());
    EXPECT_FALSE(map.gradient(map.voxel_center({4, 2, 2})));
    EXPECT_FALSE(map.gradient(map.voxel_center({0, 2, 2})));
}

TEST(TsdfRaycast, SampleCountFollowsOffsetRule)
{
    EXPECT_EQ(vgm::ray_sample_count(0.3, 0.01, 1.0), 69);
    EXPECT_EQ(vgm::ray_sample_count(0.3, 0.01, 0.31), 0);
    EXPECT_EQ(vgm::ray_sample_count(0.3, 0.01, 0.315), 1);
}

TEST(TsdfRaycast, EmptyMapYieldsNothing)
{
    vgm::TsdfMap map(Vec3(-1, -1, 0), 256, default_params());
    const auto K = vgm::testing::small_intrinsics();
    const vgm::DepthImage depth(K.width, K.height, 1.5f);
    const auto r = map.raycast_changed(depth, vgm::Pose::identity(), K, 0.2);
    EXPECT_TRUE(r.deleted.empty());
    EXPECT_TRUE(r.floaters.empty());
}

TEST(TsdfRaycast, FindsDeletedAndFloaterVoxelsAlongRay)
{
    auto K = vgm::testing::small_intrinsics(33, 33, 100.0);
    K.cx = 16.0;
    K.cy = 16.0;
    K.near = 0.3;
    // Offset by half a voxel so every sample lands on a voxel center.
    vgm::TsdfMap map(Vec3(-0.5, -0.5, -0.005), 128, default_params());
    const auto at_depth = [&](double z) { return *map.voxel_index(Vec3(0.0, 0.0, z)); };
    map.set_voxel(at_depth(0.5), {0.05f, 6.0f});
    map.set_voxel(at_depth(0.7), {0.97f, 2.0f});
    map.set_voxel(at_depth(0.8), {0.5f, 2.0f});
    map.set_voxel(at_depth(0.99), {0.0f, 9.0f}); // last sample is at 0.98
    vgm::DepthImage depth(K.width, K.height, 0.0f);
    depth(16, 16) = 1.0f;
    const auto r = map.raycast_changed(depth, vgm::Pose::identity(), K, 0.2);
    ASSERT_EQ(r.deleted.size(), 1u);
    EXPECT_EQ(r.deleted[0], vgm::morton::encode(at_depth(0.5)));
    ASSERT_EQ(r.floaters.size(), 1u);
    EXPECT_EQ(r.floaters[0], vgm::morton::encode(at_depth(0.7)));
}

TEST(TsdfRaycast, RejectsBadArguments)
{
    vgm::TsdfMap map(Vec3::Zero(), 32, default_params());
    const auto K = vgm::testing::small_intrinsics();
    const vgm::DepthImage depth(K.width, K.height, 1.0f);
    EXPECT_THROW(map.raycast_changed(depth, vgm::Pose::identity(), K, 0.0), std::invalid_argument);
    EXPECT_THROW(map.raycast_changed(depth, vgm::Pose::identity(), K, 1.0), std::invalid_argument);
    EXPECT_THROW(map.raycast_changed(depth, vgm::Pose::identity(), K, 0.2, 0), std::invalid_argument);
}

TEST(TsdfSnapshot, RoundTripPreservesVoxels)
{
    vgm::TsdfMap map(Vec3(-0.5, -0.25, 0.0), 128, default_params());
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> idx(0, 127);
    std::uniform_real_distribution<float> f(-1.0f, 1.0f);
    for (int i = 0; i < 500; ++i) {
        map.set_voxel({idx(rng), idx(rng), idx(rng)}, {f(rng), static_cast<float>(1 + i % 7)});
    }
    std::stringstream ss;
    map.save(ss);
    const std::string bytes = ss.str();
    EXPECT_EQ(bytes.substr(0, 8), "VGTSDF01");
    EXPECT_EQ(bytes.size(), 32 + 16 * map.allocated_voxel_count());
    const auto loaded = vgm::TsdfMap::load(ss);
    std::size_t n = 0;
    map.for_each_voxel([&](vgm::MortonCode, const Eigen::Vector3i& i, const vgm::TsdfVoxel& v) {
        const auto w = loaded.voxel(i);
        ASSERT_TRUE(w);
        EXPECT_EQ(*w, v);
        ++n;
    });
    EXPECT_EQ(n, loaded.allocated_voxel_count());
    std::stringstream again;
    loaded.save(again);
    EXPECT_EQ(again.str(), bytes);
}

TEST(TsdfSnapshot, RejectsCorruptHeader)
{
    std::stringstream ss("NOTATSDFxxxxxxxxxxxxxxxxxxxxxxxxxxxx");
    EXPECT_THROW(vgm::TsdfMap::load(ss), std::runtime_error);
}
