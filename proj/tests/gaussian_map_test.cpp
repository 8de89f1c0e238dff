#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "support/fd_oracle.hpp"
#include "vgm/gaussian/optimizer.hpp"

using vgm::Vec3;

namespace {

vgm::Intrinsics square_k(int size, double f)
{
    vgm::Intrinsics K;
    K.fx = K.fy = f;
    K.cx = K.cy = (size - 1) / 2.0;
    K.width = K.height = size;
    K.near = 0.1;
    K.far = 10.0;
    return K;
}

vgm::GaussianPrimitive isotropic(const Vec3& mean, double sigma, const Vec3& rgb, double opacity)
{
    vgm::GaussianPrimitive g;
    g.mean = mean;
    g.log_scale = Vec3::Constant(std::log(sigma));
    g.opacity_logit = vgm::logit(opacity);
    g.sh[0] = vgm::sh::dc_from_rgb(rgb);
    return g;
}

} // namespace

TEST(EvaluateSh, DcOnlyIsViewIndependent)
{
    vgm::ShCoeffs c;
    c.fill(Vec3::Zero());
    c[0] = Vec3(0.4, -0.2, 1.0);
    const Vec3 expected = c[0] * vgm::sh::c0 + Vec3::Constant(0.5);
    for (const Vec3& d : {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0.6, -0.8, 0), Vec3(-1, 1, 1).normalized()}) {
        EXPECT_TRUE(vgm::evaluate_sh(c, d).isApprox(expected, 1e-12));
    }
}

TEST(EvaluateSh, ZeroCoefficientsGiveMidGrey)
{
    vgm::ShCoeffs c;
    c.fill(Vec3::Zero());
    EXPECT_EQ(vgm::evaluate_sh(c, Vec3(0, 1, 0)), Vec3::Constant(0.5));
}

TEST(EvaluateSh, DegreeOneAlongZ)
{
    vgm::ShCoeffs c;
    c.fill(Vec3::Zero());
    c[2] = Vec3(0.3, 0.3, 0.3);
    const Vec3 up = vgm::evaluate_sh(c, Vec3(0, 0, 1));
    const Vec3 down = vgm::evaluate_sh(c, Vec3(0, 0, -1));
    // Y_1^0 = sqrt(3 / (4 pi)) z
    const double y10 = std::sqrt(3.0 / (4.0 * M_PI));
    EXPECT_NEAR(up.x() - down.x(), 2.0 * 0.3 * y10, 1e-12);
}

TEST(EvaluateSh, ClampsNegativeToZeroAndRejectsNonUnitDirection)
{
    vgm::ShCoeffs c;
    c.fill(Vec3::Zero());
    c[0] = Vec3::Constant(-10.0);
    EXPECT_EQ(vgm::evaluate_sh(c, Vec3(1, 0, 0)), Vec3::Zero());
    EXPECT_THROW(vgm::evaluate_sh(c, Vec3(1, 1, 0)), std::invalid_argument);
}

TEST(EvaluateSh, BasisIsOrthonormalOnTheSphere)
{
    // Monte Carlo-free check: a Fibonacci sphere quadrature of Y_i Y_j against the identity.
    const int n = 20000;
    Eigen::Matrix<double, 16, 16> gram = Eigen::Matrix<double, 16, 16>::Zero();
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(1.0 - z * z);
        const Vec3 d(r * std::cos(golden * i), r * std::sin(golden * i), z);
        const auto b = vgm::sh::basis(d, 3);
        for (int a = 0; a < 16; ++a) {
            for (int c = 0; c < 16; ++c) {
                gram(a, c) += b[a] * b[c];
            }
        }
    }
    gram *= 4.0 * M_PI / n;
    EXPECT_LT((gram - Eigen::Matrix<double, 16, 16>::Identity()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(EvaluateSh, BasisGradientMatchesDifferences)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        const Vec3 d(n(rng), n(rng), n(rng));
        const auto g = vgm::sh::basis_gradient(d, 3);
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 e = Vec3::Zero();
            e[axis] = 1e-6;
            const auto bp = vgm::sh::basis(d + e, 3);
            const auto bm = vgm::sh::basis(d - e, 3);
            for (int k = 0; k < 16; ++k) {
                EXPECT_NEAR(g[k][axis], (bp[k] - bm[k]) / 2e-6, 1e-6);
            }
        }
    }
}

TEST(ProjectGaussian, IsotropicOnAxisClosedForm)
{
    const auto K = square_k(64, 50.0);
    for (const double z : {1.0, 2.0, 3.5}) {
        const auto g = isotropic(Vec3(0, 0, z), 0.05, Vec3::Constant(0.5), 0.5);
        const auto p = vgm::project_gaussian(g, vgm::Pose::identity(), K);
        ASSERT_TRUE(p);
        const double s = 50.0 * 0.05 / z;
        EXPECT_NEAR(p->cov(0, 0), s * s + 0.3, 1e-6);
        EXPECT_NEAR(p->cov(1, 1), s * s + 0.3, 1e-6);
        EXPECT_NEAR(p->cov(0, 1), 0.0, 1e-12);
        EXPECT_NEAR(p->z, z, 1e-12);
        EXPECT_NEAR(p->mean.x(), K.cx, 1e-12);
    }
}

TEST(ProjectGaussian, DoublingDepthHalvesFootprint)
{
    const auto K = square_k(64, 50.0);
    const auto a = vgm::project_gaussian(isotropic(Vec3(0, 0, 1.3), 0.04, Vec3::Zero(), 0.5), vgm::Pose::identity(), K);
    const auto b = vgm::project_gaussian(isotropic(Vec3(0, 0, 2.6), 0.04, Vec3::Zero(), 0.5), vgm::Pose::identity(), K);
    ASSERT_TRUE(a && b);
    EXPECT_NEAR(std::sqrt(a->cov(0, 0) - 0.3) / std::sqrt(b->cov(0, 0) - 0.3), 2.0, 1e-9);
}

TEST(ProjectGaussian, CullsBehindCameraAndOffImage)
{
    const auto K = square_k(32, 30.0);
    EXPECT_FALSE(vgm::project_gaussian(isotropic(Vec3(0, 0, -1), 0.05, Vec3::Zero(), 0.5), vgm::Pose::identity(), K));
    EXPECT_FALSE(vgm::project_gaussian(isotropic(Vec3(0, 0, 0.05), 0.05, Vec3::Zero(), 0.5), vgm::Pose::identity(), K));
    EXPECT_FALSE(vgm::project_gaussian(isotropic(Vec3(5, 0, 1), 0.01, Vec3::Zero(), 0.5), vgm::Pose::identity(), K));
}

TEST(Render, EmptyMapIsBlack)
{
    const auto K = square_k(16, 16.0);
    const auto out = vgm::render(vgm::GaussianMap{}, vgm::Pose::identity(), K);
    for (std::size_t p = 0; p < out.color.size(); ++p) {
        EXPECT_EQ(out.color[p], Vec3::Zero());
        EXPECT_EQ(out.alpha[p], 0.0);
        EXPECT_EQ(out.depth[p], 0.0);
    }
}

TEST(Render, SingleGaussianOnPixelCenter)
{
    const auto K = square_k(33, 40.0);
    vgm::GaussianMap map;
    map.insert(isotropic(Vec3(0, 0, 2), 0.05, Vec3(1, 0, 0), 0.6 / 0.999));
    const auto out = vgm::render(map, vgm::Pose::identity(), K);
    EXPECT_NEAR(out.color(16, 16).x(), 0.6, 1e-12);
    EXPECT_NEAR(out.color(16, 16).y(), 0.0, 1e-12);
    EXPECT_NEAR(out.depth(16, 16), 1.2, 1e-12);
    EXPECT_NEAR(out.alpha(16, 16), 0.6, 1e-12);
}

TEST(Render, TwoLayersTelescope)
{
    const auto K = square_k(33, 40.0);
    vgm::GaussianMap map;
    const double op = 0.5 / 0.999;
    map.insert(isotropic(Vec3(0, 0, 3), 0.05, Vec3(0, 0, 1), op));
    map.insert(isotropic(Vec3(0, 0, 2), 0.05, Vec3(1, 0, 0), op));
    const auto out = vgm::render(map, vgm::Pose::identity(), K);
    EXPECT_NEAR(out.color(16, 16).x(), 0.5, 1e-12);
    EXPECT_NEAR(out.color(16, 16).z(), 0.25, 1e-12);
    EXPECT_NEAR(out.alpha(16, 16), 0.75, 1e-12);
}

TEST(Render, AlphaBoundedAndPermutationInvariant)
{
    std::mt19937_64 rng(21);
    for (int t = 0; t < 10; ++t) {
        auto scene = vgm::testing::random_fd_scene(rng, 5, 24);
        auto prims = scene.map.primitives();
        for (int k = 1; k <= 30; ++k) {
            // Add more overlapping primitives so deep composites occur.
            auto g = prims[k % prims.size()];
            g.mean += Vec3(0.01 * k, -0.005 * k, 0.02 * k);
            g.opacity_logit = 3.0;
            prims.push_back(g);
        }
        vgm::GaussianMap a, b;
        a.insert(prims);
        std::vector<vgm::GaussianPrimitive> shuffled = prims;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        b.insert(shuffled);
        const auto oa = vgm::render(a, scene.target.pose, scene.K);
        const auto ob = vgm::render(b, scene.target.pose, scene.K);
        for (std::size_t p = 0; p < oa.alpha.size(); ++p) {
            EXPECT_GE(oa.alpha[p], 0.0);
            EXPECT_LE(oa.alpha[p], 1.0);
            EXPECT_EQ(oa.color[p], ob.color[p]);
            EXPECT_EQ(oa.depth[p], ob.depth[p]);
        }
    }
}

TEST(Render, VanishingOpacityFadesLinearly)
{
    const auto K = square_k(33, 40.0);
    const auto color_at = [&](double op) {
        vgm::GaussianMap map;
        map.insert(isotropic(Vec3(0.02, 0.01, 2), 0.05, Vec3(0.8, 0.4, 0.2), op));
        map.insert(isotropic(Vec3(0, 0, 2.5), 0.08, Vec3(0.1, 0.9, 0.3), op));
        return vgm::render(map, vgm::Pose::identity(), K).color(16, 16);
    };
    const Vec3 c1 = color_at(1e-4), c2 = color_at(2e-4);
    EXPECT_NEAR(c2.x() / c1.x(), 2.0, 1e-3);
    EXPECT_NEAR(c2.y() / c1.y(), 2.0, 1e-3);
}

TEST(Loss, PerfectRenderIsZero)
{
    const auto K = square_k(16, 16.0);
    vgm::GaussianMap map;
    map.insert(isotropic(Vec3(0, 0, 2), 0.2, Vec3(0.3, 0.6, 0.9), 0.9));
    const auto out = vgm::render(map, vgm::Pose::identity(), K);
    vgm::RgbImage rgb(16, 16);
    vgm::DepthImage depth(16, 16);
    for (std::size_t p = 0; p < rgb.size(); ++p) {
        rgb[p] = out.color[p].cast<float>();
        depth[p] = static_cast<float>(out.depth[p]);
    }
    vgm::RenderOutput exact = out;
    for (std::size_t p = 0; p < rgb.size(); ++p) {
        exact.color[p] = rgb[p].cast<double>();
        exact.depth[p] = depth[p];
    }
    EXPECT_EQ(vgm::compute_loss(exact, rgb, depth, 0.5).total, 0.0);
}

TEST(Loss, ConstantColourOffset)
{
    vgm::RenderOutput out{vgm::ColorImage(8, 8, Vec3::Constant(0.5)), vgm::ScalarImage(8, 8, 1.0), vgm::ScalarImage(8, 8, 1.0)};
    const vgm::RgbImage rgb(8, 8, vgm::Rgb::Constant(0.4f));
    const vgm::DepthImage depth(8, 8, 3.0f);
    EXPECT_NEAR(vgm::compute_loss(out, rgb, depth, 0.0).total, 0.1, 1e-7);
}

TEST(Loss, MatchesScalarReference)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        vgm::RenderOutput out{vgm::ColorImage(8, 8), vgm::ScalarImage(8, 8), vgm::ScalarImage(8, 8)};
        vgm::RgbImage rgb(8, 8);
        vgm::DepthImage depth(8, 8);
        for (std::size_t p = 0; p < 64; ++p) {
            out.color[p] = Vec3(u(rng), u(rng), u(rng));
            out.depth[p] = 3.0 * u(rng);
            out.alpha[p] = u(rng);
            rgb[p] = vgm::Rgb(u(rng), u(rng), u(rng));
            depth[p] = u(rng) < 0.25 ? 0.0f : static_cast<float>(3.0 * u(rng));
        }
        // Reference: plain loops, written out per channel.
        double color_sum = 0.0, depth_sum = 0.0;
        int valid = 0;
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                color_sum += std::abs(rgb(x, y).x() - out.color(x, y).x());
                color_sum += std::abs(rgb(x, y).y() - out.color(x, y).y());
                color_sum += std::abs(rgb(x, y).z() - out.color(x, y).z());
                if (depth(x, y) > 0.0f) {
                    ++valid;
                    if (out.alpha(x, y) > 0.5) {
                        depth_sum += std::abs(depth(x, y) - out.depth(x, y));
                    }
                }
            }
        }
        const double expected = color_sum / 192.0 + 0.5 * depth_sum / valid;
        EXPECT_NEAR(vgm::compute_loss(out, rgb, depth, 0.5).total, expected, 1e-7);
    }
}

TEST(Gradients, MatchFiniteDifferences)
{
    std::mt19937_64 rng(1234);
    for (int t = 0; t < 30; ++t) {
        const auto scene = vgm::testing::random_fd_scene(rng);
        const auto rep = vgm::testing::check_gradients(scene);
        EXPECT_EQ(rep.failed, 0) << "scene " << t << ": " << rep.worst;
    }
}

TEST(Gradients, LowerShDegreeAlsoMatches)
{
    std::mt19937_64 rng(99);
    for (int degree = 0; degree < 3; ++degree) {
        auto scene = vgm::testing::random_fd_scene(rng);
        scene.render.sh_degree = degree;
        const auto rep = vgm::testing::check_gradients(scene);
        EXPECT_EQ(rep.failed, 0) << "degree " << degree << ": " << rep.worst;
    }
}

TEST(Optimize, WrongColourConverges)
{
    const auto K = square_k(32, 32.0);
    vgm::GaussianMap truth;
    truth.insert(isotropic(Vec3(0, 0, 2), 0.4, Vec3(0.7, 0.5, 0.4), 0.95));
    const auto target = vgm::render(truth, vgm::Pose::identity(), K);
    vgm::Frame f;
    f.pose = vgm::Pose::identity();
    f.rgb = vgm::RgbImage(32, 32);
    f.depth = vgm::DepthImage(32, 32, 0.0f);
    for (std::size_t p = 0; p < f.rgb.size(); ++p) {
        f.rgb[p] = target.color[p].cast<float>();
    }
    vgm::GaussianMap map;
    map.insert(isotropic(Vec3(0, 0, 2), 0.4, Vec3(0.5, 0.3, 0.2), 0.95));
    vgm::AdamOptimizer opt;
    vgm::Rasterizer raster;
    const auto trace = vgm::optimize(map, {&f}, K, 200, opt, raster, 0.5);
    ASSERT_EQ(trace.size(), 200u);
    EXPECT_GT(trace.front(), 0.04);
    for (std::size_t i = 11; i < trace.size(); ++i) {
        EXPECT_LT(trace[i], trace[i - 1]) << "iteration " << i;
    }
    EXPECT_LT(trace.back(), 0.01);
}

TEST(Optimize, PerfectReconstructionLeavesParametersUnchanged)
{
    const auto K = square_k(24, 24.0);
    vgm::GaussianMap map;
    map.insert(isotropic(Vec3(0.1, 0, 2), 0.1, Vec3(0.2, 0.5, 0.7), 0.8));
    vgm::Rasterizer raster;
    vgm::RenderOutput out = raster.render(map, vgm::Pose::identity(), K);
    // Observation equal to the render; round the render to float so the residuals are exactly zero.
    vgm::RgbImage rgb(24, 24);
    vgm::DepthImage depth(24, 24);
    for (std::size_t p = 0; p < rgb.size(); ++p) {
        rgb[p] = out.color[p].cast<float>();
        depth[p] = static_cast<float>(out.depth[p]);
        out.color[p] = rgb[p].cast<double>();
        out.depth[p] = depth[p];
    }
    const auto loss = vgm::compute_loss(out, rgb, depth, 0.5);
    EXPECT_EQ(loss.total, 0.0);
    std::vector<vgm::ParamVector> grads;
    raster.backward(loss.d_color, loss.d_depth, grads);
    vgm::AdamOptimizer opt;
    const auto before = vgm::pack(map[0]);
    opt.step(map, grads, raster.visible_indices());
    const auto after = vgm::pack(map[0]);
    for (int k = 0; k < vgm::param::count; ++k) {
        EXPECT_LT(std::abs(after[k] - before[k]), 1e-8);
    }
}

TEST(GaussianMapStore, EmptyRemovalRemovesNothing)
{
    vgm::GaussianMap map;
    for (int i = 0; i < 3; ++i) {
        vgm::GaussianPrimitive g;
        g.birth_code = 10 + i;
        map.insert(g);
    }
    EXPECT_EQ(map.remove_by_morton(std::vector<vgm::MortonCode>{}), 0u);
    EXPECT_EQ(map.size(), 3u);
}

TEST(GaussianMapStore, MultimapSemantics)
{
    vgm::GaussianMap map;
    for (const vgm::MortonCode c : {7u, 7u, 9u}) {
        vgm::GaussianPrimitive g;
        g.birth_code = c;
        map.insert(g);
    }
    EXPECT_EQ(map.remove_by_morton({7}), 2u);
    ASSERT_EQ(map.size(), 1u);
    EXPECT_EQ(map.id(0), 2u);
    EXPECT_EQ(map.index_size(), 1u);
    EXPECT_EQ(map.remove_by_morton({7}), 0u);
    vgm::GaussianPrimitive g;
    EXPECT_EQ(map.insert(g), 3u); // ids are not reused
}

TEST(GaussianMapStore, RandomOperationsMatchListOracle)
{
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> code(0, 300);
    vgm::GaussianMap map;
    std::vector<std::pair<vgm::GaussianId, vgm::MortonCode>> oracle;
    vgm::GaussianId next = 0;
    for (int op = 0; op < 10000; ++op) {
        if (rng() % 3 != 0) {
            vgm::GaussianPrimitive g;
            g.birth_code = code(rng);
            EXPECT_EQ(map.insert(g), next);
            oracle.emplace_back(next++, g.birth_code);
        }
        else {
            std::vector<vgm::MortonCode> codes;
            for (int k = 0; k < 3; ++k) {
                codes.push_back(code(rng));
            }
            const auto before = oracle.size();
            std::erase_if(oracle, [&](const auto& e) { return std::find(codes.begin(), codes.end(), e.second) != codes.end(); });
            EXPECT_EQ(map.remove_by_morton(codes), before - oracle.size());
        }
    }
    ASSERT_EQ(map.size(), oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        EXPECT_EQ(map.id(i), oracle[i].first);
        EXPECT_EQ(map[i].birth_code, oracle[i].second);
    }
    EXPECT_EQ(map.index_size(), oracle.size());
}

TEST(GaussianMapStore, SnapshotRoundTrip)
{
    std::mt19937_64 rng(5);
    vgm::GaussianMap map;
    for (int i = 0; i < 3; ++i) {
        auto s = vgm::testing::random_fd_scene(rng, 3, 16);
        for (auto g : s.map.primitives()) {
            g.birth_code = rng() >> 2;
            g.birth_frame = i;
            map.insert(g);
        }
    }
    std::stringstream ss;
    map.save(ss);
    EXPECT_EQ(ss.str().size(), 8 + 248 * map.size());
    const auto loaded = vgm::GaussianMap::load(ss);
    ASSERT_EQ(loaded.size(), map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        const auto a = vgm::pack(map[i]), b = vgm::pack(loaded[i]);
        for (int k = 0; k < vgm::param::count; ++k) {
            EXPECT_EQ(static_cast<float>(a[k]), b[k]);
        }
        EXPECT_EQ(map[i].birth_code, loaded[i].birth_code);
        EXPECT_EQ(map[i].birth_frame, loaded[i].birth_frame);
    }
    std::stringstream bad("VGGS0002");
    EXPECT_THROW(vgm::GaussianMap::load(bad), std::runtime_error);
    std::stringstream truncated(ss.str().substr(0, 8 + 100));
    EXPECT_THROW(vgm::GaussianMap::load(truncated), std::runtime_error);
}
