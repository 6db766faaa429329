#include <gtest/gtest.h>

#include <cmath>

#include "softsphere/errors.hpp"
#include "softsphere/grad.hpp"
#include "softsphere/synth.hpp"
#include "support/gradcheck.hpp"

using namespace softsphere;

namespace {

struct Pass {
    RenderResult<double> forward;
    SceneGradients<double> scene;
    CameraGradients<double> camera;
};

Pass run_pass(const SphereScene<double>& scene, const Camera<double>& cam, const BlendParams& params,
              const FeatureImage<double>& upstream, BackwardSettings bs, int workers = 1) {
    RenderSettings rs;
    rs.blend = params;
    rs.workers = workers;
    bs.workers = workers;
    Pass p;
    p.forward = render_forward(scene, cam, rs);
    auto [sg, cg] = render_backward(scene, cam, params, p.forward.buffer, upstream, bs);
    p.scene = std::move(sg);
    p.camera = std::move(cg);
    return p;
}

void report_failures(const gradcheck::Report& rep, const gradcheck::Problem& p) {
    for (const auto& c : rep.coordinates)
        if (!c.kink && !c.pass)
            ADD_FAILURE() << gradcheck::describe(c.index, p) << ": analytic " << c.analytic << " numeric " << c.numeric;
}

Camera<double> cam_for(int w, int h) {
    Camera<double> c;
    c.width = w;
    c.height = h;
    return c;
}

/// Sphere at depth z whose projected radius on `cam` is `px` pixels (pinhole, on axis).
Sphere<double> sphere_with_pixel_radius(const Camera<double>& cam, double z, double px) {
    const double f_px = cam.focal_length / cam.pixel_size();
    // f_px * r / sqrt(z^2 - r^2) = px
    const double r = px * z / std::sqrt(f_px * f_px + px * px);
    return {{0, 0, z}, r, 1, {0.5, 0.5, 0.5}};
}

}  // namespace

class Gradcheck : public ::testing::TestWithParam<int> {};

TEST_P(Gradcheck, MatchesFiniteDifferences) {
    const int seed = GetParam();
    const auto proj = seed % 3 == 2 ? Projection::orthographic : Projection::pinhole;
    const auto form = seed % 2 ? RotationForm::six_d : RotationForm::axis_angle;
    const auto p = gradcheck::random_problem(static_cast<std::uint64_t>(seed) * 7919 + 1, 24, 20, 6, proj, form);
    const auto rep = gradcheck::run(p);
    report_failures(rep, p);
    EXPECT_EQ(rep.failures, 0u);
    EXPECT_GT(rep.checked, rep.kinks);
}

INSTANTIATE_TEST_SUITE_P(RandomScenes, Gradcheck, ::testing::Range(0, 6));

TEST(GradcheckTwoSpheres, OverlappingPairWithinTopK) {
    gradcheck::Problem p = gradcheck::random_problem(5, 16, 16, 1, Projection::pinhole, RotationForm::axis_angle);
    auto scene = SphereScene<double>(p.scene.feature_dim(), p.scene.background());
    const std::vector<double> f(static_cast<std::size_t>(p.scene.feature_dim()), 0.3);
    const std::vector<double> g(static_cast<std::size_t>(p.scene.feature_dim()), 0.8);
    scene.add_spheres(std::vector<Sphere<double>>{{{0.02, 0.01, 12}, 0.8, 0.7, f}, {{-0.1, 0.05, 13}, 0.9, 0.6, g}});
    p.scene = scene;
    p.params.top_k = 5;
    const auto rep = gradcheck::run(p);
    report_failures(rep, p);
    EXPECT_EQ(rep.failures, 0u);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    const auto cam = cam_for(32, 32);
    const auto scene = synth::random_scene<double>({.count = 10}, 3);
    const FeatureImage<double> zero(32, 32, 3);
    const auto p = run_pass(scene, cam, BlendParams{}, zero, {});
    for (std::size_t i = 0; i < scene.size(); ++i) {
        EXPECT_EQ(p.scene.d_position[i], Vec3<double>{});
        EXPECT_EQ(p.scene.d_radius[i], 0.0);
        EXPECT_EQ(p.scene.d_opacity[i], 0.0);
        for (double v : p.scene.feature(i)) EXPECT_EQ(v, 0.0);
    }
    for (double v : p.camera.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, OffscreenSphereHasNoGradient) {
    const auto cam = cam_for(32, 32);
    auto scene = new_scene<double>(3, {0, 0, 0});
    scene.add_spheres(std::vector<Sphere<double>>{{{0, 0, 20}, 2, 0.8, {1, 0, 0}}, {{50, 0, 20}, 2, 0.8, {0, 1, 0}}});
    FeatureImage<double> up(32, 32, 3, 1.0);
    const auto p = run_pass(scene, cam, BlendParams{}, up, {});
    EXPECT_GT(p.scene.pixel_count[0], 0u);
    EXPECT_EQ(p.scene.pixel_count[1], 0u);
    EXPECT_EQ(p.scene.d_position[1], Vec3<double>{});
    EXPECT_EQ(p.scene.d_radius[1], 0.0);
    EXPECT_EQ(p.scene.d_opacity[1], 0.0);
}

TEST(Backward, NoVisibleSpheresGivesZeroCameraGradient) {
    const auto cam = cam_for(16, 16);
    const auto scene = new_scene<double>(1, {0.5});
    FeatureImage<double> up(16, 16, 1, 1.0);
    const auto p = run_pass(scene, cam, BlendParams{}, up, {});
    for (double v : p.camera.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MeanNormalizationDividesByPixelCount) {
    const auto cam = cam_for(32, 32);
    const auto scene = synth::random_scene<double>({.count = 8}, 4);
    FeatureImage<double> up(32, 32, 3);
    std::mt19937_64 rng(1);
    for (auto& v : up.data) v = synth::uniform(rng, -1, 1);
    BackwardSettings none;
    none.normalization = GradientNormalization::none;
    none.gate_small_spheres = false;
    BackwardSettings mean = none;
    mean.normalization = GradientNormalization::per_pixel_mean;
    const auto a = run_pass(scene, cam, BlendParams{}, up, none);
    const auto b = run_pass(scene, cam, BlendParams{}, up, mean);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const double n = a.scene.pixel_count[i];
        if (n == 0) continue;
        EXPECT_NEAR(b.scene.d_radius[i], a.scene.d_radius[i] / n, 1e-12 * std::abs(a.scene.d_radius[i]) + 1e-300);
        EXPECT_NEAR(b.scene.d_opacity[i], a.scene.d_opacity[i] / n, 1e-12 * std::abs(a.scene.d_opacity[i]) + 1e-300);
        EXPECT_NEAR(b.scene.d_position[i].x, a.scene.d_position[i].x / n, 1e-12 * std::abs(a.scene.d_position[i].x) + 1e-300);
    }
}

TEST(Backward, EqualPixelTermsAverageToOneTerm) {
    // Orthographic, one sphere, hard blending: every covered pixel contributes the same
    // feature gradient w * g with w ~ 1 near the center.
    auto cam = cam_for(8, 8);
    cam.projection = Projection::orthographic;
    cam.sensor_width = 8;
    auto scene = new_scene<double>(1, {0});
    scene.add_spheres(std::vector<Sphere<double>>{{{0, 0, 10}, 100, 1, {0.5}}});
    BlendParams params;
    params.gamma = 1e-5;
    FeatureImage<double> up(8, 8, 1, 0.25);
    BackwardSettings bs;
    bs.gate_small_spheres = false;
    const auto p = run_pass(scene, cam, params, up, bs);
    EXPECT_EQ(p.scene.pixel_count[0], 64u);
    EXPECT_NEAR(p.scene.feature(0)[0], 0.25, 1e-9);
}

TEST(Backward, FeatureGradientStableUnderResolutionChange) {
    auto scene = new_scene<double>(3, {0.1, 0.1, 0.1});
    scene.add_spheres(std::vector<Sphere<double>>{{{0.3, -0.2, 20}, 2.5, 0.9, {0.8, 0.4, 0.2}}});
    std::vector<double> grads;
    for (int res : {32, 64}) {
        const auto cam = cam_for(res, res);
        FeatureImage<double> up(res, res, 3, 1.0);
        const auto p = run_pass(scene, cam, BlendParams{}, up, {});
        grads.push_back(p.scene.feature(0)[0]);
    }
    EXPECT_NEAR(grads[1], grads[0], 0.2 * std::abs(grads[0]));
}

TEST(Backward, GatingThresholdAtThreePixels) {
    const auto cam = cam_for(64, 64);
    for (double px : {2.0, 3.0, 10.0}) {
        auto scene = new_scene<double>(3, {0, 0, 0});
        scene.add_spheres(std::vector<Sphere<double>>{sphere_with_pixel_radius(cam, 20, px)});
        const auto list = compute_bounds(scene, cam);
        ASSERT_NEAR(list.draws[0].projected_radius, px, 1e-9);
        FeatureImage<double> up(64, 64, 3, 1.0);
        BackwardSettings bs;
        BlendParams params;
        params.gamma = 0.5;
        auto gated = run_pass(scene, cam, params, up, bs);
        bs.gate_small_spheres = false;
        auto open = run_pass(scene, cam, params, up, bs);
        ASSERT_NE(open.scene.d_radius[0], 0.0);
        if (px <= 3.0) {
            EXPECT_EQ(gated.scene.d_radius[0], 0.0) << px;
            EXPECT_EQ(gated.scene.d_position[0], Vec3<double>{}) << px;
        } else {
            EXPECT_EQ(gated.scene.d_radius[0], open.scene.d_radius[0]);
        }
        EXPECT_EQ(gated.scene.feature(0)[0], open.scene.feature(0)[0]);
        EXPECT_EQ(gated.scene.d_opacity[0], open.scene.d_opacity[0]);
    }
}

TEST(Backward, SubPixelSphereStillGetsFeatureGradient) {
    const auto cam = cam_for(32, 32);
    auto scene = new_scene<double>(3, {0, 0, 0});
    const double px = cam.pixel_size() * 20 / cam.focal_length;
    scene.add_spheres(std::vector<Sphere<double>>{{{0.5 * px, 0.5 * px, 20}, 0.3 * px, 1, {1, 1, 1}}});
    FeatureImage<double> up(32, 32, 3, 1.0);
    const auto p = run_pass(scene, cam, BlendParams{}, up, {});
    EXPECT_EQ(p.scene.pixel_count[0], 1u);
    EXPECT_GT(p.scene.feature(0)[0], 0.0);
    EXPECT_EQ(p.scene.d_radius[0], 0.0);
}

TEST(Backward, TopKTruncationIsMonotone) {
    const auto cam = cam_for(32, 32);
    const auto scene = synth::random_scene<double>({.count = 12}, 9);
    FeatureImage<double> up(32, 32, 3);
    std::mt19937_64 rng(2);
    for (auto& v : up.data) v = synth::uniform(rng, -1, 1);
    BlendParams params;
    params.tau = 0;
    params.top_k = 32;
    BackwardSettings bs;
    bs.normalization = GradientNormalization::none;
    const auto wide = run_pass(scene, cam, params, up, bs);
    std::size_t depth = 0;
    for (std::size_t px = 0; px < wide.forward.buffer.pixel_count(); ++px)
        depth = std::max(depth, wide.forward.buffer.entries(px).size());
    ASSERT_LT(depth, 32u);
    params.top_k = static_cast<int>(depth);
    const auto tight = run_pass(scene, cam, params, up, bs);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        EXPECT_EQ(tight.scene.d_radius[i], wide.scene.d_radius[i]);
        EXPECT_EQ(tight.scene.d_position[i], wide.scene.d_position[i]);
    }
}

TEST(Backward, BitIdenticalAcrossWorkers) {
    const auto cam = cam_for(50, 40);
    const auto scene = synth::random_scene<double>({.count = 40}, 10);
    FeatureImage<double> up(50, 40, 3);
    std::mt19937_64 rng(3);
    for (auto& v : up.data) v = synth::uniform(rng, -1, 1);
    const auto ref = run_pass(scene, cam, BlendParams{}, up, {}, 1);
    for (int workers : {2, 4, 0}) {
        const auto p = run_pass(scene, cam, BlendParams{}, up, {}, workers);
        EXPECT_EQ(p.scene.d_position, ref.scene.d_position);
        EXPECT_EQ(p.scene.d_radius, ref.scene.d_radius);
        EXPECT_EQ(p.scene.d_feature, ref.scene.d_feature);
        EXPECT_EQ(p.camera.to_vector(), ref.camera.to_vector());
    }
    // Tile size changes the summation grouping, so only rounding-level agreement.
    for (int tile : {5, 64}) {
        BackwardSettings bs;
        bs.tile_size = tile;
        const auto p = run_pass(scene, cam, BlendParams{}, up, bs, 2);
        for (std::size_t i = 0; i < scene.size(); ++i)
            EXPECT_NEAR(p.scene.d_radius[i], ref.scene.d_radius[i], 1e-12 * (1 + std::abs(ref.scene.d_radius[i])));
    }
}

TEST(Backward, PixelContributionsSumToTotal) {
    const auto cam = cam_for(20, 20);
    const auto scene = synth::random_scene<double>({.count = 6}, 11);
    FeatureImage<double> up(20, 20, 3);
    std::mt19937_64 rng(4);
    for (auto& v : up.data) v = synth::uniform(rng, -1, 1);
    BackwardSettings bs;
    bs.normalization = GradientNormalization::none;
    bs.gate_small_spheres = false;
    const auto p = run_pass(scene, cam, BlendParams{}, up, bs);
    const auto ctx = make_backward_context(scene, cam, BlendParams{});
    std::vector<double> radius(scene.size(), 0.0);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x)
            for (const auto& c : backward_pixel<double>(x, y, up.pixel(p.forward.buffer.index(x, y)), p.forward.buffer, ctx))
                radius[c.sphere_id] += c.d_radius;
    for (std::size_t i = 0; i < scene.size(); ++i)
        EXPECT_NEAR(radius[i], p.scene.d_radius[i], 1e-10 * (1 + std::abs(radius[i])));
}

TEST(Backward, SinglePrecisionTracksDoublePrecision) {
    const auto cam = cam_for(32, 32);
    const auto scene = synth::random_scene<double>({.count = 6, .opacity_min = 0.3}, 12);
    FeatureImage<double> up(32, 32, 3);
    std::mt19937_64 rng(5);
    for (auto& v : up.data) v = synth::uniform(rng, -1, 1);
    const auto pd = run_pass(scene, cam, BlendParams{}, up, {});

    const auto scene_f = scene.cast<float>();
    const auto cam_f = cam.cast<float>();
    FeatureImage<float> up_f(32, 32, 3);
    for (std::size_t i = 0; i < up.data.size(); ++i) up_f.data[i] = static_cast<float>(up.data[i]);
    const auto fwd = render_forward(scene_f, cam_f);
    const auto [sg, cg] = render_backward(scene_f, cam_f, BlendParams{}, fwd.buffer, up_f);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const double ref = pd.scene.d_opacity[i];
        EXPECT_NEAR(sg.d_opacity[i], ref, 1e-2 * std::abs(ref) + 1e-5);
    }
}

TEST(Backward, ContractAndShapeErrors) {
    const auto cam = cam_for(16, 16);
    const auto scene = synth::random_scene<double>({.count = 4}, 13);
    const auto fwd = render_forward(scene, cam);
    auto bigger = scene;
    bigger.add_spheres(std::vector<Sphere<double>>{{{0, 0, 20}, 1, 1, {0, 0, 0}}});
    FeatureImage<double> up(16, 16, 3);
    EXPECT_THROW(render_backward(bigger, cam, BlendParams{}, fwd.buffer, up), ContractError);
    FeatureImage<double> wrong(16, 16, 2);
    EXPECT_THROW(render_backward(scene, cam, BlendParams{}, fwd.buffer, wrong), ValidationError);
}
