#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "softsphere/errors.hpp"
#include "softsphere/shade.hpp"
#include "softsphere/synth.hpp"
#include "softsphere/testkit.hpp"

using namespace softsphere;

namespace {

FeatureImage<double> random_image(int w, int h, int c, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FeatureImage<double> img(w, h, c);
    for (auto& v : img.data) v = synth::uniform(rng, lo, hi);
    return img;
}

double weighted_sum(const FeatureImage<double>& img, const FeatureImage<double>& g) {
    double s = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * g.data[i];
    return s;
}

/// Compares an analytic gradient image against central differences of <g, shade(F)>.
template <typename Shade>
void expect_matches_fd(const FeatureImage<double>& f, const FeatureImage<double>& g,
                       const FeatureImage<double>& analytic, Shade&& shade, double tol) {
    auto loss = [&](std::span<const double> x) {
        FeatureImage<double> img = f;
        std::copy(x.begin(), x.end(), img.data.begin());
        return weighted_sum(shade(img), g);
    };
    const auto fd = testkit::fd_gradient(loss, f.data, 1e-7);
    for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_NEAR(analytic.data[i], fd.gradient[i], tol) << i;
}

DirectionalLight light(Vec3<double> dir, double intensity, double ambient) {
    DirectionalLight l;
    l.direction = normalized(dir);
    l.intensity = intensity;
    l.ambient = ambient;
    return l;
}

}  // namespace

TEST(Identity, InRangeUnchanged) {
    const auto f = random_image(5, 4, 3, 0, 1, 1);
    EXPECT_EQ(shade_identity(f).data, f.data);
}

TEST(Identity, ClampsOutOfRange) {
    FeatureImage<double> f(1, 1, 3);
    f.data = {1.5, -0.2, 0.4};
    const auto c = shade_identity(f);
    EXPECT_EQ(c.data, (std::vector<double>{1.0, 0.0, 0.4}));
    FeatureImage<double> g(1, 1, 3);
    g.data = {1, 1, 1};
    EXPECT_EQ(shade_identity_backward(f, g).data, (std::vector<double>{0, 0, 1}));
}

TEST(Identity, RejectsOtherDims) {
    EXPECT_THROW(shade_identity(FeatureImage<double>(2, 2, 1)), ValidationError);
}

TEST(Diffuse, NormalFacingLightGivesAlbedo) {
    FeatureImage<double> f(1, 1, 6);
    f.data = {0.2, 0.5, 0.9, 0, 0, -2};  // unnormalized, facing a light travelling along +z
    const std::vector<DirectionalLight> lights{light({0, 0, 1}, 1, 0)};
    const auto c = shade_diffuse(f, std::span<const DirectionalLight>(lights));
    EXPECT_NEAR(c.data[0], 0.2, 1e-15);
    EXPECT_NEAR(c.data[1], 0.5, 1e-15);
    EXPECT_NEAR(c.data[2], 0.9, 1e-15);
}

TEST(Diffuse, PerpendicularNormalGivesAmbient) {
    FeatureImage<double> f(1, 1, 6);
    f.data = {0.2, 0.5, 0.9, 1, 0, 0};
    const std::vector<DirectionalLight> lights{light({0, 0, 1}, 1, 0.25)};
    const auto c = shade_diffuse(f, std::span<const DirectionalLight>(lights));
    EXPECT_NEAR(c.data[0], 0.05, 1e-15);
    EXPECT_NEAR(c.data[1], 0.125, 1e-15);
    EXPECT_NEAR(c.data[2], 0.225, 1e-15);
}

TEST(Diffuse, ZeroNormalGetsAmbientOnly) {
    FeatureImage<double> f(1, 1, 6);
    f.data = {0.4, 0.4, 0.4, 0, 0, 0};
    const std::vector<DirectionalLight> lights{light({0, 0, 1}, 1, 0.5)};
    const auto c = shade_diffuse(f, std::span<const DirectionalLight>(lights));
    EXPECT_NEAR(c.data[0], 0.2, 1e-15);
    FeatureImage<double> g(1, 1, 3);
    g.data = {1, 1, 1};
    const auto d = shade_diffuse_backward(f, std::span<const DirectionalLight>(lights), g);
    EXPECT_EQ(d.data[3], 0.0);
    EXPECT_EQ(d.data[5], 0.0);
}

TEST(Diffuse, BackwardMatchesFiniteDifferences) {
    auto f = random_image(6, 5, 6, -1, 1, 3);
    for (std::size_t p = 0; p < f.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) f.pixel(p)[c] = 0.3 + 0.3 * std::abs(f.pixel(p)[c]);
    const auto g = random_image(6, 5, 3, -1, 1, 4);
    const std::vector<DirectionalLight> lights{light({0.3, -0.2, 1}, 0.6, 0.1), light({-1, 0.4, 0.2}, 0.3, 0.05)};
    const std::span<const DirectionalLight> ls(lights);
    const auto d = shade_diffuse_backward(f, ls, g);
    expect_matches_fd(f, g, d, [&](const FeatureImage<double>& x) { return shade_diffuse(x, ls); }, 1e-6);
}

TEST(Diffuse, LipschitzInAlbedo) {
    std::mt19937_64 rng(5);
    const std::vector<DirectionalLight> lights{light({0.2, 0.1, 1}, 0.7, 0.3)};
    const std::span<const DirectionalLight> ls(lights);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_image(1, 1, 6, -1, 1, 100 + trial);
        auto b = a;
        for (int c = 0; c < 3; ++c) {
            a.data[c] = synth::uniform(rng, 0, 1);
            b.data[c] = synth::uniform(rng, 0, 1);
        }
        const auto ca = shade_diffuse(a, ls);
        const auto cb = shade_diffuse(b, ls);
        for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(ca.data[c] - cb.data[c]), std::abs(a.data[c] - b.data[c]) + 1e-15);
    }
}

TEST(Diffuse, RejectsBadInputs) {
    const std::vector<DirectionalLight> lights{light({0, 0, 1}, 1, 0)};
    EXPECT_THROW(shade_diffuse(FeatureImage<double>(2, 2, 3), std::span<const DirectionalLight>(lights)),
                 ValidationError);
    DirectionalLight bad;
    bad.direction = {0, 0, 2};
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Linear, IdentityWeightsMatchIdentityShading) {
    const auto f = random_image(7, 3, 3, -0.5, 1.5, 6);
    const auto s = LinearShader<double>::identity(3);
    EXPECT_EQ(shade_linear(f, s).data, shade_identity(f).data);
}

TEST(Linear, ZeroWeightsGiveBias) {
    const auto f = random_image(4, 4, 2, 0, 1, 7);
    LinearShader<double> s;
    s.feature_dim = 2;
    s.weight.assign(6, 0.0);
    s.bias = {0.1, 0.6, 0.3};
    const auto c = shade_linear(f, s);
    for (std::size_t p = 0; p < c.pixel_count(); ++p) {
        EXPECT_EQ(c.pixel(p)[0], 0.1);
        EXPECT_EQ(c.pixel(p)[1], 0.6);
        EXPECT_EQ(c.pixel(p)[2], 0.3);
    }
}

TEST(Linear, BackwardMatchesFiniteDifferences) {
    Camera<double> cam;
    cam.width = 5;
    cam.height = 4;
    cam.rotation = {0.1, -0.2, 0.05, 0, 0, 0};
    const auto view = view_directions(cam);
    const auto f = random_image(5, 4, 2, 0, 1, 8);
    const auto g = random_image(5, 4, 3, -1, 1, 9);
    LinearShader<double> s;
    s.feature_dim = 2;
    s.view_conditioned = true;
    std::mt19937_64 rng(10);
    s.weight.resize(15);
    for (auto& w : s.weight) w = synth::uniform(rng, -0.3, 0.3);
    s.bias = {0.4, 0.5, 0.45};
    const auto grads = shade_linear_backward(f, s, g, &view);
    expect_matches_fd(f, g, grads.d_features,
                      [&](const FeatureImage<double>& x) { return shade_linear(x, s, &view); }, 1e-6);

    auto loss = [&](std::span<const double> p) {
        LinearShader<double> t = s;
        t.set_parameters(p);
        return weighted_sum(shade_linear(f, t, &view), g);
    };
    const auto params = s.parameters();
    const auto fd = testkit::fd_gradient(loss, params, 1e-7);
    for (std::size_t i = 0; i < params.size(); ++i) EXPECT_NEAR(grads.d_parameters[i], fd.gradient[i], 1e-6) << i;
}

TEST(Linear, DimensionMismatchThrows) {
    const auto s = LinearShader<double>::identity(3, true);
    const auto f = random_image(2, 2, 3, 0, 1, 11);
    EXPECT_THROW(shade_linear(f, s), ValidationError);
    EXPECT_THROW(shade_linear(random_image(2, 2, 4, 0, 1, 12), LinearShader<double>::identity(3)), ValidationError);
    LinearShader<double> bad = LinearShader<double>::identity(3);
    bad.weight.pop_back();
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Shading, CommutesWithPixelPermutation) {
    const auto f = random_image(6, 1, 6, 0, 1, 13);
    FeatureImage<double> r(6, 1, 6);
    for (std::size_t p = 0; p < 6; ++p) std::copy_n(f.pixel(5 - p).begin(), 6, r.pixel(p).begin());
    const std::vector<DirectionalLight> lights{light({0.3, 0.3, 1}, 0.8, 0.2)};
    ShaderStage<double> stages[3];
    stages[0].kind = ShaderKind::diffuse;
    stages[0].lights = lights;
    stages[1].kind = ShaderKind::linear;
    stages[1].linear = LinearShader<double>::identity(6);
    stages[1].linear.weight[10] = 0.5;
    stages[2].kind = ShaderKind::none;
    Camera<double> cam;
    cam.width = 6;
    cam.height = 1;
    for (const auto& st : stages) {
        const auto a = st.forward(f, cam);
        const auto b = st.forward(r, cam);
        for (std::size_t p = 0; p < 6; ++p)
            for (int c = 0; c < a.channels; ++c) EXPECT_EQ(a.pixel(p)[c], b.pixel(5 - p)[c]);
    }
}

TEST(Shading, StageOutputDims) {
    ShaderStage<double> st;
    EXPECT_EQ(st.output_dim(1), 1);
    st.kind = ShaderKind::identity;
    EXPECT_THROW(st.output_dim(1), ValidationError);
    st.kind = ShaderKind::diffuse;
    EXPECT_EQ(st.output_dim(6), 3);
    EXPECT_THROW(st.output_dim(3), ValidationError);
}
