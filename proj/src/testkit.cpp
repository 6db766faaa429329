#include "softsphere/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace softsphere::testkit {

template <typename T>
std::vector<long double> oracle_render_extended(const SphereScene<T>& scene, const Camera<T>& camera,
                                                const BlendParams& params) {
    using L = long double;
    camera.validate();
    const Camera<L> cam = camera.template cast<L>();
    const std::size_t dim = static_cast<std::size_t>(scene.feature_dim());
    std::vector<L> image(static_cast<std::size_t>(camera.width) * camera.height * dim);
    const L gamma = static_cast<L>(std::clamp(params.gamma, kGammaMin, kGammaMax));
    const L bg_exponent = static_cast<L>(params.epsilon) / gamma;
    const L near = cam.near_plane, far = cam.far_plane;

    struct Hit {
        std::size_t id;
        L exponent;
        L factor;
    };
    std::vector<Hit> hits;
    std::vector<L> accum(dim);

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const Ray<L> ray = pixel_ray(cam, x, y);
            hits.clear();
            for (std::size_t i = 0; i < scene.size(); ++i) {
                const auto& s = scene[i];
                const Vec3<L> v = Vec3<L>(s.position) - ray.origin;
                const L t = dot(v, ray.direction);
                if (!(t > 0)) continue;
                const L dist = norm(v - ray.direction * t);
                const L r = s.radius;
                if (!(dist < r)) continue;
                const L o = std::clamp(L(s.opacity), L(0), L(1));
                const L depth = std::clamp(t, near, far);
                const L z = (far - depth) / (far - near);
                hits.push_back({i, o * z / gamma, o * (L(1) - dist / r)});
            }
            // Two passes: find the largest exponent, then sum relative to it.
            L max_exponent = bg_exponent;
            for (const auto& h : hits)
                if (h.factor > 0) max_exponent = std::max(max_exponent, h.exponent);
            const L bg_term = std::exp(bg_exponent - max_exponent);
            L denominator = bg_term;
            for (std::size_t c = 0; c < dim; ++c) accum[c] = bg_term * L(scene.background()[c]);
            for (const auto& h : hits) {
                const L term = h.factor * std::exp(h.exponent - max_exponent);
                denominator += term;
                for (std::size_t c = 0; c < dim; ++c) accum[c] += term * L(scene[h.id].feature[c]);
            }
            L* out = image.data() + (static_cast<std::size_t>(y) * camera.width + x) * dim;
            for (std::size_t c = 0; c < dim; ++c) out[c] = accum[c] / denominator;
        }
    }
    return image;
}

template <typename T>
FeatureImage<T> oracle_render(const SphereScene<T>& scene, const Camera<T>& camera, const BlendParams& params) {
    const auto ext = oracle_render_extended(scene, camera, params);
    FeatureImage<T> image(camera.width, camera.height, scene.feature_dim());
    std::transform(ext.begin(), ext.end(), image.data.begin(), [](long double v) { return static_cast<T>(v); });
    return image;
}

FdResult fd_gradient(const std::function<double(std::span<const double>)>& loss, std::span<const double> x,
                     double h) {
    FdResult out;
    out.gradient.assign(x.size(), 0.0);
    std::vector<double> probe(x.begin(), x.end());
    for (std::size_t j = 0; j < x.size(); ++j) {
        probe[j] = x[j] + h;
        const double plus = loss(probe);
        probe[j] = x[j] - h;
        const double minus = loss(probe);
        probe[j] = x[j];
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            out.non_finite.push_back(j);
            out.gradient[j] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        out.gradient[j] = (plus - minus) / (2.0 * h);
    }
    return out;
}

#define SOFTSPHERE_INSTANTIATE_TESTKIT(T)                                                                     \
    template std::vector<long double> oracle_render_extended<T>(const SphereScene<T>&, const Camera<T>&,     \
                                                                const BlendParams&);                          \
    template FeatureImage<T> oracle_render<T>(const SphereScene<T>&, const Camera<T>&, const BlendParams&);

SOFTSPHERE_INSTANTIATE_TESTKIT(float)
SOFTSPHERE_INSTANTIATE_TESTKIT(double)

}  // namespace softsphere::testkit
