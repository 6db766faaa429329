#include "softsphere/synth.hpp"

#include <cmath>

namespace softsphere::synth {

template <typename T>
SphereScene<T> random_demo_scene(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SphereScene<T> scene(3, {T(0), T(0), T(0)});
    std::vector<Sphere<T>> spheres(count);
    for (auto& s : spheres) {
        s.position = {static_cast<T>(uniform(rng, -5, 5)), static_cast<T>(uniform(rng, -5, 5)),
                      static_cast<T>(uniform(rng, 25, 35))};
        s.radius = static_cast<T>(1.0 - uniform(rng, 0, 1));  // (0, 1]
        s.opacity = T(1);
        s.feature = {static_cast<T>(uniform(rng, 0, 1)), static_cast<T>(uniform(rng, 0, 1)),
                     static_cast<T>(uniform(rng, 0, 1))};
    }
    scene.add_spheres(spheres);
    return scene;
}

template <typename T>
SphereScene<T> random_scene(const RandomSceneOptions& o, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<T> bg(static_cast<std::size_t>(o.feature_dim));
    for (auto& v : bg) v = static_cast<T>(uniform(rng, 0, 1));
    SphereScene<T> scene(o.feature_dim, bg);
    std::vector<Sphere<T>> spheres(o.count);
    for (auto& s : spheres) {
        const double z = uniform(rng, o.depth_min, o.depth_max);
        // Keep the lateral spread proportional to depth so spheres stay in view.
        const double lat = o.lateral * z / 25.0;
        s.position = {static_cast<T>(uniform(rng, -lat, lat)), static_cast<T>(uniform(rng, -lat, lat)),
                      static_cast<T>(z)};
        s.radius = static_cast<T>(uniform(rng, o.radius_min, o.radius_max));
        s.opacity = static_cast<T>(uniform(rng, o.opacity_min, o.opacity_max));
        s.feature.resize(bg.size());
        for (auto& f : s.feature) f = static_cast<T>(uniform(rng, 0, 1));
    }
    scene.add_spheres(spheres);
    return scene;
}

template <typename T>
SphereScene<T> occluded_scene(std::size_t hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SphereScene<T> scene(3, {T(0), T(0), T(0)});
    std::vector<Sphere<T>> spheres;
    // Near layer at depth 4: the view half-width there is 4 * 0.2 = 0.8 for f = 5, s = 2.
    constexpr int kGrid = 8;
    const double half = 1.0;
    const double step = 2.0 * half / (kGrid - 1);
    for (int i = 0; i < kGrid; ++i) {
        for (int j = 0; j < kGrid; ++j) {
            Sphere<T> s;
            s.position = {static_cast<T>(-half + i * step), static_cast<T>(-half + j * step),
                          static_cast<T>(4.0 + uniform(rng, 0, 0.2))};
            s.radius = static_cast<T>(step * 1.6);
            s.opacity = T(1);
            s.feature = {static_cast<T>(uniform(rng, 0, 1)), static_cast<T>(uniform(rng, 0, 1)),
                         static_cast<T>(uniform(rng, 0, 1))};
            spheres.push_back(std::move(s));
        }
    }
    for (std::size_t k = 0; k < hidden; ++k) {
        Sphere<T> s;
        const double z = uniform(rng, 30, 42);
        const double lat = 0.2 * z;
        s.position = {static_cast<T>(uniform(rng, -lat, lat)), static_cast<T>(uniform(rng, -lat, lat)),
                      static_cast<T>(z)};
        s.radius = static_cast<T>(uniform(rng, 0.2, 0.6));
        s.opacity = T(1);
        s.feature = {static_cast<T>(uniform(rng, 0, 1)), static_cast<T>(uniform(rng, 0, 1)),
                     static_cast<T>(uniform(rng, 0, 1))};
        spheres.push_back(std::move(s));
    }
    scene.add_spheres(spheres);
    return scene;
}

template <typename T>
SphereScene<T> uniform_scene(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SphereScene<T> scene(3, {T(1), T(1), T(1)});
    std::vector<Sphere<T>> spheres(count);
    // Total projected area ~ constant: r ~ 1 / sqrt(count).
    const double base = 6.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(count, 1)));
    for (auto& s : spheres) {
        const double z = uniform(rng, 20, 40);
        const double lat = 0.2 * z;
        s.position = {static_cast<T>(uniform(rng, -lat, lat)), static_cast<T>(uniform(rng, -lat, lat)),
                      static_cast<T>(z)};
        s.radius = static_cast<T>(base * uniform(rng, 0.5, 1.5) * z / 30.0);
        s.opacity = static_cast<T>(uniform(rng, 0.5, 1.0));
        s.feature = {static_cast<T>(uniform(rng, 0, 1)), static_cast<T>(uniform(rng, 0, 1)),
                     static_cast<T>(uniform(rng, 0, 1))};
    }
    scene.add_spheres(spheres);
    return scene;
}

template <typename T>
SphereScene<T> volume_fill(const Camera<T>& camera, std::size_t count, double depth_min, double depth_max,
                           double pixel_radius, int feature_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SphereScene<T> scene(feature_dim, std::vector<T>(static_cast<std::size_t>(feature_dim), T(0)));
    const Mat3<T> rot = camera.rotation_matrix();
    const double px = static_cast<double>(camera.pixel_size());
    const double half_w = 0.5 * camera.width * px;
    const double half_h = 0.5 * camera.height * px;
    std::vector<Sphere<T>> spheres(count);
    for (auto& s : spheres) {
        const double depth = uniform(rng, depth_min, depth_max);
        Vec3<T> local;
        double world_per_pixel;
        if (camera.projection == Projection::orthographic) {
            local = {static_cast<T>(uniform(rng, -half_w, half_w)), static_cast<T>(uniform(rng, -half_h, half_h)),
                     static_cast<T>(depth)};
            world_per_pixel = px;
        } else {
            const double scale = depth / static_cast<double>(camera.focal_length);
            local = {static_cast<T>(uniform(rng, -half_w, half_w) * scale),
                     static_cast<T>(uniform(rng, -half_h, half_h) * scale), static_cast<T>(depth)};
            world_per_pixel = px * scale;
        }
        s.position = camera.translation + rot * local;
        s.radius = static_cast<T>(pixel_radius * world_per_pixel);
        s.opacity = T(1);
        s.feature.resize(static_cast<std::size_t>(feature_dim));
        for (auto& f : s.feature) f = static_cast<T>(uniform(rng, 0, 1));
    }
    scene.add_spheres(spheres);
    return scene;
}

#define SOFTSPHERE_INSTANTIATE_SYNTH(T)                                                                  \
    template SphereScene<T> random_demo_scene<T>(std::size_t, std::uint64_t);                           \
    template SphereScene<T> random_scene<T>(const RandomSceneOptions&, std::uint64_t);                   \
    template SphereScene<T> occluded_scene<T>(std::size_t, std::uint64_t);                               \
    template SphereScene<T> uniform_scene<T>(std::size_t, std::uint64_t);                                \
    template SphereScene<T> volume_fill<T>(const Camera<T>&, std::size_t, double, double, double, int,   \
                                           std::uint64_t);

SOFTSPHERE_INSTANTIATE_SYNTH(float)
SOFTSPHERE_INSTANTIATE_SYNTH(double)

}  // namespace softsphere::synth
