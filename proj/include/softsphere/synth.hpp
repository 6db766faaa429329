#pragma once

#include <cstdint>
#include <random>

#include "softsphere/camera.hpp"
#include "softsphere/scene.hpp"

namespace softsphere::synth {

/// Uniform real in [lo, hi) from a 64-bit engine; identical across platforms.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Ten-sphere style demo scene: x, y in [-5, 5], z in [25, 35], radius in (0, 1],
/// random RGB, opaque, black background.
template <typename T>
SphereScene<T> random_demo_scene(std::size_t count, std::uint64_t seed);

struct RandomSceneOptions {
    std::size_t count = 16;
    int feature_dim = 3;
    double lateral = 5.0;
    double depth_min = 20.0;
    double depth_max = 35.0;
    double radius_min = 0.3;
    double radius_max = 2.0;
    double opacity_min = 0.05;
    double opacity_max = 1.0;
};

/// Spheres in front of the default camera (looking down +z from the origin).
template <typename T>
SphereScene<T> random_scene(const RandomSceneOptions& options, std::uint64_t seed);

/// An opaque layer of large spheres close to the camera covering the whole view of a
/// camera with f/s = 2.5, followed by `hidden` spheres far behind it.
template <typename T>
SphereScene<T> occluded_scene(std::size_t hidden, std::uint64_t seed);

/// `count` spheres spread through a slab in front of the camera, radius scaled so the scene
/// keeps roughly constant depth complexity regardless of count.
template <typename T>
SphereScene<T> uniform_scene(std::size_t count, std::uint64_t seed);

/// Fills the view frustum of `camera` between two depths with `count` spheres whose radius
/// grows linearly with depth so each covers about `pixel_radius` pixels.
template <typename T>
SphereScene<T> volume_fill(const Camera<T>& camera, std::size_t count, double depth_min, double depth_max,
                           double pixel_radius, int feature_dim, std::uint64_t seed);

}  // namespace softsphere::synth
