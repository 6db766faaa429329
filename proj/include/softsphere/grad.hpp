#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "softsphere/raster.hpp"

namespace softsphere {

template <typename T>
struct SceneGradients {
    std::vector<Vec3<T>> d_position;
    std::vector<T> d_radius;
    std::vector<T> d_opacity;
    /// Flat M x d.
    std::vector<T> d_feature;
    /// Pixels whose backward record lists the sphere.
    std::vector<std::uint32_t> pixel_count;
    int feature_dim = 0;

    SceneGradients() = default;
    SceneGradients(std::size_t spheres, int dim)
        : d_position(spheres), d_radius(spheres, T(0)), d_opacity(spheres, T(0)),
          d_feature(spheres * static_cast<std::size_t>(dim), T(0)), pixel_count(spheres, 0), feature_dim(dim) {}

    std::size_t size() const { return d_radius.size(); }
    std::span<T> feature(std::size_t i) {
        return {d_feature.data() + i * static_cast<std::size_t>(feature_dim), static_cast<std::size_t>(feature_dim)};
    }
    std::span<const T> feature(std::size_t i) const {
        return {d_feature.data() + i * static_cast<std::size_t>(feature_dim), static_cast<std::size_t>(feature_dim)};
    }
};

template <typename T>
struct CameraGradients {
    Vec3<T> d_translation;
    /// 3 (axis-angle) or 6 (6D) entries, matching the camera.
    std::vector<T> d_rotation;
    T d_focal = 0;
    T d_sensor_width = 0;

    /// Same order as Camera::to_vector().
    std::vector<T> to_vector() const;
};

enum class GradientNormalization {
    /// Exact derivatives of the loss (sums over pixels).
    none,
    /// Sphere gradients averaged over contributing pixels; per-sphere camera terms scaled by
    /// 1e-3 / covered pixel area before summation.
    per_pixel_mean,
};

inline constexpr double kCameraGradientScale = 1e-3;
inline constexpr double kGatingRadiusPixels = 3.0;

struct BackwardSettings {
    GradientNormalization normalization = GradientNormalization::per_pixel_mean;
    /// Zero position and radius gradients of spheres whose projected radius is <= 3 px.
    bool gate_small_spheres = true;
    int tile_size = 16;
    int workers = 0;
};

/// Read-only state shared by every pixel of a backward pass.
template <typename T>
struct BackwardContext {
    const SphereScene<T>* scene = nullptr;
    const Camera<T>* camera = nullptr;
    BlendParams params;
    /// Sphere centers in camera space.
    std::vector<Vec3<T>> camera_positions;
    std::vector<T> opacity;
};

template <typename T>
BackwardContext<T> make_backward_context(const SphereScene<T>& scene, const Camera<T>& camera,
                                         const BlendParams& params);

/// Un-normalized derivatives one pixel contributes to one sphere. d_position is with respect
/// to the camera-space center; the camera terms cover only the ray's dependence on focal
/// length and sensor width (translation/rotation follow from d_position).
template <typename T>
struct PixelContribution {
    std::uint32_t sphere_id = 0;
    Vec3<T> d_position;
    T d_radius = 0;
    T d_opacity = 0;
    std::vector<T> d_feature;
    T d_focal = 0;
    T d_sensor_width = 0;
};

/// Gradient contributions of pixel (x, y) given the upstream dL/dF for that pixel.
/// Throws ContractError when the buffer does not belong to this scene.
template <typename T>
std::vector<PixelContribution<T>> backward_pixel(int x, int y, std::span<const T> upstream,
                                                 const BackwardBuffer<T>& buffer, const BackwardContext<T>& ctx);

/// Per-sphere sums of pixel contributions (camera-space position gradient, intrinsics).
template <typename T>
struct RawGradients {
    SceneGradients<T> scene;
    std::vector<T> d_focal;
    std::vector<T> d_sensor_width;
};

/// Converts per-sphere sums into world-space scene gradients and camera gradients,
/// applying the chosen normalization. Reduction over spheres is in index order.
template <typename T>
std::pair<SceneGradients<T>, CameraGradients<T>> accumulate_and_normalize(const RawGradients<T>& raw,
                                                                          const BackwardContext<T>& ctx,
                                                                          GradientNormalization normalization);

/// Zeroes d_position and d_radius of spheres with projected radius <= 3 pixels.
template <typename T>
void gate_small_spheres(const SphereScene<T>& scene, const Camera<T>& camera, SceneGradients<T>& gradients);

/// Full backward pass for dL/dF = `upstream`.
template <typename T>
std::pair<SceneGradients<T>, CameraGradients<T>> render_backward(const SphereScene<T>& scene,
                                                                 const Camera<T>& camera, const BlendParams& params,
                                                                 const BackwardBuffer<T>& buffer,
                                                                 const FeatureImage<T>& upstream,
                                                                 const BackwardSettings& settings = {});

}  // namespace softsphere
