#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <vector>

#include "softsphere/vec.hpp"

namespace softsphere {

enum class Projection { pinhole, orthographic };

/// How the camera vector encodes rotation: 3 axis-angle values or two 3-vectors that are
/// Gram-Schmidt orthonormalized into the first two columns of the rotation.
enum class RotationForm { axis_angle, six_d };

/// Parts of a camera that never appear in the camera vector.
struct CameraSettings {
    int width = 1024;
    int height = 1024;
    double near_plane = 0.1;
    double far_plane = 45.0;
    Projection projection = Projection::pinhole;
};

/// Camera with center `translation` and camera-to-world rotation R. Camera frame: +x right
/// (increasing pixel u), +y down (increasing pixel v), +z along the optical axis.
/// Pixels are square with side sensor_width / width; the principal point is the image center.
template <typename T>
struct Camera {
    Vec3<T> translation;
    RotationForm rotation_form = RotationForm::axis_angle;
    std::array<T, 6> rotation{0, 0, 0, 0, 0, 0};
    T focal_length{5};
    T sensor_width{2};
    int width = 1024;
    int height = 1024;
    T near_plane{0.1};
    T far_plane{45};
    Projection projection = Projection::pinhole;

    /// Throws ConfigError for non-positive focal/sensor/size, bad depth range or a degenerate
    /// 6D rotation.
    void validate() const;

    Mat3<T> rotation_matrix() const;
    T pixel_size() const { return sensor_width / static_cast<T>(width); }
    std::size_t rotation_size() const { return rotation_form == RotationForm::axis_angle ? 3 : 6; }

    /// 8 values (t, axis-angle, f, s) or 11 values (t, 6D, f, s).
    std::vector<T> to_vector() const;

    Vec3<T> world_to_camera(const Vec3<T>& p) const { return rotation_matrix().transpose_mul(p - translation); }

    template <typename U>
    Camera<U> cast() const {
        Camera<U> c;
        c.translation = Vec3<U>(translation);
        c.rotation_form = rotation_form;
        for (std::size_t i = 0; i < 6; ++i) c.rotation[i] = static_cast<U>(rotation[i]);
        c.focal_length = static_cast<U>(focal_length);
        c.sensor_width = static_cast<U>(sensor_width);
        c.width = width;
        c.height = height;
        c.near_plane = static_cast<U>(near_plane);
        c.far_plane = static_cast<U>(far_plane);
        c.projection = projection;
        return c;
    }

    bool operator==(const Camera&) const = default;
};

/// Builds a camera from the 8- or 11-value vector layout. Throws ConfigError on a wrong
/// length or a non-orthonormalizable 6D rotation.
template <typename T>
Camera<T> camera_from_vector(std::span<const T> v, const CameraSettings& settings = {});

template <typename T>
struct Ray {
    Vec3<T> origin;
    Vec3<T> direction;
};

/// Camera-frame ray through continuous pixel coordinates (u, v). Pixel (i, j) has its
/// center at (i + 0.5, j + 0.5).
template <typename T>
Ray<T> camera_space_ray(const Camera<T>& cam, T u, T v) {
    const T px = cam.pixel_size();
    const T sx = (u - static_cast<T>(cam.width) * T(0.5)) * px;
    const T sy = (v - static_cast<T>(cam.height) * T(0.5)) * px;
    if (cam.projection == Projection::orthographic) return {{sx, sy, T(0)}, {T(0), T(0), T(1)}};
    return {{T(0), T(0), T(0)}, normalized(Vec3<T>{sx, sy, cam.focal_length})};
}

/// World-space ray through the center of pixel (u, v).
template <typename T>
Ray<T> pixel_ray(const Camera<T>& cam, int u, int v) {
    const auto r = camera_space_ray(cam, static_cast<T>(u) + T(0.5), static_cast<T>(v) + T(0.5));
    const Mat3<T> rot = cam.rotation_matrix();
    return {cam.translation + rot * r.origin, rot * r.direction};
}

/// Linear depth mapping: far plane -> 0, near plane -> 1. Input is clamped to [near, far].
template <typename T>
T ndc_depth(T metric_depth, T near_plane, T far_plane) {
    const T d = std::clamp(metric_depth, near_plane, far_plane);
    return (far_plane - d) / (far_plane - near_plane);
}

template <typename T>
T ndc_depth(const Camera<T>& cam, T metric_depth) {
    return ndc_depth(metric_depth, cam.near_plane, cam.far_plane);
}

template <typename T>
struct ProjectedPoint {
    T u;
    T v;
    /// Depth along the optical axis.
    T depth;
    /// Distance from the ray origin along the pixel ray; this is the depth the blend uses.
    T ray_distance;
};

/// Continuous pixel coordinates of a world point; nullopt when the point is at or behind
/// the camera plane.
template <typename T>
std::optional<ProjectedPoint<T>> project_point(const Camera<T>& cam, const Vec3<T>& p);

template <typename T>
Mat3<T> rotation_from_axis_angle(const Vec3<T>& v);

/// Throws ConfigError when the first column has norm < 1e-8 or the columns are parallel.
template <typename T>
Mat3<T> rotation_from_6d(const Vec3<T>& a1, const Vec3<T>& a2);

/// Back-propagates dL/dR (row-major) onto the axis-angle vector.
template <typename T>
Vec3<T> axis_angle_backward(const Vec3<T>& v, const Mat3<T>& grad_rotation);

/// Back-propagates dL/dR onto the two 6D input columns.
template <typename T>
std::array<T, 6> six_d_backward(const Vec3<T>& a1, const Vec3<T>& a2, const Mat3<T>& grad_rotation);

}  // namespace softsphere
