#include "softsphere/camera.hpp"

#include <cmath>
#include <string>

#include "softsphere/errors.hpp"

namespace softsphere {

namespace {

template <typename T>
constexpr T kDegenerateColumn = T(1e-8);

template <typename T>
Vec3<T> first3(const std::array<T, 6>& a) {
    return {a[0], a[1], a[2]};
}

template <typename T>
Vec3<T> last3(const std::array<T, 6>& a) {
    return {a[3], a[4], a[5]};
}

}  // namespace

template <typename T>
Mat3<T> rotation_from_axis_angle(const Vec3<T>& v) {
    const T theta2 = dot(v, v);
    const Mat3<T> k = Mat3<T>::skew(v);
    const Mat3<T> k2 = k * k;
    T a, b;
    if (theta2 < T(1e-12)) {
        // Taylor expansion of sin(t)/t and (1 - cos(t))/t^2.
        a = T(1) - theta2 / T(6);
        b = T(0.5) - theta2 / T(24);
    } else {
        const T theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (T(1) - std::cos(theta)) / theta2;
    }
    return Mat3<T>::identity() + k * a + k2 * b;
}

template <typename T>
Mat3<T> rotation_from_6d(const Vec3<T>& a1, const Vec3<T>& a2) {
    const T n1 = norm(a1);
    if (!(n1 >= kDegenerateColumn<T>)) throw ConfigError("6D rotation: first column is (near) zero");
    const Vec3<T> b1 = a1 / n1;
    const Vec3<T> u2 = a2 - b1 * dot(b1, a2);
    const T n2 = norm(u2);
    if (!(n2 >= kDegenerateColumn<T>)) throw ConfigError("6D rotation: columns are (near) parallel");
    const Vec3<T> b2 = u2 / n2;
    return Mat3<T>::from_columns(b1, b2, cross(b1, b2));
}

template <typename T>
Vec3<T> axis_angle_backward(const Vec3<T>& v, const Mat3<T>& grad_rotation) {
    const T theta2 = dot(v, v);
    Vec3<T> out;
    if (theta2 < T(1e-14)) {
        for (int i = 0; i < 3; ++i) {
            Vec3<T> e;
            e[i] = T(1);
            out[i] = grad_rotation.inner(Mat3<T>::skew(e));
        }
        return out;
    }
    // dR/dv_i = (v_i [v]x + [v x ((I - R) e_i)]x) R / |v|^2
    const Mat3<T> r = rotation_from_axis_angle(v);
    const Mat3<T> kv = Mat3<T>::skew(v);
    for (int i = 0; i < 3; ++i) {
        Vec3<T> e;
        e[i] = T(1);
        const Vec3<T> ime = e - r * e;
        const Mat3<T> d = (kv * v[i] + Mat3<T>::skew(cross(v, ime))) * r * (T(1) / theta2);
        out[i] = grad_rotation.inner(d);
    }
    return out;
}

template <typename T>
std::array<T, 6> six_d_backward(const Vec3<T>& a1, const Vec3<T>& a2, const Mat3<T>& grad_rotation) {
    const T n1 = norm(a1);
    const Vec3<T> b1 = a1 / n1;
    const T proj = dot(b1, a2);
    const Vec3<T> u2 = a2 - b1 * proj;
    const T n2 = norm(u2);
    const Vec3<T> b2 = u2 / n2;

    Vec3<T> g_b1 = grad_rotation.column(0);
    Vec3<T> g_b2 = grad_rotation.column(1);
    const Vec3<T> g_b3 = grad_rotation.column(2);

    // b3 = b1 x b2
    g_b1 += cross(b2, g_b3);
    g_b2 += cross(g_b3, b1);
    // b2 = u2 / |u2|
    const Vec3<T> g_u2 = (g_b2 - b2 * dot(b2, g_b2)) / n2;
    // u2 = a2 - (b1 . a2) b1
    const T gu_b1 = dot(g_u2, b1);
    const Vec3<T> g_a2 = g_u2 - b1 * gu_b1;
    g_b1 -= a2 * gu_b1 + g_u2 * proj;
    // b1 = a1 / |a1|
    const Vec3<T> g_a1 = (g_b1 - b1 * dot(b1, g_b1)) / n1;
    return {g_a1.x, g_a1.y, g_a1.z, g_a2.x, g_a2.y, g_a2.z};
}

template <typename T>
void Camera<T>::validate() const {
    if (width < 1 || height < 1 || width > 65535 || height > 65535)
        throw ConfigError("image size must be in [1, 65535], got " + std::to_string(width) + "x" +
                          std::to_string(height));
    if (!(focal_length > 0) || !std::isfinite(focal_length)) throw ConfigError("focal length must be > 0");
    if (!(sensor_width > 0) || !std::isfinite(sensor_width)) throw ConfigError("sensor width must be > 0");
    if (!(near_plane >= 0) || !(far_plane > near_plane) || !std::isfinite(far_plane))
        throw ConfigError("depth range must satisfy 0 <= near < far");
    if (!((far_plane - near_plane) > T(0))) throw ConfigError("depth range underflows");
    if (!all_finite(translation)) throw ConfigError("camera translation must be finite");
    for (std::size_t i = 0; i < rotation_size(); ++i)
        if (!std::isfinite(rotation[i])) throw ConfigError("camera rotation must be finite");
    if (rotation_form == RotationForm::six_d) (void)rotation_from_6d(first3(rotation), last3(rotation));
}

template <typename T>
Mat3<T> Camera<T>::rotation_matrix() const {
    if (rotation_form == RotationForm::axis_angle) return rotation_from_axis_angle(first3(rotation));
    return rotation_from_6d(first3(rotation), last3(rotation));
}

template <typename T>
std::vector<T> Camera<T>::to_vector() const {
    std::vector<T> v{translation.x, translation.y, translation.z};
    for (std::size_t i = 0; i < rotation_size(); ++i) v.push_back(rotation[i]);
    v.push_back(focal_length);
    v.push_back(sensor_width);
    return v;
}

template <typename T>
Camera<T> camera_from_vector(std::span<const T> v, const CameraSettings& settings) {
    if (v.size() != 8 && v.size() != 11)
        throw ConfigError("camera vector must have 8 or 11 values, got " + std::to_string(v.size()));
    Camera<T> cam;
    cam.translation = {v[0], v[1], v[2]};
    cam.rotation_form = v.size() == 8 ? RotationForm::axis_angle : RotationForm::six_d;
    const std::size_t n_rot = cam.rotation_size();
    for (std::size_t i = 0; i < n_rot; ++i) cam.rotation[i] = v[3 + i];
    cam.focal_length = v[3 + n_rot];
    cam.sensor_width = v[4 + n_rot];
    cam.width = settings.width;
    cam.height = settings.height;
    cam.near_plane = static_cast<T>(settings.near_plane);
    cam.far_plane = static_cast<T>(settings.far_plane);
    cam.projection = settings.projection;
    cam.validate();
    return cam;
}

template <typename T>
std::optional<ProjectedPoint<T>> project_point(const Camera<T>& cam, const Vec3<T>& p) {
    const Vec3<T> q = cam.world_to_camera(p);
    const T scale = T(1) / cam.pixel_size();
    const T cu = static_cast<T>(cam.width) * T(0.5);
    const T cv = static_cast<T>(cam.height) * T(0.5);
    if (cam.projection == Projection::orthographic) {
        if (!(q.z > 0)) return std::nullopt;
        return ProjectedPoint<T>{cu + q.x * scale, cv + q.y * scale, q.z, q.z};
    }
    if (!(q.z > 0)) return std::nullopt;
    const T k = cam.focal_length / q.z * scale;
    return ProjectedPoint<T>{cu + q.x * k, cv + q.y * k, q.z, norm(q)};
}

#define SOFTSPHERE_INSTANTIATE_CAMERA(T)                                                               \
    template struct Camera<T>;                                                                         \
    template Camera<T> camera_from_vector<T>(std::span<const T>, const CameraSettings&);               \
    template std::optional<ProjectedPoint<T>> project_point<T>(const Camera<T>&, const Vec3<T>&);      \
    template Mat3<T> rotation_from_axis_angle<T>(const Vec3<T>&);                                      \
    template Mat3<T> rotation_from_6d<T>(const Vec3<T>&, const Vec3<T>&);                              \
    template Vec3<T> axis_angle_backward<T>(const Vec3<T>&, const Mat3<T>&);                           \
    template std::array<T, 6> six_d_backward<T>(const Vec3<T>&, const Vec3<T>&, const Mat3<T>&);

SOFTSPHERE_INSTANTIATE_CAMERA(float)
SOFTSPHERE_INSTANTIATE_CAMERA(double)
SOFTSPHERE_INSTANTIATE_CAMERA(long double)

}  // namespace softsphere
