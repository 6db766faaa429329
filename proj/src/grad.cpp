#include "softsphere/grad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "softsphere/errors.hpp"
#include "softsphere/parallel.hpp"

namespace softsphere {

template <typename T>
std::vector<T> CameraGradients<T>::to_vector() const {
    std::vector<T> v{d_translation.x, d_translation.y, d_translation.z};
    v.insert(v.end(), d_rotation.begin(), d_rotation.end());
    v.push_back(d_focal);
    v.push_back(d_sensor_width);
    return v;
}

template <typename T>
BackwardContext<T> make_backward_context(const SphereScene<T>& scene, const Camera<T>& camera,
                                         const BlendParams& params) {
    BackwardContext<T> ctx;
    ctx.scene = &scene;
    ctx.camera = &camera;
    ctx.params = params;
    const Mat3<T> rot = camera.rotation_matrix();
    ctx.camera_positions.reserve(scene.size());
    ctx.opacity.reserve(scene.size());
    for (const auto& s : scene.spheres()) {
        ctx.camera_positions.push_back(rot.transpose_mul(s.position - camera.translation));
        ctx.opacity.push_back(std::clamp(s.opacity, T(0), T(1)));
    }
    return ctx;
}

namespace {

template <typename T>
void check_buffer(const BackwardBuffer<T>& buffer, const BackwardContext<T>& ctx) {
    if (buffer.sphere_count() != ctx.scene->size())
        throw ContractError("backward buffer was produced for " + std::to_string(buffer.sphere_count()) +
                            " spheres, scene has " + std::to_string(ctx.scene->size()));
    if (buffer.width() != ctx.camera->width || buffer.height() != ctx.camera->height)
        throw ContractError("backward buffer size does not match the camera");
}

/// Calls sink(entry, weight, d_position_cam, d_radius, d_opacity, d_focal, d_sensor) for
/// every stored hit of the pixel. d_feature is weight * upstream.
template <typename T, typename Sink>
void backward_pixel_impl(int x, int y, std::span<const T> upstream, const BackwardBuffer<T>& buffer,
                         const BackwardContext<T>& ctx, std::vector<T>& scratch, Sink&& sink) {
    const std::size_t pixel = buffer.index(x, y);
    const auto entries = buffer.entries(pixel);
    if (entries.empty()) return;
    const auto& scene = *ctx.scene;
    const auto& cam = *ctx.camera;
    const std::size_t dim = static_cast<std::size_t>(scene.feature_dim());

    bool any = false;
    for (const T g : upstream) any = any || g != T(0);
    if (!any) return;

    const T gamma = static_cast<T>(ctx.params.effective_gamma());
    const T inv_gamma = T(1) / gamma;
    const T log_den = buffer.log_denominator(pixel);

    // Blended feature reconstructed from the stored hits.
    scratch.assign(dim, T(0));
    const T w_bg = buffer.background_weight(pixel);
    for (std::size_t c = 0; c < dim; ++c) scratch[c] = w_bg * scene.background()[c];
    for (const auto& e : entries) {
        const T o = ctx.opacity[e.sphere_id];
        const T w = o * e.closeness * std::exp(o * e.z * inv_gamma - log_den);
        const auto& f = scene[e.sphere_id].feature;
        for (std::size_t c = 0; c < dim; ++c) scratch[c] += w * f[c];
    }

    const T uc = static_cast<T>(x) + T(0.5), vc = static_cast<T>(y) + T(0.5);
    const Ray<T> ray = camera_space_ray(cam, uc, vc);
    const T lateral_u = (uc - static_cast<T>(cam.width) * T(0.5)) / static_cast<T>(cam.width);
    const T lateral_v = (vc - static_cast<T>(cam.height) * T(0.5)) / static_cast<T>(cam.width);
    const T depth_range = cam.far_plane - cam.near_plane;

    for (const auto& e : entries) {
        const auto id = e.sphere_id;
        const auto& sphere = scene[id];
        const T o = ctx.opacity[id];
        const T a = o * e.z * inv_gamma;
        const T expo = std::exp(a - log_den);
        const T w = o * e.closeness * expo;

        T h = 0;
        for (std::size_t c = 0; c < dim; ++c) h += upstream[c] * (sphere.feature[c] - scratch[c]);

        const T dl_dz = h * w * o * inv_gamma;
        const T dl_dc = h * o * expo;
        const bool opacity_free = sphere.opacity >= T(0) && sphere.opacity <= T(1);
        const T dl_do = opacity_free ? h * e.closeness * expo * (T(1) + a) : T(0);

        const Vec3<T> v = ctx.camera_positions[id] - ray.origin;
        const T t = dot(v, ray.direction);
        const Vec3<T> perp = v - ray.direction * t;
        const T dist = norm(perp);
        const T r = sphere.radius;

        Vec3<T> g_v, g_d;
        if (dist > T(0)) {
            const Vec3<T> unit_perp = perp / dist;
            g_v += unit_perp * (-dl_dc / r);
            g_d += unit_perp * (dl_dc * t / r);
        }
        const T dl_dr = dl_dc * dist / (r * r);
        if (t > cam.near_plane && t < cam.far_plane) {
            const T g_t = -dl_dz / depth_range;
            g_v += ray.direction * g_t;
            g_d += v * g_t;
        }

        T d_focal = 0, d_sensor = 0;
        if (cam.projection == Projection::pinhole) {
            const Vec3<T> q{lateral_u * cam.sensor_width, lateral_v * cam.sensor_width, cam.focal_length};
            const T nq = norm(q);
            const Vec3<T> g_q = (g_d - ray.direction * dot(ray.direction, g_d)) / nq;
            d_sensor = g_q.x * lateral_u + g_q.y * lateral_v;
            d_focal = g_q.z;
        } else {
            // Ray origin moves with the sensor; v = p - origin.
            d_sensor = -(g_v.x * lateral_u + g_v.y * lateral_v);
        }
        sink(e, w, g_v, dl_dr, dl_do, d_focal, d_sensor);
    }
}

template <typename T>
struct TileAccumulator {
    std::vector<std::uint32_t> ids;
    std::vector<Vec3<T>> d_position;
    std::vector<T> d_radius;
    std::vector<T> d_opacity;
    std::vector<T> d_feature;
    std::vector<T> d_focal;
    std::vector<T> d_sensor;
    std::vector<std::uint32_t> count;

    void reset(std::size_t slots, std::size_t dim) {
        d_position.assign(slots, Vec3<T>{});
        d_radius.assign(slots, T(0));
        d_opacity.assign(slots, T(0));
        d_feature.assign(slots * dim, T(0));
        d_focal.assign(slots, T(0));
        d_sensor.assign(slots, T(0));
        count.assign(slots, 0);
    }
    std::size_t slot(std::uint32_t id) const {
        return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    }
};

}  // namespace

template <typename T>
std::vector<PixelContribution<T>> backward_pixel(int x, int y, std::span<const T> upstream,
                                                 const BackwardBuffer<T>& buffer, const BackwardContext<T>& ctx) {
    check_buffer(buffer, ctx);
    if (upstream.size() != static_cast<std::size_t>(ctx.scene->feature_dim()))
        throw ValidationError("upstream gradient length does not match feature_dim");
    std::vector<PixelContribution<T>> out;
    std::vector<T> scratch;
    backward_pixel_impl<T>(x, y, upstream, buffer, ctx, scratch,
                           [&](const BufferEntry<T>& e, T w, const Vec3<T>& dp, T dr, T dop, T df, T ds) {
                               PixelContribution<T> c;
                               c.sphere_id = e.sphere_id;
                               c.d_position = dp;
                               c.d_radius = dr;
                               c.d_opacity = dop;
                               c.d_feature.resize(upstream.size());
                               for (std::size_t k = 0; k < upstream.size(); ++k) c.d_feature[k] = w * upstream[k];
                               c.d_focal = df;
                               c.d_sensor_width = ds;
                               out.push_back(std::move(c));
                           });
    return out;
}

template <typename T>
std::pair<SceneGradients<T>, CameraGradients<T>> accumulate_and_normalize(const RawGradients<T>& raw,
                                                                          const BackwardContext<T>& ctx,
                                                                          GradientNormalization normalization) {
    const auto& scene = *ctx.scene;
    const auto& cam = *ctx.camera;
    const Mat3<T> rot = cam.rotation_matrix();
    const std::size_t n = raw.scene.size();
    const std::size_t dim = static_cast<std::size_t>(scene.feature_dim());

    SceneGradients<T> out(n, scene.feature_dim());
    out.pixel_count = raw.scene.pixel_count;
    Vec3<T> d_translation;
    Mat3<T> d_rot = Mat3<T>::zero();
    T d_focal = 0, d_sensor = 0;

    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t count = raw.scene.pixel_count[i];
        if (count == 0) continue;
        const T sphere_scale = normalization == GradientNormalization::per_pixel_mean ? T(1) / static_cast<T>(count)
                                                                                     : T(1);
        const T camera_scale = normalization == GradientNormalization::per_pixel_mean
                                   ? static_cast<T>(kCameraGradientScale) / static_cast<T>(count)
                                   : T(1);
        const Vec3<T> g_cam = raw.scene.d_position[i];
        const Vec3<T> g_world = rot * g_cam;
        out.d_position[i] = g_world * sphere_scale;
        out.d_radius[i] = raw.scene.d_radius[i] * sphere_scale;
        out.d_opacity[i] = raw.scene.d_opacity[i] * sphere_scale;
        for (std::size_t c = 0; c < dim; ++c) out.d_feature[i * dim + c] = raw.scene.d_feature[i * dim + c] * sphere_scale;

        // p_cam = R^T (p - t)
        d_translation -= g_world * camera_scale;
        d_rot += outer(scene[i].position - cam.translation, g_cam) * camera_scale;
        d_focal += raw.d_focal[i] * camera_scale;
        d_sensor += raw.d_sensor_width[i] * camera_scale;
    }

    CameraGradients<T> cg;
    cg.d_translation = d_translation;
    cg.d_focal = d_focal;
    cg.d_sensor_width = d_sensor;
    const Vec3<T> a1{cam.rotation[0], cam.rotation[1], cam.rotation[2]};
    if (cam.rotation_form == RotationForm::axis_angle) {
        const Vec3<T> g = axis_angle_backward(a1, d_rot);
        cg.d_rotation = {g.x, g.y, g.z};
    } else {
        const Vec3<T> a2{cam.rotation[3], cam.rotation[4], cam.rotation[5]};
        const auto g = six_d_backward(a1, a2, d_rot);
        cg.d_rotation.assign(g.begin(), g.end());
    }
    return {std::move(out), std::move(cg)};
}

template <typename T>
void gate_small_spheres(const SphereScene<T>& scene, const Camera<T>& camera, SceneGradients<T>& gradients) {
    const auto list = compute_bounds(scene, camera);
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        if (list.draws[i].projected_radius <= static_cast<T>(kGatingRadiusPixels)) {
            gradients.d_position[i] = Vec3<T>{};
            gradients.d_radius[i] = T(0);
        }
    }
}

template <typename T>
std::pair<SceneGradients<T>, CameraGradients<T>> render_backward(const SphereScene<T>& scene,
                                                                 const Camera<T>& camera, const BlendParams& params,
                                                                 const BackwardBuffer<T>& buffer,
                                                                 const FeatureImage<T>& upstream,
                                                                 const BackwardSettings& settings) {
    const auto ctx = make_backward_context(scene, camera, params);
    check_buffer(buffer, ctx);
    if (upstream.width != camera.width || upstream.height != camera.height ||
        upstream.channels != scene.feature_dim())
        throw ValidationError("upstream gradient image is " + std::to_string(upstream.width) + "x" +
                              std::to_string(upstream.height) + "x" + std::to_string(upstream.channels) +
                              ", expected " + std::to_string(camera.width) + "x" + std::to_string(camera.height) +
                              "x" + std::to_string(scene.feature_dim()));
    if (settings.tile_size < 1) throw ConfigError("tile size must be positive");

    const int ts = settings.tile_size;
    const int tiles_x = (camera.width + ts - 1) / ts;
    const int tiles_y = (camera.height + ts - 1) / ts;
    const std::size_t n_tiles = static_cast<std::size_t>(tiles_x) * tiles_y;
    const std::size_t dim = static_cast<std::size_t>(scene.feature_dim());

    std::vector<TileAccumulator<T>> tiles(n_tiles);
    parallel_for(n_tiles, settings.workers, [&](std::size_t t) {
        const int tx = static_cast<int>(t % static_cast<std::size_t>(tiles_x));
        const int ty = static_cast<int>(t / static_cast<std::size_t>(tiles_x));
        const int x0 = tx * ts, y0 = ty * ts;
        const int x1 = std::min(camera.width, x0 + ts), y1 = std::min(camera.height, y0 + ts);
        auto& acc = tiles[t];
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (const auto& e : buffer.entries(buffer.index(x, y))) acc.ids.push_back(e.sphere_id);
        std::sort(acc.ids.begin(), acc.ids.end());
        acc.ids.erase(std::unique(acc.ids.begin(), acc.ids.end()), acc.ids.end());
        acc.reset(acc.ids.size(), dim);
        std::vector<T> scratch;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const auto g = upstream.pixel(buffer.index(x, y));
                backward_pixel_impl<T>(x, y, g, buffer, ctx, scratch,
                                       [&](const BufferEntry<T>& e, T w, const Vec3<T>& dp, T dr, T dop, T df, T ds) {
                                           const std::size_t s = acc.slot(e.sphere_id);
                                           acc.d_position[s] += dp;
                                           acc.d_radius[s] += dr;
                                           acc.d_opacity[s] += dop;
                                           T* feat = acc.d_feature.data() + s * dim;
                                           for (std::size_t c = 0; c < dim; ++c) feat[c] += w * g[c];
                                           acc.d_focal[s] += df;
                                           acc.d_sensor[s] += ds;
                                       });
                // Coverage counts every listed hit, even where the upstream is zero.
                for (const auto& e : buffer.entries(buffer.index(x, y))) ++acc.count[acc.slot(e.sphere_id)];
            }
        }
    });

    RawGradients<T> raw;
    raw.scene = SceneGradients<T>(scene.size(), scene.feature_dim());
    raw.d_focal.assign(scene.size(), T(0));
    raw.d_sensor_width.assign(scene.size(), T(0));
    for (const auto& acc : tiles) {
        for (std::size_t s = 0; s < acc.ids.size(); ++s) {
            const std::size_t i = acc.ids[s];
            raw.scene.d_position[i] += acc.d_position[s];
            raw.scene.d_radius[i] += acc.d_radius[s];
            raw.scene.d_opacity[i] += acc.d_opacity[s];
            for (std::size_t c = 0; c < dim; ++c) raw.scene.d_feature[i * dim + c] += acc.d_feature[s * dim + c];
            raw.d_focal[i] += acc.d_focal[s];
            raw.d_sensor_width[i] += acc.d_sensor[s];
            raw.scene.pixel_count[i] += acc.count[s];
        }
    }

    auto result = accumulate_and_normalize(raw, ctx, settings.normalization);
    if (settings.gate_small_spheres) gate_small_spheres(scene, camera, result.first);
    return result;
}

#define SOFTSPHERE_INSTANTIATE_GRAD(T)                                                                           \
    template struct CameraGradients<T>;                                                                          \
    template BackwardContext<T> make_backward_context<T>(const SphereScene<T>&, const Camera<T>&,                \
                                                         const BlendParams&);                                    \
    template std::vector<PixelContribution<T>> backward_pixel<T>(int, int, std::span<const T>,                   \
                                                                 const BackwardBuffer<T>&,                       \
                                                                 const BackwardContext<T>&);                     \
    template std::pair<SceneGradients<T>, CameraGradients<T>> accumulate_and_normalize<T>(                       \
        const RawGradients<T>&, const BackwardContext<T>&, GradientNormalization);                               \
    template void gate_small_spheres<T>(const SphereScene<T>&, const Camera<T>&, SceneGradients<T>&);            \
    template std::pair<SceneGradients<T>, CameraGradients<T>> render_backward<T>(                                \
        const SphereScene<T>&, const Camera<T>&, const BlendParams&, const BackwardBuffer<T>&,                   \
        const FeatureImage<T>&, const BackwardSettings&);

SOFTSPHERE_INSTANTIATE_GRAD(float)
SOFTSPHERE_INSTANTIATE_GRAD(double)

}  // namespace softsphere
