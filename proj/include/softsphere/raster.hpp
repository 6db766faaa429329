#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "softsphere/blend.hpp"
#include "softsphere/camera.hpp"
#include "softsphere/scene.hpp"

namespace softsphere {

/// Inclusive pixel rectangle that contains every pixel whose center ray can hit a sphere.
struct BoundsRecord {
    std::uint16_t x_min = 0;
    std::uint16_t x_max = 0;
    std::uint16_t y_min = 0;
    std::uint16_t y_max = 0;
    bool off_sensor = true;
};

/// Everything the draw step needs about one sphere, in camera space.
template <typename T>
struct DrawRecord {
    Vec3<T> position;
    T radius = 0;
    T opacity = 0;
    std::uint32_t sphere_id = 0;
    /// Smallest possible ray distance of an intersection; +inf when off-sensor.
    T earliest_depth = std::numeric_limits<T>::infinity();
    /// Radius of the projected disc in pixels (approximate for pinhole, +inf when the
    /// camera is inside the sphere).
    T projected_radius = 0;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool overlaps(const BoundsRecord& b) const {
        return !b.off_sensor && b.x_min < x1 && b.x_max >= x0 && b.y_min < y1 && b.y_max >= y0;
    }
};

template <typename T>
struct BufferEntry {
    std::uint32_t sphere_id = 0;
    T z = 0;
    T closeness = 0;
};

/// Per-pixel record of the forward pass consumed by the backward pass: log of the blend
/// denominator, background weight and up to K nearest hits ordered by descending z.
template <typename T>
class BackwardBuffer {
public:
    BackwardBuffer() = default;
    BackwardBuffer(int width, int height, int top_k, std::size_t sphere_count);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int top_k() const noexcept { return top_k_; }
    std::size_t sphere_count() const noexcept { return sphere_count_; }
    std::size_t pixel_count() const noexcept { return log_denominator_.size(); }

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    T log_denominator(std::size_t pixel) const { return log_denominator_[pixel]; }
    T background_weight(std::size_t pixel) const { return background_weight_[pixel]; }
    std::span<const BufferEntry<T>> entries(std::size_t pixel) const {
        return {entries_.data() + pixel * static_cast<std::size_t>(top_k_), counts_[pixel]};
    }

    void set_pixel(std::size_t pixel, T log_denominator, T background_weight,
                   std::span<const BufferEntry<T>> entries);

private:
    int width_ = 0;
    int height_ = 0;
    int top_k_ = 0;
    std::size_t sphere_count_ = 0;
    std::vector<T> log_denominator_;
    std::vector<T> background_weight_;
    std::vector<std::uint8_t> counts_;
    std::vector<BufferEntry<T>> entries_;
};

/// H x W x d image, channel-interleaved, row-major.
template <typename T>
struct FeatureImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<T> data;
    /// Optional background-weight plane (H x W); empty when not requested.
    std::vector<T> background_weight;

    FeatureImage() = default;
    FeatureImage(int w, int h, int c, T fill = T(0))
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    T& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    T at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::span<T> pixel(std::size_t i) { return {data.data() + i * channels, static_cast<std::size_t>(channels)}; }
    std::span<const T> pixel(std::size_t i) const {
        return {data.data() + i * channels, static_cast<std::size_t>(channels)};
    }
    bool same_shape(const FeatureImage& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

struct RenderStats {
    std::size_t spheres_on_sensor = 0;
    /// Sum over tiles of spheres whose rectangle overlaps the tile and that were visited.
    std::size_t tile_candidates = 0;
    /// Ray-sphere tests performed.
    std::size_t candidates_tested = 0;
    std::size_t hits_blended = 0;
    std::size_t pixels_early_stopped = 0;
    std::size_t tiles_early_stopped = 0;

    RenderStats& operator+=(const RenderStats& o);
};

struct RenderSettings {
    BlendParams blend;
    int tile_size = 16;
    /// 0 selects one worker per hardware thread.
    int workers = 0;
    bool emit_backward = true;
    bool emit_background_weight = false;

    void validate() const;
};

template <typename T>
struct RenderResult {
    FeatureImage<T> image;
    BackwardBuffer<T> buffer;
    RenderStats stats;
};

/// Output of the bounds step, indexed by sphere (or by sort position after sorting).
template <typename T>
struct DrawList {
    std::vector<BoundsRecord> bounds;
    std::vector<DrawRecord<T>> draws;
};

/// Geometry of one ray against one sphere.
template <typename T>
struct SphereIntersection {
    bool hit = false;
    /// Distance along the ray to the foot of the perpendicular from the center.
    T ray_distance = 0;
    T closeness = 0;
};

/// A camera-space ray hits when it passes strictly within the radius and the closest
/// approach lies in front of the origin.
template <typename T>
inline SphereIntersection<T> intersect_sphere(const Ray<T>& ray, const Vec3<T>& center, T radius) {
    const Vec3<T> v = center - ray.origin;
    const T t = dot(v, ray.direction);
    if (!(t > 0)) return {};
    const Vec3<T> perp = v - ray.direction * t;
    const T dist2 = dot(perp, perp);
    if (!(dist2 < radius * radius)) return {};
    return {true, t, T(1) - std::sqrt(dist2) / radius};
}

/// Step 0: screen rectangle and draw information for every sphere, in scene order.
template <typename T>
DrawList<T> compute_bounds(const SphereScene<T>& scene, const Camera<T>& camera, int workers = 1);

/// Sorts both arrays by (earliest_depth, sphere_id); off-sensor records end up last.
template <typename T>
void sort_draw_records(DrawList<T>& list);

/// Indices into the sorted list whose rectangle overlaps `tile`, in depth order.
template <typename T>
std::vector<std::size_t> gather_tile_candidates(const PixelRect& tile, const DrawList<T>& sorted);

template <typename T>
struct PixelResult {
    std::vector<T> feature;
    std::vector<BufferEntry<T>> entries;
    T log_denominator = 0;
    T background_weight = 1;
    std::size_t candidates_tested = 0;
    bool early_stopped = false;
};

/// Draws one pixel from depth-sorted candidates (indices into `sorted`).
template <typename T>
PixelResult<T> draw_pixel(int x, int y, std::span<const std::size_t> candidates, const DrawList<T>& sorted,
                          const SphereScene<T>& scene, const Camera<T>& camera, const BlendParams& params);

/// Full forward pass. Output is independent of worker count, tile size and the order of
/// spheres with distinct depths.
template <typename T>
RenderResult<T> render_forward(const SphereScene<T>& scene, const Camera<T>& camera,
                               const RenderSettings& settings = {});

}  // namespace softsphere
