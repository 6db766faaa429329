#include "softsphere/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "softsphere/errors.hpp"
#include "softsphere/parallel.hpp"

namespace softsphere {

// Pixel-center tolerance applied to the analytic rectangle before rounding.
constexpr double kBoundsPad = 1e-2;

template <typename T>
BackwardBuffer<T>::BackwardBuffer(int width, int height, int top_k, std::size_t sphere_count)
    : width_(width), height_(height), top_k_(top_k), sphere_count_(sphere_count) {
    const auto n = static_cast<std::size_t>(width) * height;
    log_denominator_.assign(n, T(0));
    background_weight_.assign(n, T(1));
    counts_.assign(n, 0);
    entries_.resize(n * static_cast<std::size_t>(top_k));
}

template <typename T>
void BackwardBuffer<T>::set_pixel(std::size_t pixel, T log_denominator, T background_weight,
                                  std::span<const BufferEntry<T>> entries) {
    log_denominator_[pixel] = log_denominator;
    background_weight_[pixel] = background_weight;
    const auto n = std::min(entries.size(), static_cast<std::size_t>(top_k_));
    counts_[pixel] = static_cast<std::uint8_t>(n);
    std::copy_n(entries.begin(), n, entries_.begin() + static_cast<std::ptrdiff_t>(pixel * top_k_));
}

RenderStats& RenderStats::operator+=(const RenderStats& o) {
    spheres_on_sensor += o.spheres_on_sensor;
    tile_candidates += o.tile_candidates;
    candidates_tested += o.candidates_tested;
    hits_blended += o.hits_blended;
    pixels_early_stopped += o.pixels_early_stopped;
    tiles_early_stopped += o.tiles_early_stopped;
    return *this;
}

void RenderSettings::validate() const {
    blend.validate();
    if (tile_size < 1 || tile_size > 256) throw ConfigError("tile size must be in [1, 256]");
    if (workers < 0) throw ConfigError("worker count must be >= 0");
}

// ---------------------------------------------------------------------------
// Step 0

namespace {

/// Pixel index range whose centers fall inside [lo, hi] (continuous coordinates).
/// Returns false when the range misses [0, size).
template <typename T>
bool pixel_range(T lo, T hi, T center, int size, std::uint16_t& out_min, std::uint16_t& out_max) {
    const double pad = kBoundsPad;
    double first = std::ceil(static_cast<double>(lo) - 0.5 - pad);
    double last = std::floor(static_cast<double>(hi) - 0.5 + pad);
    if (first > last) {
        // Fits between pixel centers: keep the single pixel under its projection.
        first = last = std::floor(static_cast<double>(center));
    }
    if (last < 0 || first > size - 1) return false;
    out_min = static_cast<std::uint16_t>(std::max(first, 0.0));
    out_max = static_cast<std::uint16_t>(std::min(last, static_cast<double>(size - 1)));
    return true;
}

template <typename T>
void full_image(const Camera<T>& cam, BoundsRecord& b) {
    b.x_min = 0;
    b.y_min = 0;
    b.x_max = static_cast<std::uint16_t>(cam.width - 1);
    b.y_max = static_cast<std::uint16_t>(cam.height - 1);
    b.off_sensor = false;
}

/// Extent along one lateral axis of the cone of pinhole rays that pass within r of a
/// center at lateral offset `lateral` and depth `depth` (> r).
template <typename T>
void pinhole_extent(T lateral, T depth, T r, T& lo, T& hi) {
    const T d = std::sqrt(lateral * lateral + depth * depth);
    const T center_angle = std::atan2(lateral, depth);
    const T half = std::asin(std::min(T(1), r / d));
    lo = std::tan(center_angle - half);
    hi = std::tan(center_angle + half);
}

template <typename T>
void bound_sphere(const Camera<T>& cam, const Mat3<T>& rot, const Sphere<T>& s, std::uint32_t id,
                  BoundsRecord& b, DrawRecord<T>& d) {
    const Vec3<T> p = rot.transpose_mul(s.position - cam.translation);
    const T r = s.radius;
    const T inv_px = T(1) / cam.pixel_size();
    const T cu = static_cast<T>(cam.width) * T(0.5);
    const T cv = static_cast<T>(cam.height) * T(0.5);

    d.position = p;
    d.radius = r;
    d.opacity = std::clamp(s.opacity, T(0), T(1));
    d.sphere_id = id;
    d.earliest_depth = std::numeric_limits<T>::infinity();
    b = BoundsRecord{};

    if (cam.projection == Projection::orthographic) {
        if (!(p.z > 0)) return;
        const T u = cu + p.x * inv_px, v = cv + p.y * inv_px, rp = r * inv_px;
        if (!pixel_range(u - rp, u + rp, u, cam.width, b.x_min, b.x_max) ||
            !pixel_range(v - rp, v + rp, v, cam.height, b.y_min, b.y_max))
            return;
        b.off_sensor = false;
        d.earliest_depth = p.z - r;
        d.projected_radius = rp;
        return;
    }

    if (!(p.z + r > 0)) return;
    const T dist = norm(p);
    d.earliest_depth = dist - r;
    if (dist <= r) {
        full_image(cam, b);
        d.projected_radius = std::numeric_limits<T>::infinity();
        return;
    }
    const T f_px = cam.focal_length * inv_px;
    d.projected_radius = f_px * r / std::sqrt(dist * dist - r * r);
    if (!(p.z - r > 0)) {
        // Straddles the camera plane; the cone may open past 90 degrees.
        full_image(cam, b);
        return;
    }
    T xlo, xhi, ylo, yhi;
    pinhole_extent(p.x, p.z, r, xlo, xhi);
    pinhole_extent(p.y, p.z, r, ylo, yhi);
    const T uc = cu + f_px * p.x / p.z, vc = cv + f_px * p.y / p.z;
    if (!pixel_range(cu + f_px * xlo, cu + f_px * xhi, uc, cam.width, b.x_min, b.x_max) ||
        !pixel_range(cv + f_px * ylo, cv + f_px * yhi, vc, cam.height, b.y_min, b.y_max)) {
        d.earliest_depth = std::numeric_limits<T>::infinity();
        return;
    }
    b.off_sensor = false;
}

}  // namespace

template <typename T>
DrawList<T> compute_bounds(const SphereScene<T>& scene, const Camera<T>& camera, int workers) {
    camera.validate();
    const Mat3<T> rot = camera.rotation_matrix();
    const std::size_t n = scene.size();
    if (n > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("too many spheres");
    DrawList<T> out;
    out.bounds.resize(n);
    out.draws.resize(n);
    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    const auto spheres = scene.spheres();
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i)
            bound_sphere(camera, rot, spheres[i], static_cast<std::uint32_t>(i), out.bounds[i], out.draws[i]);
    });
    return out;
}

template <typename T>
void sort_draw_records(DrawList<T>& list) {
    const std::size_t n = list.draws.size();
    if (list.bounds.size() != n) throw ContractError("bounds and draw arrays differ in length");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& draws = list.draws;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const T da = draws[a].earliest_depth, db = draws[b].earliest_depth;
        if (da != db) return da < db;
        return draws[a].sphere_id < draws[b].sphere_id;
    });
    DrawList<T> sorted;
    sorted.bounds.reserve(n);
    sorted.draws.reserve(n);
    for (const std::size_t i : order) {
        sorted.bounds.push_back(list.bounds[i]);
        sorted.draws.push_back(list.draws[i]);
    }
    list = std::move(sorted);
}

template <typename T>
std::vector<std::size_t> gather_tile_candidates(const PixelRect& tile, const DrawList<T>& sorted) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sorted.bounds.size(); ++i)
        if (tile.overlaps(sorted.bounds[i])) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Step 1 + 2

namespace {

/// Per-pixel blend state for a block of pixels.
template <typename T>
class PixelBlock {
public:
    PixelBlock(const Camera<T>& cam, const PixelRect& rect, const BlendParams& params, int feature_dim)
        : cam_(cam), rect_(rect), params_(params), dim_(static_cast<std::size_t>(feature_dim)),
          k_(static_cast<std::size_t>(params.top_k)) {
        const std::size_t n = static_cast<std::size_t>(rect.width()) * rect.height();
        rays_.reserve(n);
        for (int y = rect.y0; y < rect.y1; ++y)
            for (int x = rect.x0; x < rect.x1; ++x)
                rays_.push_back(camera_space_ray(cam, static_cast<T>(x) + T(0.5), static_cast<T>(y) + T(0.5)));
        accs_.assign(n, BlendAccumulator<T>(params));
        numerators_.assign(n * dim_, T(0));
        stops_.assign(n, stop_depth_bound(accs_.front().log_denominator(), params));
        done_.assign(n, 0);
        counts_.assign(n, 0);
        entries_.resize(n * k_);
        active_ = n;
        min_stop_ = stops_.front();
    }

    std::size_t size() const { return rays_.size(); }
    std::size_t active() const { return active_; }
    T min_stop() const { return min_stop_; }
    RenderStats& stats() { return stats_; }

    /// Offers one depth-sorted candidate to the pixels under its rectangle. `tail_z` bounds the
    /// log-mass of this and every later candidate: gamma * ln(sum exp(z / gamma)) over the tail.
    void consume(const BoundsRecord& b, const DrawRecord<T>& d, T tail_z, std::span<const T> feature) {
        const int x0 = std::max<int>(rect_.x0, b.x_min), x1 = std::min<int>(rect_.x1 - 1, b.x_max);
        const int y0 = std::max<int>(rect_.y0, b.y_min), y1 = std::min<int>(rect_.y1 - 1, b.y_max);
        bool changed = false;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const std::size_t p = local(x, y);
                if (done_[p]) continue;
                if (tail_z < stops_[p]) {
                    done_[p] = 1;
                    --active_;
                    ++stats_.pixels_early_stopped;
                    changed = true;
                    continue;
                }
                ++stats_.candidates_tested;
                const auto hit = intersect_sphere(rays_[p], d.position, d.radius);
                if (!hit.hit) continue;
                ++stats_.hits_blended;
                const T z = ndc_depth(hit.ray_distance, cam_.near_plane, cam_.far_plane);
                accs_[p].add(z, hit.closeness, d.opacity, feature, {numerators_.data() + p * dim_, dim_});
                insert_top_k(p, {d.sphere_id, z, hit.closeness});
                stops_[p] = stop_depth_bound(accs_[p].log_denominator(), params_);
                changed = true;
            }
        }
        if (changed) refresh_min_stop();
    }

    /// Marks every remaining pixel as early-stopped.
    void stop_all() {
        stats_.pixels_early_stopped += active_;
        ++stats_.tiles_early_stopped;
        active_ = 0;
    }

    void finish(std::span<const T> background, std::size_t p, std::span<T> out_feature, T& log_denominator,
                T& background_weight, std::span<const BufferEntry<T>>& entries) const {
        accs_[p].resolve({numerators_.data() + p * dim_, dim_}, background, out_feature);
        log_denominator = accs_[p].log_denominator();
        background_weight = accs_[p].background_weight();
        entries = {entries_.data() + p * k_, counts_[p]};
    }

    std::size_t local(int x, int y) const {
        return static_cast<std::size_t>(y - rect_.y0) * rect_.width() + static_cast<std::size_t>(x - rect_.x0);
    }
    bool pixel_stopped(std::size_t p) const { return done_[p] != 0; }

private:
    void insert_top_k(std::size_t p, BufferEntry<T> e) {
        BufferEntry<T>* slots = entries_.data() + p * k_;
        std::size_t n = counts_[p];
        if (n == k_) {
            if (!(e.z > slots[k_ - 1].z)) return;
            --n;
        }
        std::size_t pos = n;
        while (pos > 0 && e.z > slots[pos - 1].z) {
            slots[pos] = slots[pos - 1];
            --pos;
        }
        slots[pos] = e;
        counts_[p] = static_cast<std::uint8_t>(n + 1);
    }

    void refresh_min_stop() {
        T m = std::numeric_limits<T>::infinity();
        for (std::size_t p = 0; p < stops_.size(); ++p)
            if (!done_[p]) m = std::min(m, stops_[p]);
        min_stop_ = m;
    }

    const Camera<T>& cam_;
    PixelRect rect_;
    BlendParams params_;
    std::size_t dim_;
    std::size_t k_;
    std::vector<Ray<T>> rays_;
    std::vector<BlendAccumulator<T>> accs_;
    std::vector<T> numerators_;
    std::vector<T> stops_;
    std::vector<std::uint8_t> done_;
    std::vector<std::uint8_t> counts_;
    std::vector<BufferEntry<T>> entries_;
    std::size_t active_ = 0;
    T min_stop_;
    RenderStats stats_;
};

/// Each of the n remaining candidates has o * c <= 1 and o * z <= its max z, which is at most
/// the current one's, so together they weigh no more than n * exp(max_z / gamma).
template <typename T>
T tail_depth(T max_z, std::size_t remaining, const BlendParams& params) {
    return max_z + static_cast<T>(params.effective_gamma() * std::log(static_cast<double>(remaining)));
}

template <typename T>
std::vector<T> tail_depths(const DrawList<T>& sorted, const Camera<T>& cam, std::size_t on_sensor,
                           const BlendParams& params) {
    std::vector<T> out(on_sensor);
    for (std::size_t i = 0; i < on_sensor; ++i) {
        const T max_z = ndc_depth(sorted.draws[i].earliest_depth, cam.near_plane, cam.far_plane);
        out[i] = tail_depth(max_z, on_sensor - i, params);
    }
    return out;
}

template <typename T>
std::size_t count_on_sensor(const DrawList<T>& sorted) {
    std::size_t n = 0;
    while (n < sorted.draws.size() && std::isfinite(sorted.draws[n].earliest_depth)) ++n;
    return n;
}

}  // namespace

template <typename T>
PixelResult<T> draw_pixel(int x, int y, std::span<const std::size_t> candidates, const DrawList<T>& sorted,
                          const SphereScene<T>& scene, const Camera<T>& camera, const BlendParams& params) {
    params.validate();
    PixelBlock<T> block(camera, PixelRect{x, y, x + 1, y + 1}, params, scene.feature_dim());
    PixelResult<T> out;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        const std::size_t idx = candidates[j];
        const auto& d = sorted.draws[idx];
        const T max_z = ndc_depth(d.earliest_depth, camera.near_plane, camera.far_plane);
        block.consume(sorted.bounds[idx], d, tail_depth(max_z, candidates.size() - j, params),
                      scene[d.sphere_id].feature);
        if (block.active() == 0) break;
    }
    out.feature.resize(static_cast<std::size_t>(scene.feature_dim()));
    std::span<const BufferEntry<T>> entries;
    block.finish(scene.background(), 0, out.feature, out.log_denominator, out.background_weight, entries);
    out.entries.assign(entries.begin(), entries.end());
    out.candidates_tested = block.stats().candidates_tested;
    out.early_stopped = block.pixel_stopped(0);
    return out;
}

template <typename T>
RenderResult<T> render_forward(const SphereScene<T>& scene, const Camera<T>& camera, const RenderSettings& settings) {
    settings.validate();
    camera.validate();
    scene.validate();
    if (scene.size() > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("too many spheres");

    DrawList<T> list = compute_bounds(scene, camera, settings.workers);
    sort_draw_records(list);
    const std::size_t on_sensor = count_on_sensor(list);
    const std::vector<T> tail_z = tail_depths(list, camera, on_sensor, settings.blend);

    const int ts = settings.tile_size;
    const int tiles_x = (camera.width + ts - 1) / ts;
    const int tiles_y = (camera.height + ts - 1) / ts;
    const std::size_t n_tiles = static_cast<std::size_t>(tiles_x) * tiles_y;
    const int dim = scene.feature_dim();

    RenderResult<T> result;
    result.image = FeatureImage<T>(camera.width, camera.height, dim);
    if (settings.emit_background_weight) result.image.background_weight.assign(result.image.pixel_count(), T(1));
    if (settings.emit_backward)
        result.buffer = BackwardBuffer<T>(camera.width, camera.height, settings.blend.top_k, scene.size());

    std::vector<RenderStats> tile_stats(n_tiles);
    const auto spheres = scene.spheres();
    parallel_for(n_tiles, settings.workers, [&](std::size_t t) {
        const int tx = static_cast<int>(t % static_cast<std::size_t>(tiles_x));
        const int ty = static_cast<int>(t / static_cast<std::size_t>(tiles_x));
        const PixelRect rect{tx * ts, ty * ts, std::min(camera.width, (tx + 1) * ts),
                             std::min(camera.height, (ty + 1) * ts)};
        PixelBlock<T> block(camera, rect, settings.blend, dim);
        for (std::size_t i = 0; i < on_sensor; ++i) {
            if (tail_z[i] < block.min_stop()) {
                block.stop_all();
                break;
            }
            if (!rect.overlaps(list.bounds[i])) continue;
            ++block.stats().tile_candidates;
            const auto& d = list.draws[i];
            block.consume(list.bounds[i], d, tail_z[i], spheres[d.sphere_id].feature);
            if (block.active() == 0) break;
        }
        for (int y = rect.y0; y < rect.y1; ++y) {
            for (int x = rect.x0; x < rect.x1; ++x) {
                const std::size_t p = block.local(x, y);
                const std::size_t global = static_cast<std::size_t>(y) * camera.width + x;
                T log_den, bg_weight;
                std::span<const BufferEntry<T>> entries;
                block.finish(scene.background(), p, result.image.pixel(global), log_den, bg_weight, entries);
                if (settings.emit_backward) result.buffer.set_pixel(global, log_den, bg_weight, entries);
                if (settings.emit_background_weight) result.image.background_weight[global] = bg_weight;
            }
        }
        tile_stats[t] = block.stats();
    });
    result.stats.spheres_on_sensor = on_sensor;
    for (const auto& s : tile_stats) {
        RenderStats copy = s;
        copy.spheres_on_sensor = 0;
        result.stats += copy;
    }
    return result;
}

#define SOFTSPHERE_INSTANTIATE_RASTER(T)                                                                         \
    template class BackwardBuffer<T>;                                                                            \
    template DrawList<T> compute_bounds<T>(const SphereScene<T>&, const Camera<T>&, int);                        \
    template void sort_draw_records<T>(DrawList<T>&);                                                            \
    template std::vector<std::size_t> gather_tile_candidates<T>(const PixelRect&, const DrawList<T>&);           \
    template PixelResult<T> draw_pixel<T>(int, int, std::span<const std::size_t>, const DrawList<T>&,            \
                                          const SphereScene<T>&, const Camera<T>&, const BlendParams&);          \
    template RenderResult<T> render_forward<T>(const SphereScene<T>&, const Camera<T>&, const RenderSettings&);

SOFTSPHERE_INSTANTIATE_RASTER(float)
SOFTSPHERE_INSTANTIATE_RASTER(double)

}  // namespace softsphere
