#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "softsphere/vec.hpp"

namespace softsphere {

inline constexpr double kDefaultRadiusMin = 1e-6;

/// One scene primitive. Opacity is stored unconstrained; the renderer clamps it to [0, 1].
template <typename T>
struct Sphere {
    Vec3<T> position;
    T radius{1};
    T opacity{1};
    std::vector<T> feature;

    bool operator==(const Sphere&) const = default;
};

/// A set of spheres sharing one feature dimension, plus the background feature.
template <typename T>
class SphereScene {
public:
    using value_type = T;

    /// Throws ConfigError when feature_dim < 1 or the background length differs.
    SphereScene(int feature_dim, std::vector<T> background_feature);

    int feature_dim() const noexcept { return feature_dim_; }
    std::size_t size() const noexcept { return spheres_.size(); }
    bool empty() const noexcept { return spheres_.empty(); }

    const std::vector<T>& background() const noexcept { return background_; }
    void set_background(std::vector<T> background_feature);

    std::span<const Sphere<T>> spheres() const noexcept { return spheres_; }
    const Sphere<T>& operator[](std::size_t i) const { return spheres_[i]; }

    /// Direct access for optimizers and pruning. Callers must keep the invariants;
    /// validate() re-checks them.
    std::vector<Sphere<T>>& mutable_spheres() noexcept { return spheres_; }

    /// Appends spheres in order. Throws ValidationError naming the first bad input index;
    /// the scene is unchanged on error.
    void add_spheres(std::span<const Sphere<T>> spheres);

    /// Throws ValidationError on non-finite fields, non-positive radius or a feature length
    /// that differs from feature_dim().
    void validate() const;

    /// Clamps every radius to at least radius_min.
    void project_radii(T radius_min = static_cast<T>(kDefaultRadiusMin));

    template <typename U>
    SphereScene<U> cast() const {
        std::vector<U> bg(background_.begin(), background_.end());
        SphereScene<U> out(feature_dim_, std::move(bg));
        auto& dst = out.mutable_spheres();
        dst.reserve(spheres_.size());
        for (const auto& s : spheres_) {
            dst.push_back(Sphere<U>{Vec3<U>(s.position), static_cast<U>(s.radius), static_cast<U>(s.opacity),
                                    std::vector<U>(s.feature.begin(), s.feature.end())});
        }
        return out;
    }

    bool operator==(const SphereScene&) const = default;

private:
    int feature_dim_;
    std::vector<T> background_;
    std::vector<Sphere<T>> spheres_;
};

template <typename T>
SphereScene<T> new_scene(int feature_dim, std::vector<T> background_feature) {
    return SphereScene<T>(feature_dim, std::move(background_feature));
}

/// Loads an ASCII PLY point cloud; one sphere per vertex. Vertex colors (red/green/blue or
/// r/g/b) become the feature when the scene is RGB, otherwise features copy the background.
/// Integer color properties are scaled from [0, 255] to [0, 1].
template <typename T>
SphereScene<T> import_point_cloud(const std::filesystem::path& path, T default_radius, T default_opacity,
                                  int feature_dim = 3, std::vector<T> background = {});

/// Little-endian "PSC1" file: u32 feature_dim, u64 sphere count, background (f32 x d), then
/// per sphere position (3), radius, opacity, feature (d), all f32.
template <typename T>
void save_scene(const SphereScene<T>& scene, const std::filesystem::path& path);

template <typename T>
SphereScene<T> load_scene(const std::filesystem::path& path);

/// In-memory variants of the file format, used by the checkpoint writer.
template <typename T>
std::vector<std::byte> encode_scene(const SphereScene<T>& scene);

template <typename T>
SphereScene<T> decode_scene(std::span<const std::byte> bytes);

}  // namespace softsphere
