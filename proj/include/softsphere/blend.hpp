#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace softsphere {

inline constexpr double kGammaMin = 1e-5;
inline constexpr double kGammaMax = 1.0;

/// Parameters of the depth-softmax blend.
struct BlendParams {
    /// Softness temperature; clamped into [1e-5, 1] when used.
    double gamma = 0.1;
    /// Background offset: the background term is exp(epsilon / gamma).
    double epsilon = 1e-2;
    /// Minimum weight a future sphere must be able to reach; 0 disables early termination.
    double tau = 0.01;
    /// Number of nearest hits kept per pixel for the backward pass.
    int top_k = 5;

    double effective_gamma() const { return std::clamp(gamma, kGammaMin, kGammaMax); }
    /// Throws ConfigError.
    void validate() const;
};

/// One intersection of a pixel ray with a sphere, in blend terms.
template <typename T>
struct RayHit {
    std::size_t sphere_id = 0;
    /// NDC depth of the intersection, 1 at the near plane.
    T z = 0;
    /// 1 at the sphere center, falling linearly to 0 at the silhouette.
    T closeness = 0;
    /// Clamped opacity.
    T opacity = 0;
    std::span<const T> feature;
};

template <typename T>
struct BlendWeights {
    std::vector<T> weights;
    T background = 1;
    T log_denominator = 0;
};

/// Running, overflow-free evaluation of the blend for one ray. Terms are kept relative to
/// the largest exponent seen so far; the feature numerator lives in caller storage.
template <typename T>
struct BlendAccumulator {
    T inv_gamma;
    T background_exponent;
    T max_exponent;
    T scaled_sum;

    explicit BlendAccumulator(const BlendParams& params)
        : inv_gamma(static_cast<T>(1.0 / params.effective_gamma())),
          background_exponent(static_cast<T>(params.epsilon / params.effective_gamma())),
          max_exponent(background_exponent),
          scaled_sum(1) {}

    /// Adds o * c * exp(o * z / gamma) with payload `feature` into `numerator`.
    void add(T z, T closeness, T opacity, std::span<const T> feature, std::span<T> numerator) {
        const T factor = opacity * closeness;
        if (!(factor > 0)) return;
        const T exponent = opacity * z * inv_gamma;
        if (exponent > max_exponent) {
            const T rescale = std::exp(max_exponent - exponent);
            scaled_sum *= rescale;
            for (T& n : numerator) n *= rescale;
            max_exponent = exponent;
        }
        const T term = factor * std::exp(exponent - max_exponent);
        scaled_sum += term;
        for (std::size_t c = 0; c < numerator.size(); ++c) numerator[c] += term * feature[c];
    }

    T log_denominator() const { return max_exponent + std::log(scaled_sum); }
    T background_weight() const { return std::exp(background_exponent - max_exponent) / scaled_sum; }

    /// Writes the blended feature; `out` may alias `numerator`.
    void resolve(std::span<const T> numerator, std::span<const T> background, std::span<T> out) const {
        const T bg = std::exp(background_exponent - max_exponent);
        const T inv = T(1) / scaled_sum;
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = (numerator[c] + bg * background[c]) * inv;
    }
};

/// Weight of each hit and of the background. Sum of all weights is 1.
template <typename T>
BlendWeights<T> blend_weights(std::span<const RayHit<T>> hits, const BlendParams& params);

/// Weighted sum of hit features and the background. Throws ValidationError when a hit
/// feature length differs from the background length.
template <typename T>
std::vector<T> blend_feature(std::span<const RayHit<T>> hits, const BlendParams& params,
                             std::span<const T> background);

/// Smallest NDC depth at which a fully opaque, centered sphere could still reach weight tau
/// against the current denominator exp(log_denominator):
/// gamma * ln(tau * D / (1 - tau)). Returns -inf when tau == 0.
template <typename T>
T stop_depth_bound(T log_denominator, const BlendParams& params) {
    if (params.tau <= 0) return -std::numeric_limits<T>::infinity();
    const double tau = std::min(params.tau, 1.0 - 1e-12);
    return static_cast<T>(params.effective_gamma() *
                          (std::log(tau) - std::log1p(-tau) + static_cast<double>(log_denominator)));
}

/// Partial derivatives of every weight. Entry [i][k] is dw_i / d(x_k) for x = z, c, o;
/// d_gamma[i] is dw_i / d gamma (gamma taken unclamped).
template <typename T>
struct BlendJacobian {
    std::vector<std::vector<T>> d_z;
    std::vector<std::vector<T>> d_closeness;
    std::vector<std::vector<T>> d_opacity;
    std::vector<T> d_gamma;
};

template <typename T>
BlendJacobian<T> blend_jacobian(std::span<const RayHit<T>> hits, const BlendParams& params);

}  // namespace softsphere
