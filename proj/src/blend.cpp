#include "softsphere/blend.hpp"

#include <string>

#include "softsphere/errors.hpp"

namespace softsphere {

void BlendParams::validate() const {
    if (!std::isfinite(gamma) || gamma <= 0) throw ConfigError("gamma must be positive");
    if (!std::isfinite(epsilon) || epsilon <= 0) throw ConfigError("epsilon must be positive");
    if (!(tau >= 0 && tau < 1)) throw ConfigError("tau must be in [0, 1)");
    if (top_k < 1 || top_k > 255) throw ConfigError("top_k must be in [1, 255], got " + std::to_string(top_k));
}

template <typename T>
BlendWeights<T> blend_weights(std::span<const RayHit<T>> hits, const BlendParams& params) {
    const T inv_gamma = static_cast<T>(1.0 / params.effective_gamma());
    const T bg_exponent = static_cast<T>(params.epsilon) * inv_gamma;
    T max_exponent = bg_exponent;
    for (const auto& h : hits)
        if (h.opacity * h.closeness > 0) max_exponent = std::max(max_exponent, h.opacity * h.z * inv_gamma);

    BlendWeights<T> out;
    out.weights.resize(hits.size(), T(0));
    T sum = std::exp(bg_exponent - max_exponent);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto& h = hits[i];
        const T factor = h.opacity * h.closeness;
        if (!(factor > 0)) continue;
        out.weights[i] = factor * std::exp(h.opacity * h.z * inv_gamma - max_exponent);
        sum += out.weights[i];
    }
    for (T& w : out.weights) w /= sum;
    out.background = std::exp(bg_exponent - max_exponent) / sum;
    out.log_denominator = max_exponent + std::log(sum);
    return out;
}

template <typename T>
std::vector<T> blend_feature(std::span<const RayHit<T>> hits, const BlendParams& params,
                             std::span<const T> background) {
    std::vector<T> numerator(background.size(), T(0));
    BlendAccumulator<T> acc(params);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (hits[i].feature.size() != background.size())
            throw ValidationError("hit " + std::to_string(i) + " has feature length " +
                                  std::to_string(hits[i].feature.size()) + ", expected " +
                                  std::to_string(background.size()));
        acc.add(hits[i].z, hits[i].closeness, hits[i].opacity, hits[i].feature, numerator);
    }
    acc.resolve(numerator, background, numerator);
    return numerator;
}

template <typename T>
BlendJacobian<T> blend_jacobian(std::span<const RayHit<T>> hits, const BlendParams& params) {
    const auto bw = blend_weights(hits, params);
    const std::size_t n = hits.size();
    const T gamma = static_cast<T>(params.effective_gamma());
    const T inv_gamma = T(1) / gamma;
    const T eps = static_cast<T>(params.epsilon);

    // Per-term derivatives divided by D: d term_k / d x_k / D.
    std::vector<T> dz(n), dc(n), dop(n), dlog_gamma(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& h = hits[k];
        const T a = h.opacity * h.z * inv_gamma;
        const T e = std::exp(a - bw.log_denominator);
        dz[k] = bw.weights[k] * h.opacity * inv_gamma;
        dc[k] = h.opacity * e;
        dop[k] = h.closeness * e * (T(1) + a);
        dlog_gamma[k] = -a * inv_gamma;
    }
    // d log D / d gamma
    T dlogd_gamma = bw.background * (-eps * inv_gamma * inv_gamma);
    for (std::size_t k = 0; k < n; ++k) dlogd_gamma += bw.weights[k] * dlog_gamma[k];

    BlendJacobian<T> jac;
    jac.d_z.assign(n, std::vector<T>(n));
    jac.d_closeness.assign(n, std::vector<T>(n));
    jac.d_opacity.assign(n, std::vector<T>(n));
    jac.d_gamma.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const T delta = i == k ? T(1) : T(0);
            // dw_i / d term_k = (delta_ik - w_i) / D
            jac.d_z[i][k] = (delta - bw.weights[i]) * dz[k];
            jac.d_closeness[i][k] = (delta - bw.weights[i]) * dc[k];
            jac.d_opacity[i][k] = (delta - bw.weights[i]) * dop[k];
        }
        jac.d_gamma[i] = bw.weights[i] * (dlog_gamma[i] - dlogd_gamma);
    }
    return jac;
}

#define SOFTSPHERE_INSTANTIATE_BLEND(T)                                                                    \
    template BlendWeights<T> blend_weights<T>(std::span<const RayHit<T>>, const BlendParams&);              \
    template std::vector<T> blend_feature<T>(std::span<const RayHit<T>>, const BlendParams&,                \
                                             std::span<const T>);                                          \
    template BlendJacobian<T> blend_jacobian<T>(std::span<const RayHit<T>>, const BlendParams&);

SOFTSPHERE_INSTANTIATE_BLEND(float)
SOFTSPHERE_INSTANTIATE_BLEND(double)

}  // namespace softsphere
