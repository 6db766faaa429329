#include "softsphere/shade.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "softsphere/errors.hpp"

namespace softsphere {

namespace {

template <typename T>
T clamp01(T v) {
    return std::clamp(v, T(0), T(1));
}

template <typename T>
bool passes(T v) {
    return v >= T(0) && v <= T(1);
}

template <typename T>
void require_channels(const FeatureImage<T>& img, int channels, const char* what) {
    if (img.channels != channels)
        throw ValidationError(std::string(what) + " expects " + std::to_string(channels) + " channels, got " +
                              std::to_string(img.channels));
}

template <typename T>
void require_same_shape(const FeatureImage<T>& a, const FeatureImage<T>& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw ValidationError(std::string(what) + ": image sizes differ");
}

struct LightSums {
    double ambient = 0;
};

double total_ambient(std::span<const DirectionalLight> lights) {
    double a = 0;
    for (const auto& l : lights) a += l.ambient;
    return a;
}

}  // namespace

void DirectionalLight::validate() const {
    if (std::abs(norm(direction) - 1.0) > 1e-6) throw ConfigError("light direction must be a unit vector");
    if (!(intensity >= 0) || !std::isfinite(intensity)) throw ConfigError("light intensity must be >= 0");
    if (!(ambient >= 0 && ambient <= 1)) throw ConfigError("ambient term must be in [0, 1]");
}

template <typename T>
FeatureImage<T> shade_identity(const FeatureImage<T>& features) {
    require_channels(features, 3, "identity shading");
    FeatureImage<T> out = features;
    out.background_weight.clear();
    for (T& v : out.data) v = clamp01(v);
    return out;
}

template <typename T>
FeatureImage<T> shade_identity_backward(const FeatureImage<T>& features, const FeatureImage<T>& d_color) {
    require_channels(features, 3, "identity shading");
    require_same_shape(features, d_color, "identity shading");
    FeatureImage<T> out(features.width, features.height, 3);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = passes(features.data[i]) ? d_color.data[i] : T(0);
    return out;
}

template <typename T>
FeatureImage<T> shade_diffuse(const FeatureImage<T>& features, std::span<const DirectionalLight> lights) {
    require_channels(features, 6, "diffuse shading");
    for (const auto& l : lights) l.validate();
    const double ambient = total_ambient(lights);
    FeatureImage<T> out(features.width, features.height, 3);
    for (std::size_t p = 0; p < features.pixel_count(); ++p) {
        const auto f = features.pixel(p);
        const Vec3<double> n{f[3], f[4], f[5]};
        const double len = norm(n);
        double s = ambient;
        if (len > 0)
            for (const auto& l : lights) s += l.intensity * std::max(0.0, -dot(n, l.direction) / len);
        for (int c = 0; c < 3; ++c) out.pixel(p)[c] = clamp01(static_cast<T>(f[c] * s));
    }
    return out;
}

template <typename T>
FeatureImage<T> shade_diffuse_backward(const FeatureImage<T>& features, std::span<const DirectionalLight> lights,
                                       const FeatureImage<T>& d_color) {
    require_channels(features, 6, "diffuse shading");
    require_channels(d_color, 3, "diffuse shading gradient");
    require_same_shape(features, d_color, "diffuse shading");
    const double ambient = total_ambient(lights);
    FeatureImage<T> out(features.width, features.height, 6);
    for (std::size_t p = 0; p < features.pixel_count(); ++p) {
        const auto f = features.pixel(p);
        const auto g = d_color.pixel(p);
        auto d = out.pixel(p);
        const Vec3<double> n{f[3], f[4], f[5]};
        const double len = norm(n);
        const Vec3<double> nh = len > 0 ? n / len : Vec3<double>{};
        double s = ambient;
        Vec3<double> ds_dnh;
        if (len > 0) {
            for (const auto& l : lights) {
                const double cosine = -dot(nh, l.direction);
                if (cosine > 0) {
                    s += l.intensity * cosine;
                    ds_dnh -= l.direction * l.intensity;
                }
            }
        }
        double dl_ds = 0;
        for (int c = 0; c < 3; ++c) {
            if (!passes(static_cast<T>(f[c] * s))) continue;
            d[c] = static_cast<T>(g[c] * s);
            dl_ds += g[c] * f[c];
        }
        if (len > 0) {
            // d nh / d n = (I - nh nh^T) / |n|
            const Vec3<double> gn = (ds_dnh - nh * dot(nh, ds_dnh)) * (dl_ds / len);
            d[3] = static_cast<T>(gn.x);
            d[4] = static_cast<T>(gn.y);
            d[5] = static_cast<T>(gn.z);
        }
    }
    return out;
}

template <typename T>
void LinearShader<T>::validate() const {
    if (feature_dim < 1) throw ConfigError("linear shader feature_dim must be >= 1");
    if (weight.size() != static_cast<std::size_t>(input_dim()) * 3)
        throw ConfigError("linear shader weight must be " + std::to_string(input_dim()) + "x3");
    for (const T v : weight)
        if (!std::isfinite(v)) throw ConfigError("linear shader weights must be finite");
    for (const T v : bias)
        if (!std::isfinite(v)) throw ConfigError("linear shader bias must be finite");
}

template <typename T>
LinearShader<T> LinearShader<T>::identity(int feature_dim, bool view_conditioned) {
    LinearShader<T> s;
    s.feature_dim = feature_dim;
    s.view_conditioned = view_conditioned;
    s.weight.assign(static_cast<std::size_t>(s.input_dim()) * 3, T(0));
    for (int i = 0; i < std::min(3, feature_dim); ++i) s.weight[static_cast<std::size_t>(i) * 3 + i] = T(1);
    return s;
}

template <typename T>
std::vector<T> LinearShader<T>::parameters() const {
    std::vector<T> p = weight;
    p.insert(p.end(), bias.begin(), bias.end());
    return p;
}

template <typename T>
void LinearShader<T>::set_parameters(std::span<const T> values) {
    if (values.size() != weight.size() + 3) throw ValidationError("linear shader parameter count mismatch");
    std::copy(values.begin(), values.end() - 3, weight.begin());
    std::copy(values.end() - 3, values.end(), bias.begin());
}

template <typename T>
FeatureImage<T> view_directions(const Camera<T>& camera) {
    FeatureImage<T> out(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const auto d = pixel_ray(camera, x, y).direction;
            out.at(x, y, 0) = d.x;
            out.at(x, y, 1) = d.y;
            out.at(x, y, 2) = d.z;
        }
    }
    return out;
}

namespace {

template <typename T>
void check_linear_inputs(const FeatureImage<T>& features, const LinearShader<T>& shader, const FeatureImage<T>* view) {
    shader.validate();
    require_channels(features, shader.feature_dim, "linear shader");
    if (shader.view_conditioned) {
        if (view == nullptr) throw ValidationError("view-conditioned shader needs view directions");
        require_channels(*view, 3, "view direction plane");
        require_same_shape(features, *view, "linear shader");
    }
}

/// Pre-clamp output of one pixel.
template <typename T>
std::array<T, 3> affine(const LinearShader<T>& shader, std::span<const T> f, std::span<const T> v) {
    std::array<T, 3> out = shader.bias;
    const auto dim = static_cast<std::size_t>(shader.feature_dim);
    for (std::size_t i = 0; i < dim; ++i)
        for (int j = 0; j < 3; ++j) out[j] += f[i] * shader.weight[i * 3 + j];
    for (std::size_t i = 0; i < v.size(); ++i)
        for (int j = 0; j < 3; ++j) out[j] += v[i] * shader.weight[(dim + i) * 3 + j];
    return out;
}

}  // namespace

template <typename T>
FeatureImage<T> shade_linear(const FeatureImage<T>& features, const LinearShader<T>& shader,
                             const FeatureImage<T>* view) {
    check_linear_inputs(features, shader, view);
    FeatureImage<T> out(features.width, features.height, 3);
    for (std::size_t p = 0; p < features.pixel_count(); ++p) {
        const std::span<const T> v = shader.view_conditioned ? view->pixel(p) : std::span<const T>{};
        const auto a = affine(shader, features.pixel(p), v);
        for (int j = 0; j < 3; ++j) out.pixel(p)[j] = clamp01(a[j]);
    }
    return out;
}

template <typename T>
LinearShaderGradients<T> shade_linear_backward(const FeatureImage<T>& features, const LinearShader<T>& shader,
                                               const FeatureImage<T>& d_color, const FeatureImage<T>* view) {
    check_linear_inputs(features, shader, view);
    require_channels(d_color, 3, "linear shader gradient");
    require_same_shape(features, d_color, "linear shader");
    LinearShaderGradients<T> out;
    out.d_features = FeatureImage<T>(features.width, features.height, features.channels);
    out.d_parameters.assign(shader.weight.size() + 3, T(0));
    const auto dim = static_cast<std::size_t>(shader.feature_dim);
    T* d_w = out.d_parameters.data();
    T* d_b = out.d_parameters.data() + shader.weight.size();
    for (std::size_t p = 0; p < features.pixel_count(); ++p) {
        const auto f = features.pixel(p);
        const std::span<const T> v = shader.view_conditioned ? view->pixel(p) : std::span<const T>{};
        const auto a = affine(shader, f, v);
        std::array<T, 3> g{};
        for (int j = 0; j < 3; ++j) g[j] = passes(a[j]) ? d_color.pixel(p)[j] : T(0);
        auto df = out.d_features.pixel(p);
        for (std::size_t i = 0; i < dim; ++i) {
            T acc = 0;
            for (int j = 0; j < 3; ++j) {
                acc += g[j] * shader.weight[i * 3 + j];
                d_w[i * 3 + j] += g[j] * f[i];
            }
            df[i] = acc;
        }
        for (std::size_t i = 0; i < v.size(); ++i)
            for (int j = 0; j < 3; ++j) d_w[(dim + i) * 3 + j] += g[j] * v[i];
        for (int j = 0; j < 3; ++j) d_b[j] += g[j];
    }
    return out;
}

template <typename T>
int ShaderStage<T>::output_dim(int feature_dim) const {
    switch (kind) {
        case ShaderKind::none:
            return feature_dim;
        case ShaderKind::identity:
            if (feature_dim != 3) throw ValidationError("identity shading needs d = 3");
            return 3;
        case ShaderKind::diffuse:
            if (feature_dim != 6) throw ValidationError("diffuse shading needs d = 6 (albedo, normal)");
            return 3;
        case ShaderKind::linear:
            if (feature_dim != linear.feature_dim) throw ValidationError("linear shader feature_dim mismatch");
            return 3;
    }
    return feature_dim;
}

template <typename T>
FeatureImage<T> ShaderStage<T>::forward(const FeatureImage<T>& features, const Camera<T>& camera) const {
    switch (kind) {
        case ShaderKind::none:
            return features;
        case ShaderKind::identity:
            return shade_identity(features);
        case ShaderKind::diffuse:
            return shade_diffuse(features, std::span<const DirectionalLight>(lights));
        case ShaderKind::linear: {
            if (!linear.view_conditioned) return shade_linear(features, linear);
            const auto view = view_directions(camera);
            return shade_linear(features, linear, &view);
        }
    }
    return features;
}

template <typename T>
FeatureImage<T> ShaderStage<T>::backward(const FeatureImage<T>& features, const Camera<T>& camera,
                                         const FeatureImage<T>& d_color, std::vector<T>* d_parameters) const {
    switch (kind) {
        case ShaderKind::none:
            return d_color;
        case ShaderKind::identity:
            return shade_identity_backward(features, d_color);
        case ShaderKind::diffuse:
            return shade_diffuse_backward(features, std::span<const DirectionalLight>(lights), d_color);
        case ShaderKind::linear: {
            FeatureImage<T> view;
            if (linear.view_conditioned) view = view_directions(camera);
            auto g = shade_linear_backward(features, linear, d_color, linear.view_conditioned ? &view : nullptr);
            if (d_parameters != nullptr && linear.trainable) {
                d_parameters->resize(g.d_parameters.size(), T(0));
                for (std::size_t i = 0; i < g.d_parameters.size(); ++i) (*d_parameters)[i] += g.d_parameters[i];
            }
            return std::move(g.d_features);
        }
    }
    return d_color;
}

#define SOFTSPHERE_INSTANTIATE_SHADE(T)                                                                          \
    template FeatureImage<T> shade_identity<T>(const FeatureImage<T>&);                                          \
    template FeatureImage<T> shade_identity_backward<T>(const FeatureImage<T>&, const FeatureImage<T>&);         \
    template FeatureImage<T> shade_diffuse<T>(const FeatureImage<T>&, std::span<const DirectionalLight>);       \
    template FeatureImage<T> shade_diffuse_backward<T>(const FeatureImage<T>&, std::span<const DirectionalLight>, \
                                                       const FeatureImage<T>&);                                  \
    template struct LinearShader<T>;                                                                             \
    template FeatureImage<T> view_directions<T>(const Camera<T>&);                                               \
    template FeatureImage<T> shade_linear<T>(const FeatureImage<T>&, const LinearShader<T>&,                     \
                                             const FeatureImage<T>*);                                            \
    template LinearShaderGradients<T> shade_linear_backward<T>(const FeatureImage<T>&, const LinearShader<T>&,   \
                                                               const FeatureImage<T>&, const FeatureImage<T>*);  \
    template struct ShaderStage<T>;

SOFTSPHERE_INSTANTIATE_SHADE(float)
SOFTSPHERE_INSTANTIATE_SHADE(double)

}  // namespace softsphere
