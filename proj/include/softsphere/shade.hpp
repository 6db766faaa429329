#pragma once

#include <array>
#include <span>
#include <vector>

#include "softsphere/camera.hpp"
#include "softsphere/raster.hpp"

namespace softsphere {

/// Parallel light. `direction` is the direction the light travels (towards the scene).
struct DirectionalLight {
    Vec3<double> direction{0, 0, 1};
    double intensity = 1.0;
    double ambient = 0.0;

    /// Throws ConfigError.
    void validate() const;
};

/// Clamps a 3-channel feature image to [0, 1]. Throws ValidationError unless d = 3.
template <typename T>
FeatureImage<T> shade_identity(const FeatureImage<T>& features);

/// Gradient of shade_identity: passes d_color where the input was inside [0, 1].
template <typename T>
FeatureImage<T> shade_identity_backward(const FeatureImage<T>& features, const FeatureImage<T>& d_color);

/// Features laid out as [albedo (3), normal (3)]. color = albedo * (ambient + sum_l I_l *
/// max(0, n . -dir_l)), clamped to [0, 1]; ambient is the sum over lights. Normals are
/// renormalized per pixel; a zero normal gets ambient light only.
template <typename T>
FeatureImage<T> shade_diffuse(const FeatureImage<T>& features, std::span<const DirectionalLight> lights);

template <typename T>
FeatureImage<T> shade_diffuse_backward(const FeatureImage<T>& features, std::span<const DirectionalLight> lights,
                                       const FeatureImage<T>& d_color);

/// Per-pixel affine map to RGB shared by all pixels: color_j = clamp(sum_i x_i W[i][j] + b_j),
/// x = feature, optionally followed by the unit world-space view direction of the pixel.
template <typename T>
struct LinearShader {
    int feature_dim = 3;
    bool view_conditioned = false;
    bool trainable = true;
    /// (feature_dim (+3)) x 3, row-major.
    std::vector<T> weight;
    std::array<T, 3> bias{0, 0, 0};

    int input_dim() const { return feature_dim + (view_conditioned ? 3 : 0); }
    /// Throws ConfigError on a bad shape or non-finite entries.
    void validate() const;

    /// Weights mapping the first three inputs straight through, zero bias.
    static LinearShader identity(int feature_dim, bool view_conditioned = false);

    /// weight followed by bias; the layout Adam sees.
    std::vector<T> parameters() const;
    void set_parameters(std::span<const T> values);
};

template <typename T>
struct LinearShaderGradients {
    FeatureImage<T> d_features;
    /// Same layout as LinearShader::parameters().
    std::vector<T> d_parameters;
};

/// Unit world-space ray direction of every pixel center (H x W x 3).
template <typename T>
FeatureImage<T> view_directions(const Camera<T>& camera);

/// `view` is required when the shader is view-conditioned. Throws ValidationError on
/// dimension mismatch.
template <typename T>
FeatureImage<T> shade_linear(const FeatureImage<T>& features, const LinearShader<T>& shader,
                             const FeatureImage<T>* view = nullptr);

template <typename T>
LinearShaderGradients<T> shade_linear_backward(const FeatureImage<T>& features, const LinearShader<T>& shader,
                                               const FeatureImage<T>& d_color, const FeatureImage<T>* view = nullptr);

enum class ShaderKind { none, identity, diffuse, linear };

/// The shading stage used by fitting and the CLI. `none` passes features through untouched
/// (any d), which is how silhouette and raw-feature fits run.
template <typename T>
struct ShaderStage {
    ShaderKind kind = ShaderKind::none;
    std::vector<DirectionalLight> lights;
    LinearShader<T> linear;

    /// Output channel count for `feature_dim` inputs; throws ValidationError if the
    /// shader cannot take that many.
    int output_dim(int feature_dim) const;

    FeatureImage<T> forward(const FeatureImage<T>& features, const Camera<T>& camera) const;

    /// Returns d_features; adds shader parameter gradients into `d_parameters` (sized like
    /// linear.parameters()) when the stage is a trainable linear shader.
    FeatureImage<T> backward(const FeatureImage<T>& features, const Camera<T>& camera, const FeatureImage<T>& d_color,
                             std::vector<T>* d_parameters) const;

    bool has_parameters() const { return kind == ShaderKind::linear && linear.trainable; }
};

}  // namespace softsphere
