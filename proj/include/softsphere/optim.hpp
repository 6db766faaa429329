#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "softsphere/grad.hpp"
#include "softsphere/shade.hpp"

namespace softsphere {

struct LearningRates {
    /// Multiplied by FitConfig::scene_scale.
    double position = 1e-3;
    double radius = 1e-3;
    double opacity = 1e-2;
    double feature = 1e-2;
    double camera = 1e-4;
    double shader = 1e-2;
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Log-linear interpolation from `start` at step 0 to `end` at the last step.
struct GammaSchedule {
    double start = 0.1;
    double end = 1e-4;

    double at(long step, long steps) const;
};

struct PruneConfig {
    /// Epochs between prune passes; 0 disables pruning.
    int every_epochs = 0;
    double opacity_min = 0.01;
    /// Max-abs distance to the background feature below which a sphere is dropped; < 0 disables.
    double background_distance = 1e-3;
    bool remove_invisible = true;
};

struct SubdivideConfig {
    /// Rounds spread evenly over the run; 0 disables.
    int rounds = 0;
    /// Child radius = scale * parent radius.
    double scale = 1.4142135623730951;
};

struct FitConfig {
    LearningRates lr;
    double scene_scale = 1.0;
    /// Learning rates decay log-linearly to lr * lr_final_scale at the last step.
    double lr_final_scale = 1.0;
    AdamHyper adam;
    long steps = 500;
    GammaSchedule gamma;
    /// epsilon, tau and top_k of the renderer; gamma follows the schedule.
    BlendParams blend;
    double lambda_od = 0.0;
    PruneConfig prune;
    SubdivideConfig subdivide;
    bool optimize_camera = false;
    double radius_min = kDefaultRadiusMin;
    GradientNormalization normalization = GradientNormalization::per_pixel_mean;
    bool gate_small_spheres = true;
    int tile_size = 16;
    int workers = 0;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

template <typename T>
struct Observation {
    FeatureImage<T> image;
    Camera<T> camera;
};

template <typename T>
struct LossResult {
    double loss = 0;
    FeatureImage<T> upstream;
};

/// Mean absolute error over all H x W x d elements and its subgradient (sign / N, 0 at ties).
/// Throws ValidationError on a shape mismatch.
template <typename T>
LossResult<T> photometric_loss(const FeatureImage<T>& rendered, const FeatureImage<T>& target);

template <typename T>
struct RegularizerResult {
    double energy = 0;
    std::vector<Vec3<T>> d_position;
    std::vector<T> d_opacity;
};

/// lambda * sum_i (-z_i * o_i) with z_i the NDC depth of the sphere center (ray distance for
/// pinhole cameras, axial depth for orthographic ones) and o_i the clamped opacity.
/// Spheres behind the camera contribute nothing.
template <typename T>
RegularizerResult<T> opacity_depth_regularizer(const SphereScene<T>& scene, const Camera<T>& camera, double lambda);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
    std::size_t size() const { return m.size(); }
};

/// One bias-corrected Adam update in place. Throws ValidationError when the sizes of params,
/// grads and state differ.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState& state, double lr, const AdamHyper& hyper);

/// Spheres removed because their clamped opacity is below opacity_min, their feature is
/// within background_distance of the background, or (when `pixel_count` is given) no pixel
/// of any view listed them. Returns the kept indices in order.
template <typename T>
std::vector<std::size_t> prune(SphereScene<T>& scene, const PruneConfig& config,
                               std::span<const std::uint32_t> pixel_count = {});

/// Replaces each sphere by 12 children on the face-centered cubic shell around its center
/// (offsets (+-a, +-a, 0) and permutations, a = r / sqrt 2) with radius scale * r.
template <typename T>
SphereScene<T> subdivide(const SphereScene<T>& scene, double scale);

/// Optimizer state per parameter group. Cameras have one state per observation.
struct OptimizerState {
    AdamState position;
    AdamState radius;
    AdamState opacity;
    AdamState feature;
    AdamState shader;
    std::vector<AdamState> cameras;
};

template <typename T>
struct FitState {
    SphereScene<T> scene{1, {T(0)}};
    std::vector<Camera<T>> cameras;
    ShaderStage<T> shader;
    OptimizerState optimizer;
    long step = 0;
};

struct StepRecord {
    long step = 0;
    std::size_t observation = 0;
    double gamma = 0;
    double loss = 0;
    double regularizer = 0;
    std::size_t spheres = 0;
};

template <typename T>
struct FitResult {
    std::vector<StepRecord> trace;
    std::size_t pruned = 0;
    std::size_t subdivisions = 0;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Starts a fit: cameras copied from the observations, fresh optimizer state.
template <typename T>
FitState<T> initial_state(SphereScene<T> scene, std::span<const Observation<T>> observations,
                          ShaderStage<T> shader = {});

/// Runs steps state.step .. min(until, config.steps) - 1 (until < 0 means config.steps); the
/// schedules always span config.steps, so a run split across calls matches a straight one.
/// Each epoch visits every observation once in a seeded shuffle. Throws DivergenceError when the loss or a parameter becomes non-finite,
/// ValidationError when observations do not match the scene/shader output.
template <typename T>
FitResult<T> fit(FitState<T>& state, std::span<const Observation<T>> observations, const FitConfig& config,
                 const StepCallback& on_step = {}, long until = -1);

/// "SSCK" v1: step, PSC1 scene blob, camera vectors with their settings, shader, Adam state.
template <typename T>
void save_checkpoint(const FitState<T>& state, const std::filesystem::path& path);

template <typename T>
FitState<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace softsphere
