#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace softsphere::cli {

/// Options shared by every command; they can also come from the [default] section of --config.
struct CommonOptions {
    double gamma = 0.1;
    double epsilon = 1e-2;
    double tau = 0.01;
    int top_k = 5;
    double min_depth = 0.1;
    double max_depth = 45.0;
    int workers = 0;
    int precision = 64;
    std::uint64_t seed = 0;
    int width = 256;
    int height = 256;
    std::string projection = "pinhole";
    /// 8 or 11 numbers: translation, rotation (axis-angle or 6D), focal length, sensor width.
    std::string camera;
    int tile_size = 16;
};

struct RenderOptions {
    std::string scene;
    std::string out;
    /// One camera vector per line; renders one PNG per pose into `out` (a directory).
    std::string poses;
    int bits = 8;
    std::string channels;
    std::string shader = "none";
    std::vector<std::string> lights;
};

struct FitOptions {
    std::string images;
    std::string poses;
    std::string init;
    std::string out;
    std::string resume;
    long steps = 500;
    double lr_position = 1e-3;
    double lr_radius = 1e-3;
    double lr_opacity = 1e-2;
    double lr_feature = 1e-2;
    double lr_camera = 1e-4;
    double lr_shader = 1e-2;
    double lr_final_scale = 1.0;
    double scene_scale = 1.0;
    double gamma_start = 0.1;
    double gamma_end = 1e-4;
    double lambda_od = 0.0;
    int prune_every = 0;
    double prune_opacity = 0.01;
    double prune_background = 1e-3;
    int subdivide_rounds = 0;
    double subdivide_scale = 1.4142135623730951;
    bool optimize_camera = false;
    bool no_gating = false;
    std::string normalization = "mean";
    std::string shader = "none";
    bool view_conditioned = false;
    long preview_every = 0;
    double init_radius = 0.05;
    double init_opacity = 0.5;
    double init_depth_min = 5.0;
    double init_depth_max = 30.0;
    double init_pixel_radius = 3.0;
};

struct BenchmarkOptions {
    std::string counts = "10000,100000";
    std::string profile = "occluded";
    int repeats = 5;
    std::size_t oracle_max = 20000;
    std::string out;
};

struct ConvertOptions {
    std::string in;
    std::string out;
    double radius = 0.05;
    double opacity = 1.0;
    int feature_dim = 3;
    std::string background;
};

struct GenerateOptions {
    std::string kind = "demo";
    std::size_t count = 10;
    int feature_dim = 3;
    std::string out;
};

template <typename T>
void cmd_render(const CommonOptions& common, const RenderOptions& opts);
template <typename T>
void cmd_fit(const CommonOptions& common, const FitOptions& opts);
template <typename T>
void cmd_benchmark(const CommonOptions& common, const BenchmarkOptions& opts);
template <typename T>
void cmd_convert(const CommonOptions& common, const ConvertOptions& opts);
template <typename T>
void cmd_generate(const CommonOptions& common, const GenerateOptions& opts);

/// Splits on commas and whitespace. Throws ConfigError on anything that is not a number.
std::vector<double> parse_numbers(const std::string& text, const std::string& what);

}  // namespace softsphere::cli
