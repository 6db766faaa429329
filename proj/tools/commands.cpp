#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "image_io.hpp"
#include "softsphere/errors.hpp"
#include "softsphere/optim.hpp"
#include "softsphere/synth.hpp"
#include "softsphere/testkit.hpp"

namespace fs = std::filesystem;

namespace softsphere::cli {

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) throw ConfigError(what + ": '" + tok + "' is not a number");
        out.push_back(v);
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

CameraSettings camera_settings(const CommonOptions& c, int width, int height) {
    CameraSettings cs;
    cs.width = width;
    cs.height = height;
    cs.near_plane = c.min_depth;
    cs.far_plane = c.max_depth;
    if (c.projection == "pinhole") {
        cs.projection = Projection::pinhole;
    } else if (c.projection == "orthographic") {
        cs.projection = Projection::orthographic;
    } else {
        throw ConfigError("projection must be pinhole or orthographic, got '" + c.projection + "'");
    }
    return cs;
}

template <typename T>
Camera<T> parse_camera(const std::string& text, const CameraSettings& cs, const std::string& what) {
    const auto v = parse_numbers(text, what);
    const std::vector<T> tv(v.begin(), v.end());
    return camera_from_vector<T>(tv, cs);
}

/// The camera of --camera, or the default pose (origin, looking down +z, f = 5, s = 2).
template <typename T>
Camera<T> main_camera(const CommonOptions& c) {
    const auto cs = camera_settings(c, c.width, c.height);
    if (!c.camera.empty()) return parse_camera<T>(c.camera, cs, "--camera");
    Camera<T> cam;
    cam.width = cs.width;
    cam.height = cs.height;
    cam.near_plane = static_cast<T>(cs.near_plane);
    cam.far_plane = static_cast<T>(cs.far_plane);
    cam.projection = cs.projection;
    cam.validate();
    return cam;
}

std::vector<std::string> read_pose_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open pose file");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

template <typename T>
std::vector<Camera<T>> read_poses(const fs::path& path, const CameraSettings& cs) {
    std::vector<Camera<T>> out;
    const auto lines = read_pose_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i)
        out.push_back(parse_camera<T>(lines[i], cs, path.string() + " pose " + std::to_string(i + 1)));
    return out;
}

BlendParams blend_params(const CommonOptions& c) {
    BlendParams p;
    p.gamma = c.gamma;
    p.epsilon = c.epsilon;
    p.tau = c.tau;
    p.top_k = c.top_k;
    p.validate();
    return p;
}

DirectionalLight parse_light(const std::string& text) {
    const auto v = parse_numbers(text, "--light");
    if (v.size() != 5) throw ConfigError("--light expects dx,dy,dz,intensity,ambient");
    DirectionalLight l;
    l.direction = normalized(Vec3<double>{v[0], v[1], v[2]});
    l.intensity = v[3];
    l.ambient = v[4];
    l.validate();
    return l;
}

template <typename T>
FeatureImage<double> to_double(const FeatureImage<T>& img) {
    FeatureImage<double> out(img.width, img.height, img.channels);
    std::copy(img.data.begin(), img.data.end(), out.data.begin());
    return out;
}

/// Channels written for a d-channel image: all of them when d is 1 or 3, else an explicit list.
std::vector<int> output_channels(int d, const std::string& select) {
    if (!select.empty()) {
        std::vector<int> out;
        for (const double v : parse_numbers(select, "--channels")) out.push_back(static_cast<int>(v));
        if (out.size() != 1 && out.size() != 3) throw ConfigError("--channels must name 1 or 3 channels");
        return out;
    }
    if (d == 1) return {0};
    if (d == 3) return {0, 1, 2};
    throw ConfigError("feature dimension " + std::to_string(d) +
                      " cannot be written as an image; use --channels or a shader");
}

template <typename T>
void print_stats(const RenderStats& s, std::size_t pixels, double ms, const std::string& label) {
    std::printf("%sspheres_on_sensor=%zu tile_candidates=%zu candidates_tested=%zu hits_blended=%zu "
                "early_stopped_pixels=%zu early_stop_ratio=%.4f wall_ms=%.2f\n",
                label.c_str(), s.spheres_on_sensor, s.tile_candidates, s.candidates_tested, s.hits_blended,
                s.pixels_early_stopped, pixels ? static_cast<double>(s.pixels_early_stopped) / pixels : 0.0, ms);
}

}  // namespace

template <typename T>
void cmd_render(const CommonOptions& common, const RenderOptions& opts) {
    const auto scene = load_scene<T>(opts.scene);
    RenderSettings rs;
    rs.blend = blend_params(common);
    rs.tile_size = common.tile_size;
    rs.workers = common.workers;
    rs.emit_backward = false;
    rs.validate();

    ShaderStage<T> shader;
    if (opts.shader == "identity") {
        shader.kind = ShaderKind::identity;
    } else if (opts.shader == "diffuse") {
        shader.kind = ShaderKind::diffuse;
        for (const auto& l : opts.lights) shader.lights.push_back(parse_light(l));
        if (shader.lights.empty()) throw ConfigError("diffuse shading needs at least one --light");
    } else if (opts.shader != "none") {
        throw ConfigError("--shader must be none, identity or diffuse");
    }
    const int out_dim = shader.output_dim(scene.feature_dim());
    const auto select = output_channels(out_dim, opts.channels);

    std::vector<Camera<T>> cams;
    std::vector<fs::path> outputs;
    if (opts.poses.empty()) {
        cams.push_back(main_camera<T>(common));
        outputs.emplace_back(opts.out);
    } else {
        cams = read_poses<T>(opts.poses, camera_settings(common, common.width, common.height));
        if (cams.empty()) throw ConfigError(opts.poses + ": no poses");
        fs::create_directories(opts.out);
        for (std::size_t i = 0; i < cams.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "view_%04zu.png", i);
            outputs.push_back(fs::path(opts.out) / name);
        }
    }
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const auto t0 = Clock::now();
        const auto r = render_forward(scene, cams[i], rs);
        const double ms = ms_since(t0);
        const auto color = shader.forward(r.image, cams[i]);
        write_png(outputs[i], to_double(color), select, opts.bits);
        print_stats<T>(r.stats, r.image.pixel_count(), ms, outputs.size() > 1 ? outputs[i].filename().string() + " " : "");
    }
}

template <typename T>
void cmd_fit(const CommonOptions& common, const FitOptions& opts) {
    // Observations: PNGs sorted by file name, paired line by line with the pose file.
    if (!fs::is_directory(opts.images)) throw IoError(opts.images + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(opts.images))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError(opts.images + ": no PNG images");
    const auto pose_lines = read_pose_lines(opts.poses);
    if (pose_lines.size() != files.size())
        throw ConfigError(opts.poses + " has " + std::to_string(pose_lines.size()) + " poses for " +
                          std::to_string(files.size()) + " images");

    std::vector<Observation<T>> obs;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto img = read_png(files[i]);
        Observation<T> o;
        o.image = FeatureImage<T>(img.width, img.height, img.channels);
        std::transform(img.data.begin(), img.data.end(), o.image.data.begin(), [](double v) { return static_cast<T>(v); });
        o.camera = parse_camera<T>(pose_lines[i], camera_settings(common, img.width, img.height),
                                   opts.poses + " pose " + std::to_string(i + 1));
        obs.push_back(std::move(o));
    }
    const int target_dim = obs.front().image.channels;

    ShaderStage<T> shader;
    if (opts.shader == "identity") {
        shader.kind = ShaderKind::identity;
    } else if (opts.shader == "linear") {
        shader.kind = ShaderKind::linear;
        shader.linear = LinearShader<T>::identity(3, opts.view_conditioned);
    } else if (opts.shader != "none") {
        throw ConfigError("--shader must be none, identity or linear");
    }
    const int feature_dim = shader.kind == ShaderKind::none ? target_dim : 3;

    FitConfig cfg;
    cfg.lr = {opts.lr_position, opts.lr_radius, opts.lr_opacity, opts.lr_feature, opts.lr_camera, opts.lr_shader};
    cfg.lr_final_scale = opts.lr_final_scale;
    cfg.scene_scale = opts.scene_scale;
    cfg.steps = opts.steps;
    cfg.gamma = {opts.gamma_start, opts.gamma_end};
    cfg.blend = blend_params(common);
    cfg.lambda_od = opts.lambda_od;
    cfg.prune.every_epochs = opts.prune_every;
    cfg.prune.opacity_min = opts.prune_opacity;
    cfg.prune.background_distance = opts.prune_background;
    cfg.subdivide.rounds = opts.subdivide_rounds;
    cfg.subdivide.scale = opts.subdivide_scale;
    cfg.optimize_camera = opts.optimize_camera;
    cfg.gate_small_spheres = !opts.no_gating;
    if (opts.normalization == "mean") {
        cfg.normalization = GradientNormalization::per_pixel_mean;
    } else if (opts.normalization == "none") {
        cfg.normalization = GradientNormalization::none;
    } else {
        throw ConfigError("--normalization must be mean or none");
    }
    cfg.tile_size = common.tile_size;
    cfg.workers = common.workers;
    cfg.seed = common.seed;
    cfg.validate();

    FitState<T> state;
    if (!opts.resume.empty()) {
        state = load_checkpoint<T>(opts.resume);
        if (state.cameras.size() != obs.size())
            throw ConfigError(opts.resume + ": checkpoint has " + std::to_string(state.cameras.size()) +
                              " cameras for " + std::to_string(obs.size()) + " observations");
    } else {
        std::vector<T> bg(static_cast<std::size_t>(feature_dim), T(0));
        SphereScene<T> scene(feature_dim, bg);
        const auto& init = opts.init;
        if (init.rfind("scene:", 0) == 0) {
            scene = load_scene<T>(init.substr(6));
        } else if (init.rfind("ply:", 0) == 0) {
            scene = import_point_cloud<T>(init.substr(4), static_cast<T>(opts.init_radius),
                                          static_cast<T>(opts.init_opacity), feature_dim, bg);
        } else if (init.rfind("volume:", 0) == 0) {
            const auto n = parse_numbers(init.substr(7), "--init volume count");
            if (n.size() != 1 || !(n[0] >= 1)) throw ConfigError("--init volume:N needs a positive count");
            scene = synth::volume_fill<T>(obs.front().camera, static_cast<std::size_t>(n[0]), opts.init_depth_min,
                                          opts.init_depth_max, opts.init_pixel_radius, feature_dim, common.seed);
            for (auto& s : scene.mutable_spheres()) s.opacity = static_cast<T>(opts.init_opacity);
        } else {
            throw ConfigError("--init must be scene:PATH, ply:PATH or volume:N");
        }
        state = initial_state<T>(std::move(scene), obs, shader);
    }

    fs::create_directories(opts.out);
    const fs::path out(opts.out);
    std::ofstream csv(out / "loss.csv");
    if (!csv) throw IoError((out / "loss.csv").string() + ": cannot write");
    csv << "step,observation,gamma,loss,regularizer,spheres\n";
    csv.precision(10);
    const int preview_dim = state.shader.output_dim(state.scene.feature_dim());
    const bool can_preview = preview_dim == 1 || preview_dim == 3;
    auto preview = [&](long step) {
        if (!can_preview) return;
        RenderSettings rs;
        rs.blend = cfg.blend;
        rs.blend.gamma = cfg.gamma.at(std::min(step, std::max(0L, cfg.steps - 1)), cfg.steps);
        rs.workers = cfg.workers;
        rs.emit_backward = false;
        const auto r = render_forward(state.scene, state.cameras.front(), rs);
        const auto color = state.shader.forward(r.image, state.cameras.front());
        char name[40];
        std::snprintf(name, sizeof name, "preview_%06ld.png", step);
        write_png(out / name, to_double(color), output_channels(preview_dim, ""), 8);
    };

    const auto t0 = Clock::now();
    auto on_step = [&](const StepRecord& r) {
        csv << r.step << ',' << r.observation << ',' << r.gamma << ',' << r.loss << ',' << r.regularizer << ','
            << r.spheres << '\n';
        if (opts.preview_every > 0 && (r.step + 1) % opts.preview_every == 0) preview(r.step + 1);
    };
    FitResult<T> res;
    try {
        res = fit<T>(state, obs, cfg, on_step);
    } catch (const DivergenceError&) {
        csv.flush();
        save_checkpoint(state, out / "checkpoint.ssck");
        throw;
    }
    save_checkpoint(state, out / "checkpoint.ssck");
    save_scene(state.scene, out / "scene.psc");
    preview(state.step);
    const double first = res.trace.empty() ? 0.0 : res.trace.front().loss;
    const double last = res.trace.empty() ? 0.0 : res.trace.back().loss;
    std::printf("steps=%ld spheres=%zu pruned=%zu subdivisions=%zu first_loss=%.6g last_loss=%.6g wall_ms=%.1f\n",
                state.step, state.scene.size(), res.pruned, res.subdivisions, first, last, ms_since(t0));
}

template <typename T>
void cmd_benchmark(const CommonOptions& common, const BenchmarkOptions& opts) {
    if (opts.repeats < 1) throw ConfigError("--repeats must be >= 1");
    const auto counts = parse_numbers(opts.counts, "--counts");
    if (counts.empty()) throw ConfigError("--counts is empty");
    if (opts.profile != "occluded" && opts.profile != "uniform")
        throw ConfigError("--profile must be occluded or uniform");
    const auto cam = main_camera<T>(common);
    RenderSettings rs;
    rs.blend = blend_params(common);
    rs.tile_size = common.tile_size;
    rs.workers = common.workers;
    rs.validate();

    std::ofstream file;
    if (!opts.out.empty()) {
        file.open(opts.out);
        if (!file) throw IoError(opts.out + ": cannot write");
    }
    std::ostream& csv = opts.out.empty() ? std::cout : file;
    csv << "count,profile,width,height,repeats,forward_mean_ms,forward_std_ms,backward_mean_ms,backward_std_ms,"
           "oracle_mean_ms,spheres_on_sensor,candidates_tested,hits_blended,pixels_early_stopped\n";

    auto summarize = [](const std::vector<double>& v) {
        double mean = 0;
        for (const double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0;
        for (const double x : v) var += (x - mean) * (x - mean);
        return std::pair{mean, v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0};
    };

    for (const double c : counts) {
        if (!(c >= 0)) throw ConfigError("--counts entries must be >= 0");
        const auto n = static_cast<std::size_t>(c);
        const auto scene = opts.profile == "occluded" ? synth::occluded_scene<T>(n, common.seed)
                                                      : synth::uniform_scene<T>(n, common.seed);
        std::vector<double> fwd, bwd, orc;
        RenderStats stats;
        FeatureImage<T> upstream(cam.width, cam.height, scene.feature_dim());
        std::fill(upstream.data.begin(), upstream.data.end(), T(1));
        BackwardSettings bs;
        bs.tile_size = common.tile_size;
        bs.workers = common.workers;
        for (int r = 0; r < opts.repeats; ++r) {
            auto t0 = Clock::now();
            const auto res = render_forward(scene, cam, rs);
            fwd.push_back(ms_since(t0));
            stats = res.stats;
            t0 = Clock::now();
            render_backward(scene, cam, rs.blend, res.buffer, upstream, bs);
            bwd.push_back(ms_since(t0));
            if (n <= opts.oracle_max) {
                t0 = Clock::now();
                testkit::oracle_render(scene, cam, rs.blend);
                orc.push_back(ms_since(t0));
            }
        }
        const auto [fm, fs_] = summarize(fwd);
        const auto [bm, bs_] = summarize(bwd);
        csv << n << ',' << opts.profile << ',' << cam.width << ',' << cam.height << ',' << opts.repeats << ',' << fm
            << ',' << fs_ << ',' << bm << ',' << bs_ << ',';
        if (orc.empty()) {
            csv << "";
        } else {
            csv << summarize(orc).first;
        }
        csv << ',' << stats.spheres_on_sensor << ',' << stats.candidates_tested << ',' << stats.hits_blended << ','
            << stats.pixels_early_stopped << '\n';
    }
}

template <typename T>
void cmd_convert(const CommonOptions&, const ConvertOptions& opts) {
    std::vector<T> bg;
    if (!opts.background.empty())
        for (const double v : parse_numbers(opts.background, "--background")) bg.push_back(static_cast<T>(v));
    const auto scene = import_point_cloud<T>(opts.in, static_cast<T>(opts.radius), static_cast<T>(opts.opacity),
                                             opts.feature_dim, bg);
    save_scene(scene, opts.out);
    std::printf("spheres=%zu feature_dim=%d\n", scene.size(), scene.feature_dim());
}

template <typename T>
void cmd_generate(const CommonOptions& common, const GenerateOptions& opts) {
    SphereScene<T> scene(1, {T(0)});
    if (opts.kind == "demo") {
        scene = synth::random_demo_scene<T>(opts.count, common.seed);
    } else if (opts.kind == "random") {
        synth::RandomSceneOptions r;
        r.count = opts.count;
        r.feature_dim = opts.feature_dim;
        scene = synth::random_scene<T>(r, common.seed);
    } else if (opts.kind == "occluded") {
        scene = synth::occluded_scene<T>(opts.count, common.seed);
    } else if (opts.kind == "volume") {
        scene = synth::volume_fill<T>(main_camera<T>(common), opts.count, 5.0, 30.0, 3.0, opts.feature_dim,
                                      common.seed);
    } else {
        throw ConfigError("--kind must be demo, random, occluded or volume");
    }
    save_scene(scene, opts.out);
    std::printf("spheres=%zu feature_dim=%d\n", scene.size(), scene.feature_dim());
}

#define SOFTSPHERE_INSTANTIATE_COMMANDS(T)                                   \
    template void cmd_render<T>(const CommonOptions&, const RenderOptions&);       \
    template void cmd_fit<T>(const CommonOptions&, const FitOptions&);             \
    template void cmd_benchmark<T>(const CommonOptions&, const BenchmarkOptions&); \
    template void cmd_convert<T>(const CommonOptions&, const ConvertOptions&);     \
    template void cmd_generate<T>(const CommonOptions&, const GenerateOptions&);

SOFTSPHERE_INSTANTIATE_COMMANDS(float)
SOFTSPHERE_INSTANTIATE_COMMANDS(double)

}  // namespace softsphere::cli
