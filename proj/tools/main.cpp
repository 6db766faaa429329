#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "softsphere/errors.hpp"

using namespace softsphere;
using namespace softsphere::cli;

namespace {

constexpr int kExitDivergence = 1;
constexpr int kExitUsage = 2;

template <typename Opts>
int dispatch(const CommonOptions& c, const Opts& o, void (*f32)(const CommonOptions&, const Opts&),
             void (*f64)(const CommonOptions&, const Opts&)) {
    (c.precision == 32 ? f32 : f64)(c, o);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable sphere renderer: render, fit, benchmark and convert sphere scenes."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI/TOML run configuration; keys match the long flags");
    app.allow_config_extras(CLI::config_extras_mode::error);

    CommonOptions common;
    app.add_option("--gamma", common.gamma, "Blend softness")->check(CLI::Range(1e-5, 1.0));
    app.add_option("--epsilon", common.epsilon, "Background offset");
    app.add_option("--tau", common.tau, "Early-termination threshold, 0 disables")->check(CLI::Range(0.0, 0.999999));
    app.add_option("--top-k", common.top_k, "Hits kept per pixel for gradients")->check(CLI::Range(1, 255));
    app.add_option("--min-depth", common.min_depth, "Near plane");
    app.add_option("--max-depth", common.max_depth, "Far plane");
    app.add_option("--workers", common.workers, "Worker threads, 0 = hardware")->check(CLI::NonNegativeNumber);
    app.add_option("--precision", common.precision, "Floating point precision")->check(CLI::IsMember({32, 64}));
    app.add_option("--seed", common.seed, "Seed for every random choice");
    app.add_option("--width", common.width, "Image width")->check(CLI::PositiveNumber);
    app.add_option("--height", common.height, "Image height")->check(CLI::PositiveNumber);
    app.add_option("--projection", common.projection, "pinhole or orthographic")
        ->check(CLI::IsMember({"pinhole", "orthographic"}));
    app.add_option("--camera", common.camera, "Camera vector: t(3) R(3 or 6) f s");
    app.add_option("--tile-size", common.tile_size, "Tile edge in pixels")->check(CLI::PositiveNumber);

    RenderOptions render;
    auto* r = app.add_subcommand("render", "Render a scene file to PNG");
    r->add_option("--scene", render.scene, "PSC1 scene file")->required();
    r->add_option("--out", render.out, "Output PNG (or directory with --poses)")->required();
    r->add_option("--poses", render.poses, "Pose file, one camera vector per line");
    r->add_option("--bits", render.bits, "PNG bit depth")->check(CLI::IsMember({8, 16}));
    r->add_option("--channels", render.channels, "Channels to write, e.g. 0,1,2");
    r->add_option("--shader", render.shader, "none, identity or diffuse");
    r->add_option("--light", render.lights, "Directional light dx,dy,dz,intensity,ambient (repeatable)");

    FitOptions fit;
    auto* f = app.add_subcommand("fit", "Fit a sphere scene to posed images");
    f->add_option("--images", fit.images, "Directory of PNG targets (sorted by name)")->required();
    f->add_option("--poses", fit.poses, "Pose file, one camera vector per image")->required();
    f->add_option("--init", fit.init, "scene:PATH, ply:PATH or volume:N");
    f->add_option("--out", fit.out, "Output directory")->required();
    f->add_option("--resume", fit.resume, "Continue from a checkpoint");
    f->add_option("--steps", fit.steps, "Total optimization steps");
    f->add_option("--lr-position", fit.lr_position);
    f->add_option("--lr-radius", fit.lr_radius);
    f->add_option("--lr-opacity", fit.lr_opacity);
    f->add_option("--lr-feature", fit.lr_feature);
    f->add_option("--lr-camera", fit.lr_camera);
    f->add_option("--lr-shader", fit.lr_shader);
    f->add_option("--lr-final-scale", fit.lr_final_scale, "Learning-rate multiplier reached at the last step");
    f->add_option("--scene-scale", fit.scene_scale, "Scales the position learning rate");
    f->add_option("--gamma-start", fit.gamma_start);
    f->add_option("--gamma-end", fit.gamma_end);
    f->add_option("--lambda-od", fit.lambda_od, "Opacity-depth regularizer weight");
    f->add_option("--prune-every", fit.prune_every, "Epochs between prune passes, 0 = never");
    f->add_option("--prune-opacity", fit.prune_opacity);
    f->add_option("--prune-background", fit.prune_background, "Background feature distance, < 0 disables");
    f->add_option("--subdivide-rounds", fit.subdivide_rounds);
    f->add_option("--subdivide-scale", fit.subdivide_scale, "Child radius / parent radius");
    f->add_flag("--optimize-camera", fit.optimize_camera);
    f->add_flag("--no-gating", fit.no_gating, "Keep gradients of spheres under 3 px");
    f->add_option("--normalization", fit.normalization, "mean or none");
    f->add_option("--shader", fit.shader, "none, identity or linear");
    f->add_flag("--view-conditioned", fit.view_conditioned, "Linear shader sees the view direction");
    f->add_option("--preview-every", fit.preview_every, "Steps between preview PNGs, 0 = final only");
    f->add_option("--init-radius", fit.init_radius, "Radius for ply init");
    f->add_option("--init-opacity", fit.init_opacity);
    f->add_option("--init-depth-min", fit.init_depth_min, "Volume init depth range");
    f->add_option("--init-depth-max", fit.init_depth_max);
    f->add_option("--init-pixel-radius", fit.init_pixel_radius, "Volume init sphere size in pixels");

    BenchmarkOptions bench;
    auto* b = app.add_subcommand("benchmark", "Time forward/backward passes on synthetic scenes");
    b->add_option("--counts", bench.counts, "Sphere counts, comma separated");
    b->add_option("--profile", bench.profile, "occluded or uniform");
    b->add_option("--repeats", bench.repeats);
    b->add_option("--oracle-max", bench.oracle_max, "Largest count also timed with the brute-force oracle");
    b->add_option("--out", bench.out, "CSV file (default stdout)");

    ConvertOptions conv;
    auto* c = app.add_subcommand("convert", "Convert a PLY point cloud to a PSC1 scene");
    c->add_option("--in", conv.in, "PLY file")->required();
    c->add_option("--out", conv.out, "PSC1 file")->required();
    c->add_option("--radius", conv.radius);
    c->add_option("--opacity", conv.opacity);
    c->add_option("--feature-dim", conv.feature_dim);
    c->add_option("--background", conv.background, "Background feature, comma separated");

    GenerateOptions gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic scene");
    g->add_option("--kind", gen.kind, "demo, random, occluded or volume");
    g->add_option("--count", gen.count);
    g->add_option("--feature-dim", gen.feature_dim);
    g->add_option("--out", gen.out, "PSC1 file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (r->parsed()) return dispatch(common, render, cmd_render<float>, cmd_render<double>);
        if (f->parsed()) return dispatch(common, fit, cmd_fit<float>, cmd_fit<double>);
        if (b->parsed()) return dispatch(common, bench, cmd_benchmark<float>, cmd_benchmark<double>);
        if (c->parsed()) return dispatch(common, conv, cmd_convert<float>, cmd_convert<double>);
        if (g->parsed()) return dispatch(common, gen, cmd_generate<float>, cmd_generate<double>);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: diverged at step %ld: %s\n", e.step(), e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
