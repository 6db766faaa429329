#include "softsphere/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "softsphere/binary_io.hpp"
#include "softsphere/errors.hpp"

namespace softsphere {

double GammaSchedule::at(long step, long steps) const {
    if (steps <= 1) return start;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(steps - 1), 0.0, 1.0);
    return std::exp(std::log(start) + t * (std::log(end) - std::log(start)));
}

void FitConfig::validate() const {
    for (const double r : {lr.position, lr.radius, lr.opacity, lr.feature, lr.camera, lr.shader})
        if (!(r >= 0) || !std::isfinite(r)) throw ConfigError("learning rates must be finite and >= 0");
    if (!(scene_scale > 0)) throw ConfigError("scene_scale must be > 0");
    if (!(lr_final_scale > 0 && lr_final_scale <= 1)) throw ConfigError("lr_final_scale must be in (0, 1]");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
        throw ConfigError("Adam betas must be in [0, 1)");
    if (!(adam.epsilon > 0)) throw ConfigError("Adam epsilon must be > 0");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    for (const double g : {gamma.start, gamma.end})
        if (!(g >= kGammaMin && g <= kGammaMax)) throw ConfigError("gamma schedule must stay within [1e-5, 1]");
    BlendParams b = blend;
    b.gamma = gamma.start;
    b.validate();
    if (!(lambda_od >= 0)) throw ConfigError("lambda_od must be >= 0");
    if (prune.every_epochs < 0) throw ConfigError("prune interval must be >= 0");
    if (subdivide.rounds < 0) throw ConfigError("subdivision rounds must be >= 0");
    if (!(subdivide.scale > 0)) throw ConfigError("subdivision scale must be > 0");
    if (!(radius_min > 0)) throw ConfigError("radius_min must be > 0");
    if (tile_size < 1) throw ConfigError("tile_size must be >= 1");
    if (workers < 0) throw ConfigError("workers must be >= 0");
}

template <typename T>
LossResult<T> photometric_loss(const FeatureImage<T>& rendered, const FeatureImage<T>& target) {
    if (!rendered.same_shape(target))
        throw ValidationError("photometric loss: rendered " + std::to_string(rendered.width) + "x" +
                              std::to_string(rendered.height) + "x" + std::to_string(rendered.channels) +
                              " vs target " + std::to_string(target.width) + "x" + std::to_string(target.height) +
                              "x" + std::to_string(target.channels));
    LossResult<T> out;
    out.upstream = FeatureImage<T>(rendered.width, rendered.height, rendered.channels);
    const std::size_t n = rendered.data.size();
    if (n == 0) return out;
    const T inv = T(1) / static_cast<T>(n);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = rendered.data[i] - target.data[i];
        sum += std::abs(static_cast<double>(d));
        out.upstream.data[i] = d > 0 ? inv : (d < 0 ? -inv : T(0));
    }
    out.loss = sum / static_cast<double>(n);
    return out;
}

template <typename T>
RegularizerResult<T> opacity_depth_regularizer(const SphereScene<T>& scene, const Camera<T>& camera, double lambda) {
    RegularizerResult<T> out;
    out.d_position.assign(scene.size(), Vec3<T>{});
    out.d_opacity.assign(scene.size(), T(0));
    if (lambda == 0) return out;
    const Mat3<T> rot = camera.rotation_matrix();
    const T span = camera.far_plane - camera.near_plane;
    const T l = static_cast<T>(lambda);
    double energy = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& s = scene[i];
        const Vec3<T> pc = rot.transpose_mul(s.position - camera.translation);
        if (!(pc.z > 0)) continue;
        const bool pinhole = camera.projection == Projection::pinhole;
        const T metric = pinhole ? norm(pc) : pc.z;
        const T z = ndc_depth(camera, metric);
        const T o = std::clamp(s.opacity, T(0), T(1));
        energy += -static_cast<double>(l * z * o);
        if (s.opacity >= T(0) && s.opacity <= T(1)) out.d_opacity[i] = -l * z;
        if (metric > camera.near_plane && metric < camera.far_plane) {
            // dz/dmetric = -1 / (far - near); dmetric/dpc is pc/|pc| or e_z; world = R * camera.
            const Vec3<T> dm = pinhole ? pc / metric : Vec3<T>{0, 0, 1};
            out.d_position[i] = rot * (dm * (l * o / span));
        }
    }
    out.energy = energy;
    return out;
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState& state, double lr, const AdamHyper& hyper) {
    if (params.size() != grads.size() || params.size() != state.size())
        throw ValidationError("adam_step: " + std::to_string(params.size()) + " params, " +
                              std::to_string(grads.size()) + " gradients, state of " +
                              std::to_string(state.size()));
    ++state.step;
    const double c1 = 1 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double c2 = 1 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        state.m[i] = hyper.beta1 * state.m[i] + (1 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1 - hyper.beta2) * g * g;
        const double step = lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + hyper.epsilon);
        params[i] = static_cast<T>(static_cast<double>(params[i]) - step);
    }
}

template <typename T>
std::vector<std::size_t> prune(SphereScene<T>& scene, const PruneConfig& config,
                               std::span<const std::uint32_t> pixel_count) {
    if (!pixel_count.empty() && pixel_count.size() != scene.size())
        throw ValidationError("prune: pixel_count has " + std::to_string(pixel_count.size()) + " entries for " +
                              std::to_string(scene.size()) + " spheres");
    const auto& bg = scene.background();
    std::vector<std::size_t> kept;
    std::vector<Sphere<T>> survivors;
    const auto& spheres = scene.mutable_spheres();
    for (std::size_t i = 0; i < spheres.size(); ++i) {
        const auto& s = spheres[i];
        if (std::clamp(static_cast<double>(s.opacity), 0.0, 1.0) < config.opacity_min) continue;
        if (config.background_distance >= 0) {
            double dist = 0;
            for (std::size_t c = 0; c < bg.size(); ++c)
                dist = std::max(dist, std::abs(static_cast<double>(s.feature[c] - bg[c])));
            if (dist < config.background_distance) continue;
        }
        if (config.remove_invisible && !pixel_count.empty() && pixel_count[i] == 0) continue;
        kept.push_back(i);
        survivors.push_back(s);
    }
    scene.mutable_spheres() = std::move(survivors);
    return kept;
}

template <typename T>
SphereScene<T> subdivide(const SphereScene<T>& scene, double scale) {
    static constexpr int kOffsets[12][3] = {{1, 1, 0},  {1, -1, 0},  {-1, 1, 0},  {-1, -1, 0},
                                            {1, 0, 1},  {1, 0, -1},  {-1, 0, 1},  {-1, 0, -1},
                                            {0, 1, 1},  {0, 1, -1},  {0, -1, 1},  {0, -1, -1}};
    SphereScene<T> out(scene.feature_dim(), scene.background());
    auto& dst = out.mutable_spheres();
    dst.reserve(scene.size() * 12);
    for (const auto& s : scene.spheres()) {
        const T a = s.radius / static_cast<T>(std::sqrt(2.0));
        for (const auto& o : kOffsets) {
            Sphere<T> c = s;
            c.position = s.position + Vec3<T>{a * T(o[0]), a * T(o[1]), a * T(o[2])};
            c.radius = static_cast<T>(scale) * s.radius;
            dst.push_back(std::move(c));
        }
    }
    return out;
}

namespace {

template <typename T>
void reset_scene_state(OptimizerState& st, const SphereScene<T>& scene) {
    st.position = AdamState(scene.size() * 3);
    st.radius = AdamState(scene.size());
    st.opacity = AdamState(scene.size());
    st.feature = AdamState(scene.size() * static_cast<std::size_t>(scene.feature_dim()));
}

/// Visit order of one epoch; independent of where a resumed run starts.
std::vector<std::size_t> epoch_order(std::uint64_t seed, long epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

template <typename T>
bool finite_all(std::span<const T> v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
CameraSettings settings_of(const Camera<T>& c) {
    return {c.width, c.height, static_cast<double>(c.near_plane), static_cast<double>(c.far_plane), c.projection};
}

}  // namespace

template <typename T>
FitState<T> initial_state(SphereScene<T> scene, std::span<const Observation<T>> observations, ShaderStage<T> shader) {
    FitState<T> st;
    st.scene = std::move(scene);
    st.shader = std::move(shader);
    for (const auto& o : observations) {
        st.cameras.push_back(o.camera);
        st.optimizer.cameras.emplace_back(o.camera.to_vector().size());
    }
    reset_scene_state(st.optimizer, st.scene);
    if (st.shader.kind == ShaderKind::linear) st.optimizer.shader = AdamState(st.shader.linear.parameters().size());
    return st;
}

template <typename T>
FitResult<T> fit(FitState<T>& state, std::span<const Observation<T>> observations, const FitConfig& config,
                 const StepCallback& on_step, long until) {
    config.validate();
    if (observations.empty()) throw ValidationError("fit needs at least one observation");
    if (state.cameras.size() != observations.size() || state.optimizer.cameras.size() != observations.size())
        throw ValidationError("fit state has " + std::to_string(state.cameras.size()) + " cameras for " +
                              std::to_string(observations.size()) + " observations");
    state.scene.validate();
    const int out_dim = state.shader.output_dim(state.scene.feature_dim());
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const auto& o = observations[i];
        if (o.image.width != o.camera.width || o.image.height != o.camera.height || o.image.channels != out_dim)
            throw ValidationError("observation " + std::to_string(i) + " is " + std::to_string(o.image.width) + "x" +
                                  std::to_string(o.image.height) + "x" + std::to_string(o.image.channels) +
                                  ", expected " + std::to_string(o.camera.width) + "x" +
                                  std::to_string(o.camera.height) + "x" + std::to_string(out_dim));
        state.cameras[i].validate();
    }
    if (state.optimizer.position.size() != state.scene.size() * 3) reset_scene_state(state.optimizer, state.scene);

    const std::size_t n_obs = observations.size();
    const long steps = config.steps;
    std::vector<long> subdivide_at;
    for (int k = 0; k < config.subdivide.rounds; ++k)
        subdivide_at.push_back(static_cast<long>((k + 1) * steps / (config.subdivide.rounds + 1)));

    FitResult<T> result;
    std::vector<std::uint32_t> seen(state.scene.size(), 0);
    long seen_steps = 0;
    std::vector<std::size_t> order;
    long order_epoch = -1;
    std::vector<T> flat, grads;

    auto update = [&](AdamState& st, double lr, auto&& gather, auto&& scatter, auto&& gather_grad) {
        if (lr == 0) return;
        gather(flat);
        gather_grad(grads);
        adam_step<T>(flat, grads, st, lr, config.adam);
        scatter(flat);
    };

    const long last = until < 0 ? steps : std::min(until, steps);
    for (long s = state.step; s < last; ++s) {
        const long epoch = s / static_cast<long>(n_obs);
        const std::size_t slot = static_cast<std::size_t>(s % static_cast<long>(n_obs));

        if (slot == 0 && epoch > 0 && config.prune.every_epochs > 0 && epoch % config.prune.every_epochs == 0 &&
            seen_steps >= static_cast<long>(n_obs)) {
            const auto before = state.scene.size();
            prune(state.scene, config.prune, std::span<const std::uint32_t>(seen));
            if (state.scene.size() != before) {
                result.pruned += before - state.scene.size();
                reset_scene_state(state.optimizer, state.scene);
            }
            seen.assign(state.scene.size(), 0);
            seen_steps = 0;
        }
        if (std::find(subdivide_at.begin(), subdivide_at.end(), s) != subdivide_at.end() && s > 0) {
            state.scene = subdivide(state.scene, config.subdivide.scale);
            reset_scene_state(state.optimizer, state.scene);
            seen.assign(state.scene.size(), 0);
            seen_steps = 0;
            ++result.subdivisions;
        }

        if (epoch != order_epoch) {
            order = epoch_order(config.seed, epoch, n_obs);
            order_epoch = epoch;
        }
        const std::size_t j = order[slot];
        const auto& obs = observations[j];
        Camera<T>& cam = state.cameras[j];

        RenderSettings rs;
        rs.blend = config.blend;
        rs.blend.gamma = config.gamma.at(s, steps);
        rs.tile_size = config.tile_size;
        rs.workers = config.workers;
        const auto fwd = render_forward(state.scene, cam, rs);
        const auto color = state.shader.forward(fwd.image, cam);
        const auto loss = photometric_loss(color, obs.image);
        const auto reg = opacity_depth_regularizer(state.scene, cam, config.lambda_od);

        StepRecord rec;
        rec.step = s;
        rec.observation = j;
        rec.gamma = rs.blend.gamma;
        rec.loss = loss.loss + reg.energy;
        rec.regularizer = reg.energy;
        rec.spheres = state.scene.size();
        if (!std::isfinite(rec.loss))
            throw DivergenceError("loss became non-finite at step " + std::to_string(s), s);

        std::vector<T> d_shader;
        if (state.shader.has_parameters()) d_shader.assign(state.shader.linear.parameters().size(), T(0));
        const auto d_features = state.shader.backward(fwd.image, cam, loss.upstream, &d_shader);
        BackwardSettings bs;
        bs.normalization = config.normalization;
        bs.gate_small_spheres = config.gate_small_spheres;
        bs.tile_size = config.tile_size;
        bs.workers = config.workers;
        auto [sg, cg] = render_backward(state.scene, cam, rs.blend, fwd.buffer, d_features, bs);
        for (std::size_t i = 0; i < sg.size(); ++i) {
            sg.d_position[i] += reg.d_position[i];
            sg.d_opacity[i] += reg.d_opacity[i];
            if (sg.pixel_count[i] > 0) seen[i] = 1;
        }
        ++seen_steps;

        const double decay =
            steps > 1 ? std::pow(config.lr_final_scale, static_cast<double>(s) / static_cast<double>(steps - 1)) : 1.0;
        auto& spheres = state.scene.mutable_spheres();
        const std::size_t m = spheres.size();
        const std::size_t dim = static_cast<std::size_t>(state.scene.feature_dim());

        update(
            state.optimizer.position, config.lr.position * config.scene_scale * decay,
            [&](std::vector<T>& v) {
                v.resize(3 * m);
                for (std::size_t i = 0; i < m; ++i) {
                    v[3 * i] = spheres[i].position.x;
                    v[3 * i + 1] = spheres[i].position.y;
                    v[3 * i + 2] = spheres[i].position.z;
                }
            },
            [&](const std::vector<T>& v) {
                for (std::size_t i = 0; i < m; ++i) spheres[i].position = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
            },
            [&](std::vector<T>& g) {
                g.resize(3 * m);
                for (std::size_t i = 0; i < m; ++i) {
                    g[3 * i] = sg.d_position[i].x;
                    g[3 * i + 1] = sg.d_position[i].y;
                    g[3 * i + 2] = sg.d_position[i].z;
                }
            });
        update(
            state.optimizer.radius, config.lr.radius * decay,
            [&](std::vector<T>& v) {
                v.resize(m);
                for (std::size_t i = 0; i < m; ++i) v[i] = spheres[i].radius;
            },
            [&](const std::vector<T>& v) {
                for (std::size_t i = 0; i < m; ++i) spheres[i].radius = v[i];
            },
            [&](std::vector<T>& g) { g = sg.d_radius; });
        update(
            state.optimizer.opacity, config.lr.opacity * decay,
            [&](std::vector<T>& v) {
                v.resize(m);
                for (std::size_t i = 0; i < m; ++i) v[i] = spheres[i].opacity;
            },
            [&](const std::vector<T>& v) {
                for (std::size_t i = 0; i < m; ++i) spheres[i].opacity = v[i];
            },
            [&](std::vector<T>& g) { g = sg.d_opacity; });
        update(
            state.optimizer.feature, config.lr.feature * decay,
            [&](std::vector<T>& v) {
                v.resize(m * dim);
                for (std::size_t i = 0; i < m; ++i) std::copy_n(spheres[i].feature.begin(), dim, v.begin() + i * dim);
            },
            [&](const std::vector<T>& v) {
                for (std::size_t i = 0; i < m; ++i) std::copy_n(v.begin() + i * dim, dim, spheres[i].feature.begin());
            },
            [&](std::vector<T>& g) { g = sg.d_feature; });
        if (config.lr.radius > 0) state.scene.project_radii(static_cast<T>(config.radius_min));

        if (state.shader.has_parameters())
            update(
                state.optimizer.shader, config.lr.shader * decay,
                [&](std::vector<T>& v) { v = state.shader.linear.parameters(); },
                [&](const std::vector<T>& v) { state.shader.linear.set_parameters(v); },
                [&](std::vector<T>& g) { g = d_shader; });

        if (config.optimize_camera && config.lr.camera > 0) {
            std::vector<T> cv = cam.to_vector();
            const std::vector<T> cgv = cg.to_vector();
            adam_step<T>(cv, cgv, state.optimizer.cameras[j], config.lr.camera * decay, config.adam);
            if (!finite_all<T>(cv))
                throw DivergenceError("camera parameters became non-finite at step " + std::to_string(s), s);
            try {
                cam = camera_from_vector<T>(cv, settings_of(cam));
            } catch (const ConfigError& e) {
                throw DivergenceError(std::string("camera update failed at step ") + std::to_string(s) + ": " +
                                          e.what(),
                                      s);
            }
        }

        for (const auto& sp : spheres) {
            if (!all_finite(sp.position) || !std::isfinite(sp.radius) || !std::isfinite(sp.opacity) ||
                !finite_all<T>(sp.feature))
                throw DivergenceError("scene parameters became non-finite at step " + std::to_string(s), s);
        }

        state.step = s + 1;
        result.trace.push_back(rec);
        if (on_step) on_step(rec);
    }
    return result;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4B435353;  // "SSCK"
constexpr std::uint32_t kCheckpointVersion = 1;

void write_adam(binary::Writer& w, const AdamState& s) {
    w.u64(static_cast<std::uint64_t>(s.step));
    w.u64(s.size());
    for (const double v : s.m) w.f64(v);
    for (const double v : s.v) w.f64(v);
}

AdamState read_adam(binary::Reader& r) {
    const auto step = static_cast<long>(r.u64());
    const auto n = r.u64();
    if (n > r.remaining() / 16) throw FormatError("checkpoint: optimizer state larger than the file");
    AdamState s(n);
    s.step = step;
    for (auto& v : s.m) v = r.f64();
    for (auto& v : s.v) v = r.f64();
    return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const FitState<T>& state, const std::filesystem::path& path) {
    binary::Writer w;
    w.u32(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u64(static_cast<std::uint64_t>(state.step));
    w.blob(encode_scene(state.scene));

    w.u32(static_cast<std::uint32_t>(state.cameras.size()));
    for (const auto& c : state.cameras) {
        w.u32(static_cast<std::uint32_t>(c.width));
        w.u32(static_cast<std::uint32_t>(c.height));
        w.f64(static_cast<double>(c.near_plane));
        w.f64(static_cast<double>(c.far_plane));
        w.u32(c.projection == Projection::pinhole ? 0 : 1);
        const auto v = c.to_vector();
        w.u32(static_cast<std::uint32_t>(v.size()));
        for (const T x : v) w.f64(static_cast<double>(x));
    }

    const auto& sh = state.shader;
    w.u32(static_cast<std::uint32_t>(sh.kind));
    w.u32(static_cast<std::uint32_t>(sh.lights.size()));
    for (const auto& l : sh.lights) {
        w.f64(l.direction.x);
        w.f64(l.direction.y);
        w.f64(l.direction.z);
        w.f64(l.intensity);
        w.f64(l.ambient);
    }
    w.u32(static_cast<std::uint32_t>(sh.linear.feature_dim));
    w.u32(sh.linear.view_conditioned ? 1 : 0);
    w.u32(sh.linear.trainable ? 1 : 0);
    const auto params = sh.kind == ShaderKind::linear ? sh.linear.parameters() : std::vector<T>{};
    w.u64(params.size());
    for (const T x : params) w.f64(static_cast<double>(x));

    const auto& o = state.optimizer;
    for (const AdamState* s : {&o.position, &o.radius, &o.opacity, &o.feature, &o.shader}) write_adam(w, *s);
    w.u32(static_cast<std::uint32_t>(o.cameras.size()));
    for (const auto& s : o.cameras) write_adam(w, s);
    binary::write_file(path, w.buffer());
}

template <typename T>
FitState<T> load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = binary::read_file(path);
    binary::Reader r(bytes);
    const std::string where = path.string() + ": ";
    if (r.u32() != kCheckpointMagic) throw FormatError(where + "not a checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError(where + "unsupported checkpoint version " + std::to_string(version));
    FitState<T> st;
    st.step = static_cast<long>(r.u64());
    st.scene = decode_scene<T>(r.blob());

    const auto n_cams = r.u32();
    for (std::uint32_t i = 0; i < n_cams; ++i) {
        CameraSettings cs;
        cs.width = static_cast<int>(r.u32());
        cs.height = static_cast<int>(r.u32());
        cs.near_plane = r.f64();
        cs.far_plane = r.f64();
        cs.projection = r.u32() == 0 ? Projection::pinhole : Projection::orthographic;
        const auto n = r.u32();
        if (n != 8 && n != 11) throw FormatError(where + "camera vector of length " + std::to_string(n));
        std::vector<T> v(n);
        for (auto& x : v) x = static_cast<T>(r.f64());
        st.cameras.push_back(camera_from_vector<T>(v, cs));
    }

    auto& sh = st.shader;
    const auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(ShaderKind::linear)) throw FormatError(where + "unknown shader kind");
    sh.kind = static_cast<ShaderKind>(kind);
    const auto n_lights = r.u32();
    for (std::uint32_t i = 0; i < n_lights; ++i) {
        DirectionalLight l;
        l.direction.x = r.f64();
        l.direction.y = r.f64();
        l.direction.z = r.f64();
        l.intensity = r.f64();
        l.ambient = r.f64();
        sh.lights.push_back(l);
    }
    sh.linear.feature_dim = static_cast<int>(r.u32());
    sh.linear.view_conditioned = r.u32() != 0;
    sh.linear.trainable = r.u32() != 0;
    const auto n_params = r.u64();
    if (n_params > r.remaining() / 8) throw FormatError(where + "shader parameters larger than the file");
    if (sh.kind == ShaderKind::linear) {
        std::vector<T> p(n_params);
        for (auto& x : p) x = static_cast<T>(r.f64());
        sh.linear.weight.assign(static_cast<std::size_t>(sh.linear.input_dim()) * 3, T(0));
        sh.linear.set_parameters(p);
        sh.linear.validate();
    } else if (n_params != 0) {
        throw FormatError(where + "shader parameters present for a parameter-free shader");
    }

    auto& o = st.optimizer;
    for (AdamState* s : {&o.position, &o.radius, &o.opacity, &o.feature, &o.shader}) *s = read_adam(r);
    const auto n_states = r.u32();
    if (n_states != n_cams) throw FormatError(where + "camera optimizer state count differs from camera count");
    for (std::uint32_t i = 0; i < n_states; ++i) o.cameras.push_back(read_adam(r));
    if (r.remaining() != 0) throw FormatError(where + "trailing bytes after checkpoint");
    return st;
}

#define SOFTSPHERE_INSTANTIATE_OPTIM(T)                                                                          \
    template LossResult<T> photometric_loss<T>(const FeatureImage<T>&, const FeatureImage<T>&);                  \
    template RegularizerResult<T> opacity_depth_regularizer<T>(const SphereScene<T>&, const Camera<T>&, double); \
    template void adam_step<T>(std::span<T>, std::span<const T>, AdamState&, double, const AdamHyper&);          \
    template std::vector<std::size_t> prune<T>(SphereScene<T>&, const PruneConfig&,                              \
                                               std::span<const std::uint32_t>);                                  \
    template SphereScene<T> subdivide<T>(const SphereScene<T>&, double);                                         \
    template FitState<T> initial_state<T>(SphereScene<T>, std::span<const Observation<T>>, ShaderStage<T>);      \
    template FitResult<T> fit<T>(FitState<T>&, std::span<const Observation<T>>, const FitConfig&,                \
                                 const StepCallback&, long);                                                           \
    template void save_checkpoint<T>(const FitState<T>&, const std::filesystem::path&);                          \
    template FitState<T> load_checkpoint<T>(const std::filesystem::path&);

SOFTSPHERE_INSTANTIATE_OPTIM(float)
SOFTSPHERE_INSTANTIATE_OPTIM(double)

}  // namespace softsphere
