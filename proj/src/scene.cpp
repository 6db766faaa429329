#include "softsphere/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "softsphere/binary_io.hpp"
#include "softsphere/errors.hpp"

namespace softsphere {

namespace {

constexpr char kSceneMagic[4] = {'P', 'S', 'C', '1'};

template <typename T>
std::string describe_sphere_problem(const Sphere<T>& s, int feature_dim) {
    if (!all_finite(s.position)) return "non-finite position";
    if (!std::isfinite(s.radius)) return "non-finite radius";
    if (!(s.radius > 0)) return "non-positive radius " + std::to_string(static_cast<double>(s.radius));
    if (!std::isfinite(s.opacity)) return "non-finite opacity";
    if (static_cast<int>(s.feature.size()) != feature_dim) {
        return "feature length " + std::to_string(s.feature.size()) + " != feature_dim " +
               std::to_string(feature_dim);
    }
    for (const T f : s.feature)
        if (!std::isfinite(f)) return "non-finite feature value";
    return {};
}

}  // namespace

template <typename T>
SphereScene<T>::SphereScene(int feature_dim, std::vector<T> background_feature)
    : feature_dim_(feature_dim), background_(std::move(background_feature)) {
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1, got " + std::to_string(feature_dim));
    if (static_cast<int>(background_.size()) != feature_dim) {
        throw ConfigError("background feature has length " + std::to_string(background_.size()) +
                          ", expected " + std::to_string(feature_dim));
    }
    for (const T v : background_)
        if (!std::isfinite(v)) throw ConfigError("background feature must be finite");
}

template <typename T>
void SphereScene<T>::set_background(std::vector<T> background_feature) {
    if (static_cast<int>(background_feature.size()) != feature_dim_)
        throw ConfigError("background feature length mismatch");
    background_ = std::move(background_feature);
}

template <typename T>
void SphereScene<T>::add_spheres(std::span<const Sphere<T>> spheres) {
    for (std::size_t i = 0; i < spheres.size(); ++i) {
        const auto problem = describe_sphere_problem(spheres[i], feature_dim_);
        if (!problem.empty()) throw ValidationError("sphere " + std::to_string(i) + ": " + problem);
    }
    spheres_.insert(spheres_.end(), spheres.begin(), spheres.end());
}

template <typename T>
void SphereScene<T>::validate() const {
    for (std::size_t i = 0; i < spheres_.size(); ++i) {
        const auto problem = describe_sphere_problem(spheres_[i], feature_dim_);
        if (!problem.empty()) throw ValidationError("sphere " + std::to_string(i) + ": " + problem);
    }
}

template <typename T>
void SphereScene<T>::project_radii(T radius_min) {
    for (auto& s : spheres_) s.radius = std::max(s.radius, radius_min);
}

// ---------------------------------------------------------------------------
// PLY import

namespace {

struct PlyProperty {
    std::string name;
    bool is_integer_color = false;
};

struct PlyHeader {
    std::size_t vertex_count = 0;
    std::vector<PlyProperty> vertex_props;
    // Elements before/after vertex, as (count, property count) for skipping.
    std::size_t lines_before_vertex = 0;
    int x = -1, y = -1, z = -1, r = -1, g = -1, b = -1;
};

bool is_integer_type(const std::string& t) {
    return t == "uchar" || t == "uint8" || t == "char" || t == "int8" || t == "ushort" || t == "uint16" ||
           t == "short" || t == "int16" || t == "int" || t == "int32" || t == "uint" || t == "uint32";
}

[[noreturn]] void ply_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

template <typename T>
SphereScene<T> import_point_cloud(const std::filesystem::path& path, T default_radius, T default_opacity,
                                  int feature_dim, std::vector<T> background) {
    if (background.empty()) background.assign(static_cast<std::size_t>(std::max(feature_dim, 1)), T(0));
    SphereScene<T> scene(feature_dim, background);
    if (!(default_radius > 0)) throw ConfigError("default radius must be positive");

    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line() || line != "ply") ply_error(path, line_no, "missing 'ply' magic");

    PlyHeader header;
    bool in_vertex = false;
    bool seen_vertex = false;
    bool ended = false;
    while (next_line()) {
        std::istringstream ss(line);
        std::string keyword;
        ss >> keyword;
        if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
        if (keyword == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") ply_error(path, line_no, "unsupported PLY format '" + fmt + "' (ascii only)");
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            ss >> name >> count;
            if (!ss || count < 0) ply_error(path, line_no, "malformed element line");
            in_vertex = name == "vertex";
            if (in_vertex) {
                header.vertex_count = static_cast<std::size_t>(count);
                seen_vertex = true;
            } else if (!seen_vertex) {
                header.lines_before_vertex += static_cast<std::size_t>(count);
            }
        } else if (keyword == "property") {
            if (!in_vertex) continue;
            std::string type, name;
            ss >> type;
            if (type == "list") ply_error(path, line_no, "list properties are not supported on vertices");
            ss >> name;
            if (name.empty()) ply_error(path, line_no, "malformed property line");
            const int index = static_cast<int>(header.vertex_props.size());
            const bool int_type = is_integer_type(type);
            if (name == "x") header.x = index;
            if (name == "y") header.y = index;
            if (name == "z") header.z = index;
            if (name == "red" || name == "r") header.r = index;
            if (name == "green" || name == "g") header.g = index;
            if (name == "blue" || name == "b") header.b = index;
            header.vertex_props.push_back({name, int_type});
        } else if (keyword == "end_header") {
            ended = true;
            break;
        } else {
            ply_error(path, line_no, "unknown header keyword '" + keyword + "'");
        }
    }
    if (!ended) ply_error(path, line_no, "missing end_header");
    if (!seen_vertex) ply_error(path, line_no, "no vertex element");
    if (header.x < 0 || header.y < 0 || header.z < 0) ply_error(path, line_no, "vertex element lacks x, y or z");

    const bool has_color = header.r >= 0 && header.g >= 0 && header.b >= 0 && feature_dim == 3;

    for (std::size_t i = 0; i < header.lines_before_vertex; ++i)
        if (!next_line()) ply_error(path, line_no + 1, "unexpected end of file");

    std::vector<Sphere<T>> spheres;
    spheres.reserve(header.vertex_count);
    std::vector<double> values(header.vertex_props.size());
    for (std::size_t v = 0; v < header.vertex_count; ++v) {
        if (!next_line()) ply_error(path, line_no + 1, "unexpected end of file, expected vertex " + std::to_string(v));
        std::istringstream ss(line);
        for (auto& value : values) {
            if (!(ss >> value)) ply_error(path, line_no, "expected " + std::to_string(values.size()) + " values");
        }
        Sphere<T> s;
        s.position = {static_cast<T>(values[static_cast<std::size_t>(header.x)]),
                      static_cast<T>(values[static_cast<std::size_t>(header.y)]),
                      static_cast<T>(values[static_cast<std::size_t>(header.z)])};
        s.radius = default_radius;
        s.opacity = default_opacity;
        if (has_color) {
            for (int c : {header.r, header.g, header.b}) {
                const auto idx = static_cast<std::size_t>(c);
                double value = values[idx];
                if (header.vertex_props[idx].is_integer_color) value /= 255.0;
                s.feature.push_back(static_cast<T>(value));
            }
        } else {
            s.feature = scene.background();
        }
        if (!all_finite(s.position)) ply_error(path, line_no, "non-finite coordinate");
        spheres.push_back(std::move(s));
    }
    scene.add_spheres(spheres);
    return scene;
}

// ---------------------------------------------------------------------------
// PSC1

template <typename T>
std::vector<std::byte> encode_scene(const SphereScene<T>& scene) {
    binary::Writer w;
    w.bytes(kSceneMagic, 4);
    w.u32(static_cast<std::uint32_t>(scene.feature_dim()));
    w.u64(scene.size());
    for (const T v : scene.background()) w.f32(static_cast<float>(v));
    for (const auto& s : scene.spheres()) {
        w.f32(static_cast<float>(s.position.x));
        w.f32(static_cast<float>(s.position.y));
        w.f32(static_cast<float>(s.position.z));
        w.f32(static_cast<float>(s.radius));
        w.f32(static_cast<float>(s.opacity));
        for (const T f : s.feature) w.f32(static_cast<float>(f));
    }
    return std::move(w.buffer());
}

template <typename T>
SphereScene<T> decode_scene(std::span<const std::byte> bytes) {
    binary::Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kSceneMagic)) throw FormatError("bad scene magic (expected PSC1)");
    const auto dim = r.u32();
    const auto count = r.u64();
    if (dim == 0 || dim > (1u << 20)) throw FormatError("bad feature dimension " + std::to_string(dim));
    const std::uint64_t record = 4ull * (5ull + dim);
    if (count > r.remaining() / record) throw FormatError("sphere count exceeds file size");
    std::vector<T> bg(dim);
    for (auto& v : bg) v = static_cast<T>(r.f32());
    SphereScene<T> scene(static_cast<int>(dim), std::move(bg));
    std::vector<Sphere<T>> spheres(count);
    for (auto& s : spheres) {
        s.position.x = static_cast<T>(r.f32());
        s.position.y = static_cast<T>(r.f32());
        s.position.z = static_cast<T>(r.f32());
        s.radius = static_cast<T>(r.f32());
        s.opacity = static_cast<T>(r.f32());
        s.feature.resize(dim);
        for (auto& f : s.feature) f = static_cast<T>(r.f32());
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after scene records");
    scene.add_spheres(spheres);
    return scene;
}

template <typename T>
void save_scene(const SphereScene<T>& scene, const std::filesystem::path& path) {
    binary::write_file(path, encode_scene(scene));
}

template <typename T>
SphereScene<T> load_scene(const std::filesystem::path& path) {
    const auto bytes = binary::read_file(path);
    return decode_scene<T>(bytes);
}

#define SOFTSPHERE_INSTANTIATE_SCENE(T)                                                                          \
    template class SphereScene<T>;                                                                               \
    template SphereScene<T> import_point_cloud<T>(const std::filesystem::path&, T, T, int, std::vector<T>);      \
    template std::vector<std::byte> encode_scene<T>(const SphereScene<T>&);                                      \
    template SphereScene<T> decode_scene<T>(std::span<const std::byte>);                                         \
    template void save_scene<T>(const SphereScene<T>&, const std::filesystem::path&);                            \
    template SphereScene<T> load_scene<T>(const std::filesystem::path&);

SOFTSPHERE_INSTANTIATE_SCENE(float)
SOFTSPHERE_INSTANTIATE_SCENE(double)

}  // namespace softsphere
