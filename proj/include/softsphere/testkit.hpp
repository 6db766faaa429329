#pragma once

#include <functional>
#include <span>
#include <vector>

#include "softsphere/raster.hpp"

namespace softsphere::testkit {

/// Brute-force reference renderer: every pixel ray is tested against every sphere in world
/// space and all hits are blended in extended precision. No bounds, sorting, early
/// termination or top-K truncation.
template <typename T>
FeatureImage<T> oracle_render(const SphereScene<T>& scene, const Camera<T>& camera, const BlendParams& params);

/// Same as oracle_render but with rays and output kept in extended precision (H x W x d,
/// channel-interleaved). Used where finite differences need more digits than T carries.
template <typename T>
std::vector<long double> oracle_render_extended(const SphereScene<T>& scene, const Camera<T>& camera,
                                                const BlendParams& params);

struct FdResult {
    std::vector<double> gradient;
    /// Coordinates where f(x + h e_j) or f(x - h e_j) was not finite.
    std::vector<std::size_t> non_finite;
};

/// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h for every coordinate j.
FdResult fd_gradient(const std::function<double(std::span<const double>)>& loss, std::span<const double> x,
                     double h);

}  // namespace softsphere::testkit
