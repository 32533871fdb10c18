#pragma once

#include <algorithm>
#include <vector>

#include "imd/manifolds.hpp"
#include "imd/rng.hpp"

namespace imd::testing {

inline PointCloud uniform_cloud(std::uint64_t seed, std::size_t n, int dims, double scale = 1.0) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(n), dims);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i)
        for (Eigen::Index k = 0; k < dims; ++k) cloud.points(i, k) = scale * rng.uniform();
    cloud.intrinsic_dim = dims;
    return cloud;
}

inline PointCloud line_cloud(std::vector<double> xs) {
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) cloud.points(static_cast<Eigen::Index>(i), 0) = xs[i];
    cloud.intrinsic_dim = 1;
    return cloud;
}

inline Vector random_vector(Rng& rng, std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    return v;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace imd::testing
