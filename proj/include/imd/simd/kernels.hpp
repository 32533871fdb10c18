#pragma once

// Data-parallel inner loops over a point cloud stored column-major
// (coordinate k of point i at data[k * stride + i]).
//
// Every kernel has a scalar reference implementation. Vector variants are
// compiled into separate translation units with their own target flags and
// picked at runtime from the CPU feature set, so the library itself never
// requires a particular ISA. Set IMD_SIMD=scalar to force the reference path.

#include <cstddef>
#include <string_view>

namespace imd::simd {

/// Non-owning column-major view of `rows` points in `dims` dimensions.
struct PointBlock {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t dims = 0;
    std::size_t stride = 0;  ///< distance between consecutive coordinate columns

    const double* column(std::size_t k) const noexcept { return data + k * stride; }
};

/// Result of a Gaussian-weighted reduction over a block.
struct GaussianMoments {
    double log_sum = 0.0;        ///< log sum_i exp(-a * |q - x_i|^2)
    double min_sq_dist = 0.0;    ///< min_i |q - x_i|^2
};

struct KernelTable {
    std::string_view name;

    /// out[i] = |q - x_i|^2 for every row.
    void (*squared_distances)(const PointBlock& pts, const double* query, double* out);

    /// max_i |q - x_i|^2 over rows [begin, rows).
    double (*max_squared_distance)(const PointBlock& pts, const double* query, std::size_t begin);

    /// Softmax-weighted barycenter with weights exp(-a |q - x_i|^2), evaluated
    /// stably by shifting with the minimum distance. Writes `dims` values to
    /// `barycenter`.
    GaussianMoments (*gaussian_barycenter)(const PointBlock& pts, const double* query,
                                           double a, double* barycenter);
};

const KernelTable& scalar_kernels() noexcept;

/// AVX2+FMA table, or nullptr when the build or the CPU lacks support.
const KernelTable* avx2_kernels() noexcept;

/// Table used by the library; chosen once per process.
const KernelTable& active_kernels() noexcept;

}  // namespace imd::simd
