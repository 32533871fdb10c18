#include "imd/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace imd::simd {
namespace {

double sq_dist_row(const PointBlock& pts, const double* q, std::size_t i) noexcept {
    double acc = 0.0;
    for (std::size_t k = 0; k < pts.dims; ++k) {
        const double diff = pts.column(k)[i] - q[k];
        acc += diff * diff;
    }
    return acc;
}

void squared_distances(const PointBlock& pts, const double* q, double* out) {
    std::fill(out, out + pts.rows, 0.0);
    for (std::size_t k = 0; k < pts.dims; ++k) {
        const double* col = pts.column(k);
        const double qk = q[k];
        for (std::size_t i = 0; i < pts.rows; ++i) {
            const double diff = col[i] - qk;
            out[i] += diff * diff;
        }
    }
}

double max_squared_distance(const PointBlock& pts, const double* q, std::size_t begin) {
    double best = 0.0;
    for (std::size_t i = begin; i < pts.rows; ++i) best = std::max(best, sq_dist_row(pts, q, i));
    return best;
}

GaussianMoments gaussian_barycenter(const PointBlock& pts, const double* q, double a,
                                    double* bary) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.rows; ++i) dmin = std::min(dmin, sq_dist_row(pts, q, i));

    std::fill(bary, bary + pts.dims, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < pts.rows; ++i) {
        const double w = std::exp(-a * (sq_dist_row(pts, q, i) - dmin));
        total += w;
        for (std::size_t k = 0; k < pts.dims; ++k) bary[k] += w * pts.column(k)[i];
    }
    for (std::size_t k = 0; k < pts.dims; ++k) bary[k] /= total;
    return {std::log(total) - a * dmin, dmin};
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
    static const KernelTable table{"scalar", &squared_distances, &max_squared_distance,
                                   &gaussian_barycenter};
    return table;
}

}  // namespace imd::simd
