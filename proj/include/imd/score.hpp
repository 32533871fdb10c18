#pragma once

// Exact score of the Gaussian-smoothed empirical measure
//
//     p_sigma(x) = (1/N) sum_i N(x; x_i, sigma^2 I),
//     s(x) = grad log p_sigma(x) = sum_i w_i (x_i - x) / sigma^2,
//
// with w = softmax_i(-|x - x_i|^2 / (2 sigma^2)). The denoising step
// x + sigma^2 s(x) is the softmax-weighted barycenter of the data.

#include "imd/manifolds.hpp"
#include "imd/types.hpp"

namespace imd {

class KdeScore {
public:
    /// Keeps a reference to `cloud`; it must outlive the score.
    KdeScore(const PointCloud& cloud, double sigma);

    /// sigma = fraction x data diameter (0.005 by default).
    static KdeScore with_relative_sigma(const PointCloud& cloud, double fraction = 0.005);

    double sigma() const noexcept { return sigma_; }

    Vector score_at(VectorRef x) const;

    /// x + sigma^2 s(x).
    Vector drgd_step(VectorRef u) const;

    /// In-place variant used by the integrator.
    void drgd_step(const double* u, double* out) const;

    /// log sum_i exp(-|x - x_i|^2 / (2 sigma^2)); the log-density up to an
    /// additive constant.
    double log_density(VectorRef x) const;

private:
    const PointCloud* cloud_;
    double sigma_;
};

}  // namespace imd
