#include "imd/score.hpp"

#include <cmath>
#include <string>

#include "imd/error.hpp"

namespace imd {

KdeScore::KdeScore(const PointCloud& cloud, double sigma) : cloud_(&cloud), sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("score sigma must be > 0");
    if (cloud.size() == 0) throw ParameterError("score needs a nonempty cloud");
}

KdeScore KdeScore::with_relative_sigma(const PointCloud& cloud, double fraction) {
    const double diameter = data_diameter(cloud);
    if (!(diameter > 0.0)) throw ParameterError("cloud has zero diameter; pass sigma explicitly");
    return KdeScore(cloud, fraction * diameter);
}

void KdeScore::drgd_step(const double* u, double* out) const {
    const double a = 0.5 / (sigma_ * sigma_);
    simd::active_kernels().gaussian_barycenter(cloud_->block(), u, a, out);
}

Vector KdeScore::drgd_step(VectorRef u) const {
    if (static_cast<std::size_t>(u.size()) != cloud_->dims()) throw ParameterError("query dimension mismatch");
    const Vector q = u;
    Vector out(u.size());
    drgd_step(q.data(), out.data());
    return out;
}

Vector KdeScore::score_at(VectorRef x) const {
    return (drgd_step(x) - x) / (sigma_ * sigma_);
}

double KdeScore::log_density(VectorRef x) const {
    if (static_cast<std::size_t>(x.size()) != cloud_->dims()) throw ParameterError("query dimension mismatch");
    const Vector q = x;
    Vector scratch(x.size());
    const double a = 0.5 / (sigma_ * sigma_);
    return simd::active_kernels().gaussian_barycenter(cloud_->block(), q.data(), a, scratch.data()).log_sum;
}

}  // namespace imd
