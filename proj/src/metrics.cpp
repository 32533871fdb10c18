#include "imd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <nlohmann/json.hpp>

#include "imd/csv.hpp"
#include "imd/error.hpp"

namespace imd {

std::vector<double> radial_error(const Trajectory& traj, double radius) {
    std::vector<double> out(static_cast<std::size_t>(traj.states.rows()));
    for (Eigen::Index l = 0; l < traj.states.rows(); ++l)
        out[static_cast<std::size_t>(l)] = std::abs(traj.states.row(l).norm() - radius);
    return out;
}

std::vector<double> endpoint_statistic(std::span<const Trajectory> trajs, VectorRef mu,
                                       std::optional<double> sphere_radius) {
    if (std::abs(mu.norm() - 1.0) > 1e-12) throw ParameterError("mu must be a unit vector");
    std::vector<double> out;
    out.reserve(trajs.size());
    for (const auto& traj : trajs) {
        Vector end = traj.endpoint();
        if (end.size() != mu.size()) throw ParameterError("mu has the wrong dimension");
        if (sphere_radius) end = project_sphere(end, 1.0);
        out.push_back(mu.dot(end));
    }
    return out;
}

VmfStatisticLaw::VmfStatisticLaw(int ambient_dim, double kappa) : dim_(ambient_dim), kappa_(kappa) {
    if (ambient_dim < 2) throw ParameterError("ambient dimension must be >= 2");
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ParameterError("kappa must be > 0");
    shifted_norm_ = angular_integral(0.0);
    log_norm_ = std::log(shifted_norm_) + kappa_;
}

// Mass of t < cos(theta0) after t = cos(theta): the integrand
// exp(kappa (cos - 1)) sin^(p-2) is smooth, unlike the one in t for p = 2.
double VmfStatisticLaw::angular_integral(double theta0) const {
    if (theta0 >= std::numbers::pi) return 0.0;
    boost::math::quadrature::tanh_sinh<double> integrator;
    auto f = [this](double th) { return std::exp(kappa_ * (std::cos(th) - 1.0)) * std::pow(std::sin(th), dim_ - 2); };
    return integrator.integrate(f, theta0, std::numbers::pi, 1e-14);
}

double VmfStatisticLaw::unnormalized(double t) const {
    const double one_minus = std::max(0.0, (1.0 - t) * (1.0 + t));
    return std::exp(kappa_ * (t - 1.0)) * std::pow(one_minus, 0.5 * (dim_ - 3));
}

double VmfStatisticLaw::density(double t) const {
    if (!(std::abs(t) < 1.0)) {
        if (dim_ >= 3) return 0.0;
        throw DomainError("statistic density is singular at |t| = 1 for ambient dimension 2");
    }
    return unnormalized(t) / shifted_norm_;
}

double VmfStatisticLaw::cdf(double t) const {
    if (t <= -1.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double lower = angular_integral(std::acos(t));
    return std::clamp(lower / shifted_norm_, 0.0, 1.0);
}

double vmf_statistic_density(int ambient_dim, double kappa, double t) {
    return VmfStatisticLaw(ambient_dim, kappa).density(t);
}

double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw ParameterError("KS distance needs at least one sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return std::clamp(d, 0.0, 1.0);
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ParameterError("wasserstein distance needs nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    // Integral of |F_a - F_b| over the merged support.
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double prev = std::min(a.front(), b.front());
    double total = 0.0;
    while (i < a.size() || j < b.size()) {
        const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
        total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
        prev = next;
        while (i < a.size() && a[i] == next) ++i;
        while (j < b.size() && b[j] == next) ++j;
    }
    return total;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("mean_radial_err", mean_radial_err);
    put("max_radial_err", max_radial_err);
    put("ks_statistic", ks_statistic);
    put("avg_nn_dist", avg_nn_dist);
    put("avg_nn_dist_sd", avg_nn_dist_sd);
    put("max_latent_jump", max_latent_jump);
    put("spread", spread);
    put("msd", msd);
    put("msd_se", msd_se);
    if (spread) j["spread_definition"] = "trace_of_latent_endpoint_covariance";
    if (max_latent_jump) j["max_latent_jump_definition"] = "euclidean_step_in_nearest_point_latent";
    j["paths"] = paths;
    j["failed_paths"] = failed_paths;
    return j.dump(2);
}

EvalReport sphere_report(std::span<const Trajectory> trajs, double radius, const VmfStatisticLaw* law,
                         std::optional<Vector> mu) {
    if (trajs.empty()) throw ParameterError("no trajectories to evaluate");
    EvalReport report;
    report.paths = trajs.size();
    double sum = 0.0;
    double worst = 0.0;
    std::size_t count = 0;
    for (const auto& traj : trajs) {
        for (const double e : radial_error(traj, radius)) {
            sum += e;
            worst = std::max(worst, e);
            ++count;
        }
    }
    report.mean_radial_err = sum / static_cast<double>(count);
    report.max_radial_err = worst;
    if (law != nullptr) {
        if (!mu) throw ParameterError("KS evaluation needs the mean direction");
        const auto stats = endpoint_statistic(trajs, *mu, radius);
        report.ks_statistic = ks_distance(stats, [law](double t) { return law->cdf(t); });
    }
    return report;
}

EvalReport swiss_roll_report(std::span<const Trajectory> trajs, const PointCloud& cloud,
                             const SpatialIndex& index) {
    if (!cloud.latent || cloud.latent->cols() != 2)
        throw ParameterError("swiss roll metrics need two latent columns");
    if (trajs.empty()) throw ParameterError("no trajectories to evaluate");
    const Matrix& latent = *cloud.latent;

    EvalReport report;
    report.paths = trajs.size();

    double nn_sum = 0.0;
    double nn_sq = 0.0;
    std::size_t states = 0;
    double max_jump = 0.0;
    std::vector<Eigen::Vector2d> endpoints;
    std::map<std::size_t, std::vector<double>> displacement_by_start;

    for (const auto& traj : trajs) {
        Eigen::Vector2d prev;
        Eigen::Vector2d first;
        Vector x;
        for (Eigen::Index l = 0; l < traj.states.rows(); ++l) {
            x = traj.states.row(l).transpose();
            const Neighbor nn = index.nearest(x.data());
            nn_sum += nn.distance;
            nn_sq += nn.distance * nn.distance;
            ++states;
            const Eigen::Vector2d z = latent.row(static_cast<Eigen::Index>(nn.index)).transpose();
            if (l == 0) {
                first = z;
            } else {
                max_jump = std::max(max_jump, (z - prev).norm());
            }
            prev = z;
        }
        endpoints.push_back(prev);
        displacement_by_start[traj.start].push_back((prev - first).squaredNorm());
    }

    const double mean_nn = nn_sum / static_cast<double>(states);
    report.avg_nn_dist = mean_nn;
    report.avg_nn_dist_sd = std::sqrt(std::max(0.0, nn_sq / static_cast<double>(states) - mean_nn * mean_nn));
    report.max_latent_jump = max_jump;

    Eigen::Vector2d centre = Eigen::Vector2d::Zero();
    for (const auto& e : endpoints) centre += e;
    centre /= static_cast<double>(endpoints.size());
    double trace = 0.0;
    for (const auto& e : endpoints) trace += (e - centre).squaredNorm();
    report.spread = endpoints.size() > 1 ? trace / static_cast<double>(endpoints.size() - 1) : 0.0;

    std::vector<double> per_start;
    for (const auto& [start, values] : displacement_by_start) {
        double s = 0.0;
        for (const double v : values) s += v;
        per_start.push_back(s / static_cast<double>(values.size()));
    }
    double msd = 0.0;
    for (const double v : per_start) msd += v;
    msd /= static_cast<double>(per_start.size());
    report.msd = msd;
    if (per_start.size() > 1) {
        double var = 0.0;
        for (const double v : per_start) var += (v - msd) * (v - msd);
        var /= static_cast<double>(per_start.size() - 1);
        report.msd_se = std::sqrt(var / static_cast<double>(per_start.size()));
    }
    return report;
}

std::vector<HistogramBin> statistic_histogram(std::span<const double> samples, const VmfStatisticLaw& law,
                                              std::size_t bins) {
    if (bins < 1) throw ParameterError("histogram needs at least one bin");
    std::vector<HistogramBin> out(bins);
    const double width = 2.0 / static_cast<double>(bins);
    double prev_cdf = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].left = -1.0 + width * static_cast<double>(b);
        out[b].right = b + 1 == bins ? 1.0 : -1.0 + width * static_cast<double>(b + 1);
        const double c = law.cdf(out[b].right);
        out[b].target_density = (c - prev_cdf) / (out[b].right - out[b].left);
        prev_cdf = c;
    }
    for (const double t : samples) {
        const double clamped = std::clamp(t, -1.0, 1.0);
        auto b = static_cast<std::size_t>((clamped + 1.0) / width);
        if (b >= bins) b = bins - 1;
        ++out[b].count;
    }
    return out;
}

void write_histogram(std::ostream& out, std::span<const HistogramBin> bins) {
    std::string buf = "bin_left,bin_right,count,target_density\n";
    for (const auto& b : bins) {
        csv::append_double(buf, b.left);
        buf += ',';
        csv::append_double(buf, b.right);
        buf += ',' + std::to_string(b.count) + ',';
        csv::append_double(buf, b.target_density);
        buf += '\n';
    }
    out << buf;
}

}  // namespace imd
