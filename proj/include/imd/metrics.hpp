#pragma once

// Evaluation of simulated trajectories: geometric fidelity on spheres,
// agreement of the vMF endpoint statistic with its exact law, and latent
// locality metrics on the Swiss roll.

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imd/manifolds.hpp"
#include "imd/neighbors.hpp"
#include "imd/sde.hpp"

namespace imd {

/// | |x_l| - R | for every state.
std::vector<double> radial_error(const Trajectory& traj, double radius);

/// <mu, X_T> per path. With a radius the endpoint is first projected onto
/// the sphere of that radius and rescaled to unit norm.
std::vector<double> endpoint_statistic(std::span<const Trajectory> trajs, VectorRef mu,
                                       std::optional<double> sphere_radius = std::nullopt);

/// Law of t = mu.X for X ~ vMF(mu, kappa) on the unit sphere in R^p:
/// density proportional to exp(kappa t) (1 - t^2)^((p - 3) / 2) on (-1, 1).
/// The normaliser is obtained by adaptive quadrature.
class VmfStatisticLaw {
public:
    VmfStatisticLaw(int ambient_dim, double kappa);

    int ambient_dim() const noexcept { return dim_; }
    double kappa() const noexcept { return kappa_; }

    double density(double t) const;
    double cdf(double t) const;
    /// log of the integral of exp(kappa t)(1 - t^2)^((p-3)/2) over [-1, 1].
    double log_normalizer() const noexcept { return log_norm_; }

private:
    double unnormalized(double t) const;  // shifted by exp(-kappa)
    double angular_integral(double theta0) const;

    int dim_;
    double kappa_;
    double shifted_norm_;
    double log_norm_;
};

/// Normalised density at t; `ambient_dim` is the dimension of the space
/// containing the sphere. |t| >= 1 gives 0 when ambient_dim >= 3 and a
/// DomainError otherwise.
double vmf_statistic_density(int ambient_dim, double kappa, double t);

/// Kolmogorov-Smirnov statistic sup |F_n - F|.
double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf);

/// 1-Wasserstein distance between two empirical distributions on the line.
double wasserstein1(std::vector<double> a, std::vector<double> b);

struct EvalReport {
    std::optional<double> mean_radial_err;
    std::optional<double> max_radial_err;
    std::optional<double> ks_statistic;
    std::optional<double> avg_nn_dist;
    std::optional<double> avg_nn_dist_sd;
    std::optional<double> max_latent_jump;
    std::optional<double> spread;
    std::optional<double> msd;
    std::optional<double> msd_se;
    std::size_t paths = 0;
    std::size_t failed_paths = 0;

    /// Flat JSON object; absent metrics are omitted.
    std::string to_json() const;
};

/// Radial metrics over every state of every path; KS when `law` is given.
EvalReport sphere_report(std::span<const Trajectory> trajs, double radius,
                         const VmfStatisticLaw* law = nullptr, std::optional<Vector> mu = std::nullopt);

/// Latent-sheet metrics. States are mapped to latent coordinates through
/// their nearest cloud point; paths are grouped by Trajectory::start for the
/// MSD standard error.
EvalReport swiss_roll_report(std::span<const Trajectory> trajs, const PointCloud& cloud,
                             const SpatialIndex& index);

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
    double target_density = 0.0;  ///< mean exact density over the bin
};

std::vector<HistogramBin> statistic_histogram(std::span<const double> samples, const VmfStatisticLaw& law,
                                              std::size_t bins);
/// CSV `bin_left,bin_right,count,target_density`.
void write_histogram(std::ostream& out, std::span<const HistogramBin> bins);

}  // namespace imd
