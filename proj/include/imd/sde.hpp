#pragma once

// Euler-Maruyama integration of the data-driven ambient SDE
//
//     dX = [v(X) - (beta/2) Gamma(X) grad U(X)] dt + Gamma(X)^{1/2} dW,
//
// where v and Gamma are the operator field lifted by nearest-node lookup,
// optionally followed by a denoising (DRGD) retraction after every step.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "imd/graph.hpp"
#include "imd/manifolds.hpp"
#include "imd/neighbors.hpp"
#include "imd/score.hpp"
#include "imd/types.hpp"

namespace imd {

/// Which coefficients drive the step. `imd` uses drift and CDC; the other
/// two are the naive baselines: CDC noise without the generator drift, and
/// isotropic ambient noise.
enum class Scheme { imd, cdc_only, ambient_noise };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& name);

struct IntegratorConfig {
    double step = 1e-3;
    std::size_t steps = 1000;
    double speedup = 1.0;
    std::uint64_t seed = 0;
    bool drgd = false;
    std::size_t knn = 1;
    Scheme scheme = Scheme::imd;

    double effective_step() const noexcept { return step * speedup; }
    void validate() const;
};

struct DriftSpec {
    enum class Kind { none, vmf, quadratic };

    Kind kind = Kind::none;
    Vector mu;        ///< vMF mean direction (unit norm)
    double kappa = 0.0;
    Vector z_star;    ///< quadratic potential minimiser
    double beta = 1.0;

    static DriftSpec none();
    static DriftSpec vmf(Vector mu, double kappa, double beta = 1.0);
    static DriftSpec quadratic(Vector z_star, double beta = 1.0);

    /// Checks the spec against ambient dimension `dims`.
    void validate(std::size_t dims) const;
};

/// Ambient gradient of the potential: 0, -kappa mu (U = -kappa mu.x), or
/// x - z* (U = |x - z*|^2 / 2).
Vector potential_gradient(const DriftSpec& spec, VectorRef x);

/// -(beta / 2) Gamma grad U; stationary law proportional to exp(-beta U).
Vector langevin_drift(const DriftSpec& spec, MatrixRef cdc, VectorRef x);

struct Trajectory {
    std::vector<double> times;      ///< times[l] = l * h_eff
    Matrix states;                  ///< (L + 1) x n
    std::vector<double> radial_err; ///< empty unless the cloud is a sphere
    std::vector<double> nn_dist;    ///< distance to the closest cloud point
    std::size_t start = 0;          ///< index of the starting point in an ensemble
    std::size_t path = 0;

    std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }
    Vector endpoint() const { return states.row(states.rows() - 1).transpose(); }
};

/// Outcome of one ensemble member. Failed paths keep the error message and
/// the step at which they diverged.
struct PathResult {
    std::size_t path = 0;
    std::size_t start = 0;
    std::optional<Trajectory> trajectory;
    std::string error;
    std::size_t failed_step = 0;

    bool ok() const noexcept { return trajectory.has_value(); }
};

class Simulator {
public:
    /// All references must outlive the simulator. `score` may be null when
    /// DRGD is never enabled. A non-positive `diameter` is computed from the
    /// cloud.
    Simulator(const OperatorField& field, const SpatialIndex& index, const PointCloud& cloud,
              const KdeScore* score = nullptr, double diameter = 0.0);

    double diameter() const noexcept { return diameter_; }

    /// One Euler-Maruyama update from x with the caller-supplied standard
    /// normal draw xi. Throws DivergenceError on a non-finite or runaway
    /// result.
    Vector em_step(const IntegratorConfig& cfg, const DriftSpec& spec, VectorRef x, VectorRef xi) const;

    /// Integrates cfg.steps steps from x0 (default: the first cloud point)
    /// with the generator seeded by cfg.seed.
    Trajectory simulate(const IntegratorConfig& cfg, const DriftSpec& spec,
                        const std::optional<Vector>& x0 = std::nullopt) const;

    /// paths_per_start independent paths from each starting point. Path
    /// p = start * paths_per_start + j uses seed derive_seed(cfg.seed, p),
    /// so results do not depend on scheduling.
    std::vector<PathResult> simulate_ensemble(const IntegratorConfig& cfg, const DriftSpec& spec,
                                              const std::vector<Vector>& starts,
                                              std::size_t paths_per_start, unsigned threads = 1) const;

private:
    struct Workspace {
        FieldSample sample;
        std::vector<Neighbor> scratch;
        Vector next;
        Vector denoised;
    };

    void step_into(const IntegratorConfig& cfg, const DriftSpec& spec, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& xi, Workspace& ws) const;
    void check(const Eigen::VectorXd& x, std::size_t step) const;

    const OperatorField* field_;
    const SpatialIndex* index_;
    const PointCloud* cloud_;
    const KdeScore* score_;
    double diameter_;
    std::optional<double> sphere_radius_;
};

/// Trajectory CSV: header `step,t,x1..xn[,radial_err],nn_dist`.
void write_trajectory(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory(std::istream& in);
void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace imd
