#pragma once

// Synthetic manifolds with known geometry and the point-cloud container.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "imd/simd/kernels.hpp"
#include "imd/types.hpp"

namespace imd {

/// Round sphere S^dim of the given radius, embedded in R^(dim+1).
struct SphereSpec {
    int dim = 2;
    double radius = 1.0;
};

/// Ring torus in R^3 with major radius `major` and tube radius `minor`.
struct TorusSpec {
    double major = 2.0;
    double minor = 1.0;
};

/// Swiss roll (t cos t, h, t sin t) for t in [t_lo, t_hi], h in [0, height].
struct SwissRollSpec {
    double t_lo = 1.5;
    double t_hi = 15.5;
    double height = 20.0;
};

using ManifoldSpec = std::variant<SphereSpec, TorusSpec, SwissRollSpec>;

/// Throws ParameterError when the spec violates its invariants.
void validate(const ManifoldSpec& spec);

/// Ambient dimension of points drawn from `spec`.
int ambient_dim(const ManifoldSpec& spec);
/// Intrinsic dimension of `spec`.
int intrinsic_dim(const ManifoldSpec& spec);

/// Short identifier: "sphere", "torus" or "swiss-roll".
std::string kind_name(const ManifoldSpec& spec);

/// N points in R^n, optionally with ground-truth latent coordinates.
struct PointCloud {
    Matrix points;  ///< N x n, column-major so each coordinate is contiguous
    int intrinsic_dim = 1;
    std::optional<Matrix> latent;  ///< N x d_latent, d_latent in {1, 2}
    std::optional<ManifoldSpec> spec;

    std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
    std::size_t dims() const noexcept { return static_cast<std::size_t>(points.cols()); }
    Vector point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)).transpose(); }

    simd::PointBlock block() const noexcept {
        return {points.data(), size(), dims(), static_cast<std::size_t>(points.outerStride())};
    }

    /// Checks every documented invariant; throws ParameterError on violation.
    void validate() const;
};

PointCloud sample_sphere(int dim, double radius, std::size_t n, std::uint64_t seed);

/// Area-weighted (volume measure) sampling by rejection on the tube angle.
/// Latent columns are (u, v).
PointCloud sample_torus(double major, double minor, std::size_t n, std::uint64_t seed);

/// t uniform in arclength on [t_lo, t_hi], h uniform on [0, height].
/// Latent columns are (t, h).
PointCloud sample_swiss_roll(double t_lo, double t_hi, double height, std::size_t n,
                             std::uint64_t seed);

Vector torus_embed(double major, double minor, double u, double v);
Vector swiss_roll_embed(double t, double h);

/// Embeds a latent row through the parametrization of `spec`.
Vector embed_latent(const ManifoldSpec& spec, VectorRef latent);

/// Radial projection R x / |x|. Throws DomainError for the zero vector.
Vector project_sphere(VectorRef x, double radius);

struct SwissRollCoords {
    double t = 0.0;
    double h = 0.0;
};

/// Inverts swiss_roll_embed. The spiral turn is chosen as the branch of
/// atan2 closest to the cylindrical radius; inputs whose radius differs from
/// the recovered t by more than `tolerance` are rejected with DomainError.
SwissRollCoords swiss_roll_latent(VectorRef x, double tolerance = 1e-3);

/// Largest pairwise Euclidean distance (exact, O(N^2)).
double data_diameter(const PointCloud& cloud);

}  // namespace imd
