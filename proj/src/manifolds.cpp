#include "imd/manifolds.hpp"

#include <cmath>
#include <numbers>

#include "imd/error.hpp"
#include "imd/rng.hpp"

namespace imd {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& what) {
    if (!ok) throw ParameterError(what);
}

}  // namespace

void validate(const ManifoldSpec& spec) {
    std::visit(overloaded{
                   [](const SphereSpec& s) {
                       require(s.dim >= 1, "sphere dimension must be >= 1");
                       require(s.radius > 0.0 && std::isfinite(s.radius), "sphere radius must be > 0");
                   },
                   [](const TorusSpec& t) {
                       require(t.minor > 0.0, "torus minor radius must be > 0");
                       require(t.minor < t.major, "torus requires minor < major radius");
                   },
                   [](const SwissRollSpec& s) {
                       require(s.t_lo > 0.0, "swiss roll requires t_lo > 0");
                       require(s.t_hi > s.t_lo, "swiss roll requires t_hi > t_lo");
                       require(s.height > 0.0, "swiss roll height must be > 0");
                   },
               },
               spec);
}

int ambient_dim(const ManifoldSpec& spec) {
    return std::visit(overloaded{[](const SphereSpec& s) { return s.dim + 1; },
                                 [](const TorusSpec&) { return 3; },
                                 [](const SwissRollSpec&) { return 3; }},
                      spec);
}

int intrinsic_dim(const ManifoldSpec& spec) {
    return std::visit(overloaded{[](const SphereSpec& s) { return s.dim; },
                                 [](const TorusSpec&) { return 2; },
                                 [](const SwissRollSpec&) { return 2; }},
                      spec);
}

std::string kind_name(const ManifoldSpec& spec) {
    return std::visit(overloaded{[](const SphereSpec&) { return std::string("sphere"); },
                                 [](const TorusSpec&) { return std::string("torus"); },
                                 [](const SwissRollSpec&) { return std::string("swiss-roll"); }},
                      spec);
}

void PointCloud::validate() const {
    require(points.rows() >= 1, "point cloud must contain at least one point");
    require(points.cols() >= 1, "point cloud must have at least one coordinate");
    require(intrinsic_dim >= 1, "intrinsic dimension must be >= 1");
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        require(points.row(i).allFinite(), "row " + std::to_string(i) + " is not finite");

    if (spec) {
        imd::validate(*spec);
        require(ambient_dim(*spec) == static_cast<int>(dims()),
                "ambient dimension does not match the manifold spec");
        if (const auto* s = std::get_if<SphereSpec>(&*spec)) {
            for (Eigen::Index i = 0; i < points.rows(); ++i)
                require(std::abs(points.row(i).norm() - s->radius) <= 1e-9,
                        "row " + std::to_string(i) + " is off the sphere");
        }
    }
    if (latent) {
        require(latent->rows() == points.rows(), "latent row count differs from points");
        require(latent->cols() == 1 || latent->cols() == 2, "latent must have 1 or 2 columns");
        if (spec && !std::holds_alternative<SphereSpec>(*spec)) {
            require(latent->cols() == 2, "torus and swiss-roll latents have 2 columns");
            for (Eigen::Index i = 0; i < points.rows(); ++i) {
                const Vector x = embed_latent(*spec, latent->row(i).transpose());
                const double scale = std::max(1.0, x.norm());
                require((x - points.row(i).transpose()).norm() <= 1e-9 * scale,
                        "row " + std::to_string(i) + " does not match its latent coordinates");
            }
        }
    }
}

PointCloud sample_sphere(int dim, double radius, std::size_t n, std::uint64_t seed) {
    const SphereSpec spec{dim, radius};
    validate(spec);
    require(n >= 1, "sample count must be >= 1");

    Rng rng(seed);
    const auto ambient = static_cast<Eigen::Index>(dim + 1);
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(n), ambient);
    Vector g(ambient);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        double norm = 0.0;
        do {
            for (Eigen::Index k = 0; k < ambient; ++k) g[k] = rng.normal();
            norm = g.norm();
        } while (norm == 0.0);
        cloud.points.row(i) = (radius / norm) * g.transpose();
    }
    cloud.intrinsic_dim = dim;
    cloud.spec = spec;
    return cloud;
}

Vector torus_embed(double major, double minor, double u, double v) {
    Vector x(3);
    const double ring = major + minor * std::cos(v);
    x << ring * std::cos(u), ring * std::sin(u), minor * std::sin(v);
    return x;
}

PointCloud sample_torus(double major, double minor, std::size_t n, std::uint64_t seed) {
    const TorusSpec spec{major, minor};
    validate(spec);
    require(n >= 1, "sample count must be >= 1");

    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(n), 3);
    cloud.latent = Matrix(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        const double u = kTwoPi * rng.uniform();
        double v = 0.0;
        // Accept v with probability proportional to the area element.
        do {
            v = kTwoPi * rng.uniform();
        } while (rng.uniform() * (major + minor) > major + minor * std::cos(v));
        cloud.points.row(i) = torus_embed(major, minor, u, v).transpose();
        (*cloud.latent)(i, 0) = u;
        (*cloud.latent)(i, 1) = v;
    }
    cloud.intrinsic_dim = 2;
    cloud.spec = spec;
    return cloud;
}

Vector swiss_roll_embed(double t, double h) {
    Vector x(3);
    x << t * std::cos(t), h, t * std::sin(t);
    return x;
}

PointCloud sample_swiss_roll(double t_lo, double t_hi, double height, std::size_t n,
                             std::uint64_t seed) {
    const SwissRollSpec spec{t_lo, t_hi, height};
    validate(spec);
    require(n >= 1, "sample count must be >= 1");

    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(n), 3);
    cloud.latent = Matrix(static_cast<Eigen::Index>(n), 2);
    // Arclength density along the spiral is sqrt(1 + t^2), increasing in t.
    const double envelope = std::sqrt(1.0 + t_hi * t_hi);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        double t = 0.0;
        do {
            t = t_lo + (t_hi - t_lo) * rng.uniform();
        } while (rng.uniform() * envelope > std::sqrt(1.0 + t * t));
        const double h = height * rng.uniform();
        cloud.points.row(i) = swiss_roll_embed(t, h).transpose();
        (*cloud.latent)(i, 0) = t;
        (*cloud.latent)(i, 1) = h;
    }
    cloud.intrinsic_dim = 2;
    cloud.spec = spec;
    return cloud;
}

Vector embed_latent(const ManifoldSpec& spec, VectorRef latent) {
    return std::visit(
        overloaded{
            [&](const SphereSpec&) -> Vector {
                throw ParameterError("sphere clouds carry no latent parametrization");
            },
            [&](const TorusSpec& t) { return torus_embed(t.major, t.minor, latent[0], latent[1]); },
            [&](const SwissRollSpec&) { return swiss_roll_embed(latent[0], latent[1]); },
        },
        spec);
}

Vector project_sphere(VectorRef x, double radius) {
    const double norm = x.norm();
    if (!(norm > 0.0)) throw DomainError("cannot project the zero vector onto a sphere");
    return (radius / norm) * x;
}

SwissRollCoords swiss_roll_latent(VectorRef x, double tolerance) {
    if (x.size() != 3) throw ParameterError("swiss roll points are three-dimensional");
    const double rho = std::hypot(x[0], x[2]);
    const double angle = std::atan2(x[2], x[0]);
    const double turns = std::round((rho - angle) / kTwoPi);
    const double t = angle + kTwoPi * turns;
    if (std::abs(rho - t) > tolerance)
        throw DomainError("point is " + std::to_string(std::abs(rho - t)) +
                          " away from the swiss roll spiral");
    return {t, x[1]};
}

double data_diameter(const PointCloud& cloud) {
    const auto& kernels = simd::active_kernels();
    const simd::PointBlock block = cloud.block();
    Vector q(static_cast<Eigen::Index>(cloud.dims()));
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < cloud.size(); ++i) {
        q = cloud.point(i);
        best = std::max(best, kernels.max_squared_distance(block, q.data(), i + 1));
    }
    return std::sqrt(best);
}

}  // namespace imd
