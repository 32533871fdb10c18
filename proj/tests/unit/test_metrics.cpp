#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <nlohmann/json.hpp>
#include <sstream>

#include "helpers.hpp"
#include "imd/error.hpp"
#include "imd/metrics.hpp"

using namespace imd;

namespace {

Trajectory path_of(const std::vector<Vector>& states, std::size_t start = 0) {
    Trajectory t;
    t.states.resize(static_cast<Eigen::Index>(states.size()), states.front().size());
    for (std::size_t l = 0; l < states.size(); ++l) {
        t.states.row(static_cast<Eigen::Index>(l)) = states[l].transpose();
        t.times.push_back(double(l));
        t.nn_dist.push_back(0.0);
    }
    t.start = start;
    return t;
}

// Integral over [-1, 1] via t = cos(theta), composite Simpson in theta.
double integrate_density(int p, double kappa) {
    const int m = 4000;
    const double a = 0.0, b = std::numbers::pi, step = (b - a) / m;
    // The p = 2 density is singular at |t| = 1 but the integrand is even and
    // finite there; nudging the end nodes costs O(1e-6) on a weight of 3e-4.
    auto f = [&](double th) {
        if (p == 2) th = std::clamp(th, 1e-3, b - 1e-3);
        return vmf_statistic_density(p, kappa, std::cos(th)) * std::sin(th);
    };
    double s = f(a) + f(b);
    for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * step);
    return s * step / 3.0;
}

double quantile(const VmfStatisticLaw& law, double u) {
    double lo = -1.0, hi = 1.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (law.cdf(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("radial error") {
    const Trajectory t = path_of({Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(0, 3, 4), Eigen::Vector3d(0.1, 0, 0)});
    const auto e = radial_error(t, 1.0);
    REQUIRE(e.size() == 3);
    CHECK(e[0] == 0.0);
    CHECK(e[1] == doctest::Approx(4.0));
    CHECK(e[2] == doctest::Approx(0.9));

    const Eigen::Matrix3d rot = Eigen::AngleAxisd(1.1, Eigen::Vector3d(0.3, -1, 2).normalized()).toRotationMatrix();
    Trajectory r = t;
    r.states = t.states * rot.transpose();
    const auto er = radial_error(r, 1.0);
    for (std::size_t l = 0; l < 3; ++l) CHECK(er[l] == doctest::Approx(e[l]).epsilon(1e-14));
}

TEST_CASE("endpoint statistic") {
    const Vector mu = Eigen::Vector3d(0, 0, 1);
    const std::vector<Trajectory> ts = {path_of({Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 0, 1)}),
                                        path_of({Eigen::Vector3d(0, 0, -1)}),
                                        path_of({Eigen::Vector3d(0, 2, 0)}),
                                        path_of({Eigen::Vector3d(0, 0, 3)})};
    const auto raw = endpoint_statistic(ts, mu);
    CHECK(raw == std::vector<double>{1.0, -1.0, 0.0, 3.0});
    const auto proj = endpoint_statistic(ts, mu, 1.0);
    CHECK(proj == std::vector<double>{1.0, -1.0, 0.0, 1.0});
    CHECK_THROWS_AS(endpoint_statistic(ts, Eigen::Vector3d(0, 0, 2)), ParameterError);
}

TEST_CASE("vMF statistic density integrates to one") {
    for (int p = 2; p <= 8; ++p) {
        for (const double kappa : {0.1, 1.0, 10.0}) {
            CAPTURE(p);
            CAPTURE(kappa);
            CHECK(integrate_density(p, kappa) == doctest::Approx(1.0).epsilon(1e-8));
            const VmfStatisticLaw law(p, kappa);
            CHECK(law.cdf(-1.0) == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(law.cdf(1.0) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(law.cdf(0.3) > law.cdf(0.2));
        }
    }
}

TEST_CASE("vMF statistic closed forms") {
    // p = 3: density kappa e^{kappa t} / (2 sinh kappa).
    const double kappa = 10.0;
    for (const double t : {-0.9, -0.2, 0.0, 0.5, 0.99}) {
        const double want = kappa * std::exp(kappa * t) / (2.0 * std::sinh(kappa));
        CHECK(vmf_statistic_density(3, kappa, t) == doctest::Approx(want).epsilon(1e-6));
    }
    // Vanishing concentration on S^2 is uniform in t.
    CHECK(vmf_statistic_density(3, 1e-10, 0.4) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(VmfStatisticLaw(3, 1e-10).cdf(0.0) == doctest::Approx(0.5).epsilon(1e-9));

    CHECK(vmf_statistic_density(8, 1.0, 1.0) == 0.0);
    CHECK(vmf_statistic_density(8, 1.0, -1.5) == 0.0);
    CHECK_THROWS_AS(vmf_statistic_density(2, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(VmfStatisticLaw(1, 1.0), ParameterError);
    CHECK_THROWS_AS(VmfStatisticLaw(3, 0.0), ParameterError);
}

TEST_CASE("KS distance") {
    const VmfStatisticLaw law(8, 5.0);
    auto cdf = [&](double t) { return law.cdf(t); };

    const std::size_t n = 2000;
    Rng rng(17);
    std::vector<double> draws;
    for (std::size_t i = 0; i < n; ++i) draws.push_back(quantile(law, rng.uniform()));
    CHECK(ks_distance(draws, cdf) <= 1.63 / std::sqrt(double(n)));

    std::vector<double> grid;
    for (std::size_t i = 0; i < 200; ++i) grid.push_back(quantile(law, (double(i) + 0.5) / 200.0));
    CHECK(ks_distance(grid, cdf) <= 1.0 / 200.0);

    const double wrong = ks_distance(std::vector<double>(50, -0.99), cdf);
    CHECK(wrong >= 0.0);
    CHECK(wrong <= 1.0);
    CHECK(wrong > 0.9);
    CHECK_THROWS_AS(ks_distance({}, cdf), ParameterError);
}

TEST_CASE("Wasserstein-1 on the line") {
    CHECK(wasserstein1({0.0, 1.0}, {0.0, 1.0}) == 0.0);
    CHECK(wasserstein1({0.0, 1.0}, {2.0, 3.0}) == doctest::Approx(2.0));
    CHECK(wasserstein1({3.0, 0.0}, {1.0, 0.0}) == doctest::Approx(1.0));
    CHECK(wasserstein1({0.0}, {0.0, 1.0}) == doctest::Approx(0.5));
}

TEST_CASE("histogram against the exact density") {
    const VmfStatisticLaw law(8, 2.0);
    std::vector<double> samples = {-0.5, 0.1, 0.1, 0.7, 0.99};
    const auto bins = statistic_histogram(samples, law, 20);
    REQUIRE(bins.size() == 20);
    std::size_t total = 0;
    double mass = 0.0;
    for (const auto& b : bins) {
        total += b.count;
        mass += b.target_density * (b.right - b.left);
    }
    CHECK(total == samples.size());
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(bins.front().left == -1.0);
    CHECK(bins.back().right == 1.0);

    std::ostringstream out;
    write_histogram(out, bins);
    CHECK(out.str().rfind("bin_left,bin_right,count,target_density\n", 0) == 0);
}

TEST_CASE("sphere report") {
    const std::vector<Trajectory> ts = {path_of({Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(0, 0, 1.5)}),
                                        path_of({Eigen::Vector3d(0, 0.5, 0)})};
    const EvalReport r = sphere_report(ts, 1.0);
    CHECK(*r.mean_radial_err == doctest::Approx(1.0 / 3.0));
    CHECK(*r.max_radial_err == doctest::Approx(0.5));
    CHECK(!r.ks_statistic);
    CHECK(r.paths == 2);

    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j.contains("mean_radial_err"));
    CHECK(!j.contains("ks_statistic"));
    CHECK(!j.contains("spread"));
    CHECK(j["paths"] == 2);
}

TEST_CASE("swiss roll report") {
    PointCloud c;
    c.points.resize(2, 3);
    c.points << 0.0, 0.0, 0.0, 1.0, 0.0, 0.0;
    c.latent = Matrix(2, 2);
    *c.latent << 2.0, 1.0, 5.0, 5.0;
    const SpatialIndex index(c.points);

    SUBCASE("static paths") {
        const std::vector<Trajectory> ts = {path_of({c.point(0)})};
        const EvalReport r = swiss_roll_report(ts, c, index);
        CHECK(*r.avg_nn_dist == 0.0);
        CHECK(*r.max_latent_jump == 0.0);
        CHECK(*r.spread == 0.0);
        CHECK(*r.msd == 0.0);
        const auto j = nlohmann::json::parse(r.to_json());
        CHECK(j.contains("spread_definition"));
        CHECK(!j.contains("mean_radial_err"));
    }
    SUBCASE("one hop") {
        const Vector off = Eigen::Vector3d(1.0, 0.3, 0.0);
        const std::vector<Trajectory> ts = {path_of({c.point(0), off}), path_of({c.point(0), c.point(0)}, 1)};
        const EvalReport r = swiss_roll_report(ts, c, index);
        CHECK(*r.max_latent_jump == doctest::Approx(5.0));
        CHECK(*r.avg_nn_dist == doctest::Approx(0.3 / 4.0));
        CHECK(*r.msd == doctest::Approx(12.5));
        CHECK(*r.spread == doctest::Approx(25.0 / 2.0));
        REQUIRE(r.msd_se);

        const std::vector<Trajectory> rev = {ts[1], ts[0]};
        const EvalReport q = swiss_roll_report(rev, c, index);
        CHECK(*q.avg_nn_dist == doctest::Approx(*r.avg_nn_dist).epsilon(1e-14));
        CHECK(*q.spread == doctest::Approx(*r.spread).epsilon(1e-14));
        CHECK(*q.msd == doctest::Approx(*r.msd).epsilon(1e-14));
        CHECK(*q.max_latent_jump == *r.max_latent_jump);
    }
    SUBCASE("latent required") {
        PointCloud bare = c;
        bare.latent.reset();
        CHECK_THROWS_AS(swiss_roll_report(std::vector<Trajectory>{path_of({c.point(0)})}, bare, index),
                        ParameterError);
    }
}
