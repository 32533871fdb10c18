#include <doctest.h>

#include <algorithm>
#include <vector>

#include "helpers.hpp"
#include "imd/error.hpp"
#include "imd/neighbors.hpp"

using namespace imd;

namespace {

std::vector<Neighbor> brute_knn(const Matrix& pts, const Vector& q, std::size_t k) {
    std::vector<Neighbor> all;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        all.push_back({static_cast<std::size_t>(i), (pts.row(i).transpose() - q).norm()});
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });
    all.resize(k);
    return all;
}

std::vector<std::size_t> brute_radius(const Matrix& pts, const Vector& q, double h) {
    std::vector<std::size_t> out;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        if ((pts.row(i).transpose() - q).squaredNorm() <= h * h) out.push_back(static_cast<std::size_t>(i));
    return out;
}

}  // namespace

TEST_CASE("radius and knn queries agree with brute force") {
    for (const int dims : {1, 3, 8}) {
        const PointCloud c = testing::uniform_cloud(100 + dims, 1500, dims);
        const SpatialIndex index(c.points);
        Rng rng(7);
        const double h = dims == 8 ? 0.6 : 0.12;
        for (int q = 0; q < 1000; ++q) {
            Vector x(dims);
            for (int k = 0; k < dims; ++k) x[k] = 1.2 * rng.uniform() - 0.1;
            REQUIRE(index.radius_query(x, h) == brute_radius(c.points, x, h));
            const auto got = index.knn_query(x, 7);
            const auto want = brute_knn(c.points, x, 7);
            for (std::size_t j = 0; j < 7; ++j) {
                REQUIRE(got[j].index == want[j].index);
                REQUIRE(got[j].distance == doctest::Approx(want[j].distance).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("radius query with distances is sorted by index") {
    const PointCloud c = testing::uniform_cloud(3, 500, 2);
    const SpatialIndex index(c.points);
    std::vector<Neighbor> hits;
    index.radius_query(index.point(10), 0.2, hits);
    REQUIRE(!hits.empty());
    for (std::size_t j = 1; j < hits.size(); ++j) CHECK(hits[j - 1].index < hits[j].index);
    for (const auto& n : hits) CHECK(n.distance <= 0.2);
}

TEST_CASE("collinear points, closed ball") {
    const PointCloud c = testing::line_cloud({0.0, 1.0, 2.0});
    const SpatialIndex index(c.points);
    const Vector q = Vector::Constant(1, 0.0);
    CHECK(index.radius_query(q, 1.5) == std::vector<std::size_t>{0, 1});
    CHECK(index.radius_query(q, 1.0) == std::vector<std::size_t>{0, 1});
    CHECK(index.radius_query(q, 1e-9) == std::vector<std::size_t>{0});
}

TEST_CASE("self-only ball at small radius") {
    const PointCloud c = testing::uniform_cloud(9, 200, 3);
    const SpatialIndex index(c.points);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(index.radius_query(c.point(i), 1e-9) == std::vector<std::size_t>{i});
}

TEST_CASE("knn edge cases") {
    const PointCloud one = testing::line_cloud({4.0});
    const SpatialIndex single(one.points);
    const auto r = single.knn_query(Vector::Constant(1, 0.0), 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].index == 0);
    CHECK(r[0].distance == 4.0);

    const PointCloud c = testing::uniform_cloud(10, 300, 4);
    const SpatialIndex index(c.points);
    for (std::size_t i = 0; i < c.size(); i += 13) {
        const auto hit = index.knn_query(c.point(i), 1);
        CHECK(hit[0].index == i);
        CHECK(hit[0].distance == 0.0);
        CHECK(index.nearest(index.point(i)).index == i);
    }
    CHECK_THROWS_AS(index.knn_query(c.point(0), 301), ParameterError);
    CHECK_THROWS_AS(index.knn_query(c.point(0), 0), ParameterError);
}

TEST_CASE("ties go to the smaller index") {
    const PointCloud c = testing::line_cloud({1.0, -1.0, 1.0, -1.0, 3.0});
    const SpatialIndex index(c.points);
    const auto r = index.knn_query(Vector::Constant(1, 0.0), 4);
    CHECK(r[0].index == 0);
    CHECK(r[1].index == 1);
    CHECK(r[2].index == 2);
    CHECK(r[3].index == 3);
    const double q = 0.0;
    CHECK(index.nearest(&q).index == 0);
}

TEST_CASE("empty point set is rejected") {
    CHECK_THROWS_AS(SpatialIndex(Matrix(0, 3)), ParameterError);
}

TEST_CASE("queries are deterministic") {
    const PointCloud c = testing::uniform_cloud(11, 1000, 3);
    const SpatialIndex a(c.points), b(c.points);
    const Vector q = Vector::Constant(3, 0.5);
    const auto ra = a.knn_query(q, 20), rb = b.knn_query(q, 20);
    for (std::size_t j = 0; j < 20; ++j) {
        CHECK(ra[j].index == rb[j].index);
        CHECK(ra[j].distance == rb[j].distance);
    }
}
