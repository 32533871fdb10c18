#pragma once

// Exact spatial index over a point cloud.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "imd/types.hpp"

namespace imd {

struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
};

/// kd-tree answering exact radius and k-NN queries. Keeps its own row-major
/// copy of the points so it does not depend on the lifetime of the source.
///
/// Ball membership is decided on squared distances: i is inside the ball of
/// radius h around q iff |x_i - q|^2 <= h * h. k-NN results are ordered by
/// (distance, index), so equidistant points come out smallest index first.
class SpatialIndex {
public:
    /// Throws ParameterError for an empty point set.
    explicit SpatialIndex(const Matrix& points, std::size_t leaf_size = 16);

    std::size_t size() const noexcept { return count_; }
    std::size_t dims() const noexcept { return dims_; }

    /// Indices inside the closed ball, sorted ascending.
    std::vector<std::size_t> radius_query(VectorRef x, double radius) const;

    /// Same as radius_query but also returns distances; sorted by index.
    void radius_query(const double* x, double radius, std::vector<Neighbor>& out) const;

    /// k nearest points ordered by (distance, index). Requires 1 <= k <= size().
    std::vector<Neighbor> knn_query(VectorRef x, std::size_t k) const;
    void knn_query(const double* x, std::size_t k, std::vector<Neighbor>& out) const;

    /// Nearest point; ties go to the smaller index.
    Neighbor nearest(const double* x) const;

    const double* point(std::size_t i) const noexcept { return coords_.data() + i * dims_; }

private:
    struct Node {
        std::uint32_t begin = 0;  // range into order_
        std::uint32_t end = 0;
        std::int32_t left = -1;   // child node ids; -1 for leaves
        std::int32_t right = -1;
        std::uint32_t split_dim = 0;
        double split = 0.0;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    double sq_dist(const double* x, std::size_t i) const noexcept;

    std::size_t count_ = 0;
    std::size_t dims_ = 0;
    std::size_t leaf_size_ = 16;
    std::vector<double> coords_;          // row-major copy, original order
    std::vector<std::uint32_t> order_;    // permutation grouped by leaf
    std::vector<Node> nodes_;
};

}  // namespace imd
