#include "imd/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "imd/error.hpp"

namespace imd {

SpatialIndex::SpatialIndex(const Matrix& points, std::size_t leaf_size)
    : count_(static_cast<std::size_t>(points.rows())),
      dims_(static_cast<std::size_t>(points.cols())),
      leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    if (count_ == 0 || dims_ == 0) throw ParameterError("cannot index an empty point set");
    if (count_ > std::numeric_limits<std::uint32_t>::max())
        throw ParameterError("point set too large for the spatial index");
    coords_.resize(count_ * dims_);
    for (std::size_t i = 0; i < count_; ++i)
        for (std::size_t k = 0; k < dims_; ++k)
            coords_[i * dims_ + k] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * count_ / leaf_size_ + 2);
    build(0, static_cast<std::uint32_t>(count_));
}

std::int32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end, -1, -1, 0, 0.0});
    if (end - begin <= leaf_size_) return id;

    std::size_t best_dim = 0;
    double best_spread = -1.0;
    for (std::size_t k = 0; k < dims_; ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::uint32_t p = begin; p < end; ++p) {
            const double v = coords_[order_[p] * dims_ + k];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > best_spread) {
            best_spread = hi - lo;
            best_dim = k;
        }
    }
    if (best_spread <= 0.0) return id;  // all points coincide

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double va = coords_[a * dims_ + best_dim];
                         const double vb = coords_[b * dims_ + best_dim];
                         return va < vb || (va == vb && a < b);
                     });
    const double split = coords_[order_[mid] * dims_ + best_dim];
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    Node& node = nodes_[static_cast<std::size_t>(id)];
    node.left = left;
    node.right = right;
    node.split_dim = static_cast<std::uint32_t>(best_dim);
    node.split = split;
    return id;
}

double SpatialIndex::sq_dist(const double* x, std::size_t i) const noexcept {
    const double* p = coords_.data() + i * dims_;
    double acc = 0.0;
    for (std::size_t k = 0; k < dims_; ++k) {
        const double diff = p[k] - x[k];
        acc += diff * diff;
    }
    return acc;
}

void SpatialIndex::radius_query(const double* x, double radius, std::vector<Neighbor>& out) const {
    if (!(radius > 0.0)) throw ParameterError("radius must be > 0");
    out.clear();
    const double r2 = radius * radius;
    std::int32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
        if (node.left < 0) {
            for (std::uint32_t p = node.begin; p < node.end; ++p) {
                const double d2 = sq_dist(x, order_[p]);
                if (d2 <= r2) out.push_back({order_[p], std::sqrt(d2)});
            }
            continue;
        }
        const double delta = x[node.split_dim] - node.split;
        const double plane2 = delta * delta;
        if (delta <= 0.0) {
            if (plane2 <= r2) stack[top++] = node.right;
            stack[top++] = node.left;
        } else {
            if (plane2 <= r2) stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
}

std::vector<std::size_t> SpatialIndex::radius_query(VectorRef x, double radius) const {
    if (static_cast<std::size_t>(x.size()) != dims_) throw ParameterError("query dimension mismatch");
    std::vector<Neighbor> hits;
    const Vector q = x;
    radius_query(q.data(), radius, hits);
    std::vector<std::size_t> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(h.index);
    return out;
}

void SpatialIndex::knn_query(const double* x, std::size_t k, std::vector<Neighbor>& out) const {
    if (k < 1 || k > count_)
        throw ParameterError("k must lie in [1, " + std::to_string(count_) + "], got " + std::to_string(k));
    using Entry = std::pair<double, std::size_t>;  // (squared distance, index); max-heap
    std::priority_queue<Entry> heap;

    struct Pending {
        std::int32_t node;
        double bound;
    };
    Pending stack[128];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        const Pending item = stack[--top];
        if (heap.size() == k && item.bound > heap.top().first) continue;
        const Node& node = nodes_[static_cast<std::size_t>(item.node)];
        if (node.left < 0) {
            for (std::uint32_t p = node.begin; p < node.end; ++p) {
                const Entry e{sq_dist(x, order_[p]), order_[p]};
                if (heap.size() < k) {
                    heap.push(e);
                } else if (e < heap.top()) {
                    heap.pop();
                    heap.push(e);
                }
            }
            continue;
        }
        const double delta = x[node.split_dim] - node.split;
        const double plane2 = std::max(item.bound, delta * delta);
        // Push the far side first so the near side is explored first.
        if (delta <= 0.0) {
            stack[top++] = {node.right, plane2};
            stack[top++] = {node.left, item.bound};
        } else {
            stack[top++] = {node.left, plane2};
            stack[top++] = {node.right, item.bound};
        }
    }
    out.resize(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
        out[i] = {heap.top().second, std::sqrt(heap.top().first)};
        heap.pop();
    }
}

std::vector<Neighbor> SpatialIndex::knn_query(VectorRef x, std::size_t k) const {
    if (static_cast<std::size_t>(x.size()) != dims_) throw ParameterError("query dimension mismatch");
    const Vector q = x;
    std::vector<Neighbor> out;
    knn_query(q.data(), k, out);
    return out;
}

Neighbor SpatialIndex::nearest(const double* x) const {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    struct Pending {
        std::int32_t node;
        double bound;
    };
    Pending stack[128];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        const Pending item = stack[--top];
        if (item.bound > best) continue;
        const Node& node = nodes_[static_cast<std::size_t>(item.node)];
        if (node.left < 0) {
            for (std::uint32_t p = node.begin; p < node.end; ++p) {
                const std::size_t i = order_[p];
                const double d2 = sq_dist(x, i);
                if (d2 < best || (d2 == best && i < best_index)) {
                    best = d2;
                    best_index = i;
                }
            }
            continue;
        }
        const double delta = x[node.split_dim] - node.split;
        const double plane2 = std::max(item.bound, delta * delta);
        if (delta <= 0.0) {
            stack[top++] = {node.right, plane2};
            stack[top++] = {node.left, item.bound};
        } else {
            stack[top++] = {node.left, plane2};
            stack[top++] = {node.right, item.bound};
        }
    }
    return {best_index, std::sqrt(best)};
}

}  // namespace imd
