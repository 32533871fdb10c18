#include "imd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <tuple>

#include "imd/csv.hpp"
#include "imd/error.hpp"
#include "imd/parallel.hpp"

namespace imd {
namespace {

// exp(-r^2 / h^2) < 1e-12 beyond r = h * sqrt(ln 1e12).
const double kGaussianCutoff = std::sqrt(std::log(1e12));

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0), components_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        --components_;
        return true;
    }
    std::size_t components() const noexcept { return components_; }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned char> rank_;
    std::size_t components_;
};

struct Edge {
    double length;
    std::size_t a;
    std::size_t b;
    bool operator<(const Edge& o) const noexcept {
        return std::tie(length, a, b) < std::tie(o.length, o.a, o.b);
    }
};

// Longest edge used by Kruskal; +inf when the edges do not span.
double kruskal_bottleneck(std::vector<Edge>& edges, std::size_t n) {
    std::sort(edges.begin(), edges.end());
    DisjointSets sets(n);
    double longest = 0.0;
    for (const Edge& e : edges) {
        if (sets.unite(e.a, e.b)) {
            longest = e.length;
            if (sets.components() == 1) return longest;
        }
    }
    return sets.components() == 1 ? longest : std::numeric_limits<double>::infinity();
}

double nearest_distinct_distance(const SpatialIndex& index, std::size_t node) {
    for (std::size_t k = 2; k <= index.size(); k = std::min(index.size(), 2 * k)) {
        std::vector<Neighbor> hits;
        index.knn_query(index.point(node), k, hits);
        for (const auto& h : hits)
            if (h.index != node && h.distance > 0.0) return h.distance;
        if (k == index.size()) break;
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace

std::string to_string(Kernel kernel) {
    return kernel == Kernel::gaussian ? "gaussian" : "hard-cutoff";
}

Kernel parse_kernel(const std::string& name) {
    if (name == "hard-cutoff" || name == "hard_cutoff") return Kernel::hard_cutoff;
    if (name == "gaussian") return Kernel::gaussian;
    throw ParameterError("unknown kernel '" + name + "'");
}

GraphConfig GraphConfig::for_dim(int d, double bandwidth, Kernel kernel) {
    GraphConfig cfg;
    cfg.bandwidth = bandwidth;
    cfg.kernel = kernel;
    cfg.intrinsic_dim = d;
    return cfg;
}

void GraphConfig::validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ParameterError("bandwidth must be > 0");
    if (scaling_c < 0.0 || !std::isfinite(scaling_c)) throw ParameterError("scaling constant must be > 0");
    if (intrinsic_dim < 1) throw ParameterError("intrinsic dimension must be >= 1");
    if (knn_extension < 1) throw ParameterError("knn extension must be >= 1");
}

ProximityGraph::ProximityGraph(const PointCloud& cloud, GraphConfig config,
                               std::vector<std::size_t> offsets, std::vector<std::size_t> neighbors,
                               std::vector<double> weights)
    : cloud_(&cloud),
      config_(config),
      offsets_(std::move(offsets)),
      neighbors_(std::move(neighbors)),
      weights_(std::move(weights)),
      degrees_(offsets_.empty() ? 0 : offsets_.size() - 1, 0.0) {
    for (std::size_t i = 0; i < degrees_.size(); ++i) {
        double m = 0.0;
        for (const double w : this->weights(i)) m += w;
        degrees_[i] = m;
    }
}

double ProximityGraph::weight(std::size_t i, std::size_t j) const {
    const auto nb = neighbors(i);
    const auto it = std::lower_bound(nb.begin(), nb.end(), j);
    if (it == nb.end() || *it != j) return 0.0;
    return weights(i)[static_cast<std::size_t>(it - nb.begin())];
}

ProximityGraph build_graph(const PointCloud& cloud, const SpatialIndex& index,
                           const GraphConfig& config, unsigned threads) {
    config.validate();
    const std::size_t n = cloud.size();
    if (n == 0) throw ParameterError("cannot build a graph over an empty cloud");
    if (index.size() != n) throw ParameterError("index does not match the cloud");

    const bool gaussian = config.kernel == Kernel::gaussian;
    const double radius = gaussian ? config.bandwidth * kGaussianCutoff : config.bandwidth;
    const double inv_h2 = 1.0 / (config.bandwidth * config.bandwidth);

    std::vector<std::vector<Neighbor>> rows(n);
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<Neighbor> hits;
        index.radius_query(index.point(i), radius, hits);
        auto& row = rows[i];
        row.reserve(hits.size());
        for (const auto& h : hits) {
            if (h.index == i) continue;
            if (!gaussian && !(h.distance > 0.0)) continue;
            row.push_back(h);
        }
    });

    std::vector<std::size_t> offsets(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + rows[i].size();
    std::vector<std::size_t> neighbors(offsets[n]);
    std::vector<double> weights(offsets[n]);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pos = offsets[i];
        for (const auto& h : rows[i]) {
            neighbors[pos] = h.index;
            double w = 1.0;
            if (gaussian) {
                // Weight from the squared distance computed in canonical
                // (lower index first) order so W_ij == W_ji bitwise.
                const std::size_t a = std::min(i, h.index);
                const std::size_t b = std::max(i, h.index);
                double d2 = 0.0;
                for (std::size_t k = 0; k < cloud.dims(); ++k) {
                    const double diff = index.point(b)[k] - index.point(a)[k];
                    d2 += diff * diff;
                }
                w = std::exp(-d2 * inv_h2);
                if (w < 1e-12) w = 0.0;
            }
            weights[pos++] = w;
        }
    }

    // Drop zero-weight Gaussian entries; symmetric because weights are.
    if (gaussian) {
        std::vector<std::size_t> kept_offsets(n + 1, 0);
        std::size_t out = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = offsets[i]; p < offsets[i + 1]; ++p) {
                if (weights[p] > 0.0) {
                    neighbors[out] = neighbors[p];
                    weights[out] = weights[p];
                    ++out;
                }
            }
            kept_offsets[i + 1] = out;
        }
        neighbors.resize(out);
        weights.resize(out);
        offsets = std::move(kept_offsets);
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (offsets[i + 1] == offsets[i]) {
            double suggestion = nearest_distinct_distance(index, i);
            if (gaussian) suggestion /= kGaussianCutoff;
            throw ConnectivityError(i, suggestion);
        }
    }
    return ProximityGraph(cloud, config, std::move(offsets), std::move(neighbors), std::move(weights));
}

ProximityGraph build_graph(const PointCloud& cloud, const GraphConfig& config) {
    const SpatialIndex index(cloud.points);
    return build_graph(cloud, index, config);
}

double connectivity_radius(const PointCloud& cloud, const SpatialIndex& index) {
    const std::size_t n = cloud.size();
    if (n < 2) throw ParameterError("connectivity radius needs at least two points");

    // Phase 1: an upper bound from the MST of a k-NN graph (k doubles until
    // it spans). Phase 2: the exact MST bottleneck from all pairs within that
    // bound, which contains every Euclidean MST edge.
    double bound = std::numeric_limits<double>::infinity();
    std::vector<Neighbor> hits;
    for (std::size_t k = std::min<std::size_t>(n - 1, 10);; k = std::min(n - 1, 2 * k)) {
        std::vector<Edge> edges;
        for (std::size_t i = 0; i < n; ++i) {
            index.knn_query(index.point(i), std::min(n, k + 1), hits);
            for (const auto& h : hits)
                if (h.index != i) edges.push_back({h.distance, std::min(i, h.index), std::max(i, h.index)});
        }
        bound = kruskal_bottleneck(edges, n);
        if (std::isfinite(bound) || k == n - 1) break;
    }
    if (!(bound > 0.0)) throw ParameterError("all points coincide; no connecting radius exists");

    // Inflate slightly: the bound is a rounded square root of a squared
    // distance and the ball test compares squared values.
    const double search = bound * (1.0 + 1e-12);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        index.radius_query(index.point(i), search, hits);
        for (const auto& h : hits)
            if (h.index > i) edges.push_back({h.distance, i, h.index});
    }
    return kruskal_bottleneck(edges, n);
}

double default_bandwidth(const PointCloud& cloud, const SpatialIndex& index) {
    return 1.5 * connectivity_radius(cloud, index);
}

double default_bandwidth(const PointCloud& cloud) {
    const SpatialIndex index(cloud.points);
    return default_bandwidth(cloud, index);
}

Vector generator_apply(const ProximityGraph& graph, VectorRef u) {
    if (static_cast<std::size_t>(u.size()) != graph.size()) throw ParameterError("function size mismatch");
    const double s = graph.config().scale();
    Vector out(u.size());
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const auto nb = graph.neighbors(i);
        const auto w = graph.weights(i);
        const double ui = u[static_cast<Eigen::Index>(i)];
        double acc = 0.0;
        for (std::size_t p = 0; p < nb.size(); ++p) acc += w[p] * (u[static_cast<Eigen::Index>(nb[p])] - ui);
        out[static_cast<Eigen::Index>(i)] = s * acc / graph.degree(i);
    }
    return out;
}

Vector laplacian_apply(const ProximityGraph& graph, VectorRef u) {
    return -generator_apply(graph, u);
}

double dirichlet_form(const ProximityGraph& graph, VectorRef u, VectorRef v) {
    if (static_cast<std::size_t>(u.size()) != graph.size() || static_cast<std::size_t>(v.size()) != graph.size())
        throw ParameterError("function size mismatch");
    double acc = 0.0;
    double mass = 0.0;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const auto nb = graph.neighbors(i);
        const auto w = graph.weights(i);
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t p = 0; p < nb.size(); ++p) {
            const auto j = static_cast<Eigen::Index>(nb[p]);
            acc += w[p] * (u[ii] - u[j]) * (v[ii] - v[j]);
        }
        mass += graph.degree(i);
    }
    return 0.5 * graph.config().scale() * acc / mass;
}

bool psd_clip_and_sqrt(Matrix& sym, Matrix& root) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    Vector lambda = solver.eigenvalues();
    const bool clipped = lambda.minCoeff() < 0.0;
    lambda = lambda.cwiseMax(0.0);
    const Matrix& vecs = solver.eigenvectors();
    root = vecs * lambda.cwiseSqrt().asDiagonal() * vecs.transpose();
    root = 0.5 * (root + root.transpose()).eval();
    if (clipped) {
        sym = vecs * lambda.asDiagonal() * vecs.transpose();
        sym = 0.5 * (sym + sym.transpose()).eval();
    }
    return clipped;
}

OperatorField::OperatorField(Matrix drift, std::vector<double> cdc)
    : drift_(std::move(drift)), cdc_(std::move(cdc)), cdc_sqrt_(cdc_.size()) {
    const auto n = static_cast<Eigen::Index>(dims());
    if (cdc_.size() != size() * dims() * dims()) throw ParameterError("CDC storage size mismatch");
    Matrix sym(n, n);
    Matrix root(n, n);
    for (std::size_t i = 0; i < size(); ++i) {
        using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<RowMat> g(cdc_.data() + i * dims() * dims(), n, n);
        sym = g;
        try {
            if (psd_clip_and_sqrt(sym, root)) {
                g = sym;
                ++clipped_nodes;
            }
        } catch (const NumericalError&) {
            throw NumericalError("eigendecomposition failed at node " + std::to_string(i));
        }
        Eigen::Map<RowMat>(cdc_sqrt_.data() + i * dims() * dims(), n, n) = root;
    }
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
OperatorField::cdc(std::size_t i) const noexcept {
    const auto n = static_cast<Eigen::Index>(dims());
    return {cdc_.data() + i * dims() * dims(), n, n};
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
OperatorField::cdc_sqrt(std::size_t i) const noexcept {
    const auto n = static_cast<Eigen::Index>(dims());
    return {cdc_sqrt_.data() + i * dims() * dims(), n, n};
}

OperatorField build_operator_field(const ProximityGraph& graph, unsigned threads) {
    const PointCloud& cloud = graph.cloud();
    const std::size_t n_nodes = graph.size();
    const std::size_t n = cloud.dims();
    const double s = graph.config().scale();
    const auto d = static_cast<std::size_t>(graph.config().intrinsic_dim);

    Matrix drift(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(n));
    std::vector<double> cdc(n_nodes * n * n, 0.0);
    std::vector<unsigned char> degenerate(n_nodes, 0);

    parallel_for(n_nodes, threads, [&](std::size_t i) {
        const auto nb = graph.neighbors(i);
        const auto w = graph.weights(i);
        const double inv_m = 1.0 / graph.degree(i);
        std::vector<double> delta(n);
        std::vector<double> mean(n, 0.0);
        double* g = cdc.data() + i * n * n;
        for (std::size_t p = 0; p < nb.size(); ++p) {
            const double pij = w[p] * inv_m;
            for (std::size_t k = 0; k < n; ++k)
                delta[k] = cloud.points(static_cast<Eigen::Index>(nb[p]), static_cast<Eigen::Index>(k)) -
                           cloud.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            for (std::size_t k = 0; k < n; ++k) {
                mean[k] += pij * delta[k];
                for (std::size_t l = k; l < n; ++l) g[k * n + l] += pij * delta[k] * delta[l];
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            drift(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = s * mean[k];
            for (std::size_t l = k; l < n; ++l) {
                g[k * n + l] *= s;
                g[l * n + k] = g[k * n + l];
            }
        }
        degenerate[i] = nb.size() < d ? 1 : 0;
    });

    OperatorField field(std::move(drift), std::move(cdc));
    field.degenerate_nodes = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
    return field;
}

void extend_to_ambient(const OperatorField& field, const SpatialIndex& index, const double* x,
                       std::size_t k, FieldSample& out, std::vector<Neighbor>& scratch) {
    const auto n = static_cast<Eigen::Index>(field.dims());
    if (k < 1) throw ParameterError("knn extension must be >= 1");
    if (k == 1) {
        const Neighbor nn = index.nearest(x);
        out.nearest = nn.index;
        out.nearest_distance = nn.distance;
        out.drift = field.drift().row(static_cast<Eigen::Index>(nn.index)).transpose();
        out.cdc = field.cdc(nn.index);
        out.cdc_sqrt = field.cdc_sqrt(nn.index);
        return;
    }
    index.knn_query(x, std::min(k, index.size()), scratch);
    out.nearest = scratch.front().index;
    out.nearest_distance = scratch.front().distance;
    out.drift.setZero(n);
    out.cdc.setZero(n, n);
    double total = 0.0;
    for (const auto& nb : scratch) {
        const double w = 1.0 / (nb.distance + 1e-12);
        total += w;
        out.drift += w * field.drift().row(static_cast<Eigen::Index>(nb.index)).transpose();
        out.cdc += w * field.cdc(nb.index);
    }
    out.drift /= total;
    out.cdc /= total;
    out.cdc = 0.5 * (out.cdc + out.cdc.transpose()).eval();
    psd_clip_and_sqrt(out.cdc, out.cdc_sqrt);
}

FieldSample extend_to_ambient(const OperatorField& field, const SpatialIndex& index, VectorRef x,
                              std::size_t k) {
    if (static_cast<std::size_t>(x.size()) != field.dims()) throw ParameterError("query dimension mismatch");
    const Vector q = x;
    FieldSample out;
    std::vector<Neighbor> scratch;
    extend_to_ambient(field, index, q.data(), k, out, scratch);
    return out;
}

void write_field(std::ostream& out, const OperatorField& field, const std::string& comment) {
    const std::size_t n = field.dims();
    std::string buf = "# imd-field";
    if (!comment.empty()) buf += " " + comment;
    buf += "\nnode";
    for (std::size_t k = 0; k < n; ++k) buf += ",v" + std::to_string(k + 1);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) buf += ",g" + std::to_string(k + 1) + std::to_string(l + 1);
    buf += '\n';
    out << buf;
    for (std::size_t i = 0; i < field.size(); ++i) {
        buf = std::to_string(i);
        for (std::size_t k = 0; k < n; ++k) {
            buf += ',';
            csv::append_double(buf, field.drift()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
        }
        const auto g = field.cdc(i);
        for (Eigen::Index k = 0; k < g.rows(); ++k)
            for (Eigen::Index l = 0; l < g.cols(); ++l) {
                buf += ',';
                csv::append_double(buf, g(k, l));
            }
        buf += '\n';
        out << buf;
    }
}

OperatorField read_field(std::istream& in) {
    csv::LineReader reader(in);
    std::string line;
    do {
        if (!reader.next(line)) throw ParseError("missing field header", reader.line_number());
    } while (line.empty() || line.front() == '#');

    const auto header = csv::split(line);
    const std::size_t cols = header.size();
    if (cols < 3 || csv::trim(header[0]) != "node") throw ParseError("field header must start with 'node'", reader.line_number());
    // cols = 1 + n + n^2
    std::size_t n = 0;
    while (1 + n + n * n < cols) ++n;
    if (1 + n + n * n != cols) throw ParseError("field header has an invalid column count", reader.line_number());
    for (std::size_t k = 0; k < n; ++k)
        if (csv::trim(header[1 + k]) != "v" + std::to_string(k + 1))
            throw ParseError("unexpected field column '" + std::string(header[1 + k]) + "'", reader.line_number());

    std::vector<double> drift_rows;
    std::vector<double> cdc;
    std::size_t rows = 0;
    while (reader.next(line)) {
        if (line.empty() || line.front() == '#') continue;
        const auto cells = csv::split(line);
        if (cells.size() != cols) throw ParseError("row " + std::to_string(rows) + " has the wrong column count", reader.line_number());
        if (csv::parse_int(cells[0], reader.line_number()) != static_cast<long long>(rows))
            throw ParseError("node ids must be 0..N-1 in order", reader.line_number());
        for (std::size_t k = 0; k < n; ++k) drift_rows.push_back(csv::parse_double(cells[1 + k], reader.line_number()));
        for (std::size_t k = 0; k < n * n; ++k) cdc.push_back(csv::parse_double(cells[1 + n + k], reader.line_number()));
        ++rows;
    }
    if (rows == 0) throw ParseError("field has no rows", reader.line_number());
    Matrix drift(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < n; ++k)
            drift(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = drift_rows[i * n + k];
    return OperatorField(std::move(drift), std::move(cdc));
}

void save_field(const std::filesystem::path& path, const OperatorField& field, const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    write_field(out, field, comment);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

OperatorField load_field(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_field(in);
}

}  // namespace imd
