#pragma once

// Proximity graph, discrete generator and carre-du-champ field.
//
// With P = D^{-1} W the random-walk matrix and s = c / h^2, the discrete
// Markov generator is
//
//     (G u)_i = s * sum_j P_ij (u_j - u_i),
//
// and the random-walk graph Laplacian is -G. Applied to the coordinate
// functions, G gives the drift field and the carre-du-champ
// Gamma(u, w) = G(uw) - u G w - w G u gives the local covariance
//
//     Gamma_i = s * sum_j P_ij (x_j - x_i)(x_j - x_i)^T,
//
// which converges to the tangent projector when c = d + 2.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "imd/manifolds.hpp"
#include "imd/neighbors.hpp"
#include "imd/types.hpp"

namespace imd {

enum class Kernel { hard_cutoff, gaussian };

std::string to_string(Kernel kernel);
Kernel parse_kernel(const std::string& name);

struct GraphConfig {
    double bandwidth = 0.0;  ///< connectivity radius, ambient distance units
    Kernel kernel = Kernel::hard_cutoff;
    double scaling_c = 0.0;  ///< non-positive means "use d + 2"
    int intrinsic_dim = 1;
    int knn_extension = 1;

    static GraphConfig for_dim(int d, double bandwidth, Kernel kernel = Kernel::hard_cutoff);

    double c() const noexcept { return scaling_c > 0.0 ? scaling_c : intrinsic_dim + 2.0; }
    /// c / h^2.
    double scale() const noexcept { return c() / (bandwidth * bandwidth); }
    void validate() const;
};

/// Symmetric weighted adjacency in CSR form. Holds a reference to the cloud
/// it was built from; the cloud must outlive the graph.
class ProximityGraph {
public:
    ProximityGraph(const PointCloud& cloud, GraphConfig config, std::vector<std::size_t> offsets,
                   std::vector<std::size_t> neighbors, std::vector<double> weights);

    std::size_t size() const noexcept { return degrees_.size(); }
    /// Number of undirected edges.
    std::size_t edge_count() const noexcept { return neighbors_.size() / 2; }
    const GraphConfig& config() const noexcept { return config_; }
    const PointCloud& cloud() const noexcept { return *cloud_; }

    std::span<const std::size_t> neighbors(std::size_t i) const noexcept {
        return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    std::span<const double> weights(std::size_t i) const noexcept {
        return {weights_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    double degree(std::size_t i) const noexcept { return degrees_[i]; }
    const std::vector<double>& degrees() const noexcept { return degrees_; }

    /// W_ij, zero when (i, j) is not an edge.
    double weight(std::size_t i, std::size_t j) const;

private:
    const PointCloud* cloud_;
    GraphConfig config_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbors_;
    std::vector<double> weights_;
    std::vector<double> degrees_;
};

/// Throws ConnectivityError naming the first node without neighbours.
ProximityGraph build_graph(const PointCloud& cloud, const SpatialIndex& index,
                           const GraphConfig& config, unsigned threads = 1);
ProximityGraph build_graph(const PointCloud& cloud, const GraphConfig& config);

/// Smallest radius at which the hard-cutoff graph is connected: the longest
/// edge of the Euclidean minimum spanning tree.
double connectivity_radius(const PointCloud& cloud, const SpatialIndex& index);

/// 1.5 x connectivity_radius. Requires at least two distinct points.
double default_bandwidth(const PointCloud& cloud, const SpatialIndex& index);
double default_bandwidth(const PointCloud& cloud);

/// G u.
Vector generator_apply(const ProximityGraph& graph, VectorRef u);
/// Random-walk graph Laplacian, -G u.
Vector laplacian_apply(const ProximityGraph& graph, VectorRef u);

/// Degree-normalised Dirichlet form
/// (s / 2) sum_ij W_ij (u_i - u_j)(v_i - v_j) / sum_i m_i.
double dirichlet_form(const ProximityGraph& graph, VectorRef u, VectorRef v);

/// Per-node drift G x and carre-du-champ matrix with its PSD square root.
class OperatorField {
public:
    OperatorField() = default;
    /// Takes raw per-node drift rows and CDC matrices (row-major n x n,
    /// concatenated), clips negative eigenvalues and caches square roots.
    OperatorField(Matrix drift, std::vector<double> cdc);

    std::size_t size() const noexcept { return static_cast<std::size_t>(drift_.rows()); }
    std::size_t dims() const noexcept { return static_cast<std::size_t>(drift_.cols()); }

    const Matrix& drift() const noexcept { return drift_; }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    cdc(std::size_t i) const noexcept;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    cdc_sqrt(std::size_t i) const noexcept;

    /// Nodes whose neighbourhood had fewer than d neighbours at build time.
    std::size_t degenerate_nodes = 0;
    /// Nodes where a negative eigenvalue had to be clipped.
    std::size_t clipped_nodes = 0;

private:
    Matrix drift_;
    std::vector<double> cdc_;
    std::vector<double> cdc_sqrt_;
};

OperatorField build_operator_field(const ProximityGraph& graph, unsigned threads = 1);

/// PSD projection and square root of a symmetric matrix. Returns true when
/// an eigenvalue below zero was clipped. Throws NumericalError on failure.
bool psd_clip_and_sqrt(Matrix& sym, Matrix& root);

/// Field values lifted to an arbitrary ambient point.
struct FieldSample {
    Vector drift;
    Matrix cdc;
    Matrix cdc_sqrt;
    std::size_t nearest = 0;          ///< index of the closest node
    double nearest_distance = 0.0;
};

/// k = 1 copies the nearest node's values. k > 1 averages the k nearest
/// nodes with weights proportional to 1 / (distance + 1e-12), then re-clips
/// the averaged CDC to PSD and recomputes its square root.
void extend_to_ambient(const OperatorField& field, const SpatialIndex& index, const double* x,
                       std::size_t k, FieldSample& out, std::vector<Neighbor>& scratch);
FieldSample extend_to_ambient(const OperatorField& field, const SpatialIndex& index, VectorRef x,
                              std::size_t k = 1);

/// Field CSV: header `node,v1..vn,g11..gnn` (row-major CDC), 17 significant
/// digits, preceded by a `# imd-field` comment line.
void write_field(std::ostream& out, const OperatorField& field, const std::string& comment = {});
OperatorField read_field(std::istream& in);
void save_field(const std::filesystem::path& path, const OperatorField& field,
                const std::string& comment = {});
OperatorField load_field(const std::filesystem::path& path);

}  // namespace imd
