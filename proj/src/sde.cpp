#include "imd/sde.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "imd/csv.hpp"
#include "imd/error.hpp"
#include "imd/parallel.hpp"
#include "imd/rng.hpp"

namespace imd {

std::string to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::imd: return "imd";
        case Scheme::cdc_only: return "cdc-only";
        case Scheme::ambient_noise: return "ambient-noise";
    }
    return "imd";
}

Scheme parse_scheme(const std::string& name) {
    if (name == "imd") return Scheme::imd;
    if (name == "cdc-only" || name == "cdc_only") return Scheme::cdc_only;
    if (name == "ambient-noise" || name == "ambient_noise") return Scheme::ambient_noise;
    throw ParameterError("unknown scheme '" + name + "'");
}

void IntegratorConfig::validate() const {
    if (!(step > 0.0) || !std::isfinite(step)) throw ParameterError("step must be > 0");
    if (!(speedup > 0.0) || !std::isfinite(speedup)) throw ParameterError("speedup must be > 0");
    if (knn < 1) throw ParameterError("knn extension must be >= 1");
}

DriftSpec DriftSpec::none() { return {}; }

DriftSpec DriftSpec::vmf(Vector mu, double kappa, double beta) {
    DriftSpec spec;
    spec.kind = Kind::vmf;
    spec.mu = std::move(mu);
    spec.kappa = kappa;
    spec.beta = beta;
    return spec;
}

DriftSpec DriftSpec::quadratic(Vector z_star, double beta) {
    DriftSpec spec;
    spec.kind = Kind::quadratic;
    spec.z_star = std::move(z_star);
    spec.beta = beta;
    return spec;
}

void DriftSpec::validate(std::size_t dims) const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ParameterError("beta must be > 0");
    switch (kind) {
        case Kind::none: break;
        case Kind::vmf:
            if (static_cast<std::size_t>(mu.size()) != dims) throw ParameterError("mu has the wrong dimension");
            if (std::abs(mu.norm() - 1.0) > 1e-12) throw ParameterError("mu must be a unit vector");
            if (!(kappa > 0.0)) throw ParameterError("kappa must be > 0");
            break;
        case Kind::quadratic:
            if (static_cast<std::size_t>(z_star.size()) != dims) throw ParameterError("z* has the wrong dimension");
            if (!z_star.allFinite()) throw ParameterError("z* must be finite");
            break;
    }
}

Vector potential_gradient(const DriftSpec& spec, VectorRef x) {
    switch (spec.kind) {
        case DriftSpec::Kind::vmf: return -spec.kappa * spec.mu;
        case DriftSpec::Kind::quadratic: return x - spec.z_star;
        case DriftSpec::Kind::none: break;
    }
    return Vector::Zero(x.size());
}

Vector langevin_drift(const DriftSpec& spec, MatrixRef cdc, VectorRef x) {
    if (spec.kind == DriftSpec::Kind::none) return Vector::Zero(x.size());
    return -0.5 * spec.beta * (cdc * potential_gradient(spec, x));
}

Simulator::Simulator(const OperatorField& field, const SpatialIndex& index, const PointCloud& cloud,
                     const KdeScore* score, double diameter)
    : field_(&field), index_(&index), cloud_(&cloud), score_(score), diameter_(diameter) {
    if (field.size() != cloud.size() || index.size() != cloud.size())
        throw ParameterError("field, index and cloud sizes differ");
    if (field.dims() != cloud.dims()) throw ParameterError("field and cloud dimensions differ");
    if (!(diameter_ > 0.0)) diameter_ = data_diameter(cloud);
    if (cloud.spec)
        if (const auto* s = std::get_if<SphereSpec>(&*cloud.spec)) sphere_radius_ = s->radius;
}

void Simulator::step_into(const IntegratorConfig& cfg, const DriftSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& xi, Workspace& ws) const {
    const double h = cfg.effective_step();
    const double root_h = std::sqrt(h);
    switch (cfg.scheme) {
        case Scheme::imd:
            ws.next = x + (ws.sample.drift + langevin_drift(spec, ws.sample.cdc, x)) * h +
                      ws.sample.cdc_sqrt * (root_h * xi);
            break;
        case Scheme::cdc_only:
            ws.next = x + langevin_drift(spec, ws.sample.cdc, x) * h + ws.sample.cdc_sqrt * (root_h * xi);
            break;
        case Scheme::ambient_noise: {
            const Matrix identity = Matrix::Identity(x.size(), x.size());
            ws.next = x + langevin_drift(spec, identity, x) * h + root_h * xi;
            break;
        }
    }
}

void Simulator::check(const Eigen::VectorXd& x, std::size_t step) const {
    const bool finite = x.allFinite();
    if (finite && x.norm() <= 100.0 * diameter_) return;
    std::ostringstream msg;
    msg << (finite ? "state left 100x the data diameter" : "non-finite state") << " at step " << step << ": [";
    for (Eigen::Index k = 0; k < x.size(); ++k) msg << (k ? ", " : "") << x[k];
    msg << "]";
    throw DivergenceError(msg.str(), step);
}

Vector Simulator::em_step(const IntegratorConfig& cfg, const DriftSpec& spec, VectorRef x, VectorRef xi) const {
    cfg.validate();
    spec.validate(cloud_->dims());
    if (static_cast<std::size_t>(x.size()) != cloud_->dims() || xi.size() != x.size())
        throw ParameterError("state or noise has the wrong dimension");
    Workspace ws;
    const Vector state = x;
    const Vector noise = xi;
    extend_to_ambient(*field_, *index_, state.data(), cfg.knn, ws.sample, ws.scratch);
    step_into(cfg, spec, state, noise, ws);
    check(ws.next, 1);
    return ws.next;
}

Trajectory Simulator::simulate(const IntegratorConfig& cfg, const DriftSpec& spec,
                               const std::optional<Vector>& x0) const {
    cfg.validate();
    const std::size_t n = cloud_->dims();
    spec.validate(n);
    if (cfg.drgd && score_ == nullptr) throw ParameterError("DRGD requires a score model");
    Vector x = x0 ? *x0 : cloud_->point(0);
    if (static_cast<std::size_t>(x.size()) != n) throw ParameterError("initial state has the wrong dimension");
    if (!x.allFinite()) throw ParameterError("initial state must be finite");

    const double h = cfg.effective_step();
    Trajectory traj;
    traj.times.resize(cfg.steps + 1);
    traj.states.resize(static_cast<Eigen::Index>(cfg.steps + 1), static_cast<Eigen::Index>(n));
    traj.nn_dist.resize(cfg.steps + 1);
    if (sphere_radius_) traj.radial_err.resize(cfg.steps + 1);

    auto record = [&](std::size_t l) {
        traj.times[l] = static_cast<double>(l) * h;
        traj.states.row(static_cast<Eigen::Index>(l)) = x.transpose();
        if (sphere_radius_) traj.radial_err[l] = std::abs(x.norm() - *sphere_radius_);
    };

    Rng rng(cfg.seed);
    Workspace ws;
    ws.denoised.resize(static_cast<Eigen::Index>(n));
    Vector xi(static_cast<Eigen::Index>(n));
    record(0);
    for (std::size_t l = 0; l < cfg.steps; ++l) {
        extend_to_ambient(*field_, *index_, x.data(), cfg.knn, ws.sample, ws.scratch);
        traj.nn_dist[l] = ws.sample.nearest_distance;
        for (std::size_t k = 0; k < n; ++k) xi[static_cast<Eigen::Index>(k)] = rng.normal();
        step_into(cfg, spec, x, xi, ws);
        if (cfg.drgd) {
            check(ws.next, l + 1);
            score_->drgd_step(ws.next.data(), ws.denoised.data());
            x = ws.denoised;
        } else {
            x = ws.next;
        }
        check(x, l + 1);
        record(l + 1);
    }
    traj.nn_dist[cfg.steps] = index_->nearest(x.data()).distance;
    return traj;
}

std::vector<PathResult> Simulator::simulate_ensemble(const IntegratorConfig& cfg, const DriftSpec& spec,
                                                     const std::vector<Vector>& starts,
                                                     std::size_t paths_per_start, unsigned threads) const {
    if (paths_per_start < 1) throw ParameterError("paths per start must be >= 1");
    if (starts.empty()) throw ParameterError("at least one starting point is required");
    cfg.validate();
    spec.validate(cloud_->dims());
    const std::size_t total = starts.size() * paths_per_start;
    std::vector<PathResult> results(total);
    parallel_for(total, threads, [&](std::size_t p) {
        PathResult& r = results[p];
        r.path = p;
        r.start = p / paths_per_start;
        IntegratorConfig path_cfg = cfg;
        path_cfg.seed = derive_seed(cfg.seed, p);
        try {
            Trajectory t = simulate(path_cfg, spec, starts[r.start]);
            t.start = r.start;
            t.path = p;
            r.trajectory = std::move(t);
        } catch (const DivergenceError& e) {
            r.error = e.what();
            r.failed_step = e.step();
        } catch (const Error& e) {
            r.error = e.what();
        }
    });
    return results;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
    const auto n = traj.states.cols();
    const bool radial = !traj.radial_err.empty();
    std::string buf = "step,t";
    for (Eigen::Index k = 0; k < n; ++k) buf += ",x" + std::to_string(k + 1);
    if (radial) buf += ",radial_err";
    buf += ",nn_dist\n";
    out << buf;
    for (std::size_t l = 0; l < traj.times.size(); ++l) {
        buf = std::to_string(l) + ",";
        csv::append_double(buf, traj.times[l]);
        for (Eigen::Index k = 0; k < n; ++k) {
            buf += ',';
            csv::append_double(buf, traj.states(static_cast<Eigen::Index>(l), k));
        }
        if (radial) {
            buf += ',';
            csv::append_double(buf, traj.radial_err[l]);
        }
        buf += ',';
        csv::append_double(buf, traj.nn_dist[l]);
        buf += '\n';
        out << buf;
    }
}

Trajectory read_trajectory(std::istream& in) {
    csv::LineReader reader(in);
    std::string line;
    do {
        if (!reader.next(line)) throw ParseError("missing trajectory header", reader.line_number());
    } while (line.empty() || line.front() == '#');
    const auto header = csv::split(line);
    if (header.size() < 4 || csv::trim(header[0]) != "step" || csv::trim(header[1]) != "t" ||
        csv::trim(header.back()) != "nn_dist")
        throw ParseError("trajectory header must be step,t,x1..xn[,radial_err],nn_dist", reader.line_number());
    const bool radial = csv::trim(header[header.size() - 2]) == "radial_err";
    const std::size_t n = header.size() - 3 - (radial ? 1 : 0);
    for (std::size_t k = 0; k < n; ++k)
        if (csv::trim(header[2 + k]) != "x" + std::to_string(k + 1))
            throw ParseError("unexpected trajectory column '" + std::string(header[2 + k]) + "'", reader.line_number());

    Trajectory traj;
    std::vector<double> states;
    while (reader.next(line)) {
        if (line.empty() || line.front() == '#') continue;
        const auto cells = csv::split(line);
        if (cells.size() != header.size()) throw ParseError("wrong column count", reader.line_number());
        if (csv::parse_int(cells[0], reader.line_number()) != static_cast<long long>(traj.times.size()))
            throw ParseError("steps must be consecutive from 0", reader.line_number());
        traj.times.push_back(csv::parse_double(cells[1], reader.line_number()));
        for (std::size_t k = 0; k < n; ++k) states.push_back(csv::parse_double(cells[2 + k], reader.line_number()));
        if (radial) traj.radial_err.push_back(csv::parse_double(cells[2 + n], reader.line_number()));
        traj.nn_dist.push_back(csv::parse_double(cells.back(), reader.line_number()));
    }
    if (traj.times.empty()) throw ParseError("trajectory has no rows", reader.line_number());
    traj.states.resize(static_cast<Eigen::Index>(traj.times.size()), static_cast<Eigen::Index>(n));
    for (std::size_t l = 0; l < traj.times.size(); ++l)
        for (std::size_t k = 0; k < n; ++k)
            traj.states(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = states[l * n + k];
    return traj;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    write_trajectory(out, traj);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

Trajectory load_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_trajectory(in);
}

}  // namespace imd
