// imd: sample clouds, build operator fields, simulate, evaluate, export.
//
// Exit codes: 0 success, 2 usage or parameter error, 3 graph construction,
// 4 simulation divergence, 1 anything else.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imd/cloud_io.hpp"
#include "imd/csv.hpp"
#include "imd/error.hpp"
#include "imd/graph.hpp"
#include "imd/metrics.hpp"
#include "imd/parallel.hpp"
#include "imd/rng.hpp"
#include "imd/score.hpp"
#include "imd/sde.hpp"
#include "imd/version.hpp"

namespace fs = std::filesystem;
using namespace imd;

namespace {

constexpr const char* kManifestName = "imd-manifest.cfg";
constexpr const char* kIndexName = "paths.csv";
constexpr const char* kConcatName = "trajectories.csv";

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kGraph = 3, kDiverged = 4 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RunDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Keys a manifest carries that are not command-line options.
bool is_metadata_key(const std::string& key) {
    return key == "command" || key == "version" || key == "duration_s" || key == "config";
}

KeyValues read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
    KeyValues out;
    csv::LineReader reader(in);
    std::string line;
    while (reader.next(line)) {
        const auto text = csv::trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string_view::npos)
            throw UsageError(path.string() + ":" + std::to_string(reader.line_number()) + ": expected key=value");
        out.emplace_back(std::string(csv::trim(text.substr(0, eq))), std::string(csv::trim(text.substr(eq + 1))));
    }
    return out;
}

std::string config_command(const KeyValues& kv) {
    for (const auto& [k, v] : kv)
        if (k == "command") return v;
    return {};
}

class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)) {}

    template <typename T>
    void set(const std::string& key, const T& value) {
        std::ostringstream s;
        if constexpr (std::is_floating_point_v<T>)
            s << csv::format_double(value);
        else if constexpr (std::is_same_v<T, bool>)
            s << (value ? "true" : "false");
        else
            s << value;
        entries_.emplace_back(key, s.str());
    }

    void write(const fs::path& dir, double seconds) const {
        fs::create_directories(dir);
        std::ofstream out(dir / kManifestName);
        if (!out) throw Error("cannot write manifest in '" + dir.string() + "'");
        out << "# imd run manifest; replay with: imd " << command_ << " --config <this file>\n";
        out << "command=" << command_ << "\n";
        out << "version=" << kVersion << "\n";
        for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
        out << "duration_s=" << seconds << "\n";
    }

private:
    std::string command_;
    KeyValues entries_;
};

fs::path parent_dir(const fs::path& file) {
    const fs::path p = file.parent_path();
    return p.empty() ? fs::path(".") : p;
}

unsigned default_threads() {
    if (const char* env = std::getenv("IMD_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw UsageError(std::string("IMD_THREADS must be a positive integer, got '") + env + "'");
    }
    return resolve_threads(0);
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
    std::string manifold;
    int dim = 2;
    double radius = 1.0;
    double major = 2.0;
    double minor = 1.0;
    double t_lo = 1.5;
    double t_hi = 15.5;
    double height = 20.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_sample(const SampleArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    if (a.n < 1) throw ParameterError("--n must be >= 1");
    PointCloud cloud;
    Manifest m("sample");
    m.set("manifold", a.manifold);
    if (a.manifold == "sphere") {
        cloud = sample_sphere(a.dim, a.radius, a.n, a.seed);
        m.set("dim", a.dim);
        m.set("radius", a.radius);
    } else if (a.manifold == "torus") {
        cloud = sample_torus(a.major, a.minor, a.n, a.seed);
        m.set("major", a.major);
        m.set("minor", a.minor);
    } else if (a.manifold == "swiss-roll") {
        cloud = sample_swiss_roll(a.t_lo, a.t_hi, a.height, a.n, a.seed);
        m.set("t-lo", a.t_lo);
        m.set("t-hi", a.t_hi);
        m.set("height", a.height);
    } else {
        throw UsageError("unknown manifold '" + a.manifold + "' (sphere, torus, swiss-roll)");
    }
    m.set("n", a.n);
    m.set("seed", a.seed);
    m.set("output", a.out);
    fs::create_directories(parent_dir(a.out));
    save_cloud(a.out, cloud);
    std::cerr << "sample: wrote " << cloud.size() << " points in R^" << cloud.dims() << " to " << a.out << "\n";
    m.write(parent_dir(a.out), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return kOk;
}

// ---------------------------------------------------------------- build

struct BuildArgs {
    std::string cloud;
    std::string out;
    double bandwidth = 0.0;
    std::string kernel = "hard-cutoff";
    double c = 0.0;
    unsigned threads = 0;
};

int cmd_build(const BuildArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const PointCloud cloud = load_cloud(a.cloud);
    const SpatialIndex index(cloud.points);
    GraphConfig cfg = GraphConfig::for_dim(cloud.intrinsic_dim, a.bandwidth, parse_kernel(a.kernel));
    cfg.scaling_c = a.c;
    if (a.bandwidth <= 0.0) cfg.bandwidth = default_bandwidth(cloud, index);

    std::optional<ProximityGraph> graph;
    try {
        graph.emplace(build_graph(cloud, index, cfg, a.threads));
    } catch (const ConnectivityError& e) {
        std::cerr << "build: " << e.what() << "\n";
        if (cfg.kernel == Kernel::hard_cutoff)
            std::cerr << "build: the whole graph connects at --bandwidth "
                      << csv::format_double(connectivity_radius(cloud, index)) << "\n";
        return kGraph;
    }
    const OperatorField field = build_operator_field(*graph, a.threads);
    std::ostringstream comment;
    comment << "bandwidth=" << csv::format_double(cfg.bandwidth) << " kernel=" << to_string(cfg.kernel)
            << " c=" << csv::format_double(cfg.c()) << " intrinsic_dim=" << cfg.intrinsic_dim;
    fs::create_directories(parent_dir(a.out));
    save_field(a.out, field, comment.str());

    const double mean_degree = 2.0 * static_cast<double>(graph->edge_count()) / static_cast<double>(cloud.size());
    std::cout << "nodes " << cloud.size() << "\n"
              << "edges " << graph->edge_count() << "\n"
              << "mean_degree " << mean_degree << "\n"
              << "bandwidth " << csv::format_double(cfg.bandwidth) << "\n"
              << "kernel " << to_string(cfg.kernel) << "\n"
              << "c " << cfg.c() << "\n"
              << "degenerate_nodes " << field.degenerate_nodes << "\n"
              << "clipped_nodes " << field.clipped_nodes << "\n";

    Manifest m("build");
    m.set("cloud", a.cloud);
    m.set("output", a.out);
    m.set("bandwidth", cfg.bandwidth);
    m.set("kernel", to_string(cfg.kernel));
    m.set("c", cfg.c());
    m.set("threads", resolve_threads(a.threads));
    m.write(parent_dir(a.out), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return kOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string cloud;
    std::string field;
    std::string out;
    std::string drift = "none";
    double kappa = 10.0;
    int mu_axis = 1;
    std::string z_star;
    double beta = 1.0;
    std::size_t paths = 1;
    std::size_t starts = 1;
    std::size_t steps = 1000;
    double step = 1e-3;
    double speedup = 1.0;
    bool drgd = false;
    double sigma = 0.0;
    double sigma_rel = 0.005;
    std::size_t knn = 1;
    std::string scheme = "imd";
    std::uint64_t seed = 0;
    bool concat = false;
    unsigned threads = 0;
};

Vector parse_vector(const std::string& text, std::size_t dims, const char* what) {
    const auto cells = csv::split(text);
    if (cells.size() != dims)
        throw ParameterError(std::string(what) + " needs " + std::to_string(dims) + " comma-separated values");
    Vector v(static_cast<Eigen::Index>(dims));
    for (std::size_t k = 0; k < dims; ++k) v[static_cast<Eigen::Index>(k)] = csv::parse_double(cells[k], 1);
    return v;
}

Vector axis_vector(int axis, std::size_t dims) {
    if (axis < 1 || static_cast<std::size_t>(axis) > dims)
        throw ParameterError("--mu-axis must be in 1.." + std::to_string(dims));
    return Vector::Unit(static_cast<Eigen::Index>(dims), axis - 1);
}

DriftSpec make_drift(const std::string& kind, double kappa, int mu_axis, const std::string& z_star, double beta,
                     std::size_t dims) {
    if (kind == "none") {
        DriftSpec s = DriftSpec::none();
        s.beta = beta;
        return s;
    }
    if (kind == "vmf") return DriftSpec::vmf(axis_vector(mu_axis, dims), kappa, beta);
    if (kind == "quadratic") {
        if (z_star.empty()) throw ParameterError("--drift quadratic needs --z-star");
        return DriftSpec::quadratic(parse_vector(z_star, dims, "--z-star"), beta);
    }
    throw UsageError("unknown drift '" + kind + "' (none, vmf, quadratic)");
}

std::vector<std::size_t> choose_starts(std::size_t count, std::size_t n, std::uint64_t seed) {
    if (count < 1) throw ParameterError("--starts must be >= 1");
    if (count > n) throw ParameterError("--starts exceeds the number of cloud points");
    if (count == 1) return {0};
    // Partial Fisher-Yates on a dedicated substream.
    Rng rng(derive_seed(seed, 0x5354415254ULL));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(count);
    return idx;
}

std::string path_file_name(std::size_t p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "path_%05zu.csv", p);
    return buf;
}

void append_concat_rows(std::string& buf, const Trajectory& t) {
    const auto n = t.states.cols();
    for (std::size_t l = 0; l < t.times.size(); ++l) {
        buf += std::to_string(t.path) + "," + std::to_string(l) + ",";
        csv::append_double(buf, t.times[l]);
        for (Eigen::Index k = 0; k < n; ++k) {
            buf += ',';
            csv::append_double(buf, t.states(static_cast<Eigen::Index>(l), k));
        }
        if (!t.radial_err.empty()) {
            buf += ',';
            csv::append_double(buf, t.radial_err[l]);
        }
        buf += ',';
        csv::append_double(buf, t.nn_dist[l]);
        buf += '\n';
    }
}

int cmd_simulate(const SimulateArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const PointCloud cloud = load_cloud(a.cloud);
    const OperatorField field = load_field(a.field);
    if (field.size() != cloud.size() || field.dims() != cloud.dims())
        throw ParameterError("field '" + a.field + "' does not match cloud '" + a.cloud + "'");
    const SpatialIndex index(cloud.points);

    IntegratorConfig cfg;
    cfg.step = a.step;
    cfg.steps = a.steps;
    cfg.speedup = a.speedup;
    cfg.seed = a.seed;
    cfg.drgd = a.drgd;
    cfg.knn = a.knn;
    cfg.scheme = parse_scheme(a.scheme);
    cfg.validate();
    if (a.paths < 1) throw ParameterError("--paths must be >= 1");
    const DriftSpec spec = make_drift(a.drift, a.kappa, a.mu_axis, a.z_star, a.beta, cloud.dims());
    spec.validate(cloud.dims());

    const double diameter = data_diameter(cloud);
    std::optional<KdeScore> score;
    if (a.drgd) {
        const double sigma = a.sigma > 0.0 ? a.sigma : a.sigma_rel * diameter;
        score.emplace(cloud, sigma);
    }
    const Simulator sim(field, index, cloud, score ? &*score : nullptr, diameter);
    const auto start_idx = choose_starts(a.starts, cloud.size(), a.seed);
    const std::size_t total = start_idx.size() * a.paths;
    const unsigned threads = resolve_threads(a.threads);

    const fs::path dir(a.out);
    fs::create_directories(dir);
    std::ofstream concat;
    if (a.concat) {
        concat.open(dir / kConcatName);
        if (!concat) throw Error("cannot write '" + (dir / kConcatName).string() + "'");
        std::string header = "path,step,t";
        for (std::size_t k = 0; k < cloud.dims(); ++k) header += ",x" + std::to_string(k + 1);
        if (cloud.spec && std::holds_alternative<SphereSpec>(*cloud.spec)) header += ",radial_err";
        concat << header << ",nn_dist\n";
    }

    std::string index_csv = "path,start,start_index,file,status,failed_step\n";
    std::vector<std::string> failures;
    const std::size_t chunk = std::max<std::size_t>(64, 16 * static_cast<std::size_t>(threads));
    for (std::size_t first = 0; first < total; first += chunk) {
        const std::size_t count = std::min(chunk, total - first);
        std::vector<PathResult> results(count);
        parallel_for(count, threads, [&](std::size_t j) {
            const std::size_t p = first + j;
            PathResult& r = results[j];
            r.path = p;
            r.start = p / a.paths;
            IntegratorConfig path_cfg = cfg;
            path_cfg.seed = derive_seed(cfg.seed, p);
            try {
                Trajectory t = sim.simulate(path_cfg, spec, cloud.point(start_idx[r.start]));
                t.start = r.start;
                t.path = p;
                if (!a.concat) save_trajectory(dir / path_file_name(p), t);
                r.trajectory = std::move(t);
            } catch (const DivergenceError& e) {
                r.error = e.what();
                r.failed_step = e.step();
            }
        });
        for (auto& r : results) {
            const std::string file = a.concat ? kConcatName : path_file_name(r.path);
            index_csv += std::to_string(r.path) + "," + std::to_string(r.start) + "," +
                         std::to_string(start_idx[r.start]) + "," + file + "," + (r.ok() ? "ok" : "diverged") +
                         "," + std::to_string(r.ok() ? 0 : r.failed_step) + "\n";
            if (!r.ok()) {
                failures.push_back("path " + std::to_string(r.path) + " diverged at step " +
                                   std::to_string(r.failed_step) + ": " + r.error);
            } else if (a.concat) {
                std::string buf;
                append_concat_rows(buf, *r.trajectory);
                concat << buf;
            }
        }
    }
    if (a.concat && !concat) throw Error("failed writing '" + (dir / kConcatName).string() + "'");
    {
        std::ofstream idx(dir / kIndexName);
        idx << index_csv;
        if (!idx) throw Error("failed writing '" + (dir / kIndexName).string() + "'");
    }

    Manifest m("simulate");
    m.set("cloud", a.cloud);
    m.set("field", a.field);
    m.set("output", a.out);
    m.set("drift", a.drift);
    m.set("kappa", a.kappa);
    m.set("mu-axis", a.mu_axis);
    if (!a.z_star.empty()) m.set("z-star", a.z_star);
    m.set("beta", a.beta);
    m.set("paths", a.paths);
    m.set("starts", a.starts);
    m.set("steps", a.steps);
    m.set("step", a.step);
    m.set("speedup", a.speedup);
    m.set("drgd", a.drgd);
    if (a.drgd) m.set("sigma", score->sigma());
    m.set("knn", a.knn);
    m.set("scheme", to_string(cfg.scheme));
    m.set("seed", a.seed);
    m.set("concat", a.concat);
    m.set("threads", threads);
    m.write(dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    std::cerr << "simulate: " << total - failures.size() << "/" << total << " paths written to " << dir.string()
              << "\n";
    if (!failures.empty()) {
        for (const auto& f : failures) std::cerr << "simulate: " << f << "\n";
        throw RunDiverged(std::to_string(failures.size()) + " path(s) diverged");
    }
    return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string runs;
    std::string cloud;
    std::string out;
    std::string histogram;
    std::size_t bins = 50;
    std::string metrics = "auto";
    std::string drift;
    double kappa = 0.0;
    int mu_axis = 0;
};

struct RunSet {
    std::vector<Trajectory> trajectories;
    std::size_t failed = 0;
};

std::vector<Trajectory> read_concat(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open '" + file.string() + "'");
    csv::LineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw imd::ParseError("empty trajectory file", 1);
    const auto header = csv::split(line);
    if (header.size() < 5 || csv::trim(header[0]) != "path")
        throw imd::ParseError("concatenated trajectories must start with a path column", reader.line_number());
    // Split by path and reuse the single-trajectory reader.
    std::string head_rest(line.substr(line.find(',') + 1));
    std::map<long long, std::string> per_path;
    while (reader.next(line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw imd::ParseError("wrong column count", reader.line_number());
        const long long p = csv::parse_int(std::string_view(line).substr(0, comma), reader.line_number());
        auto& body = per_path[p];
        if (body.empty()) body = head_rest + "\n";
        body += line.substr(comma + 1);
        body += '\n';
    }
    std::vector<Trajectory> out;
    for (auto& [p, body] : per_path) {
        std::istringstream s(body);
        Trajectory t = read_trajectory(s);
        t.path = static_cast<std::size_t>(p);
        out.push_back(std::move(t));
    }
    return out;
}

RunSet load_runs(const fs::path& dir) {
    std::ifstream in(dir / kIndexName);
    if (!in) throw UsageError("'" + dir.string() + "' has no " + kIndexName + "; is it a simulate output?");
    csv::LineReader reader(in);
    std::string line;
    reader.next(line);
    RunSet set;
    std::map<std::size_t, std::size_t> start_of;
    bool concat = false;
    std::vector<std::pair<std::size_t, std::string>> files;
    while (reader.next(line)) {
        if (line.empty()) continue;
        const auto cells = csv::split(line);
        if (cells.size() != 6) throw imd::ParseError("paths index needs 6 columns", reader.line_number());
        const auto path = static_cast<std::size_t>(csv::parse_int(cells[0], reader.line_number()));
        start_of[path] = static_cast<std::size_t>(csv::parse_int(cells[1], reader.line_number()));
        if (csv::trim(cells[4]) != "ok") {
            ++set.failed;
            continue;
        }
        const std::string file(csv::trim(cells[3]));
        if (file == kConcatName)
            concat = true;
        else
            files.emplace_back(path, file);
    }
    if (concat) {
        set.trajectories = read_concat(dir / kConcatName);
    } else {
        for (const auto& [path, file] : files) {
            Trajectory t = load_trajectory(dir / file);
            t.path = path;
            set.trajectories.push_back(std::move(t));
        }
    }
    for (auto& t : set.trajectories) t.start = start_of.at(t.path);
    return set;
}

int cmd_evaluate(EvaluateArgs a) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path runs(a.runs);
    KeyValues run_manifest;
    if (fs::exists(runs / kManifestName)) run_manifest = read_config(runs / kManifestName);
    auto from_manifest = [&](const std::string& key) -> std::string {
        for (const auto& [k, v] : run_manifest)
            if (k == key) return v;
        return {};
    };
    if (a.cloud.empty()) a.cloud = from_manifest("cloud");
    if (a.cloud.empty()) throw UsageError("--cloud is required (no simulate manifest in the runs directory)");
    if (a.drift.empty()) a.drift = from_manifest("drift");
    if (a.drift.empty()) a.drift = "none";
    if (a.kappa <= 0.0 && !from_manifest("kappa").empty()) a.kappa = csv::parse_double(from_manifest("kappa"), 1);
    if (a.mu_axis <= 0 && !from_manifest("mu-axis").empty())
        a.mu_axis = static_cast<int>(csv::parse_int(from_manifest("mu-axis"), 1));

    const PointCloud cloud = load_cloud(a.cloud);
    std::string kind = cloud.spec ? kind_name(*cloud.spec) : "none";
    std::string metrics = a.metrics;
    if (metrics == "auto") metrics = kind;
    if (metrics != "sphere" && metrics != "swiss-roll")
        throw UsageError("no metric set for manifold kind '" + kind + "'");
    if (metrics != kind)
        throw UsageError("metric set '" + metrics + "' does not match the cloud's manifold '" + kind + "'");

    RunSet runs_set = load_runs(runs);
    if (runs_set.trajectories.empty()) throw Error("no successful trajectories in '" + runs.string() + "'");
    for (const auto& t : runs_set.trajectories)
        if (static_cast<std::size_t>(t.states.cols()) != cloud.dims())
            throw UsageError("trajectory dimension does not match the cloud");

    EvalReport report;
    std::optional<VmfStatisticLaw> law;
    std::optional<Vector> mu;
    if (metrics == "sphere") {
        const auto& sphere = std::get<SphereSpec>(*cloud.spec);
        if (a.drift == "vmf") {
            if (!(a.kappa > 0.0)) throw ParameterError("--kappa must be > 0 for vMF evaluation");
            law.emplace(static_cast<int>(cloud.dims()), a.kappa);
            mu = axis_vector(a.mu_axis > 0 ? a.mu_axis : 1, cloud.dims());
        }
        report = sphere_report(runs_set.trajectories, sphere.radius, law ? &*law : nullptr, mu);
    } else {
        if (!a.histogram.empty()) throw UsageError("--histogram needs a vMF run on a sphere");
        const SpatialIndex index(cloud.points);
        report = swiss_roll_report(runs_set.trajectories, cloud, index);
    }
    report.failed_paths = runs_set.failed;
    report.paths += runs_set.failed;

    {
        fs::create_directories(parent_dir(a.out));
        std::ofstream out(a.out);
        out << report.to_json() << "\n";
        if (!out) throw Error("failed writing '" + a.out + "'");
    }
    std::cout << report.to_json() << "\n";

    if (law) {
        if (a.histogram.empty()) a.histogram = (parent_dir(a.out) / "histogram.csv").string();
        const auto stats = endpoint_statistic(runs_set.trajectories, *mu, std::get<SphereSpec>(*cloud.spec).radius);
        const auto bins = statistic_histogram(stats, *law, a.bins);
        std::ofstream out(a.histogram);
        write_histogram(out, bins);
        if (!out) throw Error("failed writing '" + a.histogram + "'");
    } else if (!a.histogram.empty()) {
        throw UsageError("--histogram needs a vMF run on a sphere");
    }

    Manifest m("evaluate");
    m.set("runs", a.runs);
    m.set("cloud", a.cloud);
    m.set("output", a.out);
    if (!a.histogram.empty()) m.set("histogram", a.histogram);
    m.set("bins", a.bins);
    m.set("metrics", metrics);
    m.set("drift", a.drift);
    if (a.kappa > 0.0) m.set("kappa", a.kappa);
    if (a.mu_axis > 0) m.set("mu-axis", a.mu_axis);
    m.write(parent_dir(a.out), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return kOk;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
    std::string input;
    std::string out;
    std::string format = "long";
    std::size_t path_index = 0;
};

void export_trajectory(std::string& buf, const Trajectory& t, std::size_t path) {
    for (std::size_t l = 0; l < t.times.size(); ++l) {
        for (Eigen::Index k = 0; k < t.states.cols(); ++k) {
            buf += std::to_string(path) + "," + std::to_string(l) + ",";
            csv::append_double(buf, t.times[l]);
            buf += ",x" + std::to_string(k + 1) + ",";
            csv::append_double(buf, t.states(static_cast<Eigen::Index>(l), k));
            buf += '\n';
        }
    }
}

// Re-emits an already long file with canonical number formatting.
void export_long(std::istream& in, const std::string& header, std::size_t value_col, std::string& buf) {
    buf = header + "\n";
    csv::LineReader reader(in);
    std::string line;
    reader.next(line);
    const std::size_t columns = csv::split(header).size();
    while (reader.next(line)) {
        if (line.empty()) continue;
        const auto cells = csv::split(line);
        if (cells.size() != columns) throw imd::ParseError("wrong column count", reader.line_number());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) buf += ',';
            const auto cell = csv::trim(cells[c]);
            if (c == value_col || (header.rfind("path,step,t", 0) == 0 && c == 2))
                csv::append_double(buf, csv::parse_double(cell, reader.line_number()));
            else
                buf += cell;
        }
        buf += '\n';
    }
}

int cmd_export(const ExportArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    if (a.format != "long") throw UsageError("unknown export format '" + a.format + "' (long)");
    const fs::path input(a.input);
    std::string buf;
    std::string what;
    const std::string traj_header = "path,step,t,coord,value";
    const std::string field_header = "node,i,j,value";

    if (fs::is_directory(input)) {
        const RunSet set = load_runs(input);
        buf = traj_header + "\n";
        for (const auto& t : set.trajectories) export_trajectory(buf, t, t.path);
        what = std::to_string(set.trajectories.size()) + " trajectories";
    } else {
        std::ifstream in(input);
        if (!in) throw UsageError("cannot open '" + a.input + "'");
        std::string first;
        std::getline(in, first);
        if (!first.empty() && first.back() == '\r') first.pop_back();
        std::string header = first;
        if (!first.empty() && first.front() == '#') {
            std::getline(in, header);
            if (!header.empty() && header.back() == '\r') header.pop_back();
        }
        in.clear();
        in.seekg(0);
        if (header == traj_header) {
            export_long(in, traj_header, 4, buf);
            what = "long trajectory";
        } else if (header == field_header) {
            export_long(in, field_header, 3, buf);
            what = "long field";
        } else if (header.rfind("node,", 0) == 0) {
            const OperatorField field = read_field(in);
            const std::size_t n = field.dims();
            buf = field_header + "\n";
            for (std::size_t node = 0; node < field.size(); ++node) {
                const auto g = field.cdc(node);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        buf += std::to_string(node) + "," + std::to_string(i + 1) + "," + std::to_string(j + 1) + ",";
                        csv::append_double(buf, g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                        buf += '\n';
                    }
            }
            what = "field";
        } else if (header.rfind("step,t,", 0) == 0) {
            const Trajectory t = read_trajectory(in);
            buf = traj_header + "\n";
            export_trajectory(buf, t, a.path_index);
            what = "trajectory";
        } else if (header.rfind("path,step,t,", 0) == 0) {
            in.close();
            buf = traj_header + "\n";
            for (const auto& t : read_concat(input)) export_trajectory(buf, t, t.path);
            what = "concatenated trajectories";
        } else {
            throw UsageError("unrecognised input format in '" + a.input + "'");
        }
    }
    {
        fs::create_directories(parent_dir(a.out));
        std::ofstream out(a.out);
        out << buf;
        if (!out) throw Error("failed writing '" + a.out + "'");
    }
    std::cerr << "export: " << what << " -> " << a.out << "\n";
    Manifest m("export");
    m.set("input", a.input);
    m.set("output", a.out);
    m.set("format", a.format);
    m.set("path-index", a.path_index);
    m.write(parent_dir(a.out), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return kOk;
}

// ---------------------------------------------------------------- main

// Moves a --config file's entries in front of the command-line arguments
// so explicit flags, parsed later, win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    std::vector<std::string> rest;
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
            config = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config.empty()) return rest;
    const KeyValues kv = read_config(config);
    // The subcommand (first token) stays first.
    if (rest.empty() || rest.front().rfind("-", 0) == 0) {
        const std::string cmd = config_command(kv);
        if (cmd.empty()) throw UsageError("config file names no command; pass it explicitly");
        rest.insert(rest.begin(), cmd);
    }
    out.push_back(rest.front());
    for (const auto& [k, v] : kv)
        if (!is_metadata_key(k)) out.push_back("--" + k + "=" + v);
    out.insert(out.end(), rest.begin() + 1, rest.end());
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Simulate manifold diffusions from point clouds"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.failure_message(CLI::FailureMessage::help);
    app.footer("Every command also accepts --config FILE with key=value lines mirroring its flags.");

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "Sample a synthetic point cloud");
    sample->add_option("--manifold", sa.manifold, "sphere, torus or swiss-roll")->required();
    sample->add_option("--dim", sa.dim, "Sphere dimension d (ambient d+1)");
    sample->add_option("--radius", sa.radius, "Sphere radius");
    sample->add_option("--major", sa.major, "Torus major radius");
    sample->add_option("--minor", sa.minor, "Torus tube radius");
    sample->add_option("--t-lo", sa.t_lo, "Swiss roll angle lower bound");
    sample->add_option("--t-hi", sa.t_hi, "Swiss roll angle upper bound");
    sample->add_option("--height", sa.height, "Swiss roll height");
    sample->add_option("--n", sa.n, "Number of points")->required();
    sample->add_option("--seed", sa.seed, "Random seed");
    sample->add_option("-o,--output", sa.out, "Output cloud CSV")->required();

    BuildArgs ba;
    auto* build = app.add_subcommand("build", "Build the operator field of a cloud");
    build->add_option("cloud,--cloud", ba.cloud, "Input cloud CSV")->required();
    build->add_option("-o,--output", ba.out, "Output field CSV")->required();
    build->add_option("--bandwidth", ba.bandwidth, "Connectivity radius (default 1.5x the minimum connecting one)");
    build->add_option("--kernel", ba.kernel, "hard-cutoff or gaussian");
    build->add_option("--c", ba.c, "Scaling constant (default d+2)");
    build->add_option("--threads", ba.threads, "Worker threads (default IMD_THREADS or all cores)");

    SimulateArgs ma;
    auto* simulate = app.add_subcommand("simulate", "Integrate diffusion paths");
    simulate->add_option("--cloud", ma.cloud, "Input cloud CSV")->required();
    simulate->add_option("--field", ma.field, "Operator field CSV from build")->required();
    simulate->add_option("-o,--output", ma.out, "Output directory")->required();
    simulate->add_option("--drift", ma.drift, "none, vmf or quadratic");
    simulate->add_option("--kappa", ma.kappa, "vMF concentration");
    simulate->add_option("--mu-axis", ma.mu_axis, "vMF mean direction as a 1-based axis index");
    simulate->add_option("--z-star", ma.z_star, "Quadratic minimiser, comma separated");
    simulate->add_option("--beta", ma.beta, "Potential scale");
    simulate->add_option("--paths", ma.paths, "Paths per starting point");
    simulate->add_option("--starts", ma.starts, "Number of starting points (1 = first cloud point)");
    simulate->add_option("--steps", ma.steps, "Number of steps");
    simulate->add_option("--step", ma.step, "Step size");
    simulate->add_option("--speedup", ma.speedup, "Multiplier on the step size");
    simulate->add_flag("--drgd", ma.drgd, "Apply the denoising retraction after every step");
    simulate->add_option("--sigma", ma.sigma, "Score smoothing scale (absolute)");
    simulate->add_option("--sigma-rel", ma.sigma_rel, "Score smoothing scale relative to the data diameter");
    simulate->add_option("--knn", ma.knn, "Nodes averaged when lifting the field");
    simulate->add_option("--scheme", ma.scheme, "imd, cdc-only or ambient-noise");
    simulate->add_option("--seed", ma.seed, "Random seed");
    simulate->add_flag("--concat", ma.concat, "Write one concatenated file instead of one file per path");
    simulate->add_option("--threads", ma.threads, "Worker threads (default IMD_THREADS or all cores)");

    EvaluateArgs ea;
    auto* evaluate = app.add_subcommand("evaluate", "Compute metrics for a simulate output directory");
    evaluate->add_option("runs,--runs", ea.runs, "simulate output directory")->required();
    evaluate->add_option("--cloud", ea.cloud, "Cloud CSV (default: from the run manifest)");
    evaluate->add_option("-o,--output", ea.out, "Report JSON")->required();
    evaluate->add_option("--histogram", ea.histogram, "Histogram CSV for vMF runs");
    evaluate->add_option("--bins", ea.bins, "Histogram bins");
    evaluate->add_option("--metrics", ea.metrics, "auto, sphere or swiss-roll");
    evaluate->add_option("--drift", ea.drift, "Override the drift recorded in the run manifest");
    evaluate->add_option("--kappa", ea.kappa, "Override kappa");
    evaluate->add_option("--mu-axis", ea.mu_axis, "Override the mean direction axis");

    ExportArgs xa;
    auto* exp = app.add_subcommand("export", "Re-emit fields or trajectories in long format");
    exp->add_option("input,--input", xa.input, "Field CSV, trajectory CSV, long CSV or simulate directory")
        ->required();
    exp->add_option("-o,--output", xa.out, "Output CSV")->required();
    exp->add_option("--format", xa.format, "Output format (long)");
    exp->add_option("--path-index", xa.path_index, "Path number for a single trajectory file");

    std::string config_unused;  // consumed by expand_config; registered for --help
    for (auto* sub : {sample, build, simulate, evaluate, exp})
        sub->add_option("--config", config_unused, "key=value file; explicit flags take precedence");

    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    if (build->count() || simulate->count()) {
        const unsigned t = default_threads();
        if (ba.threads == 0) ba.threads = t;
        if (ma.threads == 0) ma.threads = t;
    }
    if (*sample) return cmd_sample(sa);
    if (*build) return cmd_build(ba);
    if (*simulate) return cmd_simulate(ma);
    if (*evaluate) return cmd_evaluate(ea);
    return cmd_export(xa);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConnectivityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kGraph;
    } catch (const RunDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDiverged;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
}
