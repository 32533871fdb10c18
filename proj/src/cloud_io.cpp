#include "imd/cloud_io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imd/csv.hpp"
#include "imd/error.hpp"

namespace imd {
namespace {

std::string spec_tokens(const ManifoldSpec& spec) {
    std::string out = "kind=" + kind_name(spec);
    if (const auto* s = std::get_if<SphereSpec>(&spec)) {
        out += " dim=" + std::to_string(s->dim) + " radius=" + csv::format_double(s->radius);
    } else if (const auto* t = std::get_if<TorusSpec>(&spec)) {
        out += " major=" + csv::format_double(t->major) + " minor=" + csv::format_double(t->minor);
    } else if (const auto* r = std::get_if<SwissRollSpec>(&spec)) {
        out += " t_lo=" + csv::format_double(r->t_lo) + " t_hi=" + csv::format_double(r->t_hi) +
               " height=" + csv::format_double(r->height);
    }
    return out;
}

struct Metadata {
    std::map<std::string, std::string, std::less<>> values;
    std::size_t line = 0;

    const std::string& get(const std::string& key) const {
        const auto it = values.find(key);
        if (it == values.end()) throw ParseError("cloud metadata lacks '" + key + "'", line);
        return it->second;
    }
    double number(const std::string& key) const { return csv::parse_double(get(key), line); }
};

ManifoldSpec parse_spec(const Metadata& meta) {
    const std::string& kind = meta.get("kind");
    if (kind == "sphere")
        return SphereSpec{static_cast<int>(csv::parse_int(meta.get("dim"), meta.line)),
                          meta.number("radius")};
    if (kind == "torus") return TorusSpec{meta.number("major"), meta.number("minor")};
    if (kind == "swiss-roll")
        return SwissRollSpec{meta.number("t_lo"), meta.number("t_hi"), meta.number("height")};
    throw ParseError("unknown manifold kind '" + kind + "'", meta.line);
}

}  // namespace

void write_cloud(std::ostream& out, const PointCloud& cloud) {
    std::string buf = "# imd-cloud intrinsic_dim=" + std::to_string(cloud.intrinsic_dim);
    if (cloud.spec) buf += " " + spec_tokens(*cloud.spec);
    buf += '\n';
    const Eigen::Index n = cloud.points.cols();
    const Eigen::Index lat = cloud.latent ? cloud.latent->cols() : 0;
    for (Eigen::Index k = 0; k < n; ++k) buf += (k ? ",x" : "x") + std::to_string(k + 1);
    for (Eigen::Index k = 0; k < lat; ++k) buf += ",lat" + std::to_string(k + 1);
    buf += '\n';
    out << buf;
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        buf.clear();
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k) buf += ',';
            csv::append_double(buf, cloud.points(i, k));
        }
        for (Eigen::Index k = 0; k < lat; ++k) {
            buf += ',';
            csv::append_double(buf, (*cloud.latent)(i, k));
        }
        buf += '\n';
        out << buf;
    }
}

PointCloud read_cloud(std::istream& in) {
    csv::LineReader reader(in);
    std::string line;
    Metadata meta;
    bool have_meta = false;

    // Comment lines, then the header.
    for (;;) {
        if (!reader.next(line)) throw ParseError("missing header", reader.line_number());
        if (line.empty()) continue;
        if (line.front() != '#') break;
        std::istringstream tokens(line.substr(1));
        std::string token;
        tokens >> token;
        if (token != "imd-cloud") continue;
        have_meta = true;
        meta.line = reader.line_number();
        while (tokens >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos) throw ParseError("bad metadata token '" + token + "'", meta.line);
            meta.values[token.substr(0, eq)] = token.substr(eq + 1);
        }
    }

    const std::size_t header_line = reader.line_number();
    std::size_t n_coord = 0;
    std::size_t n_latent = 0;
    for (const auto cell : csv::split(line)) {
        const auto name = csv::trim(cell);
        if (name.starts_with("x") && n_latent == 0 && name.substr(1) == std::to_string(n_coord + 1)) {
            ++n_coord;
        } else if (name.starts_with("lat") && name.substr(3) == std::to_string(n_latent + 1)) {
            ++n_latent;
        } else {
            throw ParseError("unexpected header column '" + std::string(name) + "'", header_line);
        }
    }
    if (n_coord == 0) throw ParseError("header has no coordinate columns", header_line);
    if (n_latent > 2) throw ParseError("at most two latent columns are supported", header_line);

    std::vector<double> values;
    std::size_t rows = 0;
    const std::size_t width = n_coord + n_latent;
    while (reader.next(line)) {
        if (line.empty() || line.front() == '#') continue;
        const auto cells = csv::split(line);
        if (cells.size() != width)
            throw ParseError("row " + std::to_string(rows) + " has " + std::to_string(cells.size()) +
                                 " cells, expected " + std::to_string(width),
                             reader.line_number());
        for (const auto cell : cells) {
            try {
                values.push_back(csv::parse_double(cell, reader.line_number()));
            } catch (const ParseError&) {
                throw ParseError("row " + std::to_string(rows) + ": not a number '" +
                                     std::string(csv::trim(cell)) + "'",
                                 reader.line_number());
            }
        }
        ++rows;
    }
    if (rows == 0) throw ParseError("cloud has no rows", reader.line_number());

    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_coord));
    if (n_latent) cloud.latent = Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_latent));
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = values.data() + i * width;
        for (std::size_t k = 0; k < n_coord; ++k)
            cloud.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
        for (std::size_t k = 0; k < n_latent; ++k)
            (*cloud.latent)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[n_coord + k];
    }

    cloud.intrinsic_dim = static_cast<int>(n_coord > 1 ? n_coord - 1 : 1);
    if (have_meta) {
        if (meta.values.contains("intrinsic_dim"))
            cloud.intrinsic_dim = static_cast<int>(csv::parse_int(meta.get("intrinsic_dim"), meta.line));
        if (meta.values.contains("kind")) cloud.spec = parse_spec(meta);
    }
    try {
        cloud.validate();
    } catch (const ParameterError& e) {
        throw ParseError(std::string("invalid cloud: ") + e.what(), header_line);
    }
    return cloud;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    write_cloud(out, cloud);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

PointCloud load_cloud(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_cloud(in);
}

}  // namespace imd
