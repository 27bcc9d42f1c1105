#include "breedkit/geodata.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace breedkit::geodata {

void require_aligned(const GridGeometry &a, const GridGeometry &b, const std::string &what) {
    if (a == b) return;
    std::ostringstream msg;
    msg << what << ": grids differ (" << a.n_cols << "x" << a.n_rows << " @" << format_double(a.cell_size) << " ("
        << format_double(a.origin_x) << "," << format_double(a.origin_y) << ") vs " << b.n_cols << "x" << b.n_rows
        << " @" << format_double(b.cell_size) << " (" << format_double(b.origin_x) << ","
        << format_double(b.origin_y) << "))";
    throw GeometryMismatch(msg.str());
}

RasterGrid::RasterGrid(GridGeometry geometry, double nodata, std::vector<double> values)
    : geometry_(geometry), nodata_(nodata), values_(std::move(values)) {
    if (!(geometry_.cell_size > 0.0) || !std::isfinite(geometry_.cell_size))
        throw InvalidInput("cell size must be positive, got " + format_double(geometry_.cell_size));
    if (values_.size() != geometry_.cell_count())
        throw InvalidInput("raster has " + std::to_string(values_.size()) + " values for " +
                           std::to_string(geometry_.n_cols) + "x" + std::to_string(geometry_.n_rows) + " cells");
}

RasterGrid::RasterGrid(GridGeometry geometry, double nodata, double fill)
    : RasterGrid(geometry, nodata, std::vector<double>(geometry.cell_count(), fill)) {}

void validate_reflectance(const RasterGrid &grid, const std::string &name) {
    for (std::size_t i = 0; i < grid.values().size(); ++i) {
        double v = grid[i];
        if (grid.is_nodata(v)) continue;
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidInput(name + ": reflectance " + format_double(v) + " outside [0,1] at cell " +
                               std::to_string(i));
    }
}

void validate_mask(const RasterGrid &grid, const std::string &name) {
    for (std::size_t i = 0; i < grid.values().size(); ++i) {
        double v = grid[i];
        if (grid.is_nodata(v) || v == 0.0 || v == 1.0) continue;
        throw InvalidMask(name + ": non-binary value " + format_double(v) + " at cell " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// ASCII grid

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace

RasterGrid read_raster(std::istream &in, const std::string &source) {
    auto fail = [&](std::size_t line, const std::string &msg) {
        return ParseError(source + ":" + std::to_string(line) + ": " + msg);
    };
    std::map<std::string, double> header;
    std::string line;
    std::size_t line_no = 0;
    std::optional<std::string> pending; // first data line, already read
    std::size_t pending_line = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (parse_double(tokens[0])) {
            pending = line;
            pending_line = line_no;
            break;
        }
        if (tokens.size() != 2) throw fail(line_no, "malformed header line '" + line + "'");
        auto key = to_lower(tokens[0]);
        auto value = parse_double(tokens[1]);
        if (!value) throw fail(line_no, "non-numeric header value for '" + std::string(tokens[0]) + "'");
        static const char *known[] = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter",
                                      "yllcenter", "cellsize", "nodata_value"};
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw fail(line_no, "unknown header key '" + std::string(tokens[0]) + "'");
        if (!header.emplace(key, *value).second) throw fail(line_no, "duplicate header key '" + key + "'");
    }
    auto require = [&](const std::string &key) {
        auto it = header.find(key);
        if (it == header.end()) throw fail(line_no, "missing header key '" + key + "'");
        return it->second;
    };
    auto count = [&](const std::string &key) {
        double v = require(key);
        if (!(v >= 1.0) || v != std::floor(v) || v > 1e9)
            throw fail(line_no, key + " must be a positive integer");
        return static_cast<std::size_t>(v);
    };
    GridGeometry g;
    g.n_cols = count("ncols");
    g.n_rows = count("nrows");
    g.cell_size = require("cellsize");
    if (!(g.cell_size > 0.0)) throw fail(line_no, "cellsize must be positive");
    if (header.count("xllcorner")) {
        g.origin_x = header["xllcorner"];
    } else {
        g.origin_x = require("xllcenter") - 0.5 * g.cell_size;
    }
    if (header.count("yllcorner")) {
        g.origin_y = header["yllcorner"];
    } else {
        g.origin_y = require("yllcenter") - 0.5 * g.cell_size;
    }
    double nodata = header.count("nodata_value") ? header["nodata_value"] : kDefaultNodata;

    std::vector<double> values;
    values.reserve(g.cell_count());
    std::size_t rows = 0;
    auto consume = [&](const std::string &text, std::size_t at) {
        auto tokens = split_ws(text);
        if (tokens.empty()) return;
        if (rows == g.n_rows) throw fail(at, "more than nrows=" + std::to_string(g.n_rows) + " data rows");
        if (tokens.size() != g.n_cols)
            throw fail(at, "expected " + std::to_string(g.n_cols) + " values, found " + std::to_string(tokens.size()));
        for (auto tok : tokens) {
            auto v = parse_double(tok);
            if (!v) throw fail(at, "non-numeric cell '" + std::string(tok) + "'");
            values.push_back(*v);
        }
        ++rows;
    };
    if (pending) consume(*pending, pending_line);
    line_no = pending ? pending_line : line_no;
    while (std::getline(in, line)) {
        ++line_no;
        consume(line, line_no);
    }
    if (rows != g.n_rows)
        throw fail(line_no, "expected " + std::to_string(g.n_rows) + " data rows, found " + std::to_string(rows));
    return RasterGrid(g, nodata, std::move(values));
}

RasterGrid load_raster(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open raster " + path.string());
    return read_raster(in, path.string());
}

void write_raster(std::ostream &out, const RasterGrid &grid) {
    const auto &g = grid.geometry();
    out << "ncols " << g.n_cols << '\n'
        << "nrows " << g.n_rows << '\n'
        << "xllcorner " << format_double(g.origin_x) << '\n'
        << "yllcorner " << format_double(g.origin_y) << '\n'
        << "cellsize " << format_double(g.cell_size) << '\n'
        << "NODATA_value " << format_double(grid.nodata()) << '\n';
    for (std::size_t r = 0; r < g.n_rows; ++r) {
        for (std::size_t c = 0; c < g.n_cols; ++c) {
            if (c) out << ' ';
            out << format_double(grid.at(c, r));
        }
        out << '\n';
    }
}

void save_raster(const std::filesystem::path &path, const RasterGrid &grid) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write raster " + path.string());
    write_raster(out, grid);
}

// ---------------------------------------------------------------------------
// Point clouds

PointCloud read_point_cloud(std::istream &in, const std::string &source) {
    std::vector<Point3> points;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        auto tokens = split_ws(body);
        if (tokens.size() < 3)
            throw ParseError(source + ":" + std::to_string(line_no) + ": expected 'x y z', found " +
                             std::to_string(tokens.size()) + " field(s)");
        double xyz[3];
        for (int k = 0; k < 3; ++k) {
            auto v = parse_double(tokens[k]);
            if (!v) throw ParseError(source + ":" + std::to_string(line_no) + ": non-numeric coordinate '" +
                                     std::string(tokens[k]) + "'");
            xyz[k] = *v;
        }
        points.push_back({xyz[0], xyz[1], xyz[2]});
    }
    if (points.empty()) throw EmptyInput(source + ": point cloud has no points");
    return PointCloud(std::move(points));
}

PointCloud load_point_cloud(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open point cloud " + path.string());
    return read_point_cloud(in, path.string());
}

void write_point_cloud(std::ostream &out, const PointCloud &cloud) {
    for (const auto &p : cloud.points())
        out << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
}

namespace {

// Lowest multiple of `cell` that is <= v.
double snap_down(double v, double cell) {
    double o = std::floor(v / cell) * cell;
    while (o > v) o -= cell;
    return o;
}

// Index i with origin + i*cell <= v < origin + (i+1)*cell.
std::size_t bin_index(double v, double origin, double cell) {
    double f = std::floor((v - origin) / cell);
    auto i = static_cast<std::ptrdiff_t>(std::max(0.0, f));
    while (i > 0 && origin + static_cast<double>(i) * cell > v) --i;
    while (origin + static_cast<double>(i + 1) * cell <= v) ++i;
    return static_cast<std::size_t>(i);
}

} // namespace

RasterGrid rasterize_elevation(const PointCloud &cloud, double cell_size, Aggregator aggregator, double nodata) {
    if (cloud.empty()) throw EmptyInput("rasterize_elevation: empty point cloud");
    if (!(cell_size > 0.0) || !std::isfinite(cell_size))
        throw InvalidInput("rasterize_elevation: cell size must be positive");
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto &p = cloud.points()[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw InvalidInput("rasterize_elevation: non-finite point at index " + std::to_string(i));
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
    }
    const double ox = snap_down(min_x, cell_size);
    const double oy = snap_down(min_y, cell_size);

    struct Binned {
        std::size_t col, row_from_bottom;
        double z;
    };
    std::vector<Binned> bins;
    bins.reserve(cloud.size());
    std::size_t n_cols = 0, n_rows = 0;
    for (const auto &p : cloud.points()) {
        Binned b{bin_index(p.x, ox, cell_size), bin_index(p.y, oy, cell_size), p.z};
        n_cols = std::max(n_cols, b.col + 1);
        n_rows = std::max(n_rows, b.row_from_bottom + 1);
        bins.push_back(b);
    }
    GridGeometry g{n_cols, n_rows, cell_size, ox, oy};
    // Sorting by (cell, z) makes every aggregate independent of input order.
    std::vector<std::pair<std::size_t, double>> keyed;
    keyed.reserve(bins.size());
    for (const auto &b : bins) keyed.emplace_back(g.index(b.col, n_rows - 1 - b.row_from_bottom), b.z);
    std::sort(keyed.begin(), keyed.end());

    RasterGrid grid(g, nodata, nodata);
    for (std::size_t i = 0; i < keyed.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < keyed.size() && keyed[j].first == keyed[i].first) sum += keyed[j++].second;
        double v = 0.0;
        switch (aggregator) {
        case Aggregator::min: v = keyed[i].second; break;
        case Aggregator::max: v = keyed[j - 1].second; break;
        case Aggregator::mean: v = sum / static_cast<double>(j - i); break;
        }
        grid[keyed[i].first] = v;
        i = j;
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Plot polygons

namespace {

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point2 a, Point2 b, Point2 p) {
    return cross(a, b, p) == 0.0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

int sign(double v) { return (v > 0) - (v < 0); }

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
    int d1 = sign(cross(c, d, a)), d2 = sign(cross(c, d, b));
    int d3 = sign(cross(a, b, c)), d4 = sign(cross(a, b, d));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    return on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d);
}

double segment_distance(Point2 a, Point2 b, Point2 p) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

} // namespace

PlotGeometry::PlotGeometry(std::string plot_id, std::string germplasm_id, std::vector<Point2> vertices)
    : plot_id_(std::move(plot_id)), germplasm_id_(std::move(germplasm_id)), vertices_(std::move(vertices)) {
    if (vertices_.size() > 1 && vertices_.front() == vertices_.back()) vertices_.pop_back();
    const std::string who = "plot '" + plot_id_ + "'";
    if (vertices_.size() < 3) throw InvalidInput(who + ": polygon needs at least 3 vertices");
    for (const auto &v : vertices_)
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw InvalidInput(who + ": non-finite vertex");
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
        Point2 a = vertices_[i], b = vertices_[(i + 1) % n];
        if (a == b) throw InvalidInput(who + ": repeated vertex " + std::to_string(i));
        for (std::size_t j = i + 1; j < n; ++j) {
            Point2 c = vertices_[j], d = vertices_[(j + 1) % n];
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) {
                // Adjacent edges share one vertex; they may only meet there.
                Point2 shared = j == i + 1 ? b : a;
                Point2 far_ab = j == i + 1 ? a : b;
                Point2 far_cd = j == i + 1 ? d : c;
                if (cross(shared, far_ab, far_cd) == 0.0 &&
                    (far_ab.x - shared.x) * (far_cd.x - shared.x) + (far_ab.y - shared.y) * (far_cd.y - shared.y) > 0)
                    throw InvalidInput(who + ": polygon folds back on itself");
                continue;
            }
            if (segments_intersect(a, b, c, d)) throw InvalidInput(who + ": polygon is self-intersecting");
        }
    }
    if (!(area() > 0.0)) throw InvalidInput(who + ": polygon has zero area");
    min_x_ = max_x_ = vertices_[0].x;
    min_y_ = max_y_ = vertices_[0].y;
    for (const auto &v : vertices_) {
        min_x_ = std::min(min_x_, v.x);
        max_x_ = std::max(max_x_, v.x);
        min_y_ = std::min(min_y_, v.y);
        max_y_ = std::max(max_y_, v.y);
    }
}

double PlotGeometry::area() const {
    double twice = 0.0;
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto &a = vertices_[i];
        const auto &b = vertices_[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return std::fabs(twice) / 2.0;
}

bool PlotGeometry::contains(Point2 p) const {
    if (p.x < min_x_ || p.x > max_x_ || p.y < min_y_ || p.y > max_y_) return false;
    const std::size_t n = vertices_.size();
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto &a = vertices_[i];
        const auto &b = vertices_[j];
        if (on_segment(a, b, p)) return true;
        if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
    }
    return inside;
}

double PlotGeometry::boundary_distance(Point2 p) const {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) best = std::min(best, segment_distance(vertices_[i], vertices_[(i + 1) % n], p));
    return best;
}

std::vector<PlotGeometry> read_plots(std::istream &in, const std::string &source) {
    auto table = csv::Table::read(in, source);
    struct Pending {
        std::string germplasm;
        std::map<long long, Point2> vertices;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Pending> byId;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        auto id = std::string(trim(table.cell(r, "plot_id")));
        auto germ = std::string(trim(table.cell(r, "germplasm_id")));
        auto idx = parse_integer(table.cell(r, "vertex_index"));
        if (id.empty()) throw ParseError(source + ":" + std::to_string(table.line_of(r)) + ": empty plot_id");
        if (!idx) throw ParseError(source + ":" + std::to_string(table.line_of(r)) + ": bad vertex_index");
        Point2 p{table.required_number(r, "x"), table.required_number(r, "y")};
        auto [it, fresh] = byId.try_emplace(id);
        if (fresh) {
            order.push_back(id);
            it->second.germplasm = germ;
        } else if (it->second.germplasm != germ) {
            throw ParseError(source + ":" + std::to_string(table.line_of(r)) + ": plot '" + id +
                             "' has conflicting germplasm_id");
        }
        if (!it->second.vertices.emplace(*idx, p).second)
            throw ParseError(source + ":" + std::to_string(table.line_of(r)) + ": duplicate vertex_index for plot '" +
                             id + "'");
    }
    std::vector<PlotGeometry> plots;
    plots.reserve(order.size());
    for (const auto &id : order) {
        auto &pending = byId[id];
        std::vector<Point2> verts;
        for (const auto &[_, p] : pending.vertices) verts.push_back(p);
        plots.emplace_back(id, pending.germplasm, std::move(verts));
    }
    return plots;
}

std::vector<PlotGeometry> load_plots(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plots " + path.string());
    return read_plots(in, path.string());
}

BufferRing::BufferRing(PlotGeometry plot, double inner, double outer)
    : plot_(std::move(plot)), inner_(inner), outer_(outer) {
    if (!(inner >= 0.0) || !(inner < outer) || !std::isfinite(outer))
        throw InvalidInput("buffer ring requires 0 <= inner < outer, got (" + format_double(inner) + ", " +
                           format_double(outer) + ")");
}

bool BufferRing::contains(Point2 p) const {
    if (p.x < min_x() || p.x > max_x() || p.y < min_y() || p.y > max_y()) return false;
    if (plot_.contains(p)) return false;
    const double d = plot_.boundary_distance(p);
    return d > inner_ && d <= outer_;
}

RasterGrid plot_mask(const RasterGrid &grid, const PlotGeometry &plot) {
    try {
        return region_mask(grid, plot);
    } catch (const EmptyPlot &) {
        throw EmptyPlot("plot '" + plot.plot_id() + "' covers no cell centers of the grid");
    }
}

} // namespace breedkit::geodata
