#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "breedkit/error.hpp"

namespace breedkit::geodata {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2 &, const Point2 &) = default;
};

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    friend bool operator==(const Point3 &, const Point3 &) = default;
};

// Georeferencing shared by every layer of a plot computation. Origin is the
// lower-left corner; row 0 is the top (northernmost) row.
struct GridGeometry {
    std::size_t n_cols = 0;
    std::size_t n_rows = 0;
    double cell_size = 1.0;
    double origin_x = 0.0;
    double origin_y = 0.0;

    std::size_t cell_count() const { return n_cols * n_rows; }
    double cell_area() const { return cell_size * cell_size; }
    std::size_t index(std::size_t col, std::size_t row) const { return row * n_cols + col; }
    Point2 cell_center(std::size_t col, std::size_t row) const {
        return {origin_x + (static_cast<double>(col) + 0.5) * cell_size,
                origin_y + (static_cast<double>(n_rows - row) - 0.5) * cell_size};
    }
    Point2 cell_center(std::size_t idx) const { return cell_center(idx % n_cols, idx / n_cols); }

    friend bool operator==(const GridGeometry &, const GridGeometry &) = default;
};

// Throws GeometryMismatch unless both layers share georeferencing exactly.
void require_aligned(const GridGeometry &a, const GridGeometry &b, const std::string &what);

inline constexpr double kDefaultNodata = -9999.0;

class RasterGrid {
  public:
    RasterGrid() = default;
    // Throws InvalidInput when the value count or cell size is inconsistent.
    RasterGrid(GridGeometry geometry, double nodata, std::vector<double> values);
    // All cells set to `fill`.
    RasterGrid(GridGeometry geometry, double nodata, double fill);

    const GridGeometry &geometry() const { return geometry_; }
    std::size_t n_cols() const { return geometry_.n_cols; }
    std::size_t n_rows() const { return geometry_.n_rows; }
    double cell_size() const { return geometry_.cell_size; }
    double nodata() const { return nodata_; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    double operator[](std::size_t idx) const { return values_[idx]; }
    double &operator[](std::size_t idx) { return values_[idx]; }
    double at(std::size_t col, std::size_t row) const { return values_.at(geometry_.index(col, row)); }

    // NaN is always treated as missing, in addition to the sentinel.
    bool is_nodata(double v) const { return std::isnan(v) || v == nodata_; }
    bool defined(std::size_t idx) const { return !is_nodata(values_[idx]); }

    // A copy with the same georeferencing and every cell set to nodata.
    RasterGrid blank_like() const { return RasterGrid(geometry_, nodata_, nodata_); }

    friend bool operator==(const RasterGrid &, const RasterGrid &) = default;

  private:
    GridGeometry geometry_;
    double nodata_ = kDefaultNodata;
    std::vector<double> values_;
};

// Throw InvalidInput if a defined value lies outside [0, 1].
void validate_reflectance(const RasterGrid &grid, const std::string &name);
// Throw InvalidMask if a defined value is neither 0 nor 1.
void validate_mask(const RasterGrid &grid, const std::string &name);

// ESRI ASCII grid. Header keys are case-insensitive; NODATA_value is
// optional (defaults to -9999).
RasterGrid read_raster(std::istream &in, const std::string &source = "<stream>");
RasterGrid load_raster(const std::filesystem::path &path);
void write_raster(std::ostream &out, const RasterGrid &grid);
void save_raster(const std::filesystem::path &path, const RasterGrid &grid);

class PointCloud {
  public:
    PointCloud() = default;
    explicit PointCloud(std::vector<Point3> points) : points_(std::move(points)) {}

    std::span<const Point3> points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

  private:
    std::vector<Point3> points_;
};

// "x y z" per line, '#' comments and blank lines skipped. Extra columns are
// ignored.
PointCloud read_point_cloud(std::istream &in, const std::string &source = "<stream>");
PointCloud load_point_cloud(const std::filesystem::path &path);
void write_point_cloud(std::ostream &out, const PointCloud &cloud);

enum class Aggregator { min, max, mean };

// Bins points into cells of `cell_size` covering the snapped bounding box.
// Cells are half-open [x0, x0 + cell) on each axis. Empty cells hold nodata.
RasterGrid rasterize_elevation(const PointCloud &cloud, double cell_size, Aggregator aggregator,
                               double nodata = kDefaultNodata);

class PlotGeometry {
  public:
    // Validates >= 3 vertices, simplicity and positive area (InvalidInput).
    PlotGeometry(std::string plot_id, std::string germplasm_id, std::vector<Point2> vertices);

    const std::string &plot_id() const { return plot_id_; }
    const std::string &germplasm_id() const { return germplasm_id_; }
    std::span<const Point2> vertices() const { return vertices_; }
    double area() const;

    // Point-in-polygon, boundary counts as inside.
    bool contains(Point2 p) const;
    // Euclidean distance to the polygon boundary.
    double boundary_distance(Point2 p) const;

    double min_x() const { return min_x_; }
    double max_x() const { return max_x_; }
    double min_y() const { return min_y_; }
    double max_y() const { return max_y_; }

  private:
    std::string plot_id_;
    std::string germplasm_id_;
    std::vector<Point2> vertices_;
    double min_x_ = 0, max_x_ = 0, min_y_ = 0, max_y_ = 0;
};

// CSV with columns plot_id, germplasm_id, vertex_index, x, y. Plots are
// returned in order of first appearance; vertices sorted by vertex_index.
std::vector<PlotGeometry> read_plots(std::istream &in, const std::string &source = "<stream>");
std::vector<PlotGeometry> load_plots(const std::filesystem::path &path);

// Band outside a plot: points outside the polygon whose boundary distance is
// in (inner, outer].
class BufferRing {
  public:
    BufferRing(PlotGeometry plot, double inner, double outer);

    const PlotGeometry &plot() const { return plot_; }
    double inner() const { return inner_; }
    double outer() const { return outer_; }

    bool contains(Point2 p) const;

    double min_x() const { return plot_.min_x() - outer_; }
    double max_x() const { return plot_.max_x() + outer_; }
    double min_y() const { return plot_.min_y() - outer_; }
    double max_y() const { return plot_.max_y() + outer_; }

  private:
    PlotGeometry plot_;
    double inner_;
    double outer_;
};

inline BufferRing buffer_ring(const PlotGeometry &plot, double inner, double outer) {
    return BufferRing(plot, inner, outer);
}

// Plot interior united with its buffer ring: the weed-level footprint.
class PlotWithRing {
  public:
    explicit PlotWithRing(BufferRing ring) : ring_(std::move(ring)) {}
    bool contains(Point2 p) const { return ring_.plot().contains(p) || ring_.contains(p); }
    double min_x() const { return ring_.min_x(); }
    double max_x() const { return ring_.max_x(); }
    double min_y() const { return ring_.min_y(); }
    double max_y() const { return ring_.max_y(); }

  private:
    BufferRing ring_;
};

template <typename R>
concept Region = requires(const R &r, Point2 p) {
    { r.contains(p) } -> std::convertible_to<bool>;
    { r.min_x() } -> std::convertible_to<double>;
    { r.max_x() } -> std::convertible_to<double>;
    { r.min_y() } -> std::convertible_to<double>;
    { r.max_y() } -> std::convertible_to<double>;
};

// Indices of cells whose center lies in `region`, ascending. Only cells inside
// the region's bounding box are tested.
template <Region R>
std::vector<std::size_t> region_cells(const GridGeometry &g, const R &region) {
    std::vector<std::size_t> out;
    if (g.n_cols == 0 || g.n_rows == 0) return out;
    const double cs = g.cell_size;
    auto clamp_index = [](double v, std::size_t n) -> std::ptrdiff_t {
        if (v < 0) return 0;
        if (v > static_cast<double>(n - 1)) return static_cast<std::ptrdiff_t>(n - 1);
        return static_cast<std::ptrdiff_t>(v);
    };
    // Column/row ranges padded by one cell; the exact test below decides.
    const auto c0 = clamp_index(std::floor((region.min_x() - g.origin_x) / cs) - 1, g.n_cols);
    const auto c1 = clamp_index(std::ceil((region.max_x() - g.origin_x) / cs) + 1, g.n_cols);
    const double top = g.origin_y + static_cast<double>(g.n_rows) * cs;
    const auto r0 = clamp_index(std::floor((top - region.max_y()) / cs) - 1, g.n_rows);
    const auto r1 = clamp_index(std::ceil((top - region.min_y()) / cs) + 1, g.n_rows);
    for (auto r = r0; r <= r1; ++r) {
        for (auto c = c0; c <= c1; ++c) {
            const auto col = static_cast<std::size_t>(c);
            const auto row = static_cast<std::size_t>(r);
            if (region.contains(g.cell_center(col, row))) out.push_back(g.index(col, row));
        }
    }
    return out;
}

// Binary mask (1 inside, 0 outside) sharing the grid's georeferencing.
// Throws EmptyPlot if no cell center falls inside the region.
template <Region R>
RasterGrid region_mask(const RasterGrid &grid, const R &region) {
    auto cells = region_cells(grid.geometry(), region);
    if (cells.empty()) throw EmptyPlot("region covers no cell centers of the grid");
    RasterGrid mask(grid.geometry(), grid.nodata(), 0.0);
    for (auto idx : cells) mask[idx] = 1.0;
    return mask;
}

RasterGrid plot_mask(const RasterGrid &grid, const PlotGeometry &plot);

} // namespace breedkit::geodata
