#pragma once

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "evforecast/array.hpp"
#include "evforecast/csv.hpp"
#include "evforecast/ingest.hpp"

namespace evf {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kEdgeCutoffKm = 2.5;

/// Great-circle distance between two lat/lon points, in km, on a sphere of
/// radius 6371 km.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double deg = 0.017453292519943295;  // pi/180
    const double phi1 = lat1 * deg, phi2 = lat2 * deg;
    const double dphi = (lat2 - lat1) * deg;
    const double dlam = (lon2 - lon1) * deg;
    const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dlam / 2.0);
    const double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Station graph with distance-decayed edge weights. Symmetric, zero
/// diagonal; stations at or beyond the cutoff share no edge.
struct SpatialGraph {
    std::size_t n_nodes = 0;
    DenseArray adjacency;  // [N, N], weights exp(-h) in (exp(-cutoff), 1) or 0

    std::size_t edge_count() const {
        std::size_t e = 0;
        for (std::size_t i = 0; i < n_nodes; ++i)
            for (std::size_t j = i + 1; j < n_nodes; ++j)
                if (adjacency.at2(i, j) != 0.0) ++e;
        return e;
    }

    std::vector<std::size_t> isolated_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < n_nodes && !any; ++j)
                if (adjacency.at2(i, j) != 0.0) any = true;
            if (!any) out.push_back(i);
        }
        return out;
    }
};

inline SpatialGraph build_graph(const StationRegistry& registry, double cutoff_km = kEdgeCutoffKm) {
    const std::size_t n = registry.size();
    SpatialGraph g;
    g.n_nodes = n;
    g.adjacency = DenseArray::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = registry.stations[i];
            const auto& b = registry.stations[j];
            const double h = haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
            const double w = h < cutoff_km ? std::exp(-h) : 0.0;
            g.adjacency.at2(i, j) = w;
            g.adjacency.at2(j, i) = w;
        }
    }
    return g;
}

struct NormalizedAdjacency {
    DenseArray matrix;  // [N, N]
};

/// D~^{-1/2} (A + I) D~^{-1/2} with D~ the degree matrix of A + I. Entries
/// are computed as A~_ij / sqrt(d_i d_j), which keeps simple cases (equal
/// integer degrees) exact in floating point.
inline NormalizedAdjacency normalize_adjacency(const SpatialGraph& g) {
    const std::size_t n = g.n_nodes;
    DenseArray a_tilde = g.adjacency;
    for (std::size_t i = 0; i < n; ++i) a_tilde.at2(i, i) += 1.0;
    std::vector<double> degree(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a_tilde.at2(i, j);
        degree[i] = deg;
    }
    NormalizedAdjacency out{DenseArray::zeros({n, n})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.matrix.at2(i, j) = a_tilde.at2(i, j) / std::sqrt(degree[i] * degree[j]);
    return out;
}

/// Per-day H x W grids of cell-summed demand over the stations' bounding
/// box. Row 0 is the southernmost band, column 0 the westernmost.
struct RasterSeries {
    Date start_date{};
    std::size_t n_days = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> grids;  // [n_days, rows, cols]
    std::vector<std::pair<std::size_t, std::size_t>> cell_assignment;  // station -> (row, col)

    double& at(std::size_t day, std::size_t r, std::size_t c) {
        return grids[(day * rows + r) * cols + c];
    }
    double at(std::size_t day, std::size_t r, std::size_t c) const {
        return grids[(day * rows + r) * cols + c];
    }

    std::size_t n_cells() const { return rows * cols; }

    double day_total(std::size_t day) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_cells(); ++i) s += grids[day * n_cells() + i];
        return s;
    }

    /// As a [n_days, rows*cols] matrix (cell-major columns).
    DenseArray matrix() const { return DenseArray({n_days, n_cells()}, grids); }
};

inline RasterSeries build_raster(const StationRegistry& registry, const DemandPanel& panel,
                                 std::size_t rows = 5, std::size_t cols = 5) {
    if (rows < 1 || cols < 1)
        throw std::invalid_argument("build_raster: grid dimensions must be at least 1x1");
    if (registry.size() != panel.n_stations)
        throw std::invalid_argument("build_raster: registry size " + std::to_string(registry.size()) +
                                    " does not match panel stations " +
                                    std::to_string(panel.n_stations));
    double lat_min = registry.stations[0].latitude, lat_max = lat_min;
    double lon_min = registry.stations[0].longitude, lon_max = lon_min;
    for (const auto& s : registry.stations) {
        lat_min = std::min(lat_min, s.latitude);
        lat_max = std::max(lat_max, s.latitude);
        lon_min = std::min(lon_min, s.longitude);
        lon_max = std::max(lon_max, s.longitude);
    }
    // expand so stations on the max edge land inside the last cell
    const double lat_span = (lat_max - lat_min) + 1e-9;
    const double lon_span = (lon_max - lon_min) + 1e-9;

    RasterSeries raster;
    raster.start_date = panel.start_date;
    raster.n_days = panel.n_days;
    raster.rows = rows;
    raster.cols = cols;
    raster.grids.assign(panel.n_days * rows * cols, 0.0);
    raster.cell_assignment.reserve(registry.size());
    for (const auto& s : registry.stations) {
        auto r = std::size_t((s.latitude - lat_min) / lat_span * double(rows));
        auto c = std::size_t((s.longitude - lon_min) / lon_span * double(cols));
        r = std::min(r, rows - 1);
        c = std::min(c, cols - 1);
        raster.cell_assignment.emplace_back(r, c);
    }
    for (std::size_t d = 0; d < panel.n_days; ++d)
        for (std::size_t s = 0; s < panel.n_stations; ++s) {
            auto [r, c] = raster.cell_assignment[s];
            raster.at(d, r, c) += panel.at(d, s);
        }
    return raster;
}

// ---- serialization ----

/// Undirected edge list (i, j, weight), i < j, zero-weight pairs omitted.
inline void write_edge_list_csv(std::ostream& out, const SpatialGraph& g) {
    out << "i,j,weight\n";
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        for (std::size_t j = i + 1; j < g.n_nodes; ++j)
            if (g.adjacency.at2(i, j) != 0.0)
                out << i << ',' << j << ',' << fmt_g17(g.adjacency.at2(i, j)) << '\n';
}

inline void write_matrix_csv(std::ostream& out, const DenseArray& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << fmt_g17(m.at2(i, j));
        }
        out << '\n';
    }
}

inline DenseArray read_matrix_csv(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> row;
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    while (reader.next_row(row)) {
        if (row.size() == 1 && row[0].empty()) continue;
        if (cols == 0) cols = row.size();
        if (row.size() != cols) throw std::runtime_error("matrix csv: ragged row");
        for (const auto& f : row) values.push_back(std::stod(f));
        ++rows;
    }
    return DenseArray({rows, cols}, std::move(values));
}

/// One row per day: date, then rows*cols cell values (row-major).
inline void write_raster_csv(std::ostream& out, const RasterSeries& r) {
    out << "date";
    for (std::size_t i = 0; i < r.rows; ++i)
        for (std::size_t j = 0; j < r.cols; ++j) out << ",cell_" << i << '_' << j;
    out << '\n';
    for (std::size_t d = 0; d < r.n_days; ++d) {
        out << format_date(r.start_date + std::chrono::days(long(d)));
        for (std::size_t i = 0; i < r.n_cells(); ++i)
            out << ',' << fmt_g17(r.grids[d * r.n_cells() + i]);
        out << '\n';
    }
}

inline void write_cell_assignment_csv(std::ostream& out, const RasterSeries& r,
                                      const StationRegistry& reg) {
    out << "station_id,row,col\n";
    for (std::size_t s = 0; s < reg.size(); ++s)
        out << csv_quote(reg.stations[s].id) << ',' << r.cell_assignment[s].first << ','
            << r.cell_assignment[s].second << '\n';
}

inline RasterSeries read_raster_csv(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next_row(row) || row.size() < 2 || row[0] != "date")
        throw std::runtime_error("raster csv: bad header");
    std::size_t rows = 0, cols = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        unsigned r = 0, c = 0;
        if (std::sscanf(row[i].c_str(), "cell_%u_%u", &r, &c) != 2)
            throw std::runtime_error("raster csv: bad cell column '" + row[i] + "'");
        rows = std::max<std::size_t>(rows, r + 1);
        cols = std::max<std::size_t>(cols, c + 1);
    }
    RasterSeries out;
    out.rows = rows;
    out.cols = cols;
    bool first = true;
    std::size_t n_cells = rows * cols;
    while (reader.next_row(row)) {
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != n_cells + 1) throw std::runtime_error("raster csv: ragged row");
        auto day = parse_date(row[0]);
        if (!day) throw std::runtime_error("raster csv: bad date '" + row[0] + "'");
        if (first) {
            out.start_date = *day;
            first = false;
        }
        for (std::size_t i = 0; i < n_cells; ++i) out.grids.push_back(std::stod(row[1 + i]));
        ++out.n_days;
    }
    return out;
}

}  // namespace evf
