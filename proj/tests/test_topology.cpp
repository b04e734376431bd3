#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "evforecast/topology.hpp"

using namespace evf;

namespace {

/// Independent oracle: spherical law of cosines on the same 6371 km sphere.
double law_of_cosines_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double deg = 0.017453292519943295;
    double phi1 = lat1 * deg, phi2 = lat2 * deg, dlam = (lon2 - lon1) * deg;
    double c = std::sin(phi1) * std::sin(phi2) + std::cos(phi1) * std::cos(phi2) * std::cos(dlam);
    return 6371.0 * std::acos(std::min(1.0, std::max(-1.0, c)));
}

/// Independent oracle: the normalization formula evaluated literally with
/// explicit matrix products.
DenseArray brute_force_normalize(const DenseArray& a) {
    std::size_t n = a.rows();
    DenseArray a_tilde = a;
    for (std::size_t i = 0; i < n; ++i) a_tilde.at2(i, i) += 1.0;
    DenseArray d_inv_sqrt = DenseArray::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a_tilde.at2(i, j);
        d_inv_sqrt.at2(i, i) = 1.0 / std::sqrt(deg);
    }
    DenseArray tmp = DenseArray::zeros({n, n});
    matmul_nn_acc(d_inv_sqrt.data.data(), a_tilde.data.data(), tmp.data.data(), n, n, n);
    DenseArray out = DenseArray::zeros({n, n});
    matmul_nn_acc(tmp.data.data(), d_inv_sqrt.data.data(), out.data.data(), n, n, n);
    return out;
}

StationRegistry registry_at(std::vector<std::pair<double, double>> coords) {
    StationRegistry reg;
    for (std::size_t i = 0; i < coords.size(); ++i)
        reg.stations.push_back({"S" + std::to_string(i), coords[i].first, coords[i].second});
    return reg;
}

DemandPanel panel_of(std::size_t days, std::size_t stations, std::vector<double> values) {
    DemandPanel p;
    p.start_date = *make_date(2020, 1, 1);
    p.n_days = days;
    p.n_stations = stations;
    p.values = std::move(values);
    return p;
}

}  // namespace

TEST_CASE("haversine: identical points give zero") {
    CHECK(haversine_km(37.44, -122.14, 37.44, -122.14) == 0.0);
}

TEST_CASE("haversine: antipodal equator arc is pi times the radius") {
    const double expected = M_PI * 6371.0;  // 20015.086796...
    CHECK(haversine_km(0.0, 0.0, 0.0, 180.0) == Catch::Approx(expected).margin(1e-6));
}

TEST_CASE("haversine: agrees with the law-of-cosines oracle") {
    CHECK(haversine_km(37.4449, -122.1613, 37.4289, -122.1390) ==
          Catch::Approx(law_of_cosines_km(37.4449, -122.1613, 37.4289, -122.1390)).margin(1e-6));

    std::mt19937 gen(7);
    std::uniform_real_distribution<double> lat(-80.0, 80.0), lon(-180.0, 180.0);
    for (int i = 0; i < 50; ++i) {
        double a1 = lat(gen), o1 = lon(gen), a2 = lat(gen), o2 = lon(gen);
        // law of cosines is ill-conditioned for near-zero arcs; skip them
        double d = haversine_km(a1, o1, a2, o2);
        if (d < 1.0) continue;
        CHECK(d == Catch::Approx(law_of_cosines_km(a1, o1, a2, o2)).margin(1e-6));
    }
}

TEST_CASE("haversine properties: symmetry and triangle inequality") {
    std::mt19937 gen(11);
    std::uniform_real_distribution<double> lat(-85.0, 85.0), lon(-180.0, 180.0);
    for (int i = 0; i < 200; ++i) {
        double a1 = lat(gen), o1 = lon(gen), a2 = lat(gen), o2 = lon(gen), a3 = lat(gen),
               o3 = lon(gen);
        double ab = haversine_km(a1, o1, a2, o2);
        double ba = haversine_km(a2, o2, a1, o1);
        CHECK(ab == ba);
        CHECK(haversine_km(a1, o1, a1, o1) == 0.0);
        double ac = haversine_km(a1, o1, a3, o3);
        double cb = haversine_km(a3, o3, a2, o2);
        CHECK(ab <= ac + cb + 1e-9);
    }
}

TEST_CASE("build_graph: 1 km apart gives weight exp(-1)") {
    // move ~1 km north: 1 km / 6371 km in radians of latitude
    double dlat = (1.0 / 6371.0) * (180.0 / M_PI);
    auto reg = registry_at({{37.0, -122.0}, {37.0 + dlat, -122.0}});
    SpatialGraph g = build_graph(reg);
    CHECK(g.adjacency.at2(0, 1) == Catch::Approx(std::exp(-1.0)).margin(1e-9));
    CHECK(g.adjacency.at2(1, 0) == g.adjacency.at2(0, 1));
    CHECK(g.adjacency.at2(0, 0) == 0.0);
    CHECK(g.edge_count() == 1);
}

TEST_CASE("build_graph: the cutoff is strict") {
    double dlat = (2.5 / 6371.0) * (180.0 / M_PI);
    auto reg = registry_at({{37.0, -122.0}, {37.0 + dlat, -122.0}});
    double h = haversine_km(37.0, -122.0, 37.0 + dlat, -122.0);
    CHECK(h == Catch::Approx(2.5).margin(1e-9));
    // distance exactly equal to the cutoff keeps no edge (h < cutoff, not <=)
    SpatialGraph at_cutoff = build_graph(reg, h);
    CHECK(at_cutoff.adjacency.at2(0, 1) == 0.0);
    CHECK(at_cutoff.isolated_nodes().size() == 2);
    SpatialGraph below_cutoff = build_graph(reg, std::nextafter(h, 1e9));
    CHECK(below_cutoff.adjacency.at2(0, 1) == Catch::Approx(std::exp(-h)).margin(1e-12));
    // stations well beyond 2.5 km at default cutoff: no edges at all
    auto far = registry_at({{37.0, -122.0}, {37.1, -122.0}});  // ~11 km
    CHECK(build_graph(far).edge_count() == 0);
}

TEST_CASE("build_graph: single station gives a 1x1 zero matrix") {
    auto reg = registry_at({{37.0, -122.0}});
    SpatialGraph g = build_graph(reg);
    REQUIRE(g.adjacency.shape == Shape{1, 1});
    CHECK(g.adjacency.data[0] == 0.0);
}

TEST_CASE("build_graph properties: symmetric, zero diagonal, weights in range") {
    std::mt19937 gen(3);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    std::vector<std::pair<double, double>> coords;
    for (int i = 0; i < 12; ++i) coords.push_back({37.4 + jitter(gen), -122.1 + jitter(gen)});
    SpatialGraph g = build_graph(registry_at(coords));
    const double floor = std::exp(-2.5);
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        CHECK(g.adjacency.at2(i, i) == 0.0);
        for (std::size_t j = 0; j < g.n_nodes; ++j) {
            CHECK(g.adjacency.at2(i, j) == g.adjacency.at2(j, i));
            double w = g.adjacency.at2(i, j);
            CHECK((w == 0.0 || (w > floor && w < 1.0)));
        }
    }
}

TEST_CASE("normalize_adjacency: zero matrix maps to identity") {
    SpatialGraph g{2, DenseArray::zeros({2, 2})};
    auto norm = normalize_adjacency(g);
    CHECK(norm.matrix.data == DenseArray::identity(2).data);
}

TEST_CASE("normalize_adjacency: hand-computed 2x2 case") {
    SpatialGraph g{2, DenseArray({2, 2}, {0.0, 1.0, 1.0, 0.0})};
    auto norm = normalize_adjacency(g);
    for (double v : norm.matrix.data) CHECK(v == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("normalize_adjacency: matches the brute-force formula on random graphs") {
    std::mt19937 gen(21);
    std::uniform_real_distribution<double> weight(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 1 + gen() % 8;
        SpatialGraph g{n, DenseArray::zeros({n, n})};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double w = weight(gen) < 0.4 ? 0.0 : weight(gen) * 0.999;
                g.adjacency.at2(i, j) = w;
                g.adjacency.at2(j, i) = w;
            }
        auto norm = normalize_adjacency(g);
        DenseArray oracle = brute_force_normalize(g.adjacency);
        for (std::size_t k = 0; k < oracle.size(); ++k)
            CHECK(norm.matrix.data[k] == Catch::Approx(oracle.data[k]).margin(1e-12));
    }
}

TEST_CASE("normalize_adjacency: permutation equivariance") {
    std::mt19937 gen(33);
    std::uniform_real_distribution<double> weight(0.0, 0.999);
    const std::size_t n = 6;
    SpatialGraph g{n, DenseArray::zeros({n, n})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double w = weight(gen);
            g.adjacency.at2(i, j) = w;
            g.adjacency.at2(j, i) = w;
        }
    std::vector<std::size_t> perm{3, 1, 5, 0, 4, 2};
    SpatialGraph gp{n, DenseArray::zeros({n, n})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            gp.adjacency.at2(i, j) = g.adjacency.at2(perm[i], perm[j]);
    auto norm = normalize_adjacency(g);
    auto normp = normalize_adjacency(gp);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            CHECK(normp.matrix.at2(i, j) ==
                  Catch::Approx(norm.matrix.at2(perm[i], perm[j])).margin(1e-12));
}

TEST_CASE("raster: single station holds the full demand") {
    auto reg = registry_at({{37.0, -122.0}});
    auto p = panel_of(3, 1, {1.0, 2.0, 3.0});
    RasterSeries r = build_raster(reg, p, 5, 5);
    for (std::size_t d = 0; d < 3; ++d) CHECK(r.day_total(d) == p.day_total(d));
    CHECK(r.cell_assignment[0] == std::make_pair(std::size_t(0), std::size_t(0)));
}

TEST_CASE("raster: bounding-box corners land in corner cells") {
    auto reg = registry_at({{37.0, -122.3}, {37.2, -122.0}});
    auto p = panel_of(1, 2, {1.0, 2.0});
    RasterSeries r = build_raster(reg, p, 2, 2);
    CHECK(r.cell_assignment[0] == std::make_pair(std::size_t(0), std::size_t(0)));
    CHECK(r.cell_assignment[1] == std::make_pair(std::size_t(1), std::size_t(1)));
    CHECK(r.at(0, 0, 0) == 1.0);
    CHECK(r.at(0, 1, 1) == 2.0);
}

TEST_CASE("raster: per-day conservation on random panels") {
    std::mt19937 gen(13);
    std::uniform_real_distribution<double> coord(-0.05, 0.05), energy(0.0, 30.0);
    std::vector<std::pair<double, double>> coords;
    for (int i = 0; i < 9; ++i) coords.push_back({37.4 + coord(gen), -122.1 + coord(gen)});
    auto reg = registry_at(coords);
    std::vector<double> values;
    for (int i = 0; i < 9 * 20; ++i) values.push_back(energy(gen));
    auto p = panel_of(20, 9, values);
    RasterSeries r = build_raster(reg, p, 5, 5);
    for (std::size_t d = 0; d < p.n_days; ++d)
        CHECK(r.day_total(d) == Catch::Approx(p.day_total(d)).epsilon(1e-9));
}

TEST_CASE("raster: invalid grid dimensions rejected") {
    auto reg = registry_at({{37.0, -122.0}});
    auto p = panel_of(1, 1, {1.0});
    CHECK_THROWS(build_raster(reg, p, 0, 5));
}

TEST_CASE("edge list and matrix serialization round-trip") {
    double dlat = (1.0 / 6371.0) * (180.0 / M_PI);
    auto reg = registry_at({{37.0, -122.0}, {37.0 + dlat, -122.0}, {38.5, -121.0}});
    SpatialGraph g = build_graph(reg);
    std::stringstream edges;
    write_edge_list_csv(edges, g);
    std::string line;
    std::getline(edges, line);
    CHECK(line == "i,j,weight");
    std::getline(edges, line);
    CHECK(line.substr(0, 4) == "0,1,");

    std::stringstream mat;
    write_matrix_csv(mat, g.adjacency);
    DenseArray back = read_matrix_csv(mat);
    CHECK(back.shape == g.adjacency.shape);
    CHECK(back.data == g.adjacency.data);
}

TEST_CASE("raster csv round-trip") {
    auto reg = registry_at({{37.0, -122.3}, {37.2, -122.0}});
    auto p = panel_of(2, 2, {1.0, 2.0, 3.5, 0.25});
    RasterSeries r = build_raster(reg, p, 2, 3);
    std::stringstream ss;
    write_raster_csv(ss, r);
    RasterSeries back = read_raster_csv(ss);
    CHECK(back.rows == 2);
    CHECK(back.cols == 3);
    CHECK(back.n_days == 2);
    CHECK(back.grids == r.grids);
    CHECK(back.start_date == r.start_date);
}
