#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evforecast/array.hpp"
#include "evforecast/csv.hpp"
#include "evforecast/dates.hpp"

namespace evf {

struct ChargingTransaction {
    std::string station_id;
    double latitude = 0.0;
    double longitude = 0.0;
    Date start_day{};
    double energy_kwh = 0.0;
};

struct Diagnostic {
    std::size_t line_no = 0;
    std::string message;
};

/// Column-name mapping from the five required fields to the source file.
/// Defaults target the Palo Alto transaction feed.
struct CsvSchema {
    std::string station_id = "Station Name";
    std::string latitude = "Latitude";
    std::string longitude = "Longitude";
    std::string start_time = "Start Date";
    std::string energy_kwh = "Energy (kWh)";
    char delimiter = ',';
};

struct ParseResult {
    std::vector<ChargingTransaction> transactions;
    std::vector<Diagnostic> diagnostics;
    std::size_t rows_seen = 0;
};

namespace detail {

inline std::optional<double> to_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Parses a transaction log. Rows with unparseable or invalid required
/// fields are skipped with a per-row diagnostic; a missing mapped column is
/// fatal.
inline ParseResult parse_transactions(std::istream& in, const CsvSchema& schema = {}) {
    CsvReader reader(in, schema.delimiter);
    std::vector<std::string> header;
    if (!reader.next_row(header)) throw std::runtime_error("parse_transactions: empty input, no header row");

    auto column = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("parse_transactions: required column '" + name +
                                 "' not found in header");
    };
    const std::size_t c_station = column(schema.station_id);
    const std::size_t c_lat = column(schema.latitude);
    const std::size_t c_lon = column(schema.longitude);
    const std::size_t c_time = column(schema.start_time);
    const std::size_t c_energy = column(schema.energy_kwh);
    const std::size_t need = std::max({c_station, c_lat, c_lon, c_time, c_energy}) + 1;

    ParseResult result;
    std::vector<std::string> row;
    while (reader.next_row(row)) {
        if (row.size() == 1 && row[0].empty()) continue;  // blank line
        ++result.rows_seen;
        const std::size_t line = reader.line_no();
        if (row.size() < need) {
            result.diagnostics.push_back({line, "row has " + std::to_string(row.size()) +
                                                    " fields, needs at least " + std::to_string(need)});
            continue;
        }
        ChargingTransaction tx;
        tx.station_id = row[c_station];
        if (tx.station_id.empty()) {
            result.diagnostics.push_back({line, "empty station id"});
            continue;
        }
        auto lat = detail::to_double(row[c_lat]);
        auto lon = detail::to_double(row[c_lon]);
        if (!lat || !lon) {
            result.diagnostics.push_back({line, "unparseable coordinates '" + row[c_lat] + "','" +
                                                    row[c_lon] + "'"});
            continue;
        }
        if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
            result.diagnostics.push_back({line, "coordinates out of range (" + row[c_lat] + ", " +
                                                    row[c_lon] + ")"});
            continue;
        }
        auto day = parse_date(row[c_time]);
        if (!day) {
            result.diagnostics.push_back({line, "unparseable timestamp '" + row[c_time] + "'"});
            continue;
        }
        auto energy = detail::to_double(row[c_energy]);
        if (!energy) {
            result.diagnostics.push_back({line, "unparseable energy '" + row[c_energy] + "'"});
            continue;
        }
        if (*energy < 0.0) {
            result.diagnostics.push_back({line, "negative energy " + row[c_energy]});
            continue;
        }
        tx.latitude = *lat;
        tx.longitude = *lon;
        tx.start_day = *day;
        tx.energy_kwh = *energy;
        result.transactions.push_back(std::move(tx));
    }
    return result;
}

/// Stations in lexicographic station_id order; a station's position is its
/// node index everywhere downstream.
struct StationRegistry {
    struct Station {
        std::string id;
        double latitude = 0.0;
        double longitude = 0.0;
    };

    std::vector<Station> stations;

    std::size_t size() const { return stations.size(); }

    std::optional<std::size_t> find(const std::string& id) const {
        auto it = std::lower_bound(stations.begin(), stations.end(), id,
                                   [](const Station& s, const std::string& key) { return s.id < key; });
        if (it == stations.end() || it->id != id) return std::nullopt;
        return std::size_t(it - stations.begin());
    }
};

/// Coordinates come from each station's first transaction; later
/// disagreements beyond 1e-6 degrees are reported and ignored.
inline StationRegistry build_registry(const std::vector<ChargingTransaction>& transactions,
                                      std::vector<Diagnostic>* diagnostics = nullptr) {
    if (transactions.empty())
        throw std::runtime_error("build_registry: no transactions");
    std::map<std::string, std::pair<double, double>> first_seen;
    for (const auto& tx : transactions) {
        auto [it, inserted] = first_seen.emplace(tx.station_id, std::make_pair(tx.latitude, tx.longitude));
        if (!inserted && diagnostics) {
            if (std::fabs(it->second.first - tx.latitude) > 1e-6 ||
                std::fabs(it->second.second - tx.longitude) > 1e-6) {
                diagnostics->push_back(
                    {0, "station '" + tx.station_id + "' reports conflicting coordinates (" +
                            std::to_string(tx.latitude) + ", " + std::to_string(tx.longitude) +
                            "); keeping first occurrence"});
            }
        }
    }
    StationRegistry reg;
    reg.stations.reserve(first_seen.size());
    for (const auto& [id, coord] : first_seen)
        reg.stations.push_back({id, coord.first, coord.second});
    return reg;
}

/// Rectangular dates x stations matrix of daily energy (kWh). Rows cover
/// consecutive calendar days; days without transactions are zero rows.
struct DemandPanel {
    Date start_date{};
    std::size_t n_days = 0;
    std::size_t n_stations = 0;
    std::vector<double> values;  // row-major [n_days, n_stations]

    double& at(std::size_t day, std::size_t station) { return values[day * n_stations + station]; }
    double at(std::size_t day, std::size_t station) const { return values[day * n_stations + station]; }

    Date date_of_row(std::size_t day) const { return start_date + std::chrono::days(long(day)); }

    double day_total(std::size_t day) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n_stations; ++j) s += at(day, j);
        return s;
    }

    double total() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }

    /// As a [n_days, n_stations] matrix.
    DenseArray matrix() const { return DenseArray({n_days, n_stations}, values); }

    /// Per-day totals (the "total system" series).
    std::vector<double> system_series() const {
        std::vector<double> s(n_days);
        for (std::size_t d = 0; d < n_days; ++d) s[d] = day_total(d);
        return s;
    }
};

struct AggregateResult {
    DemandPanel panel;
    std::size_t out_of_range = 0;  // transactions outside [date_from, date_to]
};

inline AggregateResult aggregate_daily(const std::vector<ChargingTransaction>& transactions,
                                       const StationRegistry& registry, Date date_from, Date date_to) {
    if (date_to < date_from)
        throw std::invalid_argument("aggregate_daily: date_from after date_to");
    AggregateResult res;
    DemandPanel& p = res.panel;
    p.start_date = date_from;
    p.n_days = std::size_t(days_between(date_from, date_to)) + 1;
    p.n_stations = registry.size();
    p.values.assign(p.n_days * p.n_stations, 0.0);
    // canonical (cell, energy) order so the floating sums are independent of
    // input permutation
    std::vector<std::pair<std::size_t, double>> cells;
    cells.reserve(transactions.size());
    for (const auto& tx : transactions) {
        auto idx = registry.find(tx.station_id);
        if (!idx)
            throw std::runtime_error("aggregate_daily: unknown station_id '" + tx.station_id + "'");
        if (tx.start_day < date_from || tx.start_day > date_to) {
            ++res.out_of_range;
            continue;
        }
        std::size_t day = std::size_t(days_between(date_from, tx.start_day));
        cells.emplace_back(day * p.n_stations + *idx, tx.energy_kwh);
    }
    std::sort(cells.begin(), cells.end());
    for (const auto& [cell, energy] : cells) p.values[cell] += energy;
    return res;
}

/// Date span covered by a transaction set.
inline std::pair<Date, Date> date_span(const std::vector<ChargingTransaction>& transactions) {
    if (transactions.empty()) throw std::runtime_error("date_span: no transactions");
    Date lo = transactions.front().start_day, hi = lo;
    for (const auto& tx : transactions) {
        lo = std::min(lo, tx.start_day);
        hi = std::max(hi, tx.start_day);
    }
    return {lo, hi};
}

// ---- serialization ----

inline void write_registry_csv(std::ostream& out, const StationRegistry& reg) {
    out << "station_id,latitude,longitude\n";
    for (const auto& s : reg.stations)
        out << csv_quote(s.id) << ',' << fmt_g17(s.latitude) << ',' << fmt_g17(s.longitude) << '\n';
}

inline StationRegistry read_registry_csv(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next_row(row) || row.size() != 3 || row[0] != "station_id")
        throw std::runtime_error("registry csv: bad header");
    StationRegistry reg;
    while (reader.next_row(row)) {
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != 3) throw std::runtime_error("registry csv: bad row");
        reg.stations.push_back({row[0], std::stod(row[1]), std::stod(row[2])});
    }
    return reg;
}

/// First column is the ISO date, then one column per station_id.
inline void write_panel_csv(std::ostream& out, const DemandPanel& panel,
                            const StationRegistry& reg) {
    out << "date";
    for (const auto& s : reg.stations) out << ',' << csv_quote(s.id);
    out << '\n';
    for (std::size_t d = 0; d < panel.n_days; ++d) {
        out << format_date(panel.date_of_row(d));
        for (std::size_t j = 0; j < panel.n_stations; ++j) out << ',' << fmt_g17(panel.at(d, j));
        out << '\n';
    }
}

inline DemandPanel read_panel_csv(std::istream& in, std::vector<std::string>* station_ids = nullptr) {
    CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next_row(row) || row.empty() || row[0] != "date")
        throw std::runtime_error("panel csv: bad header");
    const std::size_t n_stations = row.size() - 1;
    if (station_ids) station_ids->assign(row.begin() + 1, row.end());
    DemandPanel p;
    p.n_stations = n_stations;
    bool first = true;
    while (reader.next_row(row)) {
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != n_stations + 1) throw std::runtime_error("panel csv: ragged row");
        auto day = parse_date(row[0]);
        if (!day) throw std::runtime_error("panel csv: bad date '" + row[0] + "'");
        if (first) {
            p.start_date = *day;
            first = false;
        }
        for (std::size_t j = 0; j < n_stations; ++j) p.values.push_back(std::stod(row[1 + j]));
        ++p.n_days;
    }
    if (p.n_days == 0) throw std::runtime_error("panel csv: no data rows");
    return p;
}

}  // namespace evf
