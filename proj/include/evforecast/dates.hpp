#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace evf {

using Date = std::chrono::sys_days;

inline std::optional<Date> make_date(int year, unsigned month, unsigned day) {
    std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                    std::chrono::day{day}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

namespace detail {

inline bool parse_uint(std::string_view s, std::size_t& pos, unsigned& out, int max_digits) {
    unsigned v = 0;
    int n = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9' && n < max_digits) {
        v = v * 10 + static_cast<unsigned>(s[pos] - '0');
        ++pos;
        ++n;
    }
    if (n == 0) return false;
    out = v;
    return true;
}

}  // namespace detail

/// Parses the date component of a timestamp string. Accepts ISO-8601
/// ("YYYY-MM-DD" or "YYYY/MM/DD") and US "M/D/YYYY" orderings; anything
/// after the date (a time of day following ' ' or 'T') is ignored.
inline std::optional<Date> parse_date(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    std::size_t pos = 0;
    unsigned a = 0, b = 0, c = 0;
    if (!detail::parse_uint(s, pos, a, 4)) return std::nullopt;
    if (pos >= s.size() || (s[pos] != '-' && s[pos] != '/')) return std::nullopt;
    const char sep = s[pos++];
    if (!detail::parse_uint(s, pos, b, 4)) return std::nullopt;
    if (pos >= s.size() || s[pos] != sep) return std::nullopt;
    ++pos;
    if (!detail::parse_uint(s, pos, c, 4)) return std::nullopt;
    if (pos < s.size() && s[pos] != ' ' && s[pos] != 'T') return std::nullopt;
    if (a >= 1000) return make_date(static_cast<int>(a), b, c);      // YYYY-MM-DD
    if (c >= 1000) return make_date(static_cast<int>(c), a, b);      // M/D/YYYY
    return std::nullopt;
}

inline std::string format_date(Date d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

/// Signed day count (b - a).
inline long days_between(Date a, Date b) {
    return (b - a).count();
}

}  // namespace evf
