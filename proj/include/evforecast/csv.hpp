#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace evf {

/// Streaming reader for delimiter-separated text. Understands double-quoted
/// fields (embedded delimiters, doubled quotes, embedded newlines) and both
/// LF and CRLF endings.
class CsvReader {
public:
    explicit CsvReader(std::istream& in, char delimiter = ',')
        : in_(in), delim_(delimiter) {}

    /// Reads the next record into `fields`. Returns false at end of input.
    /// line_no() afterwards gives the physical line the record started on.
    bool next_row(std::vector<std::string>& fields) {
        fields.clear();
        int ci = in_.get();
        if (ci == EOF) return false;
        row_start_line_ = line_;
        std::string field;
        bool quoted = false;
        while (true) {
            if (ci == EOF) {
                fields.push_back(std::move(field));
                return true;
            }
            char c = static_cast<char>(ci);
            if (quoted) {
                if (c == '"') {
                    int peek = in_.peek();
                    if (peek == '"') {
                        field.push_back('"');
                        in_.get();
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') ++line_;
                    field.push_back(c);
                }
            } else if (c == '"' && field.empty()) {
                quoted = true;
            } else if (c == delim_) {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                ++line_;
                if (!field.empty() && field.back() == '\r') field.pop_back();
                fields.push_back(std::move(field));
                return true;
            } else {
                field.push_back(c);
            }
            ci = in_.get();
        }
    }

    std::size_t line_no() const { return row_start_line_; }

private:
    std::istream& in_;
    char delim_;
    std::size_t line_ = 1;
    std::size_t row_start_line_ = 1;
};

inline std::string csv_quote(const std::string& s, char delimiter = ',') {
    bool needs = false;
    for (char c : s) {
        if (c == delimiter || c == '"' || c == '\n' || c == '\r') {
            needs = true;
            break;
        }
    }
    if (!needs) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields,
                          char delimiter = ',') {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << delimiter;
        out << csv_quote(fields[i], delimiter);
    }
    out << '\n';
}

/// Formats a double with enough digits to round-trip bit-exactly.
inline std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace evf
