#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "geometry.hpp"

namespace curveflow {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw FormatError("cannot parse number '" + std::string(s) + "'");
    return v;
}

namespace detail {

inline std::vector<std::pair<double, double>> read_two_column_csv(const std::string& path, const std::string& header)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw FormatError(path + ": expected header '" + header + "'");
    std::vector<std::pair<double, double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError(path + ": malformed row '" + line + "'");
        rows.emplace_back(parse_double(std::string_view(line).substr(0, comma)),
                          parse_double(std::string_view(line).substr(comma + 1)));
    }
    return rows;
}

}  // namespace detail

inline void write_polyline_csv(const std::string& path, const PolyCurve& c)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "x,y\n";
    for (const auto& p : c.points) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

/// Reads an `x,y` file as a closed curve when it has at least three distinct points.
inline PolyCurve read_polyline_csv(const std::string& path, bool closed = true)
{
    PolyCurve c;
    for (const auto& [x, y] : detail::read_two_column_csv(path, "x,y")) c.points.push_back({x, y});
    c.closed = closed;
    if (closed) c.orientation = signed_area(c.points) >= 0.0 ? Orientation::ccw : Orientation::cw;
    return c;
}

inline void write_profile_csv(const std::string& path, const Profile& p)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "x,u\n";
    for (std::size_t i = 0; i < p.x.size(); ++i) out << format_double(p.x[i]) << ',' << format_double(p.u[i]) << '\n';
}

/// Contacts default to vertical; the file carries samples only.
inline Profile read_profile_csv(const std::string& path)
{
    Profile p;
    for (const auto& [x, u] : detail::read_two_column_csv(path, "x,u")) {
        p.x.push_back(x);
        p.u.push_back(u);
    }
    if (p.x.empty()) throw FormatError(path + ": no samples");
    p.a = p.x.front();
    p.b = p.x.back();
    return p;
}

}  // namespace curveflow
