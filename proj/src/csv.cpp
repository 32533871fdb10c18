#include "imd/csv.hpp"

#include <charconv>
#include <cstdio>

#include "imd/error.hpp"

namespace imd::csv {

std::string format_double(double value) {
    std::string out;
    append_double(out, value);
    return out;
}

void append_double(std::string& out, double value) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", value);
    out.append(buf, static_cast<std::size_t>(len));
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view cell, std::size_t line_no) {
    cell = trim(cell);
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last)
        throw ParseError("not a number: '" + std::string(cell) + "'", line_no);
    return value;
}

long long parse_int(std::string_view cell, std::size_t line_no) {
    cell = trim(cell);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
        throw ParseError("not an integer: '" + std::string(cell) + "'", line_no);
    return value;
}

bool LineReader::next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

}  // namespace imd::csv
