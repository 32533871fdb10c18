#pragma once

// Minimal CSV plumbing shared by the file formats. Numbers are written with
// 17 significant digits, which round-trips every IEEE-754 double.

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace imd::csv {

std::string format_double(double value);

/// Appends `value` in round-trip format to `out`.
void append_double(std::string& out, double value);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Parses a full cell as a double; throws ParseError carrying `line_no`.
double parse_double(std::string_view cell, std::size_t line_no);
long long parse_int(std::string_view cell, std::size_t line_no);

std::string_view trim(std::string_view s);

/// Reads the next line (without the terminator, CR stripped); tracks line
/// numbers. Returns false at end of input.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}
    bool next(std::string& line);
    std::size_t line_number() const noexcept { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

}  // namespace imd::csv
