#ifndef FCSFORGE_CSV_HPP_
#define FCSFORGE_CSV_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace fcsforge {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;           // -1 when absent
    int require_column(const std::string& name) const;   // throws ParseError
};

CsvTable read_csv(const std::string& path);
CsvTable read_csv(std::istream& in, const std::string& origin);

void write_csv(const std::string& path, const CsvTable& table);
void write_csv(std::ostream& out, const CsvTable& table);

/// Shortest round-trip decimal text for a double (to_chars); "" for NaN-as-missing
/// is the caller's business, this always prints the value.
std::string format_double(double v);

/// Strict double parse of a whole cell; throws ParseError with context on failure.
double parse_double(const std::string& cell, const std::string& context);

/// Strict integer parse of a whole cell.
long parse_long(const std::string& cell, const std::string& context);

}  // namespace fcsforge

#endif  // FCSFORGE_CSV_HPP_
