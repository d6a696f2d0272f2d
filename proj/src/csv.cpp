#include "fcsforge/csv.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fcsforge/error.hpp"

namespace fcsforge {

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

int CsvTable::require_column(const std::string& name) const {
    const int i = column(name);
    if (i < 0) throw ParseError("missing required column '" + name + "'");
    return i;
}

namespace {

// RFC-style: fields containing comma, quote, or newline are quoted; embedded
// quotes are doubled.
std::vector<std::string> split_record(const std::string& line, const std::string& origin,
                                      std::size_t lineno) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                } else {
                    quoted = false;
                    ++i;
                }
            } else {
                field.push_back(c);
                ++i;
            }
        } else if (c == '"') {
            if (!field.empty())
                throw ParseError(origin + ":" + std::to_string(lineno) +
                                 ": stray quote inside unquoted field");
            quoted = true;
            ++i;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
            ++i;
        } else {
            field.push_back(c);
            ++i;
        }
    }
    if (quoted)
        throw ParseError(origin + ":" + std::to_string(lineno) + ": unterminated quote");
    out.push_back(std::move(field));
    return out;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

CsvTable read_csv(std::istream& in, const std::string& origin) {
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && lineno > 1) continue;
        auto fields = split_record(line, origin, lineno);
        if (lineno == 1) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size())
                throw ParseError(origin + ":" + std::to_string(lineno) + ": expected " +
                                 std::to_string(table.header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw ParseError(origin + ": empty file");
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read_csv(in, path);
}

void write_csv(std::ostream& out, const CsvTable& table) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out << ',';
        out << quote_if_needed(table.header[i]);
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << quote_if_needed(row[i]);
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(out, table);
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, const std::string& context) {
    double v = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(context + ": cannot parse '" + cell + "' as a number");
    return v;
}

long parse_long(const std::string& cell, const std::string& context) {
    long v = 0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(context + ": cannot parse '" + cell + "' as an integer");
    return v;
}

}  // namespace fcsforge
