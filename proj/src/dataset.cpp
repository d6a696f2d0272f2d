#include "fcsforge/dataset.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "fcsforge/csv.hpp"
#include "fcsforge/error.hpp"

namespace fcsforge {

ColumnType column_type_from_string(const std::string& s) {
    if (s == "real") return ColumnType::Real;
    if (s == "count") return ColumnType::Count;
    if (s == "binary") return ColumnType::Binary;
    if (s == "ordered") return ColumnType::Ordered;
    if (s == "nominal") return ColumnType::Nominal;
    throw PlanError("unknown column type '" + s + "'");
}

std::string to_string(ColumnType t) {
    switch (t) {
        case ColumnType::Real: return "real";
        case ColumnType::Count: return "count";
        case ColumnType::Binary: return "binary";
        case ColumnType::Ordered: return "ordered";
        case ColumnType::Nominal: return "nominal";
    }
    return "?";
}

int ColumnarDataset::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

const Column& ColumnarDataset::column(const std::string& name) const {
    const int i = column_index(name);
    if (i < 0) throw DataError("no column named '" + name + "'");
    return columns[i];
}

Column& ColumnarDataset::column(const std::string& name) {
    const int i = column_index(name);
    if (i < 0) throw DataError("no column named '" + name + "'");
    return columns[i];
}

namespace {

void check_value(const Column& c, std::size_t row) {
    if (c.state[row] != CellState::Observed) return;
    const double v = c.values[row];
    if (!std::isfinite(v))
        throw DataError("column '" + c.name + "' row " + std::to_string(row) +
                        ": observed cell is not finite");
    switch (c.type) {
        case ColumnType::Real:
            break;
        case ColumnType::Count:
            if (v < 0 || v != std::floor(v))
                throw DataError("column '" + c.name + "' row " + std::to_string(row) +
                                ": count cell must be a non-negative integer, got " +
                                format_double(v));
            break;
        case ColumnType::Binary:
            if (v != 0.0 && v != 1.0)
                throw DataError("column '" + c.name + "' row " + std::to_string(row) +
                                ": binary cell must be 0 or 1, got " + format_double(v));
            break;
        case ColumnType::Ordered:
        case ColumnType::Nominal:
            if (v != std::floor(v))
                throw DataError("column '" + c.name + "' row " + std::to_string(row) +
                                ": category code must be an integer, got " +
                                format_double(v));
            break;
    }
}

}  // namespace

void ColumnarDataset::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw DataError("duplicate id '" + id + "'");
    for (const auto& c : columns) {
        if (c.values.size() != n_rows() || c.state.size() != n_rows())
            throw DataError("column '" + c.name + "' length mismatch");
        for (std::size_t i = 0; i < n_rows(); ++i) {
            if (c.state[i] == CellState::Ineligible && c.values[i] != kIneligibleSentinel)
                throw DataError("column '" + c.name + "' row " + std::to_string(i) +
                                ": ineligible cell must carry the sentinel");
            check_value(c, i);
        }
    }
}

ColumnarDataset load_dataset(const std::string& path, const std::string& id_column,
                             const std::vector<SchemaEntry>& schema,
                             const std::set<std::string>& missing_codes) {
    const CsvTable table = read_csv(path);
    const int id_idx = table.require_column(id_column);

    ColumnarDataset ds;
    ds.ids.reserve(table.rows.size());
    for (const auto& row : table.rows) ds.ids.push_back(row[id_idx]);

    for (const auto& entry : schema) {
        const int idx = table.require_column(entry.name);
        Column col;
        col.name = entry.name;
        col.type = entry.type;
        col.values.resize(table.rows.size(), 0.0);
        col.state.resize(table.rows.size(), CellState::Missing);
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const std::string& cell = table.rows[r][idx];
            if (cell.empty() || missing_codes.count(cell)) {
                col.state[r] = CellState::Missing;
                col.values[r] = std::numeric_limits<double>::quiet_NaN();
            } else if (cell == "-99") {
                col.state[r] = CellState::Ineligible;
                col.values[r] = kIneligibleSentinel;
            } else {
                col.state[r] = CellState::Observed;
                col.values[r] = parse_double(cell, path + " row " + std::to_string(r + 2) +
                                                       " column '" + entry.name + "'");
            }
        }
        ds.columns.push_back(std::move(col));
    }
    ds.validate();
    return ds;
}

void write_dataset(const std::string& path, const ColumnarDataset& ds) {
    CsvTable table;
    table.header.push_back("id");
    for (const auto& c : ds.columns) table.header.push_back(c.name);
    table.rows.reserve(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::vector<std::string> row;
        row.reserve(ds.columns.size() + 1);
        row.push_back(ds.ids[r]);
        for (const auto& c : ds.columns) {
            switch (c.state[r]) {
                case CellState::Missing: row.emplace_back(); break;
                case CellState::Ineligible: row.emplace_back("-99"); break;
                case CellState::Observed: row.push_back(format_double(c.values[r])); break;
            }
        }
        table.rows.push_back(std::move(row));
    }
    write_csv(path, table);
}

}  // namespace fcsforge
