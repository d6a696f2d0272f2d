#include "fcsforge/store.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "fcsforge/csv.hpp"
#include "fcsforge/error.hpp"

namespace fcsforge {

void ImputedStore::validate() const {
    if (static_cast<int>(blocks.size()) != m + 1)
        throw DataError("store must hold m + 1 = " + std::to_string(m + 1) + " blocks, has " +
                        std::to_string(blocks.size()));
    if (blocks.empty()) throw DataError("store has no blocks");
    const auto& base = blocks.front();
    for (const auto& block : blocks) {
        if (block.n_rows() != base.n_rows()) throw DataError("store blocks differ in row count");
        if (block.columns.size() != base.columns.size())
            throw DataError("store blocks differ in column count");
        for (std::size_t c = 0; c < block.columns.size(); ++c)
            if (block.columns[c].name != base.columns[c].name)
                throw DataError("store blocks differ in schema at column " +
                                base.columns[c].name);
        block.validate();
    }
}

void write_store(const ImputedStore& store, const std::string& path) {
    store.validate();
    CsvTable table;
    table.header.push_back("id");
    table.header.push_back("_imp");
    for (const auto& c : store.blocks.front().columns) table.header.push_back(c.name);

    for (int m = 0; m < static_cast<int>(store.blocks.size()); ++m) {
        const auto& block = store.blocks[static_cast<std::size_t>(m)];
        std::vector<std::size_t> order(block.n_rows());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return block.ids[a] < block.ids[b]; });
        for (std::size_t r : order) {
            std::vector<std::string> row;
            row.reserve(block.columns.size() + 2);
            row.push_back(block.ids[r]);
            row.push_back(std::to_string(m));
            for (const auto& c : block.columns) {
                switch (c.state[r]) {
                    case CellState::Missing: row.emplace_back(); break;
                    case CellState::Ineligible: row.emplace_back("-99"); break;
                    case CellState::Observed: row.push_back(format_double(c.values[r])); break;
                }
            }
            table.rows.push_back(std::move(row));
        }
    }
    write_csv(path, table);
}

ImputedStore load_store(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int id_idx = table.require_column("id");
    const int imp_idx = table.require_column("_imp");

    int max_imp = 0;
    for (const auto& row : table.rows)
        max_imp = std::max(max_imp, static_cast<int>(parse_long(row[imp_idx], path)));

    ImputedStore store;
    store.m = max_imp;
    store.blocks.resize(static_cast<std::size_t>(max_imp) + 1);
    for (auto& block : store.blocks) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (static_cast<int>(c) == id_idx || static_cast<int>(c) == imp_idx) continue;
            Column col;
            col.name = table.header[c];
            col.type = ColumnType::Real;
            block.columns.push_back(std::move(col));
        }
    }

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const int m = static_cast<int>(parse_long(row[imp_idx], path));
        auto& block = store.blocks[static_cast<std::size_t>(m)];
        block.ids.push_back(row[id_idx]);
        std::size_t out_c = 0;
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (static_cast<int>(c) == id_idx || static_cast<int>(c) == imp_idx) continue;
            auto& col = block.columns[out_c++];
            const std::string& cell = row[c];
            if (cell.empty()) {
                col.state.push_back(CellState::Missing);
                col.values.push_back(std::numeric_limits<double>::quiet_NaN());
            } else if (cell == "-99") {
                col.state.push_back(CellState::Ineligible);
                col.values.push_back(kIneligibleSentinel);
            } else {
                col.state.push_back(CellState::Observed);
                col.values.push_back(
                    parse_double(cell, path + " row " + std::to_string(r + 2)));
            }
        }
    }
    store.validate();
    return store;
}

}  // namespace fcsforge
