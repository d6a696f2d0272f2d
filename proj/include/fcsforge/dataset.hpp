#ifndef FCSFORGE_DATASET_HPP_
#define FCSFORGE_DATASET_HPP_

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fcsforge {

enum class CellState { Observed, Missing, Ineligible };

enum class ColumnType { Real, Count, Binary, Ordered, Nominal };

ColumnType column_type_from_string(const std::string& s);
std::string to_string(ColumnType t);

/// Survey sentinel for cells a respondent was never asked.
inline constexpr double kIneligibleSentinel = -99.0;

struct Column {
    std::string name;
    ColumnType type = ColumnType::Real;
    std::vector<double> values;      // sentinel for Ineligible, unspecified for Missing
    std::vector<CellState> state;

    std::size_t size() const { return values.size(); }
    bool observed(std::size_t i) const { return state[i] == CellState::Observed; }
};

/// Typed columns with per-cell missing/ineligible states and a unique id column.
class ColumnarDataset {
public:
    std::vector<std::string> ids;
    std::vector<Column> columns;

    std::size_t n_rows() const { return ids.size(); }

    int column_index(const std::string& name) const;
    const Column& column(const std::string& name) const;
    Column& column(const std::string& name);
    bool has_column(const std::string& name) const { return column_index(name) >= 0; }

    /// Validates id uniqueness, column lengths, and type/value consistency.
    void validate() const;
};

struct SchemaEntry {
    std::string name;
    ColumnType type;
};

/// Parses a delimited dataset. Cells matching `missing_codes` (plus the empty
/// string) become Missing; "-99" becomes Ineligible; everything else must
/// coerce to the declared type.
ColumnarDataset load_dataset(const std::string& path, const std::string& id_column,
                             const std::vector<SchemaEntry>& schema,
                             const std::set<std::string>& missing_codes);

void write_dataset(const std::string& path, const ColumnarDataset& ds);

}  // namespace fcsforge

#endif  // FCSFORGE_DATASET_HPP_
