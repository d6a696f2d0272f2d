#ifndef FCSFORGE_STORE_HPP_
#define FCSFORGE_STORE_HPP_

#include <string>
#include <vector>

#include "fcsforge/dataset.hpp"

namespace fcsforge {

/// Original data (index 0) plus M completed copies, long format.
struct ImputedStore {
    int m = 0;
    std::vector<ColumnarDataset> blocks;  // size m + 1

    /// Schema uniformity across blocks, matching row counts, block-0 presence.
    void validate() const;
};

/// Long-format delimited text with `id` and `_imp` columns; block rows are
/// contiguous and ordered by id.
void write_store(const ImputedStore& store, const std::string& path);

/// Reads a store file back; all value columns come back as Real.
ImputedStore load_store(const std::string& path);

}  // namespace fcsforge

#endif  // FCSFORGE_STORE_HPP_
