#ifndef FCSFORGE_ENGINE_HPP_
#define FCSFORGE_ENGINE_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fcsforge/dataset.hpp"
#include "fcsforge/expr.hpp"
#include "fcsforge/imputers.hpp"
#include "fcsforge/plan.hpp"
#include "fcsforge/store.hpp"

namespace fcsforge {

/// One per-variable update, as seen by the instrumentation hook.
struct TraceEvent {
    int replicate = 0;
    std::string block;
    int iteration = 0;   // 0 = monotone initialization, then 1..burnin
    int chain = 0;       // 1-based chain index inside twofold blocks, 0 otherwise
    std::string variable;
    int spell = 0;       // 1-based spell index for sequence chains, 0 otherwise
    std::string pool;    // "all", a region name, or "pooled"
    int q = 0;           // PMM neighbor count in effect (0 when not PMM)
    std::vector<std::size_t> fit_rows;
    std::vector<std::size_t> impute_rows;
    Vector imputed_values;  // aligned with impute_rows
    Vector fit_values;      // observed responses aligned with fit_rows
    std::vector<std::string> design_columns;
    Matrix design_fit;   // populated only when a hook is installed
    Matrix design_mis;
};

using TraceHook = std::function<void(const TraceEvent&)>;

/// Indices sorted from the most to the least observed variable; ties keep
/// declaration order.
std::vector<std::size_t> order_by_missingness(const std::vector<double>& observed_fractions);

/// Working copy of the dataset a chain mutates, plus the frozen input masks.
class ChainState : public EvalContext {
public:
    ChainState(const ColumnarDataset& input, const Plan& plan);

    const ColumnarDataset& data() const { return data_; }
    const Plan& plan() const { return *plan_; }
    std::size_t n_rows() const { return data_.n_rows(); }

    /// Input cell states (the immutable missingness mask).
    CellState input_state(const std::string& col, std::size_t row) const;

    /// Effective eligibility for a block variable, fixed when the block starts:
    /// the plan predicate holds and the input cell is not structurally
    /// ineligible.
    struct VarMask {
        std::vector<std::size_t> fit_rows;     // eligible, observed in input
        std::vector<std::size_t> impute_rows;  // eligible, missing in input
    };

    /// Evaluates the predicate, normalizes missing-but-ineligible cells to the
    /// sentinel, and errors on observed-but-ineligible contradictions.
    VarMask bind_variable(const std::string& name, const Expr& eligibility);

    void set_value(const std::string& col, std::size_t row, double value);
    double value(const std::string& col, std::size_t row) const;
    bool is_completed(const std::string& col, std::size_t row) const;

    /// True when no eligible cell of the column is still missing.
    bool column_complete(const std::string& col) const;

    // EvalContext
    double column_value(const std::string& name, std::size_t row) const override;
    bool column_eligible(const std::string& name, std::size_t row) const override;
    double sequence_average(const std::string& seq, std::size_t row) const override;

    ColumnarDataset release_data() && { return std::move(data_); }

private:
    ColumnarDataset data_;
    const Plan* plan_;
    std::vector<std::vector<CellState>> input_states_;  // per column
};

/// Previous-spell features for an AR(1) sequence: zero at the first spell.
struct LagFeatures {
    Vector lag_ownership;
    Vector lag_amount;
    Vector sequence_average;
};

LagFeatures build_lag_features(const ChainState& state, const std::string& sequence, int spell,
                               const std::vector<std::size_t>& rows);

/// Row partition and dummy coding for one pooled fit.
struct PoolSelection {
    std::string label;
    std::vector<std::size_t> fit_rows;
    std::vector<std::size_t> impute_rows;
    /// (column name, country code) pairs; one reference category dropped.
    std::vector<std::pair<std::string, double>> country_dummies;
    /// (column name, region name) pairs; one reference category dropped.
    std::vector<std::pair<std::string, std::string>> region_dummies;
};

/// Applies the macro-region policy: a region with at least `min_cell` observed
/// rows fits alone with country dummies; all deficient regions share one
/// pooled fit with region dummies.
std::vector<PoolSelection> select_pools(const ChainState& state, const PoolingPolicy& policy,
                                        const std::vector<std::size_t>& fit_rows,
                                        const std::vector<std::size_t>& impute_rows);

/// Per-row (lo, hi) evaluation; throws BoundsError when a row evaluates to
/// lo > hi.
CellBounds evaluate_bounds_rule(const BoundsRule& rule, const std::vector<std::size_t>& rows,
                                const ChainState& state, const std::string& variable);

/// Monotone initialization: variables in missingness order, each conditioning
/// only on already-initialized predictors.
void initialize_monotone(ChainState& state, const FcsBlock& block, RngStream& rng,
                         const TraceHook& trace = nullptr, int replicate = 0);

/// One FCS sweep over the block's variables in missingness order.
void fcs_sweep(ChainState& state, const FcsBlock& block, int iteration, RngStream& rng,
               const TraceHook& trace = nullptr, int replicate = 0);

/// Two-fold pass: monotone initialization across all chains, then `burnin`
/// outer iterations over the chains in declared order, spells in order inside
/// each sequence chain. The final iteration is retained.
void run_twofold_block(ChainState& state, const TwofoldBlock& block, int burnin, RngStream& rng,
                       const TraceHook& trace = nullptr, int replicate = 0);

/// M independent chains (seed = plan.seed xor replicate), each initialized
/// monotonically and swept for `burnin` iterations; the store holds the input
/// at index 0 plus the M completed copies.
ImputedStore run_multiple_imputation(const ColumnarDataset& data, const Plan& plan,
                                     const TraceHook& trace = nullptr);

}  // namespace fcsforge

#endif  // FCSFORGE_ENGINE_HPP_
