#include "fcsforge/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "fcsforge/error.hpp"

namespace fcsforge {

namespace {

std::string format_country(double code) {
    const long v = static_cast<long>(code);
    if (static_cast<double>(v) == code) return std::to_string(v);
    return std::to_string(code);
}

}  // namespace

std::vector<std::size_t> order_by_missingness(const std::vector<double>& observed_fractions) {
    std::vector<std::size_t> order(observed_fractions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return observed_fractions[a] > observed_fractions[b];
    });
    return order;
}

ChainState::ChainState(const ColumnarDataset& input, const Plan& plan)
    : data_(input), plan_(&plan) {
    input_states_.reserve(data_.columns.size());
    for (const auto& col : data_.columns) input_states_.push_back(col.state);
}

CellState ChainState::input_state(const std::string& col, std::size_t row) const {
    const int idx = data_.column_index(col);
    if (idx < 0) throw DataError("no column named '" + col + "'");
    return input_states_[static_cast<std::size_t>(idx)][row];
}

ChainState::VarMask ChainState::bind_variable(const std::string& name, const Expr& eligibility) {
    const int idx = data_.column_index(name);
    if (idx < 0) throw DataError("no column named '" + name + "'");
    Column& col = data_.columns[static_cast<std::size_t>(idx)];
    const auto& input = input_states_[static_cast<std::size_t>(idx)];

    VarMask mask;
    for (std::size_t r = 0; r < n_rows(); ++r) {
        if (input[r] == CellState::Ineligible) continue;
        const bool eligible = eval_predicate(eligibility, *this, r);
        if (!eligible) {
            if (input[r] == CellState::Observed)
                throw DataError("variable '" + name + "' row id " + data_.ids[r] +
                                ": observed value on a row the eligibility rule excludes");
            // Missing and never asked: normalize to the ineligible sentinel.
            col.state[r] = CellState::Ineligible;
            col.values[r] = kIneligibleSentinel;
            continue;
        }
        if (input[r] == CellState::Observed) mask.fit_rows.push_back(r);
        else mask.impute_rows.push_back(r);
    }
    return mask;
}

void ChainState::set_value(const std::string& col, std::size_t row, double value) {
    const int idx = data_.column_index(col);
    if (idx < 0) throw DataError("no column named '" + col + "'");
    if (input_states_[static_cast<std::size_t>(idx)][row] == CellState::Observed)
        throw DataError("attempt to overwrite an observed cell of '" + col + "'");
    data_.columns[static_cast<std::size_t>(idx)].values[row] = value;
    data_.columns[static_cast<std::size_t>(idx)].state[row] = CellState::Observed;
}

double ChainState::value(const std::string& col, std::size_t row) const {
    return data_.column(col).values[row];
}

bool ChainState::is_completed(const std::string& col, std::size_t row) const {
    return data_.column(col).state[row] == CellState::Observed;
}

bool ChainState::column_complete(const std::string& col) const {
    const Column& c = data_.column(col);
    return std::none_of(c.state.begin(), c.state.end(),
                        [](CellState s) { return s == CellState::Missing; });
}

double ChainState::column_value(const std::string& name, std::size_t row) const {
    const Column& c = data_.column(name);
    switch (c.state[row]) {
        case CellState::Observed:
            return c.values[row];
        case CellState::Missing:
            throw DataError("column '" + name + "' row id " + data_.ids[row] +
                            " is not completed yet; impute it in an earlier block");
        case CellState::Ineligible:
            throw DataError("column '" + name + "' row id " + data_.ids[row] +
                            " is ineligible; wrap the reference in amt() or own()");
    }
    return 0.0;
}

bool ChainState::column_eligible(const std::string& name, std::size_t row) const {
    return data_.column(name).state[row] != CellState::Ineligible;
}

double ChainState::sequence_average(const std::string& seq, std::size_t row) const {
    const auto* cols = plan_->sequence_columns(seq);
    if (!cols) throw PlanError("sequence '" + seq + "' is not declared");
    double sum = 0.0;
    for (const auto& name : *cols)
        if (column_eligible(name, row)) sum += column_value(name, row);
    return sum / static_cast<double>(cols->size());
}

LagFeatures build_lag_features(const ChainState& state, const std::string& sequence, int spell,
                               const std::vector<std::size_t>& rows) {
    const auto* cols = state.plan().sequence_columns(sequence);
    if (!cols) throw PlanError("sequence '" + sequence + "' is not declared");
    if (spell < 1 || spell > static_cast<int>(cols->size()))
        throw PlanError("spell index out of range for sequence '" + sequence + "'");

    LagFeatures f;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    f.lag_ownership = Vector::Zero(n);
    f.lag_amount = Vector::Zero(n);
    f.sequence_average = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        f.sequence_average[i] = state.sequence_average(sequence, rows[static_cast<std::size_t>(i)]);
    if (spell == 1) return f;  // zero initial condition

    const std::string& prev = (*cols)[static_cast<std::size_t>(spell - 2)];
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t r = rows[static_cast<std::size_t>(i)];
        if (!state.column_eligible(prev, r)) continue;  // no previous spell: zeros
        const double v = state.column_value(prev, r);
        f.lag_amount[i] = v;
        f.lag_ownership[i] = v > 0.0 ? 1.0 : 0.0;
    }
    return f;
}

std::vector<PoolSelection> select_pools(const ChainState& state, const PoolingPolicy& policy,
                                        const std::vector<std::size_t>& fit_rows,
                                        const std::vector<std::size_t>& impute_rows) {
    std::vector<PoolSelection> pools;
    if (!policy.enabled) {
        PoolSelection all;
        all.label = "all";
        all.fit_rows = fit_rows;
        all.impute_rows = impute_rows;
        pools.push_back(std::move(all));
        return pools;
    }
    const Plan& plan = state.plan();
    if (plan.country_column.empty() || plan.regions.empty())
        throw PlanError("pooling requires a country column and a region partition");

    auto region_at = [&](std::size_t row) {
        const double code = state.column_value(plan.country_column, row);
        const auto region = plan.region_of(code);
        if (!region)
            throw DataError("country code " + std::to_string(code) +
                            " is not covered by the region partition");
        return *region;
    };

    std::map<std::string, std::vector<std::size_t>> fit_by_region, mis_by_region;
    for (std::size_t r : fit_rows) fit_by_region[region_at(r)].push_back(r);
    for (std::size_t r : impute_rows) mis_by_region[region_at(r)].push_back(r);

    std::vector<std::size_t> pooled_impute;
    for (const auto& [region, codes] : plan.regions) {
        (void)codes;
        const auto fit_it = fit_by_region.find(region);
        const auto mis_it = mis_by_region.find(region);
        const long n_fit = fit_it == fit_by_region.end()
                               ? 0
                               : static_cast<long>(fit_it->second.size());
        if (n_fit >= policy.min_cell) {
            if (mis_it == mis_by_region.end() || mis_it->second.empty()) continue;
            PoolSelection pool;
            pool.label = region;
            pool.fit_rows = fit_it->second;
            pool.impute_rows = mis_it->second;
            std::set<double> countries;
            for (std::size_t r : pool.fit_rows)
                countries.insert(state.column_value(plan.country_column, r));
            bool first = true;
            for (double code : countries) {
                if (first) {  // reference category
                    first = false;
                    continue;
                }
                pool.country_dummies.emplace_back("country_" + format_country(code), code);
            }
            pools.push_back(std::move(pool));
        } else if (mis_it != mis_by_region.end()) {
            pooled_impute.insert(pooled_impute.end(), mis_it->second.begin(),
                                 mis_it->second.end());
        }
    }

    if (!pooled_impute.empty()) {
        std::sort(pooled_impute.begin(), pooled_impute.end());
        PoolSelection pool;
        pool.label = "pooled";
        pool.fit_rows = fit_rows;  // all regions contribute
        pool.impute_rows = std::move(pooled_impute);
        std::set<std::string> present;
        for (std::size_t r : pool.fit_rows) present.insert(region_at(r));
        bool first = true;
        for (const auto& [region, codes] : plan.regions) {
            (void)codes;
            if (!present.count(region)) continue;
            if (first) {
                first = false;
                continue;
            }
            pool.region_dummies.emplace_back("region_" + region, region);
        }
        pools.push_back(std::move(pool));
    }
    return pools;
}

CellBounds evaluate_bounds_rule(const BoundsRule& rule, const std::vector<std::size_t>& rows,
                                const ChainState& state, const std::string& variable) {
    CellBounds bounds;
    bounds.reserve(rows.size());
    for (std::size_t r : rows) {
        IntervalObs cell;
        cell.lo = rule.lo->eval(state, r);
        cell.hi = rule.hi->eval(state, r);
        if (std::isnan(cell.lo) || std::isnan(cell.hi))
            throw BoundsError("variable '" + variable + "' row id " + state.data().ids[r] +
                              ": bounds evaluate to NaN");
        if (cell.lo > cell.hi)
            throw BoundsError("variable '" + variable + "' row id " + state.data().ids[r] +
                              ": inconsistent bounds lo=" + std::to_string(cell.lo) +
                              " > hi=" + std::to_string(cell.hi));
        bounds.push_back(cell);
    }
    return bounds;
}

namespace {

// Everything needed to refit-and-redraw one variable (or one spell).
struct UpdateSpec {
    std::string variable;
    ImputerSpec imputer;
    const std::vector<ExprPtr>* predictors = nullptr;
    const std::vector<std::string>* predictor_srcs = nullptr;
    const Expr* eligibility = nullptr;
    const BoundsRule* bounds = nullptr;
    const PoolingPolicy* pool = nullptr;
    std::string sequence;  // empty for scalars
    int spell = 0;         // 1-based for sequences
    int chain = 0;         // 1-based inside twofold blocks
};

std::vector<std::string> referenced_columns(const Expr& e, const Plan& plan) {
    std::vector<std::string> raw;
    e.collect_columns(raw);
    std::vector<std::string> out;
    for (const auto& name : raw) {
        if (name.rfind("seq:", 0) == 0) {
            const auto* cols = plan.sequence_columns(name.substr(4));
            if (!cols) throw PlanError("sequence '" + name.substr(4) + "' is not declared");
            out.insert(out.end(), cols->begin(), cols->end());
        } else {
            out.push_back(name);
        }
    }
    return out;
}

Matrix evaluate_columns(const std::vector<std::function<double(std::size_t)>>& builders,
                        const std::vector<std::size_t>& rows) {
    Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(builders.size()));
    for (std::size_t j = 0; j < builders.size(); ++j)
        for (std::size_t i = 0; i < rows.size(); ++i)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = builders[j](rows[i]);
    return X;
}

void update_variable(ChainState& state, const UpdateSpec& spec, RngStream& rng,
                     const std::set<std::string>& pending, int iteration, int replicate,
                     const std::string& block_name, const TraceHook& trace) {
    const ChainState::VarMask mask = state.bind_variable(spec.variable, *spec.eligibility);
    if (mask.impute_rows.empty()) return;  // fully observed: skipped by sweeps

    static const PoolingPolicy no_pool;
    const PoolingPolicy& policy = spec.pool ? *spec.pool : no_pool;
    const std::vector<PoolSelection> pools =
        select_pools(state, policy, mask.fit_rows, mask.impute_rows);

    for (const PoolSelection& pool : pools) {
        if (pool.impute_rows.empty()) continue;

        // Candidate design columns: intercept, usable predictors, lag features
        // for sequence spells, then pool dummies.
        std::vector<std::string> names{"(intercept)"};
        std::vector<std::function<double(std::size_t)>> builders;
        builders.emplace_back([](std::size_t) { return 1.0; });

        if (spec.predictors) {
            for (std::size_t p = 0; p < spec.predictors->size(); ++p) {
                const ExprPtr& expr = (*spec.predictors)[p];
                bool usable = true;
                if (!pending.empty()) {
                    for (const auto& col : referenced_columns(*expr, state.plan()))
                        if (pending.count(col)) {
                            usable = false;  // not initialized yet (monotone pass)
                            break;
                        }
                }
                if (!usable) continue;
                names.push_back((*spec.predictor_srcs)[p]);
                builders.emplace_back(
                    [&state, expr](std::size_t r) { return expr->eval(state, r); });
            }
        }

        if (!spec.sequence.empty() && spec.spell >= 2) {
            const auto* cols = state.plan().sequence_columns(spec.sequence);
            const std::string prev = (*cols)[static_cast<std::size_t>(spec.spell - 2)];
            names.push_back("lag_own(" + prev + ")");
            builders.emplace_back([&state, prev](std::size_t r) {
                return state.column_eligible(prev, r) && state.column_value(prev, r) > 0.0 ? 1.0
                                                                                           : 0.0;
            });
            names.push_back("lag_amt(" + prev + ")");
            builders.emplace_back([&state, prev](std::size_t r) {
                return state.column_eligible(prev, r) ? state.column_value(prev, r) : 0.0;
            });
        }

        const std::string country_col = state.plan().country_column;
        for (const auto& [name, code] : pool.country_dummies) {
            names.push_back(name);
            builders.emplace_back([&state, country_col, code = code](std::size_t r) {
                return state.column_value(country_col, r) == code ? 1.0 : 0.0;
            });
        }
        for (const auto& [name, region] : pool.region_dummies) {
            names.push_back(name);
            builders.emplace_back([&state, country_col, region = region](std::size_t r) {
                const auto reg = state.plan().region_of(state.column_value(country_col, r));
                return reg && *reg == region ? 1.0 : 0.0;
            });
        }

        Matrix X_fit_full = evaluate_columns(builders, pool.fit_rows);
        Matrix X_mis_full = evaluate_columns(builders, pool.impute_rows);

        // Constant columns (lag features at the first spell, single-country
        // pools) carry no information and would break the rank check.
        std::vector<Eigen::Index> keep{0};
        for (Eigen::Index j = 1; j < X_fit_full.cols(); ++j) {
            const double mn = X_fit_full.col(j).minCoeff();
            const double mx = X_fit_full.col(j).maxCoeff();
            if (mx > mn) keep.push_back(j);
        }
        DesignMatrix X_fit;
        Matrix X_mis(X_mis_full.rows(), static_cast<Eigen::Index>(keep.size()));
        X_fit.X.resize(X_fit_full.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            X_fit.X.col(static_cast<Eigen::Index>(j)) = X_fit_full.col(keep[j]);
            X_mis.col(static_cast<Eigen::Index>(j)) = X_mis_full.col(keep[j]);
            X_fit.names.push_back(names[static_cast<std::size_t>(keep[j])]);
        }

        Vector y_fit(static_cast<Eigen::Index>(pool.fit_rows.size()));
        for (std::size_t i = 0; i < pool.fit_rows.size(); ++i)
            y_fit[static_cast<Eigen::Index>(i)] = state.value(spec.variable, pool.fit_rows[i]);

        std::optional<CellBounds> bounds;
        if (spec.bounds)
            bounds = evaluate_bounds_rule(*spec.bounds, pool.impute_rows, state, spec.variable);

        Vector values;
        try {
            values = run_imputer(spec.imputer, y_fit, X_fit, X_mis, bounds, rng);
        } catch (const Error& e) {
            std::string where = "variable '" + spec.variable + "'";
            if (spec.chain > 0) where += " (chain " + std::to_string(spec.chain) + ")";
            if (spec.spell > 0) where += " (spell " + std::to_string(spec.spell) + ")";
            where += ", pool '" + pool.label + "', block '" + block_name + "'";
            if (static_cast<long>(pool.fit_rows.size()) <
                static_cast<long>(X_fit.cols()))
                throw Error(e.category(), where + ": " + e.what() +
                                               " (pooled sample smaller than the predictor "
                                               "count; reduce the predictor set)");
            throw Error(e.category(), where + ": " + e.what());
        }

        for (std::size_t i = 0; i < pool.impute_rows.size(); ++i)
            state.set_value(spec.variable, pool.impute_rows[i],
                            values[static_cast<Eigen::Index>(i)]);

        if (trace) {
            TraceEvent ev;
            ev.replicate = replicate;
            ev.block = block_name;
            ev.iteration = iteration;
            ev.chain = spec.chain;
            ev.variable = spec.variable;
            ev.spell = spec.spell;
            ev.pool = pool.label;
            ev.q = spec.imputer.method == ImputeMethod::Pmm ||
                           (spec.imputer.method == ImputeMethod::TwoPart &&
                            spec.imputer.amount->method == ImputeMethod::Pmm)
                       ? (spec.imputer.method == ImputeMethod::Pmm ? spec.imputer.q
                                                                   : spec.imputer.amount->q)
                       : 0;
            ev.fit_rows = pool.fit_rows;
            ev.impute_rows = pool.impute_rows;
            ev.imputed_values = values;
            ev.fit_values = y_fit;
            ev.design_columns = X_fit.names;
            ev.design_fit = X_fit.X;
            ev.design_mis = X_mis;
            trace(ev);
        }
    }
}

UpdateSpec spec_from_role(const VariableRole& role) {
    UpdateSpec spec;
    spec.variable = role.name;
    spec.imputer = role.imputer;
    spec.predictors = &role.predictors;
    spec.predictor_srcs = &role.predictor_srcs;
    spec.eligibility = role.eligibility.get();
    spec.bounds = role.bounds_rule ? &*role.bounds_rule : nullptr;
    spec.pool = &role.pool;
    return spec;
}

std::vector<std::size_t> block_order(ChainState& state, const FcsBlock& block) {
    std::vector<double> observed_frac;
    observed_frac.reserve(block.variables.size());
    for (const auto& var : block.variables) {
        const auto mask = state.bind_variable(var.name, *var.eligibility);
        const double total = static_cast<double>(mask.fit_rows.size() + mask.impute_rows.size());
        observed_frac.push_back(total == 0.0 ? 1.0
                                             : static_cast<double>(mask.fit_rows.size()) / total);
    }
    return order_by_missingness(observed_frac);
}

std::set<std::string> pending_variables(ChainState& state, const FcsBlock& block) {
    std::set<std::string> pending;
    for (const auto& var : block.variables)
        if (!state.bind_variable(var.name, *var.eligibility).impute_rows.empty())
            pending.insert(var.name);
    return pending;
}

}  // namespace

void initialize_monotone(ChainState& state, const FcsBlock& block, RngStream& rng,
                         const TraceHook& trace, int replicate) {
    const auto order = block_order(state, block);
    std::set<std::string> pending = pending_variables(state, block);
    for (std::size_t idx : order) {
        const VariableRole& var = block.variables[idx];
        try {
            update_variable(state, spec_from_role(var), rng, pending, 0, replicate, block.name,
                            trace);
        } catch (const Error& e) {
            throw Error(e.category(),
                        "monotone initialization failed at variable '" + var.name + "': " +
                            e.what());
        }
        pending.erase(var.name);
    }
}

void fcs_sweep(ChainState& state, const FcsBlock& block, int iteration, RngStream& rng,
               const TraceHook& trace, int replicate) {
    const auto order = block_order(state, block);
    const std::set<std::string> no_pending;
    for (std::size_t idx : order)
        update_variable(state, spec_from_role(block.variables[idx]), rng, no_pending, iteration,
                        replicate, block.name, trace);
}

namespace {

std::vector<UpdateSpec> twofold_schedule(const ChainState& state, const TwofoldBlock& block) {
    std::vector<UpdateSpec> schedule;
    int chain_index = 0;
    for (const auto& chain : block.chains) {
        ++chain_index;
        if (chain.kind == TwofoldChain::Kind::Sequence) {
            const SequenceChain& seq = chain.sequence;
            const auto* cols = state.plan().sequence_columns(seq.sequence);
            if (!cols) throw PlanError("sequence '" + seq.sequence + "' is not declared");
            for (std::size_t h = 0; h < cols->size(); ++h) {
                UpdateSpec spec;
                spec.variable = (*cols)[h];
                spec.imputer = seq.imputer;
                const int q = seq.q_schedule[h];
                if (spec.imputer.method == ImputeMethod::Pmm) spec.imputer.q = q;
                if (spec.imputer.amount) {
                    spec.imputer.amount = std::make_shared<ImputerSpec>(*spec.imputer.amount);
                    if (spec.imputer.amount->method == ImputeMethod::Pmm)
                        spec.imputer.amount->q = q;
                }
                spec.predictors = &seq.predictors;
                spec.predictor_srcs = &seq.predictor_srcs;
                spec.eligibility = seq.eligibility.get();
                spec.pool = &seq.pool;
                spec.sequence = seq.sequence;
                spec.spell = static_cast<int>(h) + 1;
                spec.chain = chain_index;
                schedule.push_back(std::move(spec));
            }
        } else {
            for (const auto& var : chain.scalars) {
                UpdateSpec spec = spec_from_role(var);
                spec.chain = chain_index;
                schedule.push_back(std::move(spec));
            }
        }
    }
    return schedule;
}

}  // namespace

void run_twofold_block(ChainState& state, const TwofoldBlock& block, int burnin, RngStream& rng,
                       const TraceHook& trace, int replicate) {
    const std::vector<UpdateSpec> schedule = twofold_schedule(state, block);

    // Monotone pass in chain-then-spell order; predictors whose inputs are not
    // initialized yet drop out of the design for this pass only.
    std::set<std::string> pending;
    for (const auto& spec : schedule)
        if (!state.bind_variable(spec.variable, *spec.eligibility).impute_rows.empty())
            pending.insert(spec.variable);
    for (const auto& spec : schedule) {
        try {
            update_variable(state, spec, rng, pending, 0, replicate, block.name, trace);
        } catch (const Error& e) {
            throw Error(e.category(), "two-fold initialization failed at chain " +
                                          std::to_string(spec.chain) + ", variable '" +
                                          spec.variable + "': " + e.what());
        }
        pending.erase(spec.variable);
    }

    const std::set<std::string> no_pending;
    for (int t = 1; t <= burnin; ++t) {
        for (const auto& spec : schedule) {
            try {
                update_variable(state, spec, rng, no_pending, t, replicate, block.name, trace);
            } catch (const Error& e) {
                throw Error(e.category(), "two-fold iteration " + std::to_string(t) +
                                              " failed at chain " + std::to_string(spec.chain) +
                                              ", spell " + std::to_string(spec.spell) + ": " +
                                              e.what());
            }
        }
    }
}

namespace {

void validate_plan_binding(const ColumnarDataset& data, const Plan& plan) {
    // Sequences must name real columns.
    for (const auto& [seq, cols] : plan.sequences)
        for (const auto& col : cols)
            if (!data.has_column(col))
                throw PlanError("sequence '" + seq + "' references unknown column '" + col + "'");

    auto check_method_type = [&](const std::string& var, const ImputerSpec& imp) {
        const ColumnType type = data.column(var).type;
        auto ok = [&](std::initializer_list<ColumnType> allowed) {
            for (ColumnType t : allowed)
                if (t == type) return true;
            return false;
        };
        bool good = true;
        switch (imp.method) {
            case ImputeMethod::GaussianLinear:
            case ImputeMethod::Pmm:
            case ImputeMethod::IntervalRegression:
            case ImputeMethod::TwoPart:
                good = ok({ColumnType::Real, ColumnType::Count});
                break;
            case ImputeMethod::PoissonDraw: good = ok({ColumnType::Count}); break;
            case ImputeMethod::LogitDraw: good = ok({ColumnType::Binary}); break;
            case ImputeMethod::OrderedDraw: good = ok({ColumnType::Ordered}); break;
            case ImputeMethod::MultinomialDraw: good = ok({ColumnType::Nominal}); break;
        }
        if (!good)
            throw PlanError("variable '" + var + "': method is incompatible with column type " +
                            to_string(type));
    };

    std::unordered_set<std::string> targeted;
    auto claim = [&](const std::string& var) {
        if (!data.has_column(var)) throw PlanError("plan targets unknown column '" + var + "'");
        if (!targeted.insert(var).second)
            throw PlanError("column '" + var + "' is targeted by more than one block");
    };

    for (const auto& block : plan.blocks) {
        if (block.type == PlanBlock::Type::Fcs) {
            for (const auto& var : block.fcs.variables) {
                claim(var.name);
                check_method_type(var.name, var.imputer);
            }
        } else {
            for (const auto& chain : block.twofold.chains) {
                if (chain.kind == TwofoldChain::Kind::Sequence) {
                    const auto* cols = plan.sequence_columns(chain.sequence.sequence);
                    if (!cols)
                        throw PlanError("twofold chain references undeclared sequence '" +
                                        chain.sequence.sequence + "'");
                    for (const auto& col : *cols) {
                        claim(col);
                        check_method_type(col, chain.sequence.imputer);
                    }
                    // Own-sequence feedback is carried by the lag features, not
                    // by the declared predictors.
                    for (const auto& src : chain.sequence.predictor_srcs) {
                        for (const auto& ref :
                             referenced_columns(*parse_expression(src), plan)) {
                            for (const auto& col : *cols)
                                if (ref == col)
                                    throw PlanError(
                                        "sequence chain '" + chain.sequence.sequence +
                                        "': predictor '" + src +
                                        "' references its own sequence; use the lag features");
                        }
                    }
                } else {
                    for (const auto& var : chain.scalars) {
                        claim(var.name);
                        check_method_type(var.name, var.imputer);
                    }
                }
            }
        }
    }

    // Expression references must resolve to known columns, and eligibility
    // rules must not hinge on same-block targets.
    auto check_refs = [&](const std::vector<std::string>& refs, const std::string& where) {
        for (const auto& ref : refs)
            if (!data.has_column(ref))
                throw PlanError(where + ": unknown column '" + ref + "'");
    };
    for (const auto& block : plan.blocks) {
        std::unordered_set<std::string> block_vars;
        auto gather = [&](const std::string& v) { block_vars.insert(v); };
        if (block.type == PlanBlock::Type::Fcs) {
            for (const auto& var : block.fcs.variables) gather(var.name);
        } else {
            for (const auto& chain : block.twofold.chains) {
                if (chain.kind == TwofoldChain::Kind::Sequence) {
                    for (const auto& col : *plan.sequence_columns(chain.sequence.sequence))
                        gather(col);
                } else {
                    for (const auto& var : chain.scalars) gather(var.name);
                }
            }
        }
        auto check_eligibility = [&](const Expr& e, const std::string& where) {
            const auto refs = referenced_columns(e, plan);
            check_refs(refs, where);
            for (const auto& ref : refs)
                if (block_vars.count(ref))
                    throw PlanError(where + ": eligibility must not reference a variable "
                                            "imputed in the same block");
        };
        if (block.type == PlanBlock::Type::Fcs) {
            for (const auto& var : block.fcs.variables) {
                check_eligibility(*var.eligibility, "variable '" + var.name + "' eligibility");
                for (std::size_t p = 0; p < var.predictors.size(); ++p)
                    check_refs(referenced_columns(*var.predictors[p], plan),
                               "variable '" + var.name + "' predictor '" +
                                   var.predictor_srcs[p] + "'");
                if (var.bounds_rule) {
                    check_refs(referenced_columns(*var.bounds_rule->lo, plan),
                               "variable '" + var.name + "' lower bound");
                    check_refs(referenced_columns(*var.bounds_rule->hi, plan),
                               "variable '" + var.name + "' upper bound");
                }
            }
        } else {
            for (const auto& chain : block.twofold.chains) {
                if (chain.kind == TwofoldChain::Kind::Sequence) {
                    const auto& seq = chain.sequence;
                    check_eligibility(*seq.eligibility,
                                      "sequence '" + seq.sequence + "' eligibility");
                    for (std::size_t p = 0; p < seq.predictors.size(); ++p)
                        check_refs(referenced_columns(*seq.predictors[p], plan),
                                   "sequence '" + seq.sequence + "' predictor '" +
                                       seq.predictor_srcs[p] + "'");
                } else {
                    for (const auto& var : chain.scalars) {
                        check_eligibility(*var.eligibility,
                                          "variable '" + var.name + "' eligibility");
                        for (std::size_t p = 0; p < var.predictors.size(); ++p)
                            check_refs(referenced_columns(*var.predictors[p], plan),
                                       "variable '" + var.name + "' predictor '" +
                                           var.predictor_srcs[p] + "'");
                    }
                }
            }
        }
    }

    if (!plan.country_column.empty()) {
        const Column& country = data.column(plan.country_column);
        for (std::size_t r = 0; r < data.n_rows(); ++r)
            if (country.state[r] != CellState::Observed)
                throw DataError("country column must be fully observed (row id " + data.ids[r] +
                                ")");
    }
}

void verify_replicate(const ColumnarDataset& input, const ColumnarDataset& completed,
                      const Plan& plan, int replicate) {
    std::unordered_set<std::string> covered;
    for (const auto& block : plan.blocks) {
        if (block.type == PlanBlock::Type::Fcs) {
            for (const auto& var : block.fcs.variables) covered.insert(var.name);
        } else {
            for (const auto& chain : block.twofold.chains) {
                if (chain.kind == TwofoldChain::Kind::Sequence) {
                    for (const auto& col : *plan.sequence_columns(chain.sequence.sequence))
                        covered.insert(col);
                } else {
                    for (const auto& var : chain.scalars) covered.insert(var.name);
                }
            }
        }
    }
    for (const auto& col : input.columns) {
        const Column& out = completed.column(col.name);
        for (std::size_t r = 0; r < input.n_rows(); ++r) {
            if (col.state[r] == CellState::Observed) {
                if (out.state[r] != CellState::Observed || out.values[r] != col.values[r])
                    throw DataError("replicate " + std::to_string(replicate) +
                                    ": observed cell changed in column '" + col.name +
                                    "' row id " + input.ids[r]);
            }
            if (col.state[r] == CellState::Ineligible &&
                (out.state[r] != CellState::Ineligible ||
                 out.values[r] != kIneligibleSentinel))
                throw DataError("replicate " + std::to_string(replicate) +
                                ": ineligible cell changed in column '" + col.name + "'");
            if (covered.count(col.name) && out.state[r] == CellState::Missing)
                throw DataError("replicate " + std::to_string(replicate) + ": column '" +
                                col.name + "' row id " + input.ids[r] +
                                " is still missing after the run");
        }
    }
}

}  // namespace

ImputedStore run_multiple_imputation(const ColumnarDataset& data, const Plan& plan,
                                     const TraceHook& trace) {
    data.validate();
    validate_plan_binding(data, plan);

    ImputedStore store;
    store.m = plan.m;
    store.blocks.reserve(static_cast<std::size_t>(plan.m) + 1);
    store.blocks.push_back(data);  // index 0: the input, bit-exact

    for (int m = 1; m <= plan.m; ++m) {
        try {
            RngStream rng(plan.seed ^ static_cast<std::uint64_t>(m));
            ChainState state(data, plan);
            for (const auto& block : plan.blocks) {
                if (block.type == PlanBlock::Type::Fcs) {
                    initialize_monotone(state, block.fcs, rng, trace, m);
                    for (int t = 1; t <= plan.burnin; ++t)
                        fcs_sweep(state, block.fcs, t, rng, trace, m);
                } else {
                    run_twofold_block(state, block.twofold, plan.burnin, rng, trace, m);
                }
            }
            ColumnarDataset completed = std::move(state).release_data();
            verify_replicate(data, completed, plan, m);
            store.blocks.push_back(std::move(completed));
        } catch (const Error& e) {
            throw Error(e.category(), "chain " + std::to_string(m) + ": " + e.what());
        }
    }
    store.validate();
    return store;
}

}  // namespace fcsforge
