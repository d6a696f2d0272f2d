#ifndef FCSFORGE_EXPR_HPP_
#define FCSFORGE_EXPR_HPP_

#include <memory>
#include <string>
#include <vector>

namespace fcsforge {

/// Row-wise evaluation surface the engine exposes to plan expressions.
class EvalContext {
public:
    virtual ~EvalContext() = default;
    /// Completed value of a column at a row; throws when missing/ineligible.
    virtual double column_value(const std::string& name, std::size_t row) const = 0;
    virtual bool column_eligible(const std::string& name, std::size_t row) const = 0;
    /// Average of a declared spell sequence, ineligible spells counting as zero.
    virtual double sequence_average(const std::string& seq, std::size_t row) const = 0;
};

/// Arithmetic / comparison / logical expression over dataset columns.
///
/// Grammar: || && over comparisons over +- */ with unary -/!; literals,
/// `inf`, column names, and the functions min, max, abs, log, exp, sqrt,
/// ifelse(cond,a,b), amt(col), own(col), seqavg(seq).
class Expr {
public:
    virtual ~Expr() = default;
    virtual double eval(const EvalContext& ctx, std::size_t row) const = 0;
    /// Column names referenced anywhere in the tree.
    virtual void collect_columns(std::vector<std::string>& out) const = 0;
};

using ExprPtr = std::shared_ptr<const Expr>;

/// Parses an expression; throws PlanError with position info on bad input.
ExprPtr parse_expression(const std::string& text);

/// Convenience: nonzero is true.
bool eval_predicate(const Expr& e, const EvalContext& ctx, std::size_t row);

}  // namespace fcsforge

#endif  // FCSFORGE_EXPR_HPP_
