#ifndef FCSFORGE_PLAN_HPP_
#define FCSFORGE_PLAN_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fcsforge/dataset.hpp"
#include "fcsforge/expr.hpp"
#include "fcsforge/imputers.hpp"

namespace fcsforge {

/// Macro-region pooling: estimate per region with country dummies when the
/// region holds at least `min_cell` observed rows, otherwise pool every region
/// and switch to region dummies.
struct PoolingPolicy {
    bool enabled = false;
    int min_cell = 50;
};

struct BoundsRule {
    std::string lo_src, hi_src;
    ExprPtr lo, hi;
};

struct VariableRole {
    std::string name;
    ImputerSpec imputer;
    std::vector<std::string> predictor_srcs;
    std::vector<ExprPtr> predictors;
    std::string eligibility_src = "1";
    ExprPtr eligibility;
    std::optional<BoundsRule> bounds_rule;
    PoolingPolicy pool;
};

/// One FCS pass: monotone initialization then burn-in sweeps over the
/// variables ordered from most to least observed.
struct FcsBlock {
    std::string name;
    std::vector<VariableRole> variables;
};

/// AR(1) spell chain inside a two-fold block. Lag features (previous-spell
/// ownership and amount, zero at the first spell) are added by the engine.
struct SequenceChain {
    std::string sequence;               // declared sequence name
    ImputerSpec imputer;                // applied per spell
    std::vector<int> q_schedule;        // one entry per spell (PMM pool sizes)
    std::vector<std::string> predictor_srcs;
    std::vector<ExprPtr> predictors;
    std::string eligibility_src = "1";
    ExprPtr eligibility;
    PoolingPolicy pool;
};

struct TwofoldChain {
    enum class Kind { Sequence, Scalars };
    Kind kind = Kind::Sequence;
    SequenceChain sequence;             // when kind == Sequence
    std::vector<VariableRole> scalars;  // when kind == Scalars
};

/// Nested iteration: an outer loop over the chains, an inner loop over the
/// spells (or variables) of each chain.
struct TwofoldBlock {
    std::string name;
    std::vector<TwofoldChain> chains;
};

struct PlanBlock {
    enum class Type { Fcs, Twofold };
    Type type = Type::Fcs;
    FcsBlock fcs;
    TwofoldBlock twofold;
};

struct Plan {
    int m = 5;
    int burnin = 10;
    std::uint64_t seed = 0;
    std::string id_column = "id";
    std::string country_column;                            // optional
    std::vector<std::pair<std::string, std::vector<double>>> regions;  // region -> country codes
    std::vector<SchemaEntry> schema;
    std::set<std::string> missing_codes;
    std::vector<std::pair<std::string, std::vector<std::string>>> sequences;
    std::vector<PlanBlock> blocks;

    const std::vector<std::string>* sequence_columns(const std::string& name) const;
    std::optional<std::string> region_of(double country_code) const;
};

/// Parses and validates a plan file. Unknown keys are rejected; m and burnin
/// default to 5 and 10.
Plan parse_plan(const std::string& path);
Plan parse_plan_text(const std::string& text, const std::string& origin);

/// Canonical JSON rendering (round-trips through parse_plan_text).
std::string plan_to_json(const Plan& plan);

/// Default PMM neighbor schedule: 10 donors through spell 7, then tapering
/// with the thinning sample down to a floor of 3.
int tapered_neighbor_count(int spell);

}  // namespace fcsforge

#endif  // FCSFORGE_PLAN_HPP_
