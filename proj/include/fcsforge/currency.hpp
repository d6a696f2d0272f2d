#ifndef FCSFORGE_CURRENCY_HPP_
#define FCSFORGE_CURRENCY_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fcsforge {

using Year = int;

/// Reference year every amount is expressed in after conversion.
inline constexpr Year kBaseYear = 2017;

/// Plausibility window for self-reported years.
inline constexpr Year kMinYear = 1900;
inline constexpr Year kMaxYear = 2019;

enum class LabelKind { IsoOrLegacy, Generic, ExplicitHistorical };

struct CurrencyLabel {
    LabelKind kind = LabelKind::IsoOrLegacy;
    std::string text;
};

struct CanonicalCurrency {
    std::string code;
    Year valid_from = 0;
    Year valid_to = 0;
    std::string country;
};

struct RedenominationRule {
    std::string old_code;
    std::string new_code;
    double factor = 1.0;  // old units per new unit
    Year effective_year = 0;
};

struct FxSeries {
    std::string code;
    std::map<Year, double> rates;  // local units per USD
};

struct CpiSeries {
    std::string scope;  // currency or country code
    std::map<Year, double> levels;
};

struct PppIndex {
    std::string country;
    double factor = 1.0;  // nominal EUR-2017 -> DE-2017 purchasing power
};

enum class ItemKind { Y1, Y2, Y3, Y4, Y5, Y6, Y7, Y8 };

ItemKind item_kind_from_string(const std::string& s);
std::string to_string(ItemKind k);

struct MonetaryRecord {
    double amount = 0.0;
    CurrencyLabel label;
    std::string country;
    Year year = 0;
    ItemKind item = ItemKind::Y1;
};

enum class ConversionStatus {
    Converted,
    UnresolvedLabel,
    NoFxCoverage,
    NoCpiCoverage,
    Inconsistent,
};

std::string to_string(ConversionStatus s);

struct ConversionOutcome {
    ConversionStatus status = ConversionStatus::UnresolvedLabel;
    std::optional<double> eur2017;
    std::optional<double> ppp;
    std::optional<Year> bridge_year;
    std::vector<std::string> path;  // every factor applied, in order
};

/// Crosswalk row: a label seen in the field, the country/years it is valid for,
/// and the canonical code it resolves to. For specific codes label == code.
struct CrosswalkRow {
    std::string label;
    std::string country;
    Year valid_from = 0;
    Year valid_to = 0;
    std::string code;
};

/// Immutable after load; shareable across threads.
class ConversionTables {
public:
    std::vector<CrosswalkRow> crosswalk;
    std::map<std::string, FxSeries> fx;            // by currency code
    std::map<std::string, CpiSeries> cpi;          // by currency or country code
    std::vector<RedenominationRule> redenominations;
    std::map<std::string, PppIndex> ppp;           // by country

    /// Rejects ambiguous crosswalk rows (overlapping (label, country) intervals)
    /// and non-positive rates/levels/factors.
    void validate() const;

    const CpiSeries* cpi_for(const std::string& code, const std::string& country) const;
};

/// Loads crosswalk.csv, fx.csv, cpi.csv, redenominations.csv, ppp.csv from a
/// directory and validates the result.
ConversionTables load_conversion_tables(const std::string& dir);

/// Maps a record to the canonical currency in force for its (label, country, year).
/// Failure surfaces as a ConversionOutcome-style status, never a throw.
struct ResolveResult {
    std::optional<CanonicalCurrency> canonical;
    ConversionStatus failure = ConversionStatus::Converted;  // meaningful when !canonical
};

ResolveResult resolve_currency(const MonetaryRecord& rec, const ConversionTables& tables);

/// Face-value rescale applied before the FX step when the FX backbone only
/// covers the successor code. Identity when no rule chains away from `code`.
std::pair<double, std::string> apply_redenomination(double amount, const std::string& code,
                                                    Year year,
                                                    const std::vector<RedenominationRule>& rules,
                                                    const ConversionTables& tables,
                                                    std::vector<std::string>* path = nullptr);

/// USD-hub conversion to EUR at the base year, with CPI-assisted bridging when
/// the FX rate at `rec.year` is missing. PPP adjustment is applied on success
/// when the record's country is in the PPP index.
ConversionOutcome convert_to_eur2017(const MonetaryRecord& rec, const CanonicalCurrency& canon,
                                     const ConversionTables& tables);

/// Convenience: resolve + convert in one call.
ConversionOutcome convert_record(const MonetaryRecord& rec, const ConversionTables& tables);

double ppp_adjust(double eur2017, const std::string& country,
                  const std::map<std::string, PppIndex>& index);

struct TrimResult {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<bool> kept;
};

/// Two-sided trim with nearest-rank quantiles. Fewer than 2 values: everything
/// is kept and the bounds collapse to the data range.
TrimResult trim_bounds(const std::vector<double>& values, double lower_q = 0.025,
                       double upper_q = 0.975);

/// Nearest-rank quantile (q in (0,1]); values need not be sorted.
double nearest_rank_quantile(std::vector<double> values, double q);

struct CoverageRow {
    std::string group;
    long total = 0;
    long converted = 0;
    double rate = 0.0;  // percent, rounded to 2 decimals for display
};

/// Conversion coverage per item kind and per country; empty groups omitted.
std::vector<CoverageRow> coverage_report(const std::vector<MonetaryRecord>& records,
                                         const std::vector<ConversionOutcome>& outcomes);

}  // namespace fcsforge

#endif  // FCSFORGE_CURRENCY_HPP_
