#include "fcsforge/currency.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fcsforge/csv.hpp"
#include "fcsforge/error.hpp"

namespace fcsforge {

ItemKind item_kind_from_string(const std::string& s) {
    static const std::map<std::string, ItemKind> lut = {
        {"Y1", ItemKind::Y1}, {"Y2", ItemKind::Y2}, {"Y3", ItemKind::Y3},
        {"Y4", ItemKind::Y4}, {"Y5", ItemKind::Y5}, {"Y6", ItemKind::Y6},
        {"Y7", ItemKind::Y7}, {"Y8", ItemKind::Y8},
    };
    auto it = lut.find(s);
    if (it == lut.end()) throw ParseError("unknown item kind '" + s + "'");
    return it->second;
}

std::string to_string(ItemKind k) {
    return "Y" + std::to_string(static_cast<int>(k) + 1);
}

std::string to_string(ConversionStatus s) {
    switch (s) {
        case ConversionStatus::Converted: return "converted";
        case ConversionStatus::UnresolvedLabel: return "unresolved_label";
        case ConversionStatus::NoFxCoverage: return "no_fx_coverage";
        case ConversionStatus::NoCpiCoverage: return "no_cpi_coverage";
        case ConversionStatus::Inconsistent: return "inconsistent";
    }
    return "?";
}

void ConversionTables::validate() const {
    // Ambiguity check: for a given (label, country), validity intervals must not
    // overlap, otherwise a (country, year) lookup would admit two currencies.
    std::map<std::pair<std::string, std::string>, std::vector<const CrosswalkRow*>> grouped;
    for (const auto& row : crosswalk) {
        if (row.label.empty() || row.code.empty())
            throw DataError("crosswalk row with empty label or code");
        if (row.valid_from > row.valid_to)
            throw DataError("crosswalk row for '" + row.label + "' has valid_from > valid_to");
        grouped[{row.label, row.country}].push_back(&row);
    }
    for (auto& [key, rows] : grouped) {
        std::sort(rows.begin(), rows.end(),
                  [](const CrosswalkRow* a, const CrosswalkRow* b) {
                      return a->valid_from < b->valid_from;
                  });
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i]->valid_from <= rows[i - 1]->valid_to)
                throw DataError("ambiguous crosswalk: label '" + key.first + "' country '" +
                                key.second + "' admits multiple currencies in " +
                                std::to_string(rows[i]->valid_from) + "-" +
                                std::to_string(rows[i - 1]->valid_to) +
                                "; flag these rows for curation");
        }
    }
    for (const auto& [code, series] : fx)
        for (const auto& [year, rate] : series.rates)
            if (!(rate > 0.0))
                throw DataError("fx rate for " + code + " in " + std::to_string(year) +
                                " must be positive");
    for (const auto& [scope, series] : cpi)
        for (const auto& [year, level] : series.levels)
            if (!(level > 0.0))
                throw DataError("cpi level for " + scope + " in " + std::to_string(year) +
                                " must be positive");
    for (const auto& rule : redenominations)
        if (!(rule.factor > 0.0))
            throw DataError("redenomination " + rule.old_code + "->" + rule.new_code +
                            " must have positive factor");
    for (const auto& [country, idx] : ppp)
        if (!(idx.factor > 0.0))
            throw DataError("ppp factor for " + country + " must be positive");
}

const CpiSeries* ConversionTables::cpi_for(const std::string& code,
                                           const std::string& country) const {
    auto it = cpi.find(code);
    if (it != cpi.end()) return &it->second;
    it = cpi.find(country);
    if (it != cpi.end()) return &it->second;
    return nullptr;
}

ConversionTables load_conversion_tables(const std::string& dir) {
    ConversionTables t;

    {
        const CsvTable cw = read_csv(dir + "/crosswalk.csv");
        const int label = cw.require_column("label");
        const int country = cw.require_column("country");
        const int from = cw.require_column("valid_from");
        const int to = cw.require_column("valid_to");
        const int code = cw.require_column("code");
        for (std::size_t r = 0; r < cw.rows.size(); ++r) {
            const auto& row = cw.rows[r];
            const std::string ctx = dir + "/crosswalk.csv row " + std::to_string(r + 2);
            t.crosswalk.push_back({row[label], row[country],
                                   static_cast<Year>(parse_long(row[from], ctx)),
                                   static_cast<Year>(parse_long(row[to], ctx)), row[code]});
        }
    }
    {
        const CsvTable fx = read_csv(dir + "/fx.csv");
        const int code = fx.require_column("code");
        const int year = fx.require_column("year");
        const int rate = fx.require_column("rate");
        for (std::size_t r = 0; r < fx.rows.size(); ++r) {
            const auto& row = fx.rows[r];
            const std::string ctx = dir + "/fx.csv row " + std::to_string(r + 2);
            auto& series = t.fx[row[code]];
            series.code = row[code];
            series.rates[static_cast<Year>(parse_long(row[year], ctx))] =
                parse_double(row[rate], ctx);
        }
    }
    {
        const CsvTable cpi = read_csv(dir + "/cpi.csv");
        const int scope = cpi.require_column("scope");
        const int year = cpi.require_column("year");
        const int level = cpi.require_column("level");
        for (std::size_t r = 0; r < cpi.rows.size(); ++r) {
            const auto& row = cpi.rows[r];
            const std::string ctx = dir + "/cpi.csv row " + std::to_string(r + 2);
            auto& series = t.cpi[row[scope]];
            series.scope = row[scope];
            series.levels[static_cast<Year>(parse_long(row[year], ctx))] =
                parse_double(row[level], ctx);
        }
    }
    {
        const CsvTable rd = read_csv(dir + "/redenominations.csv");
        const int oldc = rd.require_column("old_code");
        const int newc = rd.require_column("new_code");
        const int factor = rd.require_column("factor");
        const int eff = rd.require_column("effective_year");
        for (std::size_t r = 0; r < rd.rows.size(); ++r) {
            const auto& row = rd.rows[r];
            const std::string ctx = dir + "/redenominations.csv row " + std::to_string(r + 2);
            t.redenominations.push_back({row[oldc], row[newc], parse_double(row[factor], ctx),
                                         static_cast<Year>(parse_long(row[eff], ctx))});
        }
    }
    {
        const CsvTable pp = read_csv(dir + "/ppp.csv");
        const int country = pp.require_column("country");
        const int factor = pp.require_column("factor");
        for (std::size_t r = 0; r < pp.rows.size(); ++r) {
            const auto& row = pp.rows[r];
            const std::string ctx = dir + "/ppp.csv row " + std::to_string(r + 2);
            t.ppp[row[country]] = {row[country], parse_double(row[factor], ctx)};
        }
    }
    t.validate();
    return t;
}

ResolveResult resolve_currency(const MonetaryRecord& rec, const ConversionTables& tables) {
    if (!(rec.amount > 0.0)) return {std::nullopt, ConversionStatus::Inconsistent};
    if (rec.year < kMinYear || rec.year > kMaxYear)
        return {std::nullopt, ConversionStatus::Inconsistent};
    if (rec.label.text.empty()) return {std::nullopt, ConversionStatus::UnresolvedLabel};

    if (rec.label.kind == LabelKind::IsoOrLegacy) {
        // A specific code passes through when the year lies inside its validity
        // interval; a year outside it is a year/currency conflict. Rows for the
        // record's own country win over foreign listings of the same code.
        bool code_known = false;
        const CrosswalkRow* hit = nullptr;
        for (const auto& row : tables.crosswalk) {
            if (row.code != rec.label.text || row.label != row.code) continue;
            code_known = true;
            if (rec.year < row.valid_from || rec.year > row.valid_to) continue;
            if (!hit || (row.country == rec.country && hit->country != rec.country)) hit = &row;
        }
        if (hit)
            return {CanonicalCurrency{hit->code, hit->valid_from, hit->valid_to, hit->country},
                    ConversionStatus::Converted};
        if (code_known) return {std::nullopt, ConversionStatus::Inconsistent};
        return {std::nullopt, ConversionStatus::UnresolvedLabel};
    }

    // Generic / explicit historical labels: (label, country, year) lookup.
    for (const auto& row : tables.crosswalk) {
        if (row.label != rec.label.text) continue;
        if (!row.country.empty() && row.country != rec.country) continue;
        if (rec.year >= row.valid_from && rec.year <= row.valid_to)
            return {CanonicalCurrency{row.code, row.valid_from, row.valid_to,
                                      row.country.empty() ? rec.country : row.country},
                    ConversionStatus::Converted};
    }
    return {std::nullopt, ConversionStatus::UnresolvedLabel};
}

std::pair<double, std::string> apply_redenomination(double amount, const std::string& code,
                                                    Year year,
                                                    const std::vector<RedenominationRule>& rules,
                                                    const ConversionTables& tables,
                                                    std::vector<std::string>* path) {
    (void)year;  // the face-value factor is year-invariant; rules carry the date for audit
    double a = amount;
    std::string c = code;
    // Follow the chain while the FX backbone has no series for the current code
    // but does for the successor. Cycles are impossible with positive factors
    // and a finite rule list, but cap the walk anyway.
    for (int guard = 0; guard < 8; ++guard) {
        if (tables.fx.count(c)) break;
        const RedenominationRule* next = nullptr;
        for (const auto& rule : rules)
            if (rule.old_code == c) {
                next = &rule;
                break;
            }
        if (!next || !(next->factor > 0.0)) break;
        a /= next->factor;
        if (path)
            path->push_back("redenominate " + c + "->" + next->new_code + " /" +
                            format_double(next->factor));
        c = next->new_code;
    }
    return {a, c};
}

namespace {

// Nearest year in the series to t; equidistant candidates resolve to the
// earlier year (the regime in force when the amount was earned).
std::optional<Year> nearest_fx_year(const FxSeries& series, Year t) {
    std::optional<Year> best;
    long best_dist = -1;
    for (const auto& [year, rate] : series.rates) {
        (void)rate;
        const long dist = std::labs(static_cast<long>(year) - static_cast<long>(t));
        if (!best || dist < best_dist || (dist == best_dist && year < *best)) {
            best = year;
            best_dist = dist;
        }
    }
    return best;
}

std::optional<double> cpi_at(const CpiSeries* series, Year t) {
    if (!series) return std::nullopt;
    auto it = series->levels.find(t);
    if (it == series->levels.end()) return std::nullopt;
    return it->second;
}

}  // namespace

ConversionOutcome convert_to_eur2017(const MonetaryRecord& rec, const CanonicalCurrency& canon,
                                     const ConversionTables& tables) {
    ConversionOutcome out;

    auto [amount, code] =
        apply_redenomination(rec.amount, canon.code, rec.year, tables.redenominations, tables,
                             &out.path);

    const auto fx_it = tables.fx.find(code);
    if (fx_it == tables.fx.end() || fx_it->second.rates.empty()) {
        out.status = ConversionStatus::NoFxCoverage;
        return out;
    }
    const FxSeries& series = fx_it->second;

    Year t = rec.year;
    double local = amount;

    auto rate_at = series.rates.find(t);
    if (rate_at == series.rates.end()) {
        // CPI-assisted bridge: revalue in local real terms to the nearest year
        // with a rate, then continue as in the direct path.
        const auto t0 = nearest_fx_year(series, t);
        if (!t0) {
            out.status = ConversionStatus::NoFxCoverage;
            return out;
        }
        const CpiSeries* local_cpi = tables.cpi_for(code, canon.country);
        const auto cpi_t = cpi_at(local_cpi, t);
        const auto cpi_t0 = cpi_at(local_cpi, *t0);
        if (!cpi_t || !cpi_t0) {
            out.status = ConversionStatus::NoCpiCoverage;
            return out;
        }
        local = local * (*cpi_t0 / *cpi_t);
        out.bridge_year = *t0;
        out.path.push_back("cpi-bridge " + (local_cpi ? local_cpi->scope : code) + " " +
                           std::to_string(t) + "->" + std::to_string(*t0) + " x" +
                           format_double(*cpi_t0 / *cpi_t));
        t = *t0;
        rate_at = series.rates.find(t);
    }

    const double eta_local = rate_at->second;
    double usd = local / eta_local;
    out.path.push_back("fx " + code + " " + std::to_string(t) + " /" +
                       format_double(eta_local));

    const auto usd_cpi_it = tables.cpi.find("USD");
    const CpiSeries* usd_cpi = usd_cpi_it == tables.cpi.end() ? nullptr : &usd_cpi_it->second;
    const auto cpi_usd_t = cpi_at(usd_cpi, t);
    const auto cpi_usd_base = cpi_at(usd_cpi, kBaseYear);
    if (!cpi_usd_t || !cpi_usd_base) {
        out.status = ConversionStatus::NoCpiCoverage;
        return out;
    }
    usd *= *cpi_usd_base / *cpi_usd_t;
    out.path.push_back("uscpi " + std::to_string(t) + "->" + std::to_string(kBaseYear) + " x" +
                       format_double(*cpi_usd_base / *cpi_usd_t));

    const auto eur_it = tables.fx.find("EUR");
    if (eur_it == tables.fx.end()) {
        out.status = ConversionStatus::NoFxCoverage;
        return out;
    }
    const auto eur_rate = eur_it->second.rates.find(kBaseYear);
    if (eur_rate == eur_it->second.rates.end()) {
        out.status = ConversionStatus::NoFxCoverage;
        return out;
    }
    const double eur = usd * eur_rate->second;
    out.path.push_back("eurfx " + std::to_string(kBaseYear) + " x" +
                       format_double(eur_rate->second));

    out.status = ConversionStatus::Converted;
    out.eur2017 = eur;

    const auto ppp_it = tables.ppp.find(rec.country);
    if (ppp_it != tables.ppp.end()) {
        out.ppp = eur * ppp_it->second.factor;
        out.path.push_back("ppp " + rec.country + " x" + format_double(ppp_it->second.factor));
    }
    return out;
}

ConversionOutcome convert_record(const MonetaryRecord& rec, const ConversionTables& tables) {
    const ResolveResult res = resolve_currency(rec, tables);
    if (!res.canonical) {
        ConversionOutcome out;
        out.status = res.failure;
        return out;
    }
    return convert_to_eur2017(rec, *res.canonical, tables);
}

double ppp_adjust(double eur2017, const std::string& country,
                  const std::map<std::string, PppIndex>& index) {
    if (!std::isfinite(eur2017)) throw DataError("ppp_adjust: amount is not finite");
    auto it = index.find(country);
    if (it == index.end()) throw DataError("ppp_adjust: no PPP factor for country '" + country + "'");
    return eur2017 * it->second.factor;
}

double nearest_rank_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile of empty set");
    if (!(q > 0.0 && q <= 1.0)) throw DataError("quantile level must lie in (0,1]");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return values[rank - 1];
}

TrimResult trim_bounds(const std::vector<double>& values, double lower_q, double upper_q) {
    TrimResult res;
    res.kept.assign(values.size(), true);
    std::vector<double> finite;
    finite.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) finite.push_back(v);
    if (finite.size() < 2) {
        const auto [mn, mx] = finite.empty()
                                  ? std::pair<double, double>{0.0, 0.0}
                                  : std::pair<double, double>{finite.front(), finite.front()};
        res.lo = mn;
        res.hi = mx;
        return res;
    }
    res.lo = nearest_rank_quantile(finite, lower_q);
    res.hi = nearest_rank_quantile(finite, upper_q);
    for (std::size_t i = 0; i < values.size(); ++i)
        res.kept[i] = std::isfinite(values[i]) && values[i] >= res.lo && values[i] <= res.hi;
    return res;
}

std::vector<CoverageRow> coverage_report(const std::vector<MonetaryRecord>& records,
                                         const std::vector<ConversionOutcome>& outcomes) {
    if (records.size() != outcomes.size())
        throw DataError("coverage_report: one outcome required per record");
    std::map<std::string, std::pair<long, long>> acc;  // group -> (total, converted)
    for (std::size_t i = 0; i < records.size(); ++i) {
        const bool ok = outcomes[i].status == ConversionStatus::Converted;
        auto& by_item = acc[to_string(records[i].item)];
        ++by_item.first;
        by_item.second += ok ? 1 : 0;
        auto& by_country = acc["country:" + records[i].country];
        ++by_country.first;
        by_country.second += ok ? 1 : 0;
    }
    std::vector<CoverageRow> rows;
    rows.reserve(acc.size());
    for (const auto& [group, counts] : acc) {
        CoverageRow row;
        row.group = group;
        row.total = counts.first;
        row.converted = counts.second;
        row.rate = std::round(10000.0 * static_cast<double>(counts.second) /
                              static_cast<double>(counts.first)) /
                   100.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace fcsforge
