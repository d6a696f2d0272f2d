#include "fcsforge/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "fcsforge/currency.hpp"
#include "fcsforge/error.hpp"

namespace fcsforge {

double silverman_bandwidth(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) throw DataError("bandwidth needs at least 2 values");
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(n - 1));
    const double iqr =
        nearest_rank_quantile(values, 0.75) - nearest_rank_quantile(values, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    if (!(spread > 0.0))
        throw DataError("kde bandwidth is zero (all values equal)");
    return 0.9 * spread * std::pow(double(n), -0.2);
}

KdeCurve kde_estimate(const std::vector<double>& values, const std::vector<double>* weights,
                      std::optional<double> bandwidth,
                      std::optional<std::pair<double, double>> span, int grid_points) {
    if (values.empty()) throw DataError("kde needs at least one value");
    if (!bandwidth && values.size() < 2) throw DataError("kde needs at least 2 values");
    if (weights && weights->size() != values.size())
        throw DataError("kde weight length mismatch");
    const double bw = bandwidth ? *bandwidth : silverman_bandwidth(values);
    if (!(bw > 0.0)) throw DataError("kde bandwidth must be positive");

    double lo, hi;
    if (span) {
        lo = span->first;
        hi = span->second;
    } else {
        const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        lo = *mn - 3.0 * bw;
        hi = *mx + 3.0 * bw;
    }

    KdeCurve curve;
    curve.bandwidth = bw;
    curve.grid.resize(grid_points);
    curve.density = Vector::Zero(grid_points);
    const double step = (hi - lo) / double(grid_points - 1);
    for (int g = 0; g < grid_points; ++g) curve.grid[g] = lo + step * g;

    double wsum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        if (w < 0.0) throw DataError("kde weights must be non-negative");
        wsum += w;
        for (int g = 0; g < grid_points; ++g) {
            const double z = (curve.grid[g] - values[i]) / bw;
            curve.density[g] += w * std::exp(-0.5 * z * z);
        }
    }
    if (!(wsum > 0.0)) throw DataError("kde weights sum to zero");
    curve.density /= wsum * bw * std::sqrt(2.0 * M_PI);
    return curve;
}

std::vector<ResponseRateRow> response_rate_table(const std::vector<bool>& eligible,
                                                 const std::vector<bool>& answered,
                                                 const std::vector<bool>& converted,
                                                 const std::vector<bool>& kept,
                                                 const std::vector<std::string>& group) {
    const std::size_t n = eligible.size();
    if (answered.size() != n || converted.size() != n || kept.size() != n || group.size() != n)
        throw DataError("response_rate_table: mask length mismatch");

    std::string bad;
    int bad_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool ok = (!answered[i] || eligible[i]) && (!converted[i] || answered[i]) &&
                        (!kept[i] || converted[i]);
        if (!ok) {
            ++bad_count;
            if (bad_count <= 10) bad += (bad.empty() ? "" : ", ") + std::to_string(i);
        }
    }
    if (bad_count > 0)
        throw DataError("response_rate_table: mask nesting violated at rows " + bad +
                        (bad_count > 10 ? " (and more)" : ""));

    std::map<std::string, ResponseRateRow> groups;
    ResponseRateRow all;
    all.group = "ALL";
    for (std::size_t i = 0; i < n; ++i) {
        if (!eligible[i]) continue;
        auto& row = groups[group[i]];
        row.group = group[i];
        for (ResponseRateRow* r : {&row, &all}) {
            ++r->eligible;
            r->answered += answered[i] ? 1 : 0;
            r->converted += converted[i] ? 1 : 0;
            r->kept += kept[i] ? 1 : 0;
        }
    }

    std::vector<ResponseRateRow> rows;
    for (auto& [key, row] : groups) {
        (void)key;
        if (row.eligible == 0) continue;  // empty groups suppressed
        row.rr1 = double(row.answered) / double(row.eligible);
        row.rr2 = double(row.converted) / double(row.eligible);
        row.rr3 = double(row.kept) / double(row.eligible);
        rows.push_back(row);
    }
    if (all.eligible > 0) {
        all.rr1 = double(all.answered) / double(all.eligible);
        all.rr2 = double(all.converted) / double(all.eligible);
        all.rr3 = double(all.kept) / double(all.eligible);
        rows.push_back(all);
    }
    return rows;
}

QuartileSummary summary_quartiles(const std::vector<double>& values) {
    if (values.empty()) throw DataError("summary_quartiles: needs at least one value");
    QuartileSummary s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
    s.p25 = nearest_rank_quantile(values, 0.25);
    s.p50 = nearest_rank_quantile(values, 0.50);
    s.p75 = nearest_rank_quantile(values, 0.75);
    return s;
}

PooledEstimate rubin_pool(const std::vector<double>& estimates,
                          const std::vector<double>& variances) {
    const std::size_t m = estimates.size();
    if (m < 2) throw DataError("rubin_pool: needs M >= 2 replicates");
    if (variances.size() != m) throw DataError("rubin_pool: length mismatch");

    PooledEstimate out;
    out.m = static_cast<int>(m);
    out.point = std::accumulate(estimates.begin(), estimates.end(), 0.0) / double(m);
    out.within_var = std::accumulate(variances.begin(), variances.end(), 0.0) / double(m);
    double ss = 0.0;
    for (double e : estimates) ss += (e - out.point) * (e - out.point);
    out.between_var = ss / double(m - 1);
    out.total_var = out.within_var + (1.0 + 1.0 / double(m)) * out.between_var;
    return out;
}

std::vector<double> fit_ipw_weights(const std::vector<int>& response, const Matrix& predictors,
                                    const std::vector<std::string>& predictor_names,
                                    const std::vector<std::string>& region,
                                    const std::vector<double>& country, double cap) {
    const std::size_t n = response.size();
    if (static_cast<std::size_t>(predictors.rows()) != n)
        throw DataError("fit_ipw_weights: predictor rows mismatch");
    if (!region.empty() && region.size() != n)
        throw DataError("fit_ipw_weights: region length mismatch");
    if (!country.empty() && country.size() != n)
        throw DataError("fit_ipw_weights: country length mismatch");

    std::vector<std::string> region_labels;
    if (region.empty()) {
        region_labels.push_back("");
    } else {
        std::set<std::string> uniq(region.begin(), region.end());
        region_labels.assign(uniq.begin(), uniq.end());
    }

    std::vector<double> weights(n, 0.0);
    for (const auto& label : region_labels) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < n; ++i)
            if (region.empty() || region[i] == label) rows.push_back(i);
        if (rows.empty()) continue;

        // Country dummies within the region, one reference dropped.
        std::vector<double> codes;
        if (!country.empty()) {
            std::set<double> uniq;
            for (std::size_t r : rows) uniq.insert(country[r]);
            codes.assign(std::next(uniq.begin(), uniq.empty() ? 0 : 1), uniq.end());
        }

        DesignMatrix X;
        const Eigen::Index k = predictors.cols() + 1 + static_cast<Eigen::Index>(codes.size());
        X.X.resize(static_cast<Eigen::Index>(rows.size()), k);
        X.names.push_back("(intercept)");
        for (const auto& nm : predictor_names) X.names.push_back(nm);
        for (double code : codes) X.names.push_back("country_" + std::to_string(code));
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto ei = static_cast<Eigen::Index>(i);
            X.X(ei, 0) = 1.0;
            X.X.block(ei, 1, 1, predictors.cols()) = predictors.row(static_cast<Eigen::Index>(rows[i]));
            for (std::size_t c = 0; c < codes.size(); ++c)
                X.X(ei, 1 + predictors.cols() + static_cast<Eigen::Index>(c)) =
                    country[rows[i]] == codes[c] ? 1.0 : 0.0;
            y[ei] = response[rows[i]] ? 1.0 : 0.0;
        }

        // Constant dummy guard for single-country regions.
        GlmFit fit;
        try {
            fit = fit_glm(GlmFamily::Logit, y, X);
        } catch (const SeparationError&) {
            const AugmentedData aug = augment_perfect_prediction(y, X, GlmFamily::Logit);
            fit = fit_glm(GlmFamily::Logit, aug.y, aug.X);
        }
        const Vector p = glm_mean(GlmFamily::Logit, X.X, fit.beta_hat);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!response[rows[i]]) continue;
            const double pi = std::max(p[static_cast<Eigen::Index>(i)], 1.0 / cap);
            weights[rows[i]] = std::min(1.0 / pi, cap);
        }
    }
    return weights;
}

namespace {

struct VariableCells {
    std::vector<double> observed;                     // eligible, observed in block 0
    std::vector<std::vector<double>> imputed;         // per replicate
    std::vector<std::vector<double>> completed;       // per replicate
};

VariableCells collect_cells(const ImputedStore& store, const std::string& variable) {
    const Column& base = store.blocks.at(0).column(variable);
    VariableCells cells;
    for (std::size_t r = 0; r < base.size(); ++r)
        if (base.state[r] == CellState::Observed) cells.observed.push_back(base.values[r]);
    for (int m = 1; m <= store.m; ++m) {
        const Column& col = store.blocks.at(static_cast<std::size_t>(m)).column(variable);
        std::vector<double> imp, comp;
        for (std::size_t r = 0; r < base.size(); ++r) {
            if (col.state[r] != CellState::Observed) continue;  // ineligible or left missing
            comp.push_back(col.values[r]);
            if (base.state[r] == CellState::Missing) imp.push_back(col.values[r]);
        }
        cells.imputed.push_back(std::move(imp));
        cells.completed.push_back(std::move(comp));
    }
    return cells;
}

}  // namespace

namespace {

void check_unit_mass(const KdeCurve& curve, const std::string& what) {
    double area = 0.0;
    for (Eigen::Index g = 1; g < curve.grid.size(); ++g)
        area += 0.5 * (curve.density[g] + curve.density[g - 1]) *
                (curve.grid[g] - curve.grid[g - 1]);
    if (std::abs(area - 1.0) > 1e-3)
        throw DataError(what + ": kde mass " + std::to_string(area) +
                        " is not 1 within 1e-3; the grid span clips the kernels");
}

}  // namespace

DistributionReport compare_distributions(const ImputedStore& store, const std::string& variable,
                                         const std::vector<double>* ipw_weights) {
    store.validate();
    const VariableCells cells = collect_cells(store, variable);
    if (cells.observed.size() < 2)
        throw DataError("compare_distributions: variable '" + variable +
                        "' has fewer than 2 observed values");

    DistributionReport report;
    report.variable = variable;
    report.n_observed = static_cast<long>(cells.observed.size());
    report.n_imputed =
        store.m > 0 ? static_cast<long>(cells.imputed.front().size()) : 0;

    // One grid and one bandwidth across every curve so the mixture identity is
    // an exact linear relation.
    std::vector<double> pool = cells.observed;
    for (const auto& comp : cells.completed) pool.insert(pool.end(), comp.begin(), comp.end());
    report.bandwidth = silverman_bandwidth(pool);
    const auto [mn, mx] = std::minmax_element(pool.begin(), pool.end());
    const std::pair<double, double> span{*mn - 3.0 * report.bandwidth,
                                         *mx + 3.0 * report.bandwidth};

    report.observed = kde_estimate(cells.observed, nullptr, report.bandwidth, span);
    check_unit_mass(report.observed, variable + " observed");
    report.observed_summary = summary_quartiles(cells.observed);

    if (ipw_weights) {
        if (ipw_weights->size() != cells.observed.size())
            throw DataError("compare_distributions: ipw weight length must match the "
                            "observed cell count");
        report.ipw_observed = kde_estimate(cells.observed, ipw_weights, report.bandwidth, span);
        check_unit_mass(*report.ipw_observed, variable + " ipw");
    }

    report.mixture_residual = 0.0;
    for (int m = 0; m < store.m; ++m) {
        const auto& imp = cells.imputed[static_cast<std::size_t>(m)];
        const auto& comp = cells.completed[static_cast<std::size_t>(m)];
        const KdeCurve completed = kde_estimate(comp, nullptr, report.bandwidth, span);
        check_unit_mass(completed, variable + " completed");
        report.completed.push_back(completed);
        report.completed_summaries.push_back(summary_quartiles(comp));
        if (!imp.empty()) {
            const KdeCurve imputed = kde_estimate(imp, nullptr, report.bandwidth, span);
            report.imputed.push_back(imputed);
            const double n_o = double(cells.observed.size());
            const double n_m = double(imp.size());
            const Vector mixture =
                (n_o * report.observed.density + n_m * imputed.density) / (n_o + n_m);
            report.mixture_residual = std::max(
                report.mixture_residual, (completed.density - mixture).cwiseAbs().maxCoeff());
        } else {
            report.imputed.emplace_back();
            // No imputed mass: completed must coincide with observed.
            report.mixture_residual =
                std::max(report.mixture_residual,
                         (completed.density - report.observed.density).cwiseAbs().maxCoeff());
        }
    }
    return report;
}

}  // namespace fcsforge
