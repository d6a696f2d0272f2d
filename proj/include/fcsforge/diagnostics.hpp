#ifndef FCSFORGE_DIAGNOSTICS_HPP_
#define FCSFORGE_DIAGNOSTICS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "fcsforge/statkernel.hpp"
#include "fcsforge/store.hpp"

namespace fcsforge {

struct KdeCurve {
    Vector grid;       // ascending
    Vector density;    // non-negative, trapezoid integral ~ 1
    double bandwidth = 0.0;
};

/// Rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5).
double silverman_bandwidth(const std::vector<double>& values);

/// Weighted Gaussian KDE on a 512-point grid spanning the data range plus
/// three bandwidths each side. All-equal values raise DataError.
KdeCurve kde_estimate(const std::vector<double>& values,
                      const std::vector<double>* weights = nullptr,
                      std::optional<double> bandwidth = std::nullopt,
                      std::optional<std::pair<double, double>> span = std::nullopt,
                      int grid_points = 512);

struct ResponseRateRow {
    std::string group;
    long eligible = 0;   // E
    long answered = 0;   // R1
    long converted = 0;  // R2
    long kept = 0;       // R3
    double rr1 = 0.0, rr2 = 0.0, rr3 = 0.0;  // full precision; round at display
};

/// Per-group accounting plus an ALL row. The masks must nest
/// (kept <= converted <= answered <= eligible row-wise); violations raise
/// DataError naming the rows.
std::vector<ResponseRateRow> response_rate_table(const std::vector<bool>& eligible,
                                                 const std::vector<bool>& answered,
                                                 const std::vector<bool>& converted,
                                                 const std::vector<bool>& kept,
                                                 const std::vector<std::string>& group);

struct QuartileSummary {
    double mean = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0;
};

/// Mean plus nearest-rank quartiles (consistent with trimming).
QuartileSummary summary_quartiles(const std::vector<double>& values);

struct PooledEstimate {
    double point = 0.0;
    double within_var = 0.0;
    double between_var = 0.0;
    double total_var = 0.0;
    int m = 0;
};

/// Rubin's rules over per-replicate estimates and variances (M >= 2).
PooledEstimate rubin_pool(const std::vector<double>& estimates,
                          const std::vector<double>& variances);

/// Inverse-propensity weights from per-region logit fits with country dummies.
/// Responders get 1/p capped at `cap`; non-responders get 0. Separation is
/// retried with pseudo-observation augmentation.
std::vector<double> fit_ipw_weights(const std::vector<int>& response, const Matrix& predictors,
                                    const std::vector<std::string>& predictor_names,
                                    const std::vector<std::string>& region,
                                    const std::vector<double>& country, double cap = 50.0);

struct DistributionReport {
    std::string variable;
    double bandwidth = 0.0;
    KdeCurve observed;
    std::vector<KdeCurve> imputed;    // per replicate; empty curve when no missing
    std::vector<KdeCurve> completed;  // per replicate
    std::optional<KdeCurve> ipw_observed;
    QuartileSummary observed_summary;
    std::vector<QuartileSummary> completed_summaries;
    long n_observed = 0;
    long n_imputed = 0;
    /// max |completed - (n_o obs + n_m imp)/n| over replicates and grid points.
    double mixture_residual = 0.0;
};

/// KDE and quartile comparison of observed / imputed / completed values of a
/// store variable, with the mixture identity evaluated as a self-check.
DistributionReport compare_distributions(const ImputedStore& store, const std::string& variable,
                                         const std::vector<double>* ipw_weights = nullptr);

}  // namespace fcsforge

#endif  // FCSFORGE_DIAGNOSTICS_HPP_
