// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Oracles are computed inline from frozen fixture constants and
// never call the code paths they check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "fcsforge/currency.hpp"
#include "fcsforge/diagnostics.hpp"
#include "fcsforge/engine.hpp"
#include "fcsforge/error.hpp"
#include "fcsforge/imputers.hpp"
#include "fcsforge/plan.hpp"
#include "fcsforge/statkernel.hpp"
#include "fcsforge/store.hpp"
#include "fcsforge/synthetic.hpp"

using namespace fcsforge;

namespace {

struct Check {
    long failures = 0;
    long total = 0;
    std::string first_failure;

    void expect(bool ok, const std::string& what) {
        ++total;
        if (!ok) {
            ++failures;
            if (first_failure.empty()) first_failure = what;
        }
    }
};

double wall_seconds(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

std::string fixture(const std::string& rel) { return std::string(FIXTURE_DIR) + "/" + rel; }

// ---------------------------------------------------------------------------
// Criterion 1: conversion fixtures against a hand-arithmetic oracle
// ---------------------------------------------------------------------------

bool criterion_1(std::string& detail) {
    Check check;
    const ConversionTables tables = load_conversion_tables(fixture("tables"));
    const ConversionTables frame = load_conversion_tables(fixture("tables_redenom"));

    struct Case {
        const ConversionTables* tables;
        double amount;
        LabelKind kind;
        std::string label, country;
        Year year;
        double expected;  // hand arithmetic from the frozen fixture constants
    };
    // US CPI levels: 1940:14 1943:17.3 1947:22.3 1950:24.1 1970:38.8 1980:81.7
    // 1990:130.7 1993:144.5 1994:148.2 1995:152.4 1996:156.9 2000:172.2
    // 2005:195.3 2010:218.1 2017:245.1; EUR/USD 2017 = 0.9.
    const std::vector<Case> cases = {
        // direct paths
        {&tables, 100, LabelKind::IsoOrLegacy, "USD", "US", 2017, 100 / 1.0 * (245.1 / 245.1) * 0.9},
        {&tables, 100, LabelKind::IsoOrLegacy, "USD", "US", 2010, 100 / 1.0 * (245.1 / 218.1) * 0.9},
        {&tables, 250, LabelKind::IsoOrLegacy, "USD", "US", 1970, 250 / 1.0 * (245.1 / 38.8) * 0.9},
        {&tables, 300, LabelKind::IsoOrLegacy, "EUR", "DE", 2010, 300 / 0.75 * (245.1 / 218.1) * 0.9},
        {&tables, 200, LabelKind::IsoOrLegacy, "DEM", "DE", 1980, 200 / 2.0 * (245.1 / 81.7) * 0.9},
        {&tables, 120, LabelKind::IsoOrLegacy, "DEM", "DE", 1947, 120 / 4.0 * (245.1 / 22.3) * 0.9},
        {&tables, 80, LabelKind::IsoOrLegacy, "CHF", "CH", 1950, 80 / 4.3 * (245.1 / 24.1) * 0.9},
        {&tables, 90, LabelKind::IsoOrLegacy, "CHF", "CH", 1990, 90 / 1.4 * (245.1 / 130.7) * 0.9},
        {&tables, 1000, LabelKind::Generic, "shilling", "AT", 1970,
         1000 / 25.0 * (245.1 / 38.8) * 0.9},
        {&tables, 50000, LabelKind::IsoOrLegacy, "PLZ", "PL", 1990,
         50000 / 9500.0 * (245.1 / 130.7) * 0.9},
        {&tables, 50000, LabelKind::Generic, "zloty", "PL", 1993,
         50000 / 18000.0 * (245.1 / 144.5) * 0.9},
        {&tables, 42000, LabelKind::IsoOrLegacy, "PLZ", "PL", 1994,
         42000 / 22727.0 * (245.1 / 148.2) * 0.9},
        {&tables, 12, LabelKind::IsoOrLegacy, "PLN", "PL", 1995, 12 / 2.42 * (245.1 / 152.4) * 0.9},
        {&tables, 15, LabelKind::Generic, "zloty", "PL", 1996, 15 / 2.5 * (245.1 / 156.9) * 0.9},
        {&tables, 22, LabelKind::IsoOrLegacy, "PLN", "PL", 2017, 22 / 3.75 * 1.0 * 0.9},
        {&tables, 940, LabelKind::IsoOrLegacy, "CZK", "CZ", 2000, 940 / 38.6 * (245.1 / 172.2) * 0.9},
        {&tables, 940, LabelKind::Generic, "koruna", "CZ", 2017, 940 / 23.4 * 1.0 * 0.9},
        // bridged paths: gap below the series, inside the wartime gap, above
        // the series, and an equidistant tie breaking toward the earlier year
        {&tables, 500, LabelKind::IsoOrLegacy, "DEM", "DE", 1943,
         500 * (20.0 / 13.5) / 4.0 * (245.1 / 22.3) * 0.9},
        {&tables, 75, LabelKind::IsoOrLegacy, "DEM", "DE", 1940,
         75 * (20.0 / 12.0) / 4.0 * (245.1 / 22.3) * 0.9},
        {&tables, 60, LabelKind::IsoOrLegacy, "CHF", "CH", 1940,
         60 * (40.0 / 30.0) / 4.3 * (245.1 / 24.1) * 0.9},
        {&tables, 80, LabelKind::IsoOrLegacy, "CHF", "CH", 1970,
         80 * (40.0 / 55.0) / 4.3 * (245.1 / 24.1) * 0.9},
        {&tables, 60, LabelKind::IsoOrLegacy, "CHF", "CH", 1995,
         60 * (104.0 / 110.0) / 1.4 * (245.1 / 130.7) * 0.9},
        // redenominated paths (the frame tables carry no old-code FX series)
        {&frame, 50000, LabelKind::IsoOrLegacy, "PLZ", "PL", 1994,
         (50000 / 10000.0) * (965.0 / 760.0) / 2.42 * (245.1 / 152.4) * 0.9},
        {&frame, 80000, LabelKind::IsoOrLegacy, "PLZ", "PL", 1993,
         (80000 / 10000.0) * (965.0 / 580.0) / 2.42 * (245.1 / 152.4) * 0.9},
        {&frame, 3.0e6, LabelKind::IsoOrLegacy, "ROL", "RO", 2004,
         (3.0e6 / 10000.0) * (100.0 / 95.0) / 2.9 * (245.1 / 195.3) * 0.9},
        {&frame, 3000, LabelKind::IsoOrLegacy, "AAA", "XX", 1985,
         (3000 / 1000.0) * (60.0 / 20.0) / 5.0 * (245.1 / 172.2) * 0.9},
    };

    const double elapsed = wall_seconds([&] {
        for (const auto& c : cases) {
            MonetaryRecord rec{c.amount, {c.kind, c.label}, c.country, c.year, ItemKind::Y2};
            const ConversionOutcome out = convert_record(rec, *c.tables);
            if (out.status != ConversionStatus::Converted) {
                check.expect(false, c.label + " " + std::to_string(c.year) + ": " +
                                        to_string(out.status));
                continue;
            }
            const double rel = std::abs(*out.eur2017 - c.expected) / std::abs(c.expected);
            check.expect(rel < 1e-9, c.label + " " + std::to_string(c.year) + " rel err " +
                                         std::to_string(rel));
        }

        // PLZ/PLN continuity across the 1995 reform: constant real value, no
        // 10^4 face-value jump.
        const double a_1994 = 8.0e6;
        const double a_1995 = a_1994 / 10000.0 * (965.0 / 760.0);
        const auto out94 = convert_record(
            MonetaryRecord{a_1994, {LabelKind::IsoOrLegacy, "PLZ"}, "PL", 1994, ItemKind::Y2},
            frame);
        const auto out95 = convert_record(
            MonetaryRecord{a_1995, {LabelKind::IsoOrLegacy, "PLN"}, "PL", 1995, ItemKind::Y2},
            frame);
        check.expect(out94.status == ConversionStatus::Converted, "PLZ 1994 converts");
        check.expect(out95.status == ConversionStatus::Converted, "PLN 1995 converts");
        if (out94.eur2017 && out95.eur2017) {
            const double ratio = *out94.eur2017 / *out95.eur2017;
            check.expect(std::abs(ratio - 1.0) < 1e-12,
                         "continuity ratio " + std::to_string(ratio));
        }
    });
    check.expect(cases.size() >= 20, "case count");
    check.expect(elapsed < 1.0, "runtime " + std::to_string(elapsed) + "s");

    std::ostringstream os;
    os << cases.size() << " oracle cases + continuity, " << check.failures << " failures, "
       << std::fixed << elapsed << "s";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

// ---------------------------------------------------------------------------
// Criterion 2: trimming and response-rate accounting
// ---------------------------------------------------------------------------

bool criterion_2(std::string& detail) {
    Check check;

    std::vector<double> one_to_hundred;
    for (int i = 1; i <= 100; ++i) one_to_hundred.push_back(i);
    const TrimResult trim = trim_bounds(one_to_hundred);
    check.expect(trim.lo == 3.0 && trim.hi == 98.0,
                 "trim bounds (" + std::to_string(trim.lo) + ", " + std::to_string(trim.hi) + ")");

    // replay fixture for the maternity-benefit ALL accounting row
    const std::size_t n = 30357;
    std::vector<bool> eligible(n, true), answered(n), converted(n), kept(n);
    std::vector<std::string> group(n, "ALLIN");
    for (std::size_t i = 0; i < n; ++i) {
        answered[i] = i < 11254;
        converted[i] = i < 10739;
        kept[i] = i < 10201;
    }
    const auto rows = response_rate_table(eligible, answered, converted, kept, group);
    const ResponseRateRow* all = nullptr;
    for (const auto& row : rows)
        if (row.group == "ALL") all = &row;
    check.expect(all != nullptr, "ALL row present");
    if (all) {
        auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
        check.expect(all->eligible == 30357 && all->answered == 11254 &&
                         all->converted == 10739 && all->kept == 10201,
                     "ALL counts");
        check.expect(round2(all->rr1) == 0.37 && round2(all->rr2) == 0.35 &&
                         round2(all->rr3) == 0.34,
                     "ALL rates");
    }

    // monotonicity on 1,000 random nested mask fixtures
    RngStream rng(2718);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 20 + rng.uniform_index(100);
        std::vector<bool> e(m), a(m), c(m), k(m);
        std::vector<std::string> g(m);
        for (std::size_t i = 0; i < m; ++i) {
            e[i] = rng.uniform() < 0.9;
            a[i] = e[i] && rng.uniform() < 0.7;
            c[i] = a[i] && rng.uniform() < 0.9;
            k[i] = c[i] && rng.uniform() < 0.9;
            g[i] = rng.uniform() < 0.5 ? "G1" : "G2";
        }
        for (const auto& row : response_rate_table(e, a, c, k, g))
            check.expect(row.rr1 >= row.rr2 && row.rr2 >= row.rr3,
                         "monotonicity trial " + std::to_string(trial));
    }

    std::ostringstream os;
    os << check.total << " checks, " << check.failures << " failures";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

// ---------------------------------------------------------------------------
// Criterion 3: estimator oracles
// ---------------------------------------------------------------------------

std::vector<double> gauss_solve(std::vector<std::vector<double>> a) {
    const int k = static_cast<int>(a.size());
    for (int col = 0; col < k; ++col) {
        int piv = col;
        for (int r = col + 1; r < k; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int c = col; c <= k; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) x[static_cast<std::size_t>(i)] = a[i][k] / a[i][i];
    return x;
}

std::vector<double> newton_oracle(const Matrix& X, const Vector& y, bool poisson, int iters) {
    const int k = static_cast<int>(X.cols());
    std::vector<double> beta(static_cast<std::size_t>(k), 0.0);
    for (int it = 0; it < iters; ++it) {
        std::vector<std::vector<double>> aug(static_cast<std::size_t>(k),
                                             std::vector<double>(static_cast<std::size_t>(k) + 1,
                                                                 0.0));
        for (int r = 0; r < X.rows(); ++r) {
            double eta = 0.0;
            for (int j = 0; j < k; ++j) eta += X(r, j) * beta[static_cast<std::size_t>(j)];
            const double mu = poisson ? std::exp(eta) : 1.0 / (1.0 + std::exp(-eta));
            const double w = poisson ? mu : mu * (1.0 - mu);
            for (int a = 0; a < k; ++a) {
                aug[a][static_cast<std::size_t>(k)] += X(r, a) * (y[r] - mu);
                for (int b = 0; b < k; ++b) aug[a][b] += X(r, a) * X(r, b) * w;
            }
        }
        const auto step = gauss_solve(aug);
        for (int j = 0; j < k; ++j) beta[static_cast<std::size_t>(j)] += step[static_cast<std::size_t>(j)];
    }
    return beta;
}

bool criterion_3(std::string& detail) {
    Check check;

    // 100 random full-rank linear instances vs the normal-equations oracle
    RngStream rng(31415);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 12 + static_cast<int>(rng.uniform_index(60));
        const int k = 2 + static_cast<int>(rng.uniform_index(5));
        Matrix X(n, k);
        Vector y(n);
        for (int r = 0; r < n; ++r) {
            X(r, 0) = 1.0;
            for (int j = 1; j < k; ++j) X(r, j) = rng.normal();
            y[r] = rng.normal() * 2.0 + X.row(r).sum();
        }
        DesignMatrix d{X, std::vector<std::string>(static_cast<std::size_t>(k), "x"),
                       std::nullopt};
        const LinearFit fit = fit_linear(y, d);
        std::vector<std::vector<double>> aug(static_cast<std::size_t>(k),
                                             std::vector<double>(static_cast<std::size_t>(k) + 1,
                                                                 0.0));
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j)
                for (int r = 0; r < n; ++r) aug[i][j] += X(r, i) * X(r, j);
            for (int r = 0; r < n; ++r) aug[i][static_cast<std::size_t>(k)] += X(r, i) * y[r];
        }
        const auto oracle = gauss_solve(aug);
        for (int j = 0; j < k; ++j)
            check.expect(std::abs(fit.beta_hat[j] - oracle[static_cast<std::size_t>(j)]) < 1e-10,
                         "linear trial " + std::to_string(trial));
    }

    // fixed small logit / poisson fixtures vs the independent Newton oracle
    {
        Matrix X(6, 2);
        X << 1, -2, 1, -1, 1, -0.5, 1, 0.5, 1, 1, 1, 2;
        Vector y(6);
        y << 0, 0, 1, 0, 1, 1;
        DesignMatrix d{X, {"c", "x"}, std::nullopt};
        const GlmFit fit = fit_glm(GlmFamily::Logit, y, d);
        const auto oracle = newton_oracle(X, y, false, 60);
        check.expect(std::abs(fit.beta_hat[0] - oracle[0]) < 1e-6, "logit b0");
        check.expect(std::abs(fit.beta_hat[1] - oracle[1]) < 1e-6, "logit b1");
    }
    {
        Matrix X(8, 2);
        X << 1, -1.5, 1, -1, 1, -0.5, 1, 0, 1, 0.5, 1, 1, 1, 1.5, 1, 2;
        Vector y(8);
        y << 0, 1, 1, 2, 2, 4, 5, 9;
        DesignMatrix d{X, {"c", "x"}, std::nullopt};
        const GlmFit fit = fit_glm(GlmFamily::Poisson, y, d);
        const auto oracle = newton_oracle(X, y, true, 60);
        check.expect(std::abs(fit.beta_hat[0] - oracle[0]) < 1e-6, "poisson b0");
        check.expect(std::abs(fit.beta_hat[1] - oracle[1]) < 1e-6, "poisson b1");
    }

    // posterior variance draw against the inverse-chi-squared moment
    {
        RngStream gen(9);
        Matrix X(30, 2);
        Vector y(30);
        for (int r = 0; r < 30; ++r) {
            X(r, 0) = 1.0;
            X(r, 1) = gen.normal();
            y[r] = 1.0 + 0.5 * X(r, 1) + gen.normal();
        }
        DesignMatrix d{X, {"c", "x"}, std::nullopt};
        const LinearFit fit = fit_linear(y, d);
        const double dof = static_cast<double>(fit.dof);
        RngStream draw_rng(123);
        const int n_draws = 10000;
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < n_draws; ++i) {
            const auto [beta, s2] = draw_linear_posterior(fit, draw_rng);
            (void)beta;
            sum += s2;
            sum2 += s2 * s2;
        }
        const double mean = sum / n_draws;
        const double target = fit.sigma2_hat * dof / (dof - 2.0);
        const double se = std::sqrt((sum2 / n_draws - mean * mean) / n_draws);
        check.expect(std::abs(mean - target) < 3.0 * se,
                     "sigma2 moment |" + std::to_string(mean) + " - " + std::to_string(target) +
                         "| vs 3se " + std::to_string(3.0 * se));
    }

    std::ostringstream os;
    os << check.total << " checks, " << check.failures << " failures";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

// ---------------------------------------------------------------------------
// Criterion 4: imputer contracts on 10,000 randomized property cases
// ---------------------------------------------------------------------------

bool criterion_4(std::string& detail) {
    Check check;
    RngStream gen(27182);
    long pmm_cases = 0, interval_cases = 0;

    // 5,000 randomized PMM instances: every imputed value is a donor value
    for (int trial = 0; trial < 5000; ++trial) {
        const int n0 = 8 + static_cast<int>(gen.uniform_index(24));
        const int n1 = 1 + static_cast<int>(gen.uniform_index(4));
        const int q = 1 + static_cast<int>(gen.uniform_index(5));
        Matrix Xo(n0, 2), Xm(n1, 2);
        Vector y(n0);
        for (int r = 0; r < n0; ++r) {
            Xo(r, 0) = 1.0;
            Xo(r, 1) = gen.normal();
            y[r] = 5.0 * gen.normal();
        }
        for (int r = 0; r < n1; ++r) {
            Xm(r, 0) = 1.0;
            Xm(r, 1) = gen.normal();
        }
        std::set<double> donors(y.data(), y.data() + n0);
        DesignMatrix d{Xo, {"c", "x"}, std::nullopt};
        RngStream rng(static_cast<std::uint64_t>(trial) + 1);
        const Vector imp = impute_pmm(y, d, Xm, q, rng);
        ++pmm_cases;
        for (int i = 0; i < n1; ++i)
            check.expect(donors.count(imp[i]) == 1, "pmm trial " + std::to_string(trial));
    }

    // 5,000 randomized interval instances: every draw inside its bounds
    for (int trial = 0; trial < 5000; ++trial) {
        const int n0 = 25 + static_cast<int>(gen.uniform_index(30));
        const int n1 = 1 + static_cast<int>(gen.uniform_index(4));
        Matrix Xo(n0, 2), Xm(n1, 2);
        std::vector<IntervalObs> obs(static_cast<std::size_t>(n0));
        for (int r = 0; r < n0; ++r) {
            Xo(r, 0) = 1.0;
            Xo(r, 1) = gen.normal();
            const double v = 1.0 + 0.8 * Xo(r, 1) + gen.normal();
            obs[static_cast<std::size_t>(r)] = {v, v};
        }
        CellBounds bounds(static_cast<std::size_t>(n1));
        for (int r = 0; r < n1; ++r) {
            Xm(r, 0) = 1.0;
            Xm(r, 1) = gen.normal();
            const double lo = -2.0 + gen.normal();
            bounds[static_cast<std::size_t>(r)] = {lo, lo + 0.1 + 3.0 * gen.uniform()};
        }
        DesignMatrix d{Xo, {"c", "x"}, std::nullopt};
        RngStream rng(static_cast<std::uint64_t>(trial) + 90001);
        const Vector imp = impute_interval(obs, d, Xm, bounds, rng);
        ++interval_cases;
        for (int i = 0; i < n1; ++i) {
            const auto& b = bounds[static_cast<std::size_t>(i)];
            check.expect(imp[i] >= b.lo && imp[i] <= b.hi,
                         "interval trial " + std::to_string(trial));
        }
    }

    // two-part: zero exactly when the ownership draw is zero (the log-scale
    // amount model only produces positive donor values)
    {
        RngStream gen2(5);
        const int n0 = 300, n1 = 150;
        Matrix Xo(n0, 2), Xm(n1, 2);
        Vector y(n0);
        for (int r = 0; r < n0; ++r) {
            Xo(r, 0) = 1.0;
            Xo(r, 1) = gen2.normal();
            y[r] = gen2.uniform() < 0.5 ? std::exp(gen2.normal()) : 0.0;
        }
        for (int r = 0; r < n1; ++r) {
            Xm(r, 0) = 1.0;
            Xm(r, 1) = gen2.normal();
        }
        ImputerSpec spec;
        spec.method = ImputeMethod::TwoPart;
        spec.amount = std::make_shared<ImputerSpec>();
        spec.amount->method = ImputeMethod::Pmm;
        spec.amount->q = 5;
        spec.amount->transform = ResponseTransform::Log;
        std::set<double> donors;
        for (int r = 0; r < n0; ++r)
            if (y[r] > 0.0) donors.insert(y[r]);
        DesignMatrix d{Xo, {"c", "x"}, std::nullopt};
        for (int rep = 0; rep < 50; ++rep) {
            RngStream rng(static_cast<std::uint64_t>(rep) + 777);
            const Vector imp = impute_two_part(spec, y, d, Xm, rng);
            for (int i = 0; i < n1; ++i)
                check.expect(imp[i] == 0.0 || donors.count(imp[i]) == 1,
                             "twopart rep " + std::to_string(rep));
        }
    }

    // categorical draws never leave the observed category set
    {
        RngStream gen2(6);
        const int n0 = 240;
        Matrix Xo(n0, 1), Xm(60, 1);
        Vector yo(n0), ym(n0);
        for (int r = 0; r < n0; ++r) {
            Xo(r, 0) = gen2.normal();
            yo[r] = Xo(r, 0) < -0.3 ? 2.0 : Xo(r, 0) < 0.9 ? 4.0 : 8.0;
            ym[r] = double(1 + gen2.uniform_index(3)) * 3.0;  // codes 3, 6, 9
        }
        for (int r = 0; r < 60; ++r) Xm(r, 0) = gen2.normal();
        DesignMatrix d{Xo, {"x"}, std::nullopt};
        for (int rep = 0; rep < 25; ++rep) {
            RngStream rng(static_cast<std::uint64_t>(rep) + 4242);
            const Vector ord = impute_glm(GlmFamily::OrderedLogit, yo, d, Xm, rng);
            const Vector mul = impute_glm(GlmFamily::MultinomialLogit, ym, d, Xm, rng);
            for (int i = 0; i < 60; ++i) {
                check.expect(ord[i] == 2.0 || ord[i] == 4.0 || ord[i] == 8.0, "ordered support");
                check.expect(mul[i] == 3.0 || mul[i] == 6.0 || mul[i] == 9.0,
                             "multinomial support");
            }
        }
    }

    std::ostringstream os;
    os << pmm_cases + interval_cases << " randomized property cases, " << check.failures
       << " violations";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

// ---------------------------------------------------------------------------
// Criterion 5: FCS engine coverage on the 3-variable Gaussian MAR toy
// ---------------------------------------------------------------------------

bool criterion_5(std::string& detail) {
    Check check;
    const SyntheticSpec spec = parse_synthetic_spec(fixture("sim_spec.json"));
    Plan plan = parse_plan(fixture("pipeline_plan.json"));
    plan.m = 5;
    plan.burnin = 10;

    const std::vector<std::string> vars = {"y1", "y2", "y3"};
    std::map<std::string, int> covered;

    const double elapsed = wall_seconds([&] {
        for (int rep = 0; rep < 100; ++rep) {
            const SyntheticData data = generate_synthetic(spec, 1000 + rep);
            plan.seed = 50000 + static_cast<std::uint64_t>(rep);
            const ImputedStore store = run_multiple_imputation(data.masked, plan);

            // observed-cell immutability and eligibility closure, every time
            for (int m = 1; m <= plan.m; ++m) {
                const auto& block = store.blocks[static_cast<std::size_t>(m)];
                for (std::size_t c = 0; c < data.masked.columns.size(); ++c) {
                    const Column& in = data.masked.columns[c];
                    const Column& out = block.columns[c];
                    for (std::size_t r = 0; r < data.masked.n_rows(); ++r) {
                        if (in.state[r] == CellState::Observed)
                            check.expect(out.values[r] == in.values[r], "immutability");
                        if (in.state[r] == CellState::Ineligible)
                            check.expect(out.state[r] == CellState::Ineligible &&
                                             out.values[r] == kIneligibleSentinel,
                                         "closure");
                    }
                }
            }

            for (const auto& var : vars) {
                std::vector<double> estimates, variances;
                for (int m = 1; m <= plan.m; ++m) {
                    const Column& col = store.blocks[static_cast<std::size_t>(m)].column(var);
                    double sum = 0.0, ss = 0.0;
                    const double n = static_cast<double>(col.size());
                    for (double v : col.values) sum += v;
                    const double mean = sum / n;
                    for (double v : col.values) ss += (v - mean) * (v - mean);
                    estimates.push_back(mean);
                    variances.push_back(ss / (n - 1.0) / n);  // variance of the mean
                }
                const PooledEstimate pooled = rubin_pool(estimates, variances);
                const double truth = data.truth.means.at(var);
                const double z = std::abs(pooled.point - truth) / std::sqrt(pooled.total_var);
                if (z <= 3.0) ++covered[var];
            }
        }
    });

    bool pass = check.failures == 0;
    std::ostringstream os;
    os << "coverage ";
    for (const auto& var : vars) {
        os << var << "=" << covered[var] << "/100 ";
        if (covered[var] < 90) pass = false;
    }
    os << std::fixed << "in " << elapsed << "s";
    if (elapsed >= 300.0) pass = false;
    if (check.failures) os << " [invariant: " << check.first_failure << "]";
    detail = os.str();
    return pass;
}

// ---------------------------------------------------------------------------
// Criterion 6: two-fold monetary chain on the 2-sequence, 3-spell fixture
// ---------------------------------------------------------------------------

Column fixture_column(const std::string& name, ColumnType type, std::vector<double> values,
                      std::vector<CellState> state) {
    Column c;
    c.name = name;
    c.type = type;
    c.values = std::move(values);
    c.state = std::move(state);
    return c;
}

bool criterion_6(std::string& detail) {
    Check check;
    RngStream gen(606);
    const std::size_t n = 500;

    ColumnarDataset ds;
    std::vector<double> country(n), female(n), interrupted(n), worked(n), retired(n), age(n),
        skill(n);
    std::vector<CellState> obs(n, CellState::Observed);
    for (std::size_t i = 0; i < n; ++i) {
        std::string id = std::to_string(i + 1);
        ds.ids.push_back("s" + std::string(4 - std::min<std::size_t>(4, id.size()), '0') + id);
        country[i] = 1.0 + double(gen.uniform_index(4));
        female[i] = gen.uniform() < 0.55 ? 1.0 : 0.0;
        interrupted[i] = female[i] == 1.0 && gen.uniform() < 0.7 ? 1.0 : 0.0;
        worked[i] = gen.uniform() < 0.85 ? 1.0 : 0.0;
        retired[i] = gen.uniform() < 0.45 ? 1.0 : 0.0;
        age[i] = 55.0 + 10.0 * gen.normal();
        skill[i] = gen.normal();
    }
    ds.columns.push_back(fixture_column("country", ColumnType::Nominal, country, obs));
    ds.columns.push_back(fixture_column("female", ColumnType::Binary, female, obs));
    ds.columns.push_back(fixture_column("interrupted", ColumnType::Binary, interrupted, obs));
    ds.columns.push_back(fixture_column("worked", ColumnType::Binary, worked, obs));
    ds.columns.push_back(fixture_column("retired", ColumnType::Binary, retired, obs));
    ds.columns.push_back(fixture_column("age", ColumnType::Real, age, obs));

    auto amounts = [&](const std::string& name, const std::vector<double>& gate, double keep,
                       double ownership, double base) {
        std::vector<double> v(n);
        std::vector<CellState> s(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (gate[i] != 1.0 || gen.uniform() >= keep) {
                v[i] = kIneligibleSentinel;
                s[i] = CellState::Ineligible;
                continue;
            }
            const bool owner = gen.uniform() < ownership;
            v[i] = owner ? std::exp(base + 0.01 * age[i] + 0.4 * skill[i] + 0.3 * gen.normal())
                         : 0.0;
            s[i] = CellState::Observed;
        }
        ds.columns.push_back(fixture_column(name, ColumnType::Real, v, s));
    };
    std::vector<double> maternity(n);
    for (std::size_t i = 0; i < n; ++i)
        maternity[i] = female[i] == 1.0 && interrupted[i] == 1.0 ? 1.0 : 0.0;
    amounts("M_1", maternity, 1.0, 0.75, 4.0);
    amounts("M_2", maternity, 0.6, 0.75, 4.0);
    amounts("M_3", maternity, 0.35, 0.75, 4.0);
    amounts("W_1", worked, 1.0, 1.0, 5.0);
    amounts("W_2", worked, 0.7, 1.0, 5.1);
    amounts("W_3", worked, 0.4, 1.0, 5.2);
    amounts("P", retired, 1.0, 0.8, 5.0);
    amounts("C", worked, 0.6, 1.0, 5.5);

    for (auto& col : ds.columns) {
        if (col.name.rfind("M_", 0) != 0 && col.name.rfind("W_", 0) != 0 && col.name != "P" &&
            col.name != "C")
            continue;
        for (std::size_t i = 0; i < n; ++i)
            if (col.state[i] == CellState::Observed && gen.uniform() < 0.25) {
                col.state[i] = CellState::Missing;
                col.values[i] = std::numeric_limits<double>::quiet_NaN();
            }
    }
    ds.validate();

    const Plan plan = parse_plan_text(R"json({
        "m": 1, "burnin": 3, "seed": 77,
        "id": "id", "country": "country",
        "regions": {"WEST": [1, 2], "EAST": [3, 4]},
        "columns": {"country": "nominal", "female": "binary", "interrupted": "binary",
                    "worked": "binary", "retired": "binary", "age": "real",
                    "M_1": "real", "M_2": "real", "M_3": "real",
                    "W_1": "real", "W_2": "real", "W_3": "real",
                    "P": "real", "C": "real"},
        "sequences": {"M": ["M_1", "M_2", "M_3"], "W": ["W_1", "W_2", "W_3"]},
        "blocks": [{"type": "twofold", "name": "monetary", "chains": [
            {"kind": "sequence", "sequence": "M", "method": "twopart",
             "amount": {"method": "pmm", "q": 10, "transform": "log"},
             "q_schedule": "tapered",
             "predictors": ["seqavg(W)", "amt(P)", "amt(C)", "age"],
             "eligibility": "female == 1 && interrupted == 1",
             "pool": {"min_cell": 50}},
            {"kind": "sequence", "sequence": "W", "method": "pmm",
             "transform": "log", "q_schedule": "tapered",
             "predictors": ["seqavg(M)", "amt(P)", "amt(C)", "age", "female"],
             "eligibility": "worked == 1",
             "pool": {"min_cell": 50}},
            {"kind": "scalars", "variables": [
                {"name": "P", "method": "twopart",
                 "amount": {"method": "pmm", "q": 10, "transform": "log"},
                 "predictors": ["seqavg(M)", "seqavg(W)", "amt(C)", "age"],
                 "eligibility": "retired == 1", "pool": {"min_cell": 50}},
                {"name": "C", "method": "pmm", "q": 10, "transform": "log",
                 "predictors": ["seqavg(M)", "seqavg(W)", "amt(P)", "age"],
                 "eligibility": "worked == 1", "pool": {"min_cell": 50}}
            ]}
        ]}]
    })json", "criterion6");

    std::vector<TraceEvent> events;
    bool completed = true;
    std::string error_msg;
    ImputedStore store;
    try {
        store = run_multiple_imputation(ds, plan,
                                        [&](const TraceEvent& ev) { events.push_back(ev); });
    } catch (const Error& e) {
        completed = false;
        error_msg = e.what();
    }
    check.expect(completed, "run completes: " + error_msg);

    if (completed) {
        // q schedule 10 -> 10 -> 10 (every spell <= 7)
        for (const auto& ev : events)
            if (ev.q > 0) check.expect(ev.q == 10, "q schedule");

        // chain / spell order matches the nested-algorithm steps in the trace
        const std::vector<std::pair<int, std::string>> expected = {
            {1, "M_1"}, {1, "M_2"}, {1, "M_3"}, {2, "W_1"}, {2, "W_2"},
            {2, "W_3"}, {3, "P"},   {3, "C"},
        };
        int current_iter = -1;
        std::size_t cursor = 0;
        bool order_ok = true;
        std::vector<int> iterations;
        for (const auto& ev : events) {
            if (ev.iteration != current_iter) {
                order_ok = order_ok && ev.iteration == current_iter + 1;
                current_iter = ev.iteration;
                iterations.push_back(current_iter);
                cursor = 0;
            }
            while (cursor < expected.size() && expected[cursor].second != ev.variable) ++cursor;
            if (cursor >= expected.size() || expected[cursor].first != ev.chain) {
                order_ok = false;
                break;
            }
        }
        check.expect(order_ok, "nested chain/spell step order");
        check.expect(iterations == std::vector<int>({0, 1, 2, 3}),
                     "initialization plus burn-in iterations, final retained");

        // every imputed positive amount is a donor value of its fitting pool
        long audited = 0;
        for (const auto& ev : events) {
            if (ev.iteration != 3) continue;
            std::set<double> donors;
            for (int i = 0; i < ev.fit_values.size(); ++i) donors.insert(ev.fit_values[i]);
            for (int i = 0; i < ev.imputed_values.size(); ++i) {
                if (ev.imputed_values[i] > 0.0) {
                    ++audited;
                    check.expect(donors.count(ev.imputed_values[i]) == 1, "donor audit");
                }
            }
        }
        check.expect(audited > 50, "donor audit sample size");

        // lag features at the first spell equal zero
        ChainState probe(ds, plan);
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < n; ++r) {
            bool complete = true;
            for (const auto& col : {"M_1", "M_2", "M_3"})
                complete = complete && ds.column(col).state[r] != CellState::Missing;
            if (complete) rows.push_back(r);
        }
        const LagFeatures lag = build_lag_features(probe, "M", 1, rows);
        check.expect(lag.lag_ownership.cwiseAbs().maxCoeff() == 0.0, "lag ownership zero");
        check.expect(lag.lag_amount.cwiseAbs().maxCoeff() == 0.0, "lag amount zero");
    }

    std::ostringstream os;
    os << check.total << " checks, " << check.failures << " failures";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

// ---------------------------------------------------------------------------
// Criterion 7: diagnostics against the MAR fixture and the published rows
// ---------------------------------------------------------------------------

bool criterion_7(std::string& detail) {
    Check check;

    // MAR fixture shared with criterion 5
    const SyntheticSpec spec = parse_synthetic_spec(fixture("sim_spec.json"));
    const SyntheticData data = generate_synthetic(spec, 2024);
    Plan plan = parse_plan(fixture("pipeline_plan.json"));
    plan.m = 5;
    plan.burnin = 10;
    plan.seed = 818;
    const ImputedStore store = run_multiple_imputation(data.masked, plan);

    // KDE mixture identity on every compared variable
    for (const auto& var : {"y1", "y2", "y3"}) {
        const DistributionReport report = compare_distributions(store, var);
        check.expect(report.mixture_residual < 1e-12,
                     std::string(var) + " residual " +
                         std::to_string(report.mixture_residual));
    }

    // completed-data and IPW means vs the full-data truth, each within two of
    // its own Monte Carlo standard errors
    const Column& full_y1 = data.full.column("y1");
    double full_mean = 0.0;
    for (double v : full_y1.values) full_mean += v;
    full_mean /= static_cast<double>(full_y1.size());

    {
        std::vector<double> estimates, variances;
        for (int m = 1; m <= plan.m; ++m) {
            const Column& col = store.blocks[static_cast<std::size_t>(m)].column("y1");
            double sum = 0.0, ss = 0.0;
            const double n = static_cast<double>(col.size());
            for (double v : col.values) sum += v;
            const double mean = sum / n;
            for (double v : col.values) ss += (v - mean) * (v - mean);
            estimates.push_back(mean);
            variances.push_back(ss / (n - 1.0) / n);
        }
        const PooledEstimate pooled = rubin_pool(estimates, variances);
        const double z = std::abs(pooled.point - full_mean) / std::sqrt(pooled.total_var);
        check.expect(z <= 2.0, "completed mean z = " + std::to_string(z));
    }

    {
        const Column& masked_y1 = data.masked.column("y1");
        const Column& z1 = data.masked.column("z1");
        const std::size_t n = data.masked.n_rows();
        std::vector<int> response(n);
        Matrix predictors(static_cast<Eigen::Index>(n), 1);
        for (std::size_t i = 0; i < n; ++i) {
            response[i] = masked_y1.state[i] == CellState::Observed ? 1 : 0;
            predictors(static_cast<Eigen::Index>(i), 0) = z1.values[i];
        }
        const auto weights = fit_ipw_weights(response, predictors, {"z1"}, {}, {});
        double wsum = 0.0, wy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!response[i]) continue;
            wsum += weights[i];
            wy += weights[i] * masked_y1.values[i];
        }
        const double ipw_mean = wy / wsum;
        double se2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!response[i]) continue;
            const double dev = weights[i] * (masked_y1.values[i] - ipw_mean);
            se2 += dev * dev;
        }
        const double se = std::sqrt(se2) / wsum;
        const double z = std::abs(ipw_mean - full_mean) / se;
        check.expect(z <= 2.0, "ipw mean z = " + std::to_string(z));
    }

    // reference summary rows
    const QuartileSummary wage = summary_quartiles({700, 938, 1463, 2156, 3008});
    check.expect(std::abs(wage.mean - 1653.0) < 1e-9 && wage.p25 == 938.0 &&
                     wage.p50 == 1463.0 && wage.p75 == 2156.0,
                 "wage quartile replay");
    const QuartileSummary pension = summary_quartiles({400, 506, 946, 1597, 2331});
    check.expect(std::abs((pension.p75 - pension.p25) - 1091.0) < 1e-9, "pension IQR replay");

    std::ostringstream os;
    os << check.total << " checks, " << check.failures << " failures";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical simulate -> impute -> diagnose via the CLI
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool criterion_8(std::string& detail) {
    Check check;
    const std::string cli = CLI_PATH;
    const std::string base = "/tmp/fcsforge_acceptance";
    std::filesystem::remove_all(base);

    for (const std::string run : {"a", "b"}) {
        const std::string dir = base + "/" + run;
        std::filesystem::create_directories(dir + "/diag");
        const std::string cmd =
            cli + " simulate --spec " + fixture("sim_spec.json") + " --seed 99" +
            " --out-full " + dir + "/full.csv --out-masked " + dir + "/masked.csv" +
            " --out-truth " + dir + "/truth.json > /dev/null && " + cli + " impute --data " +
            dir + "/masked.csv --plan " + fixture("pipeline_plan.json") + " --m 3 --burnin 4" +
            " --seed 1234 --out " + dir + "/store.csv > /dev/null && " + cli +
            " diagnose --store " + dir + "/store.csv --vars y1,y2,y3 --out " + dir +
            "/diag > /dev/null";
        const int rc = std::system(cmd.c_str());
        check.expect(rc == 0, "pipeline run " + run + " exit " + std::to_string(rc));
    }

    const std::vector<std::string> artifacts = {
        "full.csv",           "masked.csv",          "truth.json",
        "store.csv",          "diag/y1_curves.csv",  "diag/y1_summary.csv",
        "diag/y2_curves.csv", "diag/y2_summary.csv", "diag/y3_curves.csv",
        "diag/y3_summary.csv", "diag/mixture_residuals.csv",
    };
    for (const auto& artifact : artifacts) {
        const std::string a = slurp(base + "/a/" + artifact);
        const std::string b = slurp(base + "/b/" + artifact);
        check.expect(!a.empty(), artifact + " non-empty");
        check.expect(a == b, artifact + " byte-identical");
    }

    std::ostringstream os;
    os << artifacts.size() << " artifacts compared, " << check.failures << " failures";
    detail = os.str();
    if (check.failures) detail += " [first: " + check.first_failure + "]";
    return check.failures == 0;
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        std::string name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "conversion fixture suite", criterion_1},
        {2, "trimming and response-rate accounting", criterion_2},
        {3, "estimator oracles", criterion_3},
        {4, "imputer contracts", criterion_4},
        {5, "FCS engine coverage", criterion_5},
        {6, "two-fold monetary chain", criterion_6},
        {7, "diagnostics", criterion_7},
        {8, "end-to-end determinism", criterion_8},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        std::string det;
        bool ok = false;
        try {
            ok = criterion.run(det);
        } catch (const std::exception& e) {
            det = std::string("exception: ") + e.what();
        }
        if (!ok) ++failures;
        std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion.number,
                    criterion.name.c_str(), det.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
