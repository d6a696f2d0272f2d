#include "fcsforge/imputers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fcsforge/error.hpp"

namespace fcsforge {

void ImputerSpec::validate() const {
    if (method == ImputeMethod::Pmm && q < 1)
        throw PlanError("pmm requires q >= 1");
    if (method == ImputeMethod::TwoPart) {
        if (!amount) throw PlanError("two-part spec needs an amount model");
        switch (amount->method) {
            case ImputeMethod::GaussianLinear:
            case ImputeMethod::Pmm:
            case ImputeMethod::IntervalRegression:
                break;
            default:
                throw PlanError("two-part amount model must be continuous-valued");
        }
        amount->validate();
    }
}

Vector impute_gaussian(const Vector& y_obs, const DesignMatrix& X_obs, const Matrix& X_mis,
                       RngStream& rng) {
    if (X_mis.rows() == 0) return Vector(0);
    const LinearFit fit = fit_linear(y_obs, X_obs);
    const auto [beta_star, sigma2_star] = draw_linear_posterior(fit, rng);
    const double sd = std::sqrt(sigma2_star);
    Vector out = X_mis * beta_star;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sd * rng.normal();
    return out;
}

Vector impute_pmm_scaled(const Vector& y_fit, const Vector& y_return,
                         const DesignMatrix& X_obs, const Matrix& X_mis, int q,
                         RngStream& rng) {
    if (q < 1) throw PlanError("impute_pmm: q must be >= 1");
    if (X_mis.rows() == 0) return Vector(0);
    const Eigen::Index n0 = X_obs.rows();
    if (y_return.size() != y_fit.size())
        throw DataError("impute_pmm: return-value vector length mismatch");
    if (n0 < q)
        throw FitError("impute_pmm: donor pool has " + std::to_string(n0) +
                       " rows, fewer than q = " + std::to_string(q));
    const LinearFit fit = fit_linear(y_fit, X_obs);
    const auto [beta_star, sigma2_star] = draw_linear_posterior(fit, rng);
    (void)sigma2_star;
    const Vector donor_pred = X_obs.X * fit.beta_hat;

    Vector out(X_mis.rows());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n0));
    for (Eigen::Index i = 0; i < X_mis.rows(); ++i) {
        const double target = X_mis.row(i).dot(beta_star);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        // Lexicographic (distance, original row) order makes ties deterministic.
        auto closer = [&](Eigen::Index a, Eigen::Index b) {
            const double da = std::abs(target - donor_pred[a]);
            const double db = std::abs(target - donor_pred[b]);
            return da < db || (da == db && a < b);
        };
        std::nth_element(order.begin(), order.begin() + (q - 1), order.end(), closer);
        const Eigen::Index pick = order[rng.uniform_index(static_cast<std::uint64_t>(q))];
        out[i] = y_return[pick];
    }
    return out;
}

Vector impute_pmm(const Vector& y_obs, const DesignMatrix& X_obs, const Matrix& X_mis, int q,
                  RngStream& rng) {
    return impute_pmm_scaled(y_obs, y_obs, X_obs, X_mis, q, rng);
}

namespace {

Vector draw_mvn(const Vector& mean, const Matrix& cov, RngStream& rng, const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw FitError(std::string(what) + ": bad covariance");
    const Vector& ev = es.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
    Vector root(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8 * scale)
            throw FitError(std::string(what) + ": covariance not positive semi-definite");
        root[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    Vector z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean + es.eigenvectors() * root.asDiagonal() * z;
}

}  // namespace

Vector impute_interval(const std::vector<IntervalObs>& y_obs, const DesignMatrix& X_obs,
                       const Matrix& X_mis, const CellBounds& bounds, RngStream& rng) {
    if (X_mis.rows() == 0) return Vector(0);
    if (static_cast<Eigen::Index>(bounds.size()) != X_mis.rows())
        throw DataError("impute_interval: one bounds pair required per missing row");
    for (std::size_t i = 0; i < bounds.size(); ++i)
        if (!(bounds[i].lo <= bounds[i].hi))
            throw BoundsError("impute_interval: bounds row " + std::to_string(i) +
                              " has lo > hi");

    const IntervalFit fit = fit_interval_regression(y_obs, X_obs);
    const Eigen::Index k = fit.beta_hat.size();
    Vector theta_hat(k + 1);
    theta_hat.head(k) = fit.beta_hat;
    theta_hat[k] = fit.log_sigma_hat;
    const Vector theta_star = draw_mvn(theta_hat, fit.covariance, rng, "impute_interval");
    const double sigma_star = std::exp(theta_star[k]);

    Vector out(X_mis.rows());
    for (Eigen::Index i = 0; i < X_mis.rows(); ++i) {
        const auto& b = bounds[static_cast<std::size_t>(i)];
        if (b.lo == b.hi) {
            out[i] = b.lo;
            continue;
        }
        const double mu = X_mis.row(i).dot(theta_star.head(k));
        out[i] = sample_truncated_normal(mu, sigma_star, b.lo, b.hi, rng);
    }
    return out;
}

Vector impute_glm(GlmFamily family, const Vector& y_obs, const DesignMatrix& X_obs,
                  const Matrix& X_mis, RngStream& rng) {
    if (X_mis.rows() == 0) return Vector(0);

    GlmFit fit;
    if (family == GlmFamily::Poisson) {
        fit = fit_glm(family, y_obs, X_obs);
    } else {
        // FCS sweeps meet many near-separated subsamples; categorical fits are
        // always augmented.
        const AugmentedData aug = augment_perfect_prediction(y_obs, X_obs, family);
        fit = fit_glm(family, aug.y, aug.X);
    }
    const Vector beta_star = draw_glm_params(fit, rng);

    Vector out(X_mis.rows());
    switch (family) {
        case GlmFamily::Poisson: {
            for (Eigen::Index i = 0; i < X_mis.rows(); ++i) {
                const double lambda = std::exp(X_mis.row(i).dot(beta_star));
                out[i] = static_cast<double>(rng.poisson(lambda));
            }
            break;
        }
        case GlmFamily::Logit: {
            for (Eigen::Index i = 0; i < X_mis.rows(); ++i) {
                const double p = 1.0 / (1.0 + std::exp(-X_mis.row(i).dot(beta_star)));
                out[i] = rng.uniform() < p ? 1.0 : 0.0;
            }
            break;
        }
        case GlmFamily::OrderedLogit:
        case GlmFamily::MultinomialLogit: {
            const Matrix probs = glm_category_probabilities(fit, X_mis, beta_star);
            for (Eigen::Index i = 0; i < X_mis.rows(); ++i) {
                const double u = rng.uniform();
                double acc = 0.0;
                Eigen::Index pick = probs.cols() - 1;
                for (Eigen::Index c = 0; c < probs.cols(); ++c) {
                    acc += probs(i, c);
                    if (u < acc) {
                        pick = c;
                        break;
                    }
                }
                out[i] = fit.categories[static_cast<std::size_t>(pick)];
            }
            break;
        }
    }
    return out;
}

Vector impute_two_part(const ImputerSpec& spec, const Vector& y_obs, const DesignMatrix& X_obs,
                       const Matrix& X_mis, RngStream& rng) {
    spec.validate();
    if (spec.method != ImputeMethod::TwoPart) throw PlanError("impute_two_part: wrong spec");
    if ((y_obs.array() < 0.0).any())
        throw DataError("impute_two_part: responses must be non-negative");
    if (X_mis.rows() == 0) return Vector(0);

    std::vector<Eigen::Index> positive;
    for (Eigen::Index i = 0; i < y_obs.size(); ++i)
        if (y_obs[i] > 0.0) positive.push_back(i);

    // Ownership identically zero in the observed data: nothing to model.
    if (positive.empty()) return Vector::Zero(X_mis.rows());

    Vector ownership(y_obs.size());
    for (Eigen::Index i = 0; i < y_obs.size(); ++i) ownership[i] = y_obs[i] > 0.0 ? 1.0 : 0.0;
    const Vector own_draw = impute_glm(GlmFamily::Logit, ownership, X_obs, X_mis, rng);

    std::vector<Eigen::Index> owners;
    for (Eigen::Index i = 0; i < own_draw.size(); ++i)
        if (own_draw[i] == 1.0) owners.push_back(i);

    Vector out = Vector::Zero(X_mis.rows());
    if (owners.empty()) return out;

    // Amount model on the positive subset only.
    Vector y_pos(static_cast<Eigen::Index>(positive.size()));
    Matrix X_pos(static_cast<Eigen::Index>(positive.size()), X_obs.cols());
    for (std::size_t i = 0; i < positive.size(); ++i) {
        y_pos[static_cast<Eigen::Index>(i)] = y_obs[positive[i]];
        X_pos.row(static_cast<Eigen::Index>(i)) = X_obs.X.row(positive[i]);
    }
    Matrix X_own(static_cast<Eigen::Index>(owners.size()), X_mis.cols());
    for (std::size_t i = 0; i < owners.size(); ++i)
        X_own.row(static_cast<Eigen::Index>(i)) = X_mis.row(owners[i]);

    DesignMatrix X_pos_d{X_pos, X_obs.names, std::nullopt};
    const Vector amounts = run_imputer(*spec.amount, y_pos, X_pos_d, X_own, std::nullopt, rng);
    for (std::size_t i = 0; i < owners.size(); ++i)
        out[owners[i]] = amounts[static_cast<Eigen::Index>(i)];
    return out;
}

Vector run_imputer(const ImputerSpec& spec, const Vector& y_obs, const DesignMatrix& X_obs,
                   const Matrix& X_mis, const std::optional<CellBounds>& bounds, RngStream& rng) {
    spec.validate();
    if (X_mis.rows() == 0) return Vector(0);

    const bool log_scale = spec.transform == ResponseTransform::Log;
    auto to_fit_scale = [&](const Vector& y) {
        if (!log_scale) return y;
        Vector out(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (!(y[i] > 0.0))
                throw DataError("log transform requires strictly positive responses");
            out[i] = std::log(y[i]);
        }
        return out;
    };

    switch (spec.method) {
        case ImputeMethod::GaussianLinear: {
            const Vector draws = impute_gaussian(to_fit_scale(y_obs), X_obs, X_mis, rng);
            if (!log_scale) return draws;
            return draws.array().exp().matrix();
        }
        case ImputeMethod::Pmm: {
            // Ranking happens on the fit scale; the matched donor's original
            // response is returned verbatim (no back-transform roundoff).
            return impute_pmm_scaled(to_fit_scale(y_obs), y_obs, X_obs, X_mis, spec.q, rng);
        }
        case ImputeMethod::IntervalRegression: {
            if (!bounds) throw PlanError("interval method requires bounds");
            std::vector<IntervalObs> obs(static_cast<std::size_t>(y_obs.size()));
            const Vector y_fit = to_fit_scale(y_obs);
            for (Eigen::Index i = 0; i < y_obs.size(); ++i)
                obs[static_cast<std::size_t>(i)] = {y_fit[i], y_fit[i]};
            CellBounds b = *bounds;
            if (log_scale) {
                for (auto& cell : b) {
                    cell.lo = cell.lo > 0.0 ? std::log(cell.lo)
                                            : -std::numeric_limits<double>::infinity();
                    cell.hi = std::isinf(cell.hi) ? cell.hi
                              : cell.hi > 0.0    ? std::log(cell.hi)
                                                 : -std::numeric_limits<double>::infinity();
                }
            }
            const Vector draws = impute_interval(obs, X_obs, X_mis, b, rng);
            if (!log_scale) return draws;
            return draws.array().exp().matrix();
        }
        case ImputeMethod::PoissonDraw:
            return impute_glm(GlmFamily::Poisson, y_obs, X_obs, X_mis, rng);
        case ImputeMethod::LogitDraw:
            return impute_glm(GlmFamily::Logit, y_obs, X_obs, X_mis, rng);
        case ImputeMethod::OrderedDraw:
            return impute_glm(GlmFamily::OrderedLogit, y_obs, X_obs, X_mis, rng);
        case ImputeMethod::MultinomialDraw:
            return impute_glm(GlmFamily::MultinomialLogit, y_obs, X_obs, X_mis, rng);
        case ImputeMethod::TwoPart:
            return impute_two_part(spec, y_obs, X_obs, X_mis, rng);
    }
    throw PlanError("run_imputer: unknown method");
}

}  // namespace fcsforge
