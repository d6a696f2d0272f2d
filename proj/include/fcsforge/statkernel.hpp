#ifndef FCSFORGE_STATKERNEL_HPP_
#define FCSFORGE_STATKERNEL_HPP_

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fcsforge/rng.hpp"

namespace fcsforge {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct DesignMatrix {
    Matrix X;
    std::vector<std::string> names;  // one per column
    std::optional<Vector> weights;   // per-row, >= 0

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }

    /// Throws DataError on non-finite entries, name/shape mismatch, or
    /// negative weights.
    void validate() const;
};

struct LinearFit {
    Vector beta_hat;
    double sigma2_hat = 0.0;
    Matrix xtx_inverse;
    long dof = 0;  // n0 - k
};

/// Weighted least squares via pivoted QR. Rank deficiency raises RankError
/// naming the collinear columns.
LinearFit fit_linear(const Vector& y, const DesignMatrix& X);

/// Posterior draw under the noninformative improper prior:
/// sigma2* ~ sigma2_hat * dof / chi2(dof), beta* | sigma2* ~ N(beta_hat, sigma2* (X'X)^-1).
/// sigma2_hat == 0 degenerates to (beta_hat, 0).
std::pair<Vector, double> draw_linear_posterior(const LinearFit& fit, RngStream& rng);

enum class GlmFamily { Logit, Poisson, OrderedLogit, MultinomialLogit };

struct GlmFit {
    GlmFamily family = GlmFamily::Logit;
    /// Logit/Poisson: k slopes. OrderedLogit: C-1 cutpoints then k slopes.
    /// MultinomialLogit: (C-1) blocks of k slopes (reference = first category).
    Vector beta_hat;
    Matrix covariance;  // inverse observed information
    bool converged = false;
    double log_likelihood = 0.0;
    std::vector<double> categories;  // sorted category codes (ordered/multinomial)
    Eigen::Index n_predictors = 0;

    Eigen::Index n_cutpoints() const {
        return static_cast<Eigen::Index>(categories.size()) - 1;
    }
};

struct GlmControl {
    int max_iterations = 100;
    double score_tolerance = 1e-8;
    double loglik_rel_tolerance = 1e-10;
};

/// Maximum likelihood by IRLS / Newton steps with step halving.
/// Throws ConvergenceError (carrying the last iterate in the message) or
/// SeparationError instructing augmentation.
GlmFit fit_glm(GlmFamily family, const Vector& y, const DesignMatrix& X,
               const GlmControl& control = {});

/// Multivariate normal perturbation beta* ~ N(beta_hat, covariance).
Vector draw_glm_params(const GlmFit& fit, RngStream& rng);

/// One draw from N(mean, sd^2) restricted to [lo, hi] via the inverse CDF.
/// Either bound may be infinite. sd == 0 returns mean clamped to the interval.
double sample_truncated_normal(double mean, double sd, double lo, double hi, RngStream& rng);

struct AugmentedData {
    Vector y;
    DesignMatrix X;  // weights set: 1 for original rows, 0.01 for pseudo rows
};

/// White-style pseudo-observations against perfect prediction: for every
/// covariate column and every outcome category, two weight-0.01 rows at the
/// covariate means. Original rows keep weight 1.
AugmentedData augment_perfect_prediction(const Vector& y, const DesignMatrix& X,
                                         GlmFamily family);

/// Per-row censoring interval for interval regression; lo == hi is point data.
struct IntervalObs {
    double lo = 0.0;
    double hi = 0.0;
};

struct IntervalFit {
    Vector beta_hat;
    double log_sigma_hat = 0.0;
    Matrix covariance;  // over (beta, log sigma)
    bool converged = false;
    double log_likelihood = 0.0;
};

/// Latent-Gaussian ML over point, interval, and one-sided-censored rows.
IntervalFit fit_interval_regression(const std::vector<IntervalObs>& y, const DesignMatrix& X,
                                    const GlmControl& control = {});

/// Linear predictors X * beta.
Vector linear_predictor(const Matrix& X, const Vector& beta);

/// Fitted category probabilities for ordered/multinomial fits; rows sum to 1.
Matrix glm_category_probabilities(const GlmFit& fit, const Matrix& X, const Vector& params);

/// Fitted mean for logit (probability) / poisson (intensity).
Vector glm_mean(GlmFamily family, const Matrix& X, const Vector& beta);

}  // namespace fcsforge

#endif  // FCSFORGE_STATKERNEL_HPP_
