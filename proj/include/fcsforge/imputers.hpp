#ifndef FCSFORGE_IMPUTERS_HPP_
#define FCSFORGE_IMPUTERS_HPP_

#include <memory>
#include <optional>
#include <vector>

#include "fcsforge/statkernel.hpp"

namespace fcsforge {

enum class ImputeMethod {
    GaussianLinear,
    Pmm,
    IntervalRegression,
    PoissonDraw,
    LogitDraw,
    OrderedDraw,
    MultinomialDraw,
    TwoPart,
};

enum class ResponseTransform { None, Log };

struct ImputerSpec {
    ImputeMethod method = ImputeMethod::GaussianLinear;
    int q = 10;                                        // PMM donor-pool size
    ResponseTransform transform = ResponseTransform::None;
    std::shared_ptr<ImputerSpec> amount;               // two-part amount model

    /// Enforces q >= 1 and a continuous-valued two-part amount method.
    void validate() const;
};

/// Per-missing-row censoring bounds in response units.
using CellBounds = std::vector<IntervalObs>;

/// Posterior-predictive draws from the Gaussian linear model.
Vector impute_gaussian(const Vector& y_obs, const DesignMatrix& X_obs, const Matrix& X_mis,
                       RngStream& rng);

/// Predictive mean matching: donor values whose predicted means under beta_hat
/// are nearest the missing row's prediction under beta*.
Vector impute_pmm(const Vector& y_obs, const DesignMatrix& X_obs, const Matrix& X_mis, int q,
                  RngStream& rng);

/// PMM ranking on `y_fit` (e.g. log scale) while returning the matched donor's
/// entry of `y_return` verbatim, keeping the donor-subset property exact.
Vector impute_pmm_scaled(const Vector& y_fit, const Vector& y_return,
                         const DesignMatrix& X_obs, const Matrix& X_mis, int q, RngStream& rng);

/// Interval regression with truncated-normal draws inside each row's bounds.
Vector impute_interval(const std::vector<IntervalObs>& y_obs, const DesignMatrix& X_obs,
                       const Matrix& X_mis, const CellBounds& bounds, RngStream& rng);

/// Poisson / logit / ordered / multinomial simulation at perturbed parameters.
/// Categorical fits are always augmented against perfect prediction.
Vector impute_glm(GlmFamily family, const Vector& y_obs, const DesignMatrix& X_obs,
                  const Matrix& X_mis, RngStream& rng);

/// Logit ownership draw followed by the amount model on the positive subset.
Vector impute_two_part(const ImputerSpec& spec, const Vector& y_obs, const DesignMatrix& X_obs,
                       const Matrix& X_mis, RngStream& rng);

/// Dispatch on an ImputerSpec; applies the response transform around the fit.
/// `bounds` is consulted by the interval method only.
Vector run_imputer(const ImputerSpec& spec, const Vector& y_obs, const DesignMatrix& X_obs,
                   const Matrix& X_mis, const std::optional<CellBounds>& bounds, RngStream& rng);

}  // namespace fcsforge

#endif  // FCSFORGE_IMPUTERS_HPP_
