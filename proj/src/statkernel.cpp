#include "fcsforge/statkernel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "fcsforge/error.hpp"

namespace fcsforge {

namespace {

constexpr double kRankPivotRatio = 1e-10;
constexpr double kSeparationProb = 1e-10;

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        if (!out.empty()) out += ", ";
        out += n;
    }
    return out;
}

Vector row_weights(const DesignMatrix& X) {
    if (X.weights) return *X.weights;
    return Vector::Ones(X.rows());
}

// Symmetric PSD square root via eigendecomposition; tolerates tiny negative
// eigenvalues from roundoff, rejects genuinely indefinite matrices.
Matrix psd_sqrt(const Matrix& S, const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    if (es.info() != Eigen::Success) throw FitError(std::string(what) + ": eigendecomposition failed");
    const Vector& ev = es.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
    Vector root(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8 * scale)
            throw FitError(std::string(what) + ": matrix is not positive semi-definite");
        root[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * root.asDiagonal();
}

std::string format_vector(const Vector& v) {
    std::ostringstream os;
    os << "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) os << ", ";
        os << v[i];
    }
    os << "]";
    return os.str();
}

}  // namespace

void DesignMatrix::validate() const {
    if (cols() < 1) throw DataError("design matrix needs at least one column");
    if (static_cast<Eigen::Index>(names.size()) != cols())
        throw DataError("design matrix has " + std::to_string(cols()) + " columns but " +
                        std::to_string(names.size()) + " names");
    if (!X.allFinite()) {
        for (Eigen::Index j = 0; j < cols(); ++j)
            if (!X.col(j).allFinite())
                throw DataError("design column '" + names[j] + "' contains non-finite entries");
    }
    if (weights) {
        if (weights->size() != rows()) throw DataError("weight vector length mismatch");
        if ((weights->array() < 0.0).any()) throw DataError("weights must be non-negative");
    }
}

Vector linear_predictor(const Matrix& X, const Vector& beta) { return X * beta; }

LinearFit fit_linear(const Vector& y, const DesignMatrix& X) {
    X.validate();
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (y.size() != n) throw DataError("fit_linear: response length mismatch");
    if (!y.allFinite()) throw DataError("fit_linear: response contains non-finite entries");
    if (n <= k)
        throw FitError("fit_linear: need more rows (" + std::to_string(n) +
                       ") than columns (" + std::to_string(k) + ")");

    Matrix Xw = X.X;
    Vector yw = y;
    if (X.weights) {
        const Vector s = X.weights->array().sqrt();
        Xw.array().colwise() *= s.array();
        yw.array() *= s.array();
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
    const Matrix R = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    const double max_pivot = std::abs(R(0, 0));
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < k; ++i)
        if (std::abs(R(i, i)) > kRankPivotRatio * max_pivot) ++rank;
    if (rank < k) {
        std::vector<std::string> collinear;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index i = rank; i < k; ++i) collinear.push_back(X.names[perm[i]]);
        throw RankError("fit_linear: design is rank deficient; collinear columns: " +
                            join_names(collinear),
                        collinear);
    }

    LinearFit fit;
    fit.beta_hat = qr.solve(yw);
    const Vector resid = yw - Xw * fit.beta_hat;
    fit.dof = static_cast<long>(n - k);
    fit.sigma2_hat = resid.squaredNorm() / static_cast<double>(fit.dof);

    // (X'X)^-1 from the R factor: R is the permuted Cholesky of X'X.
    const Matrix r_inv =
        R.template triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
    Matrix xtx_inv = r_inv * r_inv.transpose();
    const Matrix P = qr.colsPermutation();
    fit.xtx_inverse = P * xtx_inv * P.transpose();
    fit.xtx_inverse = 0.5 * (fit.xtx_inverse + fit.xtx_inverse.transpose()).eval();
    return fit;
}

std::pair<Vector, double> draw_linear_posterior(const LinearFit& fit, RngStream& rng) {
    if (fit.dof < 1) throw FitError("draw_linear_posterior: needs dof >= 1");
    if (fit.sigma2_hat == 0.0) {
        std::cerr << "fcsforge: degenerate posterior draw (sigma2_hat = 0)\n";
        return {fit.beta_hat, 0.0};
    }
    const double chi2 = rng.chi_squared(static_cast<double>(fit.dof));
    const double sigma2_star = fit.sigma2_hat * static_cast<double>(fit.dof) / chi2;
    const Matrix root = psd_sqrt(fit.xtx_inverse, "draw_linear_posterior");
    Vector z(fit.beta_hat.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Vector beta_star = fit.beta_hat + std::sqrt(sigma2_star) * (root * z);
    return {beta_star, sigma2_star};
}

Vector glm_mean(GlmFamily family, const Matrix& X, const Vector& beta) {
    const Vector eta = X * beta;
    Vector mu(eta.size());
    switch (family) {
        case GlmFamily::Logit:
            for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
            break;
        case GlmFamily::Poisson:
            for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = std::exp(eta[i]);
            break;
        default:
            throw FitError("glm_mean: defined for logit and poisson only");
    }
    return mu;
}

namespace {

std::vector<double> sorted_categories(const Vector& y) {
    std::set<double> cats(y.data(), y.data() + y.size());
    return std::vector<double>(cats.begin(), cats.end());
}

std::vector<int> category_index(const Vector& y, const std::vector<double>& cats) {
    std::vector<int> idx(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const auto it = std::lower_bound(cats.begin(), cats.end(), y[i]);
        if (it == cats.end() || *it != y[i])
            throw DataError("categorical response value " + std::to_string(y[i]) +
                            " not in the category set");
        idx[i] = static_cast<int>(it - cats.begin());
    }
    return idx;
}

struct NewtonProblem {
    // log-likelihood at theta
    std::function<double(const Vector&)> loglik;
    // analytic score at theta
    std::function<Vector(const Vector&)> score;
    // negative Hessian (observed information); may be empty -> numeric fallback
    std::function<Matrix(const Vector&)> information;
    // optional step admissibility check (e.g. cutpoint ordering)
    std::function<bool(const Vector&)> admissible;
    // optional separation probe: returns true when fitted probabilities are
    // degenerate for some row
    std::function<bool(const Vector&)> degenerate_probs;
};

Matrix numeric_information(const NewtonProblem& prob, const Vector& theta) {
    const Eigen::Index p = theta.size();
    Matrix H(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(theta[j]));
        Vector tp = theta, tm = theta;
        tp[j] += h;
        tm[j] -= h;
        H.col(j) = (prob.score(tp) - prob.score(tm)) / (2.0 * h);
    }
    Matrix info = -0.5 * (H + H.transpose());
    return info;
}

struct NewtonResult {
    Vector theta;
    Matrix covariance;
    double loglik = 0.0;
    bool converged = false;
};

// Maximizes the log-likelihood by damped Newton steps. Convergence when the
// score sup-norm or the relative log-likelihood change drops below tolerance.
NewtonResult newton_maximize(const NewtonProblem& prob, Vector theta, const GlmControl& control,
                             const char* what) {
    double ll = prob.loglik(theta);
    if (!std::isfinite(ll)) throw FitError(std::string(what) + ": log-likelihood not finite at start");

    bool converged = false;
    for (int iter = 0; iter < control.max_iterations; ++iter) {
        const Vector g = prob.score(theta);
        if (g.cwiseAbs().maxCoeff() < control.score_tolerance) {
            converged = true;
            break;
        }
        Matrix info = prob.information ? prob.information(theta) : numeric_information(prob, theta);
        // Levenberg-style ridge until the information solves cleanly.
        Vector step;
        double ridge = 0.0;
        for (;;) {
            Matrix damped = info;
            if (ridge > 0.0) damped.diagonal().array() += ridge;
            Eigen::LDLT<Matrix> ldlt(damped);
            if (ldlt.info() == Eigen::Success) {
                step = ldlt.solve(g);
                if (step.allFinite()) break;
            }
            ridge = ridge == 0.0 ? 1e-8 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff())
                                 : ridge * 10.0;
            if (ridge > 1e12) throw FitError(std::string(what) + ": information matrix unusable");
        }

        const double step_norm = step.cwiseAbs().maxCoeff();
        double scale = 1.0;
        Vector cand;
        double cand_ll = -std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int halving = 0; halving < 40; ++halving) {
            cand = theta + scale * step;
            if (!prob.admissible || prob.admissible(cand)) {
                cand_ll = prob.loglik(cand);
                if (std::isfinite(cand_ll) && cand_ll >= ll - 1e-12) {
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!accepted)
            throw ConvergenceError(std::string(what) + ": no ascent step found at iterate " +
                                   format_vector(theta));

        if (prob.degenerate_probs && prob.degenerate_probs(cand) && step_norm > 0.5)
            throw SeparationError(std::string(what) +
                                  ": perfect prediction detected (fitted probabilities at 0/1 "
                                  "with unbounded step); augment the data and refit");

        const double rel_change = std::abs(cand_ll - ll) / (std::abs(ll) + 1e-12);
        theta = cand;
        ll = cand_ll;
        if (rel_change < control.loglik_rel_tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        const Vector g = prob.score(theta);
        if (g.cwiseAbs().maxCoeff() < control.score_tolerance) converged = true;
    }
    if (!converged)
        throw ConvergenceError(std::string(what) + ": no convergence after " +
                               std::to_string(control.max_iterations) + " iterations; last iterate " +
                               format_vector(theta));

    NewtonResult res;
    res.theta = theta;
    res.loglik = ll;
    res.converged = true;
    Matrix info = prob.information ? prob.information(theta) : numeric_information(prob, theta);
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success)
        throw FitError(std::string(what) + ": observed information is not invertible at the optimum");
    res.covariance = ldlt.solve(Matrix::Identity(info.rows(), info.cols()));
    res.covariance = 0.5 * (res.covariance + res.covariance.transpose()).eval();
    return res;
}

double log1pexp(double x) { return x > 33.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

GlmFit fit_glm(GlmFamily family, const Vector& y, const DesignMatrix& X,
               const GlmControl& control) {
    X.validate();
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (y.size() != n) throw DataError("fit_glm: response length mismatch");
    if (n < k) throw FitError("fit_glm: fewer rows than predictors");
    const Vector w = row_weights(X);
    const Matrix& Xm = X.X;

    GlmFit fit;
    fit.family = family;
    fit.n_predictors = k;

    // Fractional weights mark augmented data, whose MLE is finite by
    // construction; the fail-fast separation probe only guards raw fits.
    const bool guard_separation = !X.weights || (X.weights->array() == 1.0).all();

    if (family == GlmFamily::Logit || family == GlmFamily::Poisson) {
        if (family == GlmFamily::Logit) {
            for (Eigen::Index i = 0; i < n; ++i)
                if (y[i] != 0.0 && y[i] != 1.0)
                    throw DataError("fit_glm(logit): responses must be 0/1");
        } else {
            for (Eigen::Index i = 0; i < n; ++i)
                if (y[i] < 0.0 || y[i] != std::floor(y[i]))
                    throw DataError("fit_glm(poisson): responses must be non-negative counts");
        }

        NewtonProblem prob;
        prob.loglik = [&](const Vector& beta) {
            const Vector eta = Xm * beta;
            double ll = 0.0;
            if (family == GlmFamily::Logit) {
                for (Eigen::Index i = 0; i < n; ++i)
                    ll += w[i] * (y[i] * eta[i] - log1pexp(eta[i]));
            } else {
                for (Eigen::Index i = 0; i < n; ++i)
                    ll += w[i] * (y[i] * eta[i] - std::exp(eta[i]) - std::lgamma(y[i] + 1.0));
            }
            return ll;
        };
        prob.score = [&](const Vector& beta) {
            const Vector mu = glm_mean(family, Xm, beta);
            return Vector(Xm.transpose() * (w.array() * (y - mu).array()).matrix());
        };
        prob.information = [&](const Vector& beta) {
            const Vector mu = glm_mean(family, Xm, beta);
            Vector v(n);
            if (family == GlmFamily::Logit)
                v = (w.array() * mu.array() * (1.0 - mu.array())).matrix();
            else
                v = (w.array() * mu.array()).matrix();
            return Matrix(Xm.transpose() * v.asDiagonal() * Xm);
        };
        if (family == GlmFamily::Logit && guard_separation) {
            prob.degenerate_probs = [&](const Vector& beta) {
                const Vector mu = glm_mean(family, Xm, beta);
                return (mu.array() < kSeparationProb).any() ||
                       (mu.array() > 1.0 - kSeparationProb).any();
            };
        }

        const NewtonResult res =
            newton_maximize(prob, Vector::Zero(k), control, family == GlmFamily::Logit
                                                               ? "fit_glm(logit)"
                                                               : "fit_glm(poisson)");
        fit.beta_hat = res.theta;
        fit.covariance = res.covariance;
        fit.converged = res.converged;
        fit.log_likelihood = res.loglik;
        return fit;
    }

    // Categorical families.
    fit.categories = sorted_categories(y);
    const int C = static_cast<int>(fit.categories.size());
    if (C < 2) throw DataError("fit_glm: categorical response needs at least 2 categories");
    const std::vector<int> ci = category_index(y, fit.categories);

    if (family == GlmFamily::OrderedLogit) {
        // The cutpoints absorb the location; a constant column would be
        // unidentified against them.
        for (Eigen::Index j = 0; j < k; ++j)
            if (Xm.col(j).maxCoeff() == Xm.col(j).minCoeff())
                throw DataError("fit_glm(ordered): column '" + X.names[j] +
                                "' is constant; drop the intercept, the cutpoints absorb it");
        const Eigen::Index p = (C - 1) + k;
        auto probs_at = [&](const Vector& theta, Eigen::Index i, int c) {
            const double eta = Xm.row(i).dot(theta.segment(C - 1, k));
            const double upper =
                c == C - 1 ? 1.0 : 1.0 / (1.0 + std::exp(-(theta[c] - eta)));
            const double lower = c == 0 ? 0.0 : 1.0 / (1.0 + std::exp(-(theta[c - 1] - eta)));
            return std::max(upper - lower, 0.0);
        };
        NewtonProblem prob;
        prob.admissible = [&](const Vector& theta) {
            for (int c = 1; c < C - 1; ++c)
                if (!(theta[c] > theta[c - 1])) return false;
            return true;
        };
        prob.loglik = [&](const Vector& theta) {
            double ll = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double p_i = probs_at(theta, i, ci[i]);
                if (p_i <= 0.0) return -std::numeric_limits<double>::infinity();
                ll += w[i] * std::log(p_i);
            }
            return ll;
        };
        prob.score = [&](const Vector& theta) {
            Vector g = Vector::Zero(p);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double eta = Xm.row(i).dot(theta.segment(C - 1, k));
                const int c = ci[i];
                const double zu = c == C - 1 ? std::numeric_limits<double>::infinity()
                                             : theta[c] - eta;
                const double zl = c == 0 ? -std::numeric_limits<double>::infinity()
                                         : theta[c - 1] - eta;
                const double Fu = c == C - 1 ? 1.0 : 1.0 / (1.0 + std::exp(-zu));
                const double Fl = c == 0 ? 0.0 : 1.0 / (1.0 + std::exp(-zl));
                const double fu = c == C - 1 ? 0.0 : Fu * (1.0 - Fu);
                const double fl = c == 0 ? 0.0 : Fl * (1.0 - Fl);
                const double P = std::max(Fu - Fl, 1e-300);
                if (c < C - 1) g[c] += w[i] * fu / P;
                if (c > 0) g[c - 1] -= w[i] * fl / P;
                g.segment(C - 1, k) += w[i] * ((fl - fu) / P) * Xm.row(i).transpose();
            }
            return g;
        };
        prob.information = [&](const Vector& theta) {
            Matrix H = Matrix::Zero(p, p);
            Vector du = Vector::Zero(p), dl = Vector::Zero(p), gi = Vector::Zero(p);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double eta = Xm.row(i).dot(theta.segment(C - 1, k));
                const int c = ci[i];
                const double zu = c == C - 1 ? std::numeric_limits<double>::infinity()
                                             : theta[c] - eta;
                const double zl = c == 0 ? -std::numeric_limits<double>::infinity()
                                         : theta[c - 1] - eta;
                const double Fu = c == C - 1 ? 1.0 : 1.0 / (1.0 + std::exp(-zu));
                const double Fl = c == 0 ? 0.0 : 1.0 / (1.0 + std::exp(-zl));
                const double fu = c == C - 1 ? 0.0 : Fu * (1.0 - Fu);
                const double fl = c == 0 ? 0.0 : Fl * (1.0 - Fl);
                // f' = f (1 - 2F); zero at the infinite sides
                const double dfu = c == C - 1 ? 0.0 : fu * (1.0 - 2.0 * Fu);
                const double dfl = c == 0 ? 0.0 : fl * (1.0 - 2.0 * Fl);
                const double P = std::max(Fu - Fl, 1e-300);

                du.setZero();
                dl.setZero();
                if (c < C - 1) du[c] = 1.0;
                if (c > 0) dl[c - 1] = 1.0;
                du.segment(C - 1, k) = -Xm.row(i).transpose();
                dl.segment(C - 1, k) = -Xm.row(i).transpose();
                gi = (fu * du - fl * dl) / P;
                H.noalias() += w[i] * ((dfu / P) * du * du.transpose() -
                                       (dfl / P) * dl * dl.transpose() - gi * gi.transpose());
            }
            return Matrix(-H);
        };
        if (guard_separation) {
            prob.degenerate_probs = [&](const Vector& theta) {
                for (Eigen::Index i = 0; i < n; ++i)
                    if (probs_at(theta, i, ci[i]) < kSeparationProb) return true;
                return false;
            };
        }

        // Cutpoints from empirical cumulative logits, slopes at zero.
        Vector theta0 = Vector::Zero(p);
        double wsum = w.sum();
        double acc = 0.0;
        for (int c = 0; c < C - 1; ++c) {
            for (Eigen::Index i = 0; i < n; ++i)
                if (ci[i] == c) acc += w[i];
            const double frac = std::min(std::max(acc / wsum, 1e-6), 1.0 - 1e-6);
            theta0[c] = std::log(frac / (1.0 - frac));
        }
        for (int c = 1; c < C - 1; ++c)
            if (theta0[c] <= theta0[c - 1]) theta0[c] = theta0[c - 1] + 1e-3;

        const NewtonResult res = newton_maximize(prob, theta0, control, "fit_glm(ordered)");
        for (int c = 1; c < C - 1; ++c)
            if (!(res.theta[c] > res.theta[c - 1]))
                throw FitError("fit_glm(ordered): cutpoints not strictly increasing at optimum");
        fit.beta_hat = res.theta;
        fit.covariance = res.covariance;
        fit.converged = res.converged;
        fit.log_likelihood = res.loglik;
        return fit;
    }

    if (family == GlmFamily::MultinomialLogit) {
        const Eigen::Index p = static_cast<Eigen::Index>(C - 1) * k;
        auto probabilities = [&](const Vector& theta) {
            Matrix eta = Matrix::Zero(n, C);
            for (int c = 1; c < C; ++c)
                eta.col(c) = Xm * theta.segment(static_cast<Eigen::Index>(c - 1) * k, k);
            Matrix P(n, C);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double m = eta.row(i).maxCoeff();
                double denom = 0.0;
                for (int c = 0; c < C; ++c) denom += std::exp(eta(i, c) - m);
                for (int c = 0; c < C; ++c) P(i, c) = std::exp(eta(i, c) - m) / denom;
            }
            return P;
        };
        NewtonProblem prob;
        prob.loglik = [&](const Vector& theta) {
            const Matrix P = probabilities(theta);
            double ll = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double p_i = P(i, ci[i]);
                if (p_i <= 0.0) return -std::numeric_limits<double>::infinity();
                ll += w[i] * std::log(p_i);
            }
            return ll;
        };
        prob.score = [&](const Vector& theta) {
            const Matrix P = probabilities(theta);
            Vector g = Vector::Zero(p);
            for (int c = 1; c < C; ++c) {
                Vector r(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    r[i] = w[i] * ((ci[i] == c ? 1.0 : 0.0) - P(i, c));
                g.segment(static_cast<Eigen::Index>(c - 1) * k, k) = Xm.transpose() * r;
            }
            return g;
        };
        prob.information = [&](const Vector& theta) {
            const Matrix P = probabilities(theta);
            Matrix info = Matrix::Zero(p, p);
            for (int c = 1; c < C; ++c) {
                for (int d = 1; d < C; ++d) {
                    Vector v(n);
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double pc = P(i, c);
                        const double pd = P(i, d);
                        v[i] = w[i] * pc * ((c == d ? 1.0 : 0.0) - pd);
                    }
                    info.block(static_cast<Eigen::Index>(c - 1) * k,
                               static_cast<Eigen::Index>(d - 1) * k, k, k) =
                        Xm.transpose() * v.asDiagonal() * Xm;
                }
            }
            return info;
        };
        if (guard_separation) {
            prob.degenerate_probs = [&](const Vector& theta) {
                const Matrix P = probabilities(theta);
                for (Eigen::Index i = 0; i < n; ++i)
                    if (P(i, ci[i]) < kSeparationProb) return true;
                return false;
            };
        }

        const NewtonResult res =
            newton_maximize(prob, Vector::Zero(p), control, "fit_glm(multinomial)");
        fit.beta_hat = res.theta;
        fit.covariance = res.covariance;
        fit.converged = res.converged;
        fit.log_likelihood = res.loglik;
        return fit;
    }

    throw FitError("fit_glm: unsupported family");
}

Matrix glm_category_probabilities(const GlmFit& fit, const Matrix& X, const Vector& params) {
    const Eigen::Index n = X.rows();
    const int C = static_cast<int>(fit.categories.size());
    const Eigen::Index k = fit.n_predictors;
    Matrix P(n, C);
    if (fit.family == GlmFamily::OrderedLogit) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double eta = X.row(i).dot(params.segment(C - 1, k));
            double prev = 0.0;
            for (int c = 0; c < C; ++c) {
                const double cum =
                    c == C - 1 ? 1.0 : 1.0 / (1.0 + std::exp(-(params[c] - eta)));
                P(i, c) = std::max(cum - prev, 0.0);
                prev = cum;
            }
            P.row(i) /= P.row(i).sum();
        }
        return P;
    }
    if (fit.family == GlmFamily::MultinomialLogit) {
        Matrix eta = Matrix::Zero(n, C);
        for (int c = 1; c < C; ++c)
            eta.col(c) = X * params.segment(static_cast<Eigen::Index>(c - 1) * k, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = eta.row(i).maxCoeff();
            double denom = 0.0;
            for (int c = 0; c < C; ++c) denom += std::exp(eta(i, c) - m);
            for (int c = 0; c < C; ++c) P(i, c) = std::exp(eta(i, c) - m) / denom;
        }
        return P;
    }
    throw FitError("glm_category_probabilities: categorical families only");
}

Vector draw_glm_params(const GlmFit& fit, RngStream& rng) {
    if (!fit.converged) throw FitError("draw_glm_params: fit did not converge");
    if (fit.covariance.rows() != fit.beta_hat.size())
        throw FitError("draw_glm_params: covariance shape mismatch");
    const Matrix root = psd_sqrt(fit.covariance, "draw_glm_params");
    Vector z(fit.beta_hat.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return fit.beta_hat + root * z;
}

double sample_truncated_normal(double mean, double sd, double lo, double hi, RngStream& rng) {
    if (!(lo < hi)) throw BoundsError("sample_truncated_normal: requires lo < hi");
    if (sd < 0.0) throw DataError("sample_truncated_normal: sd must be non-negative");
    if (sd == 0.0) {
        if (mean < lo) {
            std::cerr << "fcsforge: degenerate truncated normal clamped to lower bound\n";
            return lo;
        }
        if (mean > hi) {
            std::cerr << "fcsforge: degenerate truncated normal clamped to upper bound\n";
            return hi;
        }
        return mean;
    }
    const double a = (lo - mean) / sd;
    const double b = (hi - mean) / sd;

    // Inverse-CDF draw on the standardized interval. The lower-tail CDF is
    // accurate near 0, so intervals living in the upper tail are mirrored.
    struct Std {
        static double draw(double a, double b, RngStream& rng) {
            if (a >= 0.0) return -draw(-b, -a, rng);
            const double pa = normal_cdf(a);
            const double pb = normal_cdf(b);
            double u = pa + (pb - pa) * rng.uniform_open();
            u = std::min(std::max(u, std::numeric_limits<double>::min()),
                         1.0 - std::numeric_limits<double>::epsilon() / 2);
            return normal_quantile(u);
        }
    };
    const double z = std::isinf(a) && std::isinf(b) ? rng.normal() : Std::draw(a, b, rng);
    return std::min(std::max(mean + sd * z, lo), hi);
}

AugmentedData augment_perfect_prediction(const Vector& y, const DesignMatrix& X,
                                         GlmFamily family) {
    if (family != GlmFamily::Logit && family != GlmFamily::OrderedLogit &&
        family != GlmFamily::MultinomialLogit)
        throw FitError("augment_perfect_prediction: categorical families only");
    X.validate();
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();

    std::vector<double> cats;
    if (family == GlmFamily::Logit) {
        cats = {0.0, 1.0};
    } else {
        cats = sorted_categories(y);
    }
    const Eigen::Index extra = 2 * k * static_cast<Eigen::Index>(cats.size());

    const Vector means = X.X.colwise().mean();
    Vector sds(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double ss = (X.X.col(j).array() - means[j]).square().sum();
        sds[j] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    }

    AugmentedData out;
    out.y.resize(n + extra);
    out.y.head(n) = y;
    out.X.X.resize(n + extra, k);
    out.X.X.topRows(n) = X.X;
    out.X.names = X.names;
    Vector w(n + extra);
    w.head(n) = row_weights(X);

    // Two rows per (column, category): every other covariate at its mean, the
    // indexed one displaced one SD each way so no slope direction escapes.
    Eigen::Index r = n;
    for (Eigen::Index j = 0; j < k; ++j) {
        for (double cat : cats) {
            for (int side = 0; side < 2; ++side) {
                out.X.X.row(r) = means.transpose();
                out.X.X(r, j) = means[j] + 0.5 * (side == 0 ? sds[j] : -sds[j]);
                out.y[r] = cat;
                w[r] = 0.01;
                ++r;
            }
        }
    }
    out.X.weights = w;
    return out;
}

IntervalFit fit_interval_regression(const std::vector<IntervalObs>& y, const DesignMatrix& X,
                                    const GlmControl& control) {
    X.validate();
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (static_cast<Eigen::Index>(y.size()) != n)
        throw DataError("fit_interval_regression: response length mismatch");
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!(y[i].lo <= y[i].hi))
            throw DataError("fit_interval_regression: row " + std::to_string(i) +
                            " has lo > hi");
    const Vector w = row_weights(X);
    const Matrix& Xm = X.X;

    auto loglik = [&](const Vector& theta) {
        const double s = std::exp(theta[k]);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mu = Xm.row(i).dot(theta.head(k));
            const auto& o = y[static_cast<std::size_t>(i)];
            double li;
            if (o.lo == o.hi) {
                const double r = (o.lo - mu) / s;
                li = -theta[k] - 0.5 * std::log(2.0 * M_PI) - 0.5 * r * r;
            } else {
                const double Fu = std::isinf(o.hi) ? 1.0 : normal_cdf((o.hi - mu) / s);
                const double Fl = std::isinf(o.lo) ? 0.0 : normal_cdf((o.lo - mu) / s);
                const double P = Fu - Fl;
                if (!(P > 0.0)) return -std::numeric_limits<double>::infinity();
                li = std::log(P);
            }
            ll += w[i] * li;
        }
        return ll;
    };
    auto score = [&](const Vector& theta) {
        const double s = std::exp(theta[k]);
        Vector g = Vector::Zero(k + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mu = Xm.row(i).dot(theta.head(k));
            const auto& o = y[static_cast<std::size_t>(i)];
            double dmu, dgamma;
            if (o.lo == o.hi) {
                const double r = (o.lo - mu) / s;
                dmu = r / s;
                dgamma = r * r - 1.0;
            } else {
                const double zu = std::isinf(o.hi) ? std::numeric_limits<double>::infinity()
                                                   : (o.hi - mu) / s;
                const double zl = std::isinf(o.lo) ? -std::numeric_limits<double>::infinity()
                                                   : (o.lo - mu) / s;
                const double Fu = std::isinf(zu) ? 1.0 : normal_cdf(zu);
                const double Fl = std::isinf(zl) ? 0.0 : normal_cdf(zl);
                const double fu = std::isinf(zu) ? 0.0 : normal_pdf(zu);
                const double fl = std::isinf(zl) ? 0.0 : normal_pdf(zl);
                const double P = std::max(Fu - Fl, 1e-300);
                dmu = (fl - fu) / (s * P);
                const double zfu = std::isinf(zu) ? 0.0 : zu * fu;
                const double zfl = std::isinf(zl) ? 0.0 : zl * fl;
                dgamma = (zfl - zfu) / P;
            }
            g.head(k) += w[i] * dmu * Xm.row(i).transpose();
            g[k] += w[i] * dgamma;
        }
        return g;
    };

    NewtonProblem prob;
    prob.loglik = loglik;
    prob.score = score;

    // Start from least squares on interval midpoints (finite sides only).
    Vector y0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = y[static_cast<std::size_t>(i)];
        if (std::isfinite(o.lo) && std::isfinite(o.hi)) y0[i] = 0.5 * (o.lo + o.hi);
        else if (std::isfinite(o.lo)) y0[i] = o.lo;
        else if (std::isfinite(o.hi)) y0[i] = o.hi;
        else y0[i] = 0.0;
    }
    Vector theta0 = Vector::Zero(k + 1);
    {
        DesignMatrix Xd{Xm, X.names, std::nullopt};
        try {
            const LinearFit ls = fit_linear(y0, Xd);
            theta0.head(k) = ls.beta_hat;
            theta0[k] = 0.5 * std::log(std::max(ls.sigma2_hat, 1e-4));
        } catch (const FitError&) {
            theta0[k] = 0.0;
        }
    }

    const NewtonResult res = newton_maximize(prob, theta0, control, "fit_interval_regression");
    IntervalFit fit;
    fit.beta_hat = res.theta.head(k);
    fit.log_sigma_hat = res.theta[k];
    fit.covariance = res.covariance;
    fit.converged = res.converged;
    fit.log_likelihood = res.loglik;
    return fit;
}

}  // namespace fcsforge
