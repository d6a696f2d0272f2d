#ifndef FCSFORGE_RNG_HPP_
#define FCSFORGE_RNG_HPP_

#include <cstdint>
#include <random>

namespace fcsforge {

/// Standard normal quantile function, accurate to ~1e-15 (AS 241, PPND16).
double normal_quantile(double p);

/// Standard normal CDF; accurate in both tails.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Seeded random stream backing every stochastic operation.
///
/// The generator is mt19937_64 and all variates are derived from it with
/// fixed, documented algorithms (no std::*_distribution, whose output is
/// implementation-defined), so an identical seed replays an identical draw
/// sequence across runs.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1); safe for inverse-CDF maps.
    double uniform_open() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via the inverse-CDF map (Wichura's PPND16).
    double normal() { return normal_quantile(uniform_open()); }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze.
    double gamma(double shape);

    /// Chi-squared with `dof` degrees of freedom (dof > 0, not necessarily integer).
    double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

    /// Poisson count with the given intensity.
    long poisson(double lambda);

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_;
};

}  // namespace fcsforge

#endif  // FCSFORGE_RNG_HPP_
