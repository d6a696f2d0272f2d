#ifndef FCSFORGE_SYNTHETIC_HPP_
#define FCSFORGE_SYNTHETIC_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcsforge/dataset.hpp"

namespace fcsforge {

/// Triangular Gaussian generating model: z1..zK are standard-normal
/// covariates, each y depends linearly on covariates and earlier y's.
struct SyntheticVariable {
    std::string name;
    double intercept = 0.0;
    std::vector<std::pair<std::string, double>> coefficients;  // on z's and earlier y's
    double noise_sd = 1.0;
};

struct SyntheticSpec {
    long n = 0;
    int covariates = 1;
    std::vector<SyntheticVariable> variables;

    enum class Mechanism { Mcar, Mar };
    Mechanism mechanism = Mechanism::Mcar;
    double mcar_rate = 0.3;
    /// MAR: P(missing) = logistic(intercept + sum coef * z); depends on
    /// observed covariates only.
    double mar_intercept = 0.0;
    std::vector<std::pair<std::string, double>> mar_coefficients;

    void validate() const;
};

struct SyntheticTruth {
    std::map<std::string, double> means;  // implied E[y] per variable
    double missing_rate_target = 0.0;
};

struct SyntheticData {
    ColumnarDataset full;
    ColumnarDataset masked;
    SyntheticTruth truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

SyntheticSpec parse_synthetic_spec(const std::string& path);
SyntheticSpec parse_synthetic_spec_text(const std::string& text, const std::string& origin);

std::string truth_to_json(const SyntheticTruth& truth);

}  // namespace fcsforge

#endif  // FCSFORGE_SYNTHETIC_HPP_
