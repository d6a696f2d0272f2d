#include "fcsforge/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "fcsforge/error.hpp"
#include "fcsforge/rng.hpp"

namespace fcsforge {

using Json = nlohmann::ordered_json;

void SyntheticSpec::validate() const {
    if (n < 1) throw PlanError("synthetic spec: n must be positive");
    if (covariates < 0) throw PlanError("synthetic spec: covariates must be non-negative");
    if (variables.empty()) throw PlanError("synthetic spec: needs at least one variable");
    if (mechanism == Mechanism::Mcar && !(mcar_rate > 0.0 && mcar_rate < 1.0))
        throw PlanError("synthetic spec: mcar rate must lie in (0,1)");
    std::vector<std::string> known;
    for (int z = 1; z <= covariates; ++z) known.push_back("z" + std::to_string(z));
    for (const auto& var : variables) {
        if (!(var.noise_sd >= 0.0)) throw PlanError("synthetic spec: noise_sd must be >= 0");
        for (const auto& [name, coef] : var.coefficients) {
            (void)coef;
            bool ok = false;
            for (const auto& k : known) ok = ok || k == name;
            if (!ok)
                throw PlanError("synthetic spec: variable '" + var.name +
                                "' references '" + name +
                                "' which is neither a covariate nor an earlier variable");
        }
        known.push_back(var.name);
    }
    for (const auto& [name, coef] : mar_coefficients) {
        (void)coef;
        if (name.rfind('z', 0) != 0)
            throw PlanError("synthetic spec: MAR coefficients must reference covariates, got '" +
                            name + "'");
    }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    RngStream rng(seed);
    const std::size_t n = static_cast<std::size_t>(spec.n);

    SyntheticData out;
    int width = 1;
    for (long v = spec.n; v >= 10; v /= 10) ++width;
    out.full.ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::string id = std::to_string(i + 1);
        out.full.ids.push_back("r" + std::string(width - id.size(), '0') + id);
    }

    std::map<std::string, std::vector<double>> values;
    for (int z = 1; z <= spec.covariates; ++z) {
        auto& v = values["z" + std::to_string(z)];
        v.resize(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal();
    }
    for (const auto& var : spec.variables) {
        auto& v = values[var.name];
        v.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double mu = var.intercept;
            for (const auto& [name, coef] : var.coefficients) mu += coef * values.at(name)[i];
            v[i] = mu + var.noise_sd * rng.normal();
        }
    }

    auto push_column = [&](ColumnarDataset& ds, const std::string& name) {
        Column col;
        col.name = name;
        col.type = ColumnType::Real;
        col.values = values.at(name);
        col.state.assign(n, CellState::Observed);
        ds.columns.push_back(std::move(col));
    };
    for (int z = 1; z <= spec.covariates; ++z) push_column(out.full, "z" + std::to_string(z));
    for (const auto& var : spec.variables) push_column(out.full, var.name);

    // Masked copy:each y cell is hidden by the mechanism; covariates stay observed.
    out.masked = out.full;
    out.masked.ids = out.full.ids;
    for (const auto& var : spec.variables) {
        Column& col = out.masked.column(var.name);
        for (std::size_t i = 0; i < n; ++i) {
            double p = spec.mcar_rate;
            if (spec.mechanism == SyntheticSpec::Mechanism::Mar) {
                double eta = spec.mar_intercept;
                for (const auto& [name, coef] : spec.mar_coefficients)
                    eta += coef * values.at(name)[i];
                p = 1.0 / (1.0 + std::exp(-eta));
            }
            if (rng.uniform() < p) {
                col.state[i] = CellState::Missing;
                col.values[i] = std::numeric_limits<double>::quiet_NaN();
            }
        }
    }

    // Implied means of the triangular system (covariates are centered).
    std::map<std::string, double> means;
    for (int z = 1; z <= spec.covariates; ++z) means["z" + std::to_string(z)] = 0.0;
    for (const auto& var : spec.variables) {
        double mu = var.intercept;
        for (const auto& [name, coef] : var.coefficients) mu += coef * means.at(name);
        means[var.name] = mu;
        out.truth.means[var.name] = mu;
    }
    out.truth.missing_rate_target =
        spec.mechanism == SyntheticSpec::Mechanism::Mcar
            ? spec.mcar_rate
            : 1.0 / (1.0 + std::exp(-spec.mar_intercept));
    return out;
}

SyntheticSpec parse_synthetic_spec_text(const std::string& text, const std::string& origin) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const std::exception& e) {
        throw PlanError(origin + ": " + e.what());
    }
    SyntheticSpec spec;
    for (const auto& [key, value] : root.items()) {
        if (key == "n") spec.n = value.get<long>();
        else if (key == "covariates") spec.covariates = value.get<int>();
        else if (key == "variables") {
            for (const auto& v : value) {
                SyntheticVariable var;
                var.name = v.at("name").get<std::string>();
                if (v.contains("intercept")) var.intercept = v.at("intercept").get<double>();
                if (v.contains("noise_sd")) var.noise_sd = v.at("noise_sd").get<double>();
                if (v.contains("coefficients"))
                    for (const auto& [cname, coef] : v.at("coefficients").items())
                        var.coefficients.emplace_back(cname, coef.get<double>());
                for (const auto& [k, unused] : v.items()) {
                    (void)unused;
                    if (k != "name" && k != "intercept" && k != "noise_sd" && k != "coefficients")
                        throw PlanError(origin + ": unknown variable key '" + k + "'");
                }
                spec.variables.push_back(std::move(var));
            }
        } else if (key == "mechanism") {
            const auto& m = value;
            const std::string type = m.at("type").get<std::string>();
            if (type == "mcar") {
                spec.mechanism = SyntheticSpec::Mechanism::Mcar;
                spec.mcar_rate = m.at("rate").get<double>();
            } else if (type == "mar") {
                spec.mechanism = SyntheticSpec::Mechanism::Mar;
                spec.mar_intercept = m.at("intercept").get<double>();
                if (m.contains("coefficients"))
                    for (const auto& [cname, coef] : m.at("coefficients").items())
                        spec.mar_coefficients.emplace_back(cname, coef.get<double>());
            } else {
                throw PlanError(origin + ": unknown mechanism '" + type + "'");
            }
        } else {
            throw PlanError(origin + ": unknown key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

SyntheticSpec parse_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open synthetic spec '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_synthetic_spec_text(text, path);
}

std::string truth_to_json(const SyntheticTruth& truth) {
    Json root;
    Json means;
    for (const auto& [name, mu] : truth.means) means[name] = mu;
    root["means"] = means;
    root["missing_rate_target"] = truth.missing_rate_target;
    return root.dump(2) + "\n";
}

}  // namespace fcsforge
