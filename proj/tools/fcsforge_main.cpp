// fcs-forge: harmonize monetary records to PPP-adjusted EUR-2017 and fill
// missing values by fully-conditional-specification multiple imputation.
//
// Subcommands: convert | impute | diagnose | simulate. Every stochastic
// subcommand honors --seed; outputs are byte-reproducible given the seed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "fcsforge/csv.hpp"
#include "fcsforge/currency.hpp"
#include "fcsforge/dataset.hpp"
#include "fcsforge/diagnostics.hpp"
#include "fcsforge/engine.hpp"
#include "fcsforge/error.hpp"
#include "fcsforge/plan.hpp"
#include "fcsforge/store.hpp"
#include "fcsforge/synthetic.hpp"

namespace {

using namespace fcsforge;

int exit_code_for(const std::string& category) {
    static const std::map<std::string, int> codes = {
        {"parse", 2}, {"plan", 3}, {"data", 4}, {"fit", 5}, {"bounds", 6}, {"io", 7},
    };
    const auto it = codes.find(category);
    return it == codes.end() ? 1 : it->second;
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    return out;
}

LabelKind label_kind_from_string(const std::string& s, const std::string& context) {
    if (s == "iso") return LabelKind::IsoOrLegacy;
    if (s == "generic") return LabelKind::Generic;
    if (s == "historical") return LabelKind::ExplicitHistorical;
    throw ParseError(context + ": unknown label kind '" + s + "' (want iso|generic|historical)");
}

std::string format_rate(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", percent);
    return buf;
}

int run_convert(const std::string& records_path, const std::string& tables_dir,
                const std::string& out_path, double trim_lower, double trim_upper) {
    const ConversionTables tables = load_conversion_tables(tables_dir);
    const CsvTable in = read_csv(records_path);
    const int id = in.require_column("id");
    const int amount = in.require_column("amount");
    const int label = in.require_column("label");
    const int kind = in.require_column("kind");
    const int country = in.require_column("country");
    const int year = in.require_column("year");
    const int item = in.require_column("item");

    std::vector<std::string> ids;
    std::vector<MonetaryRecord> records;
    for (std::size_t r = 0; r < in.rows.size(); ++r) {
        const auto& row = in.rows[r];
        const std::string ctx = records_path + " row " + std::to_string(r + 2);
        MonetaryRecord rec;
        rec.amount = parse_double(row[amount], ctx);
        rec.label = {label_kind_from_string(row[kind], ctx), row[label]};
        rec.country = row[country];
        rec.year = static_cast<Year>(parse_long(row[year], ctx));
        rec.item = item_kind_from_string(row[item]);
        ids.push_back(row[id]);
        records.push_back(rec);
    }

    std::vector<ConversionOutcome> outcomes;
    outcomes.reserve(records.size());
    for (const auto& rec : records) outcomes.push_back(convert_record(rec, tables));

    // Trim PPP-adjusted amounts per monetary item, pooled across countries.
    std::vector<bool> kept(records.size(), false);
    std::map<std::string, std::vector<std::size_t>> by_item;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (outcomes[i].ppp) by_item[to_string(records[i].item)].push_back(i);
    for (const auto& [group, rows] : by_item) {
        (void)group;
        std::vector<double> values;
        values.reserve(rows.size());
        for (std::size_t i : rows) values.push_back(*outcomes[i].ppp);
        const TrimResult trim = trim_bounds(values, trim_lower, trim_upper);
        for (std::size_t j = 0; j < rows.size(); ++j) kept[rows[j]] = trim.kept[j];
    }

    CsvTable out;
    out.header = {"id", "status", "eur2017", "ppp", "bridge_year", "kept", "path"};
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& o = outcomes[i];
        std::string path;
        for (const auto& step : o.path) {
            if (!path.empty()) path += ";";
            path += step;
        }
        out.rows.push_back({ids[i], to_string(o.status),
                            o.eur2017 ? format_double(*o.eur2017) : "",
                            o.ppp ? format_double(*o.ppp) : "",
                            o.bridge_year ? std::to_string(*o.bridge_year) : "",
                            kept[i] ? "1" : "0", path});
    }
    write_csv(out_path, out);

    CsvTable coverage;
    coverage.header = {"group", "total", "converted", "rate"};
    for (const auto& row : coverage_report(records, outcomes))
        coverage.rows.push_back({row.group, std::to_string(row.total),
                                 std::to_string(row.converted), format_rate(row.rate)});
    write_csv(std::cout, coverage);
    return 0;
}

int run_impute(const std::string& data_path, const std::string& plan_path,
               const std::string& out_path, std::optional<int> m, std::optional<int> burnin,
               std::optional<std::uint64_t> seed) {
    Plan plan = parse_plan(plan_path);
    if (m) plan.m = *m;
    if (burnin) plan.burnin = *burnin;
    if (seed) plan.seed = *seed;
    if (plan.m < 1 || plan.burnin < 1) throw PlanError("m and burnin must be positive");
    if (plan.schema.empty()) throw PlanError(plan_path + ": plan declares no columns");

    const ColumnarDataset data =
        load_dataset(data_path, plan.id_column, plan.schema, plan.missing_codes);
    const ImputedStore store = run_multiple_imputation(data, plan);
    write_store(store, out_path);
    std::cout << "wrote " << out_path << " with " << store.m << " completed copies of "
              << data.n_rows() << " rows\n";
    return 0;
}

int run_diagnose(const std::string& store_path, const std::string& vars_arg,
                 const std::string& out_dir) {
    const ImputedStore store = load_store(store_path);
    std::vector<std::string> vars;
    std::stringstream ss(vars_arg);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) vars.push_back(tok);
    if (vars.empty()) throw PlanError("--vars needs a comma-separated variable list");

    std::filesystem::create_directories(out_dir);
    CsvTable residuals;
    residuals.header = {"variable", "mixture_residual", "n_observed", "n_imputed"};

    for (const auto& var : vars) {
        const DistributionReport report = compare_distributions(store, var);

        CsvTable curves;
        curves.header = {"grid", "observed"};
        for (int m = 1; m <= store.m; ++m) curves.header.push_back("imputed_" + std::to_string(m));
        for (int m = 1; m <= store.m; ++m)
            curves.header.push_back("completed_" + std::to_string(m));
        for (int g = 0; g < report.observed.grid.size(); ++g) {
            std::vector<std::string> row;
            row.push_back(format_double(report.observed.grid[g]));
            row.push_back(format_double(report.observed.density[g]));
            for (int m = 0; m < store.m; ++m) {
                const auto& curve = report.imputed[std::size_t(m)];
                row.push_back(curve.grid.size() ? format_double(curve.density[g]) : "");
            }
            for (int m = 0; m < store.m; ++m)
                row.push_back(format_double(report.completed[std::size_t(m)].density[g]));
            curves.rows.push_back(std::move(row));
        }
        write_csv(out_dir + "/" + var + "_curves.csv", curves);

        CsvTable summary;
        summary.header = {"sample", "mean", "p25", "p50", "p75", "n"};
        const auto push = [&](const std::string& name, const QuartileSummary& s, long n) {
            summary.rows.push_back({name, format_double(s.mean), format_double(s.p25),
                                    format_double(s.p50), format_double(s.p75),
                                    std::to_string(n)});
        };
        push("observed", report.observed_summary, report.n_observed);
        for (int m = 0; m < store.m; ++m)
            push("completed_" + std::to_string(m + 1), report.completed_summaries[std::size_t(m)],
                 report.n_observed + report.n_imputed);
        write_csv(out_dir + "/" + var + "_summary.csv", summary);

        residuals.rows.push_back({var, format_double(report.mixture_residual),
                                  std::to_string(report.n_observed),
                                  std::to_string(report.n_imputed)});
    }
    write_csv(out_dir + "/mixture_residuals.csv", residuals);
    std::cout << "wrote diagnostics for " << vars.size() << " variable(s) to " << out_dir << "\n";
    return 0;
}

int run_simulate(const std::string& spec_path, std::uint64_t seed, const std::string& out_full,
                 const std::string& out_masked, const std::string& out_truth) {
    const SyntheticSpec spec = parse_synthetic_spec(spec_path);
    const SyntheticData data = generate_synthetic(spec, seed);
    write_dataset(out_full, data.full);
    write_dataset(out_masked, data.masked);
    std::ofstream truth(out_truth, std::ios::binary);
    if (!truth) throw IoError("cannot open '" + out_truth + "' for writing");
    truth << truth_to_json(data.truth);
    std::cout << "wrote " << data.full.n_rows() << " rows to " << out_full << " and "
              << out_masked << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fcs-forge: monetary harmonization and chained-equations imputation"};
    app.require_subcommand(1);

    auto* convert = app.add_subcommand("convert", "convert records to PPP-adjusted EUR-2017");
    std::string records_path, tables_dir, convert_out;
    double trim_lower = 0.025, trim_upper = 0.975;
    convert->add_option("--records", records_path, "input records CSV")->required();
    convert->add_option("--tables", tables_dir, "directory with conversion tables")->required();
    convert->add_option("--out", convert_out, "output CSV")->required();
    convert->add_option("--trim-lower", trim_lower, "lower trim quantile");
    convert->add_option("--trim-upper", trim_upper, "upper trim quantile");

    auto* impute = app.add_subcommand("impute", "run multiple imputation per a plan file");
    std::string data_path, plan_path, impute_out;
    int m_opt = -1, burnin_opt = -1;
    std::int64_t seed_opt = -1;
    impute->add_option("--data", data_path, "input dataset CSV")->required();
    impute->add_option("--plan", plan_path, "imputation plan (JSON)")->required();
    impute->add_option("--out", impute_out, "output store CSV")->required();
    impute->add_option("--m", m_opt, "replicates (overrides plan)");
    impute->add_option("--burnin", burnin_opt, "burn-in sweeps (overrides plan)");
    impute->add_option("--seed", seed_opt, "base seed (overrides plan)");

    auto* diagnose = app.add_subcommand("diagnose", "KDE and quartile comparisons per variable");
    std::string store_path, vars_arg, diag_out;
    diagnose->add_option("--store", store_path, "imputed store CSV")->required();
    diagnose->add_option("--vars", vars_arg, "comma-separated variables")->required();
    diagnose->add_option("--out", diag_out, "output directory")->required();

    auto* simulate = app.add_subcommand("simulate", "draw a synthetic dataset with missingness");
    std::string spec_path, out_full, out_masked, out_truth;
    std::uint64_t sim_seed = 0;
    simulate->add_option("--spec", spec_path, "synthetic spec (JSON)")->required();
    simulate->add_option("--seed", sim_seed, "generator seed");
    simulate->add_option("--out-full", out_full, "complete dataset CSV")->required();
    simulate->add_option("--out-masked", out_masked, "masked dataset CSV")->required();
    simulate->add_option("--out-truth", out_truth, "true parameters JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (convert->parsed())
            return run_convert(records_path, tables_dir, convert_out, trim_lower, trim_upper);
        if (impute->parsed())
            return run_impute(data_path, plan_path, impute_out,
                              m_opt >= 0 ? std::optional<int>(m_opt) : std::nullopt,
                              burnin_opt >= 0 ? std::optional<int>(burnin_opt) : std::nullopt,
                              seed_opt >= 0 ? std::optional<std::uint64_t>(
                                                  static_cast<std::uint64_t>(seed_opt))
                                            : std::nullopt);
        if (diagnose->parsed()) return run_diagnose(store_path, vars_arg, diag_out);
        if (simulate->parsed())
            return run_simulate(spec_path, sim_seed, out_full, out_masked, out_truth);
    } catch (const fcsforge::Error& e) {
        std::cerr << "{\"error\":\"" << e.category() << "\",\"message\":\""
                  << json_escape(e.what()) << "\"}\n";
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"internal\",\"message\":\"" << json_escape(e.what())
                  << "\"}\n";
        return 1;
    }
    return 1;
}
