#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fcsforge/currency.hpp"
#include "fcsforge/error.hpp"
#include "fcsforge/rng.hpp"

using namespace fcsforge;

namespace {

const ConversionTables& tables() {
    static ConversionTables t = load_conversion_tables(std::string(FIXTURE_DIR) + "/tables");
    return t;
}

const ConversionTables& redenom_tables() {
    static ConversionTables t =
        load_conversion_tables(std::string(FIXTURE_DIR) + "/tables_redenom");
    return t;
}

MonetaryRecord rec(double amount, LabelKind kind, const std::string& label,
                   const std::string& country, Year year, ItemKind item = ItemKind::Y2) {
    return MonetaryRecord{amount, {kind, label}, country, year, item};
}

}  // namespace

TEST_CASE("generic shilling in Austria resolves to ATS") {
    const auto res = resolve_currency(rec(100, LabelKind::Generic, "shilling", "AT", 1970), tables());
    REQUIRE(res.canonical.has_value());
    CHECK(res.canonical->code == "ATS");
    CHECK(res.canonical->valid_from == 1925);
    CHECK(res.canonical->valid_to == 1998);
}

TEST_CASE("specific codes pass through inside their validity interval") {
    const auto ok = resolve_currency(rec(100, LabelKind::IsoOrLegacy, "EUR", "DE", 2010), tables());
    REQUIRE(ok.canonical.has_value());
    CHECK(ok.canonical->code == "EUR");

    const auto bad = resolve_currency(rec(100, LabelKind::IsoOrLegacy, "EUR", "DE", 1980), tables());
    CHECK(!bad.canonical.has_value());
    CHECK(bad.failure == ConversionStatus::Inconsistent);

    const auto unknown =
        resolve_currency(rec(100, LabelKind::IsoOrLegacy, "XXX", "DE", 1980), tables());
    CHECK(unknown.failure == ConversionStatus::UnresolvedLabel);

    const auto no_label =
        resolve_currency(rec(100, LabelKind::Generic, "peso", "DE", 1980), tables());
    CHECK(no_label.failure == ConversionStatus::UnresolvedLabel);
}

TEST_CASE("redenomination rescales face value when only the successor has rates") {
    // 50,000 old zloty in a table set whose FX backbone only covers PLN
    const auto [amount, code] =
        apply_redenomination(50000.0, "PLZ", 1993, redenom_tables().redenominations,
                             redenom_tables());
    CHECK(amount == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(code == "PLN");

    // no rule: identity
    const auto [same, same_code] =
        apply_redenomination(100.0, "CHF", 1990, tables().redenominations, tables());
    CHECK(same == 100.0);
    CHECK(same_code == "CHF");

    // old zloty with its own FX series is converted directly, no rescale
    const auto [direct, direct_code] =
        apply_redenomination(50000.0, "PLZ", 1993, tables().redenominations, tables());
    CHECK(direct == 50000.0);
    CHECK(direct_code == "PLZ");

    // chained rules walk to the covered code, multiplying factors
    const auto [chained, chained_code] =
        apply_redenomination(3000.0, "AAA", 1985, redenom_tables().redenominations,
                             redenom_tables());
    CHECK(chained == doctest::Approx(3000.0 / (10.0 * 100.0)).epsilon(1e-15));
    CHECK(chained_code == "CCC");
}

TEST_CASE("USD at the base year collapses every ratio except the euro leg") {
    const auto out = convert_record(rec(100, LabelKind::IsoOrLegacy, "USD", "US", 2017), tables());
    REQUIRE(out.status == ConversionStatus::Converted);
    CHECK(*out.eur2017 == doctest::Approx(100.0 * 0.9).epsilon(1e-12));
    CHECK(*out.ppp == doctest::Approx(100.0 * 0.9 * 1.05).epsilon(1e-12));
    CHECK(!out.bridge_year.has_value());
}

TEST_CASE("direct conversion matches the hand-arithmetic oracle") {
    // 200 DEM in 1980: eta = 2, US CPI 1980 -> 2017 ratio = 245.1 / 81.7 = 3
    const auto out = convert_record(rec(200, LabelKind::IsoOrLegacy, "DEM", "DE", 1980), tables());
    REQUIRE(out.status == ConversionStatus::Converted);
    const double oracle = 200.0 / 2.0 * (245.1 / 81.7) * 0.9;
    CHECK(*out.eur2017 == doctest::Approx(270.0).epsilon(1e-9));
    CHECK(*out.eur2017 == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(*out.ppp == doctest::Approx(oracle * 1.0).epsilon(1e-12));  // DE is the base
}

TEST_CASE("wartime gap bridges through the local CPI to the first covered year") {
    // DEM series starts in 1947; a 1943 amount re-values 1943 -> 1947 in German
    // CPI first (13.5 -> 20), then converts as usual.
    const auto out = convert_record(rec(500, LabelKind::IsoOrLegacy, "DEM", "DE", 1943), tables());
    REQUIRE(out.status == ConversionStatus::Converted);
    REQUIRE(out.bridge_year.has_value());
    CHECK(*out.bridge_year == 1947);
    const double oracle = 500.0 * (20.0 / 13.5) / 4.0 * (245.1 / 22.3) * 0.9;
    CHECK(*out.eur2017 == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("equidistant bridge years break toward the earlier year") {
    // CHF has rates in 1950 and 1990 only; 1970 is 20 years from both.
    const auto out = convert_record(rec(80, LabelKind::IsoOrLegacy, "CHF", "CH", 1970), tables());
    REQUIRE(out.status == ConversionStatus::Converted);
    REQUIRE(out.bridge_year.has_value());
    CHECK(*out.bridge_year == 1950);
    const double oracle = 80.0 * (40.0 / 55.0) / 4.3 * (245.1 / 24.1) * 0.9;
    CHECK(*out.eur2017 == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("gaps on each side bridge to the nearest covered year") {
    const auto below = convert_record(rec(60, LabelKind::IsoOrLegacy, "CHF", "CH", 1940), tables());
    REQUIRE(below.status == ConversionStatus::Converted);
    CHECK(*below.bridge_year == 1950);
    const double oracle_below = 60.0 * (40.0 / 30.0) / 4.3 * (245.1 / 24.1) * 0.9;
    CHECK(*below.eur2017 == doctest::Approx(oracle_below).epsilon(1e-12));

    const auto above = convert_record(rec(60, LabelKind::IsoOrLegacy, "CHF", "CH", 1995), tables());
    REQUIRE(above.status == ConversionStatus::Converted);
    CHECK(*above.bridge_year == 1990);
    const double oracle_above = 60.0 * (104.0 / 110.0) / 1.4 * (245.1 / 130.7) * 0.9;
    CHECK(*above.eur2017 == doctest::Approx(oracle_above).epsilon(1e-12));
}

TEST_CASE("missing local CPI during a bridge reports NoCpiCoverage") {
    // ATS has a 1970 rate only and no local CPI series: 1960 needs a bridge.
    const auto out = convert_record(rec(40, LabelKind::IsoOrLegacy, "ATS", "AT", 1960), tables());
    CHECK(out.status == ConversionStatus::NoCpiCoverage);
    CHECK(!out.eur2017.has_value());
}

TEST_CASE("status is Converted exactly when an amount is produced") {
    const std::vector<MonetaryRecord> cases = {
        rec(100, LabelKind::IsoOrLegacy, "USD", "US", 2017),
        rec(100, LabelKind::IsoOrLegacy, "EUR", "DE", 1980),
        rec(100, LabelKind::Generic, "peso", "MX", 1980),
        rec(100, LabelKind::IsoOrLegacy, "ATS", "AT", 1960),
    };
    for (const auto& r : cases) {
        const auto out = convert_record(r, tables());
        CHECK((out.status == ConversionStatus::Converted) == out.eur2017.has_value());
        if (out.ppp.has_value()) CHECK(out.eur2017.has_value());
    }
}

TEST_CASE("conversion is scale-equivariant on every path") {
    RngStream rng(17);
    const std::vector<MonetaryRecord> paths = {
        rec(1, LabelKind::IsoOrLegacy, "USD", "US", 2017),
        rec(1, LabelKind::IsoOrLegacy, "DEM", "DE", 1980),
        rec(1, LabelKind::IsoOrLegacy, "DEM", "DE", 1943),
        rec(1, LabelKind::IsoOrLegacy, "CHF", "CH", 1970),
        rec(1, LabelKind::Generic, "zloty", "PL", 1993),
    };
    for (const auto& base : paths) {
        const auto unit = convert_record(base, tables());
        REQUIRE(unit.status == ConversionStatus::Converted);
        for (int i = 0; i < 5; ++i) {
            const double k = std::exp(3.0 * rng.normal());
            MonetaryRecord scaled = base;
            scaled.amount = k;
            const auto out = convert_record(scaled, tables());
            REQUIRE(out.status == ConversionStatus::Converted);
            CHECK(*out.eur2017 == doctest::Approx(k * *unit.eur2017).epsilon(1e-12));
        }
    }
}

TEST_CASE("bridging at a covered year is the identity (bridge == direct)") {
    const auto direct = convert_record(rec(50000, LabelKind::IsoOrLegacy, "PLZ", "PL", 1993),
                                       tables());
    REQUIRE(direct.status == ConversionStatus::Converted);
    CHECK(!direct.bridge_year.has_value());
    // t0 = t makes CPI_{i,t0}/CPI_{i,t} = 1, so the bridge formula collapses to
    // the direct one.
    const double oracle = 50000.0 * (580.0 / 580.0) / 18000.0 * (245.1 / 144.5) * 0.9;
    CHECK(*direct.eur2017 == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("redenomination continuity: no face-value jump across the 1995 zloty reform") {
    // A constant real wage on both sides of the reform, in the table frame
    // without a PLZ series: both records land on the same EUR-2017 value.
    const double cpi_94 = 760.0, cpi_95 = 965.0;
    const double a_1994 = 8.0e6;                                 // old zloty
    const double a_1995 = a_1994 / 10000.0 * (cpi_95 / cpi_94);  // same real value, new zloty
    const auto out94 =
        convert_record(rec(a_1994, LabelKind::IsoOrLegacy, "PLZ", "PL", 1994), redenom_tables());
    const auto out95 =
        convert_record(rec(a_1995, LabelKind::IsoOrLegacy, "PLN", "PL", 1995), redenom_tables());
    REQUIRE(out94.status == ConversionStatus::Converted);
    REQUIRE(out95.status == ConversionStatus::Converted);
    CHECK(*out94.eur2017 == doctest::Approx(*out95.eur2017).epsilon(1e-12));
}

TEST_CASE("ppp adjustment multiplies by the country factor") {
    CHECK(ppp_adjust(500.0, "DE", tables().ppp) == 500.0);
    CHECK(ppp_adjust(500.0, "PL", tables().ppp) == doctest::Approx(900.0).epsilon(1e-12));
    CHECK_THROWS_AS(ppp_adjust(500.0, "ZZ", tables().ppp), DataError);
}

TEST_CASE("nearest-rank trim of 1..100 keeps [3, 98]") {
    std::vector<double> values;
    for (int i = 1; i <= 100; ++i) values.push_back(i);
    const TrimResult res = trim_bounds(values);
    CHECK(res.lo == 3.0);
    CHECK(res.hi == 98.0);
    long kept = 0;
    for (bool k : res.kept) kept += k ? 1 : 0;
    CHECK(kept == 96);
    CHECK(res.kept[0] == false);
    CHECK(res.kept[1] == false);
    CHECK(res.kept[2] == true);
    CHECK(res.kept[97] == true);
    CHECK(res.kept[98] == false);
}

TEST_CASE("degenerate trims keep everything") {
    const TrimResult all_equal = trim_bounds({7.0, 7.0, 7.0, 7.0});
    CHECK(all_equal.lo == 7.0);
    CHECK(all_equal.hi == 7.0);
    for (bool k : all_equal.kept) CHECK(k);

    const TrimResult single = trim_bounds({5.0});
    CHECK(single.kept[0]);
}

TEST_CASE("trimming only shrinks the donor pool (RR3 <= RR2)") {
    RngStream rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 10 + int(rng.uniform_index(200));
        std::vector<double> values(n);
        for (auto& v : values) v = std::exp(rng.normal() * 2.0);
        const TrimResult res = trim_bounds(values);
        long kept = 0;
        for (bool k : res.kept) kept += k ? 1 : 0;
        CHECK(kept <= n);                  // RR3 <= RR2 over the same eligible base
        CHECK(kept >= long(0.9 * n) - 2);  // a 2.5/97.5 trim drops about 5%
    }
}

TEST_CASE("coverage report reproduces the marginal rates") {
    std::vector<MonetaryRecord> records;
    std::vector<ConversionOutcome> outcomes;
    auto add = [&](ItemKind item, const std::string& country, bool ok) {
        records.push_back(rec(1.0, LabelKind::IsoOrLegacy, "USD", country, 2017, item));
        ConversionOutcome out;
        out.status = ok ? ConversionStatus::Converted : ConversionStatus::UnresolvedLabel;
        if (ok) out.eur2017 = 1.0;
        outcomes.push_back(out);
    };
    // synthetic 3-record group with one failure -> 66.67
    add(ItemKind::Y3, "CZ", true);
    add(ItemKind::Y3, "CZ", true);
    add(ItemKind::Y3, "CZ", false);
    // replay fixture for the Y1 coverage row: 11,146 total, 10,739 converted
    for (int i = 0; i < 11146; ++i) add(ItemKind::Y1, "AT", i < 10739);

    const auto report = coverage_report(records, outcomes);
    bool saw_y1 = false, saw_y3 = false;
    for (const auto& row : report) {
        if (row.group == "Y1") {
            saw_y1 = true;
            CHECK(row.total == 11146);
            CHECK(row.converted == 10739);
            CHECK(row.rate == doctest::Approx(96.35).epsilon(1e-12));
        }
        if (row.group == "Y3") {
            saw_y3 = true;
            CHECK(row.total == 3);
            CHECK(row.rate == doctest::Approx(66.67).epsilon(1e-12));
        }
        CHECK(row.group != "Y5");  // empty groups omitted
    }
    CHECK(saw_y1);
    CHECK(saw_y3);
}

TEST_CASE("ambiguous crosswalk rows are rejected at load") {
    ConversionTables bad = tables();
    bad.crosswalk.push_back({"zloty", "PL", 1993, 1996, "PLN"});  // overlaps both zloty rows
    CHECK_THROWS_AS(bad.validate(), DataError);
}
