#include "fcsforge/plan.hpp"

#include <fstream>

#include <json.hpp>

#include "fcsforge/error.hpp"

namespace fcsforge {

using Json = nlohmann::ordered_json;

int tapered_neighbor_count(int spell) {
    if (spell <= 7) return 10;
    return std::max(3, 10 - (spell - 7));
}

const std::vector<std::string>* Plan::sequence_columns(const std::string& name) const {
    for (const auto& [seq, cols] : sequences)
        if (seq == name) return &cols;
    return nullptr;
}

std::optional<std::string> Plan::region_of(double country_code) const {
    for (const auto& [region, codes] : regions)
        for (double c : codes)
            if (c == country_code) return region;
    return std::nullopt;
}

namespace {

void reject_unknown_keys(const Json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key))
            throw PlanError(where + ": unknown key '" + key + "'");
    }
}

ImputeMethod method_from_string(const std::string& s, const std::string& where) {
    if (s == "gaussian") return ImputeMethod::GaussianLinear;
    if (s == "pmm") return ImputeMethod::Pmm;
    if (s == "interval") return ImputeMethod::IntervalRegression;
    if (s == "poisson") return ImputeMethod::PoissonDraw;
    if (s == "logit") return ImputeMethod::LogitDraw;
    if (s == "ordered") return ImputeMethod::OrderedDraw;
    if (s == "multinomial") return ImputeMethod::MultinomialDraw;
    if (s == "twopart") return ImputeMethod::TwoPart;
    throw PlanError(where + ": unknown method '" + s + "'");
}

std::string method_to_string(ImputeMethod m) {
    switch (m) {
        case ImputeMethod::GaussianLinear: return "gaussian";
        case ImputeMethod::Pmm: return "pmm";
        case ImputeMethod::IntervalRegression: return "interval";
        case ImputeMethod::PoissonDraw: return "poisson";
        case ImputeMethod::LogitDraw: return "logit";
        case ImputeMethod::OrderedDraw: return "ordered";
        case ImputeMethod::MultinomialDraw: return "multinomial";
        case ImputeMethod::TwoPart: return "twopart";
    }
    return "?";
}

ImputerSpec parse_imputer(const Json& obj, const std::string& where) {
    reject_unknown_keys(obj, {"method", "q", "transform", "amount"}, where);
    ImputerSpec spec;
    if (!obj.contains("method")) throw PlanError(where + ": missing 'method'");
    spec.method = method_from_string(obj.at("method").get<std::string>(), where);
    if (obj.contains("q")) spec.q = obj.at("q").get<int>();
    if (obj.contains("transform")) {
        const std::string t = obj.at("transform").get<std::string>();
        if (t == "log") spec.transform = ResponseTransform::Log;
        else if (t == "none") spec.transform = ResponseTransform::None;
        else throw PlanError(where + ": unknown transform '" + t + "'");
    }
    if (obj.contains("amount")) {
        spec.amount =
            std::make_shared<ImputerSpec>(parse_imputer(obj.at("amount"), where + ".amount"));
    }
    spec.validate();
    return spec;
}

Json imputer_to_json(const ImputerSpec& spec) {
    Json obj;
    obj["method"] = method_to_string(spec.method);
    if (spec.method == ImputeMethod::Pmm) obj["q"] = spec.q;
    if (spec.transform == ResponseTransform::Log) obj["transform"] = "log";
    if (spec.amount) obj["amount"] = imputer_to_json(*spec.amount);
    return obj;
}

PoolingPolicy parse_pool(const Json& obj, const std::string& where) {
    reject_unknown_keys(obj, {"min_cell"}, where);
    PoolingPolicy pool;
    pool.enabled = true;
    if (obj.contains("min_cell")) pool.min_cell = obj.at("min_cell").get<int>();
    if (pool.min_cell < 1) throw PlanError(where + ": min_cell must be positive");
    return pool;
}

VariableRole parse_variable(const Json& obj, const std::string& where) {
    reject_unknown_keys(
        obj, {"name", "method", "q", "transform", "amount", "predictors", "eligibility",
              "bounds", "pool"},
        where);
    VariableRole var;
    if (!obj.contains("name")) throw PlanError(where + ": missing 'name'");
    var.name = obj.at("name").get<std::string>();
    const std::string vw = where + " '" + var.name + "'";

    Json imp;
    for (const char* key : {"method", "q", "transform", "amount"})
        if (obj.contains(key)) imp[key] = obj.at(key);
    var.imputer = parse_imputer(imp, vw);

    if (obj.contains("predictors")) {
        for (const auto& p : obj.at("predictors")) {
            var.predictor_srcs.push_back(p.get<std::string>());
            var.predictors.push_back(parse_expression(var.predictor_srcs.back()));
        }
    }
    for (const auto& src : var.predictor_srcs) {
        std::vector<std::string> cols;
        parse_expression(src)->collect_columns(cols);
        for (const auto& c : cols)
            if (c == var.name)
                throw PlanError(vw + ": predictors must exclude the variable itself");
    }
    if (obj.contains("eligibility")) var.eligibility_src = obj.at("eligibility").get<std::string>();
    var.eligibility = parse_expression(var.eligibility_src);
    if (obj.contains("bounds")) {
        const auto& b = obj.at("bounds");
        if (!b.is_array() || b.size() != 2)
            throw PlanError(vw + ": bounds must be a [lo, hi] expression pair");
        BoundsRule rule;
        rule.lo_src = b[0].get<std::string>();
        rule.hi_src = b[1].get<std::string>();
        rule.lo = parse_expression(rule.lo_src);
        rule.hi = parse_expression(rule.hi_src);
        var.bounds_rule = std::move(rule);
        const auto m = var.imputer.method;
        if (m != ImputeMethod::IntervalRegression)
            throw PlanError(vw + ": bounds require the interval method");
    }
    if (var.imputer.method == ImputeMethod::IntervalRegression && !var.bounds_rule)
        throw PlanError(vw + ": interval method requires bounds");
    if (obj.contains("pool")) var.pool = parse_pool(obj.at("pool"), vw + ".pool");
    return var;
}

Json variable_to_json(const VariableRole& var) {
    Json obj;
    obj["name"] = var.name;
    const Json imp = imputer_to_json(var.imputer);
    for (const auto& [k, v] : imp.items()) obj[k] = v;
    if (!var.predictor_srcs.empty()) obj["predictors"] = var.predictor_srcs;
    if (var.eligibility_src != "1") obj["eligibility"] = var.eligibility_src;
    if (var.bounds_rule) obj["bounds"] = {var.bounds_rule->lo_src, var.bounds_rule->hi_src};
    if (var.pool.enabled) obj["pool"] = Json{{"min_cell", var.pool.min_cell}};
    return obj;
}

}  // namespace

Plan parse_plan_text(const std::string& text, const std::string& origin) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const std::exception& e) {
        throw PlanError(origin + ": " + e.what());
    }
    reject_unknown_keys(root,
                        {"m", "burnin", "seed", "id", "country", "regions", "columns",
                         "missing_codes", "sequences", "blocks"},
                        origin);

    Plan plan;
    if (root.contains("m")) plan.m = root.at("m").get<int>();
    if (root.contains("burnin")) plan.burnin = root.at("burnin").get<int>();
    if (plan.m < 1) throw PlanError(origin + ": m must be >= 1");
    if (plan.burnin < 1) throw PlanError(origin + ": burnin must be >= 1");
    if (root.contains("seed")) plan.seed = root.at("seed").get<std::uint64_t>();
    if (root.contains("id")) plan.id_column = root.at("id").get<std::string>();
    if (root.contains("country")) plan.country_column = root.at("country").get<std::string>();
    if (root.contains("regions")) {
        for (const auto& [region, codes] : root.at("regions").items()) {
            std::vector<double> v;
            for (const auto& c : codes) v.push_back(c.get<double>());
            plan.regions.emplace_back(region, std::move(v));
        }
    }
    if (root.contains("columns")) {
        for (const auto& [name, type] : root.at("columns").items())
            plan.schema.push_back({name, column_type_from_string(type.get<std::string>())});
    }
    if (root.contains("missing_codes"))
        for (const auto& c : root.at("missing_codes"))
            plan.missing_codes.insert(c.get<std::string>());
    if (root.contains("sequences")) {
        for (const auto& [name, cols] : root.at("sequences").items()) {
            std::vector<std::string> v;
            for (const auto& c : cols) v.push_back(c.get<std::string>());
            if (v.empty()) throw PlanError(origin + ": sequence '" + name + "' is empty");
            plan.sequences.emplace_back(name, std::move(v));
        }
    }

    if (root.contains("blocks")) {
        int block_no = 0;
        for (const auto& b : root.at("blocks")) {
            ++block_no;
            const std::string where = origin + " block " + std::to_string(block_no);
            if (!b.contains("type")) throw PlanError(where + ": missing 'type'");
            const std::string type = b.at("type").get<std::string>();
            PlanBlock block;
            if (type == "fcs") {
                reject_unknown_keys(b, {"type", "name", "variables"}, where);
                block.type = PlanBlock::Type::Fcs;
                if (b.contains("name")) block.fcs.name = b.at("name").get<std::string>();
                if (!b.contains("variables") || b.at("variables").empty())
                    throw PlanError(where + ": fcs block needs variables");
                for (const auto& v : b.at("variables"))
                    block.fcs.variables.push_back(parse_variable(v, where + " variable"));
            } else if (type == "twofold") {
                reject_unknown_keys(b, {"type", "name", "chains"}, where);
                block.type = PlanBlock::Type::Twofold;
                if (b.contains("name")) block.twofold.name = b.at("name").get<std::string>();
                if (!b.contains("chains") || b.at("chains").empty())
                    throw PlanError(where + ": twofold block needs chains");
                int chain_no = 0;
                for (const auto& c : b.at("chains")) {
                    ++chain_no;
                    const std::string cw = where + " chain " + std::to_string(chain_no);
                    if (!c.contains("kind")) throw PlanError(cw + ": missing 'kind'");
                    const std::string kind = c.at("kind").get<std::string>();
                    TwofoldChain chain;
                    if (kind == "sequence") {
                        reject_unknown_keys(c,
                                            {"kind", "sequence", "method", "q", "transform",
                                             "amount", "q_schedule", "predictors", "eligibility",
                                             "pool"},
                                            cw);
                        chain.kind = TwofoldChain::Kind::Sequence;
                        SequenceChain& seq = chain.sequence;
                        if (!c.contains("sequence")) throw PlanError(cw + ": missing 'sequence'");
                        seq.sequence = c.at("sequence").get<std::string>();
                        const auto* cols = plan.sequence_columns(seq.sequence);
                        if (!cols)
                            throw PlanError(cw + ": sequence '" + seq.sequence +
                                            "' is not declared");
                        Json imp;
                        for (const char* key : {"method", "q", "transform", "amount"})
                            if (c.contains(key)) imp[key] = c.at(key);
                        seq.imputer = parse_imputer(imp, cw);
                        const int spells = static_cast<int>(cols->size());
                        if (c.contains("q_schedule")) {
                            const auto& qs = c.at("q_schedule");
                            if (qs.is_string()) {
                                if (qs.get<std::string>() != "tapered")
                                    throw PlanError(cw + ": q_schedule must be 'tapered' or a list");
                                for (int h = 1; h <= spells; ++h)
                                    seq.q_schedule.push_back(tapered_neighbor_count(h));
                            } else {
                                for (const auto& q : qs) seq.q_schedule.push_back(q.get<int>());
                                if (static_cast<int>(seq.q_schedule.size()) != spells)
                                    throw PlanError(cw + ": q_schedule needs one entry per spell");
                            }
                        } else {
                            for (int h = 1; h <= spells; ++h)
                                seq.q_schedule.push_back(tapered_neighbor_count(h));
                        }
                        for (std::size_t h = 1; h < seq.q_schedule.size(); ++h)
                            if (seq.q_schedule[h] > seq.q_schedule[h - 1])
                                throw PlanError(cw + ": q_schedule must be non-increasing");
                        if (c.contains("predictors")) {
                            for (const auto& p : c.at("predictors")) {
                                seq.predictor_srcs.push_back(p.get<std::string>());
                                seq.predictors.push_back(
                                    parse_expression(seq.predictor_srcs.back()));
                                // Own-sequence feedback travels through the lag
                                // features, never the declared predictors.
                                std::vector<std::string> refs;
                                seq.predictors.back()->collect_columns(refs);
                                for (const auto& ref : refs) {
                                    if (ref == "seq:" + seq.sequence)
                                        throw PlanError(cw + ": predictor '" +
                                                        seq.predictor_srcs.back() +
                                                        "' references its own sequence");
                                    for (const auto& col : *cols)
                                        if (ref == col)
                                            throw PlanError(cw + ": predictor '" +
                                                            seq.predictor_srcs.back() +
                                                            "' references its own spell column '" +
                                                            col + "'");
                                }
                            }
                        }
                        if (c.contains("eligibility"))
                            seq.eligibility_src = c.at("eligibility").get<std::string>();
                        seq.eligibility = parse_expression(seq.eligibility_src);
                        if (c.contains("pool")) seq.pool = parse_pool(c.at("pool"), cw + ".pool");
                    } else if (kind == "scalars") {
                        reject_unknown_keys(c, {"kind", "variables"}, cw);
                        chain.kind = TwofoldChain::Kind::Scalars;
                        if (!c.contains("variables") || c.at("variables").empty())
                            throw PlanError(cw + ": scalars chain needs variables");
                        for (const auto& v : c.at("variables"))
                            chain.scalars.push_back(parse_variable(v, cw + " variable"));
                    } else {
                        throw PlanError(cw + ": unknown kind '" + kind + "'");
                    }
                    block.twofold.chains.push_back(std::move(chain));
                }
            } else {
                throw PlanError(where + ": unknown block type '" + type + "'");
            }
            plan.blocks.push_back(std::move(block));
        }
    }
    return plan;
}

Plan parse_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plan file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_plan_text(text, path);
}

std::string plan_to_json(const Plan& plan) {
    Json root;
    root["m"] = plan.m;
    root["burnin"] = plan.burnin;
    root["seed"] = plan.seed;
    root["id"] = plan.id_column;
    if (!plan.country_column.empty()) root["country"] = plan.country_column;
    if (!plan.regions.empty()) {
        Json regions;
        for (const auto& [name, codes] : plan.regions) regions[name] = codes;
        root["regions"] = regions;
    }
    if (!plan.schema.empty()) {
        Json columns;
        for (const auto& entry : plan.schema) columns[entry.name] = to_string(entry.type);
        root["columns"] = columns;
    }
    if (!plan.missing_codes.empty()) root["missing_codes"] = plan.missing_codes;
    if (!plan.sequences.empty()) {
        Json sequences;
        for (const auto& [name, cols] : plan.sequences) sequences[name] = cols;
        root["sequences"] = sequences;
    }
    Json blocks = Json::array();
    for (const auto& block : plan.blocks) {
        Json b;
        if (block.type == PlanBlock::Type::Fcs) {
            b["type"] = "fcs";
            if (!block.fcs.name.empty()) b["name"] = block.fcs.name;
            Json vars = Json::array();
            for (const auto& v : block.fcs.variables) vars.push_back(variable_to_json(v));
            b["variables"] = vars;
        } else {
            b["type"] = "twofold";
            if (!block.twofold.name.empty()) b["name"] = block.twofold.name;
            Json chains = Json::array();
            for (const auto& chain : block.twofold.chains) {
                Json c;
                if (chain.kind == TwofoldChain::Kind::Sequence) {
                    const auto& seq = chain.sequence;
                    c["kind"] = "sequence";
                    c["sequence"] = seq.sequence;
                    const Json imp = imputer_to_json(seq.imputer);
                    for (const auto& [k, v] : imp.items()) c[k] = v;
                    c["q_schedule"] = seq.q_schedule;
                    if (!seq.predictor_srcs.empty()) c["predictors"] = seq.predictor_srcs;
                    if (seq.eligibility_src != "1") c["eligibility"] = seq.eligibility_src;
                    if (seq.pool.enabled) c["pool"] = Json{{"min_cell", seq.pool.min_cell}};
                } else {
                    c["kind"] = "scalars";
                    Json vars = Json::array();
                    for (const auto& v : chain.scalars) vars.push_back(variable_to_json(v));
                    c["variables"] = vars;
                }
                chains.push_back(std::move(c));
            }
            b["chains"] = chains;
        }
        blocks.push_back(std::move(b));
    }
    root["blocks"] = blocks;
    return root.dump(2) + "\n";
}

}  // namespace fcsforge
