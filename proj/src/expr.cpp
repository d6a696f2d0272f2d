#include "fcsforge/expr.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <limits>

#include "fcsforge/csv.hpp"
#include "fcsforge/error.hpp"

namespace fcsforge {

bool eval_predicate(const Expr& e, const EvalContext& ctx, std::size_t row) {
    return e.eval(ctx, row) != 0.0;
}

namespace {

struct Literal final : Expr {
    double value;
    explicit Literal(double v) : value(v) {}
    double eval(const EvalContext&, std::size_t) const override { return value; }
    void collect_columns(std::vector<std::string>&) const override {}
};

struct ColumnRef final : Expr {
    std::string name;
    explicit ColumnRef(std::string n) : name(std::move(n)) {}
    double eval(const EvalContext& ctx, std::size_t row) const override {
        return ctx.column_value(name, row);
    }
    void collect_columns(std::vector<std::string>& out) const override { out.push_back(name); }
};

struct Unary final : Expr {
    char op;
    ExprPtr inner;
    Unary(char o, ExprPtr e) : op(o), inner(std::move(e)) {}
    double eval(const EvalContext& ctx, std::size_t row) const override {
        const double v = inner->eval(ctx, row);
        return op == '-' ? -v : (v == 0.0 ? 1.0 : 0.0);
    }
    void collect_columns(std::vector<std::string>& out) const override {
        inner->collect_columns(out);
    }
};

struct Binary final : Expr {
    std::string op;
    ExprPtr lhs, rhs;
    Binary(std::string o, ExprPtr l, ExprPtr r)
        : op(std::move(o)), lhs(std::move(l)), rhs(std::move(r)) {}
    double eval(const EvalContext& ctx, std::size_t row) const override {
        if (op == "&&") return lhs->eval(ctx, row) != 0.0 && rhs->eval(ctx, row) != 0.0;
        if (op == "||") return lhs->eval(ctx, row) != 0.0 || rhs->eval(ctx, row) != 0.0;
        const double a = lhs->eval(ctx, row);
        const double b = rhs->eval(ctx, row);
        if (op == "+") return a + b;
        if (op == "-") return a - b;
        if (op == "*") return a * b;
        if (op == "/") return a / b;
        if (op == "<") return a < b;
        if (op == "<=") return a <= b;
        if (op == ">") return a > b;
        if (op == ">=") return a >= b;
        if (op == "==") return a == b;
        if (op == "!=") return a != b;
        throw PlanError("bad operator '" + op + "'");
    }
    void collect_columns(std::vector<std::string>& out) const override {
        lhs->collect_columns(out);
        rhs->collect_columns(out);
    }
};

struct Call final : Expr {
    std::string fn;
    std::string symbol;           // amt/own/seqavg argument
    std::vector<ExprPtr> args;
    double eval(const EvalContext& ctx, std::size_t row) const override {
        if (fn == "amt")
            return ctx.column_eligible(symbol, row) ? ctx.column_value(symbol, row) : 0.0;
        if (fn == "own")
            return ctx.column_eligible(symbol, row) && ctx.column_value(symbol, row) > 0.0 ? 1.0
                                                                                           : 0.0;
        if (fn == "seqavg") return ctx.sequence_average(symbol, row);
        if (fn == "ifelse")
            return args[0]->eval(ctx, row) != 0.0 ? args[1]->eval(ctx, row)
                                                  : args[2]->eval(ctx, row);
        const double a = args[0]->eval(ctx, row);
        if (fn == "abs") return std::abs(a);
        if (fn == "log") return std::log(a);
        if (fn == "exp") return std::exp(a);
        if (fn == "sqrt") return std::sqrt(a);
        const double b = args[1]->eval(ctx, row);
        if (fn == "min") return std::min(a, b);
        if (fn == "max") return std::max(a, b);
        throw PlanError("unknown function '" + fn + "'");
    }
    void collect_columns(std::vector<std::string>& out) const override {
        if (fn == "amt" || fn == "own") out.push_back(symbol);
        if (fn == "seqavg") out.push_back("seq:" + symbol);  // engine expands to spell columns
        for (const auto& a : args) a->collect_columns(out);
    }
};

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    ExprPtr parse() {
        ExprPtr e = parse_or();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing input");
        return e;
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& why) const {
        throw PlanError("expression '" + text_ + "' at position " + std::to_string(pos_) + ": " +
                        why);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool consume(const std::string& tok) {
        skip_ws();
        if (text_.compare(pos_, tok.size(), tok) == 0) {
            // Avoid eating "<" of "<=" and identifier prefixes.
            if ((tok == "<" || tok == ">") && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=')
                return false;
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    ExprPtr parse_or() {
        ExprPtr lhs = parse_and();
        while (consume("||")) lhs = std::make_shared<Binary>("||", lhs, parse_and());
        return lhs;
    }

    ExprPtr parse_and() {
        ExprPtr lhs = parse_cmp();
        while (consume("&&")) lhs = std::make_shared<Binary>("&&", lhs, parse_cmp());
        return lhs;
    }

    ExprPtr parse_cmp() {
        ExprPtr lhs = parse_add();
        for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
            if (consume(op)) return std::make_shared<Binary>(op, lhs, parse_add());
        }
        return lhs;
    }

    ExprPtr parse_add() {
        ExprPtr lhs = parse_mul();
        for (;;) {
            if (consume("+")) lhs = std::make_shared<Binary>("+", lhs, parse_mul());
            else if (consume("-")) lhs = std::make_shared<Binary>("-", lhs, parse_mul());
            else return lhs;
        }
    }

    ExprPtr parse_mul() {
        ExprPtr lhs = parse_unary();
        for (;;) {
            if (consume("*")) lhs = std::make_shared<Binary>("*", lhs, parse_unary());
            else if (consume("/")) lhs = std::make_shared<Binary>("/", lhs, parse_unary());
            else return lhs;
        }
    }

    ExprPtr parse_unary() {
        skip_ws();
        if (consume("-")) return std::make_shared<Unary>('-', parse_unary());
        if (pos_ < text_.size() && text_[pos_] == '!' &&
            (pos_ + 1 >= text_.size() || text_[pos_ + 1] != '=')) {
            ++pos_;
            return std::make_shared<Unary>('!', parse_unary());
        }
        return parse_primary();
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = parse_or();
            skip_ws();
            if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
            ++pos_;
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        fail(std::string("unexpected character '") + c + "'");
    }

    ExprPtr parse_number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
                text_[pos_] == 'e' || text_[pos_] == 'E' ||
                ((text_[pos_] == '+' || text_[pos_] == '-') && pos_ > start &&
                 (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
            ++pos_;
        return std::make_shared<Literal>(
            parse_double(text_.substr(start, pos_ - start), "expression literal"));
    }

    ExprPtr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                       text_[pos_] == '_' || text_[pos_] == '.'))
            ++pos_;
        const std::string name = text_.substr(start, pos_ - start);
        if (name == "inf") return std::make_shared<Literal>(std::numeric_limits<double>::infinity());

        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            ++pos_;
            auto call = std::make_shared<Call>();
            call->fn = name;
            if (name == "amt" || name == "own" || name == "seqavg") {
                skip_ws();
                const std::size_t s = pos_;
                while (pos_ < text_.size() &&
                       (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                        text_[pos_] == '_' || text_[pos_] == '.'))
                    ++pos_;
                call->symbol = text_.substr(s, pos_ - s);
                if (call->symbol.empty()) fail(name + "() needs a column name");
            } else {
                for (;;) {
                    call->args.push_back(parse_or());
                    skip_ws();
                    if (pos_ < text_.size() && text_[pos_] == ',') {
                        ++pos_;
                        continue;
                    }
                    break;
                }
                const std::size_t want = name == "ifelse" ? 3
                                         : (name == "min" || name == "max") ? 2
                                                                            : 1;
                if (call->args.size() != want)
                    fail(name + "() expects " + std::to_string(want) + " argument(s)");
            }
            skip_ws();
            if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
            ++pos_;
            return call;
        }
        return std::make_shared<ColumnRef>(name);
    }
};

}  // namespace

ExprPtr parse_expression(const std::string& text) {
    if (text.empty()) throw PlanError("empty expression");
    return Parser(text).parse();
}

}  // namespace fcsforge
