#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace raretrack {

class ExprError : public std::runtime_error {
public:
    explicit ExprError(const std::string& what) : std::runtime_error(what) {}
};

// Compiled arithmetic expression over the variables x and u.
//
// Grammar:   expr   := term (('+'|'-') term)*
//            term   := factor (('*'|'/') factor)*
//            factor := ('+'|'-') factor | power
//            power  := atom ('^' factor)?            (right-associative)
//            atom   := number | name | name '(' expr {',' expr} ')' | '(' expr ')'
// Names: variables x, u; constants pi, e; unary functions sin cos tan asin acos
// atan sinh cosh tanh exp log log10 sqrt abs floor ceil sign; binary functions
// min max pow atan2.
class Expression {
    struct Node {
        enum class Kind { constant, var_x, var_u, unary, binary } kind;
        double value = 0;
        double (*fn1)(double) = nullptr;
        double (*fn2)(double, double) = nullptr;
        std::shared_ptr<const Node> a, b;
    };
    using NodeP = std::shared_ptr<const Node>;

public:
    static Expression parse(const std::string& src) {
        Parser p{src, 0};
        Expression e;
        e.src_ = src;
        e.root_ = p.parse_expr();
        p.skip_ws();
        if (p.pos != src.size())
            throw ExprError("unexpected trailing input at position " + std::to_string(p.pos) +
                            " in expression: " + src);
        return e;
    }

    double operator()(double x, double u = 0.0) const {
        if (!root_) throw ExprError("evaluating an empty expression");
        return eval(root_.get(), x, u);
    }

    const std::string& source() const { return src_; }
    bool uses_u() const { return root_ && uses_u(root_.get()); }

private:
    NodeP root_;
    std::string src_;

    static double eval(const Node* n, double x, double u) {
        switch (n->kind) {
            case Node::Kind::constant: return n->value;
            case Node::Kind::var_x: return x;
            case Node::Kind::var_u: return u;
            case Node::Kind::unary: return n->fn1(eval(n->a.get(), x, u));
            case Node::Kind::binary: return n->fn2(eval(n->a.get(), x, u), eval(n->b.get(), x, u));
        }
        return 0;
    }
    static bool uses_u(const Node* n) {
        if (n->kind == Node::Kind::var_u) return true;
        if (n->a && uses_u(n->a.get())) return true;
        if (n->b && uses_u(n->b.get())) return true;
        return false;
    }

    static NodeP make_const(double v) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::constant;
        n->value = v;
        return n;
    }
    static NodeP make_var(bool is_x) {
        auto n = std::make_shared<Node>();
        n->kind = is_x ? Node::Kind::var_x : Node::Kind::var_u;
        return n;
    }
    static NodeP make1(double (*f)(double), NodeP a) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::unary;
        n->fn1 = f;
        n->a = std::move(a);
        return n;
    }
    static NodeP make2(double (*f)(double, double), NodeP a, NodeP b) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::binary;
        n->fn2 = f;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    static double op_add(double a, double b) { return a + b; }
    static double op_sub(double a, double b) { return a - b; }
    static double op_mul(double a, double b) { return a * b; }
    static double op_div(double a, double b) { return a / b; }
    static double op_neg(double a) { return -a; }
    static double op_sign(double a) { return (a > 0) - (a < 0); }
    static double op_min(double a, double b) { return std::min(a, b); }
    static double op_max(double a, double b) { return std::max(a, b); }

    struct Parser {
        const std::string& s;
        std::size_t pos;

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        [[noreturn]] void fail(const std::string& msg) const {
            throw ExprError(msg + " at position " + std::to_string(pos) + " in expression: " + s);
        }

        NodeP parse_expr() {
            NodeP n = parse_term();
            for (;;) {
                if (eat('+'))
                    n = make2(&op_add, n, parse_term());
                else if (eat('-'))
                    n = make2(&op_sub, n, parse_term());
                else
                    return n;
            }
        }
        NodeP parse_term() {
            NodeP n = parse_factor();
            for (;;) {
                if (eat('*'))
                    n = make2(&op_mul, n, parse_factor());
                else if (eat('/'))
                    n = make2(&op_div, n, parse_factor());
                else
                    return n;
            }
        }
        NodeP parse_factor() {
            if (eat('-')) return make1(&op_neg, parse_factor());
            if (eat('+')) return parse_factor();
            return parse_power();
        }
        NodeP parse_power() {
            NodeP base = parse_atom();
            if (eat('^')) return make2(&std::pow, base, parse_factor());
            return base;
        }
        NodeP parse_atom() {
            skip_ws();
            if (pos >= s.size()) fail("unexpected end of expression");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                NodeP n = parse_expr();
                if (!eat(')')) fail("expected ')'");
                return n;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
            fail(std::string("unexpected character '") + c + "'");
        }
        NodeP parse_number() {
            std::size_t end = pos;
            while (end < s.size() &&
                   (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.'))
                ++end;
            if (end < s.size() && (s[end] == 'e' || s[end] == 'E')) {
                std::size_t e2 = end + 1;
                if (e2 < s.size() && (s[e2] == '+' || s[e2] == '-')) ++e2;
                if (e2 < s.size() && std::isdigit(static_cast<unsigned char>(s[e2]))) {
                    ++e2;
                    while (e2 < s.size() && std::isdigit(static_cast<unsigned char>(s[e2]))) ++e2;
                    end = e2;
                }
            }
            const std::string tok = s.substr(pos, end - pos);
            try {
                std::size_t used = 0;
                const double v = std::stod(tok, &used);
                if (used != tok.size()) fail("malformed number '" + tok + "'");
                pos = end;
                return make_const(v);
            } catch (const std::logic_error&) {
                fail("malformed number '" + tok + "'");
            }
        }
        NodeP parse_name() {
            std::size_t end = pos;
            while (end < s.size() && (std::isalnum(static_cast<unsigned char>(s[end])) ||
                                      s[end] == '_'))
                ++end;
            const std::string name = s.substr(pos, end - pos);
            pos = end;
            skip_ws();
            if (pos < s.size() && s[pos] == '(') {
                ++pos;
                std::vector<NodeP> args;
                args.push_back(parse_expr());
                while (eat(',')) args.push_back(parse_expr());
                if (!eat(')')) fail("expected ')' after arguments of " + name);
                return make_call(name, std::move(args));
            }
            if (name == "x") return make_var(true);
            if (name == "u") return make_var(false);
            if (name == "pi") return make_const(3.14159265358979323846);
            if (name == "e") return make_const(2.71828182845904523536);
            fail("unknown name '" + name + "'");
        }
        NodeP make_call(const std::string& name, std::vector<NodeP> args) {
            struct Fn1 {
                const char* name;
                double (*fn)(double);
            };
            static const Fn1 unary[] = {
                {"sin", [](double v) { return std::sin(v); }},
                {"cos", [](double v) { return std::cos(v); }},
                {"tan", [](double v) { return std::tan(v); }},
                {"asin", [](double v) { return std::asin(v); }},
                {"acos", [](double v) { return std::acos(v); }},
                {"atan", [](double v) { return std::atan(v); }},
                {"sinh", [](double v) { return std::sinh(v); }},
                {"cosh", [](double v) { return std::cosh(v); }},
                {"tanh", [](double v) { return std::tanh(v); }},
                {"exp", [](double v) { return std::exp(v); }},
                {"log", [](double v) { return std::log(v); }},
                {"log10", [](double v) { return std::log10(v); }},
                {"sqrt", [](double v) { return std::sqrt(v); }},
                {"abs", [](double v) { return std::abs(v); }},
                {"floor", [](double v) { return std::floor(v); }},
                {"ceil", [](double v) { return std::ceil(v); }},
                {"sign", &op_sign},
            };
            struct Fn2 {
                const char* name;
                double (*fn)(double, double);
            };
            static const Fn2 binary[] = {
                {"min", &op_min},
                {"max", &op_max},
                {"pow", [](double a, double b) { return std::pow(a, b); }},
                {"atan2", [](double a, double b) { return std::atan2(a, b); }},
            };
            for (const auto& f : unary)
                if (name == f.name) {
                    if (args.size() != 1) fail(name + " takes one argument");
                    return make1(f.fn, args[0]);
                }
            for (const auto& f : binary)
                if (name == f.name) {
                    if (args.size() != 2) fail(name + " takes two arguments");
                    return make2(f.fn, args[0], args[1]);
                }
            fail("unknown function '" + name + "'");
        }
    };
};

} // namespace raretrack
