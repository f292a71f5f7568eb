#include "gfc/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace gfc::expr {

namespace {

NodePtr make(Op op, std::vector<NodePtr> args) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->args = std::move(args);
    return n;
}

bool is_const(const NodePtr& n) { return n->op == Op::Const; }

double apply_unary(Op fn, double x) {
    switch (fn) {
    case Op::Neg: return -x;
    case Op::Sin: return std::sin(x);
    case Op::Cos: return std::cos(x);
    case Op::Exp: return std::exp(x);
    case Op::Log: return std::log(x);
    case Op::Tanh: return std::tanh(x);
    case Op::Sqrt: return std::sqrt(x);
    default: throw Error("not a unary function");
    }
}

const char* unary_name(Op fn) {
    switch (fn) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sqrt: return "sqrt";
    default: return "?";
    }
}

}  // namespace

NodePtr constant(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = v;
    return n;
}

NodePtr variable(const std::string& name) {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->name = name;
    return n;
}

bool is_constant(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value + b->value);
    if (is_constant(a, 0.0)) return b;
    if (is_constant(b, 0.0)) return a;
    // a + (b - a) and (b - a) + a collapse to b when the a's are shared nodes.
    if (b->op == Op::Sub && b->args[1] == a) return b->args[0];
    if (a->op == Op::Sub && a->args[1] == b) return a->args[0];
    return make(Op::Add, {std::move(a), std::move(b)});
}

NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value - b->value);
    if (is_constant(b, 0.0)) return a;
    if (is_constant(a, 0.0)) return neg(std::move(b));
    return make(Op::Sub, {std::move(a), std::move(b)});
}

NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value * b->value);
    if (is_constant(a, 0.0) || is_constant(b, 0.0)) return constant(0.0);
    if (is_constant(a, 1.0)) return b;
    if (is_constant(b, 1.0)) return a;
    if (is_constant(a, -1.0)) return neg(std::move(b));
    if (is_constant(b, -1.0)) return neg(std::move(a));
    return make(Op::Mul, {std::move(a), std::move(b)});
}

NodePtr div(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value / b->value);
    if (is_constant(a, 0.0)) return constant(0.0);
    if (is_constant(b, 1.0)) return a;
    return make(Op::Div, {std::move(a), std::move(b)});
}

NodePtr pow(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(std::pow(a->value, b->value));
    if (is_constant(b, 1.0)) return a;
    if (is_constant(b, 0.0)) return constant(1.0);
    return make(Op::Pow, {std::move(a), std::move(b)});
}

NodePtr neg(NodePtr a) {
    if (is_const(a)) return constant(-a->value);
    if (a->op == Op::Neg) return a->args[0];
    return make(Op::Neg, {std::move(a)});
}

NodePtr unary(Op fn, NodePtr a) {
    if (fn == Op::Neg) return neg(std::move(a));
    if (is_const(a)) return constant(apply_unary(fn, a->value));
    return make(fn, {std::move(a)});
}

NodePtr cutoff(NodePtr x, double inner, double outer, int order) {
    if (!(inner > 0.0 && inner < outer)) throw Error("cutoff requires 0 < inner < outer");
    if (is_const(x)) return constant(cutoff_value(x->value, inner, outer, order));
    auto n = std::make_shared<Node>();
    n->op = Op::Cutoff;
    n->args = {std::move(x)};
    n->inner = inner;
    n->outer = outer;
    n->order = order;
    return n;
}

NodePtr call(std::shared_ptr<const Kernel> kernel, std::vector<int> partial, std::vector<NodePtr> args) {
    if (!kernel) throw Error("call of null kernel");
    if (args.size() != kernel->arity() || partial.size() != kernel->arity())
        throw Error("kernel '" + kernel->name() + "' arity mismatch");
    auto n = std::make_shared<Node>();
    n->op = Op::Call;
    n->kernel = std::move(kernel);
    n->partial = std::move(partial);
    n->args = std::move(args);
    return n;
}

bool equal(const NodePtr& a, const NodePtr& b) {
    if (a == b) return true;
    if (a->op != b->op || a->args.size() != b->args.size()) return false;
    switch (a->op) {
    case Op::Const:
        if (a->value != b->value) return false;
        break;
    case Op::Var:
        if (a->name != b->name) return false;
        break;
    case Op::Cutoff:
        if (a->inner != b->inner || a->outer != b->outer || a->order != b->order) return false;
        break;
    case Op::Call:
        if (a->kernel != b->kernel || a->partial != b->partial) return false;
        break;
    default:
        break;
    }
    for (std::size_t i = 0; i < a->args.size(); ++i)
        if (!equal(a->args[i], b->args[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (v < 0 || s[0] == '-') return "(" + s + ")";
    if (s.find_first_of("eE") != std::string::npos) return "(" + s + ")";
    return s;
}

std::string format_plain(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Precedence: 1 additive, 2 multiplicative, 3 unary minus, 4 power, 5 atom.
int precedence(const NodePtr& n) {
    switch (n->op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    default: return 5;
    }
}

void print(const NodePtr& n, std::ostream& os);

void print_wrapped(const NodePtr& n, bool wrap, std::ostream& os) {
    if (wrap) os << '(';
    print(n, os);
    if (wrap) os << ')';
}

void print(const NodePtr& n, std::ostream& os) {
    switch (n->op) {
    case Op::Const: os << format_number(n->value); return;
    case Op::Var: os << n->name; return;
    case Op::Add:
    case Op::Sub:
        print_wrapped(n->args[0], precedence(n->args[0]) < 1, os);
        os << (n->op == Op::Add ? " + " : " - ");
        print_wrapped(n->args[1], precedence(n->args[1]) <= 1, os);
        return;
    case Op::Mul:
    case Op::Div:
        print_wrapped(n->args[0], precedence(n->args[0]) < 2, os);
        os << (n->op == Op::Mul ? "*" : "/");
        print_wrapped(n->args[1], precedence(n->args[1]) <= 2, os);
        return;
    case Op::Neg:
        os << '-';
        print_wrapped(n->args[0], precedence(n->args[0]) < 4, os);
        return;
    case Op::Pow:
        print_wrapped(n->args[0], precedence(n->args[0]) <= 4, os);
        os << '^';
        print_wrapped(n->args[1], precedence(n->args[1]) < 4 && n->args[1]->op != Op::Neg, os);
        return;
    case Op::Cutoff:
        if (n->order == 0) {
            os << "cutoff(";
            print(n->args[0], os);
            os << ", " << format_plain(n->inner) << ", " << format_plain(n->outer) << ')';
        } else {
            os << "cutoffd(";
            print(n->args[0], os);
            os << ", " << format_plain(n->inner) << ", " << format_plain(n->outer) << ", " << n->order << ')';
        }
        return;
    case Op::Call: {
        os << n->kernel->name();
        bool any = std::any_of(n->partial.begin(), n->partial.end(), [](int k) { return k != 0; });
        if (any) {
            os << '[';
            for (std::size_t i = 0; i < n->partial.size(); ++i) os << (i ? "," : "") << n->partial[i];
            os << ']';
        }
        os << '(';
        for (std::size_t i = 0; i < n->args.size(); ++i) {
            if (i) os << ", ";
            print(n->args[i], os);
        }
        os << ')';
        return;
    }
    default:
        os << unary_name(n->op) << '(';
        print(n->args[0], os);
        os << ')';
        return;
    }
}

}  // namespace

std::string to_string(const NodePtr& n) {
    std::ostringstream os;
    print(n, os);
    return os.str();
}

void collect_variables(const NodePtr& n, std::set<std::string>& out) {
    std::set<const Node*> seen;
    std::function<void(const NodePtr&)> walk = [&](const NodePtr& m) {
        if (!seen.insert(m.get()).second) return;
        if (m->op == Op::Var) out.insert(m->name);
        for (const auto& a : m->args) walk(a);
    };
    walk(n);
}

std::size_t node_count(const NodePtr& n) {
    std::set<const Node*> seen;
    std::function<void(const NodePtr&)> walk = [&](const NodePtr& m) {
        if (!seen.insert(m.get()).second) return;
        for (const auto& a : m->args) walk(a);
    };
    walk(n);
    return seen.size();
}

// ---------------------------------------------------------------------------
// Differentiation and substitution (memoized over shared subtrees)

NodePtr derivative(const NodePtr& root, const std::string& var) {
    std::unordered_map<const Node*, NodePtr> memo;
    std::function<NodePtr(const NodePtr&)> d = [&](const NodePtr& n) -> NodePtr {
        if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
        NodePtr r;
        switch (n->op) {
        case Op::Const: r = constant(0.0); break;
        case Op::Var: r = constant(n->name == var ? 1.0 : 0.0); break;
        case Op::Add: r = add(d(n->args[0]), d(n->args[1])); break;
        case Op::Sub: r = sub(d(n->args[0]), d(n->args[1])); break;
        case Op::Neg: r = neg(d(n->args[0])); break;
        case Op::Mul: {
            const auto& a = n->args[0];
            const auto& b = n->args[1];
            r = add(mul(d(a), b), mul(a, d(b)));
            break;
        }
        case Op::Div: {
            const auto& a = n->args[0];
            const auto& b = n->args[1];
            auto da = d(a);
            auto db = d(b);
            if (is_constant(db, 0.0)) r = div(da, b);
            else r = div(sub(mul(da, b), mul(a, db)), pow(b, constant(2.0)));
            break;
        }
        case Op::Pow: {
            const auto& a = n->args[0];
            const auto& b = n->args[1];
            auto da = d(a);
            auto db = d(b);
            if (is_const(b)) {
                r = mul(mul(constant(b->value), pow(a, constant(b->value - 1.0))), da);
            } else {
                // a^b (b' log a + b a'/a)
                r = mul(n, add(mul(db, unary(Op::Log, a)), div(mul(b, da), a)));
            }
            break;
        }
        case Op::Sin: r = mul(unary(Op::Cos, n->args[0]), d(n->args[0])); break;
        case Op::Cos: r = neg(mul(unary(Op::Sin, n->args[0]), d(n->args[0]))); break;
        case Op::Exp: r = mul(n, d(n->args[0])); break;
        case Op::Log: r = div(d(n->args[0]), n->args[0]); break;
        case Op::Tanh:
            r = mul(sub(constant(1.0), pow(n, constant(2.0))), d(n->args[0]));
            break;
        case Op::Sqrt: r = div(d(n->args[0]), mul(constant(2.0), n)); break;
        case Op::Cutoff:
            r = mul(cutoff(n->args[0], n->inner, n->outer, n->order + 1), d(n->args[0]));
            break;
        case Op::Call: {
            r = constant(0.0);
            for (std::size_t i = 0; i < n->args.size(); ++i) {
                auto da = d(n->args[i]);
                if (is_constant(da, 0.0)) continue;
                auto partial = n->partial;
                ++partial[i];
                r = add(r, mul(call(n->kernel, partial, n->args), da));
            }
            break;
        }
        }
        memo.emplace(n.get(), r);
        return r;
    };
    return d(root);
}

NodePtr substitute(const NodePtr& root, const std::map<std::string, NodePtr>& bindings) {
    std::unordered_map<const Node*, NodePtr> memo;
    std::function<NodePtr(const NodePtr&)> s = [&](const NodePtr& n) -> NodePtr {
        if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
        NodePtr r;
        switch (n->op) {
        case Op::Const: r = n; break;
        case Op::Var: {
            auto it = bindings.find(n->name);
            r = it == bindings.end() ? n : it->second;
            break;
        }
        case Op::Add: r = add(s(n->args[0]), s(n->args[1])); break;
        case Op::Sub: r = sub(s(n->args[0]), s(n->args[1])); break;
        case Op::Mul: r = mul(s(n->args[0]), s(n->args[1])); break;
        case Op::Div: r = div(s(n->args[0]), s(n->args[1])); break;
        case Op::Pow: r = pow(s(n->args[0]), s(n->args[1])); break;
        case Op::Cutoff: r = cutoff(s(n->args[0]), n->inner, n->outer, n->order); break;
        case Op::Call: {
            std::vector<NodePtr> args;
            for (const auto& a : n->args) args.push_back(s(a));
            r = call(n->kernel, n->partial, std::move(args));
            break;
        }
        default: r = unary(n->op, s(n->args[0])); break;
        }
        memo.emplace(n.get(), r);
        return r;
    };
    return s(root);
}

// ---------------------------------------------------------------------------
// Cutoff profile via truncated Taylor series

namespace {

constexpr int kJetOrder = 16;
using Jet = std::array<double, kJetOrder + 1>;

Jet jet_reciprocal_linear(double t0, double slope) {
    // 1/(t0 + slope*e)
    Jet r{};
    double inv = 1.0 / t0;
    double c = inv;
    for (int k = 0; k <= kJetOrder; ++k) {
        r[k] = c;
        c *= -slope * inv;
    }
    return r;
}

Jet jet_exp(const Jet& a) {
    Jet e{};
    e[0] = std::exp(a[0]);
    for (int k = 1; k <= kJetOrder; ++k) {
        double s = 0.0;
        for (int j = 1; j <= k; ++j) s += j * a[j] * e[k - j];
        e[k] = s / k;
    }
    return e;
}

Jet jet_div(const Jet& n, const Jet& d) {
    Jet s{};
    for (int k = 0; k <= kJetOrder; ++k) {
        double v = n[k];
        for (int j = 1; j <= k; ++j) v -= d[j] * s[k - j];
        s[k] = v / d[0];
    }
    return s;
}

// Taylor coefficients of s(t) = 1/(1 + exp(1/t - 1/(1-t))) at t0 in (0,1).
Jet smooth_step_jet(double t0) {
    // Within 1/600 of an end every coefficient is below e^-600 times a polynomial
    // in 1/t; computing them overflows the reciprocal jets into inf * 0.
    Jet flat{};
    if (t0 < 1.0 / 600) return flat;
    if (1.0 - t0 < 1.0 / 600) {
        flat[0] = 1.0;
        return flat;
    }
    Jet a = jet_reciprocal_linear(t0, 1.0);
    Jet b = jet_reciprocal_linear(1.0 - t0, -1.0);
    Jet w{};
    for (int k = 0; k <= kJetOrder; ++k) w[k] = a[k] - b[k];
    Jet one{};
    one[0] = 1.0;
    if (w[0] > 0.0) {
        Jet mw{};
        for (int k = 0; k <= kJetOrder; ++k) mw[k] = -w[k];
        Jet e = jet_exp(mw);
        Jet den = e;
        den[0] += 1.0;
        return jet_div(e, den);
    }
    Jet e = jet_exp(w);
    Jet den = e;
    den[0] += 1.0;
    return jet_div(one, den);
}

}  // namespace

double cutoff_value(double x, double inner, double outer, int order) {
    double ax = std::fabs(x);
    if (ax <= inner) return order == 0 ? 1.0 : 0.0;
    if (ax >= outer) return 0.0;
    if (order > kJetOrder) throw Error("cutoff derivative order too high");
    double width = outer - inner;
    double t = (outer - ax) / width;
    Jet s = smooth_step_jet(t);
    double factorial = 1.0;
    for (int k = 2; k <= order; ++k) factorial *= k;
    double dtdx = (x > 0 ? -1.0 : 1.0) / width;
    return s[order] * factorial * std::pow(dtdx, order);
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
public:
    Parser(const std::string& text, const std::vector<std::string>& vars, const KernelRegistry* reg)
        : s_(text), vars_(vars.begin(), vars.end()), reg_(reg) {}

    NodePtr run() {
        auto n = expression();
        skip();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError("syntax error: " + msg, pos_); }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expression() {
        auto n = term();
        for (;;) {
            if (accept('+')) n = add(n, term());
            else if (accept('-')) n = sub(n, term());
            else return n;
        }
    }

    NodePtr term() {
        auto n = signed_factor();
        for (;;) {
            if (accept('*')) n = mul(n, signed_factor());
            else if (accept('/')) n = div(n, signed_factor());
            else return n;
        }
    }

    NodePtr signed_factor() {
        if (accept('-')) return neg(signed_factor());
        if (accept('+')) return signed_factor();
        return power();
    }

    NodePtr power() {
        auto base = atom();
        if (accept('^')) return pow(base, signed_factor_for_exponent());
        return base;
    }

    NodePtr signed_factor_for_exponent() {
        if (accept('-')) return neg(signed_factor_for_exponent());
        if (accept('+')) return signed_factor_for_exponent();
        return power();
    }

    double constant_argument(const NodePtr& n, std::size_t at) const {
        if (n->op != Op::Const) throw ParseError("syntax error: cutoff bounds must be numeric", at);
        return n->value;
    }

    NodePtr atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto n = expression();
            expect(')');
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    NodePtr number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string tok = s_.substr(start, pos_ - start);
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) {
            pos_ = start;
            fail("malformed number '" + tok + "'");
        }
        return constant(v);
    }

    std::vector<NodePtr> arguments() {
        std::vector<NodePtr> args;
        expect('(');
        if (accept(')')) return args;
        do {
            args.push_back(expression());
        } while (accept(','));
        expect(')');
        return args;
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        std::string id = s_.substr(start, pos_ - start);
        skip();
        bool is_call = pos_ < s_.size() && (s_[pos_] == '(' || s_[pos_] == '[');
        if (!is_call) {
            if (vars_.count(id)) return variable(id);
            throw ParseError("unknown identifier '" + id + "'", start);
        }
        static const std::map<std::string, Op> unaries = {
            {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"log", Op::Log},
            {"tanh", Op::Tanh}, {"sqrt", Op::Sqrt}};
        if (auto it = unaries.find(id); it != unaries.end() && s_[pos_] == '(') {
            auto args = arguments();
            if (args.size() != 1) throw ParseError(id + " takes one argument", start);
            return unary(it->second, args[0]);
        }
        if ((id == "cutoff" || id == "cutoffd") && s_[pos_] == '(') {
            auto args = arguments();
            std::size_t want = id == "cutoff" ? 3 : 4;
            if (args.size() != want) throw ParseError(id + " takes " + std::to_string(want) + " arguments", start);
            double inner = constant_argument(args[1], start);
            double outer = constant_argument(args[2], start);
            int order = want == 4 ? static_cast<int>(constant_argument(args[3], start)) : 0;
            if (!(inner > 0 && inner < outer)) throw ParseError("cutoff requires 0 < inner < outer", start);
            return cutoff(args[0], inner, outer, order);
        }
        if (reg_) {
            if (auto it = reg_->find(id); it != reg_->end()) {
                std::vector<int> partial(it->second->arity(), 0);
                if (accept('[')) {
                    for (std::size_t i = 0; i < partial.size(); ++i) {
                        if (i) expect(',');
                        auto n = number();
                        partial[i] = static_cast<int>(n->value);
                    }
                    expect(']');
                }
                auto args = arguments();
                if (args.size() != partial.size())
                    throw ParseError("kernel '" + id + "' arity mismatch", start);
                return call(it->second, partial, args);
            }
        }
        throw ParseError("unknown identifier '" + id + "'", start);
    }

    const std::string& s_;
    std::set<std::string> vars_;
    const KernelRegistry* reg_;
    std::size_t pos_ = 0;
};

}  // namespace

NodePtr parse(const std::string& text, const std::vector<std::string>& variables, const KernelRegistry* registry) {
    return Parser(text, variables, registry).run();
}

// ---------------------------------------------------------------------------
// Compiled evaluation

Program::Program(const std::vector<NodePtr>& outputs, const std::vector<std::string>& variables)
    : num_vars_(variables.size()) {
    std::map<std::string, int> var_index;
    for (std::size_t i = 0; i < variables.size(); ++i) var_index[variables[i]] = static_cast<int>(i);
    std::unordered_map<const Node*, int> slot_of;
    std::map<std::string, int> by_key;

    std::function<int(const NodePtr&)> emit = [&](const NodePtr& n) -> int {
        if (auto it = slot_of.find(n.get()); it != slot_of.end()) return it->second;
        Instr ins;
        ins.op = n->op;
        std::vector<int> child;
        for (const auto& a : n->args) child.push_back(emit(a));
        std::ostringstream key;
        key << static_cast<int>(n->op) << '|';
        switch (n->op) {
        case Op::Const: {
            ins.value = n->value;
            std::uint64_t bits;
            std::memcpy(&bits, &n->value, sizeof bits);
            key << bits;
            break;
        }
        case Op::Var: {
            auto it = var_index.find(n->name);
            if (it == var_index.end()) throw Error("unbound variable '" + n->name + "'");
            ins.a = it->second;
            key << ins.a;
            break;
        }
        case Op::Cutoff:
            ins.inner = n->inner;
            ins.outer = n->outer;
            ins.order = n->order;
            ins.a = child[0];
            key << n->inner << ',' << n->outer << ',' << n->order << ',' << child[0];
            break;
        case Op::Call:
            ins.kernel = n->kernel.get();
            kernels_.push_back(n->kernel);
            ins.partial = n->partial;
            ins.args = child;
            key << n->kernel.get();
            for (int p : n->partial) key << ',' << p;
            key << ':';
            for (int c : child) key << ',' << c;
            break;
        default:
            if (!child.empty()) ins.a = child[0];
            if (child.size() > 1) ins.b = child[1];
            key << ins.a << ',' << ins.b;
            break;
        }
        std::string k = key.str();
        if (auto it = by_key.find(k); it != by_key.end()) {
            slot_of.emplace(n.get(), it->second);
            return it->second;
        }
        int slot = static_cast<int>(tape_.size());
        tape_.push_back(std::move(ins));
        by_key.emplace(std::move(k), slot);
        slot_of.emplace(n.get(), slot);
        return slot;
    };
    for (const auto& o : outputs) outputs_.push_back(emit(o));
}

void Program::evaluate(std::span<const double> x, std::span<double> out, std::vector<double>& r) const {
    if (x.size() < num_vars_) throw Error("program evaluated with too few variables");
    r.resize(tape_.size());
    std::vector<double> argbuf;
    for (std::size_t i = 0; i < tape_.size(); ++i) {
        const Instr& in = tape_[i];
        double v = 0.0;
        switch (in.op) {
        case Op::Const: v = in.value; break;
        case Op::Var: v = x[in.a]; break;
        case Op::Add: v = r[in.a] + r[in.b]; break;
        case Op::Sub: v = r[in.a] - r[in.b]; break;
        case Op::Mul: v = r[in.a] * r[in.b]; break;
        case Op::Div: v = r[in.a] / r[in.b]; break;
        case Op::Pow: {
            double e = r[in.b];
            if (e == 2.0) v = r[in.a] * r[in.a];
            else v = std::pow(r[in.a], e);
            break;
        }
        case Op::Neg: v = -r[in.a]; break;
        case Op::Sin: v = std::sin(r[in.a]); break;
        case Op::Cos: v = std::cos(r[in.a]); break;
        case Op::Exp: v = std::exp(r[in.a]); break;
        case Op::Log: v = std::log(r[in.a]); break;
        case Op::Tanh: v = std::tanh(r[in.a]); break;
        case Op::Sqrt: v = std::sqrt(r[in.a]); break;
        case Op::Cutoff: v = cutoff_value(r[in.a], in.inner, in.outer, in.order); break;
        case Op::Call:
            argbuf.resize(in.args.size());
            for (std::size_t k = 0; k < in.args.size(); ++k) argbuf[k] = r[in.args[k]];
            v = in.kernel->eval(in.partial, argbuf);
            break;
        }
        r[i] = v;
    }
    for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = r[outputs_[k]];
}

}  // namespace gfc::expr

// ---------------------------------------------------------------------------
// Grid interpolant

namespace gfc {

namespace {

// Cubic Hermite basis (h00, h10, h01, h11) and derivatives in t, order k.
void hermite_basis(double t, int k, double out[4]) {
    // Coefficients in powers of t: c0 + c1 t + c2 t^2 + c3 t^3
    static const double coef[4][4] = {
        {1, 0, -3, 2},   // h00
        {0, 1, -2, 1},   // h10
        {0, 0, 3, -2},   // h01
        {0, 0, -1, 1},   // h11
    };
    for (int b = 0; b < 4; ++b) {
        double c[4] = {coef[b][0], coef[b][1], coef[b][2], coef[b][3]};
        for (int d = 0; d < k; ++d) {
            for (int i = 0; i < 3; ++i) c[i] = c[i + 1] * (i + 1);
            c[3] = 0.0;
        }
        out[b] = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
    }
}

// Locates the cell; returns false when outside.
bool locate(const GridInterpolant::Axis& ax, double x, int& cell, double& t) {
    double h = ax.spacing();
    double tol = 1e-12 * std::max(1.0, std::fabs(ax.hi - ax.lo));
    if (x < ax.lo - tol || x > ax.hi + tol) return false;
    double u = (x - ax.lo) / h;
    cell = std::clamp(static_cast<int>(std::floor(u)), 0, ax.count - 2);
    t = u - cell;
    return true;
}

// Natural cubic spline slopes through equally spaced samples.
std::vector<double> spline_slopes(const std::vector<double>& y, double h) {
    int n = static_cast<int>(y.size());
    if (n < 2) return std::vector<double>(n, 0.0);
    if (n == 2) return {(y[1] - y[0]) / h, (y[1] - y[0]) / h};
    // Solve for second derivatives M (natural: M0 = Mn-1 = 0).
    std::vector<double> a(n, 0.0), b(n, 1.0), c(n, 0.0), d(n, 0.0), m(n, 0.0);
    for (int i = 1; i < n - 1; ++i) {
        a[i] = h / 6;
        b[i] = 2 * h / 3;
        c[i] = h / 6;
        d[i] = (y[i + 1] - 2 * y[i] + y[i - 1]) / h;
    }
    for (int i = 1; i < n; ++i) {
        double w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    m[n - 1] = d[n - 1] / b[n - 1];
    for (int i = n - 2; i >= 0; --i) m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
    std::vector<double> s(n);
    for (int i = 0; i < n - 1; ++i) s[i] = (y[i + 1] - y[i]) / h - h * (2 * m[i] + m[i + 1]) / 6;
    s[n - 1] = (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2 * m[n - 1]) / 6;
    return s;
}

}  // namespace

GridInterpolant::GridInterpolant(std::string name, std::vector<Axis> axes, std::vector<double> values,
                                 std::vector<double> dx, std::vector<double> dy, std::vector<double> dxy,
                                 Outside outside)
    : name_(std::move(name)), axes_(std::move(axes)), values_(std::move(values)), dx_(std::move(dx)),
      dy_(std::move(dy)), dxy_(std::move(dxy)), outside_(outside) {
    if (axes_.empty() || axes_.size() > 2) throw Error("grid interpolant supports 1 or 2 axes");
    std::size_t total = 1;
    for (const auto& a : axes_) {
        if (a.count < 2 || !(a.hi > a.lo)) throw Error("grid axis needs at least 2 increasing nodes");
        total *= static_cast<std::size_t>(a.count);
    }
    if (values_.size() != total || dx_.size() != total) throw Error("grid data size mismatch");
    if (axes_.size() == 2 && (dy_.size() != total || dxy_.size() != total)) throw Error("grid data size mismatch");
}

std::shared_ptr<GridInterpolant> GridInterpolant::from_values(std::string name, std::vector<Axis> axes,
                                                              std::vector<double> values, Outside outside) {
    if (axes.size() == 1) {
        auto dx = spline_slopes(values, axes[0].spacing());
        return std::make_shared<GridInterpolant>(std::move(name), std::move(axes), std::move(values),
                                                 std::move(dx), std::vector<double>{}, std::vector<double>{},
                                                 outside);
    }
    if (axes.size() != 2) throw Error("grid interpolant supports 1 or 2 axes");
    int nx = axes[0].count, ny = axes[1].count;
    if (values.size() != static_cast<std::size_t>(nx * ny)) throw Error("grid data size mismatch");
    std::vector<double> dx(values.size()), dy(values.size()), dxy(values.size());
    for (int j = 0; j < ny; ++j) {
        std::vector<double> col(nx);
        for (int i = 0; i < nx; ++i) col[i] = values[i * ny + j];
        auto s = spline_slopes(col, axes[0].spacing());
        for (int i = 0; i < nx; ++i) dx[i * ny + j] = s[i];
    }
    for (int i = 0; i < nx; ++i) {
        std::vector<double> row(values.begin() + i * ny, values.begin() + (i + 1) * ny);
        auto s = spline_slopes(row, axes[1].spacing());
        std::vector<double> rowdx(dx.begin() + i * ny, dx.begin() + (i + 1) * ny);
        auto sx = spline_slopes(rowdx, axes[1].spacing());
        for (int j = 0; j < ny; ++j) {
            dy[i * ny + j] = s[j];
            dxy[i * ny + j] = sx[j];
        }
    }
    return std::make_shared<GridInterpolant>(std::move(name), std::move(axes), std::move(values), std::move(dx),
                                             std::move(dy), std::move(dxy), outside);
}

double GridInterpolant::eval(std::span<const int> partial, std::span<const double> x) const {
    if (x.size() != axes_.size()) throw Error("grid '" + name_ + "' arity mismatch");
    int cell[2] = {0, 0};
    double t[2] = {0, 0};
    for (std::size_t k = 0; k < axes_.size(); ++k) {
        if (!locate(axes_[k], x[k], cell[k], t[k])) {
            if (outside_ == Outside::Zero) return 0.0;
            throw Error("point outside domain of grid '" + name_ + "'");
        }
    }
    if (axes_.size() == 1) {
        double h = axes_[0].spacing();
        double b[4];
        hermite_basis(t[0], partial[0], b);
        int i = cell[0];
        double v = b[0] * values_[i] + b[1] * h * dx_[i] + b[2] * values_[i + 1] + b[3] * h * dx_[i + 1];
        return v / std::pow(h, partial[0]);
    }
    double hx = axes_[0].spacing(), hy = axes_[1].spacing();
    int ny = axes_[1].count;
    double bx[4], by[4];
    hermite_basis(t[0], partial[0], bx);
    hermite_basis(t[1], partial[1], by);
    double v = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int c = 0; c < 2; ++c) {
            int idx = (cell[0] + a) * ny + (cell[1] + c);
            double vx = bx[a == 0 ? 0 : 2], sx = bx[a == 0 ? 1 : 3];
            double vy = by[c == 0 ? 0 : 2], sy = by[c == 0 ? 1 : 3];
            v += vx * vy * values_[idx] + sx * vy * hx * dx_[idx] + vx * sy * hy * dy_[idx] +
                 sx * sy * hx * hy * dxy_[idx];
        }
    }
    return v / (std::pow(hx, partial[0]) * std::pow(hy, partial[1]));
}

// ---------------------------------------------------------------------------
// SmoothFunction

using expr::NodePtr;

std::vector<std::string> merge_variables(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    for (const auto& v : b)
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    return out;
}

SmoothFunction::SmoothFunction() : tree_(expr::constant(0.0)) {}

SmoothFunction SmoothFunction::from_tree(NodePtr tree, std::vector<std::string> variables) {
    std::set<std::string> seen;
    for (const auto& v : variables)
        if (!seen.insert(v).second) throw Error("duplicate variable '" + v + "'");
    std::set<std::string> free;
    expr::collect_variables(tree, free);
    for (const auto& v : free)
        if (!seen.count(v)) throw Error("function depends on undeclared variable '" + v + "'");
    SmoothFunction f;
    f.tree_ = std::move(tree);
    f.vars_ = std::move(variables);
    return f;
}

SmoothFunction SmoothFunction::constant(double value, std::vector<std::string> variables) {
    return from_tree(expr::constant(value), std::move(variables));
}

SmoothFunction SmoothFunction::variable(const std::string& name) {
    return from_tree(expr::variable(name), {name});
}

SmoothFunction SmoothFunction::quadratic_form(std::vector<std::string> variables, const Eigen::MatrixXd& m) {
    const auto n = static_cast<Eigen::Index>(variables.size());
    if (m.rows() != n || m.cols() != n) throw Error("quadratic form size mismatch");
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    NodePtr t = expr::constant(0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            double c = i == j ? sym(i, j) : 2.0 * sym(i, j);
            if (c == 0.0) continue;
            NodePtr xi = expr::variable(variables[i]);
            NodePtr term = i == j ? expr::pow(xi, expr::constant(2.0)) : expr::mul(xi, expr::variable(variables[j]));
            t = expr::add(t, expr::mul(expr::constant(c), term));
        }
    }
    SmoothFunction f = from_tree(t, std::move(variables));
    f.kind_ = FunctionKind::QuadraticForm;
    f.form_ = sym;
    return f;
}

SmoothFunction SmoothFunction::grid(std::shared_ptr<const GridInterpolant> kernel, std::vector<std::string> variables) {
    if (variables.size() != kernel->arity()) throw Error("grid interpolant variable count mismatch");
    std::vector<NodePtr> args;
    for (const auto& v : variables) args.push_back(expr::variable(v));
    auto node = expr::call(kernel, std::vector<int>(variables.size(), 0), args);
    SmoothFunction f = from_tree(node, std::move(variables));
    f.kind_ = FunctionKind::GridInterpolant;
    f.grid_ = std::move(kernel);
    return f;
}

bool SmoothFunction::depends_on(const std::string& var) const { return free_variables().count(var) > 0; }

std::set<std::string> SmoothFunction::free_variables() const {
    std::set<std::string> s;
    expr::collect_variables(tree_, s);
    return s;
}

double SmoothFunction::evaluate(const std::map<std::string, double>& point) const {
    std::vector<double> x;
    x.reserve(vars_.size());
    auto free = free_variables();
    for (const auto& v : vars_) {
        auto it = point.find(v);
        if (it == point.end()) {
            if (free.count(v)) throw Error("unbound variable '" + v + "'");
            x.push_back(0.0);
        } else {
            x.push_back(it->second);
        }
    }
    return evaluate(x);
}

double SmoothFunction::evaluate(std::span<const double> point) const {
    if (point.size() != vars_.size()) throw Error("point dimension does not match variables");
    expr::Program prog({tree_}, vars_);
    std::vector<double> scratch;
    double out = 0.0;
    prog.evaluate(point, std::span<double>(&out, 1), scratch);
    return out;
}

SmoothFunction SmoothFunction::differentiate(const std::string& var) const {
    if (std::find(vars_.begin(), vars_.end(), var) == vars_.end())
        throw Error("differentiation variable '" + var + "' not declared");
    return from_tree(expr::derivative(tree_, var), vars_);
}

SmoothFunction SmoothFunction::substitute(const std::map<std::string, SmoothFunction>& bindings,
                                          std::vector<std::string> result_variables) const {
    std::set<std::string> unbound;
    for (const auto& v : free_variables())
        if (!bindings.count(v)) unbound.insert(v);
    std::map<std::string, NodePtr> b;
    for (const auto& [name, fn] : bindings) {
        for (const auto& v : fn.free_variables()) {
            if (unbound.count(v))
                throw Error("variable capture: binding for '" + name + "' introduces '" + v +
                            "', which is already a free variable of the function");
        }
        b.emplace(name, fn.tree());
    }
    return from_tree(expr::substitute(tree_, b), std::move(result_variables));
}

SmoothFunction SmoothFunction::substitute(const std::map<std::string, SmoothFunction>& bindings) const {
    std::vector<std::string> out;
    for (const auto& v : vars_)
        if (!bindings.count(v)) out.push_back(v);
    for (const auto& [name, fn] : bindings) out = merge_variables(out, fn.variables());
    return substitute(bindings, out);
}

SmoothFunction SmoothFunction::with_variables(std::vector<std::string> variables) const {
    SmoothFunction f = from_tree(tree_, std::move(variables));
    if (kind_ == FunctionKind::GridInterpolant && f.vars_ == vars_) {
        f.kind_ = kind_;
        f.grid_ = grid_;
    }
    return f;
}

std::string SmoothFunction::to_string() const { return expr::to_string(tree_); }

SmoothFunction operator+(const SmoothFunction& a, const SmoothFunction& b) {
    return SmoothFunction::from_tree(expr::add(a.tree_, b.tree_), merge_variables(a.vars_, b.vars_));
}

SmoothFunction operator-(const SmoothFunction& a, const SmoothFunction& b) {
    return SmoothFunction::from_tree(expr::sub(a.tree_, b.tree_), merge_variables(a.vars_, b.vars_));
}

SmoothFunction operator*(const SmoothFunction& a, const SmoothFunction& b) {
    return SmoothFunction::from_tree(expr::mul(a.tree_, b.tree_), merge_variables(a.vars_, b.vars_));
}

SmoothFunction operator-(const SmoothFunction& a) { return SmoothFunction::from_tree(expr::neg(a.tree_), a.vars_); }

SmoothFunction parse_function(const std::string& text, const std::vector<std::string>& variables,
                              const expr::KernelRegistry* registry) {
    return SmoothFunction::from_tree(expr::parse(text, variables, registry), variables);
}

double evaluate(const SmoothFunction& f, const std::map<std::string, double>& point) { return f.evaluate(point); }

SmoothFunction differentiate(const SmoothFunction& f, const std::string& var) { return f.differentiate(var); }

SmoothFunction substitute(const SmoothFunction& f, const std::map<std::string, SmoothFunction>& bindings) {
    return f.substitute(bindings);
}

SmoothFunction make_cutoff(double inner, double outer, const std::string& var) {
    if (!(inner > 0.0 && inner < outer)) throw Error("make_cutoff requires 0 < inner < outer");
    return SmoothFunction::from_tree(expr::cutoff(expr::variable(var), inner, outer), {var});
}

SmoothFunction make_step(double lo, double hi, const std::string& var) {
    if (!(lo < hi)) throw Error("make_step requires lo < hi");
    // The rising flank of a wide cutoff centered far to the right of [lo, hi].
    const double reach = 1000.0;
    NodePtr shifted = expr::sub(expr::variable(var), expr::constant(hi + reach));
    return SmoothFunction::from_tree(expr::cutoff(shifted, reach, reach + (hi - lo)), {var});
}

}  // namespace gfc
