#include "flexifal/stl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace flexifal::stl {

const char* cmp_text(Cmp c) {
    switch (c) {
        case Cmp::Lt: return "<";
        case Cmp::Le: return "<=";
        case Cmp::Gt: return ">";
        case Cmp::Ge: return ">=";
    }
    return "?";
}

bool Formula::operator==(const Formula& other) const {
    if (kind != other.kind) return false;
    switch (kind) {
        case Kind::True:
        case Kind::False:
            return true;
        case Kind::Atom:
            return var == other.var && cmp == other.cmp && threshold == other.threshold;
        case Kind::Not:
            return *lhs == *other.lhs;
        case Kind::And:
        case Kind::Or:
        case Kind::Implies:
            return *lhs == *other.lhs && *rhs == *other.rhs;
        case Kind::Until:
            return interval.lo == other.interval.lo && interval.hi == other.interval.hi &&
                   *lhs == *other.lhs && *rhs == *other.rhs;
        case Kind::Always:
        case Kind::Eventually:
            return interval.lo == other.interval.lo && interval.hi == other.interval.hi &&
                   *lhs == *other.lhs;
    }
    return false;
}

namespace {

FormulaPtr make_node(Formula f) { return std::make_shared<const Formula>(std::move(f)); }

void check_interval(const Interval& i) {
    if (!(i.lo >= 0.0) || !(i.hi >= i.lo) || !std::isfinite(i.hi))
        throw std::invalid_argument("temporal interval must satisfy 0 <= a <= b < inf");
}

} // namespace

FormulaPtr make_true() {
    Formula f;
    f.kind = Formula::Kind::True;
    return make_node(std::move(f));
}

FormulaPtr make_false() {
    Formula f;
    f.kind = Formula::Kind::False;
    return make_node(std::move(f));
}

FormulaPtr atom(std::string var, Cmp cmp, double threshold) {
    Formula f;
    f.kind = Formula::Kind::Atom;
    f.var = std::move(var);
    f.cmp = cmp;
    f.threshold = threshold;
    return make_node(std::move(f));
}

FormulaPtr negate(FormulaPtr f) {
    Formula n;
    n.kind = Formula::Kind::Not;
    n.lhs = std::move(f);
    return make_node(std::move(n));
}

namespace {
FormulaPtr binary(Formula::Kind k, FormulaPtr a, FormulaPtr b) {
    Formula f;
    f.kind = k;
    f.lhs = std::move(a);
    f.rhs = std::move(b);
    return make_node(std::move(f));
}
} // namespace

FormulaPtr conj(FormulaPtr a, FormulaPtr b) { return binary(Formula::Kind::And, std::move(a), std::move(b)); }
FormulaPtr disj(FormulaPtr a, FormulaPtr b) { return binary(Formula::Kind::Or, std::move(a), std::move(b)); }
FormulaPtr implies(FormulaPtr a, FormulaPtr b) { return binary(Formula::Kind::Implies, std::move(a), std::move(b)); }

FormulaPtr until(Interval i, FormulaPtr a, FormulaPtr b) {
    check_interval(i);
    Formula f;
    f.kind = Formula::Kind::Until;
    f.interval = i;
    f.lhs = std::move(a);
    f.rhs = std::move(b);
    return make_node(std::move(f));
}

FormulaPtr always(Interval i, FormulaPtr f) {
    check_interval(i);
    Formula n;
    n.kind = Formula::Kind::Always;
    n.interval = i;
    n.lhs = std::move(f);
    return make_node(std::move(n));
}

FormulaPtr eventually(Interval i, FormulaPtr f) {
    check_interval(i);
    Formula n;
    n.kind = Formula::Kind::Eventually;
    n.interval = i;
    n.lhs = std::move(f);
    return make_node(std::move(n));
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

struct Token {
    enum class Type { LParen, RParen, LBracket, RBracket, Comma, Bang, Amp, Pipe, Arrow,
                      Lt, Le, Gt, Ge, Ident, Number, End };
    Type type;
    std::size_t pos;
    std::string text;
    double number = 0.0;
};

class Lexer {
public:
    explicit Lexer(const std::string& text) : text_(text) { advance(); }

    const Token& peek() const { return current_; }

    Token take() {
        Token t = current_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        current_.pos = pos_;
        current_.text.clear();
        if (pos_ >= text_.size()) {
            current_.type = Token::Type::End;
            return;
        }
        const char c = text_[pos_];
        switch (c) {
            case '(': current_.type = Token::Type::LParen; ++pos_; return;
            case ')': current_.type = Token::Type::RParen; ++pos_; return;
            case '[': current_.type = Token::Type::LBracket; ++pos_; return;
            case ']': current_.type = Token::Type::RBracket; ++pos_; return;
            case ',': current_.type = Token::Type::Comma; ++pos_; return;
            case '!': current_.type = Token::Type::Bang; ++pos_; return;
            case '&': current_.type = Token::Type::Amp; ++pos_; return;
            case '|': current_.type = Token::Type::Pipe; ++pos_; return;
            case '<':
                ++pos_;
                if (pos_ < text_.size() && text_[pos_] == '=') { ++pos_; current_.type = Token::Type::Le; }
                else current_.type = Token::Type::Lt;
                return;
            case '>':
                ++pos_;
                if (pos_ < text_.size() && text_[pos_] == '=') { ++pos_; current_.type = Token::Type::Ge; }
                else current_.type = Token::Type::Gt;
                return;
            case '-':
                if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
                    pos_ += 2;
                    current_.type = Token::Type::Arrow;
                    return;
                }
                lex_number();
                return;
            default:
                break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+') {
            lex_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            current_.type = Token::Type::Ident;
            current_.text = text_.substr(start, pos_ - start);
            return;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    void lex_number() {
        std::size_t start = pos_;
        if (text_[pos_] == '+' || text_[pos_] == '-') ++pos_;
        std::size_t digits_start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
            ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (pos_ == digits_start) throw ParseError("expected a number", start);
        const std::string s = text_.substr(start, pos_ - start);
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ParseError("bad number '" + s + "'", start);
        current_.type = Token::Type::Number;
        current_.number = v;
        current_.text = s;
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    Token current_;
};

class Parser {
public:
    explicit Parser(const std::string& text) : lexer_(text) {}

    FormulaPtr parse_formula() {
        FormulaPtr f = parse_implies();
        if (lexer_.peek().type != Token::Type::End)
            throw ParseError("trailing input after formula", lexer_.peek().pos);
        return f;
    }

private:
    FormulaPtr parse_implies() {
        FormulaPtr lhs = parse_or();
        if (lexer_.peek().type == Token::Type::Arrow) {
            lexer_.take();
            return implies(std::move(lhs), parse_implies());
        }
        return lhs;
    }

    FormulaPtr parse_or() {
        FormulaPtr f = parse_and();
        while (lexer_.peek().type == Token::Type::Pipe) {
            lexer_.take();
            f = disj(std::move(f), parse_and());
        }
        return f;
    }

    FormulaPtr parse_and() {
        FormulaPtr f = parse_until();
        while (lexer_.peek().type == Token::Type::Amp) {
            lexer_.take();
            f = conj(std::move(f), parse_until());
        }
        return f;
    }

    FormulaPtr parse_until() {
        FormulaPtr f = parse_unary();
        while (lexer_.peek().type == Token::Type::Ident && lexer_.peek().text == "U") {
            lexer_.take();
            const Interval i = parse_interval();
            f = until(i, std::move(f), parse_unary());
        }
        return f;
    }

    FormulaPtr parse_unary() {
        const Token& t = lexer_.peek();
        if (t.type == Token::Type::Bang) {
            lexer_.take();
            return negate(parse_unary());
        }
        if (t.type == Token::Type::Ident && (t.text == "G" || t.text == "F")) {
            const bool is_always = t.text == "G";
            lexer_.take();
            const Interval i = parse_interval();
            FormulaPtr body = parse_unary();
            return is_always ? always(i, std::move(body)) : eventually(i, std::move(body));
        }
        return parse_primary();
    }

    FormulaPtr parse_primary() {
        Token t = lexer_.take();
        switch (t.type) {
            case Token::Type::LParen: {
                FormulaPtr f = parse_implies();
                expect(Token::Type::RParen, ")");
                return f;
            }
            case Token::Type::Ident: {
                if (t.text == "true") return make_true();
                if (t.text == "false") return make_false();
                const Cmp c = parse_cmp();
                Token num = lexer_.take();
                if (num.type != Token::Type::Number)
                    throw ParseError("expected a number after comparison", num.pos);
                return atom(t.text, c, num.number);
            }
            default:
                throw ParseError("expected '(', '!', a temporal operator, or an atom", t.pos);
        }
    }

    Cmp parse_cmp() {
        Token t = lexer_.take();
        switch (t.type) {
            case Token::Type::Lt: return Cmp::Lt;
            case Token::Type::Le: return Cmp::Le;
            case Token::Type::Gt: return Cmp::Gt;
            case Token::Type::Ge: return Cmp::Ge;
            default: throw ParseError("expected a comparison operator", t.pos);
        }
    }

    Interval parse_interval() {
        expect(Token::Type::LBracket, "[");
        Token lo = lexer_.take();
        if (lo.type != Token::Type::Number) throw ParseError("expected interval lower bound", lo.pos);
        expect(Token::Type::Comma, ",");
        Token hi = lexer_.take();
        if (hi.type != Token::Type::Number) throw ParseError("expected interval upper bound", hi.pos);
        expect(Token::Type::RBracket, "]");
        if (lo.number < 0.0 || hi.number < lo.number)
            throw ParseError("interval must satisfy 0 <= a <= b", lo.pos);
        return Interval{lo.number, hi.number};
    }

    void expect(Token::Type type, const char* what) {
        Token t = lexer_.take();
        if (t.type != type) throw ParseError(std::string("expected '") + what + "'", t.pos);
    }

    Lexer lexer_;
};

} // namespace

FormulaPtr parse(const std::string& text) { return Parser(text).parse_formula(); }

std::string pretty_print(const Formula& f) {
    using K = Formula::Kind;
    const auto interval_text = [](const Interval& i) {
        return "[" + format_double(i.lo) + "," + format_double(i.hi) + "]";
    };
    switch (f.kind) {
        case K::True: return "true";
        case K::False: return "false";
        case K::Atom:
            return f.var + " " + cmp_text(f.cmp) + " " + format_double(f.threshold);
        case K::Not: return "!(" + pretty_print(*f.lhs) + ")";
        case K::And: return "(" + pretty_print(*f.lhs) + " & " + pretty_print(*f.rhs) + ")";
        case K::Or: return "(" + pretty_print(*f.lhs) + " | " + pretty_print(*f.rhs) + ")";
        case K::Implies: return "(" + pretty_print(*f.lhs) + " -> " + pretty_print(*f.rhs) + ")";
        case K::Until:
            return "((" + pretty_print(*f.lhs) + ") U" + interval_text(f.interval) + " (" +
                   pretty_print(*f.rhs) + "))";
        case K::Always: return "G" + interval_text(f.interval) + " (" + pretty_print(*f.lhs) + ")";
        case K::Eventually:
            return "F" + interval_text(f.interval) + " (" + pretty_print(*f.lhs) + ")";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

constexpr double kGridSlack = 1e-9;

// Grid indices [first, last] covered by (t + I) intersected with [0, T].
// Throws HorizonError when no grid point falls inside.
struct Window {
    std::size_t first;
    std::size_t last;
};

Window grid_window(const Trajectory& traj, std::size_t idx, const Interval& i) {
    const double t = traj.time_of(idx);
    const double start = t + i.lo;
    const double end = t + i.hi;
    const auto n = traj.states.size();
    auto lo = static_cast<long long>(std::ceil(start / traj.dt - kGridSlack));
    auto hi = static_cast<long long>(std::floor(end / traj.dt + kGridSlack));
    if (lo < 0) lo = 0;
    if (hi > static_cast<long long>(n) - 1) hi = static_cast<long long>(n) - 1;
    if (lo > hi)
        throw HorizonError("horizon-insufficient: window [" + format_double(start) + ", " +
                           format_double(end) + "] of a temporal operator contains no sample of the " +
                           format_double(traj.horizon()) + "s trajectory");
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Bottom-up evaluation over contiguous index ranges. Each node is evaluated
// exactly on the indices its parent queries, so horizon errors surface only
// for windows that are actually needed.
template <typename T, typename Ops>
std::vector<T> eval_range(const Formula& f, const Trajectory& traj, std::size_t q0, std::size_t q1,
                          const Ops& ops) {
    using K = Formula::Kind;
    const std::size_t count = q1 - q0 + 1;
    std::vector<T> out(count);
    switch (f.kind) {
        case K::True:
            std::fill(out.begin(), out.end(), ops.top());
            return out;
        case K::False:
            std::fill(out.begin(), out.end(), ops.bottom());
            return out;
        case K::Atom: {
            const std::size_t vi = traj.var_index(f.var);
            for (std::size_t j = 0; j < count; ++j)
                out[j] = ops.atom(traj.states[q0 + j][vi], f.cmp, f.threshold);
            return out;
        }
        case K::Not: {
            auto a = eval_range<T>(*f.lhs, traj, q0, q1, ops);
            for (std::size_t j = 0; j < count; ++j) out[j] = ops.negate(a[j]);
            return out;
        }
        case K::And:
        case K::Or:
        case K::Implies: {
            auto a = eval_range<T>(*f.lhs, traj, q0, q1, ops);
            auto b = eval_range<T>(*f.rhs, traj, q0, q1, ops);
            for (std::size_t j = 0; j < count; ++j) {
                if (f.kind == K::And) out[j] = ops.meet(a[j], b[j]);
                else if (f.kind == K::Or) out[j] = ops.join(a[j], b[j]);
                else out[j] = ops.join(ops.negate(a[j]), b[j]);
            }
            return out;
        }
        case K::Always:
        case K::Eventually: {
            const Window w0 = grid_window(traj, q0, f.interval);
            const Window w1 = grid_window(traj, q1, f.interval);
            auto child = eval_range<T>(*f.lhs, traj, w0.first, w1.last, ops);
            for (std::size_t j = 0; j < count; ++j) {
                const Window w = grid_window(traj, q0 + j, f.interval);
                T acc = child[w.first - w0.first];
                for (std::size_t k = w.first + 1; k <= w.last; ++k)
                    acc = f.kind == K::Always ? ops.meet(acc, child[k - w0.first])
                                              : ops.join(acc, child[k - w0.first]);
                out[j] = acc;
            }
            return out;
        }
        case K::Until: {
            const Window w0 = grid_window(traj, q0, f.interval);
            const Window w1 = grid_window(traj, q1, f.interval);
            auto second = eval_range<T>(*f.rhs, traj, w0.first, w1.last, ops);
            // The first operand is sampled on prefixes [t, t') only; when every
            // window collapses to its own instant no prefix is ever non-empty
            // and the operand stays unevaluated.
            std::vector<T> first;
            if (w1.last > q0) first = eval_range<T>(*f.lhs, traj, q0, w1.last - 1, ops);
            for (std::size_t j = 0; j < count; ++j) {
                const std::size_t t_idx = q0 + j;
                const Window w = grid_window(traj, t_idx, f.interval);
                bool have = false;
                T best{};
                bool prefix_have = false;
                T prefix{};
                // Advance t' through the window, extending the prefix minimum
                // over [t_idx, t'-1] incrementally.
                for (std::size_t tp = t_idx; tp <= w.last; ++tp) {
                    if (tp >= w.first) {
                        T cand = second[tp - w0.first];
                        if (prefix_have) cand = ops.meet(cand, prefix);
                        best = have ? ops.join(best, cand) : cand;
                        have = true;
                    }
                    if (tp < w.last) {
                        const T v = first[tp - q0];
                        prefix = prefix_have ? ops.meet(prefix, v) : v;
                        prefix_have = true;
                    }
                }
                out[j] = best;
            }
            return out;
        }
    }
    throw std::logic_error("unreachable formula kind");
}

struct RobustnessOps {
    double top() const { return std::numeric_limits<double>::infinity(); }
    double bottom() const { return -std::numeric_limits<double>::infinity(); }
    double atom(double value, Cmp c, double d) const {
        // Strict and non-strict comparisons share the same margin.
        return (c == Cmp::Lt || c == Cmp::Le) ? d - value : value - d;
    }
    double negate(double v) const { return -v; }
    double meet(double a, double b) const { return std::min(a, b); }
    double join(double a, double b) const { return std::max(a, b); }
};

struct BooleanOps {
    char top() const { return 1; }
    char bottom() const { return 0; }
    char atom(double value, Cmp c, double d) const {
        switch (c) {
            case Cmp::Lt: return value < d;
            case Cmp::Le: return value <= d;
            case Cmp::Gt: return value > d;
            case Cmp::Ge: return value >= d;
        }
        return 0;
    }
    char negate(char v) const { return !v; }
    char meet(char a, char b) const { return a && b; }
    char join(char a, char b) const { return a || b; }
};

std::size_t grid_index(const Trajectory& traj, double t) {
    traj.validate();
    const auto idx = static_cast<long long>(std::llround(t / traj.dt));
    if (idx < 0 || idx >= static_cast<long long>(traj.states.size()) ||
        std::fabs(static_cast<double>(idx) * traj.dt - t) > kGridSlack)
        throw std::domain_error("evaluation time " + format_double(t) +
                                " does not lie on the trajectory sample grid");
    return static_cast<std::size_t>(idx);
}

} // namespace

RobustnessValue robustness(const Formula& f, const Trajectory& traj, double t) {
    const std::size_t idx = grid_index(traj, t);
    const auto values = eval_range<double>(f, traj, idx, idx, RobustnessOps{});
    return RobustnessValue{values.front()};
}

bool satisfies(const Formula& f, const Trajectory& traj, double t) {
    const std::size_t idx = grid_index(traj, t);
    const auto values = eval_range<char>(f, traj, idx, idx, BooleanOps{});
    return values.front() != 0;
}

FormulaPtr desugar(const FormulaPtr& f) {
    using K = Formula::Kind;
    switch (f->kind) {
        case K::True:
        case K::False:
        case K::Atom:
            return f;
        case K::Not: return negate(desugar(f->lhs));
        case K::And: return conj(desugar(f->lhs), desugar(f->rhs));
        case K::Or: return disj(desugar(f->lhs), desugar(f->rhs));
        case K::Implies: return implies(desugar(f->lhs), desugar(f->rhs));
        case K::Until: return until(f->interval, desugar(f->lhs), desugar(f->rhs));
        case K::Always:
            return negate(until(f->interval, make_true(), negate(desugar(f->lhs))));
        case K::Eventually:
            return until(f->interval, make_true(), desugar(f->lhs));
    }
    throw std::logic_error("unreachable formula kind");
}

std::set<std::string> variables(const Formula& f) {
    std::set<std::string> out;
    const std::function<void(const Formula&)> walk = [&](const Formula& node) {
        if (node.kind == Formula::Kind::Atom) out.insert(node.var);
        if (node.lhs) walk(*node.lhs);
        if (node.rhs) walk(*node.rhs);
    };
    walk(f);
    return out;
}

double required_horizon(const Formula& f) {
    using K = Formula::Kind;
    switch (f.kind) {
        case K::True:
        case K::False:
        case K::Atom:
            return 0.0;
        case K::Not: return required_horizon(*f.lhs);
        case K::And:
        case K::Or:
        case K::Implies:
            return std::max(required_horizon(*f.lhs), required_horizon(*f.rhs));
        case K::Until:
            return f.interval.hi + std::max(required_horizon(*f.lhs), required_horizon(*f.rhs));
        case K::Always:
        case K::Eventually:
            return f.interval.hi + required_horizon(*f.lhs);
    }
    return 0.0;
}

} // namespace flexifal::stl
