#ifndef FLEXIFAL_STL_HPP
#define FLEXIFAL_STL_HPP

#include "flexifal/core.hpp"

#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>

// Signal temporal logic over sampled trajectories. Semantics are discrete:
// every temporal quantifier ranges over the sample grid only, so monitoring
// is exact on simulated traces.
namespace flexifal::stl {

enum class Cmp { Lt, Le, Gt, Ge };

const char* cmp_text(Cmp c);

// Closed interval [lo, hi] annotating temporal operators, in seconds.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
    enum class Kind { True, False, Atom, Not, And, Or, Implies, Until, Always, Eventually };

    Kind kind = Kind::True;
    std::string var;          // Atom
    Cmp cmp = Cmp::Lt;        // Atom
    double threshold = 0.0;   // Atom
    Interval interval;        // Until / Always / Eventually
    FormulaPtr lhs;           // unary child, or left operand
    FormulaPtr rhs;           // right operand

    bool operator==(const Formula& other) const;
};

FormulaPtr make_true();
FormulaPtr make_false();
FormulaPtr atom(std::string var, Cmp cmp, double threshold);
FormulaPtr negate(FormulaPtr f);
FormulaPtr conj(FormulaPtr a, FormulaPtr b);
FormulaPtr disj(FormulaPtr a, FormulaPtr b);
FormulaPtr implies(FormulaPtr a, FormulaPtr b);
FormulaPtr until(Interval i, FormulaPtr a, FormulaPtr b);
FormulaPtr always(Interval i, FormulaPtr f);
FormulaPtr eventually(Interval i, FormulaPtr f);

// Raised when a temporal window intersected with the trajectory contains no
// grid point; never silently mapped to +-infinity.
struct HorizonError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    std::size_t position;
    ParseError(const std::string& what, std::size_t pos)
        : std::runtime_error(what + " (at position " + std::to_string(pos) + ")"), position(pos) {}
};

// Degree of satisfaction; negative means violation. Values within 1e-12 of
// zero sit on the satisfy/violate boundary, where strict atoms make the
// Boolean and quantitative verdicts diverge.
struct RobustnessValue {
    double value = 0.0;
    bool boundary() const { return std::fabs(value) < 1e-12; }
};

// Text grammar (ASCII, whitespace-insensitive):
//   formula  := or ('->' formula)?                 right-associative
//   or       := and ('|' and)*
//   and      := until ('&' until)*
//   until    := unary ('U' '[' num ',' num ']' unary)*   left-associative
//   unary    := '!' unary | 'G[a,b]' unary | 'F[a,b]' unary | primary
//   primary  := '(' formula ')' | 'true' | 'false' | ident cmp number
//   cmp      := '<' | '<=' | '>' | '>='
// G = always, F = eventually, U = until.
FormulaPtr parse(const std::string& text);

// Canonical text that reparses to a structurally identical AST.
std::string pretty_print(const Formula& f);
inline std::string pretty_print(const FormulaPtr& f) { return pretty_print(*f); }

// Quantitative robustness at time t (t must lie on the sample grid).
RobustnessValue robustness(const Formula& f, const Trajectory& traj, double t = 0.0);

// Boolean satisfaction, evaluated directly (strict atoms honored).
bool satisfies(const Formula& f, const Trajectory& traj, double t = 0.0);

// Rewrites Always/Eventually into Until form; robustness-preserving.
FormulaPtr desugar(const FormulaPtr& f);

// Variable names referenced by atoms.
std::set<std::string> variables(const Formula& f);

// Largest time the formula can require relative to its evaluation instant:
// the deepest nesting of interval upper bounds. A trajectory evaluated at
// t = 0 must extend at least this far for every window to be non-empty.
double required_horizon(const Formula& f);

} // namespace flexifal::stl

#endif
