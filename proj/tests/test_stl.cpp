#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flexifal/rng.hpp"
#include "flexifal/stl.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <limits>

using namespace flexifal;
using namespace flexifal::stl;
using testing::oracle_rho;
using testing::random_formula;
using testing::random_trajectory;

namespace {

Trajectory constant_trajectory(double value, std::size_t samples, double dt,
                               const std::string& name = "x") {
    Trajectory t;
    t.dt = dt;
    t.var_names = {name};
    t.states.assign(samples, {value});
    return t;
}

} // namespace

TEST_CASE("parsing the Table-style formulas") {
    const auto bb1 = parse("G[0,10] !((v >= -1) & (v <= 1) & (x >= 1) & (x <= 2))");
    REQUIRE(bb1->kind == Formula::Kind::Always);
    CHECK(bb1->interval.lo == 0.0);
    CHECK(bb1->interval.hi == 10.0);
    REQUIRE(bb1->lhs->kind == Formula::Kind::Not);
    const auto& conj3 = *bb1->lhs->lhs;
    REQUIRE(conj3.kind == Formula::Kind::And); // ((v>=-1 & v<=1) & x>=1) & x<=2
    CHECK(conj3.rhs->kind == Formula::Kind::Atom);
    CHECK(conj3.rhs->var == "x");
    CHECK(conj3.rhs->cmp == Cmp::Le);
    CHECK(conj3.rhs->threshold == 2.0);

    const auto sb2 = parse("F[0,6] b < 50");
    REQUIRE(sb2->kind == Formula::Kind::Eventually);
    CHECK(sb2->interval.hi == 6.0);
    CHECK(sb2->lhs->kind == Formula::Kind::Atom);
    CHECK(sb2->lhs->var == "b");
    CHECK(sb2->lhs->cmp == Cmp::Lt);

    const auto a = parse("x < 5");
    CHECK(*a == *atom("x", Cmp::Lt, 5.0));
}

TEST_CASE("parser covers until, implication, or, and literals") {
    const auto f = parse("(x < 1) U[0.5,2] (y >= 0)");
    REQUIRE(f->kind == Formula::Kind::Until);
    CHECK(f->interval.lo == 0.5);

    const auto g = parse("x < 1 -> y < 2 | true");
    REQUIRE(g->kind == Formula::Kind::Implies);
    CHECK(g->rhs->kind == Formula::Kind::Or);

    CHECK(parse("true")->kind == Formula::Kind::True);
    CHECK(parse("false")->kind == Formula::Kind::False);
}

TEST_CASE("parse errors carry positions") {
    CHECK_THROWS_AS(parse("x <"), ParseError);
    CHECK_THROWS_AS(parse("G[2,1] x < 5"), ParseError); // inverted interval
    CHECK_THROWS_AS(parse("x < 5 )"), ParseError);
    CHECK_THROWS_AS(parse("@"), ParseError);
    try {
        parse("x ? 5");
    } catch (const ParseError& e) {
        CHECK(e.position == 2);
    }
}

TEST_CASE("pretty-print reparses to an identical AST") {
    Rng rng(11);
    const std::vector<std::string> vars{"x", "y"};
    for (int trial = 0; trial < 200; ++trial) {
        const auto f = random_formula(rng, vars, 5.0, 0.5, 3);
        const auto printed = pretty_print(f);
        const auto reparsed = parse(printed);
        CHECK(*reparsed == *f);
    }
}

TEST_CASE("robustness of Always on a constant trajectory") {
    const auto g = constant_trajectory(5.0, 101, 0.1);
    const auto f = parse("G[0,10] x < 20");
    CHECK(robustness(*f, g, 0.0).value == doctest::Approx(15.0));
    CHECK(robustness(*negate(f), g, 0.0).value == doctest::Approx(-15.0));
}

TEST_CASE("satisfies honors strictness at the boundary") {
    const auto g20 = constant_trajectory(20.0, 3, 0.5);
    CHECK_FALSE(satisfies(*parse("x < 20"), g20, 0.0));
    CHECK(satisfies(*parse("x <= 20"), g20, 0.0));
    CHECK(satisfies(*parse("x < 20"), constant_trajectory(5.0, 3, 0.5), 0.0));

    // Robustness is 0 here either way; the boundary flag fires.
    CHECK(robustness(*parse("x < 20"), g20).boundary());
}

TEST_CASE("errors: horizon, names, off-grid times") {
    const auto g = constant_trajectory(1.0, 11, 0.1); // horizon 1.0
    CHECK_THROWS_AS(robustness(*parse("F[2,3] x < 5"), g, 0.0), HorizonError);
    CHECK_THROWS_AS(robustness(*parse("zz < 5"), g, 0.0), std::out_of_range);
    CHECK_THROWS_AS(robustness(*parse("x < 5"), g, 0.05), std::domain_error);
    // Window inside the horizon but between grid points.
    Trajectory coarse = constant_trajectory(1.0, 3, 1.0);
    CHECK_THROWS_AS(robustness(*parse("F[0.2,0.3] x < 5"), coarse, 0.0), HorizonError);
}

TEST_CASE("robustness matches the brute-force oracle on random instances") {
    Rng rng(2024);
    const std::vector<std::string> vars{"x", "y"};
    int checked = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const auto g = random_trajectory(rng, 50);
        const double max_hi = g.horizon() / 4.0;
        const auto f = random_formula(rng, vars, max_hi, g.dt, 3);
        const double expect = oracle_rho(*f, g, 0);
        const double got = robustness(*f, g, 0.0).value;
        CHECK(std::fabs(got - expect) <= 1e-9);
        ++checked;
    }
    CHECK(checked == 400);
}

TEST_CASE("robustness at interior grid points matches the oracle") {
    Rng rng(77);
    const std::vector<std::string> vars{"x", "y"};
    for (int trial = 0; trial < 100; ++trial) {
        const auto g = random_trajectory(rng, 40);
        const double max_hi = g.horizon() / 8.0;
        const auto f = random_formula(rng, vars, max_hi, g.dt, 2);
        const auto idx = static_cast<long long>(rng.below(g.states.size() / 2 + 1));
        const double t = static_cast<double>(idx) * g.dt;
        const double expect = oracle_rho(*f, g, idx);
        CHECK(std::fabs(robustness(*f, g, t).value - expect) <= 1e-9);
    }
}

TEST_CASE("sign coherence between Boolean and quantitative semantics") {
    Rng rng(31337);
    const std::vector<std::string> vars{"x", "y"};
    for (int trial = 0; trial < 400; ++trial) {
        const auto g = random_trajectory(rng, 50);
        const auto f = random_formula(rng, vars, g.horizon() / 4.0, g.dt, 3);
        const double rho = robustness(*f, g, 0.0).value;
        const bool sat = satisfies(*f, g, 0.0);
        if (rho > 0.0) CHECK(sat);
        if (rho < 0.0) CHECK_FALSE(sat);
    }
}

TEST_CASE("negation and lattice laws hold exactly") {
    Rng rng(5150);
    const std::vector<std::string> vars{"x", "y"};
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = random_trajectory(rng, 40);
        const auto a = random_formula(rng, vars, g.horizon() / 4.0, g.dt, 2);
        const auto b = random_formula(rng, vars, g.horizon() / 4.0, g.dt, 2);
        const double ra = robustness(*a, g).value;
        const double rb = robustness(*b, g).value;
        CHECK(robustness(*negate(a), g).value == -ra);
        CHECK(robustness(*conj(a, b), g).value == std::min(ra, rb));
        CHECK(robustness(*disj(a, b), g).value == std::max(ra, rb));
        CHECK(robustness(*implies(a, b), g).value == std::max(-ra, rb));
    }
}

TEST_CASE("desugar rewrites the derived operators") {
    const Interval i{0.0, 2.0};
    const auto phi = atom("x", Cmp::Lt, 5.0);
    const auto a = desugar(always(i, phi));
    CHECK(*a == *negate(until(i, make_true(), negate(phi))));
    const auto e = desugar(eventually(i, phi));
    CHECK(*e == *until(i, make_true(), phi));
    CHECK(*desugar(phi) == *phi);
}

TEST_CASE("desugar preserves robustness exactly on the grid") {
    Rng rng(404);
    const std::vector<std::string> vars{"x", "y"};
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = random_trajectory(rng, 40);
        const auto f = random_formula(rng, vars, g.horizon() / 4.0, g.dt, 3);
        CHECK(robustness(*desugar(f), g).value == robustness(*f, g).value);
    }
}

TEST_CASE("required_horizon sums nested interval tops") {
    CHECK(required_horizon(*parse("x < 5")) == 0.0);
    CHECK(required_horizon(*parse("G[0,10] x < 5")) == 10.0);
    CHECK(required_horizon(*parse("G[0,80] (G[0,20] x < 5 | F[0,20] y < 1)")) == 100.0);
}

TEST_CASE("variables walks every atom") {
    const auto f = parse("G[0,1] (a < 1 & (b < 2 -> c >= 3))");
    const auto vars = variables(*f);
    CHECK(vars == std::set<std::string>{"a", "b", "c"});
}
