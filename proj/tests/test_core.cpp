#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flexifal/core.hpp"
#include "flexifal/rng.hpp"

#include <sstream>

using namespace flexifal;

namespace {

PiecewiseConstantSignal make_signal(double horizon, std::vector<std::vector<double>> values) {
    PiecewiseConstantSignal u;
    u.horizon = horizon;
    u.values = std::move(values);
    return u;
}

} // namespace

TEST_CASE("signal_eval selects segments by the floor rule") {
    const auto u = make_signal(10.0, {{1.0}, {3.0}});
    CHECK(signal_eval(u, 4.9) == std::vector<double>{1.0});
    CHECK(signal_eval(u, 5.0) == std::vector<double>{3.0}); // boundary belongs to the right
    CHECK(signal_eval(u, 0.0) == std::vector<double>{1.0});

    const auto w = make_signal(8.0, {{0.0}, {1.0}, {2.0}, {3.0}});
    CHECK(signal_eval(w, 8.0) == std::vector<double>{3.0}); // horizon clamps to the last segment

    CHECK_THROWS_AS(signal_eval(u, -0.1), std::domain_error);
    CHECK_THROWS_AS(signal_eval(u, 10.1), std::domain_error);
}

TEST_CASE("signal_eval is a right-continuous step function") {
    Rng rng(99);
    const double widths[] = {0.25, 0.5, 1.0, 2.0}; // exactly representable
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + rng.below(6);
        std::vector<std::vector<double>> vals(k);
        for (auto& v : vals) v = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
        const double w = widths[rng.below(4)];
        const auto u = make_signal(w * static_cast<double>(k), vals);
        for (std::size_t j = 0; j < k; ++j) {
            const double start = w * static_cast<double>(j);
            CHECK(signal_eval(u, start) == vals[j]);
            CHECK(signal_eval(u, start + 0.25 * w) == vals[j]);
            CHECK(signal_eval(u, start + 0.75 * w) == vals[j]);
        }
    }
}

TEST_CASE("flatten lays out x0 then the input segments") {
    SearchPoint p;
    p.x0 = {2.0};
    p.u = make_signal(1.0, {{5.0}, {7.0}});
    CHECK(flatten(p) == std::vector<double>{2.0, 5.0, 7.0});

    SearchPoint q;
    q.x0 = {1.0, 2.0};
    q.u = make_signal(1.0, {{3.0, 4.0}});
    CHECK(flatten(q) == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("unflatten(flatten(p)) is the identity on random points") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        SearchPoint p;
        const std::size_t n0 = 1 + rng.below(4);
        const std::size_t k = 1 + rng.below(4);
        const std::size_t m = rng.below(3);
        for (std::size_t i = 0; i < n0; ++i) p.x0.push_back(rng.uniform(-10, 10));
        p.u.horizon = rng.uniform(1, 10);
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<double> seg;
            for (std::size_t r = 0; r < m; ++r) seg.push_back(rng.uniform(-10, 10));
            p.u.values.push_back(seg);
        }
        const auto q = unflatten(flatten(p), n0, k, m, p.u.horizon);
        CHECK(q.x0 == p.x0);
        CHECK(q.u.values == p.u.values);
        CHECK(q.u.horizon == p.u.horizon);
    }
}

TEST_CASE("feature names match the CSV schema") {
    CHECK(feature_names(2, 2, 1) ==
          std::vector<std::string>{"x0_0", "x0_1", "u_0_0", "u_1_0"});
    CHECK(feature_names(1, 1, 0) == std::vector<std::string>{"x0_0"});
}

TEST_CASE("flatten_search_space repeats the input box per segment") {
    const Box init{{0.0, 1.0}, {2.0, 3.0}};
    const Box input{{-1.0}, {1.0}};
    const Box flat = flatten_search_space(init, input, 2);
    CHECK(flat.lows == std::vector<double>{0.0, 1.0, -1.0, -1.0});
    CHECK(flat.highs == std::vector<double>{2.0, 3.0, 1.0, 1.0});
}

TEST_CASE("box invariants") {
    CHECK_THROWS_AS((Box{{1.0}, {0.0}}.validate()), std::invalid_argument);
    const Box b{{0.0, 0.0}, {1.0, 1.0}};
    CHECK(b.contains({0.5, 0.5}));
    CHECK_FALSE(b.contains({1.5, 0.5}));
}

TEST_CASE("points round-trip through CSV") {
    SearchPoint p;
    p.x0 = {0.25};
    p.u = make_signal(2.0, {{1.5}, {-0.125}});
    SearchPoint q;
    q.x0 = {0.7071067811865476};
    q.u = make_signal(2.0, {{0.1}, {0.2}});

    const std::string csv = points_to_csv({p, q});
    CHECK(csv.rfind("x0_0,u_0_0,u_1_0\n", 0) == 0);
    std::istringstream in(csv);
    const auto back = points_from_csv(in, 1, 2, 1, 2.0);
    REQUIRE(back.size() == 2);
    CHECK(back[0].x0 == p.x0);
    CHECK(back[1].x0 == q.x0);
    CHECK(back[1].u.values == q.u.values);
}

TEST_CASE("counterexample CSV appends the robustness column") {
    Counterexample ce;
    ce.point.x0 = {0.5};
    ce.point.u = make_signal(1.0, {{0.0}});
    ce.robustness = -0.25;
    const std::string csv = counterexamples_to_csv({ce});
    CHECK(csv.find("robustness") != std::string::npos);
    CHECK(csv.find("-0.25") != std::string::npos);
}

TEST_CASE("point JSON round trip") {
    SearchPoint p;
    p.x0 = {1.0, -2.5};
    p.u = make_signal(3.0, {{0.5}, {0.25}, {0.125}});
    const auto q = point_from_json(point_to_json(p));
    CHECK(q.x0 == p.x0);
    CHECK(q.u.values == p.u.values);
    CHECK(q.u.horizon == p.u.horizon);
}

TEST_CASE("counterexample JSON is self-describing") {
    Counterexample ce;
    ce.point.x0 = {0.5};
    ce.point.u = make_signal(1.0, {{0.25}});
    ce.robustness = -0.125;
    ce.trajectory.dt = 0.5;
    ce.trajectory.var_names = {"x"};
    ce.trajectory.states = {{0.5}, {0.75}, {1.0}};
    const auto text = counterexample_to_json(ce);
    CHECK(text.find("\"robustness\":-0.125") != std::string::npos);
    CHECK(text.find("\"var_names\":[\"x\"]") != std::string::npos);
    CHECK(text.find("\"point\"") != std::string::npos);
    CHECK(text.find("\"states\"") != std::string::npos);
}

TEST_CASE("trajectory CSV round trip on the dt grid") {
    Trajectory t;
    t.dt = 0.5;
    t.var_names = {"x", "v"};
    t.states = {{10.0, 0.0}, {9.5, -1.0}, {8.0, -2.0}};
    std::istringstream in(trajectory_to_csv(t));
    const auto back = trajectory_from_csv(in);
    CHECK(back.dt == doctest::Approx(0.5));
    CHECK(back.var_names == t.var_names);
    CHECK(back.states == t.states);

    std::istringstream bad("time,x\n0,1\n0.5,2\n1.7,3\n");
    CHECK_THROWS(trajectory_from_csv(bad));
}

TEST_CASE("trajectory invariants and lookup") {
    Trajectory t;
    t.dt = 0.1;
    t.var_names = {"a"};
    t.states = {{1.0}, {2.0}};
    t.validate();
    CHECK(t.horizon() == doctest::Approx(0.1));
    CHECK(t.var_index("a") == 0);
    CHECK_THROWS_AS(t.var_index("zz"), std::out_of_range);

    Trajectory bad = t;
    bad.states.push_back({1.0, 2.0});
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
