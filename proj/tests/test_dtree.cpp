#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flexifal/dtree.hpp"
#include "flexifal/rng.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace flexifal;
using namespace flexifal::dtree;
using testing::oracle_best_split;

namespace {

RobustnessDataset make_dataset(std::vector<std::vector<double>> features,
                               std::vector<double> targets,
                               std::vector<std::string> names = {}) {
    RobustnessDataset d;
    if (names.empty())
        for (std::size_t i = 0; i < features.front().size(); ++i)
            names.push_back("f" + std::to_string(i));
    d.names = std::move(names);
    d.features = std::move(features);
    d.robustness = std::move(targets);
    return d;
}

} // namespace

TEST_CASE("all-equal targets produce a single leaf") {
    const auto d = make_dataset({{0.0}, {1.0}, {2.0}}, {4.2, 4.2, 4.2});
    const auto tree = DecisionTree::fit(d);
    REQUIRE(tree.nodes().size() == 1);
    CHECK(tree.nodes()[0].is_leaf());
    CHECK(tree.nodes()[0].value == 4.2);
    CHECK(tree.nodes()[0].count == 3);
    CHECK(tree.predict({100.0}) == 4.2);
}

TEST_CASE("two points split at the midpoint") {
    const auto d = make_dataset({{0.0}, {1.0}}, {-1.0, 1.0});
    const auto tree = DecisionTree::fit(d);
    REQUIRE(tree.nodes().size() == 3);
    const auto& root = tree.nodes()[0];
    CHECK(root.feature == 0);
    CHECK(root.threshold == 0.5);
    CHECK(tree.predict({0.4}) == -1.0);
    CHECK(tree.predict({0.6}) == 1.0);
}

TEST_CASE("fitted splits match the exhaustive oracle on small instances") {
    Rng rng(808);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rows = 2 + rng.below(19);
        const std::size_t feats = 1 + rng.below(3);
        std::vector<std::vector<double>> xs(rows);
        std::vector<double> ys(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            xs[r].resize(feats);
            // Coarse values provoke duplicates and threshold ties.
            for (auto& v : xs[r]) v = std::floor(rng.uniform(0.0, 6.0));
            ys[r] = rng.uniform(-2.0, 2.0);
        }
        const auto oracle = oracle_best_split(xs, ys);
        const auto tree = DecisionTree::fit(make_dataset(xs, ys));
        if (!oracle.found) {
            CHECK(tree.nodes()[0].is_leaf());
            continue;
        }
        REQUIRE_FALSE(tree.nodes()[0].is_leaf());
        CHECK(tree.nodes()[0].feature == oracle.feature);
        CHECK(tree.nodes()[0].threshold == oracle.threshold);
    }
}

TEST_CASE("leaf predictions equal the mean of routed training rows") {
    Rng rng(99);
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (int r = 0; r < 60; ++r) {
        xs.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
        ys.push_back(rng.uniform(-3, 3));
    }
    const auto d = make_dataset(xs, ys);
    const auto tree = DecisionTree::fit(d);
    // Recompute per-leaf means by routing, in dataset row order.
    std::vector<double> sums(tree.nodes().size(), 0.0);
    std::vector<std::size_t> counts(tree.nodes().size(), 0);
    for (std::size_t r = 0; r < xs.size(); ++r) {
        const int leaf = tree.route(xs[r]);
        sums[static_cast<std::size_t>(leaf)] += ys[r];
        counts[static_cast<std::size_t>(leaf)] += 1;
    }
    double weighted = 0.0, total = 0.0;
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
        const auto& n = tree.nodes()[i];
        if (!n.is_leaf()) continue;
        REQUIRE(counts[i] == n.count);
        CHECK(n.value == sums[i] / static_cast<double>(counts[i]));
        weighted += static_cast<double>(n.count) * n.value;
    }
    for (double y : ys) total += y;
    CHECK(std::fabs(weighted - total) <= 1e-9);
}

TEST_CASE("refitting the same dataset gives an identical tree") {
    Rng rng(321);
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (int r = 0; r < 50; ++r) {
        xs.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
        ys.push_back(rng.uniform(-1, 1));
    }
    const auto d = make_dataset(xs, ys);
    CHECK(DecisionTree::fit(d).to_json() == DecisionTree::fit(d).to_json());
}

TEST_CASE("falsifying leaves are sorted most-violating first") {
    // Hand-built: root (f0 <= 0.5) with leaves {-2.97, +1.3} and a right leaf +4.
    std::vector<Node> nodes(5);
    nodes[0] = {.parent = -1, .left = 1, .right = 4, .feature = 0, .threshold = 0.5};
    nodes[1] = {.parent = 0, .left = 2, .right = 3, .feature = 0, .threshold = 0.2};
    nodes[2] = {.parent = 1, .left = -1, .right = -1, .value = -2.97, .count = 3};
    nodes[3] = {.parent = 1, .left = -1, .right = -1, .value = 1.3, .count = 4};
    nodes[4] = {.parent = 0, .left = -1, .right = -1, .value = 4.0, .count = 5};
    const auto tree = DecisionTree::from_nodes(nodes, {"f0"});
    const auto fals = tree.falsifying_leaves();
    REQUIRE(fals.size() == 1);
    CHECK(tree.nodes()[fals[0]].value == -2.97);
    CHECK_THROWS_AS(tree.nearest_leaves(), std::logic_error);

    // Ordering: {-1, -5} -> [-5, -1].
    std::vector<Node> n2(3);
    n2[0] = {.parent = -1, .left = 1, .right = 2, .feature = 0, .threshold = 0.0};
    n2[1] = {.parent = 0, .left = -1, .right = -1, .value = -1.0};
    n2[2] = {.parent = 0, .left = -1, .right = -1, .value = -5.0};
    const auto t2 = DecisionTree::from_nodes(n2, {"f0"});
    const auto order = t2.falsifying_leaves();
    REQUIRE(order.size() == 2);
    CHECK(t2.nodes()[order[0]].value == -5.0);
    CHECK(t2.nodes()[order[1]].value == -1.0);
}

TEST_CASE("nearest leaves return every tie") {
    std::vector<Node> nodes(5);
    nodes[0] = {.parent = -1, .left = 1, .right = 4, .feature = 0, .threshold = 0.5};
    nodes[1] = {.parent = 0, .left = 2, .right = 3, .feature = 0, .threshold = 0.2};
    nodes[2] = {.parent = 1, .left = -1, .right = -1, .value = 0.2};
    nodes[3] = {.parent = 1, .left = -1, .right = -1, .value = 3.51};
    nodes[4] = {.parent = 0, .left = -1, .right = -1, .value = 7.9};
    const auto tree = DecisionTree::from_nodes(nodes, {"f0"});
    auto near = tree.nearest_leaves();
    REQUIRE(near.size() == 1);
    CHECK(tree.nodes()[near[0]].value == 0.2);

    nodes[2].value = 0.5;
    nodes[3].value = 0.5;
    nodes[4].value = 2.0;
    const auto t2 = DecisionTree::from_nodes(nodes, {"f0"});
    CHECK(t2.nearest_leaves().size() == 2);

    std::vector<Node> single(1);
    single[0] = {.parent = -1, .left = -1, .right = -1, .value = 1.0};
    CHECK(DecisionTree::from_nodes(single, {}).nearest_leaves().size() == 1);
}

TEST_CASE("the worked falsifying-leaf explanation") {
    // Root [phi <= 7.525]; its left child [phi <= 4.18]; that node's left
    // child is the falsifying leaf.
    std::vector<Node> nodes(5);
    nodes[0] = {.parent = -1, .left = 1, .right = 4, .feature = 0, .threshold = 7.525};
    nodes[1] = {.parent = 0, .left = 2, .right = 3, .feature = 0, .threshold = 4.18};
    nodes[2] = {.parent = 1, .left = -1, .right = -1, .value = -2.97, .count = 12};
    nodes[3] = {.parent = 1, .left = -1, .right = -1, .value = 1.3, .count = 40};
    nodes[4] = {.parent = 0, .left = -1, .right = -1, .value = 4.0, .count = 30};
    const auto tree = DecisionTree::from_nodes(nodes, {"phi", "psi"});

    const auto fals = tree.falsifying_leaves();
    REQUIRE(fals.size() == 1);
    const auto exp = tree.explanation(fals[0]);
    CHECK(exp.to_string() == "phi <= 4.18 & phi <= 7.525");

    const auto tight = exp.collapsed();
    REQUIRE(tight.size() == 1);
    CHECK(tight[0].feature == 0);
    CHECK(tight[0].is_le);
    CHECK(tight[0].threshold == 4.18);
}

TEST_CASE("the worked nearest-leaf explanation") {
    // Root [psi <= 5.38]; right child [phi <= 7.525]; its right child is the
    // nearest leaf. No leaf is negative.
    std::vector<Node> nodes(5);
    nodes[0] = {.parent = -1, .left = 1, .right = 2, .feature = 1, .threshold = 5.38};
    nodes[1] = {.parent = 0, .left = -1, .right = -1, .value = 5.0, .count = 20};
    nodes[2] = {.parent = 0, .left = 3, .right = 4, .feature = 0, .threshold = 7.525};
    nodes[3] = {.parent = 2, .left = -1, .right = -1, .value = 4.2, .count = 9};
    nodes[4] = {.parent = 2, .left = -1, .right = -1, .value = 3.51, .count = 6};
    const auto tree = DecisionTree::from_nodes(nodes, {"phi", "psi"});

    CHECK(tree.falsifying_leaves().empty());
    const auto near = tree.nearest_leaves();
    REQUIRE(near.size() == 1);
    CHECK(tree.nodes()[near[0]].value == 3.51);
    const auto exp = tree.explanation(near[0]);
    CHECK(exp.to_string() == "phi > 7.525 & psi > 5.38");
}

TEST_CASE("root-only tree explains as the empty conjunction") {
    std::vector<Node> single(1);
    single[0] = {.parent = -1, .left = -1, .right = -1, .value = -1.0};
    const auto tree = DecisionTree::from_nodes(single, {});
    const auto exp = tree.explanation(0);
    CHECK(exp.constraints.empty());
    CHECK(exp.to_string() == "true");
    const Box search{{0.0}, {1.0}};
    const auto box = explanation_box(exp, search);
    REQUIRE(box);
    CHECK(box->lows == search.lows);
    CHECK(box->highs == search.highs);
}

TEST_CASE("explanation_box intersects and detects emptiness") {
    Explanation exp;
    exp.feature_names = {"phi"};
    exp.constraints = {{0, true, 4.18}};
    const auto box = explanation_box(exp, Box{{0.0}, {10.0}});
    REQUIRE(box);
    CHECK(box->lows[0] == 0.0);
    CHECK(box->highs[0] == 4.18);

    Explanation gt;
    gt.constraints = {{0, false, 5.0}};
    CHECK_FALSE(explanation_box(gt, Box{{0.0}, {3.0}})); // void intersection

    // The > bound is nudged so the interval is closed and sampleable.
    const auto nudged = explanation_box(gt, Box{{0.0}, {10.0}});
    REQUIRE(nudged);
    CHECK(nudged->lows[0] == doctest::Approx(5.0 + 1e-9));
}

TEST_CASE("explanation soundness: every sample routes to the source leaf") {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 30 + rng.below(40);
        const std::size_t feats = 1 + rng.below(3);
        std::vector<std::vector<double>> xs(rows);
        std::vector<double> ys(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            xs[r].resize(feats);
            for (auto& v : xs[r]) v = rng.uniform(0.0, 1.0);
            ys[r] = rng.uniform(-1.0, 1.0);
        }
        const auto tree = DecisionTree::fit(make_dataset(xs, ys));
        Box search;
        search.lows.assign(feats, 0.0);
        search.highs.assign(feats, 1.0);
        for (int leaf = 0; leaf < static_cast<int>(tree.nodes().size()); ++leaf) {
            if (!tree.nodes()[leaf].is_leaf()) continue;
            const auto box = explanation_box(tree.explanation(leaf), search);
            REQUIRE(box);
            for (int s = 0; s < 1000; ++s) {
                std::vector<double> x(feats);
                for (std::size_t i = 0; i < feats; ++i)
                    x[i] = rng.uniform(box->lows[i], box->highs[i]);
                REQUIRE(tree.route(x) == leaf);
            }
        }
    }
}

TEST_CASE("json round trip preserves structure and predictions") {
    Rng rng(55);
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (int r = 0; r < 40; ++r) {
        xs.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
        ys.push_back(rng.uniform(-1, 1));
    }
    const auto tree = DecisionTree::fit(make_dataset(xs, ys));
    const auto back = DecisionTree::from_json(tree.to_json());
    CHECK(back.to_json() == tree.to_json());
    for (int s = 0; s < 100; ++s) {
        const std::vector<double> x{rng.uniform(0, 1), rng.uniform(0, 1)};
        CHECK(back.predict(x) == tree.predict(x));
    }
    CHECK(back.render() == tree.render());
}

TEST_CASE("predict rejects dimension mismatches") {
    const auto tree = DecisionTree::fit(make_dataset({{0.0}, {1.0}}, {0.0, 1.0}));
    CHECK_THROWS_AS(tree.predict({1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("fit rejects an empty dataset") {
    RobustnessDataset d;
    d.names = {"f0"};
    CHECK_THROWS_AS(DecisionTree::fit(d), std::invalid_argument);
}
