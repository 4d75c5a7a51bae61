#ifndef FLEXIFAL_DTREE_HPP
#define FLEXIFAL_DTREE_HPP

#include "flexifal/core.hpp"
#include "flexifal/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace flexifal::dtree {

// Flat node store; children/parent are indices, -1 where absent. Routing
// convention: feature value <= threshold goes left, else right.
struct Node {
    int parent = -1;
    int left = -1;
    int right = -1;
    std::size_t feature = 0; // decision nodes
    double threshold = 0.0;  // decision nodes
    double value = 0.0;      // leaves: mean robustness of routed rows
    std::size_t count = 0;   // training rows routed here
    bool is_leaf() const { return left < 0; }
};

struct FitParams {
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    int max_depth = -1; // unlimited
};

// One branch condition on the path from a leaf to the root.
struct Constraint {
    std::size_t feature = 0;
    bool is_le = true; // feature <= threshold, otherwise feature > threshold
    double threshold = 0.0;
};

// Conjunction of branch conditions in leaf-to-root order. Every point that
// satisfies it routes to the leaf it was generated from.
struct Explanation {
    std::vector<Constraint> constraints;
    std::vector<std::string> feature_names;

    // "phi <= 4.18 & phi <= 7.525"; the empty conjunction prints as "true".
    std::string to_string() const;
    // Redundant bounds on the same feature reduced to the tightest ones.
    std::vector<Constraint> collapsed() const;
};

class DecisionTree {
public:
    // CART regression fit: greedy best split by squared-error reduction,
    // thresholds at midpoints of adjacent distinct feature values, ties
    // broken toward the lowest feature index and then lowest threshold.
    static DecisionTree fit(const RobustnessDataset& data, const FitParams& params = {});

    // Hand assembly (tests, worked figures). Nodes must form a binary tree
    // rooted at index 0 with consistent parent links.
    static DecisionTree from_nodes(std::vector<Node> nodes,
                                   std::vector<std::string> feature_names);

    std::size_t feature_count() const { return feature_names_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }

    // Index of the leaf x routes to.
    int route(const std::vector<double>& x) const;
    double predict(const std::vector<double>& x) const;

    // All leaves with predicted robustness < 0, most violating first.
    std::vector<int> falsifying_leaves() const;
    // All leaves whose |value| attains the minimum; only callable when no
    // falsifying leaf exists.
    std::vector<int> nearest_leaves() const;

    Explanation explanation(int leaf) const;

    std::string to_json() const;
    static DecisionTree from_json(const std::string& text);
    std::string render() const;

private:
    std::vector<Node> nodes_;
    std::vector<std::string> feature_names_;
};

// Intersects an explanation with the flattened search box; > bounds are
// nudged up by 1e-9 so the result is closed and directly sampleable.
// Returns nothing when some feature interval is void.
std::optional<Box> explanation_box(const Explanation& exp, const Box& search);

} // namespace flexifal::dtree

#endif
