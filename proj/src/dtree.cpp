#include "flexifal/dtree.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace flexifal::dtree {

namespace {

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    bool found = false;
};

double mean_in_row_order(const std::vector<double>& targets, const std::vector<std::size_t>& rows) {
    double sum = 0.0;
    for (std::size_t r : rows) sum += targets[r];
    return sum / static_cast<double>(rows.size());
}

// Best split of `rows` by squared-error reduction. Candidates are midpoints
// of adjacent distinct sorted feature values. Gains within tie_eps are
// treated as equal, so the incumbent (lowest feature index, then lowest
// threshold) survives mathematical ties regardless of rounding.
Split best_split(const std::vector<std::vector<double>>& features,
                 const std::vector<double>& targets, const std::vector<std::size_t>& rows,
                 std::size_t n_features, std::size_t min_samples_leaf) {
    const auto n = rows.size();
    double total = 0.0, total_sq = 0.0;
    for (std::size_t r : rows) {
        total += targets[r];
        total_sq += targets[r] * targets[r];
    }
    const double parent_sse = total_sq - total * total / static_cast<double>(n);
    const double tie_eps = 1e-9 * (1.0 + std::fabs(parent_sse));

    Split best;
    std::vector<std::size_t> order(rows);
    for (std::size_t f = 0; f < n_features; ++f) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return features[a][f] < features[b][f];
        });
        double left_sum = 0.0, left_sq = 0.0;
        for (std::size_t s = 1; s < n; ++s) {
            const double y = targets[order[s - 1]];
            left_sum += y;
            left_sq += y * y;
            const double a = features[order[s - 1]][f];
            const double b = features[order[s]][f];
            if (!(a < b)) continue; // candidate boundaries sit between distinct values
            if (s < min_samples_leaf || n - s < min_samples_leaf) continue;
            double thr = 0.5 * (a + b);
            if (!(thr < b)) thr = a; // keep the partition realizable under <= routing
            const double right_sum = total - left_sum;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / static_cast<double>(s)) +
                               (right_sq - right_sum * right_sum / static_cast<double>(n - s));
            const double gain = parent_sse - sse;
            if (gain > tie_eps && (!best.found || gain > best.gain + tie_eps)) {
                best = {f, thr, gain, true};
            }
        }
    }
    return best;
}

} // namespace

DecisionTree DecisionTree::fit(const RobustnessDataset& data, const FitParams& params) {
    if (data.rows() == 0) throw std::invalid_argument("cannot fit a tree on an empty dataset");
    const std::size_t n_features = data.names.size();
    for (const auto& row : data.features)
        if (row.size() != n_features)
            throw std::invalid_argument("dataset row width does not match feature names");

    DecisionTree tree;
    tree.feature_names_ = data.names;

    struct Job {
        std::vector<std::size_t> rows; // ascending dataset order
        int parent;
        bool as_left;
        int depth;
    };
    std::vector<Job> stack;
    std::vector<std::size_t> all(data.rows());
    std::iota(all.begin(), all.end(), 0);
    stack.push_back({std::move(all), -1, false, 0});

    while (!stack.empty()) {
        Job job = std::move(stack.back());
        stack.pop_back();

        const int index = static_cast<int>(tree.nodes_.size());
        tree.nodes_.emplace_back();
        tree.nodes_[index].parent = job.parent;
        tree.nodes_[index].count = job.rows.size();
        if (job.parent >= 0) {
            if (job.as_left) tree.nodes_[job.parent].left = index;
            else tree.nodes_[job.parent].right = index;
        }

        bool pure = true;
        for (std::size_t r : job.rows)
            if (data.robustness[r] != data.robustness[job.rows.front()]) {
                pure = false;
                break;
            }
        Split split;
        const bool depth_capped = params.max_depth >= 0 && job.depth >= params.max_depth;
        if (!pure && !depth_capped && job.rows.size() >= params.min_samples_split)
            split = best_split(data.features, data.robustness, job.rows, n_features,
                               params.min_samples_leaf);

        if (!split.found) {
            tree.nodes_[index].value = mean_in_row_order(data.robustness, job.rows);
            continue;
        }

        tree.nodes_[index].feature = split.feature;
        tree.nodes_[index].threshold = split.threshold;
        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : job.rows) {
            if (data.features[r][split.feature] <= split.threshold) left_rows.push_back(r);
            else right_rows.push_back(r);
        }
        // Right is pushed first so the left subtree is laid out immediately
        // after its parent (preorder node numbering).
        stack.push_back({std::move(right_rows), index, false, job.depth + 1});
        stack.push_back({std::move(left_rows), index, true, job.depth + 1});
    }
    return tree;
}

DecisionTree DecisionTree::from_nodes(std::vector<Node> nodes,
                                      std::vector<std::string> feature_names) {
    if (nodes.empty()) throw std::invalid_argument("a tree needs at least one node");
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
        const Node& n = nodes[i];
        if (n.is_leaf() != (n.right < 0))
            throw std::invalid_argument("node " + std::to_string(i) + " has a single child");
        for (int child : {n.left, n.right}) {
            if (child < 0) continue;
            if (child >= static_cast<int>(nodes.size()) || nodes[child].parent != i)
                throw std::invalid_argument("node " + std::to_string(i) +
                                            " has inconsistent child links");
        }
    }
    if (nodes[0].parent != -1) throw std::invalid_argument("node 0 must be the root");
    DecisionTree tree;
    tree.nodes_ = std::move(nodes);
    tree.feature_names_ = std::move(feature_names);
    return tree;
}

int DecisionTree::route(const std::vector<double>& x) const {
    if (x.size() != feature_count())
        throw std::invalid_argument("predict expects " + std::to_string(feature_count()) +
                                    " features, got " + std::to_string(x.size()));
    int i = 0;
    while (!nodes_[i].is_leaf())
        i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return i;
}

double DecisionTree::predict(const std::vector<double>& x) const { return nodes_[route(x)].value; }

std::vector<int> DecisionTree::falsifying_leaves() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
        if (nodes_[i].is_leaf() && nodes_[i].value < 0.0) out.push_back(i);
    std::stable_sort(out.begin(), out.end(),
                     [&](int a, int b) { return nodes_[a].value < nodes_[b].value; });
    return out;
}

std::vector<int> DecisionTree::nearest_leaves() const {
    if (!falsifying_leaves().empty())
        throw std::logic_error("nearest_leaves called while falsifying leaves exist");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_)
        if (n.is_leaf()) best = std::min(best, std::fabs(n.value));
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
        if (nodes_[i].is_leaf() && std::fabs(nodes_[i].value) == best) out.push_back(i);
    return out;
}

Explanation DecisionTree::explanation(int leaf) const {
    if (leaf < 0 || leaf >= static_cast<int>(nodes_.size()) || !nodes_[leaf].is_leaf())
        throw std::invalid_argument("explanation expects a leaf index of this tree");
    Explanation exp;
    exp.feature_names = feature_names_;
    int current = leaf;
    while (nodes_[current].parent >= 0) {
        const int parent = nodes_[current].parent;
        const bool was_left = nodes_[parent].left == current;
        exp.constraints.push_back(
            {nodes_[parent].feature, was_left, nodes_[parent].threshold});
        current = parent;
    }
    return exp;
}

std::string Explanation::to_string() const {
    if (constraints.empty()) return "true";
    std::string out;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        if (i) out += " & ";
        const auto& c = constraints[i];
        const std::string name = c.feature < feature_names.size()
                                     ? feature_names[c.feature]
                                     : "f" + std::to_string(c.feature);
        out += name + (c.is_le ? " <= " : " > ") + format_double(c.threshold);
    }
    return out;
}

std::vector<Constraint> Explanation::collapsed() const {
    std::vector<Constraint> out;
    std::vector<std::size_t> seen;
    for (const auto& c : constraints) {
        if (std::find(seen.begin(), seen.end(), c.feature) != seen.end()) continue;
        seen.push_back(c.feature);
        bool has_le = false, has_gt = false;
        double le = 0.0, gt = 0.0;
        for (const auto& d : constraints) {
            if (d.feature != c.feature) continue;
            if (d.is_le) {
                le = has_le ? std::min(le, d.threshold) : d.threshold;
                has_le = true;
            } else {
                gt = has_gt ? std::max(gt, d.threshold) : d.threshold;
                has_gt = true;
            }
        }
        if (has_gt) out.push_back({c.feature, false, gt});
        if (has_le) out.push_back({c.feature, true, le});
    }
    return out;
}

std::optional<Box> explanation_box(const Explanation& exp, const Box& search) {
    search.validate();
    Box out = search;
    for (const auto& c : exp.constraints) {
        if (c.feature >= out.dim())
            throw std::invalid_argument("explanation constraint outside the search box");
        if (c.is_le) out.highs[c.feature] = std::min(out.highs[c.feature], c.threshold);
        else out.lows[c.feature] = std::max(out.lows[c.feature], c.threshold + 1e-9);
    }
    for (std::size_t i = 0; i < out.dim(); ++i)
        if (out.lows[i] > out.highs[i]) return std::nullopt;
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json node_to_json(const std::vector<Node>& nodes, int i) {
    const Node& n = nodes[i];
    if (n.is_leaf()) return nlohmann::json{{"value", n.value}, {"count", n.count}};
    return nlohmann::json{{"feature", n.feature},
                          {"threshold", n.threshold},
                          {"count", n.count},
                          {"left", node_to_json(nodes, n.left)},
                          {"right", node_to_json(nodes, n.right)}};
}

int node_from_json(const nlohmann::json& j, std::vector<Node>& nodes, int parent) {
    const int index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[index].parent = parent;
    if (j.contains("value")) {
        nodes[index].value = j.at("value").get<double>();
        nodes[index].count = j.value("count", std::size_t{0});
    } else {
        nodes[index].feature = j.at("feature").get<std::size_t>();
        nodes[index].threshold = j.at("threshold").get<double>();
        nodes[index].count = j.value("count", std::size_t{0});
        const int left = node_from_json(j.at("left"), nodes, index);
        nodes[index].left = left;
        const int right = node_from_json(j.at("right"), nodes, index);
        nodes[index].right = right;
    }
    return index;
}

} // namespace

std::string DecisionTree::to_json() const {
    nlohmann::json j;
    j["feature_names"] = feature_names_;
    j["root"] = node_to_json(nodes_, 0);
    return j.dump(2);
}

DecisionTree DecisionTree::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DecisionTree tree;
    tree.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
    node_from_json(j.at("root"), tree.nodes_, -1);
    return tree;
}

namespace {

void render_node(const std::vector<Node>& nodes, const std::vector<std::string>& names, int i,
                 int depth, const char* label, std::string& out) {
    out.append(static_cast<std::size_t>(2 * depth), ' ');
    out += label;
    const Node& n = nodes[i];
    if (n.is_leaf()) {
        out += "leaf rho=" + format_double(n.value) + " n=" + std::to_string(n.count) + "\n";
        return;
    }
    const std::string name =
        n.feature < names.size() ? names[n.feature] : "f" + std::to_string(n.feature);
    out += "[" + name + " <= " + format_double(n.threshold) + "] n=" + std::to_string(n.count) +
           "\n";
    render_node(nodes, names, n.left, depth + 1, "yes: ", out);
    render_node(nodes, names, n.right, depth + 1, "no:  ", out);
}

} // namespace

std::string DecisionTree::render() const {
    std::string out;
    render_node(nodes_, feature_names_, 0, 0, "", out);
    return out;
}

} // namespace flexifal::dtree
