#ifndef SIFOTL_WEIGHTED_TREE_HPP
#define SIFOTL_WEIGHTED_TREE_HPP

// Shallow CART classifier on sample weights × class weights, minimizing
// weighted Gini impurity. Numeric splits are "x <= t" with a learned side for
// missing values; categorical splits send a level subset left.

#include <sifotl/detail/numfmt.hpp>
#include <sifotl/errors.hpp>
#include <sifotl/features.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace sifotl {

/// Row-level probabilities from the twin Stage-1 classifiers.
struct ProbEstimates {
    std::vector<double> p_c;
    std::vector<double> p_n;

    std::size_t size() const { return p_c.size(); }
};

/// One side of a split, usable as a predicate on a feature matrix row.
struct TreeCondition {
    enum class Kind { le, gt, in_set, not_in_set };

    std::string feature;
    Kind kind = Kind::le;
    double threshold = 0.0;
    bool missing_included = false; ///< numeric: does a missing value satisfy the condition
    std::vector<std::string> categories;

    bool matches(const FeatureColumn& col, std::size_t row) const {
        if (kind == Kind::in_set || kind == Kind::not_in_set) {
            const auto& level = col.levels[static_cast<std::size_t>(col.codes[row])];
            const bool found = std::find(categories.begin(), categories.end(), level) != categories.end();
            return kind == Kind::in_set ? found : !found;
        }
        const double v = col.values[row];
        if (std::isnan(v)) return missing_included;
        return kind == Kind::le ? v <= threshold : v > threshold;
    }

    std::string describe() const {
        if (kind == Kind::in_set || kind == Kind::not_in_set) {
            std::string out = feature + (kind == Kind::in_set ? " in {" : " not in {");
            for (std::size_t i = 0; i < categories.size(); ++i) out += (i ? ", '" : "'") + categories[i] + "'";
            return out + "}";
        }
        std::string out = feature + (kind == Kind::le ? " <= " : " > ") + detail::format_double(threshold);
        if (missing_included) out = "(" + out + " or " + feature + " is missing)";
        return out;
    }
};

inline void to_json(nlohmann::json& j, const TreeCondition& c) {
    j = nlohmann::json{{"feature", c.feature}};
    switch (c.kind) {
    case TreeCondition::Kind::le: j["op"] = "<="; break;
    case TreeCondition::Kind::gt: j["op"] = ">"; break;
    case TreeCondition::Kind::in_set: j["op"] = "in"; break;
    case TreeCondition::Kind::not_in_set: j["op"] = "not in"; break;
    }
    if (c.kind == TreeCondition::Kind::le || c.kind == TreeCondition::Kind::gt) {
        j["threshold"] = detail::format_double(c.threshold);
        j["missing_included"] = c.missing_included;
    } else {
        j["categories"] = c.categories;
    }
}

inline void from_json(const nlohmann::json& j, TreeCondition& c) {
    c.feature = j.at("feature").get<std::string>();
    const auto op = j.at("op").get<std::string>();
    if (op == "<=" || op == ">") {
        c.kind = op == "<=" ? TreeCondition::Kind::le : TreeCondition::Kind::gt;
        auto t = detail::parse_double(j.at("threshold").get<std::string>());
        if (!t) throw ValidationError("bad rule threshold");
        c.threshold = *t;
        c.missing_included = j.at("missing_included").get<bool>();
    } else if (op == "in" || op == "not in") {
        c.kind = op == "in" ? TreeCondition::Kind::in_set : TreeCondition::Kind::not_in_set;
        c.categories = j.at("categories").get<std::vector<std::string>>();
    } else {
        throw ValidationError("unknown rule operator '" + op + "'");
    }
}

using TreeRule = std::vector<TreeCondition>;

inline std::string describe(const TreeRule& rule) {
    if (rule.empty()) return "(all rows)";
    std::string out;
    for (std::size_t i = 0; i < rule.size(); ++i) out += (i ? " and " : "") + rule[i].describe();
    return out;
}

inline bool rule_matches(const TreeRule& rule, const FeatureMatrix& x, std::size_t row) {
    return std::all_of(rule.begin(), rule.end(), [&](const TreeCondition& c) { return c.matches(x.columns[x.index(c.feature)], row); });
}

struct WeightedTreeNode {
    int feature = -1; ///< -1 marks a leaf
    bool categorical = false;
    double threshold = 0.0;
    bool missing_left = false;
    std::vector<std::string> left_levels;
    int left = -1;
    int right = -1;
    int leaf = -1; ///< index into leaves for leaf nodes
    double impurity_decrease = 0.0;
};

struct WeightedLeaf {
    int id = 0;
    int predicted_class = 0;
    double weight_mass = 0.0;      ///< Σ w_i
    double class_mass[2] = {0, 0}; ///< effective weight per class
    double mean_pc = 0.0;          ///< w-weighted mean p_C
    double mean_pn = 0.0;          ///< w-weighted mean p_N
    std::vector<std::size_t> rows;
    TreeRule path;
};

struct WeightedTree {
    std::vector<WeightedTreeNode> nodes;
    std::vector<WeightedLeaf> leaves; ///< preorder, left first
    int max_depth = 5;
    std::size_t rows = 0;
    std::vector<std::string> feature_names;

    /// Leaf index reached by `row` of `x`.
    std::size_t route(const FeatureMatrix& x, std::size_t row) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0) {
            const auto& n = nodes[i];
            const auto& col = x.columns[static_cast<std::size_t>(n.feature)];
            bool left;
            if (n.categorical) {
                const auto& level = col.levels[static_cast<std::size_t>(col.codes[row])];
                left = std::find(n.left_levels.begin(), n.left_levels.end(), level) != n.left_levels.end();
            } else {
                const double v = col.values[row];
                left = std::isnan(v) ? n.missing_left : v <= n.threshold;
            }
            i = static_cast<std::size_t>(left ? n.left : n.right);
        }
        return static_cast<std::size_t>(nodes[i].leaf);
    }

    /// Compact preorder description of splits and leaf classes.
    std::string signature() const {
        std::string out;
        signature_at(0, out);
        return out;
    }

private:
    void signature_at(std::size_t i, std::string& out) const {
        const auto& n = nodes[i];
        if (n.feature < 0) {
            out += "L" + std::to_string(leaves[static_cast<std::size_t>(n.leaf)].predicted_class) + ";";
            return;
        }
        out += "S" + std::to_string(n.feature);
        if (n.categorical) {
            out += "{";
            for (const auto& l : n.left_levels) out += l + ",";
            out += "}";
        } else {
            out += "<=" + detail::format_double(n.threshold) + (n.missing_left ? "mL" : "mR");
        }
        out += "(";
        signature_at(static_cast<std::size_t>(n.left), out);
        signature_at(static_cast<std::size_t>(n.right), out);
        out += ")";
    }
};

struct WeightedTreeOptions {
    int max_depth = 5;
    std::array<double, 2> class_weights{1.0, 1.0};
    double min_leaf_weight = 0.0; ///< minimum effective weight per child
};

namespace detail {

// Weighted Gini impurity mass: W · (1 − p0² − p1²) = 2·W0·W1 / W.
inline double gini_mass(double w0, double w1) {
    const double w = w0 + w1;
    return w > 0.0 ? 2.0 * w0 * w1 / w : 0.0;
}

struct WtSplit {
    double decrease = 0.0;
    int feature = -1;
    bool categorical = false;
    double threshold = 0.0;
    bool missing_left = false;
    std::vector<int> left_codes;
};

class WeightedTreeBuilder {
public:
    WeightedTreeBuilder(const FeatureMatrix& x, std::span<const std::uint8_t> y, std::span<const double> eff, const WeightedTreeOptions& opt)
        : x_(x), y_(y), eff_(eff), opt_(opt) {}

    void build(WeightedTree& tree) {
        std::vector<std::size_t> all(x_.rows);
        std::iota(all.begin(), all.end(), 0);
        tree.nodes.clear();
        tree.leaves.clear();
        grow(tree, std::move(all), 0, {});
    }

private:
    int grow(WeightedTree& tree, std::vector<std::size_t> rows, int depth, TreeRule path) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        double w[2] = {0, 0};
        for (auto r : rows) w[y_[r] ? 1 : 0] += eff_[r];
        const double total = w[0] + w[1];

        WtSplit best;
        if (depth < opt_.max_depth && w[0] > 0.0 && w[1] > 0.0) best = find_split(rows, w[0], w[1]);
        if (best.feature < 0 || !(best.decrease > 1e-12 * total)) {
            make_leaf(tree, id, rows, w, std::move(path));
            return id;
        }

        const auto& col = x_.columns[static_cast<std::size_t>(best.feature)];
        std::vector<std::size_t> left_rows, right_rows;
        std::vector<std::string> left_levels;
        for (int code : best.left_codes) left_levels.push_back(col.levels[static_cast<std::size_t>(code)]);
        std::sort(left_levels.begin(), left_levels.end());
        for (auto r : rows) {
            bool left;
            if (best.categorical) left = std::find(best.left_codes.begin(), best.left_codes.end(), col.codes[r]) != best.left_codes.end();
            else left = std::isnan(col.values[r]) ? best.missing_left : col.values[r] <= best.threshold;
            (left ? left_rows : right_rows).push_back(r);
        }

        TreeCondition lc, rc;
        lc.feature = rc.feature = col.name;
        if (best.categorical) {
            lc.kind = TreeCondition::Kind::in_set;
            rc.kind = TreeCondition::Kind::not_in_set;
            lc.categories = rc.categories = left_levels;
        } else {
            lc.kind = TreeCondition::Kind::le;
            rc.kind = TreeCondition::Kind::gt;
            lc.threshold = rc.threshold = best.threshold;
            lc.missing_included = best.missing_left;
            rc.missing_included = !best.missing_left;
        }

        {
            auto& node = tree.nodes[static_cast<std::size_t>(id)];
            node.feature = best.feature;
            node.categorical = best.categorical;
            node.threshold = best.threshold;
            node.missing_left = best.missing_left;
            node.left_levels = left_levels;
            node.impurity_decrease = best.decrease;
        }
        TreeRule lpath = path, rpath = std::move(path);
        lpath.push_back(std::move(lc));
        rpath.push_back(std::move(rc));
        const int l = grow(tree, std::move(left_rows), depth + 1, std::move(lpath));
        const int r = grow(tree, std::move(right_rows), depth + 1, std::move(rpath));
        tree.nodes[static_cast<std::size_t>(id)].left = l;
        tree.nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    void make_leaf(WeightedTree& tree, int id, std::vector<std::size_t> rows, const double w[2], TreeRule path) {
        WeightedLeaf leaf;
        leaf.id = static_cast<int>(tree.leaves.size());
        leaf.class_mass[0] = w[0];
        leaf.class_mass[1] = w[1];
        leaf.predicted_class = w[1] > w[0] ? 1 : 0;
        leaf.rows = std::move(rows);
        leaf.path = std::move(path);
        tree.nodes[static_cast<std::size_t>(id)].leaf = leaf.id;
        tree.leaves.push_back(std::move(leaf));
    }

    bool admissible(double l0, double l1, double r0, double r1) const {
        const double lw = l0 + l1, rw = r0 + r1;
        if (!(lw > 0.0) || !(rw > 0.0)) return false;
        return lw >= opt_.min_leaf_weight && rw >= opt_.min_leaf_weight;
    }

    WtSplit find_split(const std::vector<std::size_t>& rows, double w0, double w1) const {
        const double parent = gini_mass(w0, w1);
        WtSplit best;
        auto consider = [&](double l0, double l1, double r0, double r1, auto&& fill) {
            if (!admissible(l0, l1, r0, r1)) return;
            const double dec = parent - gini_mass(l0, l1) - gini_mass(r0, r1);
            if (dec > best.decrease) {
                best.decrease = dec;
                fill();
            }
        };

        for (std::size_t f = 0; f < x_.cols(); ++f) {
            const auto& col = x_.columns[f];
            if (col.categorical) {
                std::vector<std::array<double, 2>> per(col.levels.size(), {0.0, 0.0});
                std::vector<char> present(col.levels.size(), 0);
                for (auto r : rows) {
                    if (!(eff_[r] > 0.0)) continue;
                    const auto c = static_cast<std::size_t>(col.codes[r]);
                    per[c][y_[r] ? 1 : 0] += eff_[r];
                    present[c] = 1;
                }
                std::vector<int> order;
                for (std::size_t c = 0; c < per.size(); ++c)
                    if (present[c]) order.push_back(static_cast<int>(c));
                if (order.size() < 2) continue;
                std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                    const auto& pa = per[static_cast<std::size_t>(a)];
                    const auto& pb = per[static_cast<std::size_t>(b)];
                    return pa[1] / (pa[0] + pa[1]) < pb[1] / (pb[0] + pb[1]);
                });
                double l0 = 0, l1 = 0;
                for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                    l0 += per[static_cast<std::size_t>(order[k])][0];
                    l1 += per[static_cast<std::size_t>(order[k])][1];
                    consider(l0, l1, w0 - l0, w1 - l1, [&] {
                        best.feature = static_cast<int>(f);
                        best.categorical = true;
                        best.left_codes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k + 1));
                        std::sort(best.left_codes.begin(), best.left_codes.end());
                    });
                }
                continue;
            }

            std::vector<std::size_t> present;
            double m0 = 0, m1 = 0;
            for (auto r : rows) {
                if (!(eff_[r] > 0.0)) continue;
                if (std::isnan(col.values[r])) (y_[r] ? m1 : m0) += eff_[r];
                else present.push_back(r);
            }
            if (present.size() < 2) continue;
            std::stable_sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) { return col.values[a] < col.values[b]; });
            const double nm0 = w0 - m0, nm1 = w1 - m1;
            double l0 = 0, l1 = 0;
            for (std::size_t i = 0; i + 1 < present.size(); ++i) {
                const auto r = present[i];
                (y_[r] ? l1 : l0) += eff_[r];
                const double v = col.values[r], next = col.values[present[i + 1]];
                if (v == next) continue;
                const double threshold = v + (next - v) / 2.0;
                for (int side = 0; side < 2; ++side) {
                    const bool miss_left = side == 0;
                    if (miss_left && m0 == 0.0 && m1 == 0.0) continue;
                    const double L0 = l0 + (miss_left ? m0 : 0.0), L1 = l1 + (miss_left ? m1 : 0.0);
                    const double R0 = (nm0 - l0) + (miss_left ? 0.0 : m0), R1 = (nm1 - l1) + (miss_left ? 0.0 : m1);
                    consider(L0, L1, R0, R1, [&] {
                        best.feature = static_cast<int>(f);
                        best.categorical = false;
                        best.threshold = threshold;
                        best.missing_left = miss_left;
                        best.left_codes.clear();
                    });
                }
            }
        }
        return best;
    }

    const FeatureMatrix& x_;
    std::span<const std::uint8_t> y_;
    std::span<const double> eff_;
    const WeightedTreeOptions& opt_;
};

} // namespace detail

/// Fill weight mass and w-weighted mean p_C / p_N for every leaf. Leaves whose
/// rows all carry zero weight fall back to unweighted means.
inline void annotate_leaves(WeightedTree& tree, std::span<const double> w, const ProbEstimates& p) {
    if (p.p_c.size() != tree.rows || p.p_n.size() != tree.rows || w.size() != tree.rows)
        throw ValidationError("annotate_leaves: vector lengths do not match the tree's rows");
    for (auto& leaf : tree.leaves) {
        double mass = 0, sc = 0, sn = 0, uc = 0, un = 0;
        for (auto r : leaf.rows) {
            mass += w[r];
            sc += w[r] * p.p_c[r];
            sn += w[r] * p.p_n[r];
            uc += p.p_c[r];
            un += p.p_n[r];
        }
        leaf.weight_mass = mass;
        if (mass > 0.0) {
            leaf.mean_pc = sc / mass;
            leaf.mean_pn = sn / mass;
        } else if (!leaf.rows.empty()) {
            leaf.mean_pc = uc / static_cast<double>(leaf.rows.size());
            leaf.mean_pn = un / static_cast<double>(leaf.rows.size());
        }
    }
}

/// Fit on effective row weight w_i · class_weight(ỹ_i). Leaf statistics are
/// filled when probabilities are supplied.
inline WeightedTree fit_weighted_tree(const FeatureMatrix& x, std::span<const std::uint8_t> y_tilde, std::span<const double> w,
                                      const WeightedTreeOptions& opt, const ProbEstimates* probabilities = nullptr) {
    if (x.rows == 0 || x.cols() == 0) throw ValidationError("fit_weighted_tree: empty input");
    if (y_tilde.size() != x.rows || w.size() != x.rows) throw ValidationError("fit_weighted_tree: |X|, |y| and |w| differ");
    if (opt.max_depth < 0) throw ValidationError("fit_weighted_tree: max_depth must be nonnegative");
    if (!(opt.class_weights[0] > 0.0) || !(opt.class_weights[1] > 0.0)) throw ValidationError("fit_weighted_tree: class weights must be positive");
    std::vector<double> eff(x.rows);
    bool any = false;
    for (std::size_t i = 0; i < x.rows; ++i) {
        if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ValidationError("fit_weighted_tree: weights must be finite and nonnegative");
        eff[i] = w[i] * opt.class_weights[y_tilde[i] ? 1 : 0];
        any = any || eff[i] > 0.0;
    }
    if (!any) throw ValidationError("fit_weighted_tree: all weights are zero");

    WeightedTree tree;
    tree.max_depth = opt.max_depth;
    tree.rows = x.rows;
    tree.feature_names = x.names();
    detail::WeightedTreeBuilder(x, y_tilde, eff, opt).build(tree);
    if (probabilities) annotate_leaves(tree, w, *probabilities);
    return tree;
}

} // namespace sifotl

#endif // SIFOTL_WEIGHTED_TREE_HPP
