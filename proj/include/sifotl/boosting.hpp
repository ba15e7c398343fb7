#ifndef SIFOTL_BOOSTING_HPP
#define SIFOTL_BOOSTING_HPP

// Newton boosting of depth-bounded regression trees on the logistic loss.
// Exact greedy split search over pre-sorted feature columns with a learned
// default direction for missing values.

#include <sifotl/detail/numfmt.hpp>
#include <sifotl/detail/rng.hpp>
#include <sifotl/errors.hpp>
#include <sifotl/features.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace sifotl {

struct GbtConfig {
    int n_rounds = 200;
    int max_depth = 6;
    double learning_rate = 0.1;
    double l2_lambda = 1.0;
    double min_child_hessian = 1.0;
    std::uint64_t seed = 0;
    double subsample = 1.0;        ///< row fraction per round
    double colsample = 1.0;        ///< feature fraction per tree

    void validate() const {
        if (n_rounds < 0) throw ValidationError("gbt: n_rounds must be nonnegative");
        if (max_depth < 1) throw ValidationError("gbt: max_depth must be positive");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ValidationError("gbt: learning_rate must be in (0, 1]");
        if (!(l2_lambda >= 0.0)) throw ValidationError("gbt: l2_lambda must be nonnegative");
        if (!(min_child_hessian >= 0.0)) throw ValidationError("gbt: min_child_hessian must be nonnegative");
        if (!(subsample > 0.0 && subsample <= 1.0)) throw ValidationError("gbt: subsample must be in (0, 1]");
        if (!(colsample > 0.0 && colsample <= 1.0)) throw ValidationError("gbt: colsample must be in (0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const GbtConfig& c) {
    j = nlohmann::json{{"n_rounds", c.n_rounds},   {"max_depth", c.max_depth},
                       {"learning_rate", c.learning_rate}, {"l2_lambda", c.l2_lambda},
                       {"min_child_hessian", c.min_child_hessian}, {"seed", c.seed},
                       {"subsample", c.subsample}, {"colsample", c.colsample}};
}

inline void from_json(const nlohmann::json& j, GbtConfig& c) {
    GbtConfig d;
    c.n_rounds = j.value("n_rounds", d.n_rounds);
    c.max_depth = j.value("max_depth", d.max_depth);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.l2_lambda = j.value("l2_lambda", d.l2_lambda);
    c.min_child_hessian = j.value("min_child_hessian", d.min_child_hessian);
    c.seed = j.value("seed", d.seed);
    c.subsample = j.value("subsample", d.subsample);
    c.colsample = j.value("colsample", d.colsample);
    c.validate();
}

struct GbtNode {
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0; ///< x < threshold goes left
    bool missing_left = true;
    int left = -1;
    int right = -1;
    double value = 0.0; ///< leaf output (log-odds increment)
    double gain = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct GbtTree {
    std::vector<GbtNode> nodes;

    template <typename Getter>
    double predict(Getter&& x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const auto& n = nodes[i];
            const double v = x(static_cast<std::size_t>(n.feature));
            const bool left = std::isnan(v) ? n.missing_left : v < n.threshold;
            i = static_cast<std::size_t>(left ? n.left : n.right);
        }
        return nodes[i].value;
    }
};

struct GbtModel {
    double base_score = 0.0; ///< log-odds
    std::vector<GbtTree> trees;
    std::vector<std::string> feature_names;
    std::vector<double> train_loss; ///< mean log loss before round 1 and after each round
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace detail {

inline double mean_log_loss(std::span<const double> margin, std::span<const std::uint8_t> y) {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        // log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, computed stably
        const double z = y[i] ? margin[i] : -margin[i];
        total += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    }
    return total / static_cast<double>(y.size());
}

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    bool missing_left = true;
};

class TreeGrower {
public:
    TreeGrower(const DenseMatrix& x, const std::vector<std::vector<std::size_t>>& sorted,
               const std::vector<std::vector<std::size_t>>& missing, const GbtConfig& cfg)
        : x_(x), sorted_(sorted), missing_(missing), cfg_(cfg) {}

    GbtTree grow(std::span<const double> g, std::span<const double> h, std::span<const std::uint8_t> in_sample,
                 std::span<const std::uint8_t> feature_on) {
        const std::size_t n = x_.rows;
        GbtTree tree;
        tree.nodes.push_back({});
        std::vector<int> pos(n, -1);
        std::vector<double> G(1, 0.0), H(1, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            if (!in_sample[r]) continue;
            pos[r] = 0;
            G[0] += g[r];
            H[0] += h[r];
        }
        std::vector<int> frontier{0};

        for (int depth = 0; depth < cfg_.max_depth && !frontier.empty(); ++depth) {
            const std::size_t n_nodes = tree.nodes.size();
            std::vector<SplitCandidate> best(n_nodes);
            std::vector<char> active(n_nodes, 0);
            for (int id : frontier) active[static_cast<std::size_t>(id)] = 1;

            std::vector<double> gl(n_nodes), hl(n_nodes), gm(n_nodes), hm(n_nodes), last(n_nodes);
            std::vector<char> seen(n_nodes);
            for (std::size_t f = 0; f < x_.cols(); ++f) {
                if (!feature_on[f]) continue;
                std::fill(gl.begin(), gl.end(), 0.0);
                std::fill(hl.begin(), hl.end(), 0.0);
                std::fill(gm.begin(), gm.end(), 0.0);
                std::fill(hm.begin(), hm.end(), 0.0);
                std::fill(seen.begin(), seen.end(), 0);
                for (auto r : missing_[f]) {
                    const int node = pos[r];
                    if (node < 0 || !active[static_cast<std::size_t>(node)]) continue;
                    gm[static_cast<std::size_t>(node)] += g[r];
                    hm[static_cast<std::size_t>(node)] += h[r];
                }
                const auto col = x_.column(f);
                for (auto r : sorted_[f]) {
                    const int node_i = pos[r];
                    if (node_i < 0) continue;
                    const auto node = static_cast<std::size_t>(node_i);
                    if (!active[node]) continue;
                    const double v = col[r];
                    if (seen[node] && v != last[node]) evaluate(node, f, 0.5 * (last[node] + v), gl[node], hl[node], gm[node], hm[node], G[node], H[node], best[node]);
                    gl[node] += g[r];
                    hl[node] += h[r];
                    last[node] = v;
                    seen[node] = 1;
                }
            }

            std::vector<int> next;
            for (int id : frontier) {
                const auto& b = best[static_cast<std::size_t>(id)];
                if (b.feature < 0) continue;
                auto& node = tree.nodes[static_cast<std::size_t>(id)];
                node.feature = b.feature;
                node.threshold = b.threshold;
                node.missing_left = b.missing_left;
                node.gain = b.gain;
                node.left = static_cast<int>(tree.nodes.size());
                node.right = node.left + 1;
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                G.resize(tree.nodes.size(), 0.0);
                H.resize(tree.nodes.size(), 0.0);
                next.push_back(node.left);
                next.push_back(node.right);
            }
            if (next.empty()) break;
            for (std::size_t r = 0; r < n; ++r) {
                const int node_i = pos[r];
                if (node_i < 0) continue;
                const auto& node = tree.nodes[static_cast<std::size_t>(node_i)];
                if (node.is_leaf() || node.left < 0 || !active[static_cast<std::size_t>(node_i)]) continue;
                const double v = x_.at(r, static_cast<std::size_t>(node.feature));
                const bool left = std::isnan(v) ? node.missing_left : v < node.threshold;
                pos[r] = left ? node.left : node.right;
                G[static_cast<std::size_t>(pos[r])] += g[r];
                H[static_cast<std::size_t>(pos[r])] += h[r];
            }
            frontier = std::move(next);
        }

        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            auto& node = tree.nodes[i];
            if (node.is_leaf()) node.value = -G[i] / (H[i] + cfg_.l2_lambda) * cfg_.learning_rate;
        }
        return tree;
    }

private:
    double score(double g, double h) const { return g * g / (h + cfg_.l2_lambda); }

    void evaluate(std::size_t node, std::size_t f, double threshold, double gl, double hl, double gm, double hm, double G, double H,
                  SplitCandidate& best) const {
        const double parent = score(G, H);
        const double gr = G - gl - gm;
        const double hr = H - hl - hm;
        // missing rows left, then right; strict improvement keeps the first
        for (int side = 0; side < 2; ++side) {
            const bool miss_left = side == 0;
            const double GL = miss_left ? gl + gm : gl;
            const double HL = miss_left ? hl + hm : hl;
            const double GR = miss_left ? gr : gr + gm;
            const double HR = miss_left ? hr : hr + hm;
            if (HL < cfg_.min_child_hessian || HR < cfg_.min_child_hessian) continue;
            const double gain = 0.5 * (score(GL, HL) + score(GR, HR) - parent);
            if (gain > best.gain) best = {gain, static_cast<int>(f), threshold, miss_left};
        }
        (void)node;
    }

    const DenseMatrix& x_;
    const std::vector<std::vector<std::size_t>>& sorted_;
    const std::vector<std::vector<std::size_t>>& missing_;
    const GbtConfig& cfg_;
};

} // namespace detail

/// Binary logistic GBT. Requires both classes in `y`.
inline GbtModel train_gbt(const DenseMatrix& x, std::span<const std::uint8_t> y, const GbtConfig& cfg) {
    cfg.validate();
    if (x.rows == 0 || x.cols() == 0) throw ValidationError("train_gbt: empty feature matrix");
    if (y.size() != x.rows) throw ValidationError("train_gbt: label length does not match rows");
    const std::size_t n = x.rows;
    const auto pos_count = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](auto v) { return v != 0; }));
    if (pos_count == 0 || pos_count == n) throw ValidationError("train_gbt: labels contain a single class");

    std::vector<std::vector<std::size_t>> sorted(x.cols()), missing(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
        const auto col = x.column(f);
        for (std::size_t r = 0; r < n; ++r) (std::isnan(col[r]) ? missing[f] : sorted[f]).push_back(r);
        std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
    }

    GbtModel model;
    model.feature_names = x.names;
    const double prior = static_cast<double>(pos_count) / static_cast<double>(n);
    model.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> margin(n, model.base_score), g(n), h(n);
    std::vector<std::uint8_t> in_sample(n, 1), feature_on(x.cols(), 1);
    detail::Rng rng(cfg.seed);
    detail::TreeGrower grower(x, sorted, missing, cfg);
    model.train_loss.push_back(detail::mean_log_loss(margin, y));

    for (int round = 0; round < cfg.n_rounds; ++round) {
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(margin[r]);
            g[r] = p - (y[r] ? 1.0 : 0.0);
            h[r] = p * (1.0 - p);
        }
        if (cfg.subsample < 1.0)
            for (std::size_t r = 0; r < n; ++r) in_sample[r] = rng.bernoulli(cfg.subsample) ? 1 : 0;
        if (cfg.colsample < 1.0) {
            std::size_t on = 0;
            for (std::size_t f = 0; f < x.cols(); ++f) on += (feature_on[f] = rng.bernoulli(cfg.colsample) ? 1 : 0);
            if (on == 0) feature_on[rng.index(x.cols())] = 1;
        }
        auto tree = grower.grow(g, h, in_sample, feature_on);
        for (std::size_t r = 0; r < n; ++r) margin[r] += tree.predict([&](std::size_t f) { return x.at(r, f); });
        model.trees.push_back(std::move(tree));
        model.train_loss.push_back(detail::mean_log_loss(margin, y));
    }
    return model;
}

inline std::vector<double> predict_margin(const GbtModel& model, const DenseMatrix& x) {
    if (x.names != model.feature_names) throw ValidationError("predict_proba: feature names do not match the model");
    std::vector<double> out(x.rows, model.base_score);
    for (const auto& tree : model.trees)
        for (std::size_t r = 0; r < x.rows; ++r) out[r] += tree.predict([&](std::size_t f) { return x.at(r, f); });
    return out;
}

/// sigmoid(base_score + Σ tree outputs), clamped into the open interval (0, 1).
inline std::vector<double> predict_proba(const GbtModel& model, const DenseMatrix& x) {
    auto out = predict_margin(model, x);
    constexpr double lo = 1e-15;
    for (auto& v : out) v = std::clamp(sigmoid(v), lo, 1.0 - lo);
    return out;
}

/// Total split gain per feature, in model feature order.
inline std::vector<double> gain_importance(const GbtModel& model) {
    std::vector<double> out(model.feature_names.size(), 0.0);
    for (const auto& tree : model.trees)
        for (const auto& node : tree.nodes)
            if (!node.is_leaf()) out[static_cast<std::size_t>(node.feature)] += node.gain;
    return out;
}

inline double accuracy(std::span<const double> proba, std::span<const std::uint8_t> y, double threshold = 0.5) {
    if (proba.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < proba.size(); ++i) hit += (proba[i] >= threshold) == (y[i] != 0);
    return static_cast<double>(hit) / static_cast<double>(proba.size());
}

/// Stratified train/holdout index split; the holdout gets round(frac·n_class) rows of each class.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const std::uint8_t> y, double holdout_frac,
                                                                                      std::uint64_t seed) {
    std::vector<std::size_t> cls[2];
    for (std::size_t i = 0; i < y.size(); ++i) cls[y[i] ? 1 : 0].push_back(i);
    detail::Rng rng(seed);
    std::vector<std::size_t> train, hold;
    for (auto& c : cls) {
        rng.shuffle(c);
        const auto k = static_cast<std::size_t>(std::llround(holdout_frac * static_cast<double>(c.size())));
        hold.insert(hold.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k));
        train.insert(train.end(), c.begin() + static_cast<std::ptrdiff_t>(k), c.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(hold.begin(), hold.end());
    return {train, hold};
}

// Serialization: thresholds, leaf values and gains as shortest round-trip decimal strings.

inline nlohmann::json to_json_document(const GbtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) nodes.push_back({{"leaf", detail::format_double(n.value)}});
            else
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", detail::format_double(n.threshold)},
                                 {"missing_left", n.missing_left},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"gain", detail::format_double(n.gain)}});
        }
        trees.push_back({{"nodes", nodes}});
    }
    return nlohmann::json{{"format", "sifotl-gbt"}, {"version", 1}, {"base_score", detail::format_double(m.base_score)},
                          {"feature_names", m.feature_names}, {"trees", trees}};
}

inline GbtModel gbt_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sifotl-gbt" || j.value("version", 0) != 1) throw ValidationError("not a version-1 GBT model document");
    auto num = [](const nlohmann::json& v) {
        auto d = detail::parse_double(v.get<std::string>());
        if (!d) throw ValidationError("GBT model: bad number '" + v.get<std::string>() + "'");
        return *d;
    };
    GbtModel m;
    m.base_score = num(j.at("base_score"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& t : j.at("trees")) {
        GbtTree tree;
        for (const auto& n : t.at("nodes")) {
            GbtNode node;
            if (n.contains("leaf")) node.value = num(n.at("leaf"));
            else {
                node.feature = n.at("feature").get<int>();
                node.threshold = num(n.at("threshold"));
                node.missing_left = n.at("missing_left").get<bool>();
                node.left = n.at("left").get<int>();
                node.right = n.at("right").get<int>();
                node.gain = num(n.at("gain"));
                if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= m.feature_names.size())
                    throw ValidationError("GBT model: feature index out of range");
            }
            tree.nodes.push_back(node);
        }
        for (const auto& node : tree.nodes)
            if (!node.is_leaf() && (node.left <= 0 || node.right <= 0 || static_cast<std::size_t>(std::max(node.left, node.right)) >= tree.nodes.size()))
                throw ValidationError("GBT model: child index out of range");
        m.trees.push_back(std::move(tree));
    }
    return m;
}

} // namespace sifotl

#endif // SIFOTL_BOOSTING_HPP
