#ifndef SIFOTL_PARETO_HPP
#define SIFOTL_PARETO_HPP

// α-weighted tree search, knee selection on the (M_signal, M_noise) frontier,
// and mass-greedy extraction of the final segment.

#include <sifotl/stats.hpp>
#include <sifotl/weighted_tree.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace sifotl {

struct WeightVector {
    static constexpr double epsilon = 1e-9;
    double alpha = 1.0;
    std::vector<double> w;
};

/// w_i = p_C / (p_C + α·p_N + ε).
inline double weight_of(double p_c, double p_n, double alpha) { return p_c / (p_c + alpha * p_n + WeightVector::epsilon); }

inline WeightVector compute_weights(const ProbEstimates& p, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("compute_weights: alpha must be positive");
    if (p.p_c.size() != p.p_n.size()) throw ValidationError("compute_weights: p_C and p_N lengths differ");
    WeightVector out;
    out.alpha = alpha;
    out.w.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double c = p.p_c[i], n = p.p_n[i];
        if (!std::isfinite(c) || !std::isfinite(n) || c < 0.0 || n < 0.0 || c > 1.0 || n > 1.0)
            throw ValidationError("compute_weights: probabilities must be finite and in [0,1]");
        out.w[i] = weight_of(c, n, alpha);
    }
    return out;
}

/// Σ over all leaves of leaf weight mass × leaf mean p_C.
inline double m_signal(const WeightedTree& tree) {
    double s = 0.0;
    for (const auto& l : tree.leaves) s += l.weight_mass * l.mean_pc;
    return s;
}

struct NoiseScore {
    double value = 1.0;
    bool degenerate = false; ///< fewer than 2 leaves or no variance in a leaf-mean vector
};

/// 1 − |corr(p̄_C, p̄_N)| across leaves; optionally weighted by leaf mass.
inline NoiseScore m_noise(const WeightedTree& tree, bool mass_weighted = false) {
    if (tree.leaves.size() < 2) return {1.0, true};
    std::vector<double> c, n, w;
    for (const auto& l : tree.leaves) {
        c.push_back(l.mean_pc);
        n.push_back(l.mean_pn);
        w.push_back(mass_weighted ? l.weight_mass : 1.0);
    }
    double sw = 0, mc = 0, mn = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        sw += w[i];
        mc += w[i] * c[i];
        mn += w[i] * n[i];
    }
    if (!(sw > 0.0)) return {1.0, true};
    mc /= sw;
    mn /= sw;
    double scc = 0, snn = 0, scn = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        scc += w[i] * (c[i] - mc) * (c[i] - mc);
        snn += w[i] * (n[i] - mn) * (n[i] - mn);
        scn += w[i] * (c[i] - mc) * (n[i] - mn);
    }
    if (!(scc > 0.0) || !(snn > 0.0)) return {1.0, true};
    const double r = std::clamp(scn / std::sqrt(scc * snn), -1.0, 1.0);
    return {1.0 - std::abs(r), false};
}

struct ParetoPoint {
    double alpha = 0.0;
    double m_signal = 0.0;
    double m_noise = 1.0;
    bool noise_degenerate = false;
    std::shared_ptr<const WeightedTree> tree;
};

/// Indices of points not dominated in (max M_signal, max M_noise).
inline std::vector<std::size_t> nondominated(std::span<const ParetoPoint> pts) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
            if (i == j) continue;
            const bool ge = pts[j].m_signal >= pts[i].m_signal && pts[j].m_noise >= pts[i].m_noise;
            const bool gt = pts[j].m_signal > pts[i].m_signal || pts[j].m_noise > pts[i].m_noise;
            dominated = ge && gt;
        }
        if (!dominated) out.push_back(i);
    }
    return out;
}

/// Index of the knee: max distance to the chord between the normalized
/// frontier extremes; near-ties resolve to the smallest α.
inline std::size_t knee_index(std::span<const ParetoPoint> pts) {
    if (pts.empty()) throw ValidationError("knee_point: no points");
    const auto front = nondominated(pts);
    auto smaller_alpha = [&](std::size_t a, std::size_t b) { return pts[a].alpha < pts[b].alpha || (pts[a].alpha == pts[b].alpha && a < b); };
    if (front.size() == 1) return front[0];

    double smin = INFINITY, smax = -INFINITY, nmin = INFINITY, nmax = -INFINITY;
    for (auto i : front) {
        smin = std::min(smin, pts[i].m_signal);
        smax = std::max(smax, pts[i].m_signal);
        nmin = std::min(nmin, pts[i].m_noise);
        nmax = std::max(nmax, pts[i].m_noise);
    }
    auto norm = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
    std::vector<std::array<double, 2>> q;
    for (auto i : front) q.push_back({norm(pts[i].m_signal, smin, smax), norm(pts[i].m_noise, nmin, nmax)});

    // Extremes: best signal (then best noise) and best noise (then best signal).
    std::size_t a = 0, b = 0;
    for (std::size_t k = 1; k < q.size(); ++k) {
        if (q[k][0] > q[a][0] || (q[k][0] == q[a][0] && q[k][1] > q[a][1])) a = k;
        if (q[k][1] > q[b][1] || (q[k][1] == q[b][1] && q[k][0] > q[b][0])) b = k;
    }
    const double dx = q[b][0] - q[a][0], dy = q[b][1] - q[a][1];
    const double len = std::hypot(dx, dy);

    std::vector<double> d(q.size(), 0.0);
    for (std::size_t k = 0; k < q.size(); ++k)
        if (len > 0.0) d[k] = std::abs(dx * (q[k][1] - q[a][1]) - dy * (q[k][0] - q[a][0])) / len;
    const double dmax = *std::max_element(d.begin(), d.end());
    constexpr double tie_tol = 1e-9;
    std::size_t best = pts.size();
    for (std::size_t k = 0; k < q.size(); ++k)
        if (d[k] >= dmax - tie_tol && (best == pts.size() || smaller_alpha(front[k], best))) best = front[k];
    return best;
}

inline double knee_point(std::span<const ParetoPoint> pts) { return pts[knee_index(pts)].alpha; }

inline std::vector<double> default_alpha_grid() { return {2, 3, 4, 5, 6, 7, 8, 9, 10}; }

struct SearchOptions {
    WeightedTreeOptions tree{5, {1.0, 1.0}, 0.0};
    bool mass_weighted_noise = false;
    unsigned threads = 0; ///< 0 = hardware concurrency
};

struct SearchResult {
    std::size_t best = 0;
    double alpha = 0.0;
    std::vector<ParetoPoint> points;

    const WeightedTree& tree() const { return *points[best].tree; }
};

inline ParetoPoint evaluate_alpha(const FeatureMatrix& x, std::span<const std::uint8_t> y_tilde, const ProbEstimates& p, double alpha,
                                  const SearchOptions& opt) {
    const auto w = compute_weights(p, alpha);
    auto tree = std::make_shared<WeightedTree>(fit_weighted_tree(x, y_tilde, w.w, opt.tree, &p));
    const auto noise = m_noise(*tree, opt.mass_weighted_noise);
    return ParetoPoint{alpha, m_signal(*tree), noise.value, noise.degenerate, std::move(tree)};
}

/// Fits one tree per α (in parallel when threads allow), then picks the knee.
inline SearchResult weighted_tree_search(const FeatureMatrix& x, std::span<const std::uint8_t> y_tilde, const ProbEstimates& p,
                                         std::span<const double> grid, const SearchOptions& opt = {}) {
    if (grid.empty()) throw ValidationError("weighted_tree_search: empty alpha grid");
    if (p.size() != x.rows || y_tilde.size() != x.rows) throw ValidationError("weighted_tree_search: row counts differ");
    SearchResult out;
    out.points.resize(grid.size());
    unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    if (threads <= 1 || grid.size() == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) out.points[i] = evaluate_alpha(x, y_tilde, p, grid[i], opt);
    } else {
        for (std::size_t start = 0; start < grid.size(); start += threads) {
            std::vector<std::future<ParetoPoint>> jobs;
            const auto end = std::min(grid.size(), start + threads);
            for (std::size_t i = start; i < end; ++i)
                jobs.push_back(std::async(std::launch::async, [&, i] { return evaluate_alpha(x, y_tilde, p, grid[i], opt); }));
            for (std::size_t i = start; i < end; ++i) out.points[i] = jobs[i - start].get();
        }
    }
    out.best = knee_index(out.points);
    out.alpha = out.points[out.best].alpha;
    return out;
}

struct Segment {
    std::vector<std::uint8_t> mask;
    std::vector<TreeRule> rules;
    std::vector<int> leaf_ids;
    double covered_mass = 0.0; ///< Σ p_C over the mask
    double total_mass = 0.0;   ///< Σ p_C over all rows
    double tau = 1.0;
    bool empty_rules = false;  ///< no class-1 leaf existed

    std::size_t size() const {
        std::size_t n = 0;
        for (auto m : mask) n += m;
        return n;
    }
};

/// Class-1 leaves in order of descending p̄_C (then larger mass, then smaller
/// id), accumulated until τ of the total p_C mass is covered.
inline Segment mass_greedy(const WeightedTree& tree, std::span<const double> p_c, double tau) {
    if (!(tau > 0.0) || tau > 1.0) throw ValidationError("mass_greedy: tau must be in (0,1]");
    if (p_c.size() != tree.rows) throw ValidationError("mass_greedy: p_C length does not match the tree");
    Segment seg;
    seg.tau = tau;
    seg.mask.assign(tree.rows, 0);
    for (double v : p_c) seg.total_mass += v;

    std::vector<const WeightedLeaf*> leaves;
    for (const auto& l : tree.leaves)
        if (l.predicted_class == 1) leaves.push_back(&l);
    if (leaves.empty()) {
        seg.empty_rules = true;
        return seg;
    }
    std::sort(leaves.begin(), leaves.end(), [](const WeightedLeaf* a, const WeightedLeaf* b) {
        if (a->mean_pc != b->mean_pc) return a->mean_pc > b->mean_pc;
        if (a->weight_mass != b->weight_mass) return a->weight_mass > b->weight_mass;
        return a->id < b->id;
    });
    const double target = tau * seg.total_mass;
    for (const auto* leaf : leaves) {
        for (auto r : leaf->rows) {
            seg.mask[r] = 1;
            seg.covered_mass += p_c[r];
        }
        seg.rules.push_back(leaf->path);
        seg.leaf_ids.push_back(leaf->id);
        if (seg.covered_mass >= target) break;
    }
    return seg;
}

/// Re-evaluates the segment rules (a disjunction of conjunctions) on `x`.
inline std::vector<std::uint8_t> apply_rules(const std::vector<TreeRule>& rules, const FeatureMatrix& x) {
    std::vector<std::uint8_t> mask(x.rows, 0);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (const auto& rule : rules)
            if (rule_matches(rule, x, r)) {
                mask[r] = 1;
                break;
            }
    return mask;
}

inline nlohmann::json leaf_json(const WeightedLeaf& l) {
    return {{"id", l.id},
            {"class", l.predicted_class},
            {"rows", l.rows.size()},
            {"weight_mass", l.weight_mass},
            {"mean_pc", l.mean_pc},
            {"mean_pn", l.mean_pn},
            {"rule", describe(l.path)}};
}

/// Audit document: every grid point, the chosen α and the selected tree's leaves.
inline nlohmann::json to_json_document(const SearchResult& s) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points)
        pts.push_back({{"alpha", p.alpha},
                       {"m_signal", p.m_signal},
                       {"m_noise", p.m_noise},
                       {"m_noise_degenerate", p.noise_degenerate},
                       {"leaves", p.tree ? p.tree->leaves.size() : 0}});
    nlohmann::json leaves = nlohmann::json::array();
    for (const auto& l : s.tree().leaves) leaves.push_back(leaf_json(l));
    return {{"alpha_star", s.alpha}, {"points", pts}, {"leaves", leaves}};
}

inline nlohmann::json to_json_document(const Segment& seg) {
    nlohmann::json rules = nlohmann::json::array();
    for (std::size_t i = 0; i < seg.rules.size(); ++i)
        rules.push_back({{"leaf", seg.leaf_ids[i]}, {"text", describe(seg.rules[i])}, {"conditions", seg.rules[i]}});
    return {{"rules", rules},
            {"empty_rules", seg.empty_rules},
            {"size", seg.size()},
            {"covered_mass", seg.covered_mass},
            {"total_mass", seg.total_mass},
            {"tau", seg.tau}};
}

inline std::vector<TreeRule> rules_from_json(const nlohmann::json& j) {
    std::vector<TreeRule> out;
    for (const auto& r : j.at("rules")) out.push_back(r.at("conditions").get<TreeRule>());
    return out;
}

} // namespace sifotl

#endif // SIFOTL_PARETO_HPP
