// Feature matrices, the Newton booster, the weighted tree, α search and
// segment extraction.

#include "support.hpp"

#include <gtest/gtest.h>

using namespace sifotl;

namespace {

DenseMatrix dense(const std::vector<std::vector<double>>& cols) {
    DenseMatrix m;
    for (std::size_t c = 0; c < cols.size(); ++c) m.add_column("f" + std::to_string(c), cols[c]);
    return m;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Best one-split Newton stump by exhaustive search over cut positions.
std::vector<double> oracle_stump(const std::vector<std::vector<double>>& cols, const std::vector<std::uint8_t>& y, double lr, double lambda) {
    const std::size_t n = y.size();
    double pos = 0;
    for (auto v : y) pos += v;
    const double base = std::log(pos / (n - pos));
    const double p0 = logistic(base);
    std::vector<double> g(n), h(n, p0 * (1 - p0));
    double G = 0, H = 0;
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = p0 - y[i];
        G += g[i];
        H += h[i];
    }
    double best = 0.0;
    std::vector<double> pred(n, base - lr * G / (H + lambda));
    for (const auto& col : cols) {
        std::vector<double> cuts(col);
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        for (std::size_t k = 1; k < cuts.size(); ++k) {
            double GL = 0, HL = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (col[i] < cuts[k]) {
                    GL += g[i];
                    HL += h[i];
                }
            const double GR = G - GL, HR = H - HL;
            const double gain = GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (H + lambda);
            if (gain > best + 1e-12) {
                best = gain;
                for (std::size_t i = 0; i < n; ++i)
                    pred[i] = base - lr * (col[i] < cuts[k] ? GL / (HL + lambda) : GR / (HR + lambda));
            }
        }
    }
    return pred;
}

FeatureMatrix random_matrix(std::mt19937_64& rng, std::size_t n, bool with_missing) {
    FeatureMatrix x;
    std::vector<double> a(n), b(n);
    std::vector<std::string> c(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<double>(rng() % 7);
        b[i] = with_missing && rng() % 6 == 0 ? std::nan("") : static_cast<double>(rng() % 5) * 0.5;
        c[i] = std::string(1, static_cast<char>('p' + rng() % 4));
    }
    x.add_numeric("a", a);
    x.add_numeric("b", b);
    x.add_categorical("c", c);
    return x;
}

} // namespace

// ---------------------------------------------------------------- features

TEST(Features, BaseMatrixExcludesNonModelingRoles) {
    auto t = parse_table("id,age,region,cost\na,30,north,10\nb,,south,12\n", fixture::small_schema());
    std::vector<std::size_t> rows{1, 0};
    const auto m = base_feature_matrix(t, rows);
    EXPECT_EQ(m.names(), (std::vector<std::string>{"age", "region"}));
    EXPECT_TRUE(std::isnan(m.columns[0].values[0]));
    EXPECT_EQ(m.columns[1].describe_value(1), "north");
}

TEST(Features, DenseEncodingOneHot) {
    FeatureMatrix m;
    m.add_numeric("x", {1.0, 2.0, 3.0});
    m.add_categorical("c", {"b", "a", "b"});
    const auto d = encode_dense(m);
    EXPECT_EQ(d.names, (std::vector<std::string>{"x", "c=a", "c=b"}));
    EXPECT_EQ(d.at(1, 1), 1.0);
    EXPECT_EQ(d.at(0, 2), 1.0);
    EXPECT_THROW(m.add_numeric("x", {1, 2, 3}), ValidationError);
    EXPECT_THROW(m.add_numeric("y", {1, 2}), ValidationError);
}

// ---------------------------------------------------------------- boosting

TEST(Boosting, SingleRoundMatchesExhaustiveStump) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + rng() % 30;
        std::vector<std::vector<double>> cols(2, std::vector<double>(n));
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            cols[0][i] = std::round(g(rng) * 4.0);
            cols[1][i] = std::round(g(rng) * 4.0);
            y[i] = (cols[0][i] + g(rng) * 2.0) > 0.0;
        }
        y[0] = 0;
        y[1] = 1;
        GbtConfig cfg;
        cfg.n_rounds = 1;
        cfg.max_depth = 1;
        cfg.min_child_hessian = 0.0;
        const auto model = train_gbt(dense(cols), y, cfg);
        const auto margin = predict_margin(model, dense(cols));
        const auto ref = oracle_stump(cols, y, cfg.learning_rate, cfg.l2_lambda);
        for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(margin[i], ref[i], 1e-9) << "trial " << trial;
    }
}

TEST(Boosting, BaseScoreIsPriorLogOdds) {
    std::vector<std::uint8_t> y{1, 0, 0, 0};
    GbtConfig cfg;
    cfg.n_rounds = 0;
    const auto m = train_gbt(dense({{1, 2, 3, 4}}), y, cfg);
    EXPECT_NEAR(m.base_score, std::log(1.0 / 3.0), 1e-12);
    EXPECT_NEAR(predict_proba(m, dense({{9}}))[0], 0.25, 1e-12);
}

TEST(Boosting, SeparableDataAndMonotoneLoss) {
    std::vector<double> x, z;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 200; ++i) {
        x.push_back(i % 2 ? 10.0 + i % 7 : -10.0 - i % 5);
        z.push_back(static_cast<double>(i % 3));
        y.push_back(i % 2);
    }
    const auto m = train_gbt(dense({x, z}), y, GbtConfig{});
    EXPECT_EQ(accuracy(predict_proba(m, dense({x, z})), y), 1.0);
    for (std::size_t i = 1; i < m.train_loss.size(); ++i) ASSERT_LE(m.train_loss[i], m.train_loss[i - 1] + 1e-12);
}

TEST(Boosting, LearnsMissingDirection) {
    std::vector<double> x;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 100; ++i) {
        const bool miss = i % 4 == 0;
        x.push_back(miss ? std::nan("") : static_cast<double>(i % 10));
        y.push_back(miss ? 1 : 0);
    }
    GbtConfig cfg;
    cfg.n_rounds = 20;
    const auto m = train_gbt(dense({x}), y, cfg);
    EXPECT_EQ(accuracy(predict_proba(m, dense({x})), y), 1.0);
}

TEST(Boosting, ErrorsAndSerialization) {
    EXPECT_THROW(train_gbt(dense({{1, 2}}), std::vector<std::uint8_t>{1, 1}, GbtConfig{}), ValidationError);
    GbtConfig bad;
    bad.learning_rate = 0.0;
    EXPECT_THROW(bad.validate(), ValidationError);

    std::vector<std::uint8_t> y{0, 1, 0, 1, 1, 0};
    GbtConfig cfg;
    cfg.n_rounds = 5;
    cfg.subsample = 0.8;
    cfg.colsample = 0.5;
    cfg.seed = 9;
    const auto x = dense({{1, 5, 2, 6, 7, 3}, {0, 1, 0, 1, 0, 0}});
    const auto m = train_gbt(x, y, cfg);
    const auto back = gbt_from_json(to_json_document(m));
    EXPECT_EQ(predict_proba(m, x), predict_proba(back, x));
    EXPECT_EQ(to_json_document(train_gbt(x, y, cfg)).dump(), to_json_document(m).dump());
    EXPECT_THROW(predict_proba(m, dense({{1}})), ValidationError);
}

TEST(Boosting, StratifiedSplitKeepsClassShares) {
    std::vector<std::uint8_t> y(100, 0);
    for (int i = 0; i < 30; ++i) y[i * 3] = 1;
    auto [train, hold] = stratified_split(y, 0.2, 4);
    EXPECT_EQ(hold.size(), 20u);
    std::size_t pos = 0;
    for (auto i : hold) pos += y[i];
    EXPECT_EQ(pos, 6u);
    EXPECT_EQ(train.size() + hold.size(), 100u);
}

// ---------------------------------------------------------------- weighted tree

TEST(WeightedTree, ReplicationEquivalence) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 5 + rng() % 40;
        auto x = random_matrix(rng, n, trial % 2 == 0);
        std::vector<std::uint8_t> y(n);
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = (x.columns[0].values[i] > 3) ^ (rng() % 5 == 0);
            w[i] = static_cast<double>(1 + rng() % 5);
        }
        const auto weighted = fit_weighted_tree(x, y, w, WeightedTreeOptions{4, {1, 1}, 0});

        // replicated, unit weights
        FeatureMatrix rx;
        std::vector<double> a, b;
        std::vector<std::string> c;
        std::vector<std::uint8_t> ry;
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < static_cast<int>(w[i]); ++k) {
                a.push_back(x.columns[0].values[i]);
                b.push_back(x.columns[1].values[i]);
                c.push_back(x.columns[2].levels[static_cast<std::size_t>(x.columns[2].codes[i])]);
                ry.push_back(y[i]);
            }
        rx.add_numeric("a", a);
        rx.add_numeric("b", b);
        rx.add_categorical("c", c);
        const auto replicated = fit_weighted_tree(rx, ry, std::vector<double>(ry.size(), 1.0), WeightedTreeOptions{4, {1, 1}, 0});
        ASSERT_EQ(weighted.signature(), replicated.signature()) << "trial " << trial;
    }
}

TEST(WeightedTree, MatchesBruteForceOracle) {
    std::mt19937_64 rng(78);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 5 + rng() % 40;
        auto x = random_matrix(rng, n, true);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = (x.columns[2].codes[i] == 1) ^ (rng() % 4 == 0);
        const auto tree = fit_weighted_tree(x, y, std::vector<double>(n, 1.0), WeightedTreeOptions{3, {1, 1}, 0});

        oracle::Data d;
        d.is_cat = {false, false, true};
        d.levels = {{}, {}, x.columns[2].levels};
        for (std::size_t i = 0; i < n; ++i)
            d.rows.push_back({{x.columns[0].values[i], x.columns[1].values[i], 0.0}, {0, 0, x.columns[2].codes[i]}, y[i]});
        const auto ref = oracle::fit(d, 3);
        ASSERT_EQ(ref.size(), tree.nodes.size()) << "trial " << trial;
        for (std::size_t k = 0; k < ref.size(); ++k) {
            const auto& a = tree.nodes[k];
            const auto& b = ref[k];
            ASSERT_EQ(a.feature, b.feature);
            if (a.feature < 0) {
                ASSERT_EQ(tree.leaves[static_cast<std::size_t>(a.leaf)].predicted_class, b.leaf_class);
                continue;
            }
            ASSERT_EQ(a.categorical, b.categorical);
            if (a.categorical) ASSERT_EQ(a.left_levels, b.left_levels);
            else {
                ASSERT_EQ(a.threshold, b.threshold);
                ASSERT_EQ(a.missing_left, b.missing_left);
            }
        }
    }
}

TEST(WeightedTree, ClassWeightFlipsMinorityLeaf) {
    // 10:1 imbalance in one region; weight 10 on class 1 makes it a tie broken
    // towards 0, weight 11 makes it class 1.
    FeatureMatrix x;
    std::vector<double> v;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 11; ++i) {
        v.push_back(1.0);
        y.push_back(i == 0);
    }
    x.add_numeric("v", v);
    const std::vector<double> w(11, 1.0);
    EXPECT_EQ(fit_weighted_tree(x, y, w, WeightedTreeOptions{5, {1, 1}, 0}).leaves[0].predicted_class, 0);
    EXPECT_EQ(fit_weighted_tree(x, y, w, WeightedTreeOptions{5, {1, 10}, 0}).leaves[0].predicted_class, 0);
    EXPECT_EQ(fit_weighted_tree(x, y, w, WeightedTreeOptions{5, {1, 11}, 0}).leaves[0].predicted_class, 1);
}

TEST(WeightedTree, DepthLeavesAndRouting) {
    std::mt19937_64 rng(5);
    auto x = random_matrix(rng, 200, true);
    std::vector<std::uint8_t> y(200);
    for (std::size_t i = 0; i < 200; ++i) y[i] = rng() % 2;
    const auto tree = fit_weighted_tree(x, y, std::vector<double>(200, 1.0), WeightedTreeOptions{2, {1, 1}, 0});
    EXPECT_LE(tree.leaves.size(), 4u);
    std::size_t covered = 0;
    for (const auto& l : tree.leaves) {
        covered += l.rows.size();
        EXPECT_LE(l.path.size(), 2u);
        for (auto r : l.rows) {
            EXPECT_EQ(tree.route(x, r), static_cast<std::size_t>(l.id));
            EXPECT_TRUE(rule_matches(l.path, x, r));
        }
    }
    EXPECT_EQ(covered, 200u);
}

TEST(WeightedTree, InputValidation) {
    FeatureMatrix x;
    x.add_numeric("v", {1, 2});
    std::vector<std::uint8_t> y{0, 1};
    EXPECT_THROW(fit_weighted_tree(x, y, std::vector<double>{1.0}, {}), ValidationError);
    EXPECT_THROW(fit_weighted_tree(x, y, std::vector<double>{-1.0, 1.0}, {}), ValidationError);
    EXPECT_THROW(fit_weighted_tree(x, y, std::vector<double>{0.0, 0.0}, {}), ValidationError);
    EXPECT_THROW(fit_weighted_tree(FeatureMatrix{}, std::vector<std::uint8_t>{}, std::vector<double>{}, {}), ValidationError);
}

TEST(WeightedTree, LeafStatsAreWeightedMeans) {
    FeatureMatrix x;
    x.add_numeric("v", {0, 0, 1, 1});
    std::vector<std::uint8_t> y{0, 0, 1, 1};
    ProbEstimates p{{0.2, 0.4, 0.9, 0.7}, {0.1, 0.3, 0.0, 0.5}};
    std::vector<double> w{1.0, 3.0, 2.0, 2.0};
    const auto tree = fit_weighted_tree(x, y, w, {}, &p);
    ASSERT_EQ(tree.leaves.size(), 2u);
    EXPECT_NEAR(tree.leaves[0].mean_pc, (0.2 + 3 * 0.4) / 4, 1e-12);
    EXPECT_NEAR(tree.leaves[0].mean_pn, (0.1 + 3 * 0.3) / 4, 1e-12);
    EXPECT_NEAR(tree.leaves[1].mean_pc, 0.8, 1e-12);
    EXPECT_NEAR(m_signal(tree), 4 * 0.35 + 4 * 0.8, 1e-12);
}

// ---------------------------------------------------------------- pareto

TEST(Pareto, WeightLaw) {
    EXPECT_NEAR(weight_of(0.5, 0.25, 2.0), 0.5 / (0.5 + 0.5 + 1e-9), 1e-15);
    EXPECT_EQ(weight_of(0.0, 0.0, 3.0), 0.0);
    EXPECT_NEAR(weight_of(1.0, 0.0, 10.0), 1.0, 1e-8);
    ProbEstimates p{{0.5, 1.5}, {0.1, 0.1}};
    EXPECT_THROW(compute_weights(p, 2.0), ValidationError);
    EXPECT_THROW(compute_weights(ProbEstimates{{0.5}, {0.1}}, 0.0), ValidationError);
}

TEST(Pareto, NoiseScore) {
    WeightedTree t;
    t.leaves.resize(3);
    const double pc[] = {0.1, 0.5, 0.9}, pn[] = {0.9, 0.5, 0.1};
    for (int i = 0; i < 3; ++i) {
        t.leaves[i].mean_pc = pc[i];
        t.leaves[i].mean_pn = pn[i];
        t.leaves[i].weight_mass = 1.0;
    }
    EXPECT_NEAR(m_noise(t).value, 0.0, 1e-12); // perfect anti-correlation
    t.leaves[1].mean_pn = 0.9;
    const std::vector<double> c(pc, pc + 3), n{0.9, 0.9, 0.1};
    EXPECT_NEAR(m_noise(t).value, 1.0 - std::abs(stats::pearson(c, n)), 1e-12);
    t.leaves.resize(1);
    EXPECT_TRUE(m_noise(t).degenerate);
    EXPECT_EQ(m_noise(t).value, 1.0);
}

namespace {

std::vector<ParetoPoint> frontier(const std::vector<std::array<double, 3>>& v) {
    std::vector<ParetoPoint> out;
    for (const auto& [a, s, n] : v) out.push_back(ParetoPoint{a, s, n, false, nullptr});
    return out;
}

} // namespace

TEST(Pareto, KneeOnConvexFrontier) {
    // (signal, noise): chord from (10, 0) to (0, 1); the bulge is at α=3
    const auto pts = frontier({{2, 10, 0}, {3, 9, 0.9}, {4, 5, 0.95}, {5, 0, 1}});
    EXPECT_EQ(knee_point(pts), 3.0);
}

TEST(Pareto, DominatedPointsIgnoredAndTiesPickSmallestAlpha) {
    auto pts = frontier({{2, 10, 0}, {3, 5, 0}, {4, 0, 1}});
    const auto nd = nondominated(pts);
    EXPECT_EQ(nd, (std::vector<std::size_t>{0, 2}));
    // symmetric frontier: two points equally far from the chord
    pts = frontier({{6, 1, 0}, {5, 0.8, 0.6}, {4, 0.6, 0.8}, {3, 0, 1}});
    EXPECT_EQ(knee_point(pts), 4.0);
    EXPECT_EQ(knee_point(frontier({{7, 1, 1}})), 7.0);
}

TEST(Pareto, SearchAndMassGreedy) {
    std::mt19937_64 rng(12);
    auto x = random_matrix(rng, 300, false);
    std::vector<std::uint8_t> y(300);
    ProbEstimates p;
    for (std::size_t i = 0; i < 300; ++i) {
        const bool planted = x.columns[0].values[i] >= 5;
        y[i] = planted || rng() % 10 == 0;
        p.p_c.push_back(planted ? 0.9 : 0.05);
        p.p_n.push_back(!planted && y[i] ? 0.8 : 0.05);
    }
    SearchOptions so;
    so.threads = 1;
    const auto res = weighted_tree_search(x, y, p, default_alpha_grid(), so);
    EXPECT_EQ(res.points.size(), 9u);
    EXPECT_EQ(res.alpha, knee_point(res.points));
    so.threads = 4;
    EXPECT_EQ(to_json_document(weighted_tree_search(x, y, p, default_alpha_grid(), so)).dump(), to_json_document(res).dump());

    for (double tau : {0.25, 0.5, 0.8, 1.0}) {
        const auto seg = mass_greedy(res.tree(), p.p_c, tau);
        std::size_t class1 = 0;
        for (const auto& l : res.tree().leaves) class1 += l.predicted_class == 1;
        EXPECT_TRUE(seg.covered_mass >= tau * seg.total_mass || seg.leaf_ids.size() == class1);
        EXPECT_EQ(apply_rules(seg.rules, x), seg.mask);
        const auto rules = rules_from_json(to_json_document(seg));
        EXPECT_EQ(apply_rules(rules, x), seg.mask);
    }
}

TEST(Pareto, MassGreedyOrderingAndEmpty) {
    WeightedTree t;
    t.rows = 4;
    t.leaves.resize(3);
    const double mean[] = {0.5, 0.9, 0.5};
    const double mass[] = {1.0, 1.0, 2.0};
    for (int i = 0; i < 3; ++i) {
        t.leaves[i].id = i;
        t.leaves[i].predicted_class = 1;
        t.leaves[i].mean_pc = mean[i];
        t.leaves[i].weight_mass = mass[i];
    }
    t.leaves[0].rows = {0};
    t.leaves[1].rows = {1};
    t.leaves[2].rows = {2, 3};
    const std::vector<double> pc{0.5, 0.9, 0.5, 0.5};
    const auto seg = mass_greedy(t, pc, 1.0);
    EXPECT_EQ(seg.leaf_ids, (std::vector<int>{1, 2, 0}));
    const auto half = mass_greedy(t, pc, 0.5);
    EXPECT_EQ(half.leaf_ids, (std::vector<int>{1, 2}));
    for (auto& l : t.leaves) l.predicted_class = 0;
    const auto none = mass_greedy(t, pc, 0.8);
    EXPECT_TRUE(none.empty_rules);
    EXPECT_EQ(none.size(), 0u);
    EXPECT_THROW(mass_greedy(t, pc, 0.0), ValidationError);
}
