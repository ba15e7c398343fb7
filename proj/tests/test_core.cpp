// Tables, pairing, statistics, the slice screen and the expression language.

#include "support.hpp"

#include <gtest/gtest.h>

using namespace sifotl;

namespace {

Table small_table(const std::string& csv) { return parse_table(csv, fixture::small_schema()); }

} // namespace

// ---------------------------------------------------------------- table

TEST(Table, ParsesTypedCellsAndMissingTokens) {
    auto t = small_table("id,age,region,cost\na,30,north,10\nb,,south,NA\nc,41.5,,7\n");
    ASSERT_EQ(t.rows(), 3u);
    EXPECT_DOUBLE_EQ(t.number(t.column_index("age"), 2), 41.5);
    EXPECT_TRUE(t.is_missing(t.column_index("age"), 1));
    EXPECT_TRUE(t.is_missing(t.column_index("cost"), 1));
    EXPECT_TRUE(t.is_missing(t.column_index("region"), 2));
    EXPECT_EQ(t.key(1), "b");
}

TEST(Table, RejectsBadSchemas) {
    using sifotl::DType;
    using sifotl::Role;
    EXPECT_THROW(validate_schema(std::vector<ColumnSchema>{{"x", DType::numeric, Role::feature}, {"y", DType::numeric, Role::target_metric}}),
                 ValidationError);
    EXPECT_THROW(validate_schema(std::vector<ColumnSchema>{{"k", DType::categorical, Role::key}, {"y", DType::categorical, Role::target_metric}}),
                 ValidationError);
}

TEST(Table, DuplicateKeyIsAnError) { EXPECT_THROW(small_table("id,age,region,cost\na,1,x,1\na,2,y,2\n"), ValidationError); }

TEST(Table, CsvRoundTrip) {
    const std::string csv = "id,age,region,cost\na,30,\"north, east\",10\nb,,south,2.5\n";
    auto t = small_table(csv);
    auto again = small_table(t.to_csv());
    ASSERT_EQ(again.rows(), 2u);
    EXPECT_EQ(again.label(again.column_index("region"), 0), "north, east");
    EXPECT_TRUE(again.is_missing(again.column_index("age"), 1));
    EXPECT_EQ(t.to_csv(), again.to_csv());
}

TEST(Pairing, SurrogateUsesRelativeTolerance) {
    auto control = small_table("id,age,region,cost\na,1,x,100\nb,1,x,0.5\nc,1,x,3\nd,1,x,\n");
    auto test = small_table("id,age,region,cost\nb,1,x,0.5000001\na,1,x,100.5\nc,1,x,\ne,1,x,1\nd,1,x,\n");
    auto pair = pair_tables(control, test, 1e-3);
    ASSERT_EQ(pair.size(), 4u);
    // a: |0.5| > 1e-3·100 → 1; b: 1e-7 < 1e-3·max(1, 0.5) → 0; c: one side missing → 1; d: both missing → 0
    EXPECT_EQ(pair.surrogate, (std::vector<std::uint8_t>{1, 0, 1, 0}));
    EXPECT_EQ(pair.unmatched_test, std::vector<std::string>{"e"});
    EXPECT_EQ(pair.test.key(pair.test_rows[0]), "a");
}

TEST(Pairing, MetricDiffersBoundary) {
    // exactly representable: |10 - 8| == 0.25·8 is not a difference
    EXPECT_FALSE(metric_differs(8.0, 10.0, 0.25));
    EXPECT_TRUE(metric_differs(8.0, 10.5, 0.25));
    EXPECT_TRUE(metric_differs(0.5, 1.75, 1.0)); // scale floor of 1
    EXPECT_FALSE(metric_differs(std::nullopt, std::nullopt, 0.0));
}

// ---------------------------------------------------------------- stats

TEST(Stats, ChiSquareMatchesExpectedCountOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 4 + rng() % 60;
        std::vector<std::uint8_t> in(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            in[i] = rng() % 3 == 0;
            y[i] = rng() % 4 == 0;
        }
        const auto r = stats::chi_square_test(in, y);
        const double ref = oracle::chi_square(in, y);
        if (std::isnan(ref)) {
            EXPECT_TRUE(r.degenerate);
            EXPECT_EQ(r.p_value, 1.0);
            continue;
        }
        ASSERT_NEAR(r.stat, ref, 1e-9 * std::max(1.0, ref));
        ASSERT_NEAR(r.p_value, oracle::chi_square_p1(ref), 1e-9);
    }
}

TEST(Stats, ChiSquareKnownTable) {
    // [[10, 20], [30, 40]]: n(ad-bc)²/(r1 r2 c1 c2) = 100·(400-600)²/(30·70·40·60)
    const auto r = stats::chi_square_2x2(10, 20, 30, 40);
    EXPECT_NEAR(r.stat, 100.0 * 40000.0 / (30.0 * 70.0 * 40.0 * 60.0), 1e-12);
}

TEST(Stats, ChiSquareSurvivalForOtherDof) {
    // dof 2: sf(x) = exp(-x/2)
    for (double x : {0.1, 1.0, 5.0, 20.0}) EXPECT_NEAR(stats::chi_square_sf(x, 2.0), std::exp(-x / 2.0), 1e-12);
}

TEST(Stats, CramersVRangeAndValue) {
    EXPECT_NEAR(stats::cramers_v(25.0, 100.0, 2, 2), 0.5, 1e-12);
    EXPECT_EQ(stats::cramers_v(0.0, 10.0, 2, 2), 0.0);
    EXPECT_LE(stats::cramers_v(1e9, 10.0, 2, 2), 1.0);
}

TEST(Stats, PointBiserialMatchesPearson) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + rng() % 40;
        std::vector<std::uint8_t> b(n);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = rng() % 2;
            x[i] = g(rng) + b[i];
        }
        b[0] = 0;
        b[1] = 1;
        const auto r = stats::point_biserial(b, x);
        ASSERT_FALSE(r.degenerate);
        ASSERT_NEAR(r.value, oracle::point_biserial(b, x), 1e-9);
    }
}

TEST(Stats, PointBiserialDegenerate) {
    std::vector<std::uint8_t> b{1, 1, 1};
    std::vector<double> x{1, 2, 3};
    EXPECT_TRUE(stats::point_biserial(b, x).degenerate);
    std::vector<std::uint8_t> b2{0, 1, 0};
    std::vector<double> same{2, 2, 2};
    EXPECT_TRUE(stats::point_biserial(b2, same).degenerate);
}

TEST(Stats, BenjaminiHochbergMatchesDefinition) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 1 + rng() % 25;
        std::vector<double> p(m);
        for (auto& v : p) v = rng() % 5 == 0 ? 0.01 : u(rng) * u(rng);
        const auto q = stats::bh_fdr(p);
        const auto ref = oracle::bh(p);
        for (std::size_t i = 0; i < m; ++i) {
            ASSERT_NEAR(q[i], ref[i], 1e-12);
            ASSERT_GE(q[i], p[i] - 1e-15);
        }
    }
}

TEST(Stats, BenjaminiHochbergMonotoneInP) {
    std::vector<double> p{0.04, 0.001, 0.03, 0.2, 0.01};
    const auto q = stats::bh_fdr(p);
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j)
            if (p[i] <= p[j]) EXPECT_LE(q[i], q[j]);
    EXPECT_THROW(stats::bh_fdr(std::vector<double>{}), ValidationError);
}

TEST(Stats, QuantileBins) {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    v.push_back(std::nan(""));
    const auto bins = stats::bin_numeric(v, 4);
    ASSERT_EQ(bins.cuts.size(), 3u);
    // type-7 quantiles of 1..100 at 0.25 / 0.5 / 0.75
    EXPECT_DOUBLE_EQ(bins.cuts[0], 25.75);
    EXPECT_DOUBLE_EQ(bins.cuts[1], 50.5);
    EXPECT_DOUBLE_EQ(bins.cuts[2], 75.25);
    EXPECT_EQ(bins.bin_of(1), 0u);
    EXPECT_EQ(bins.bin_of(25.75), 1u);
    EXPECT_EQ(bins.bin_of(100), 3u);
}

TEST(Stats, FewDistinctValuesGetOwnBins) {
    std::vector<double> v{0, 1, 1, 0, 1, 0, 0};
    const auto bins = stats::bin_numeric(v, 10);
    EXPECT_EQ(bins.cuts, std::vector<double>{1.0});
}

// ---------------------------------------------------------------- screen

TEST(Anonymity, SpecExamples) {
    AnonymityPolicy p{2, 3, {"q"}};
    std::vector<std::uint8_t> all(6, 1);
    std::vector<std::string> balanced{"A", "A", "A", "B", "B", "B"};
    std::vector<std::string> skewed{"A", "A", "A", "A", "A", "B"};
    EXPECT_TRUE(anonymity_check(all, p, balanced));
    EXPECT_FALSE(anonymity_check(all, p, skewed));
    AnonymityPolicy noqi{2, 2, {}};
    EXPECT_TRUE(anonymity_check(std::vector<std::uint8_t>(10, 1), noqi, {}));
    EXPECT_FALSE(anonymity_check(std::vector<std::uint8_t>{1, 0, 0}, noqi, {}));
}

TEST(Anonymity, AdaptivePolicy) {
    auto p = AnonymityPolicy::adaptive(10000);
    EXPECT_EQ(p.min_slice_size, 10u);
    EXPECT_EQ(p.k_threshold, 10u);
    EXPECT_EQ(AnonymityPolicy::adaptive(50).min_slice_size, 2u);
    EXPECT_EQ(AnonymityPolicy::adaptive(1001).min_slice_size, 2u);
    EXPECT_THROW((AnonymityPolicy{1, 2, {}}.validate()), ValidationError);
}

namespace {

PairedDataset screen_pair() {
    std::string c = "id,age,region,cost\n", t = c;
    for (int i = 0; i < 60; ++i) {
        const std::string id = "r" + std::to_string(i);
        const std::string region = i < 30 ? "north" : (i < 59 ? "south" : "lonely");
        const int age = 20 + i;
        c += id + "," + std::to_string(age) + "," + region + ",100\n";
        const bool shifted = i < 30 && i % 3 != 0;
        t += id + "," + std::to_string(age) + "," + region + "," + (shifted ? "150" : "100") + "\n";
    }
    return pair_tables(small_table(c), small_table(t));
}

} // namespace

TEST(Screen, SummaryOrderingSuppressionAndStats) {
    const auto pair = screen_pair();
    AnonymityPolicy policy{2, 2, {}};
    const auto s = build_insight_summary(pair, pair.surrogate, policy, 4);
    EXPECT_EQ(s.suppressed_count, 1u); // the one-row 'lonely' region
    ASSERT_FALSE(s.insights.empty());
    for (std::size_t i = 1; i < s.insights.size(); ++i) {
        const auto& a = s.insights[i - 1];
        const auto& b = s.insights[i];
        EXPECT_TRUE(a.q_value < b.q_value || (a.q_value == b.q_value && a.cramers_v >= b.cramers_v));
    }
    for (const auto& ins : s.insights) {
        EXPECT_GE(ins.n_in, policy.min_slice_size);
        const auto mask = slice_mask(pair.test, pair.test_rows, ins.slice);
        EXPECT_NEAR(ins.chi2_stat, stats::chi_square_test(mask, pair.surrogate).stat, 1e-12);
        EXPECT_EQ(ins.point_biserial.has_value(), ins.slice.kind == SliceSpec::Kind::numeric_bin);
    }
    const auto& top = s.insights.front();
    EXPECT_EQ(top.slice.feature, "region");
    EXPECT_EQ(top.slice.category, "north");
}

TEST(Screen, JsonRoundTripAndNoRawExtremes) {
    const auto pair = screen_pair();
    const auto s = build_insight_summary(pair, pair.surrogate, AnonymityPolicy{2, 2, {}}, 4);
    const auto doc = to_json_document(s);
    const auto back = summary_from_json(doc);
    ASSERT_EQ(back.insights.size(), s.insights.size());
    EXPECT_EQ(back.insights[0].slice, s.insights[0].slice);
    const auto text = doc.dump();
    EXPECT_EQ(text.find("r17"), std::string::npos);
    // age min 20 and max 79 are never bin edges
    for (const auto& ins : s.insights) {
        if (ins.slice.feature != "age") continue;
        if (ins.slice.lo) EXPECT_GT(*ins.slice.lo, 20.0);
        if (ins.slice.hi) EXPECT_LT(*ins.slice.hi, 79.0);
    }
}

TEST(Screen, TargetLengthMismatchThrows) {
    const auto pair = screen_pair();
    std::vector<std::uint8_t> bad(3, 0);
    EXPECT_THROW(build_insight_summary(pair, bad, AnonymityPolicy{}, 4), ValidationError);
}

// ---------------------------------------------------------------- dsl

namespace {

Table dsl_table() {
    return parse_table("id,age,region,cost\na,30,north,10\nb,,south,0\nc,-5,north,-1\n", fixture::small_schema());
}

std::optional<double> eval_num(const std::string& text, std::size_t row) {
    const auto t = dsl_table();
    const auto e = dsl::Expression::compile(text, dsl::column_types(t.schema()));
    return e.bind(t).number(row);
}

} // namespace

TEST(Dsl, ArithmeticAndFunctions) {
    EXPECT_DOUBLE_EQ(*eval_num("age * 2 + 1", 0), 61.0);
    EXPECT_DOUBLE_EQ(*eval_num("safe_div(cost, age)", 0), 10.0 / 30.0);
    EXPECT_DOUBLE_EQ(*eval_num("safe_div(age, cost)", 0), 3.0);
    EXPECT_DOUBLE_EQ(*eval_num("clamp(age, 0, 18)", 0), 18.0);
    EXPECT_DOUBLE_EQ(*eval_num("log1p(cost)", 0), std::log1p(10.0));
    EXPECT_DOUBLE_EQ(*eval_num("if region == 'north' then 1 else 0", 2), 1.0);
    EXPECT_DOUBLE_EQ(*eval_num("-age", 2), 5.0);
}

TEST(Dsl, TotalityAndMissingPropagation) {
    EXPECT_FALSE(eval_num("age + 1", 1).has_value());
    EXPECT_DOUBLE_EQ(*eval_num("safe_div(age, cost)", 2), 5.0);
    EXPECT_DOUBLE_EQ(*eval_num("safe_div(1, cost)", 1), 0.0); // zero denominator
    EXPECT_FALSE(eval_num("log1p(cost)", 2).has_value());       // log1p(-1)
}

TEST(Dsl, PredicatesAndSets) {
    const auto t = dsl_table();
    const auto types = dsl::column_types(t.schema());
    const auto p = dsl::Expression::compile_predicate("region in {'north', 'west'} and not (age < 0)", types);
    const auto b = p.bind(t);
    EXPECT_TRUE(b.truthy(0));
    EXPECT_FALSE(b.truthy(1));
    EXPECT_FALSE(b.truthy(2));
}

TEST(Dsl, RejectsBadPrograms) {
    const auto types = dsl::column_types(fixture::small_schema());
    EXPECT_THROW(dsl::Expression::compile("age / 2", types), dsl::ParseError);
    EXPECT_THROW(dsl::Expression::compile("nosuch + 1", types), ValidationError);
    EXPECT_THROW(dsl::Expression::compile("region + 1", types), dsl::TypeError);
    EXPECT_THROW(dsl::Expression::compile_predicate("age + 1", types), dsl::TypeError);
    EXPECT_THROW(dsl::Expression::compile("(age", types), dsl::ParseError);
    EXPECT_THROW(dsl::Expression::compile("system('x')", types), ValidationError);
}

TEST(Dsl, ReferencedColumns) {
    const auto e = dsl::Expression::compile("safe_div(cost, age) + age", dsl::column_types(fixture::small_schema()));
    EXPECT_EQ(e.columns(), (std::vector<std::string>{"cost", "age"}));
}

// ---------------------------------------------------------------- helpers

TEST(Detail, HashIsStableFnv1a) {
    // FNV-1a 64 reference values
    EXPECT_EQ(detail::fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(detail::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(detail::hash_hex("a"), "af63dc4c8601ec8c");
}

TEST(Detail, NumberFormattingRoundTrips) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        ASSERT_EQ(*detail::parse_double(detail::format_double(v)), v);
    }
    EXPECT_FALSE(detail::parse_double("abc").has_value());
}

TEST(Detail, CsvQuoting) {
    const auto recs = detail::parse_csv("a,\"b,c\",\"d\"\"e\"\n1,2,3\n");
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0][1], "b,c");
    EXPECT_EQ(recs[0][2], "d\"e");
    std::string out;
    detail::append_csv_record(out, {"x,y", "z"});
    EXPECT_EQ(out, "\"x,y\",z\n");
}
