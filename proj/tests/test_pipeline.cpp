// Noise rules, benchmark generation, evaluation, run config, stage plumbing, CLI.

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace sifotl;
namespace fs = std::filesystem;

namespace {

Table small(const std::string& csv) { return parse_table(csv, fixture::small_schema()); }

NoiseRule rule(std::string name, NoiseMechanism m, nlohmann::json params, std::optional<std::string> scope = std::nullopt) {
    return NoiseRule{std::move(name), m, std::move(params), std::move(scope)};
}

std::vector<std::uint8_t> labels_of(const Table& test, const Table& base, const NoiseRule& r) { return apply_rules(test, {r}, base).labels; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SIFOTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

// ---------------------------------------------------------------- noise rules

TEST(NoiseRules, EachMechanismOnHandBuiltRows) {
    const auto base = small("id,age,region,cost\na,30,north,10\nb,40,south,15\nc,50,north,20\nd,60,south,25\n");
    const auto test = small("id,age,region,cost\na,30,north,100\nb,40,NORTH,0\nc,,north,20\nd,60,south,30\ne,70,south,25\n");

    EXPECT_EQ(labels_of(test, base, rule("o", NoiseMechanism::outlier_multiple, {{"column", "cost"}, {"threshold", 3.0}})),
              (std::vector<std::uint8_t>{1, 0, 0, 0, 0}));
    EXPECT_EQ(labels_of(test, base, rule("z", NoiseMechanism::zero_value, {{"column", "cost"}})), (std::vector<std::uint8_t>{0, 1, 0, 0, 0}));
    EXPECT_EQ(labels_of(test, base, rule("m", NoiseMechanism::missing_value, {{"columns", {"age"}}})),
              (std::vector<std::uint8_t>{0, 0, 1, 0, 0}));
    EXPECT_EQ(labels_of(test, base, rule("t", NoiseMechanism::text_anomaly, {{"column", "region"}, {"whitelist", {"north", "south"}}})),
              (std::vector<std::uint8_t>{0, 1, 0, 0, 0}));
    // 100 and 0 and 30 are multiples of 10; only d's baseline (25) was not, and a/b's baselines were 10/15.
    EXPECT_EQ(labels_of(test, base, rule("r", NoiseMechanism::suspicious_rounding, {{"column", "cost"}, {"granularity", 10.0}})),
              (std::vector<std::uint8_t>{0, 1, 0, 1, 0}));
    // e has no baseline partner.
    EXPECT_EQ(labels_of(test, base, rule("d", NoiseMechanism::duplicate_row, nlohmann::json::object())), (std::vector<std::uint8_t>{0, 0, 0, 0, 1}));
}

TEST(NoiseRules, DuplicatesAndScopeAndTriggers) {
    const auto base = small("id,age,region,cost\na,30,north,10\nb,30,north,10\nc,50,south,20\n");
    const auto test = small("id,age,region,cost\na,30,north,10\nb,30,north,10\nc,50,south,200\n");
    const auto dup = rule("dup", NoiseMechanism::duplicate_row, {{"columns", {"age", "region"}}});
    EXPECT_EQ(labels_of(test, base, dup), (std::vector<std::uint8_t>{1, 1, 0}));
    const auto scoped = rule("dup", NoiseMechanism::duplicate_row, {{"columns", {"age", "region"}}}, "region == 'south'");
    EXPECT_EQ(labels_of(test, base, scoped), (std::vector<std::uint8_t>{0, 0, 0}));

    const auto out = apply_rules(test, {dup, rule("big", NoiseMechanism::outlier_multiple, {{"column", "cost"}})}, base);
    EXPECT_EQ(out.triggers[2], (std::vector<std::string>{"big"}));
    EXPECT_EQ(out.flagged(), 3u);
    EXPECT_NE(noise_labels_csv(test, out).find("c,1,big"), std::string::npos);
}

TEST(NoiseRules, RejectsBadReferences) {
    auto schema = fixture::small_schema();
    schema.push_back({"truth", DType::numeric, Role::ground_truth});
    const auto t = parse_table("id,age,region,cost,truth\na,1,x,1,0\n", schema);
    EXPECT_THROW(apply_rules(t, {rule("g", NoiseMechanism::zero_value, {{"column", "truth"}})}, t), ValidationError);
    EXPECT_THROW(apply_rules(t, {rule("u", NoiseMechanism::zero_value, {{"column", "nope"}})}, t), ValidationError);
    EXPECT_THROW(apply_rules(t, {rule("k", NoiseMechanism::missing_value, {{"columns", {"id"}}})}, t), ValidationError);
    EXPECT_THROW(apply_rules(t, {rule("n", NoiseMechanism::zero_value, {{"column", "region"}})}, t), ValidationError);
    EXPECT_THROW(apply_rules(t, {rule("w", NoiseMechanism::text_anomaly, {{"column", "region"}})}, t), ValidationError);
    EXPECT_THROW(apply_rules(t, {rule("r", NoiseMechanism::suspicious_rounding, {{"column", "cost"}})}, t), ValidationError);
}

// ---------------------------------------------------------------- benchmark generation

TEST(Benchgen, DeterministicAndAligned) {
    const auto sc = bench::preset("T1", bench::NoiseLevel::n1, 3);
    const auto a = bench::build_benchmark(sc, 1500, 3);
    const auto b = bench::build_benchmark(sc, 1500, 3);
    EXPECT_EQ(a.test.to_csv(), b.test.to_csv());
    EXPECT_EQ(a.truth.to_csv(), b.truth.to_csv());
    ASSERT_EQ(a.truth.size(), a.test.rows());
    for (std::size_t r = 0; r < a.test.rows(); ++r) EXPECT_EQ(a.truth.keys[r], a.test.key(r));
    EXPECT_NE(bench::build_benchmark(sc, 1500, 4).test.to_csv(), a.test.to_csv());
}

TEST(Benchgen, CleanTruthEqualsFullTableDiff) {
    for (const char* name : {"T1", "T2", "T3", "MEPS"}) {
        const auto b = bench::build_benchmark(bench::preset(name, bench::NoiseLevel::n0, 7), 3000, 7);
        ASSERT_EQ(b.test.rows(), b.control.rows()) << name;
        const auto match = bench::detail::predicate_rows(b.control, b.scenario.intervention.predicate);
        std::size_t flagged = 0;
        for (std::size_t r = 0; r < b.test.rows(); ++r) {
            EXPECT_EQ(b.truth.noise[r], 0) << name;
            const bool differs = b.test.row_cells(r) != b.control.row_cells(r);
            ASSERT_EQ(differs, b.truth.intervention[r] == 1) << name << " row " << r;
            if (differs) EXPECT_TRUE(match[r]) << name;
            flagged += differs;
        }
        EXPECT_GT(flagged, 0u) << name;
    }
}

TEST(Benchgen, NoiseRatesInsidePresetRange) {
    const auto b = bench::build_benchmark(bench::preset("T1", bench::NoiseLevel::n2, 7), 5000, 7);
    const auto scope = bench::detail::predicate_rows(b.control, b.scenario.noise.front().predicate);
    std::size_t in_scope = 0;
    for (auto v : scope) in_scope += v;
    std::size_t noisy = 0;
    for (auto v : b.truth.noise) noisy += v;
    // two mechanisms, each drawing 10-15% of the scoped rows
    EXPECT_GE(noisy, static_cast<std::size_t>(0.10 * in_scope));
    EXPECT_LE(noisy, static_cast<std::size_t>(0.30 * in_scope) + 1);
    EXPECT_GT(b.test.rows(), b.control.rows()); // duplicates append rows
}

TEST(Benchgen, TruthCsvRoundTrip) {
    const auto b = bench::build_benchmark(bench::preset("T3", bench::NoiseLevel::n1, 2), 800, 2);
    const auto back = bench::GroundTruth::from_csv(b.truth.to_csv());
    EXPECT_EQ(back.to_csv(), b.truth.to_csv());
    EXPECT_THROW(bench::GroundTruth::from_csv("id,x\n"), ValidationError);
    EXPECT_THROW(bench::parse_noise_level("N3"), ValidationError);
    EXPECT_THROW(bench::preset("T9", bench::NoiseLevel::n0, 1), ValidationError);
}

// ---------------------------------------------------------------- evaluation

TEST(Eval, ScoresAgainstHandCounts) {
    const std::vector<std::uint8_t> mask{1, 1, 1, 0, 0, 1}, truth{1, 0, 1, 1, 0, 0}, noise{0, 1, 0, 0, 1, 1};
    const std::vector<std::vector<std::string>> mech{{}, {"dup"}, {}, {}, {"dup"}, {"out", "dup"}};
    const auto r = score_segment(mask, truth, noise, mech);
    EXPECT_DOUBLE_EQ(r.precision, 0.5);
    EXPECT_DOUBLE_EQ(*r.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.f1, 2 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0));
    EXPECT_EQ(r.noisy_in_segment, 2u);
    EXPECT_EQ(r.noisy_total, 3u);
    EXPECT_DOUBLE_EQ(r.noise_fraction(), 0.5);
    EXPECT_EQ(r.contamination.at("dup"), 2u);
    EXPECT_EQ(r.contamination.at("out"), 1u);

    const std::vector<std::uint8_t> none(6, 0);
    const auto e = score_segment(mask, none);
    EXPECT_FALSE(e.recall.has_value());
    EXPECT_EQ(to_json_document(e)["recall"], "undefined");
    EXPECT_THROW(score_segment(mask, std::vector<std::uint8_t>(3)), ValidationError);
}

TEST(Eval, ReportTableHasOneLinePerMethod) {
    EvaluationReport r;
    r.f1 = 0.5;
    const auto t = report_table({{"A", r}, {"B", r}});
    EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 3);
}

// ---------------------------------------------------------------- run config

namespace {

nlohmann::json minimal_config() {
    return {{"data", {{"control", "c.csv"}, {"test", "t.csv"}}}, {"schema", fixture::small_schema()}};
}

} // namespace

TEST(RunConfig, DefaultsAndUnknownKeys) {
    const auto c = RunConfig::from_json(minimal_config());
    EXPECT_DOUBLE_EQ(c.tau, 0.8);
    EXPECT_EQ(c.max_depth, 5);
    EXPECT_EQ(c.model_c.n_rounds, 200);
    EXPECT_FALSE(c.k_threshold.has_value());

    auto bad = minimal_config();
    bad["surprise"] = 1;
    EXPECT_THROW(RunConfig::from_json(bad), ValidationError);
    auto tau = minimal_config();
    tau["segment"] = {{"tau", 0.0}};
    EXPECT_THROW(RunConfig::from_json(tau), ValidationError);
    auto grid = minimal_config();
    grid["search"] = {{"alpha_grid", {1.0, -2.0}}};
    EXPECT_THROW(RunConfig::from_json(grid), ValidationError);
}

TEST(RunConfig, HashIgnoresOutputLocation) {
    auto a = RunConfig::from_json(minimal_config());
    auto b = a;
    b.output_dir = "elsewhere";
    b.threads = 3;
    EXPECT_EQ(a.hash(), b.hash());
    b.tau = 0.9;
    EXPECT_NE(a.hash(), b.hash());
    const auto round = RunConfig::from_json(a.to_json());
    EXPECT_EQ(round.hash(), a.hash());
}

// ---------------------------------------------------------------- pipeline and CLI

class PipelineTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = fixture::temp_dir("pipeline_small").string();
        const auto b = bench::build_benchmark(bench::preset("T1", bench::NoiseLevel::n1, 5), 1500, 5);
        config_ = write_benchmark(b, dir_, 5);
    }
    static inline std::string dir_;
    static inline std::string config_;
};

TEST_F(PipelineTest, StagesRequireUpstreamArtifacts) {
    auto cfg = RunConfig::load(config_);
    cfg.output_dir = "fresh_out";
    fs::remove_all(fs::path(dir_) / "fresh_out");
    Pipeline p(cfg);
    EXPECT_THROW(p.train(), StageError);
    EXPECT_THROW(p.segment(), StageError);
    p.summarize();
    EXPECT_TRUE(fs::exists(p.artifact("insights_intervention.json")));
    EXPECT_THROW(p.train(), StageError); // synthesis not run yet
}

TEST_F(PipelineTest, FullRunThenStaleDetection) {
    auto cfg = RunConfig::load(config_);
    cfg.output_dir = "full_out";
    Pipeline p(cfg);
    p.run();
    for (const char* f : {"surrogate.csv", "pairing.json", "features_intervention.json", "audit.jsonl", "model_c.json", "pareto.json",
                          "segment.json", "segment_mask.csv", "report.json", "report.txt"})
        EXPECT_TRUE(fs::exists(p.artifact(f))) << f;
    const auto report = nlohmann::json::parse(detail::read_file(p.artifact("report.json")));
    EXPECT_EQ(report["config_hash"], p.config_hash());
    EXPECT_GT(report["sifotl"]["f1"].get<double>(), report["stats_screen"]["f1"].get<double>());

    auto changed = cfg;
    changed.tau = 0.5;
    Pipeline q(changed);
    EXPECT_THROW(q.segment(), StageError);
}

TEST_F(PipelineTest, CliExitCodes) {
    const auto out = fixture::temp_dir("cli_bench").string();
    EXPECT_EQ(run_cli("bench --preset T1 --noise N0 --rows 1200 --seed 3 --out " + out), 0);
    const auto cfg = out + "/config.json";
    EXPECT_EQ(run_cli("run -c " + cfg), 0);
    EXPECT_TRUE(fs::exists(out + "/out/report.json"));

    EXPECT_EQ(run_cli("train -c " + cfg + " -o " + out + "/empty"), 2);
    EXPECT_EQ(run_cli("bench --preset T9 --out " + out + "/x"), 1);
    EXPECT_EQ(run_cli("run --bogus"), 1);
    EXPECT_EQ(run_cli("bench --scenario " + std::string(SIFOTL_SOURCE_DIR) + "/presets/T1-N1.json --rows 800 --out " + out + "/scen"), 0);
    detail::write_file(out + "/broken.json", "{\"name\": 1}");
    EXPECT_EQ(run_cli("bench --scenario " + out + "/broken.json --out " + out + "/scen2"), 1);

    auto j = nlohmann::json::parse(detail::read_file(cfg));
    j["extra"] = true;
    detail::write_file(out + "/bad.json", j.dump());
    EXPECT_EQ(run_cli("run -c " + out + "/bad.json"), 1);

    j.erase("extra");
    j["provider"]["kind"] = "http";
    detail::write_file(out + "/http.json", j.dump());
    EXPECT_EQ(run_cli("summarize -c " + out + "/http.json"), 1);

    j["provider"]["kind"] = "mock";
    j["provider"]["strict"] = true;
    j["output_dir"] = "strict_out";
    detail::write_file(out + "/strict.json", j.dump());
    EXPECT_EQ(run_cli("run -c " + out + "/strict.json"), 3);
}
