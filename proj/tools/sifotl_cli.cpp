// Command-line front end: one subcommand per pipeline stage plus `run`,
// `bench` for synthetic scenarios. Exit codes: 0 ok, 1 validation,
// 2 stage failure, 3 provider failure.

#include <sifotl/provider_http.hpp>
#include <sifotl/sifotl.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>

namespace {

std::shared_ptr<sifotl::Provider> live_provider(bool live, const sifotl::RunConfig& cfg) {
    if (cfg.provider.kind == "http" && !live)
        throw sifotl::ValidationError("config selects the http provider; pass --live to allow network calls");
    if (!live) return nullptr;
    return std::make_shared<sifotl::HttpProvider>(sifotl::HttpProviderConfig::from_env());
}

sifotl::Pipeline make_pipeline(const std::string& config_path, bool live, const std::string& out_override) {
    auto cfg = sifotl::RunConfig::load(config_path);
    if (!out_override.empty()) cfg.output_dir = std::filesystem::absolute(out_override).string();
    auto provider = live_provider(live, cfg);
    return sifotl::Pipeline(std::move(cfg), std::move(provider));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segment attribution for data shifts between two table versions"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir;
    bool live = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out_dir, "Override the output directory");
        sub->add_flag("--live", live, "Allow the HTTP provider (reads SIFOTL_LLM_* variables)");
    };

    auto* run = app.add_subcommand("run", "Run every stage");
    auto* summarize = app.add_subcommand("summarize", "Pair tables, label noise, write insight summaries");
    auto* synthesize = app.add_subcommand("synthesize", "Generate features through the provider");
    auto* train = app.add_subcommand("train", "Fit the intervention and noise classifiers");
    auto* segment = app.add_subcommand("segment", "Weighted tree search and segment extraction");
    auto* eval = app.add_subcommand("eval", "Score the segment and the baseline against ground truth");
    for (auto* s : {run, summarize, synthesize, train, segment, eval}) add_common(s);

    auto* bench = app.add_subcommand("bench", "Generate a synthetic benchmark directory");
    std::string preset_name = "T1";
    std::string noise_level = "N1";
    std::size_t rows = 10000;
    std::uint64_t seed = 7;
    std::string bench_out;
    std::string scenario_file;
    bench->add_option("--preset", preset_name, "T1, T2, T3 or MEPS")->check(CLI::IsMember({"T1", "T2", "T3", "MEPS"}));
    bench->add_option("--noise", noise_level, "N0, N1 or N2")->check(CLI::IsMember({"N0", "N1", "N2"}));
    bench->add_option("--rows", rows, "Rows in the base table")->check(CLI::PositiveNumber);
    bench->add_option("--seed", seed, "Generator seed");
    bench->add_option("--out", bench_out, "Directory to write")->required();
    bench->add_option("--scenario", scenario_file, "Scenario JSON; replaces --preset and --noise")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (bench->parsed()) {
            sifotl::bench::Scenario sc;
            if (scenario_file.empty()) {
                sc = sifotl::bench::preset(preset_name, sifotl::bench::parse_noise_level(noise_level), seed);
            } else {
                try {
                    sc = nlohmann::json::parse(sifotl::detail::read_file(scenario_file)).get<sifotl::bench::Scenario>();
                } catch (const nlohmann::json::exception& e) {
                    throw sifotl::ValidationError("scenario " + scenario_file + ": " + e.what());
                }
            }
            const auto b = sifotl::bench::build_benchmark(sc, rows, seed);
            const auto path = sifotl::write_benchmark(b, bench_out, seed);
            std::cout << "wrote " << path << '\n';
            return 0;
        }
        auto p = make_pipeline(config, live, out_dir);
        std::cerr << "config hash " << p.config_hash() << '\n';
        if (run->parsed()) {
            p.run();
            if (!p.config().truth_path.empty()) std::cout << sifotl::detail::read_file(p.artifact("report.txt"));
            else std::cout << "segment written to " << p.artifact("segment.json") << '\n';
        } else if (summarize->parsed()) {
            p.summarize();
        } else if (synthesize->parsed()) {
            p.synthesize();
        } else if (train->parsed()) {
            p.train();
        } else if (segment->parsed()) {
            p.segment();
        } else if (eval->parsed()) {
            p.evaluate();
            std::cout << sifotl::detail::read_file(p.artifact("report.txt"));
        }
        return 0;
    } catch (const sifotl::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const sifotl::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const sifotl::ProviderError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
