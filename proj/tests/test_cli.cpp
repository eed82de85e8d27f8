#include <gtest/gtest.h>

#include <filesystem>

#include "noteqa.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using noteqa::corpus::json;

namespace {

// Per-test scratch directory plus a config file pointing at the shipped
// templates (the built-in default is relative to the working directory).
struct Scratch {
    fs::path dir;
    std::string config;

    explicit Scratch(const std::string& name) {
        dir = fs::path("/tmp") / ("noteqa_cli_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
        config = (dir / "config.json").string();
        json cfg = {{"templates_dir", support::root("data/templates")}};
        support::spit(config, cfg.dump(2) + "\n");
    }
    ~Scratch() { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string q(const std::string& s) { return "\"" + s + "\""; }

std::string common_inputs() {
    return " --cases " + q(support::fixture("mini.xml")) + " --key " +
           q(support::fixture("mini.key.json")) + " ";
}

}  // namespace

TEST(Cli, IngestMatchesGoldenDataset) {
    Scratch s("ingest");
    std::string out = s.path("dataset.json");
    support::CliResult r =
        support::run_cli("ingest" + common_inputs() + "--out " + q(out));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(support::slurp(out), support::slurp(support::golden("mini.dataset.json")));

    // Without --out the same bytes go to stdout.
    support::CliResult to_stdout = support::run_cli("ingest" + common_inputs());
    EXPECT_EQ(to_stdout.exit_code, 0);
    EXPECT_EQ(to_stdout.out, support::slurp(support::golden("mini.dataset.json")));
}

TEST(Cli, CalibrateMatchesGoldenThreshold) {
    Scratch s("calibrate");
    std::string out = s.path("threshold.json");
    support::CliResult r =
        support::run_cli("calibrate" + common_inputs() + "--out " + q(out));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(support::slurp(out), support::slurp(support::golden("threshold.json")));
}

TEST(Cli, RunRerankMatchesGoldenByteForByte) {
    Scratch s("run_rerank");
    std::string cmd = "run --strategy two_step_rerank --backend transcript --transcript " +
                      q(support::fixture("rerank.transcript.json")) + " --manifest " +
                      q(support::golden("threshold.json")) + common_inputs() + "--config " +
                      q(s.config) + " --out " + q(s.dir.string());
    support::CliResult r = support::run_cli(cmd);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(support::slurp(s.path("submission.json")),
              support::slurp(support::golden("submission.rerank.json")));
    EXPECT_EQ(support::slurp(s.path("manifest.json")),
              support::slurp(support::golden("manifest.rerank.json")));

    // A second identical run reproduces the same bytes.
    support::CliResult again = support::run_cli(cmd);
    ASSERT_EQ(again.exit_code, 0) << again.err;
    EXPECT_EQ(support::slurp(s.path("submission.json")),
              support::slurp(support::golden("submission.rerank.json")));
}

TEST(Cli, RunPromptAndEndToEndStrategiesMatchGoldens) {
    struct Variant {
        const char* strategy;
        const char* transcript;
        const char* golden;
    };
    for (const Variant& v :
         {Variant{"two_step_prompt_list", "list.transcript.json", "submission.list.json"},
          Variant{"two_step_prompt_individual", "indiv.transcript.json",
                  "submission.indiv.json"},
          Variant{"e2e", "e2e.transcript.json", "submission.e2e.json"}}) {
        Scratch s(std::string("run_") + v.strategy);
        support::CliResult r = support::run_cli(
            "run --strategy " + std::string(v.strategy) + " --backend transcript" +
            " --transcript " + q(support::fixture(v.transcript)) + common_inputs() +
            "--config " + q(s.config) + " --out " + q(s.dir.string()));
        ASSERT_EQ(r.exit_code, 0) << v.strategy << ": " << r.err;
        EXPECT_EQ(support::slurp(s.path("submission.json")),
                  support::slurp(support::golden(v.golden)))
            << v.strategy;
    }
}

TEST(Cli, EvaluateMatchesGoldenReport) {
    Scratch s("evaluate");
    std::string out = s.path("report.json");
    support::CliResult r = support::run_cli(
        "evaluate " + q(support::golden("submission.rerank.json")) + common_inputs() +
        "--out " + q(out));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(support::slurp(out), support::slurp(support::golden("report.rerank.json")));
    // With --out the human-readable table lands on stdout.
    EXPECT_EQ(r.out.compare(0, 7, "overall"), 0) << r.out;
    EXPECT_NE(r.out.find("strict micro-F1"), std::string::npos);

    support::CliResult to_stdout = support::run_cli(
        "evaluate " + q(support::golden("submission.rerank.json")) + common_inputs());
    EXPECT_EQ(to_stdout.exit_code, 0);
    EXPECT_EQ(to_stdout.out, support::slurp(support::golden("report.rerank.json")));
}

TEST(Cli, ReportMergeRecomputesOverall) {
    // Full report: overall recomputed in place, everything else preserved.
    support::CliResult full =
        support::run_cli("report-merge " + q(support::golden("report.rerank.json")));
    ASSERT_EQ(full.exit_code, 0) << full.err;
    json merged = json::parse(full.out);
    json original = json::parse(support::slurp(support::golden("report.rerank.json")));
    EXPECT_EQ(merged, original);  // already consistent

    // Bare {relevance, factuality} numbers work too.
    Scratch s("merge");
    std::string bare = s.path("bare.json");
    support::spit(bare, json{{"relevance", 0.312}, {"factuality", 0.464}}.dump() + "\n");
    support::CliResult r = support::run_cli("report-merge " + q(bare));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    json out = json::parse(r.out);
    EXPECT_NEAR(out.at("overall").get<double>(), 0.388, 1e-9);
    EXPECT_DOUBLE_EQ(out.at("relevance").get<double>(), 0.312);
    EXPECT_DOUBLE_EQ(out.at("factuality").get<double>(), 0.464);
}

TEST(Cli, ValidationFailuresExitOne) {
    support::CliResult strategy = support::run_cli(
        "run --strategy three_step --backend transcript --transcript x.json" +
        common_inputs());
    EXPECT_EQ(strategy.exit_code, 1);
    EXPECT_NE(strategy.err.find("unknown strategy \"three_step\""), std::string::npos);

    support::CliResult no_cases = support::run_cli("ingest");
    EXPECT_EQ(no_cases.exit_code, 1);
    EXPECT_NE(no_cases.err.find("--cases is required"), std::string::npos);

    support::CliResult no_key = support::run_cli(
        "evaluate " + q(support::golden("submission.rerank.json")) + " --cases " +
        q(support::fixture("mini.xml")));
    EXPECT_EQ(no_key.exit_code, 1);
    EXPECT_NE(no_key.err.find("requires gold keys"), std::string::npos);

    EXPECT_EQ(support::run_cli("ingest --no-such-flag" + common_inputs()).exit_code, 1);
    EXPECT_EQ(support::run_cli("").exit_code, 1);
    EXPECT_EQ(support::run_cli("--help").exit_code, 0);
}

TEST(Cli, UnreachableScoringBackendExitsTwo) {
    Scratch s("backend_down");
    std::string config = s.path("rerank_config.json");
    support::spit(config,
                  json{{"rerank_endpoint", "http://127.0.0.1:1"}, {"retries", 0}}.dump() + "\n");
    support::CliResult r = support::run_cli("calibrate --backend rerank" + common_inputs() +
                                            "--config " + q(config));
    EXPECT_EQ(r.exit_code, 2) << r.err;
    EXPECT_EQ(r.err.compare(0, 7, "error: "), 0) << r.err;
}

TEST(Cli, PartialCaseFailuresExitThree) {
    Scratch s("partial");
    // Drop one recorded completion so exactly one case cannot be replayed.
    json full = json::parse(support::slurp(support::fixture("e2e.transcript.json")));
    json pruned = json::array();
    for (size_t i = 1; i < full.size(); ++i) pruned.push_back(full[i]);
    std::string transcript = s.path("pruned.json");
    support::spit(transcript, pruned.dump(2) + "\n");

    support::CliResult r = support::run_cli(
        "run --strategy e2e --backend transcript --transcript " + q(transcript) +
        common_inputs() + "--config " + q(s.config) + " --out " + q(s.dir.string()));
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.err.find(" failed: "), std::string::npos);
    EXPECT_NE(r.err.find("has no completion"), std::string::npos);

    // The surviving cases are still written.
    json submission = json::parse(support::slurp(s.path("submission.json")));
    EXPECT_EQ(submission.size(), 3u);
}
