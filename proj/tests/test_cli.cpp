#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "attnxp/error.hpp"
#include "commands.hpp"
#include "run_config.hpp"

using namespace attnxp;
using namespace attnxp::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("attnxp-cli-" + std::to_string(::getpid()) + "-" + info->test_suite_name() + "-" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        if (!HasFailure()) fs::remove_all(dir_);
    }

    // Runs the CLI with `args` (already shell-quoted where needed) and returns its exit status.
    int run(const std::string& args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && '" ATTNXP_CLI_PATH "' " + args + " > out.txt 2> err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string& name) const {
        std::ifstream in(dir_ / name, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    }

    void write(const std::string& name, const std::string& content) const {
        std::ofstream(dir_ / name, std::ios::binary) << content;
    }

    // Synthesises a log and trains a model on it (small but converged).
    void seq_model(const std::string& tree = "seq(A, B, C)") {
        ASSERT_EQ(run("synth --tree '" + tree + "' --traces 300 --seed 2 --out-dir syn"), 0) << read("err.txt");
        ASSERT_EQ(run("train --log syn/log.csv --seed 1 --out-dir tr"), 0) << read("err.txt");
    }

    fs::path dir_;
};

}  // namespace

TEST(RunConfig, JsonRoundTrip) {
    RunConfig c;
    c.command = "evaluate";
    c.seed = 123456789012345ull;
    c.log.path = "x.xes";
    c.log.format = LogFormat::Xes;
    c.log.activity_prefixes = {"W_"};
    c.log.lifecycle = "complete";
    c.model.heads = 2;
    c.model.d_model = 8;
    c.model.attention_mode = AttentionMode::FrozenUniform;
    c.thresholds.delta_edge = 0.4;
    c.explain.method = ExplainMethod::Backward;
    c.explain.normalization = RowNormalization::ClampNegative;
    c.explain.cell = RelevanceCell::LastMaskedColumn;
    c.explain.prune = false;
    c.evaluate.average = F1Average::Macro;
    c.exp1.scope = DistributionScope::PerHead;
    const auto text = to_json(c);
    const auto back = merge_json(RunConfig{}, text);
    EXPECT_EQ(to_json(back), text);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.thresholds.delta_edge, 0.4);
    EXPECT_EQ(back.explain.cell, RelevanceCell::LastMaskedColumn);
}

TEST(RunConfig, PartialFileKeepsDefaults) {
    const auto c = merge_json(RunConfig{}, R"({"seed": 5, "model": {"epochs": 2}, "thresholds": {"delta_edge": null}})");
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.model.epochs, 2u);
    EXPECT_EQ(c.model.heads, 4u);
    EXPECT_FALSE(c.thresholds.delta_edge.has_value());
    EXPECT_EQ(c.train_frac, 0.7);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    auto kind = [](const std::string& text) {
        try {
            merge_json(RunConfig{}, text);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Io;  // sentinel: nothing thrown
    };
    EXPECT_EQ(kind(R"({"sede": 1})"), ErrorKind::Schema);
    EXPECT_EQ(kind(R"({"model": {"epoch": 1}})"), ErrorKind::Schema);
    EXPECT_EQ(kind(R"({"seed": "one"})"), ErrorKind::Schema);
    EXPECT_EQ(kind(R"({"explain": {"method": "forward"}})"), ErrorKind::Usage);
    EXPECT_EQ(kind("{"), ErrorKind::Parse);
    RunConfig c;
    c.train_frac = 1.0;
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.evaluate.sample_frac = 0.0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(PrefixFile, LabelsTargetsAndUnknowns) {
    const Vocabulary v({"A", "B"});
    std::size_t skipped = 0;
    auto p = parse_prefix_file(R"([["A", "B"], {"activities": ["B", "_"], "target": "A"}, ["Z"]])", v, &skipped);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].activities, (std::vector<ActivityId>{0, 1}));
    EXPECT_EQ(p[0].target, v.end());
    EXPECT_EQ(p[1].activities, (std::vector<ActivityId>{1, v.pad()}));
    EXPECT_EQ(p[1].target, 0u);
    EXPECT_EQ(skipped, 1u);
    EXPECT_THROW(parse_prefix_file("{}", v, nullptr), Error);
    EXPECT_THROW(parse_prefix_file("[[]]", v, nullptr), Error);
}

TEST_F(CliTest, StatsOfSequenceLog) {
    ASSERT_EQ(run("synth --tree 'seq(A, B, C, D, E)' --traces 5 --out-dir syn"), 0);
    ASSERT_EQ(run("stats --log syn/log.csv --out-dir st"), 0);
    auto j = json::parse(read("st/stats.json"));
    EXPECT_EQ(j["cases"], 5);
    EXPECT_EQ(j["variants"], 1);
    EXPECT_EQ(j["activities"], 5);
    EXPECT_EQ(j["events"], 25);
    EXPECT_EQ(read("st/stats.csv"), "cases,activities,events,avg_len,max_len,variants\n5,5,25,5.00,5,1\n");
}

TEST_F(CliTest, ExitCodes) {
    write("empty.csv", "");
    EXPECT_EQ(run("stats --log empty.csv --out-dir st"), exit_code(ErrorKind::EmptyLog));
    EXPECT_NE(exit_code(ErrorKind::EmptyLog), 0);
    EXPECT_EQ(run("stats --log missing.csv --out-dir st"), exit_code(ErrorKind::Io));
    EXPECT_EQ(run("explain sideways --log x.csv"), exit_code(ErrorKind::Usage));
    EXPECT_EQ(run("train --epochs many"), exit_code(ErrorKind::Usage));
    EXPECT_EQ(run("synth --tree 'seq(A,' --out-dir s"), exit_code(ErrorKind::Spec));
    EXPECT_EQ(run("prestudy exp2 --log x.csv --checkpoint nope.ckpt"), exit_code(ErrorKind::Io));
    EXPECT_NE(read("err.txt").find("checkpoint not found"), std::string::npos);
    EXPECT_EQ(run("prestudy exp2 --log x.csv"), exit_code(ErrorKind::Usage));
    EXPECT_EQ(run("train --log x.csv --heads 5"), exit_code(ErrorKind::Usage));
    write("bad.json", R"({"model": {"epoch": 3}})");
    EXPECT_EQ(run("train --config bad.json --log x.csv"), exit_code(ErrorKind::Schema));
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, TrainSequenceIsExactAndRepeatable) {
    seq_model();
    auto report = json::parse(read("tr/train_report.json"));
    EXPECT_NEAR(report["test"]["weighted_f1"].get<double>(), 1.0, 0.01);
    ASSERT_EQ(run("train --log syn/log.csv --seed 1 --out-dir tr2"), 0);
    EXPECT_EQ(read("tr/model.ckpt"), read("tr2/model.ckpt"));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
    ASSERT_EQ(run("synth --tree 'seq(A, B)' --traces 20 --out-dir syn"), 0);
    write("cfg.json", R"({"seed": 3, "model": {"epochs": 1, "heads": 2, "d_model": 8}})");
    ASSERT_EQ(run("train --config cfg.json --log syn/log.csv --epochs 2 --out-dir tr"), 0) << read("err.txt");
    auto resolved = json::parse(read("tr/resolved_config.json"));
    EXPECT_EQ(resolved["seed"], 3);
    EXPECT_EQ(resolved["model"]["epochs"], 2);
    EXPECT_EQ(resolved["model"]["heads"], 2);
    EXPECT_EQ(resolved["command"], "train");
    EXPECT_EQ(json::parse(read("tr/train_report.json"))["epoch_loss"].size(), 2u);
}

TEST_F(CliTest, SynthSpecFileAndFlagPrecedence) {
    write("demo.spec", "name = demo\ntree = seq(A, xor(B, C))\ntraces = 12\nseed = 9\n");
    ASSERT_EQ(run("synth --spec demo.spec --traces 7 --out-dir syn"), 0) << read("err.txt");
    auto summary = json::parse(read("syn/synth.json"));
    EXPECT_EQ(summary["name"], "demo");
    EXPECT_EQ(summary["traces"], 7);
    EXPECT_EQ(summary["seed"], 9);
    EXPECT_EQ(read("syn/ground_truth.edges"), "A -> B\nA -> C\n");
    ASSERT_EQ(run("synth --config syn/resolved_config.json --out-dir again"), 0);
    EXPECT_EQ(read("syn/log.csv"), read("again/log.csv"));
}

TEST_F(CliTest, BackwardSequenceContainsChain) {
    seq_model("seq(A, B, C, D, E)");
    EXPECT_EQ(json::parse(read("tr/train_report.json"))["test"]["accuracy"], 1.0);
    ASSERT_EQ(run("explain backward --log syn/log.csv --checkpoint tr/model.ckpt --seed 1 --out-dir bw"), 0)
        << read("err.txt");
    const auto dot = read("bw/graph.dot");
    for (const char* e : {"A -> B;", "B -> C;", "C -> D;", "D -> E;"}) EXPECT_NE(dot.find(e), std::string::npos) << e;
    auto provenance = json::parse(read("bw/provenance.json"));
    EXPECT_EQ(provenance["method"], "backward");
    EXPECT_EQ(provenance["prefix_source"], "test-split");
    EXPECT_GT(provenance["prefix_count"].get<int>(), 0);
    EXPECT_EQ(provenance["thresholds"]["delta_edge"].get<double>(), 1.5 / 5.0);
}

TEST_F(CliTest, EdgeThresholdCeilingGivesNoEdges) {
    seq_model();
    ASSERT_EQ(run("explain attention-exploration --log syn/log.csv --checkpoint tr/model.ckpt --delta-edge 1.0 "
                  "--out-dir ae"),
              0)
        << read("err.txt");
    auto graph = json::parse(read("ae/graph.json"));
    EXPECT_TRUE(graph["edges"].empty());
    EXPECT_EQ(graph["vertices"].size(), 3u);
}

TEST_F(CliTest, Exp2RowsPerPosition) {
    seq_model();
    write("p.json", R"([["A"], ["A", "B"], ["A", "B", "C"]])");
    ASSERT_EQ(run("prestudy exp2 --checkpoint tr/model.ckpt --prefixes p.json --out-dir e2"), 0) << read("err.txt");
    EXPECT_EQ(json::parse(read("e2/exp2.json"))["values"], 1 + 2 + 3);
    const auto csv = read("e2/exp2.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6);
}

TEST_F(CliTest, Exp1SingleRepeat) {
    ASSERT_EQ(run("synth --tree 'seq(A, xor(B, C))' --traces 30 --out-dir syn"), 0);
    ASSERT_EQ(run("prestudy exp1 --log syn/log.csv --repeats 1 --epochs 1 --out-dir e1"), 0) << read("err.txt");
    auto j = json::parse(read("e1/exp1.json"));
    EXPECT_EQ(j["points"].size(), 1u);
}

TEST_F(CliTest, EvaluateSampleIsDeterministicAndReportsNulls) {
    seq_model();
    const std::string args = "evaluate --method backward --log syn/log.csv --checkpoint tr/model.ckpt --seed 4 "
                             "--sample-frac 0.5 --out-dir ";
    ASSERT_EQ(run(args + "ev1"), 0) << read("err.txt");
    ASSERT_EQ(run(args + "ev2"), 0);
    EXPECT_EQ(read("ev1/report.json"), read("ev2/report.json"));
    auto j = json::parse(read("ev1/report.json"));
    for (const char* m : {"correctness", "continuity", "contrastivity"}) {
        ASSERT_TRUE(j["metrics"][m].contains("nulls")) << m;
        ASSERT_TRUE(j["metrics"][m].contains("n")) << m;
    }
    EXPECT_EQ(j["sample_frac"], 0.5);
}

TEST_F(CliTest, ThreadCountDoesNotChangeOutputs) {
    seq_model();
    const std::string args = "evaluate --method attention-exploration --log syn/log.csv --checkpoint tr/model.ckpt ";
    ASSERT_EQ(run(args + "--threads 1 --out-dir t1"), 0) << read("err.txt");
    ASSERT_EQ(run(args + "--threads 3 --out-dir t3"), 0) << read("err.txt");
    EXPECT_EQ(read("t1/report.json"), read("t3/report.json"));
}
