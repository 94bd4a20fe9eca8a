#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "attnxp/error.hpp"
#include "attnxp/metrics.hpp"
#include "attnxp/rng.hpp"
#include "attnxp/synth.hpp"
#include "support/fixtures.hpp"

using namespace attnxp;
using attnxp::testing::MockModel;

namespace {

class ConstantExplainer final : public Explainer {
public:
    explicit ConstantExplainer(ExplanationGraph g) : g_(std::move(g)) {}
    std::string name() const override { return "constant"; }
    ExplanationGraph explain(const SequenceModel&, const std::vector<Prefix>&) const override { return g_; }

private:
    ExplanationGraph g_;
};

// Explains a single prefix by pointing its last activity at a fixed set that
// depends on that activity.
class LastActivityExplainer final : public Explainer {
public:
    explicit LastActivityExplainer(std::map<std::string, std::set<std::string>> rhs) : rhs_(std::move(rhs)) {}
    std::string name() const override { return "last"; }
    ExplanationGraph explain(const SequenceModel& m, const std::vector<Prefix>& prefixes) const override {
        ExplanationGraph g;
        for (const auto& p : prefixes) {
            std::string last;
            for (auto a : p.activities)
                if (m.vocabulary().is_activity(a)) last = m.vocabulary().label(a);
            g.add_vertex(last);
            for (const auto& v : rhs_.at(last)) g.add_edge(last, v);
        }
        return g;
    }

private:
    std::map<std::string, std::set<std::string>> rhs_;
};

ExplanationGraph joined_graph() { return attnxp::testing::joined_graph_fixture().expected; }

}  // namespace

TEST(Rules, FromJoinedGraph) {
    auto rules = graph_to_rules(joined_graph());
    ASSERT_EQ(rules.size(), 4u);
    EXPECT_EQ(rules.at("A").rhs, (std::set<std::string>{"C"}));
    EXPECT_EQ(rules.at("B").rhs, (std::set<std::string>{"B", "D"}));
    EXPECT_EQ(rules.at("C").rhs, (std::set<std::string>{"B", "D"}));
    EXPECT_TRUE(rules.at("D").rhs.empty());
    EXPECT_TRUE(graph_to_rules(ExplanationGraph{}).empty());
    ExplanationGraph loop;
    loop.add_edge("X", "X");
    EXPECT_EQ(graph_to_rules(loop).at("X").rhs, (std::set<std::string>{"X"}));
}

TEST(Compactness, MeanRhsIsEdgesOverVertices) {
    auto c = compactness(graph_to_rules(joined_graph()));
    EXPECT_EQ(c.rule_count, 4u);
    EXPECT_EQ(c.mean_rhs, 1.25);
    EXPECT_EQ(c.mean_rhs, 5.0 / 4.0);
    RuleSet single{{"X", Rule{"X", {}}}};
    EXPECT_EQ(compactness(single).rule_count, 1u);
    EXPECT_EQ(compactness(single).mean_rhs, 0.0);
    EXPECT_EQ(compactness(RuleSet{}).rule_count, 0u);
}

TEST(Statistic, PopulationStdAndNulls) {
    auto s = Statistic::from_values({1.0, std::nullopt, 3.0});
    EXPECT_EQ(s.mean, 2.0);
    EXPECT_EQ(s.std, 1.0);
    EXPECT_EQ(s.n, 2u);
    EXPECT_EQ(s.nulls, 1u);
    auto none = Statistic::from_values({std::nullopt});
    EXPECT_FALSE(none.mean.has_value());
}

TEST(Pearson, Cases) {
    EXPECT_DOUBLE_EQ(*pearson({0.4, 0.1, 0.1}, {1.0, 0.0, 0.0}), 1.0);
    EXPECT_DOUBLE_EQ(*pearson({1.0, 2.0, 3.0}, {3.0, 2.0, 1.0}), -1.0);
    EXPECT_FALSE(pearson({1.0, 1.0}, {0.0, 1.0}).has_value());
    EXPECT_FALSE(pearson({1.0, 2.0}, {1.0, 1.0}).has_value());
    EXPECT_THROW(pearson({1.0}, {1.0, 2.0}), Error);
}

TEST(Jaccard, Arithmetic) {
    EXPECT_EQ(jaccard({"B", "C"}, {"B"}), 0.5);
    EXPECT_DOUBLE_EQ(1.0 - jaccard({"B", "C"}, {"C", "D"}), 2.0 / 3.0);
    EXPECT_EQ(jaccard({}, {}), 1.0);
    EXPECT_EQ(jaccard({"A"}, {"B"}), 0.0);
}

TEST(Correctness, CoMonotoneIsOne) {
    // Masking A changes the prediction a lot, masking B or C a little.
    MockModel m({"A", "B", "C", "D"}, 3);
    m.set_prediction({"A", "B", "C"}, {{"D", 0.9}, {"<END>", 0.1}});
    m.set_prediction({"_", "B", "C"}, {{"D", 0.1}, {"<END>", 0.9}});
    m.set_prediction({"A", "_", "C"}, {{"D", 0.8}, {"<END>", 0.2}});
    m.set_prediction({"A", "B", "_"}, {{"D", 0.8}, {"<END>", 0.2}});
    RuleSet rules{{"A", Rule{"A", {"D"}}}, {"B", Rule{"B", {}}}, {"C", Rule{"C", {}}}};
    std::vector<Prefix> prefixes{{m.ids({"A", "B", "C"}), 3, ""}};
    auto s = correctness(m, rules, prefixes);
    ASSERT_TRUE(s.mean.has_value());
    EXPECT_DOUBLE_EQ(*s.mean, 1.0);

    // Constant explainer importance: undefined, reported as N.
    RuleSet none{{"A", Rule{"A", {}}}};
    auto u = correctness(m, none, prefixes);
    EXPECT_FALSE(u.mean.has_value());
    EXPECT_EQ(u.nulls, 1u);
}

TEST(Completeness, CraftedTwoTpOneFpOneFn) {
    auto f = attnxp::testing::completeness_fixture();
    auto r = completeness(f.model, f.rules, f.prefixes, Thresholds{});
    EXPECT_EQ(r.tp, 2u);
    EXPECT_EQ(r.fp, 1u);
    EXPECT_EQ(r.fn, 1u);
    EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
    auto empty = completeness(f.model, RuleSet{}, f.prefixes, Thresholds{});
    EXPECT_EQ(empty.recall, 0.0);
    EXPECT_EQ(empty.precision, 0.0);
    EXPECT_EQ(empty.f1, 0.0);
}

TEST(Completeness, MatchesBruteForceTally) {
    const std::vector<std::string> labels{"A", "B", "C", "D"};
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        MockModel m(labels, 3);
        std::vector<Prefix> prefixes;
        const std::size_t n = 1 + rng.below(5);
        for (std::size_t i = 0; i < n; ++i) {
            MockModel::LabelPrefix p;
            for (std::size_t k = 0, len = 1 + rng.below(3); k < len; ++k) p.push_back(labels[rng.below(4)]);
            std::map<std::string, double> probs;
            double left = 1.0;
            for (const auto& l : labels) {
                double v = left * rng.uniform();
                probs[l] = v;
                left -= v;
            }
            probs["<END>"] = left;
            m.set_prediction(p, probs);
            prefixes.push_back(Prefix{m.ids(p), 0, ""});
        }
        RuleSet rules;
        for (const auto& l : labels) {
            if (rng.uniform() < 0.2) continue;
            Rule r{l, {}};
            for (const auto& t : labels)
                if (rng.uniform() < 0.4) r.rhs.insert(t);
            rules[l] = r;
        }
        Thresholds th;
        th.delta_pred = 0.15;
        auto got = completeness(m, rules, prefixes, th);
        auto want = attnxp::testing::brute_force_tally(m, rules, prefixes, th.delta_pred);
        ASSERT_EQ(got.tp, want.tp);
        ASSERT_EQ(got.fp, want.fp);
        ASSERT_EQ(got.fn, want.fn);
        ASSERT_EQ(got.f1, want.f1());
    }
}

TEST(Completeness, MacroAverage) {
    auto f = attnxp::testing::completeness_fixture();
    auto r = completeness(f.model, f.rules, f.prefixes, Thresholds{}, F1Average::Macro);
    // B: tp; C: tp; D: fp and fn -> per-activity F1 (1, 1, 0).
    EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
}

TEST(ContinuityContrastivity, IdenticalExplanations) {
    MockModel m({"A", "B", "C"}, 3);
    ExplanationGraph g;
    for (const char* u : {"A", "B", "C"})
        for (const char* v : {"A", "B"}) g.add_edge(u, v);
    ConstantExplainer explainer(g);
    std::vector<Prefix> prefixes{{m.ids({"A", "B"}), 0, ""}, {m.ids({"B", "C", "A"}), 0, ""},
                                 {m.ids({"C"}), 0, ""}, {m.ids({"C", "B"}), 0, ""}};
    auto cont = continuity(m, explainer, prefixes, 3);
    EXPECT_EQ(cont.mean, 1.0);
    EXPECT_EQ(cont.n, 3u);  // the length-1 prefix is skipped
    auto contr = contrastivity(m, explainer, prefixes, 3);
    EXPECT_EQ(contr.mean, 0.0);
}

TEST(ContinuityContrastivity, DisjointExplanations) {
    MockModel m({"A", "B", "C", "D"}, 3);
    LastActivityExplainer explainer({{"A", {"B", "C"}}, {"B", {"D"}}, {"C", {"C", "D"}}, {"D", {}}});
    std::vector<Prefix> prefixes{{m.ids({"A"}), 0, ""}, {m.ids({"B"}), 0, ""}};
    auto c = contrastivity(m, explainer, prefixes, 1);
    EXPECT_EQ(c.mean, 1.0);
    std::vector<Prefix> overlap{{m.ids({"A"}), 0, ""}, {m.ids({"C"}), 0, ""}};
    EXPECT_DOUBLE_EQ(*contrastivity(m, explainer, overlap, 1).mean, 2.0 / 3.0);
    std::vector<Prefix> same_last{{m.ids({"A"}), 0, ""}, {m.ids({"B", "A"}), 0, ""}};
    auto undefined = contrastivity(m, explainer, same_last, 1);
    EXPECT_FALSE(undefined.mean.has_value());

    // <B,A> masked at position 1 fires B's rule ({D}) instead of A's ({B,C}).
    std::vector<Prefix> one{{m.ids({"B", "A"}), 0, ""}};
    auto cont = continuity(m, explainer, one, 0);
    ASSERT_TRUE(cont.mean.has_value());
    EXPECT_TRUE(*cont.mean == 0.0 || *cont.mean == 1.0);
}

TEST(Contrastivity, PairCap) {
    MockModel m({"A", "B", "C", "D"}, 1);
    LastActivityExplainer explainer({{"A", {"B"}}, {"B", {"C"}}, {"C", {"D"}}, {"D", {"A"}}});
    std::vector<Prefix> prefixes;
    for (int i = 0; i < 40; ++i) prefixes.push_back(Prefix{{static_cast<ActivityId>(i % 4)}, 0, ""});
    auto s = contrastivity(m, explainer, prefixes, 5, 100);
    EXPECT_EQ(s.n, 100u);
    auto all = contrastivity(m, explainer, prefixes, 5);
    EXPECT_EQ(all.n, 600u);  // 40 choose 2 minus same-last pairs
}

TEST(Sampling, DeterministicFraction) {
    std::vector<Prefix> prefixes;
    for (ActivityId i = 0; i < 50; ++i) prefixes.push_back(Prefix{{i}, 0, ""});
    auto a = sample_prefixes(prefixes, 0.2, 9);
    EXPECT_EQ(a.size(), 10u);
    EXPECT_EQ(a, sample_prefixes(prefixes, 0.2, 9));
    EXPECT_EQ(sample_prefixes(prefixes, 1.0, 9), prefixes);
    EXPECT_THROW(sample_prefixes(prefixes, 0.0, 9), Error);
}

TEST(EvaluateAll, ReportRoundTripAndDeterminism) {
    SynthSpec s;
    s.tree = parse_process_tree("seq(A, B, C)");
    auto r = synth_log(s, 200, 3);
    ModelConfig c;
    c.seed = 2;
    auto model = train(r.log, c);
    auto prefixes = extract_prefixes(r.log);
    BackwardExplainer bw(Thresholds{}, BackwardOptions{}, 4);
    EvaluationOptions opts;
    opts.sample_frac = 0.2;
    auto a = evaluate_all(model, bw, prefixes, Thresholds{}, opts, 8);
    opts.threads = 3;
    auto b = evaluate_all(model, bw, prefixes, Thresholds{}, opts, 8);
    EXPECT_EQ(report_json(a), report_json(b));
    EXPECT_EQ(report_raw_csv(a), report_raw_csv(b));

    auto back = report_from_json(report_json(a));
    EXPECT_EQ(report_json(back).size() > 0, true);
    EXPECT_EQ(back.completeness.f1, a.completeness.f1);
    EXPECT_EQ(back.correctness.mean, a.correctness.mean);
    EXPECT_EQ(back.continuity.n, a.continuity.n);
    EXPECT_EQ(back.graph, a.graph);
    EXPECT_EQ(back.compactness.rule_count, a.compactness.rule_count);
    EXPECT_EQ(a.completeness.f1, 1.0);  // the chain forces agreement

    auto j = nlohmann::json::parse(report_json(a));
    for (const char* k : {"correctness", "completeness", "continuity", "contrastivity", "compactness"}) {
        EXPECT_TRUE(j["metrics"][k].contains("mean")) << k;
        EXPECT_TRUE(j["metrics"][k].contains("std")) << k;
    }
    EXPECT_NE(report_table(a).find("completeness"), std::string::npos);
    EXPECT_THROW(report_from_json("{}"), Error);
}
