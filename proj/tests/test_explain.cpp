#include <gtest/gtest.h>

#include <algorithm>

#include "attnxp/error.hpp"
#include "attnxp/explain.hpp"
#include "attnxp/synth.hpp"
#include "support/fixtures.hpp"

using namespace attnxp;
using attnxp::testing::MockModel;

namespace {

ExplanationGraph graph_of(std::initializer_list<std::pair<const char*, const char*>> edges) {
    ExplanationGraph g;
    for (const auto& [u, v] : edges) g.add_edge(u, v);
    return g;
}

}  // namespace

TEST(Thresholds, DefaultsAndValidation) {
    Thresholds t;
    EXPECT_DOUBLE_EQ(t.edge_threshold(4), 0.375);
    t.delta_edge = 0.2;
    EXPECT_EQ(t.edge_threshold(4), 0.2);
    EXPECT_NO_THROW(t.validate());
    t.delta_pred = 1.5;
    EXPECT_THROW(t.validate(), Error);
    t = Thresholds{};
    t.delta_edge = -0.1;
    EXPECT_THROW(t.validate(), Error);
}

TEST(Graph, MergeAndPrune) {
    auto g = graph_of({{"A", "B"}});
    g.merge(graph_of({{"B", "C"}, {"A", "C"}}));
    EXPECT_EQ(g.vertices.size(), 3u);
    EXPECT_EQ(g.edges.size(), 3u);
    g.prune_shortcuts("B");
    EXPECT_FALSE(g.has_edge("A", "C"));
    EXPECT_TRUE(g.has_edge("A", "B"));
    EXPECT_TRUE(g.has_edge("B", "C"));
    EXPECT_EQ(g.vertices.size(), 3u);

    // Self-loops on the pivot are not shortcuts.
    auto s = graph_of({{"B", "B"}, {"C", "B"}});
    s.prune_shortcuts("B");
    EXPECT_EQ(s.edges.size(), 2u);
}

TEST(LikelyNext, ThresholdIsStrict) {
    Vocabulary v({"A", "B", "C", "D"});
    PredictionVector p{{0.05, 0.45, 0.4, 0.05, 0.05}};
    Thresholds t;
    t.delta_pred = 0.3;
    EXPECT_EQ(likely_next(p, t, v), (std::vector<ActivityId>{1, 2}));
    t.delta_pred = 0.4;
    EXPECT_EQ(likely_next(p, t, v), (std::vector<ActivityId>{1}));
    // END never counts as a likely activity.
    PredictionVector end_only{{0.0, 0.0, 0.0, 0.0, 1.0}};
    EXPECT_TRUE(likely_next(end_only, Thresholds{}, v).empty());
}

TEST(RelevanceScore, HandTracedFixture) {
    attnxp::testing::RelevanceFixture f;
    auto k = compute_relevance_score(f.prefix, f.masked, f.psi, f.psi_masked, f.prediction, f.prediction_masked,
                                     f.likely, f.sim_eps, f.vocabulary);
    auto lit = compute_relevance_score(f.prefix, f.masked, f.psi, f.psi_masked, f.prediction, f.prediction_masked,
                                       f.likely, f.sim_eps, f.vocabulary, RelevanceCell::LastMaskedColumn);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            EXPECT_NEAR(k.values(r, c), f.expected[r][c], 1e-12) << r << "," << c;
            EXPECT_NEAR(lit.values(r, c), f.expected_literal[r][c], 1e-12) << r << "," << c;
        }
}

TEST(RelevanceScore, EmptyLikelyGivesZero) {
    attnxp::testing::RelevanceFixture f;
    auto k = compute_relevance_score(f.prefix, f.masked, f.psi, f.psi_masked, f.prediction, f.prediction_masked, {},
                                     f.sim_eps, f.vocabulary);
    EXPECT_EQ(k.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RelevanceScore, SimilarMaskedActivityIsNegative) {
    Vocabulary v({"A", "B"});
    const std::vector<ActivityId> prefix{0}, masked{2};
    ActivityScoreVector psi{{0.8, 0.0}}, psi_m{{0.0, 0.0}};
    PredictionVector p{{0.1, 0.7, 0.2}}, pm{{0.1, 0.72, 0.18}};
    const std::vector<ActivityId> likely{1};
    auto k = compute_relevance_score(prefix, masked, psi, psi_m, p, pm, likely, 0.05, v);
    EXPECT_EQ(k.values(1, 0), -0.7 * 0.8);
    // Flipping only the similarity outcome flips the sign exactly.
    auto flipped = compute_relevance_score(prefix, masked, psi, psi_m, p, pm, likely, 0.0, v);
    EXPECT_EQ(flipped.values(1, 0), 0.7 * 0.8);
}

TEST(RelevanceScore, LengthMismatch) {
    Vocabulary v({"A"});
    const std::vector<ActivityId> a{0, 0}, b{0};
    EXPECT_THROW(compute_relevance_score(a, b, {}, {}, {}, {}, {}, 0.05, v), Error);
}

TEST(NormalizeRows, Variants) {
    Matrix m(3, 3);
    m << 1.0, -1.0, 1.0,  //
        0.0, 0.0, 0.0,    //
        2.0, 2.0, 4.0;
    auto clamp = normalize_rows(m, RowNormalization::ClampNegative);
    EXPECT_DOUBLE_EQ(clamp(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(clamp(0, 1), 0.0);
    EXPECT_EQ(clamp.row(1).cwiseAbs().sum(), 0.0);
    EXPECT_DOUBLE_EQ(clamp(2, 2), 0.5);
    auto shift = normalize_rows(m, RowNormalization::ShiftByMin);
    EXPECT_DOUBLE_EQ(shift(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(shift(0, 1), 0.0);
    EXPECT_EQ(shift.row(1).cwiseAbs().sum(), 0.0);
    for (int r : {0, 2}) EXPECT_NEAR(shift.row(r).sum(), 1.0, 1e-15);
}

TEST(ExplorationGraph, AdjacencyReading) {
    Vocabulary v({"A", "B", "C", "D"});
    auto few = ScoreMatrix::zeros(4, Scenario::Few);
    auto most = ScoreMatrix::zeros(4, Scenario::Most);
    auto empty = build_exploration_graph(few, most, v, 0.375, RowNormalization::ShiftByMin);
    EXPECT_TRUE(empty.graph.edges.empty());
    EXPECT_EQ(empty.graph.vertices.size(), 4u);

    few.values(3, 1) = 2.0;  // row D, column B
    auto one = build_exploration_graph(few, most, v, 0.375, RowNormalization::ShiftByMin);
    EXPECT_EQ(one.graph.edges, (std::set<std::pair<std::string, std::string>>{{"B", "D"}}));
    EXPECT_TRUE(one.adjacency[3][1]);

    // delta_edge = 1 admits nothing: row-normalised entries never exceed 1.
    most.values(0, 2) = 1.0;
    most.values(2, 0) = 0.3;
    most.values(2, 1) = 0.7;
    auto none = build_exploration_graph(few, most, v, 1.0, RowNormalization::ShiftByMin);
    EXPECT_TRUE(none.graph.edges.empty());
}

TEST(Backward, JoinedGraphReplay) {
    auto f = attnxp::testing::joined_graph_fixture();
    std::vector<LocalExplanation> locals;
    auto g = backward_explain(f.model, f.prefixes, Thresholds{}, BackwardOptions{}, 1, &locals);
    EXPECT_EQ(g, f.expected);
    ASSERT_EQ(locals.size(), 2u);
    EXPECT_EQ(locals[0].graph, graph_of({{"C", "B"}, {"B", "B"}, {"B", "D"}, {"C", "D"}}));
    EXPECT_EQ(locals[1].graph, graph_of({{"A", "C"}}));
    EXPECT_EQ(g.vertices, (std::set<std::string>{"A", "B", "C", "D"}));
}

TEST(Backward, PruningThroughLastActivity) {
    MockModel m({"A", "B", "C"}, 3);
    m.set_weight("A", 5.0);
    m.set_weight("B", 5.0);
    m.set_prediction({"A"}, {{"B", 1.0}});
    m.set_prediction({"A", "B"}, {{"C", 1.0}});
    std::vector<Prefix> prefixes{{m.ids({"A"}), 1, ""}, {m.ids({"A", "B"}), 2, ""}};
    // <A,B> yields A->C and B->C; A->B exists from <A>, so A->C is a shortcut via B.
    auto pruned = backward_explain(m, prefixes, Thresholds{}, BackwardOptions{}, 4);
    EXPECT_EQ(pruned, graph_of({{"A", "B"}, {"B", "C"}}));
    BackwardOptions keep;
    keep.prune = false;
    auto full = backward_explain(m, prefixes, Thresholds{}, keep, 4);
    EXPECT_EQ(full, graph_of({{"A", "B"}, {"B", "C"}, {"A", "C"}}));
}

namespace {

struct TrainedSeq {
    TransformerModel model;
    std::vector<Prefix> prefixes;
    EdgeSet truth;
};

const TrainedSeq& trained_seq() {
    static const TrainedSeq t = [] {
        SynthSpec s;
        s.tree = parse_process_tree("seq(A, B, C)");
        auto r = synth_log(s, 200, 3);
        ModelConfig c;
        c.seed = 1;
        c.epochs = 20;
        auto model = train(r.log, c);
        return TrainedSeq{std::move(model), extract_prefixes(r.log), r.ground_truth};
    }();
    return t;
}

}  // namespace

TEST(Backward, OrderIndependentWithoutPruningAndProvenance) {
    const auto& t = trained_seq();
    std::vector<Prefix> sample(t.prefixes.begin(), t.prefixes.begin() + 12);
    BackwardOptions opts;
    opts.prune = false;
    std::vector<LocalExplanation> locals;
    auto g = backward_explain(t.model, sample, Thresholds{}, opts, 5, &locals);
    // Each local graph is seeded by position, so compare graphs built from the
    // same per-prefix locals merged in another order.
    ExplanationGraph reversed;
    for (auto it = locals.rbegin(); it != locals.rend(); ++it) reversed.merge(it->graph);
    EXPECT_EQ(g, reversed);

    const auto& v = t.model.vocabulary();
    for (const auto& [u, w] : g.edges) {
        bool found = false;
        for (const auto& l : locals) {
            bool in_r = std::any_of(l.relevant.begin(), l.relevant.end(), [&](ActivityId a) { return v.label(a) == u; });
            bool in_p = std::any_of(l.likely.begin(), l.likely.end(), [&](ActivityId a) { return v.label(a) == w; });
            found = found || (in_r && in_p);
        }
        EXPECT_TRUE(found) << u << " -> " << w;
    }
    auto again = backward_explain(t.model, sample, Thresholds{}, opts, 5);
    EXPECT_EQ(g, again);
    opts.threads = 3;
    EXPECT_EQ(backward_explain(t.model, sample, Thresholds{}, opts, 5), g);
}

TEST(AttentionExploration, RecoversSequenceChain) {
    const auto& t = trained_seq();
    auto r = attention_exploration(t.model, t.prefixes, Thresholds{}, ExplorationOptions{}, 3);
    for (const auto& e : t.truth) EXPECT_TRUE(r.graph.edges.count(e)) << e.first << " -> " << e.second;
    EXPECT_EQ(r.graph.vertices, (std::set<std::string>{"A", "B", "C"}));

    ExplorationOptions threaded;
    threaded.threads = 3;
    auto again = attention_exploration(t.model, t.prefixes, Thresholds{}, threaded, 3);
    EXPECT_EQ(again.graph, r.graph);
    EXPECT_TRUE(again.few.values == r.few.values);
}

TEST(AttentionExploration, SubsetCapSampling) {
    // Nine relevant positions exceed the exhaustive limit.
    MockModel m({"A", "B", "C", "D", "E", "F", "G", "H", "I"}, 9);
    m.set_fallback({{"A", 0.5}, {"<END>", 0.5}});
    std::vector<Prefix> prefixes{{m.ids({"A", "B", "C", "D", "E", "F", "G", "H", "I"}), 0, ""}};
    ExplorationOptions opts;
    opts.subset_cap = 16;
    auto r = attention_exploration(m, prefixes, Thresholds{}, opts, 1);
    auto r2 = attention_exploration(m, prefixes, Thresholds{}, opts, 1);
    EXPECT_TRUE(r.few.values == r2.few.values);
    EXPECT_TRUE(r.most.values == r2.most.values);
}

TEST(ExportGraph, DotAndJson) {
    ExplanationGraph empty;
    EXPECT_EQ(export_graph(empty, GraphFormat::Dot), "digraph explanation {\n  rankdir=LR;\n}\n");

    auto f = attnxp::testing::joined_graph_fixture();
    auto dot = export_graph(f.expected, GraphFormat::Dot);
    EXPECT_EQ(std::count(dot.begin(), dot.end(), '\n'), 2 + 4 + 5 + 1);
    EXPECT_NE(dot.find("A -> C;"), std::string::npos);
    EXPECT_EQ(graph_from_json(export_graph(f.expected, GraphFormat::Json)), f.expected);

    auto odd = graph_of({{"Check \"in\"", "pay-1"}, {"pay 1", "pay-1"}});
    auto odd_dot = export_graph(odd, GraphFormat::Dot);
    EXPECT_NE(odd_dot.find("label=\"Check \\\"in\\\"\""), std::string::npos);
    EXPECT_EQ(graph_from_json(export_graph(odd, GraphFormat::Json)), odd);

    EXPECT_THROW(graph_from_json("{"), Error);
    EXPECT_THROW(graph_from_json(R"({"vertices": [], "edges": [["A"]]})"), Error);
}

TEST(Explainers, PolymorphicHandles) {
    auto f = attnxp::testing::joined_graph_fixture();
    BackwardExplainer bw(Thresholds{}, BackwardOptions{}, 1);
    EXPECT_EQ(bw.name(), "backward");
    EXPECT_EQ(bw.explain(f.model, f.prefixes), f.expected);
    AttentionExplorationExplainer ae(Thresholds{}, ExplorationOptions{}, 1);
    EXPECT_EQ(ae.name(), "attention-exploration");
    EXPECT_EQ(ae.explain(f.model, f.prefixes).vertices.size(), 5u);
}
