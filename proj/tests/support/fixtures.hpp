#pragma once

#include <array>
#include <vector>

#include "attnxp/explain.hpp"
#include "attnxp/metrics.hpp"
#include "support/mock_model.hpp"

namespace attnxp::testing {

// Two prefixes over {A..E}: <B,A,C,B,E> with relevant {B,C} and likely {B,D},
// then <A> with relevant {A} and likely {C}.
struct JoinedGraphFixture {
    MockModel model;
    std::vector<Prefix> prefixes;
    ExplanationGraph expected;
};
JoinedGraphFixture joined_graph_fixture();

// Hand-traced relevance-score instance over {A, B, C}:
//   prefix <A,B,C>, masked <A,_,C>, likely {B, C}, sim_eps 0.05
//   psi   = (0.5, 1.0, 0.25)    psi_m = (1.0, 0.0, 0.5)
//   p     = (0.1, 0.3, 0.5, END 0.1)
//   p_m   = (0.1, 0.32, 0.2, END 0.38)
// Row B is "similar" (|0.3 - 0.32| <= 0.05), row C is not.
struct RelevanceFixture {
    Vocabulary vocabulary{std::vector<std::string>{"A", "B", "C"}};
    std::vector<ActivityId> prefix{0, 1, 2};
    std::vector<ActivityId> masked{0, 3, 2};
    ActivityScoreVector psi{{0.5, 1.0, 0.25}};
    ActivityScoreVector psi_masked{{1.0, 0.0, 0.5}};
    PredictionVector prediction{{0.1, 0.3, 0.5, 0.1}};
    PredictionVector prediction_masked{{0.1, 0.32, 0.2, 0.38}};
    std::vector<ActivityId> likely{1, 2};
    double sim_eps = 0.05;

    // Row B: K(B,B) = -0.3 * 1.0; K(B,A) = 1.0 * 0.3; K(B,C) = 0.5 * 0.3
    // Row C: K(C,B) = 0.5 * 1.0;  K(C,A) = |0.5 - 1.0| * |0.5 - 0.2|;
    //        K(C,C) = |0.25 - 0.5| * |0.5 - 0.2|
    std::array<std::array<double, 3>, 3> expected{{{0.0, 0.0, 0.0}, {0.3, -0.3, 0.15}, {0.15, 0.5, 0.075}}};
    // Literal reading: every non-masked contribution lands in column B.
    std::array<std::array<double, 3>, 3> expected_literal{{{0.0, 0.0, 0.0}, {0.0, 0.15, 0.0}, {0.0, 0.725, 0.0}}};
};

// Four prefixes whose rule-vs-likely comparison yields 2 TP, 1 FP, 1 FN.
struct CompletenessFixture {
    MockModel model;
    RuleSet rules;
    std::vector<Prefix> prefixes;
};
CompletenessFixture completeness_fixture();

// Brute-force multi-label tally: loops over every (prefix, activity) cell.
struct Tally {
    std::size_t tp = 0, fp = 0, fn = 0;
    double f1() const;
};
Tally brute_force_tally(const SequenceModel& model, const RuleSet& rules, const std::vector<Prefix>& prefixes,
                        double delta_pred);

}  // namespace attnxp::testing
