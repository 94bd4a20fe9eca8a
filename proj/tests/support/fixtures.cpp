#include "support/fixtures.hpp"

namespace attnxp::testing {

JoinedGraphFixture joined_graph_fixture() {
    MockModel m({"A", "B", "C", "D", "E"}, 5);
    m.set_weight("B", 10.0);
    m.set_weight("C", 15.0);
    const std::map<std::string, double> p1{{"A", 0.02}, {"B", 0.45}, {"C", 0.02},
                                           {"D", 0.45}, {"E", 0.02}, {"<END>", 0.04}};
    // Masking only A or E keeps the prediction; anything else falls back to END.
    for (const auto& variant : std::vector<MockModel::LabelPrefix>{{"B", "A", "C", "B", "E"},
                                                                  {"B", "_", "C", "B", "E"},
                                                                  {"B", "A", "C", "B", "_"},
                                                                  {"B", "_", "C", "B", "_"}})
        m.set_prediction(variant, p1);
    m.set_prediction({"A"}, {{"C", 0.9}, {"<END>", 0.1}});

    JoinedGraphFixture f{m, {}, {}};
    f.prefixes.push_back(Prefix{m.ids({"B", "A", "C", "B", "E"}), *m.vocabulary().find("D"), "s1"});
    f.prefixes.push_back(Prefix{m.ids({"A"}), *m.vocabulary().find("C"), "s2"});
    for (const auto& [u, v] : std::vector<std::pair<std::string, std::string>>{
             {"C", "B"}, {"B", "B"}, {"B", "D"}, {"C", "D"}, {"A", "C"}})
        f.expected.add_edge(u, v);
    return f;
}

CompletenessFixture completeness_fixture() {
    MockModel m({"A", "B", "C", "D"}, 4);
    m.set_prediction({"A"}, {{"B", 0.9}, {"<END>", 0.1}});
    m.set_prediction({"A", "B"}, {{"C", 0.8}, {"<END>", 0.2}});
    m.set_prediction({"A", "B", "C"}, {{"D", 0.95}, {"<END>", 0.05}});
    // <D> falls back to END only: nothing likely.
    CompletenessFixture f{m, {}, {}};
    f.rules["A"] = Rule{"A", {"B"}};
    f.rules["B"] = Rule{"B", {"C", "D"}};
    f.rules["C"] = Rule{"C", {}};
    for (const auto& labels : std::vector<MockModel::LabelPrefix>{{"A"}, {"A", "B"}, {"A", "B", "C"}, {"D"}})
        f.prefixes.push_back(Prefix{m.ids(labels), 0, ""});
    return f;
}

double Tally::f1() const {
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

Tally brute_force_tally(const SequenceModel& model, const RuleSet& rules, const std::vector<Prefix>& prefixes,
                        double delta_pred) {
    const auto& v = model.vocabulary();
    Tally t;
    for (const auto& pf : prefixes) {
        std::string last;
        for (auto a : pf.activities)
            if (v.is_activity(a)) last = v.label(a);
        const auto probs = model.forward(pf.activities).prediction;
        for (ActivityId a = 0; a < v.size(); ++a) {
            bool predicted = false;
            for (const auto& [lhs, rule] : rules)
                if (lhs == last && rule.rhs.count(v.label(a))) predicted = true;
            const bool actual = probs[a] > delta_pred;
            if (predicted && actual) ++t.tp;
            if (predicted && !actual) ++t.fp;
            if (!predicted && actual) ++t.fn;
        }
    }
    return t;
}

}  // namespace attnxp::testing
