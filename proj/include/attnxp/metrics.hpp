#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attnxp/explain.hpp"
#include "attnxp/transformer.hpp"

namespace attnxp {

// v -> S_v, the direct successors of v.
struct Rule {
    std::string lhs;
    std::set<std::string> rhs;

    bool operator==(const Rule&) const = default;
};

// Keyed by lhs; one rule per vertex.
using RuleSet = std::map<std::string, Rule>;

RuleSet graph_to_rules(const ExplanationGraph& graph);

// Mean and spread of per-prefix values; `n` counts defined values and
// `nulls` the undefined ones. An all-undefined metric has no mean.
struct Statistic {
    std::optional<double> mean;
    std::optional<double> std;
    std::size_t n = 0;
    std::size_t nulls = 0;
    std::vector<std::optional<double>> values;

    static Statistic from_values(std::vector<std::optional<double>> values);
};

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

// Pearson correlation between per-position masking importance (TVD after
// PAD-masking the position) and the graph's indicator of an edge from the
// position's activity to the predicted activity.
Statistic correctness(const SequenceModel& model, const RuleSet& rules, const std::vector<Prefix>& prefixes);

struct CompletenessResult {
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    Statistic per_prefix;  // per-prefix F1, for spread reporting
};

enum class F1Average { Micro, Macro };

// Rule for the last activity versus the model's likely next activities.
CompletenessResult completeness(const SequenceModel& model, const RuleSet& rules, const std::vector<Prefix>& prefixes,
                                const Thresholds& thresholds, F1Average average = F1Average::Micro);

// Rhs of the rule firing for the last non-PAD activity of `prefix` in the
// explanation computed for {prefix}.
std::set<std::string> firing_rhs(const SequenceModel& model, const Explainer& explainer, const Prefix& prefix);

Statistic continuity(const SequenceModel& model, const Explainer& explainer, const std::vector<Prefix>& prefixes,
                     std::uint64_t seed, std::size_t threads = 1);

inline constexpr std::size_t kContrastivityPairs = 1000;

Statistic contrastivity(const SequenceModel& model, const Explainer& explainer, const std::vector<Prefix>& prefixes,
                        std::uint64_t seed, std::size_t max_pairs = kContrastivityPairs, std::size_t threads = 1);

struct CompactnessResult {
    std::size_t rule_count = 0;
    double mean_rhs = 0.0;
    double std_rhs = 0.0;
};

CompactnessResult compactness(const RuleSet& rules);

struct MetricReport {
    std::string explainer;
    double sample_frac = 1.0;
    std::uint64_t seed = 0;
    std::size_t prefixes = 0;
    Statistic correctness;
    CompletenessResult completeness;
    Statistic continuity;
    Statistic contrastivity;
    CompactnessResult compactness;
    ExplanationGraph graph;
};

std::vector<Prefix> sample_prefixes(const std::vector<Prefix>& prefixes, double sample_frac, std::uint64_t seed);

struct EvaluationOptions {
    double sample_frac = 1.0;
    F1Average average = F1Average::Micro;
    std::size_t threads = 1;
};

// Samples prefixes, explains them, and scores the explanation.
MetricReport evaluate_all(const SequenceModel& model, const Explainer& explainer, const std::vector<Prefix>& prefixes,
                          const Thresholds& thresholds, const EvaluationOptions& options, std::uint64_t seed);

std::string report_json(const MetricReport& report);
MetricReport report_from_json(std::string_view text);
std::string report_table(const MetricReport& report);
std::string report_raw_csv(const MetricReport& report);

}  // namespace attnxp
