#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "attnxp/attnstats.hpp"
#include "attnxp/eventlog.hpp"
#include "attnxp/transformer.hpp"

namespace attnxp {

struct Thresholds {
    double delta_sim = 0.2;   // max cosine distance for a modification to count
    double delta_attr = 0.5;  // psi floor for relevant activities
    double delta_pred = 0.1;  // probability floor for likely next activities
    // Row-normalised score floor; unset means 1.5 / |A|.
    std::optional<double> delta_edge;
    double sim_eps = 0.05;    // |p(a) - p_m(a)| <= sim_eps counts as "unchanged"

    double edge_threshold(std::size_t activity_count) const;
    void validate() const;
};

// Directed graph over activity labels; ordered containers keep every
// traversal sorted by label.
struct ExplanationGraph {
    std::set<std::string> vertices;
    std::set<std::pair<std::string, std::string>> edges;

    void add_vertex(const std::string& v) { vertices.insert(v); }
    void add_edge(const std::string& from, const std::string& to);
    bool has_edge(const std::string& from, const std::string& to) const { return edges.count({from, to}) > 0; }
    void merge(const ExplanationGraph& other);
    // Drops (u, v) when (u, via) and (via, v) exist, u != via != v.
    void prune_shortcuts(const std::string& via);

    bool operator==(const ExplanationGraph&) const = default;
};

enum class Scenario { Few, Most, Combined };

// |A| x |A|; rows are predicted activities, columns influencing activities.
struct ScoreMatrix {
    Matrix values;
    Scenario scenario = Scenario::Combined;

    static ScoreMatrix zeros(std::size_t activities, Scenario scenario);
};

struct RelevantActivities {
    std::vector<ActivityId> activities;  // A_r, ascending id
    ActivityScoreVector psi;             // summed over survivors, max-normalised
    std::size_t survivors = 0;           // modifications kept (excluding the prefix itself)
};

// Random PAD masks of 1..ceil(|prefix|/2) positions; survivors are the
// modifications whose prediction stays within delta_sim (cosine distance)
// plus the unmodified prefix.
RelevantActivities relevant_activities(const SequenceModel& model, std::span<const ActivityId> prefix,
                                       const Thresholds& thresholds, std::size_t n_mods, std::uint64_t seed);

// Business activities with probability strictly above delta_pred (END excluded).
std::vector<ActivityId> likely_next(const PredictionVector& prediction, const Thresholds& thresholds,
                                    const Vocabulary& vocabulary);

struct LocalExplanation {
    std::vector<ActivityId> relevant;  // A_r
    std::vector<ActivityId> likely;    // P_r
    ExplanationGraph graph;
};

LocalExplanation backward_local_graph(const SequenceModel& model, std::span<const ActivityId> prefix,
                                      const Thresholds& thresholds, std::size_t n_mods, std::uint64_t seed);

struct BackwardOptions {
    std::size_t n_mods = 20;
    bool prune = true;
    std::size_t threads = 1;
};

// Folds local graphs in input order, pruning shortcuts through each prefix's
// last activity after its merge. `locals` receives the per-prefix pieces.
ExplanationGraph backward_explain(const SequenceModel& model, const std::vector<Prefix>& prefixes,
                                  const Thresholds& thresholds, const BackwardOptions& options, std::uint64_t seed,
                                  std::vector<LocalExplanation>* locals = nullptr);

// Which column receives the non-masked contributions of the relevance score.
//   NonMasked        K(a, a_n), the activity being scored (default)
//   LastMaskedColumn K(a, a_m) as literally written, a_m being the last masked
//                    activity visited; contributions are dropped when none is masked
enum class RelevanceCell { NonMasked, LastMaskedColumn };

ScoreMatrix compute_relevance_score(std::span<const ActivityId> prefix, std::span<const ActivityId> masked_prefix,
                                    const ActivityScoreVector& psi, const ActivityScoreVector& psi_masked,
                                    const PredictionVector& prediction, const PredictionVector& prediction_masked,
                                    std::span<const ActivityId> likely, double sim_eps, const Vocabulary& vocabulary,
                                    RelevanceCell cell = RelevanceCell::NonMasked);

// Row normalisation of the accumulated score matrices.
//   ClampNegative  negative entries become 0, then rows are divided by their sum
//   ShiftByMin     rows with a negative minimum are shifted by it, then divided
enum class RowNormalization { ClampNegative, ShiftByMin };

Matrix normalize_rows(const Matrix& scores, RowNormalization mode);

struct ExplorationOptions {
    std::size_t n_mods = 20;
    std::size_t subset_cap = 256;
    std::size_t exhaustive_limit = 8;  // enumerate all subsets up to this |I|
    RowNormalization normalization = RowNormalization::ShiftByMin;
    RelevanceCell cell = RelevanceCell::NonMasked;
    std::size_t threads = 1;
};

struct ExplorationResult {
    ScoreMatrix few;
    ScoreMatrix most;
    Matrix few_normalized;
    Matrix most_normalized;
    std::vector<std::vector<bool>> adjacency;  // [row][col]
    ExplanationGraph graph;
};

ExplorationResult attention_exploration(const SequenceModel& model, const std::vector<Prefix>& prefixes,
                                        const Thresholds& thresholds, const ExplorationOptions& options,
                                        std::uint64_t seed);

// Turns an accumulated pair of score matrices into the graph (shared by the
// explainer and tests that feed matrices directly).
ExplorationResult build_exploration_graph(ScoreMatrix few, ScoreMatrix most, const Vocabulary& vocabulary,
                                          double edge_threshold, RowNormalization normalization);

// Polymorphic handle so metrics can re-run an explainer on perturbed inputs.
class Explainer {
public:
    virtual ~Explainer() = default;
    virtual std::string name() const = 0;
    virtual ExplanationGraph explain(const SequenceModel& model, const std::vector<Prefix>& prefixes) const = 0;
};

class BackwardExplainer final : public Explainer {
public:
    BackwardExplainer(Thresholds thresholds, BackwardOptions options, std::uint64_t seed)
        : thresholds_(thresholds), options_(options), seed_(seed) {}
    std::string name() const override { return "backward"; }
    ExplanationGraph explain(const SequenceModel& model, const std::vector<Prefix>& prefixes) const override {
        return backward_explain(model, prefixes, thresholds_, options_, seed_);
    }

private:
    Thresholds thresholds_;
    BackwardOptions options_;
    std::uint64_t seed_;
};

class AttentionExplorationExplainer final : public Explainer {
public:
    AttentionExplorationExplainer(Thresholds thresholds, ExplorationOptions options, std::uint64_t seed)
        : thresholds_(thresholds), options_(options), seed_(seed) {}
    std::string name() const override { return "attention-exploration"; }
    ExplanationGraph explain(const SequenceModel& model, const std::vector<Prefix>& prefixes) const override {
        return attention_exploration(model, prefixes, thresholds_, options_, seed_).graph;
    }

private:
    Thresholds thresholds_;
    ExplorationOptions options_;
    std::uint64_t seed_;
};

enum class GraphFormat { Dot, Json };

std::string export_graph(const ExplanationGraph& graph, GraphFormat format);
ExplanationGraph graph_from_json(std::string_view text);

}  // namespace attnxp
