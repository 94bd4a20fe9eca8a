#pragma once

#include <span>
#include <string>
#include <vector>

#include "attnxp/eventlog.hpp"
#include "attnxp/transformer.hpp"

namespace attnxp {

enum class DistributionScope { PerHead, AllHeads };

struct AttentionDistribution {
    std::vector<double> values;
    DistributionScope scope = DistributionScope::AllHeads;
    std::size_t head = 0;  // meaningful for PerHead only
};

struct FlattenedAttention {
    std::vector<AttentionDistribution> per_head;
    AttentionDistribution combined;
};

// Row-major flattening of each head, L1-normalised per head and jointly.
// Throws Normalization for an all-zero tensor.
FlattenedAttention flatten(const AttentionTensor& attention);

// Natural-log KL(p || q) with 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double jsd(std::span<const double> a, std::span<const double> b);
double jsd(const AttentionDistribution& a, const AttentionDistribution& b);
double tvd(std::span<const double> p, std::span<const double> q);
double tvd(const PredictionVector& p, const PredictionVector& q);
double cosine_distance(std::span<const double> p, std::span<const double> q);
double cosine_distance(const PredictionVector& p, const PredictionVector& q);

// How the heads are combined before taking column sums.
//   AllHeads  sum over all heads (default)
//   RowBound  the formula read literally: row n sums heads 1..min(n, h)
enum class HeadSumBound { AllHeads, RowBound };

// eta_j: total attention paid to position j across rows and heads.
std::vector<double> aggregate_event_scores(const AttentionTensor& attention,
                                           HeadSumBound bound = HeadSumBound::AllHeads);

// Per-activity scores indexed by business activity id; absent activities are 0.
struct ActivityScoreVector {
    std::vector<double> scores;

    double operator[](ActivityId a) const { return a < scores.size() ? scores[a] : 0.0; }
    double max() const;
    // Divides by the maximum component; no-op when everything is zero.
    void normalize_max();
};

// Sums eta over the positions of each activity (PAD excluded), then
// max-normalises. Throws Degenerate when every position is PAD.
ActivityScoreVector aggregate_activity_scores(std::span<const double> eta, std::span<const ActivityId> prefix,
                                              const Vocabulary& vocabulary);
// Same without the final normalisation.
ActivityScoreVector sum_activity_scores(std::span<const double> eta, std::span<const ActivityId> prefix,
                                        const Vocabulary& vocabulary);

// Heatmap grids for external plotting: CSV with one block per head and a
// JSON document with labels and matrices.
std::string attention_heatmap_csv(const AttentionTensor& attention, const std::vector<std::string>& labels);
std::string attention_heatmap_json(const AttentionTensor& attention, const std::vector<std::string>& labels);

}  // namespace attnxp
