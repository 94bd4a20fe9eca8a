#include "attnxp/attnstats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "attnxp/error.hpp"

namespace attnxp {

namespace {
void require_same_size(std::size_t a, std::size_t b) {
    if (a != b) {
        throw Error(ErrorKind::Dimension, "length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}
}  // namespace

FlattenedAttention flatten(const AttentionTensor& attention) {
    FlattenedAttention out;
    std::vector<double> all;
    double grand = 0.0;
    for (std::size_t h = 0; h < attention.heads.size(); ++h) {
        const auto& m = attention.heads[h];
        AttentionDistribution d;
        d.scope = DistributionScope::PerHead;
        d.head = h;
        d.values.reserve(static_cast<std::size_t>(m.size()));
        double sum = 0.0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                d.values.push_back(m(r, c));
                sum += m(r, c);
            }
        all.insert(all.end(), d.values.begin(), d.values.end());
        grand += sum;
        if (sum <= 0.0) throw Error(ErrorKind::Normalization, "attention head " + std::to_string(h) + " sums to zero");
        for (auto& v : d.values) v /= sum;
        out.per_head.push_back(std::move(d));
    }
    if (grand <= 0.0) throw Error(ErrorKind::Normalization, "attention tensor sums to zero");
    for (auto& v : all) v /= grand;
    out.combined.values = std::move(all);
    out.combined.scope = DistributionScope::AllHeads;
    return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    require_same_size(p.size(), q.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double jsd(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size());
    std::vector<double> mix(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 0.5 * (a[i] + b[i]);
    return 0.5 * kl_divergence(a, mix) + 0.5 * kl_divergence(b, mix);
}

double jsd(const AttentionDistribution& a, const AttentionDistribution& b) { return jsd(a.values, b.values); }

double tvd(std::span<const double> p, std::span<const double> q) {
    require_same_size(p.size(), q.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

double tvd(const PredictionVector& p, const PredictionVector& q) { return tvd(p.probs, q.probs); }

double cosine_distance(std::span<const double> p, std::span<const double> q) {
    require_same_size(p.size(), q.size());
    double dot = 0.0, np = 0.0, nq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        dot += p[i] * q[i];
        np += p[i] * p[i];
        nq += q[i] * q[i];
    }
    if (np == 0.0 || nq == 0.0) throw Error(ErrorKind::Degenerate, "cosine distance of a zero vector");
    return 1.0 - dot / (std::sqrt(np) * std::sqrt(nq));
}

double cosine_distance(const PredictionVector& p, const PredictionVector& q) {
    return cosine_distance(p.probs, q.probs);
}

std::vector<double> aggregate_event_scores(const AttentionTensor& attention, HeadSumBound bound) {
    const std::size_t len = attention.length();
    std::vector<double> eta(len, 0.0);
    for (std::size_t n = 0; n < len; ++n) {
        // Row n (0-based) of the head sum; the literal bound uses heads 1..n+1.
        const std::size_t heads =
            bound == HeadSumBound::AllHeads ? attention.heads.size() : std::min(n + 1, attention.heads.size());
        for (std::size_t h = 0; h < heads; ++h) {
            const auto& m = attention.heads[h];
            for (std::size_t j = 0; j < len; ++j)
                eta[j] += m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
        }
    }
    return eta;
}

double ActivityScoreVector::max() const {
    return scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end());
}

void ActivityScoreVector::normalize_max() {
    const double m = max();
    if (m <= 0.0) return;
    for (auto& s : scores) s /= m;
}

ActivityScoreVector sum_activity_scores(std::span<const double> eta, std::span<const ActivityId> prefix,
                                        const Vocabulary& vocabulary) {
    require_same_size(eta.size(), prefix.size());
    ActivityScoreVector psi;
    psi.scores.assign(vocabulary.size(), 0.0);
    bool any = false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (!vocabulary.is_activity(prefix[i])) continue;
        psi.scores[prefix[i]] += eta[i];
        any = true;
    }
    if (!any) throw Error(ErrorKind::Degenerate, "prefix consists only of PAD symbols");
    return psi;
}

ActivityScoreVector aggregate_activity_scores(std::span<const double> eta, std::span<const ActivityId> prefix,
                                              const Vocabulary& vocabulary) {
    auto psi = sum_activity_scores(eta, prefix, vocabulary);
    psi.normalize_max();
    return psi;
}

std::string attention_heatmap_csv(const AttentionTensor& attention, const std::vector<std::string>& labels) {
    std::ostringstream out;
    out.precision(17);
    out << "head,row,row_label";
    for (std::size_t j = 0; j < labels.size(); ++j) out << ",col" << j << ':' << labels[j];
    out << '\n';
    for (std::size_t h = 0; h < attention.heads.size(); ++h) {
        const auto& m = attention.heads[h];
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            out << h << ',' << r << ',' << labels[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
            out << '\n';
        }
    }
    return out.str();
}

std::string attention_heatmap_json(const AttentionTensor& attention, const std::vector<std::string>& labels) {
    nlohmann::json j;
    j["labels"] = labels;
    j["heads"] = nlohmann::json::array();
    for (const auto& m : attention.heads) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::vector<double> row(m.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
            rows.push_back(row);
        }
        j["heads"].push_back(rows);
    }
    return j.dump(2);
}

}  // namespace attnxp
