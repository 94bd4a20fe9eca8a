#include "attnxp/explain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "attnxp/error.hpp"
#include "attnxp/parallel.hpp"
#include "attnxp/rng.hpp"

namespace attnxp {

double Thresholds::edge_threshold(std::size_t activity_count) const {
    if (delta_edge) return *delta_edge;
    return activity_count ? 1.5 / static_cast<double>(activity_count) : 1.0;
}

void Thresholds::validate() const {
    auto check = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::Usage, std::string(name) + " must lie in [0, 1]");
    };
    check(delta_sim, "delta_sim");
    check(delta_attr, "delta_attr");
    check(delta_pred, "delta_pred");
    check(sim_eps, "sim_eps");
    if (delta_edge) check(*delta_edge, "delta_edge");
}

void ExplanationGraph::add_edge(const std::string& from, const std::string& to) {
    vertices.insert(from);
    vertices.insert(to);
    edges.emplace(from, to);
}

void ExplanationGraph::merge(const ExplanationGraph& other) {
    vertices.insert(other.vertices.begin(), other.vertices.end());
    edges.insert(other.edges.begin(), other.edges.end());
}

void ExplanationGraph::prune_shortcuts(const std::string& via) {
    for (auto it = edges.begin(); it != edges.end();) {
        const auto& [u, v] = *it;
        if (u != via && v != via && has_edge(u, via) && has_edge(via, v)) it = edges.erase(it);
        else ++it;
    }
}

ScoreMatrix ScoreMatrix::zeros(std::size_t activities, Scenario scenario) {
    const auto n = static_cast<Eigen::Index>(activities);
    return {Matrix::Zero(n, n), scenario};
}

namespace {

// Last business activity of a prefix (skips PAD), if any.
std::optional<ActivityId> last_activity(std::span<const ActivityId> prefix, const Vocabulary& vocab) {
    for (auto it = prefix.rbegin(); it != prefix.rend(); ++it)
        if (vocab.is_activity(*it)) return *it;
    return std::nullopt;
}

bool all_pad(std::span<const ActivityId> prefix, const Vocabulary& vocab) {
    return std::none_of(prefix.begin(), prefix.end(), [&](ActivityId a) { return vocab.is_activity(a); });
}

ActivityScoreVector psi_of(const AttentionTensor& attention, std::span<const ActivityId> prefix, const Vocabulary& vocab) {
    if (all_pad(prefix, vocab)) return ActivityScoreVector{std::vector<double>(vocab.size(), 0.0)};
    return aggregate_activity_scores(aggregate_event_scores(attention), prefix, vocab);
}

}  // namespace

RelevantActivities relevant_activities(const SequenceModel& model, std::span<const ActivityId> prefix,
                                       const Thresholds& thresholds, std::size_t n_mods, std::uint64_t seed) {
    const auto& vocab = model.vocabulary();
    const auto base = model.forward(prefix);
    RelevantActivities out;
    out.psi = sum_activity_scores(aggregate_event_scores(base.attention), prefix, vocab);
    out.psi.normalize_max();

    Rng rng(seed);
    const std::size_t len = prefix.size();
    const std::size_t max_masked = (len + 1) / 2;
    std::vector<ActivityId> modified;
    std::vector<std::size_t> positions(len);
    for (std::size_t m = 0; m < n_mods; ++m) {
        const std::size_t k = 1 + rng.below(max_masked);
        for (std::size_t i = 0; i < len; ++i) positions[i] = i;
        rng.shuffle(positions);
        modified.assign(prefix.begin(), prefix.end());
        for (std::size_t i = 0; i < k; ++i) modified[positions[i]] = vocab.pad();
        if (all_pad(modified, vocab)) continue;
        const auto mod = model.forward(modified);
        if (cosine_distance(mod.prediction, base.prediction) > thresholds.delta_sim) continue;
        const auto psi_m = aggregate_activity_scores(aggregate_event_scores(mod.attention), modified, vocab);
        for (std::size_t a = 0; a < out.psi.scores.size(); ++a) out.psi.scores[a] += psi_m.scores[a];
        ++out.survivors;
    }
    out.psi.normalize_max();
    for (ActivityId a = 0; a < out.psi.scores.size(); ++a)
        if (out.psi.scores[a] > thresholds.delta_attr) out.activities.push_back(a);
    return out;
}

std::vector<ActivityId> likely_next(const PredictionVector& prediction, const Thresholds& thresholds,
                                    const Vocabulary& vocabulary) {
    std::vector<ActivityId> out;
    const std::size_t n = std::min(prediction.size(), vocabulary.size());
    for (ActivityId a = 0; a < n; ++a)
        if (prediction[a] > thresholds.delta_pred) out.push_back(a);
    return out;
}

LocalExplanation backward_local_graph(const SequenceModel& model, std::span<const ActivityId> prefix,
                                      const Thresholds& thresholds, std::size_t n_mods, std::uint64_t seed) {
    const auto& vocab = model.vocabulary();
    LocalExplanation local;
    local.relevant = relevant_activities(model, prefix, thresholds, n_mods, seed).activities;
    local.likely = likely_next(model.forward(prefix).prediction, thresholds, vocab);
    for (auto u : local.relevant)
        for (auto v : local.likely) local.graph.add_edge(vocab.label(u), vocab.label(v));
    return local;
}

ExplanationGraph backward_explain(const SequenceModel& model, const std::vector<Prefix>& prefixes,
                                  const Thresholds& thresholds, const BackwardOptions& options, std::uint64_t seed,
                                  std::vector<LocalExplanation>* locals) {
    thresholds.validate();
    const auto& vocab = model.vocabulary();
    std::vector<LocalExplanation> parts(prefixes.size());
    parallel_for(prefixes.size(), options.threads, [&](std::size_t i) {
        parts[i] = backward_local_graph(model, prefixes[i].activities, thresholds, options.n_mods,
                                        derive_seed(seed, streams::kModifications, i));
    });
    ExplanationGraph g;
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        g.merge(parts[i].graph);
        if (!options.prune) continue;
        if (auto last = last_activity(prefixes[i].activities, vocab)) g.prune_shortcuts(vocab.label(*last));
    }
    if (locals) *locals = std::move(parts);
    return g;
}

ScoreMatrix compute_relevance_score(std::span<const ActivityId> prefix, std::span<const ActivityId> masked_prefix,
                                    const ActivityScoreVector& psi, const ActivityScoreVector& psi_masked,
                                    const PredictionVector& prediction, const PredictionVector& prediction_masked,
                                    std::span<const ActivityId> likely, double sim_eps, const Vocabulary& vocabulary,
                                    RelevanceCell cell) {
    if (prefix.size() != masked_prefix.size()) {
        throw Error(ErrorKind::Dimension, "masked prefix length differs from the prefix");
    }
    auto k = ScoreMatrix::zeros(vocabulary.size(), Scenario::Combined);
    const ActivityId pad = vocabulary.pad();
    for (auto a : likely) {
        const double p = prediction[a];
        const double pm = prediction_masked[a];
        const bool similar = std::abs(p - pm) <= sim_eps;
        std::optional<ActivityId> last_masked;
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            if (masked_prefix[i] != pad || !vocabulary.is_activity(prefix[i])) continue;
            const ActivityId am = prefix[i];
            double s = p * psi[am];
            if (similar) s = -s;
            k.values(a, am) += s;
            last_masked = am;
        }
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            const ActivityId an = masked_prefix[i];
            if (!vocabulary.is_activity(an)) continue;
            const double s = similar ? psi_masked[an] * p : std::abs(psi[an] - psi_masked[an]) * std::abs(p - pm);
            if (cell == RelevanceCell::NonMasked) k.values(a, an) += s;
            else if (last_masked) k.values(a, *last_masked) += s;
        }
    }
    return k;
}

Matrix normalize_rows(const Matrix& scores, RowNormalization mode) {
    Matrix out = scores;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        if (mode == RowNormalization::ClampNegative) {
            row = row.cwiseMax(0.0);
        } else {
            const double mn = row.minCoeff();
            if (mn < 0.0) row.array() -= mn;
        }
        const double sum = row.sum();
        if (sum > 0.0) row /= sum;
        else row.setZero();
    }
    return out;
}

ExplorationResult build_exploration_graph(ScoreMatrix few, ScoreMatrix most, const Vocabulary& vocabulary,
                                          double edge_threshold, RowNormalization normalization) {
    ExplorationResult r;
    r.few = std::move(few);
    r.most = std::move(most);
    r.few.scenario = Scenario::Few;
    r.most.scenario = Scenario::Most;
    r.few_normalized = normalize_rows(r.few.values, normalization);
    r.most_normalized = normalize_rows(r.most.values, normalization);
    const std::size_t n = vocabulary.size();
    r.adjacency.assign(n, std::vector<bool>(n, false));
    for (const auto& label : vocabulary.labels()) r.graph.add_vertex(label);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t col = 0; col < n; ++col) {
            const auto ri = static_cast<Eigen::Index>(row);
            const auto ci = static_cast<Eigen::Index>(col);
            const bool edge = r.few_normalized(ri, ci) > edge_threshold || r.most_normalized(ri, ci) > edge_threshold;
            r.adjacency[row][col] = edge;
            if (edge) {
                r.graph.add_edge(vocabulary.label(static_cast<ActivityId>(col)),
                                 vocabulary.label(static_cast<ActivityId>(row)));
            }
        }
    }
    return r;
}

namespace {

// Subsets of `count` relevant positions as membership masks.
std::vector<std::vector<bool>> position_subsets(std::size_t count, const ExplorationOptions& options, std::uint64_t seed) {
    std::vector<std::vector<bool>> subsets;
    if (count <= options.exhaustive_limit) {
        const std::uint64_t total = std::uint64_t{1} << count;
        for (std::uint64_t bits = 0; bits < total; ++bits) {
            std::vector<bool> s(count);
            for (std::size_t i = 0; i < count; ++i) s[i] = (bits >> i) & 1U;
            subsets.push_back(std::move(s));
        }
        return subsets;
    }
    Rng rng(seed);
    std::set<std::vector<bool>> seen;
    while (subsets.size() < options.subset_cap) {
        std::vector<bool> s(count);
        for (std::size_t i = 0; i < count; ++i) s[i] = rng.next_u64() & 1U;
        if (seen.insert(s).second) subsets.push_back(std::move(s));
    }
    return subsets;
}

struct PrefixScores {
    Matrix few;
    Matrix most;
};

PrefixScores score_prefix(const SequenceModel& model, std::span<const ActivityId> prefix, const Thresholds& thresholds,
                          const ExplorationOptions& options, std::uint64_t seed, std::size_t index) {
    const auto& vocab = model.vocabulary();
    const auto n = static_cast<Eigen::Index>(vocab.size());
    PrefixScores out{Matrix::Zero(n, n), Matrix::Zero(n, n)};

    const auto base = model.forward(prefix);
    const auto psi = psi_of(base.attention, prefix, vocab);
    const auto likely = likely_next(base.prediction, thresholds, vocab);
    if (likely.empty()) return out;
    const auto relevant =
        relevant_activities(model, prefix, thresholds, options.n_mods, derive_seed(seed, streams::kModifications, index));
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::binary_search(relevant.activities.begin(), relevant.activities.end(), prefix[i])) positions.push_back(i);
    }
    if (positions.empty()) return out;

    const auto subsets = position_subsets(positions.size(), options, derive_seed(seed, streams::kSubsets, index));
    std::vector<ActivityId> masked;
    auto score = [&](const std::vector<bool>& mask_positions, Matrix& target) {
        masked.assign(prefix.begin(), prefix.end());
        for (std::size_t i = 0; i < masked.size(); ++i)
            if (mask_positions[i]) masked[i] = vocab.pad();
        const auto mod = model.forward(masked);
        const auto psi_m = psi_of(mod.attention, masked, vocab);
        target += compute_relevance_score(prefix, masked, psi, psi_m, base.prediction, mod.prediction, likely,
                                          thresholds.sim_eps, vocab, options.cell)
                      .values;
    };
    std::vector<bool> mask(prefix.size());
    for (const auto& subset : subsets) {
        const bool empty = std::none_of(subset.begin(), subset.end(), [](bool b) { return b; });
        const bool full = std::all_of(subset.begin(), subset.end(), [](bool b) { return b; });
        if (!empty) {
            // masking out a few: hide the chosen relevant positions
            std::fill(mask.begin(), mask.end(), false);
            for (std::size_t i = 0; i < subset.size(); ++i)
                if (subset[i]) mask[positions[i]] = true;
            score(mask, out.few);
        }
        if (!full) {
            // masking out most: hide everything outside the subset
            std::fill(mask.begin(), mask.end(), true);
            for (std::size_t i = 0; i < subset.size(); ++i)
                if (subset[i]) mask[positions[i]] = false;
            score(mask, out.most);
        }
    }
    return out;
}

}  // namespace

ExplorationResult attention_exploration(const SequenceModel& model, const std::vector<Prefix>& prefixes,
                                        const Thresholds& thresholds, const ExplorationOptions& options,
                                        std::uint64_t seed) {
    thresholds.validate();
    const auto& vocab = model.vocabulary();
    std::vector<PrefixScores> parts(prefixes.size());
    parallel_for(prefixes.size(), options.threads, [&](std::size_t i) {
        parts[i] = score_prefix(model, prefixes[i].activities, thresholds, options, seed, i);
    });
    auto few = ScoreMatrix::zeros(vocab.size(), Scenario::Few);
    auto most = ScoreMatrix::zeros(vocab.size(), Scenario::Most);
    for (const auto& p : parts) {
        few.values += p.few;
        most.values += p.most;
    }
    return build_exploration_graph(std::move(few), std::move(most), vocab, thresholds.edge_threshold(vocab.size()),
                                   options.normalization);
}

namespace {

std::string dot_id(const std::string& label) {
    std::string id;
    for (char c : label) id.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    if (id.empty() || std::isdigit(static_cast<unsigned char>(id.front()))) id = "n_" + id;
    return id;
}

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::string export_graph(const ExplanationGraph& graph, GraphFormat format) {
    if (format == GraphFormat::Json) {
        nlohmann::json j;
        j["vertices"] = std::vector<std::string>(graph.vertices.begin(), graph.vertices.end());
        j["edges"] = nlohmann::json::array();
        for (const auto& [u, v] : graph.edges) j["edges"].push_back({u, v});
        return j.dump(2) + "\n";
    }
    std::map<std::string, std::string> ids;
    std::set<std::string> used;
    for (const auto& v : graph.vertices) {
        std::string id = dot_id(v);
        std::string candidate = id;
        for (int k = 2; used.count(candidate); ++k) candidate = id + "_" + std::to_string(k);
        used.insert(candidate);
        ids[v] = candidate;
    }
    std::string out = "digraph explanation {\n  rankdir=LR;\n";
    for (const auto& v : graph.vertices) out += "  " + ids[v] + " [label=\"" + dot_escape(v) + "\"];\n";
    for (const auto& [u, v] : graph.edges) out += "  " + ids[u] + " -> " + ids[v] + ";\n";
    out += "}\n";
    return out;
}

ExplanationGraph graph_from_json(std::string_view text) {
    ExplanationGraph g;
    try {
        auto j = nlohmann::json::parse(text);
        for (const auto& v : j.at("vertices")) g.add_vertex(v.get<std::string>());
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw Error(ErrorKind::Schema, "graph edge must be a [from, to] pair");
            g.add_edge(e[0].get<std::string>(), e[1].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("graph json: ") + e.what());
    }
    return g;
}

}  // namespace attnxp
