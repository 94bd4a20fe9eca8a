#include "attnxp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "attnxp/error.hpp"
#include "attnxp/parallel.hpp"
#include "attnxp/rng.hpp"

namespace attnxp {

RuleSet graph_to_rules(const ExplanationGraph& graph) {
    RuleSet rules;
    for (const auto& v : graph.vertices) rules[v] = Rule{v, {}};
    for (const auto& [u, v] : graph.edges) rules[u].rhs.insert(v);
    return rules;
}

Statistic Statistic::from_values(std::vector<std::optional<double>> values) {
    Statistic s;
    double sum = 0.0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++s.n;
        } else {
            ++s.nulls;
        }
    }
    if (s.n > 0) {
        const double mean = sum / static_cast<double>(s.n);
        double ss = 0.0;
        for (const auto& v : values)
            if (v) ss += (*v - mean) * (*v - mean);
        s.mean = mean;
        s.std = std::sqrt(ss / static_cast<double>(s.n));
    }
    s.values = std::move(values);
    return s;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error(ErrorKind::Dimension, "pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

namespace {

const std::set<std::string>& rhs_for(const RuleSet& rules, const std::string& lhs) {
    static const std::set<std::string> empty;
    auto it = rules.find(lhs);
    return it == rules.end() ? empty : it->second.rhs;
}

std::optional<std::string> last_label(const Prefix& prefix, const Vocabulary& vocab) {
    for (auto it = prefix.activities.rbegin(); it != prefix.activities.rend(); ++it)
        if (vocab.is_activity(*it)) return vocab.label(*it);
    return std::nullopt;
}

std::string output_label(std::size_t index, const Vocabulary& vocab) {
    return index < vocab.size() ? vocab.label(static_cast<ActivityId>(index)) : std::string(kEndLabel);
}

}  // namespace

Statistic correctness(const SequenceModel& model, const RuleSet& rules, const std::vector<Prefix>& prefixes) {
    const auto& vocab = model.vocabulary();
    std::vector<std::optional<double>> values;
    for (const auto& pf : prefixes) {
        const auto base = model.forward(pf.activities).prediction;
        const std::string predicted = output_label(base.argmax(), vocab);
        std::vector<double> m, e;
        std::vector<ActivityId> masked;
        for (std::size_t i = 0; i < pf.size(); ++i) {
            masked = pf.activities;
            masked[i] = vocab.pad();
            m.push_back(tvd(base, model.forward(masked).prediction));
            const bool edge = vocab.is_activity(pf.activities[i]) &&
                              rhs_for(rules, vocab.label(pf.activities[i])).count(predicted) > 0;
            e.push_back(edge ? 1.0 : 0.0);
        }
        values.push_back(pearson(m, e));
    }
    return Statistic::from_values(std::move(values));
}

CompletenessResult completeness(const SequenceModel& model, const RuleSet& rules, const std::vector<Prefix>& prefixes,
                                const Thresholds& thresholds, F1Average average) {
    const auto& vocab = model.vocabulary();
    std::map<std::string, std::array<std::size_t, 3>> per_activity;  // tp, fp, fn
    std::vector<std::optional<double>> per_prefix;
    CompletenessResult r;
    for (const auto& pf : prefixes) {
        std::set<std::string> predicted;
        if (auto last = last_label(pf, vocab)) predicted = rhs_for(rules, *last);
        std::set<std::string> truth;
        for (auto a : likely_next(model.forward(pf.activities).prediction, thresholds, vocab)) truth.insert(vocab.label(a));
        std::size_t tp = 0, fp = 0, fn = 0;
        for (const auto& a : predicted) {
            if (truth.count(a)) {
                ++tp;
                ++per_activity[a][0];
            } else {
                ++fp;
                ++per_activity[a][1];
            }
        }
        for (const auto& a : truth) {
            if (!predicted.count(a)) {
                ++fn;
                ++per_activity[a][2];
            }
        }
        r.tp += tp;
        r.fp += fp;
        r.fn += fn;
        if (tp + fp + fn == 0) {
            per_prefix.push_back(std::nullopt);
        } else {
            per_prefix.push_back(2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn));
        }
    }
    auto f1_of = [](std::size_t tp, std::size_t fp, std::size_t fn, double& precision, double& recall) {
        precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    };
    if (average == F1Average::Micro) {
        r.f1 = f1_of(r.tp, r.fp, r.fn, r.precision, r.recall);
    } else {
        double f1 = 0.0, p = 0.0, rc = 0.0;
        for (const auto& [a, c] : per_activity) {
            double pa, ra;
            f1 += f1_of(c[0], c[1], c[2], pa, ra);
            p += pa;
            rc += ra;
        }
        const auto k = static_cast<double>(std::max<std::size_t>(per_activity.size(), 1));
        r.f1 = f1 / k;
        r.precision = p / k;
        r.recall = rc / k;
    }
    r.per_prefix = Statistic::from_values(std::move(per_prefix));
    return r;
}

std::set<std::string> firing_rhs(const SequenceModel& model, const Explainer& explainer, const Prefix& prefix) {
    const auto last = last_label(prefix, model.vocabulary());
    if (!last) return {};
    const auto rules = graph_to_rules(explainer.explain(model, {prefix}));
    return rhs_for(rules, *last);
}

Statistic continuity(const SequenceModel& model, const Explainer& explainer, const std::vector<Prefix>& prefixes,
                     std::uint64_t seed, std::size_t threads) {
    std::vector<std::optional<double>> values(prefixes.size());
    std::vector<char> skipped(prefixes.size(), 0);
    parallel_for(prefixes.size(), threads, [&](std::size_t i) {
        const auto& pf = prefixes[i];
        if (pf.size() < 2) {
            skipped[i] = 1;
            return;
        }
        Rng rng(derive_seed(seed, streams::kPerturb, i));
        Prefix perturbed = pf;
        perturbed.activities[rng.below(pf.size())] = model.vocabulary().pad();
        values[i] = jaccard(firing_rhs(model, explainer, pf), firing_rhs(model, explainer, perturbed));
    });
    std::vector<std::optional<double>> kept;
    for (std::size_t i = 0; i < prefixes.size(); ++i)
        if (!skipped[i]) kept.push_back(values[i]);
    return Statistic::from_values(std::move(kept));
}

Statistic contrastivity(const SequenceModel& model, const Explainer& explainer, const std::vector<Prefix>& prefixes,
                        std::uint64_t seed, std::size_t max_pairs, std::size_t threads) {
    const auto& vocab = model.vocabulary();
    std::vector<std::optional<std::string>> last(prefixes.size());
    for (std::size_t i = 0; i < prefixes.size(); ++i) last[i] = last_label(prefixes[i], vocab);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < prefixes.size(); ++i)
        for (std::size_t j = i + 1; j < prefixes.size(); ++j)
            if (last[i] && last[j] && *last[i] != *last[j]) pairs.emplace_back(i, j);
    if (pairs.empty()) {
        Statistic s;
        s.nulls = 1;
        s.values.push_back(std::nullopt);
        return s;
    }
    if (pairs.size() > max_pairs) {
        Rng rng(derive_seed(seed, streams::kPairs));
        rng.shuffle(pairs);
        pairs.resize(max_pairs);
        std::sort(pairs.begin(), pairs.end());
    }
    std::vector<bool> needed(prefixes.size(), false);
    for (auto [i, j] : pairs) needed[i] = needed[j] = true;
    std::vector<std::set<std::string>> rhs(prefixes.size());
    parallel_for(prefixes.size(), threads, [&](std::size_t i) {
        if (needed[i]) rhs[i] = firing_rhs(model, explainer, prefixes[i]);
    });
    std::vector<std::optional<double>> values;
    values.reserve(pairs.size());
    for (auto [i, j] : pairs) values.push_back(1.0 - jaccard(rhs[i], rhs[j]));
    return Statistic::from_values(std::move(values));
}

CompactnessResult compactness(const RuleSet& rules) {
    CompactnessResult c;
    c.rule_count = rules.size();
    if (rules.empty()) return c;
    double sum = 0.0;
    for (const auto& [lhs, rule] : rules) sum += static_cast<double>(rule.rhs.size());
    c.mean_rhs = sum / static_cast<double>(rules.size());
    double ss = 0.0;
    for (const auto& [lhs, rule] : rules) {
        const double d = static_cast<double>(rule.rhs.size()) - c.mean_rhs;
        ss += d * d;
    }
    c.std_rhs = std::sqrt(ss / static_cast<double>(rules.size()));
    return c;
}

std::vector<Prefix> sample_prefixes(const std::vector<Prefix>& prefixes, double sample_frac, std::uint64_t seed) {
    if (!(sample_frac > 0.0 && sample_frac <= 1.0)) throw Error(ErrorKind::Usage, "sample fraction must lie in (0, 1]");
    if (sample_frac >= 1.0 || prefixes.empty()) return prefixes;
    std::vector<std::size_t> idx(prefixes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, streams::kSample));
    rng.shuffle(idx);
    auto keep = static_cast<std::size_t>(std::llround(sample_frac * static_cast<double>(prefixes.size())));
    keep = std::clamp<std::size_t>(keep, 1, prefixes.size());
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    std::vector<Prefix> out;
    out.reserve(keep);
    for (auto i : idx) out.push_back(prefixes[i]);
    return out;
}

MetricReport evaluate_all(const SequenceModel& model, const Explainer& explainer, const std::vector<Prefix>& prefixes,
                          const Thresholds& thresholds, const EvaluationOptions& options, std::uint64_t seed) {
    MetricReport r;
    r.explainer = explainer.name();
    r.sample_frac = options.sample_frac;
    r.seed = seed;
    const auto sample = sample_prefixes(prefixes, options.sample_frac, seed);
    r.prefixes = sample.size();
    r.graph = explainer.explain(model, sample);
    const auto rules = graph_to_rules(r.graph);
    r.correctness = correctness(model, rules, sample);
    r.completeness = completeness(model, rules, sample, thresholds, options.average);
    r.continuity = continuity(model, explainer, sample, seed, options.threads);
    r.contrastivity = contrastivity(model, explainer, sample, seed, kContrastivityPairs, options.threads);
    r.compactness = compactness(rules);
    return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

nlohmann::json stat_json(const Statistic& s) {
    return {{"mean", opt(s.mean)}, {"std", opt(s.std)}, {"n", s.n}, {"nulls", s.nulls}};
}

Statistic stat_from(const nlohmann::json& j) {
    Statistic s;
    s.mean = opt_from(j.at("mean"));
    s.std = opt_from(j.at("std"));
    s.n = j.at("n").get<std::size_t>();
    s.nulls = j.at("nulls").get<std::size_t>();
    return s;
}

std::string cell(const std::optional<double>& v) {
    if (!v) return "N";
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << *v;
    return s.str();
}

}  // namespace

std::string report_json(const MetricReport& r) {
    nlohmann::json j;
    j["explainer"] = r.explainer;
    j["sample_frac"] = r.sample_frac;
    j["seed"] = r.seed;
    j["prefixes"] = r.prefixes;
    auto& m = j["metrics"];
    m["correctness"] = stat_json(r.correctness);
    m["completeness"] = stat_json(r.completeness.per_prefix);
    m["completeness"]["mean"] = r.completeness.f1;
    m["completeness"]["precision"] = r.completeness.precision;
    m["completeness"]["recall"] = r.completeness.recall;
    m["completeness"]["tp"] = r.completeness.tp;
    m["completeness"]["fp"] = r.completeness.fp;
    m["completeness"]["fn"] = r.completeness.fn;
    m["continuity"] = stat_json(r.continuity);
    m["contrastivity"] = stat_json(r.contrastivity);
    m["compactness"] = {{"mean", r.compactness.mean_rhs},
                        {"std", r.compactness.std_rhs},
                        {"n", r.compactness.rule_count},
                        {"nulls", 0},
                        {"rules", r.compactness.rule_count}};
    j["graph"] = nlohmann::json::parse(export_graph(r.graph, GraphFormat::Json));
    return j.dump(2) + "\n";
}

MetricReport report_from_json(std::string_view text) {
    MetricReport r;
    try {
        auto j = nlohmann::json::parse(text);
        r.explainer = j.at("explainer").get<std::string>();
        r.sample_frac = j.at("sample_frac").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.prefixes = j.at("prefixes").get<std::size_t>();
        const auto& m = j.at("metrics");
        r.correctness = stat_from(m.at("correctness"));
        const auto& c = m.at("completeness");
        r.completeness.per_prefix = stat_from(c);
        r.completeness.per_prefix.mean = std::nullopt;
        r.completeness.f1 = c.at("mean").get<double>();
        r.completeness.per_prefix.std = opt_from(c.at("std"));
        r.completeness.precision = c.at("precision").get<double>();
        r.completeness.recall = c.at("recall").get<double>();
        r.completeness.tp = c.at("tp").get<std::size_t>();
        r.completeness.fp = c.at("fp").get<std::size_t>();
        r.completeness.fn = c.at("fn").get<std::size_t>();
        r.continuity = stat_from(m.at("continuity"));
        r.contrastivity = stat_from(m.at("contrastivity"));
        const auto& k = m.at("compactness");
        r.compactness.mean_rhs = k.at("mean").get<double>();
        r.compactness.std_rhs = k.at("std").get<double>();
        r.compactness.rule_count = k.at("rules").get<std::size_t>();
        r.graph = graph_from_json(j.at("graph").dump());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("metric report: ") + e.what());
    }
    return r;
}

std::string report_table(const MetricReport& r) {
    std::ostringstream out;
    out << "explainer: " << r.explainer << "  prefixes: " << r.prefixes << "  sample_frac: " << r.sample_frac
        << "  seed: " << r.seed << "\n";
    out << std::left << std::setw(15) << "metric" << std::setw(16) << "mean +/- std" << "n\n";
    auto row = [&](const std::string& name, const std::optional<double>& mean, const std::optional<double>& sd,
                   std::size_t n) {
        out << std::left << std::setw(15) << name << std::setw(16) << (cell(mean) + " +/- " + cell(sd)) << n << "\n";
    };
    row("correctness", r.correctness.mean, r.correctness.std, r.correctness.n);
    row("completeness", r.completeness.f1, r.completeness.per_prefix.std, r.completeness.per_prefix.n);
    row("continuity", r.continuity.mean, r.continuity.std, r.continuity.n);
    row("contrastivity", r.contrastivity.mean, r.contrastivity.std, r.contrastivity.n);
    row("compactness", r.compactness.mean_rhs, r.compactness.std_rhs, r.compactness.rule_count);
    out << "completeness precision " << cell(r.completeness.precision) << ", recall " << cell(r.completeness.recall)
        << "\n";
    return out.str();
}

std::string report_raw_csv(const MetricReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "metric,index,value\n";
    auto dump = [&](const std::string& name, const Statistic& s) {
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            out << name << ',' << i << ',';
            if (s.values[i]) out << *s.values[i];
            else out << "N";
            out << '\n';
        }
    };
    dump("correctness", r.correctness);
    dump("completeness", r.completeness.per_prefix);
    dump("continuity", r.continuity);
    dump("contrastivity", r.contrastivity);
    return out.str();
}

}  // namespace attnxp
