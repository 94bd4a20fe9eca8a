#include "attnxp/prestudy.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "attnxp/error.hpp"
#include "attnxp/parallel.hpp"
#include "attnxp/rng.hpp"

namespace attnxp {

ModelComparison compare_models(const SequenceModel& reference, const SequenceModel& other,
                               const std::vector<Prefix>& prefixes, DistributionScope scope, std::size_t threads) {
    std::vector<double> jsds(prefixes.size()), tvds(prefixes.size());
    parallel_for(prefixes.size(), threads, [&](std::size_t i) {
        const auto a = reference.forward(prefixes[i].activities);
        const auto b = other.forward(prefixes[i].activities);
        const auto fa = flatten(a.attention);
        const auto fb = flatten(b.attention);
        if (scope == DistributionScope::AllHeads) {
            jsds[i] = jsd(fa.combined, fb.combined);
        } else {
            if (fa.per_head.size() != fb.per_head.size()) {
                throw Error(ErrorKind::Dimension, "per-head comparison needs equal head counts");
            }
            double s = 0.0;
            for (std::size_t h = 0; h < fa.per_head.size(); ++h) s += jsd(fa.per_head[h], fb.per_head[h]);
            jsds[i] = s / static_cast<double>(fa.per_head.size());
        }
        tvds[i] = tvd(a.prediction, b.prediction);
    });
    ModelComparison c;
    c.samples = prefixes.size();
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        c.mean_jsd += jsds[i];
        c.mean_tvd += tvds[i];
    }
    if (c.samples) {
        c.mean_jsd /= static_cast<double>(c.samples);
        c.mean_tvd /= static_cast<double>(c.samples);
    }
    return c;
}

Exp1Result experiment1(const EventLog& train_log, const EventLog& test_log, const ModelConfig& config,
                       const Exp1Options& options) {
    if (options.repeats < 1) throw Error(ErrorKind::Usage, "experiment 1 needs at least one repeat");
    ModelConfig resolved = config;
    if (resolved.max_len == 0) {
        resolved.max_len = std::max(train_log.stats().max_len, test_log.stats().max_len);
    }
    const auto prefixes = extract_prefixes(test_log.remapped(train_log.vocabulary()), 1);

    auto train_one = [&](std::uint64_t stream, std::size_t i, AttentionMode mode) {
        ModelConfig c = resolved;
        c.seed = derive_seed(config.seed, stream, i);
        c.attention_mode = mode;
        try {
            return train(train_log, c);
        } catch (const Error& e) {
            throw Error(e.kind(), std::string(mode == AttentionMode::Learned ? "baseline" : "frozen") + " model " +
                                      std::to_string(i) + ": " + e.what());
        }
    };

    std::vector<TransformerModel> baselines, frozen;
    for (std::size_t i = 0; i < options.repeats; ++i) {
        baselines.push_back(train_one(streams::kBaseline, i, AttentionMode::Learned));
        frozen.push_back(train_one(streams::kFrozen, i, AttentionMode::FrozenUniform));
    }

    Exp1Result result;
    result.test_prefixes = prefixes.size();
    auto add = [&](const std::string& kind, std::size_t b, const TransformerModel& other, std::size_t o) {
        const auto cmp = compare_models(baselines[b], other, prefixes, options.scope, options.threads);
        result.rows.push_back(Exp1Row{kind, b, o, baselines[b].config().seed, other.config().seed,
                                      to_string(other.config().attention_mode), cmp.mean_jsd, cmp.mean_tvd});
    };
    for (std::size_t b = 0; b < options.repeats; ++b) {
        if (options.cross_product) {
            for (std::size_t f = 0; f < options.repeats; ++f) add("frozen", b, frozen[f], f);
        } else {
            add("frozen", b, frozen[b], b);
        }
    }
    for (std::size_t i = 1; i < options.repeats; ++i) add("seeded", 0, baselines[i], i);
    return result;
}

std::vector<std::size_t> histogram(const std::vector<double>& values, std::size_t bins) {
    std::vector<std::size_t> h(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>(std::clamp(v, 0.0, 1.0) * static_cast<double>(bins));
        ++h[std::min(b, bins - 1)];
    }
    return h;
}

Exp2Result experiment2(const SequenceModel& model, const std::vector<Prefix>& prefixes, std::size_t threads) {
    const ActivityId pad = model.vocabulary().pad();
    std::vector<std::vector<Exp2Row>> parts(prefixes.size());
    parallel_for(prefixes.size(), threads, [&](std::size_t k) {
        const auto& pf = prefixes[k].activities;
        std::vector<ActivityId> masked;
        for (std::size_t i = 0; i < pf.size(); ++i) {
            masked = pf;
            masked[i] = pad;
            const auto input_masked = model.forward(masked).prediction;
            const std::size_t pos[] = {i};
            const auto attention_masked = model.forward_attention_masked(pf, pos);
            parts[k].push_back(Exp2Row{k, i, tvd(input_masked, attention_masked)});
        }
    });
    Exp2Result r;
    std::vector<double> values;
    for (auto& p : parts) {
        for (auto& row : p) {
            values.push_back(row.tvd);
            r.rows.push_back(row);
        }
    }
    r.histogram = histogram(values, kExp2Bins);
    return r;
}

namespace {
std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}
}  // namespace

std::string exp1_csv(const Exp1Result& result) {
    std::string out = "kind,baseline,other,baseline_seed,other_seed,other_mode,mean_jsd,mean_tvd\n";
    for (const auto& r : result.rows) {
        out += r.kind + "," + std::to_string(r.baseline) + "," + std::to_string(r.other) + "," +
               std::to_string(r.baseline_seed) + "," + std::to_string(r.other_seed) + "," + r.other_mode + "," +
               fmt(r.mean_jsd) + "," + fmt(r.mean_tvd) + "\n";
    }
    return out;
}

std::string exp1_json(const Exp1Result& result) {
    nlohmann::json j;
    j["test_prefixes"] = result.test_prefixes;
    j["points"] = nlohmann::json::array();
    for (const auto& r : result.rows) {
        j["points"].push_back({{"kind", r.kind},
                               {"baseline", r.baseline},
                               {"other", r.other},
                               {"baseline_seed", r.baseline_seed},
                               {"other_seed", r.other_seed},
                               {"other_mode", r.other_mode},
                               {"mean_jsd", r.mean_jsd},
                               {"mean_tvd", r.mean_tvd}});
    }
    return j.dump(2) + "\n";
}

std::string exp2_csv(const Exp2Result& result) {
    std::string out = "prefix,position,tvd\n";
    for (const auto& r : result.rows) {
        out += std::to_string(r.prefix_index) + "," + std::to_string(r.position) + "," + fmt(r.tvd) + "\n";
    }
    return out;
}

std::string exp2_json(const Exp2Result& result) {
    nlohmann::json j;
    j["values"] = result.rows.size();
    j["bins"] = result.histogram.size();
    j["histogram"] = result.histogram;
    double mean = 0.0;
    for (const auto& r : result.rows) mean += r.tvd;
    j["mean_tvd"] = result.rows.empty() ? 0.0 : mean / static_cast<double>(result.rows.size());
    return j.dump(2) + "\n";
}

}  // namespace attnxp
