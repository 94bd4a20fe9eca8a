#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "attnxp/error.hpp"
#include "attnxp/explain.hpp"
#include "attnxp/metrics.hpp"
#include "attnxp/prestudy.hpp"
#include "attnxp/synth.hpp"

namespace attnxp::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

fs::path prepare_out_dir(const RunConfig& config) {
    fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
    write_file(dir / "resolved_config.json", to_json(config));
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void require_log(const RunConfig& config) {
    if (config.log.path.empty()) throw Error(ErrorKind::Usage, "no event log configured (--log)");
}

TransformerModel require_model(const RunConfig& config) {
    if (config.checkpoint.empty()) throw Error(ErrorKind::Usage, "no checkpoint configured (--checkpoint)");
    if (!fs::exists(config.checkpoint)) throw Error(ErrorKind::Io, "checkpoint not found: " + config.checkpoint);
    return load_checkpoint(config.checkpoint);
}

ModelConfig model_config(const RunConfig& config) {
    ModelConfig mc = config.model;
    mc.seed = config.seed;
    return mc;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json stats_json(const LogStats& s) {
    return {{"cases", s.num_cases},        {"activities", s.num_activities}, {"events", s.num_events},
            {"avg_len", s.avg_len},        {"max_len", s.max_len},           {"variants", s.num_variants}};
}

std::string fixed2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

std::unique_ptr<Explainer> make_explainer(const RunConfig& config) {
    if (config.explain.method == ExplainMethod::Backward) {
        BackwardOptions options{config.explain.n_mods, config.explain.prune, config.threads};
        return std::make_unique<BackwardExplainer>(config.thresholds, options, config.seed);
    }
    ExplorationOptions options;
    options.n_mods = config.explain.n_mods;
    options.subset_cap = config.explain.subset_cap;
    options.exhaustive_limit = config.explain.exhaustive_limit;
    options.normalization = config.explain.normalization;
    options.cell = config.explain.cell;
    options.threads = config.threads;
    return std::make_unique<AttentionExplorationExplainer>(config.thresholds, options, config.seed);
}

std::vector<Prefix> fitting(std::vector<Prefix> prefixes, std::size_t max_len, std::size_t* skipped) {
    auto too_long = [&](const Prefix& p) { return p.size() > max_len; };
    const auto before = prefixes.size();
    prefixes.erase(std::remove_if(prefixes.begin(), prefixes.end(), too_long), prefixes.end());
    *skipped += before - prefixes.size();
    return prefixes;
}

}  // namespace

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

EventLog load_log(const LogSource& source, std::ostream& diagnostics) {
    LogFormat format = source.format;
    if (format == LogFormat::Auto) {
        std::string ext = fs::path(source.path).extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        format = ext == ".xes" ? LogFormat::Xes : LogFormat::Csv;
    }
    std::vector<std::string> warnings;
    ParseOptions options;
    options.filter.activity_prefixes = source.activity_prefixes;
    options.filter.lifecycle = source.lifecycle;
    options.warnings = &warnings;
    EventLog log = format == LogFormat::Xes ? parse_xes(source.path, options)
                                            : parse_csv(source.path, source.columns, options);
    for (const auto& w : warnings) diagnostics << "warning: " << w << "\n";
    return log;
}

std::vector<Prefix> parse_prefix_file(std::string_view text, const Vocabulary& vocabulary, std::size_t* skipped) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("prefix file: ") + e.what());
    }
    if (!j.is_array()) throw Error(ErrorKind::Schema, "prefix file must hold a JSON array");
    std::vector<Prefix> prefixes;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& item = j[i];
        const json* labels = &item;
        std::string target(kEndLabel);
        if (item.is_object()) {
            if (!item.contains("activities")) {
                throw Error(ErrorKind::Schema, "prefix " + std::to_string(i) + " lacks \"activities\"");
            }
            labels = &item.at("activities");
            if (item.contains("target")) target = item.at("target").get<std::string>();
        }
        if (!labels->is_array() || labels->empty()) {
            throw Error(ErrorKind::Schema, "prefix " + std::to_string(i) + " must be a non-empty label array");
        }
        Prefix p;
        p.source_case = "prefix-" + std::to_string(i);
        bool known = true;
        for (const auto& l : *labels) {
            const auto label = l.get<std::string>();
            if (label == kPadLabel) {
                p.activities.push_back(vocabulary.pad());
            } else if (auto id = vocabulary.find(label)) {
                p.activities.push_back(*id);
            } else {
                known = false;
            }
        }
        if (target == kEndLabel) {
            p.target = vocabulary.end();
        } else if (auto id = vocabulary.find(target)) {
            p.target = *id;
        } else {
            known = false;
        }
        if (!known) {
            if (skipped) ++*skipped;
            continue;
        }
        prefixes.push_back(std::move(p));
    }
    return prefixes;
}

PrefixSet resolve_prefixes(const RunConfig& config, const SequenceModel& model, std::ostream& diagnostics) {
    PrefixSet set;
    const Vocabulary& vocabulary = model.vocabulary();
    if (!config.prefixes.empty()) {
        set.source = "file";
        set.prefixes = parse_prefix_file(read_file(config.prefixes), vocabulary, &set.skipped);
    } else {
        require_log(config);
        set.source = "test-split";
        const auto [train_log, test_log] = split(load_log(config.log, diagnostics), config.train_frac, config.seed);
        std::vector<Trace> traces;
        for (const auto& t : test_log.traces()) {
            Trace mapped{t.case_id, {}};
            bool known = true;
            for (ActivityId a : t.activities) {
                auto id = vocabulary.find(test_log.vocabulary().label(a));
                if (!id) {
                    known = false;
                    break;
                }
                mapped.activities.push_back(*id);
            }
            if (known) {
                traces.push_back(std::move(mapped));
            } else {
                set.skipped += t.activities.size();
            }
        }
        set.prefixes = extract_prefixes(EventLog(std::move(traces), vocabulary), 1);
    }
    set.prefixes = fitting(std::move(set.prefixes), model.max_length(), &set.skipped);
    if (set.skipped) diagnostics << "warning: skipped " << set.skipped << " prefixes the model cannot score\n";
    if (set.prefixes.empty()) throw Error(ErrorKind::EmptyLog, "no prefixes to process");
    return set;
}

void cmd_stats(const RunConfig& config, std::ostream& out) {
    require_log(config);
    const auto log = load_log(config.log, std::cerr);
    const auto s = log.stats();
    const auto dir = prepare_out_dir(config);

    json j = stats_json(s);
    j["log"] = config.log.path;
    write_file(dir / "stats.json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "cases,activities,events,avg_len,max_len,variants\n"
        << s.num_cases << ',' << s.num_activities << ',' << s.num_events << ',' << fixed2(s.avg_len) << ','
        << s.max_len << ',' << s.num_variants << "\n";
    write_file(dir / "stats.csv", csv.str());

    out << "cases       " << s.num_cases << "\n"
        << "activities  " << s.num_activities << "\n"
        << "events      " << s.num_events << "\n"
        << "avg length  " << fixed2(s.avg_len) << "\n"
        << "max length  " << s.max_len << "\n"
        << "variants    " << s.num_variants << "\n";
}

void cmd_synth(const RunConfig& config, std::ostream& out) {
    if (config.synth.tree.empty()) throw Error(ErrorKind::Usage, "no process tree configured (--tree or --spec)");
    SynthSpec spec;
    spec.name = config.synth.name;
    spec.tree = parse_process_tree(config.synth.tree);
    spec.traces = config.synth.traces;
    spec.seed = config.synth.seed;
    const auto result = synth_log(spec, spec.traces, spec.seed);
    const auto dir = prepare_out_dir(config);

    write_file(dir / "log.csv", to_csv(result.log));
    write_file(dir / "ground_truth.edges", format_edges(result.ground_truth));

    json language = json::array();
    for (const auto& [trace, probability] : enumerate_language(spec.tree)) {
        language.push_back({{"trace", trace}, {"probability", probability}});
    }
    json summary = {{"name", spec.name},  {"tree", to_string(spec.tree)},     {"traces", spec.traces},
                    {"seed", spec.seed},  {"stats", stats_json(result.log.stats())}, {"language", language}};
    write_file(dir / "synth.json", summary.dump(2) + "\n");

    out << "wrote " << result.log.size() << " traces of " << to_string(spec.tree) << " with "
        << result.ground_truth.size() << " directly-follows edges to " << dir.string() << "\n";
}

void cmd_train(const RunConfig& config, std::ostream& out) {
    require_log(config);
    const auto log = load_log(config.log, std::cerr);
    const auto [train_log, test_log] = split(log, config.train_frac, config.seed);
    ModelConfig mc = model_config(config);
    if (mc.max_len == 0) mc.max_len = log.stats().max_len;

    TrainReport report;
    const auto model = train(train_log, mc, &report);
    const auto test_prefixes = extract_prefixes(test_log, 1);
    const auto scores = evaluate_predictions(model, test_prefixes);

    const auto dir = prepare_out_dir(config);
    save_checkpoint(model, dir / "model.ckpt");
    json j = {
        {"train_cases", train_log.size()},
        {"test_cases", test_log.size()},
        {"max_len", mc.max_len},
        {"parameters", model.parameters().count()},
        {"steps", report.steps},
        {"samples", report.samples},
        {"epoch_loss", report.epoch_loss},
        {"test", {{"prefixes", scores.samples}, {"accuracy", scores.accuracy}, {"weighted_f1", scores.weighted_f1}}},
    };
    write_file(dir / "train_report.json", j.dump(2) + "\n");

    out << "trained on " << train_log.size() << " cases (" << report.steps << " steps), final loss "
        << (report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()) << "\n"
        << "test prefixes " << scores.samples << ", accuracy " << scores.accuracy << ", weighted F1 "
        << scores.weighted_f1 << "\n"
        << "checkpoint " << (dir / "model.ckpt").string() << "\n";
}

void cmd_exp1(const RunConfig& config, std::ostream& out) {
    require_log(config);
    const auto log = load_log(config.log, std::cerr);
    const auto [train_log, test_log] = split(log, config.train_frac, config.seed);
    Exp1Options options;
    options.repeats = config.exp1.repeats;
    options.scope = config.exp1.scope;
    options.cross_product = config.exp1.cross_product;
    options.threads = config.threads;
    const auto result = experiment1(train_log, test_log, model_config(config), options);

    const auto dir = prepare_out_dir(config);
    write_file(dir / "exp1.csv", exp1_csv(result));
    write_file(dir / "exp1.json", exp1_json(result));
    out << "experiment 1: " << result.rows.size() << " comparisons over " << result.test_prefixes
        << " test prefixes\n";
    for (const auto& r : result.rows) {
        out << "  " << r.kind << " " << r.baseline << " vs " << r.other << ": JSD " << r.mean_jsd << ", TVD "
            << r.mean_tvd << "\n";
    }
}

void cmd_exp2(const RunConfig& config, std::ostream& out) {
    const auto model = require_model(config);
    const auto set = resolve_prefixes(config, model, std::cerr);
    const auto result = experiment2(model, set.prefixes, config.threads);

    const auto dir = prepare_out_dir(config);
    write_file(dir / "exp2.csv", exp2_csv(result));
    write_file(dir / "exp2.json", exp2_json(result));
    out << "experiment 2: " << result.rows.size() << " masked positions over " << set.prefixes.size()
        << " prefixes\n";
}

void cmd_explain(const RunConfig& config, std::ostream& out) {
    const auto model = require_model(config);
    const auto set = resolve_prefixes(config, model, std::cerr);
    const auto dir = prepare_out_dir(config);
    const auto& vocabulary = model.vocabulary();

    ExplanationGraph graph;
    if (config.explain.method == ExplainMethod::Backward) {
        graph = make_explainer(config)->explain(model, set.prefixes);
    } else {
        ExplorationOptions options;
        options.n_mods = config.explain.n_mods;
        options.subset_cap = config.explain.subset_cap;
        options.exhaustive_limit = config.explain.exhaustive_limit;
        options.normalization = config.explain.normalization;
        options.cell = config.explain.cell;
        options.threads = config.threads;
        const auto result = attention_exploration(model, set.prefixes, config.thresholds, options, config.seed);
        graph = result.graph;
        json scores = {{"labels", vocabulary.labels()},
                       {"few", matrix_json(result.few.values)},
                       {"most", matrix_json(result.most.values)},
                       {"few_normalized", matrix_json(result.few_normalized)},
                       {"most_normalized", matrix_json(result.most_normalized)}};
        write_file(dir / "scores.json", scores.dump(2) + "\n");
    }

    write_file(dir / "graph.dot", export_graph(graph, GraphFormat::Dot));
    write_file(dir / "graph.json", export_graph(graph, GraphFormat::Json));
    json provenance = {
        {"method", to_string(config.explain.method)},
        {"seed", config.seed},
        {"checkpoint", config.checkpoint},
        {"prefix_source", set.source},
        {"prefix_count", set.prefixes.size()},
        {"skipped_prefixes", set.skipped},
        {"thresholds",
         {{"delta_sim", config.thresholds.delta_sim},
          {"delta_attr", config.thresholds.delta_attr},
          {"delta_pred", config.thresholds.delta_pred},
          {"delta_edge", config.thresholds.edge_threshold(vocabulary.size())},
          {"sim_eps", config.thresholds.sim_eps}}},
        {"n_mods", config.explain.n_mods},
        {"subset_cap", config.explain.subset_cap},
        {"exhaustive_limit", config.explain.exhaustive_limit},
        {"normalization", to_string(config.explain.normalization)},
        {"literal_relevance_cell", config.explain.cell == RelevanceCell::LastMaskedColumn},
        {"prune", config.explain.prune},
    };
    write_file(dir / "provenance.json", provenance.dump(2) + "\n");
    out << to_string(config.explain.method) << ": " << graph.vertices.size() << " vertices, " << graph.edges.size()
        << " edges from " << set.prefixes.size() << " prefixes\n";
}

void cmd_evaluate(const RunConfig& config, std::ostream& out) {
    const auto model = require_model(config);
    const auto set = resolve_prefixes(config, model, std::cerr);
    const auto explainer = make_explainer(config);
    EvaluationOptions options{config.evaluate.sample_frac, config.evaluate.average, config.threads};
    const auto report = evaluate_all(model, *explainer, set.prefixes, config.thresholds, options, config.seed);

    const auto dir = prepare_out_dir(config);
    write_file(dir / "report.json", report_json(report));
    write_file(dir / "report.txt", report_table(report));
    write_file(dir / "report_raw.csv", report_raw_csv(report));
    out << report_table(report);
}

}  // namespace attnxp::cli
