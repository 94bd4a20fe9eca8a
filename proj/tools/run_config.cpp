#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attnxp/error.hpp"

namespace attnxp::cli {
namespace {

using json = nlohmann::ordered_json;

// Reads known keys from one JSON object and rejects the rest, so a typo in a
// config file is an error instead of a silently ignored setting.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw Error(ErrorKind::Schema, "config section '" + name_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Schema, "config key '" + qualified(key) + "': " + e.what());
        }
    }

    template <typename T>
    void read_optional(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        T value{};
        read(key, value);
        out = value;
    }

    template <typename Enum, typename Parse>
    void read_enum(const char* key, Enum& out, Parse parse) {
        std::string text;
        bool present = j_.contains(key);
        read(key, text);
        if (present) out = parse(text);
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw Error(ErrorKind::Schema, "unknown config key '" + qualified(it.key()) + "'");
        }
    }

private:
    std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

const char* to_string(LogFormat format) noexcept {
    switch (format) {
        case LogFormat::Auto: return "auto";
        case LogFormat::Csv: return "csv";
        case LogFormat::Xes: return "xes";
    }
    return "?";
}

const char* to_string(ExplainMethod method) noexcept {
    return method == ExplainMethod::Backward ? "backward" : "attention-exploration";
}

const char* to_string(RowNormalization mode) noexcept {
    return mode == RowNormalization::ShiftByMin ? "shift-by-min" : "clamp-negative";
}

const char* to_string(F1Average average) noexcept { return average == F1Average::Micro ? "micro" : "macro"; }

const char* to_string(DistributionScope scope) noexcept {
    return scope == DistributionScope::AllHeads ? "all-heads" : "per-head";
}

LogFormat log_format_from_string(const std::string& s) {
    if (s == "auto") return LogFormat::Auto;
    if (s == "csv") return LogFormat::Csv;
    if (s == "xes") return LogFormat::Xes;
    throw Error(ErrorKind::Usage, "unknown log format '" + s + "' (expected csv, xes or auto)");
}

ExplainMethod explain_method_from_string(const std::string& s) {
    if (s == "backward") return ExplainMethod::Backward;
    if (s == "attention-exploration") return ExplainMethod::AttentionExploration;
    throw Error(ErrorKind::Usage, "unknown explanation method '" + s + "' (expected backward or attention-exploration)");
}

RowNormalization normalization_from_string(const std::string& s) {
    if (s == "shift-by-min") return RowNormalization::ShiftByMin;
    if (s == "clamp-negative") return RowNormalization::ClampNegative;
    throw Error(ErrorKind::Usage, "unknown normalization '" + s + "' (expected shift-by-min or clamp-negative)");
}

F1Average f1_average_from_string(const std::string& s) {
    if (s == "micro") return F1Average::Micro;
    if (s == "macro") return F1Average::Macro;
    throw Error(ErrorKind::Usage, "unknown F1 average '" + s + "' (expected micro or macro)");
}

DistributionScope scope_from_string(const std::string& s) {
    if (s == "all-heads") return DistributionScope::AllHeads;
    if (s == "per-head") return DistributionScope::PerHead;
    throw Error(ErrorKind::Usage, "unknown attention scope '" + s + "' (expected all-heads or per-head)");
}

void RunConfig::validate() const {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error(ErrorKind::Usage, "train_frac must lie in (0, 1)");
    if (threads == 0) throw Error(ErrorKind::Usage, "threads must be >= 1");
    if (out_dir.empty()) throw Error(ErrorKind::Usage, "out_dir must not be empty");
    model.validate();
    thresholds.validate();
    if (exp1.repeats == 0) throw Error(ErrorKind::Usage, "exp1.repeats must be >= 1");
    if (explain.subset_cap == 0) throw Error(ErrorKind::Usage, "explain.subset_cap must be >= 1");
    if (!(evaluate.sample_frac > 0.0 && evaluate.sample_frac <= 1.0)) {
        throw Error(ErrorKind::Usage, "evaluate.sample_frac must lie in (0, 1]");
    }
}

std::string to_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["seed"] = c.seed;
    j["train_frac"] = c.train_frac;
    j["threads"] = c.threads;
    j["out_dir"] = c.out_dir;
    j["checkpoint"] = c.checkpoint;
    j["prefixes"] = c.prefixes;
    j["log"] = {
        {"path", c.log.path},
        {"format", to_string(c.log.format)},
        {"case_col", c.log.columns.case_col},
        {"activity_col", c.log.columns.activity_col},
        {"time_col", c.log.columns.time_col},
        {"lifecycle_col", c.log.columns.lifecycle_col},
        {"activity_prefixes", c.log.activity_prefixes},
        {"lifecycle", optional_json(c.log.lifecycle)},
    };
    j["model"] = {
        {"d_model", c.model.d_model},
        {"heads", c.model.heads},
        {"max_len", c.model.max_len},
        {"ff_dim", c.model.ff_dim},
        {"epochs", c.model.epochs},
        {"batch_size", c.model.batch_size},
        {"learning_rate", c.model.learning_rate},
        {"pad_dropout", c.model.pad_dropout},
        {"attention_mode", attnxp::to_string(c.model.attention_mode)},
    };
    j["thresholds"] = {
        {"delta_sim", c.thresholds.delta_sim},
        {"delta_attr", c.thresholds.delta_attr},
        {"delta_pred", c.thresholds.delta_pred},
        {"delta_edge", optional_json(c.thresholds.delta_edge)},
        {"sim_eps", c.thresholds.sim_eps},
    };
    j["synth"] = {
        {"spec", c.synth.spec},
        {"tree", c.synth.tree},
        {"name", c.synth.name},
        {"traces", c.synth.traces},
        {"seed", c.synth.seed},
    };
    j["exp1"] = {
        {"repeats", c.exp1.repeats},
        {"scope", to_string(c.exp1.scope)},
        {"cross_product", c.exp1.cross_product},
    };
    j["explain"] = {
        {"method", to_string(c.explain.method)},
        {"n_mods", c.explain.n_mods},
        {"subset_cap", c.explain.subset_cap},
        {"exhaustive_limit", c.explain.exhaustive_limit},
        {"normalization", to_string(c.explain.normalization)},
        {"literal_relevance_cell", c.explain.cell == RelevanceCell::LastMaskedColumn},
        {"prune", c.explain.prune},
    };
    j["evaluate"] = {
        {"sample_frac", c.evaluate.sample_frac},
        {"average", to_string(c.evaluate.average)},
    };
    return j.dump(2) + "\n";
}

RunConfig merge_json(RunConfig c, std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
    }
    Section root(j, "");
    root.read("command", c.command);
    root.read("seed", c.seed);
    root.read("train_frac", c.train_frac);
    root.read("threads", c.threads);
    root.read("out_dir", c.out_dir);
    root.read("checkpoint", c.checkpoint);
    root.read("prefixes", c.prefixes);

    if (const json* s = root.child("log")) {
        Section log(*s, "log");
        log.read("path", c.log.path);
        log.read_enum("format", c.log.format, log_format_from_string);
        log.read("case_col", c.log.columns.case_col);
        log.read("activity_col", c.log.columns.activity_col);
        log.read("time_col", c.log.columns.time_col);
        log.read("lifecycle_col", c.log.columns.lifecycle_col);
        log.read("activity_prefixes", c.log.activity_prefixes);
        log.read_optional("lifecycle", c.log.lifecycle);
        log.finish();
    }
    if (const json* s = root.child("model")) {
        Section m(*s, "model");
        m.read("d_model", c.model.d_model);
        m.read("heads", c.model.heads);
        m.read("max_len", c.model.max_len);
        m.read("ff_dim", c.model.ff_dim);
        m.read("epochs", c.model.epochs);
        m.read("batch_size", c.model.batch_size);
        m.read("learning_rate", c.model.learning_rate);
        m.read("pad_dropout", c.model.pad_dropout);
        m.read_enum("attention_mode", c.model.attention_mode, attention_mode_from_string);
        m.finish();
    }
    if (const json* s = root.child("thresholds")) {
        Section t(*s, "thresholds");
        t.read("delta_sim", c.thresholds.delta_sim);
        t.read("delta_attr", c.thresholds.delta_attr);
        t.read("delta_pred", c.thresholds.delta_pred);
        t.read_optional("delta_edge", c.thresholds.delta_edge);
        t.read("sim_eps", c.thresholds.sim_eps);
        t.finish();
    }
    if (const json* s = root.child("synth")) {
        Section t(*s, "synth");
        t.read("spec", c.synth.spec);
        t.read("tree", c.synth.tree);
        t.read("name", c.synth.name);
        t.read("traces", c.synth.traces);
        t.read("seed", c.synth.seed);
        t.finish();
    }
    if (const json* s = root.child("exp1")) {
        Section e(*s, "exp1");
        e.read("repeats", c.exp1.repeats);
        e.read_enum("scope", c.exp1.scope, scope_from_string);
        e.read("cross_product", c.exp1.cross_product);
        e.finish();
    }
    if (const json* s = root.child("explain")) {
        Section e(*s, "explain");
        e.read_enum("method", c.explain.method, explain_method_from_string);
        e.read("n_mods", c.explain.n_mods);
        e.read("subset_cap", c.explain.subset_cap);
        e.read("exhaustive_limit", c.explain.exhaustive_limit);
        e.read_enum("normalization", c.explain.normalization, normalization_from_string);
        bool literal = c.explain.cell == RelevanceCell::LastMaskedColumn;
        e.read("literal_relevance_cell", literal);
        c.explain.cell = literal ? RelevanceCell::LastMaskedColumn : RelevanceCell::NonMasked;
        e.read("prune", c.explain.prune);
        e.finish();
    }
    if (const json* s = root.child("evaluate")) {
        Section e(*s, "evaluate");
        e.read("sample_frac", c.evaluate.sample_frac);
        e.read_enum("average", c.evaluate.average, f1_average_from_string);
        e.finish();
    }
    root.finish();
    return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open config file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return merge_json(std::move(base), buffer.str());
}

}  // namespace attnxp::cli
