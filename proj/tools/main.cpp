#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attnxp/error.hpp"
#include "attnxp/synth.hpp"
#include "commands.hpp"
#include "run_config.hpp"

namespace {

using attnxp::cli::RunConfig;

// Options bound to scratch storage; only options present on the command line
// are copied into the config, after the config file has been merged.
class Flags {
public:
    template <typename T, typename Setter>
    CLI::Option* option(CLI::App* app, const std::string& name, const std::string& help, Setter setter) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(name, *value, help);
        items_.push_back({opt, [value, setter](RunConfig& c) { setter(c, *value); }});
        return opt;
    }

    template <typename Setter>
    CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& help, Setter setter) {
        CLI::Option* opt = app->add_flag(name, help);
        items_.push_back({opt, [setter](RunConfig& c) { setter(c); }});
        return opt;
    }

    void apply(RunConfig& config) const {
        for (const auto& item : items_) {
            if (item.option->count() > 0) item.apply(config);
        }
    }

private:
    struct Item {
        CLI::Option* option;
        std::function<void(RunConfig&)> apply;
    };
    std::vector<Item> items_;
};

struct Command {
    CLI::App* app = nullptr;
    std::string name;
    std::function<void(const RunConfig&, std::ostream&)> run;
    std::function<void(RunConfig&)> fixup;  // settings implied by the subcommand itself
    Flags flags;
    std::string config_path;
};

void add_general(Command& c, bool root_seed = true) {
    c.app->add_option("--config", c.config_path, "JSON config file; flags override its values")
        ->check(CLI::ExistingFile);
    c.flags.option<std::string>(c.app, "--out-dir", "output directory", [](RunConfig& r, const std::string& v) {
        r.out_dir = v;
    });
    c.flags.option<std::size_t>(c.app, "--threads", "worker threads (1 keeps runs reproducible)",
                                [](RunConfig& r, std::size_t v) { r.threads = v; });
    if (root_seed) {
        c.flags.option<std::uint64_t>(c.app, "--seed", "root seed", [](RunConfig& r, std::uint64_t v) { r.seed = v; });
        c.flags.option<double>(c.app, "--train-frac", "training share of the trace-level split",
                               [](RunConfig& r, double v) { r.train_frac = v; });
    }
}

void add_log(Command& c) {
    c.flags.option<std::string>(c.app, "--log", "event log (CSV or XES)",
                                [](RunConfig& r, const std::string& v) { r.log.path = v; });
    c.flags.option<std::string>(c.app, "--format", "csv, xes or auto", [](RunConfig& r, const std::string& v) {
        r.log.format = attnxp::cli::log_format_from_string(v);
    });
    c.flags.option<std::string>(c.app, "--case-col", "CSV case column",
                                [](RunConfig& r, const std::string& v) { r.log.columns.case_col = v; });
    c.flags.option<std::string>(c.app, "--activity-col", "CSV activity column",
                                [](RunConfig& r, const std::string& v) { r.log.columns.activity_col = v; });
    c.flags.option<std::string>(c.app, "--time-col", "CSV timestamp column (empty keeps file order)",
                                [](RunConfig& r, const std::string& v) { r.log.columns.time_col = v; });
    c.flags.option<std::string>(c.app, "--lifecycle-col", "CSV lifecycle column",
                                [](RunConfig& r, const std::string& v) { r.log.columns.lifecycle_col = v; });
    c.flags.option<std::vector<std::string>>(
        c.app, "--activity-prefix", "keep only activities starting with this (repeatable)",
        [](RunConfig& r, const std::vector<std::string>& v) { r.log.activity_prefixes = v; });
    c.flags.option<std::string>(c.app, "--lifecycle", "keep only events with this lifecycle value",
                                [](RunConfig& r, const std::string& v) { r.log.lifecycle = v; });
}

void add_model(Command& c) {
    c.flags.option<std::size_t>(c.app, "--epochs", "training epochs", [](RunConfig& r, std::size_t v) {
        r.model.epochs = v;
    });
    c.flags.option<std::size_t>(c.app, "--heads", "attention heads", [](RunConfig& r, std::size_t v) {
        r.model.heads = v;
    });
    c.flags.option<std::size_t>(c.app, "--d-model", "embedding width", [](RunConfig& r, std::size_t v) {
        r.model.d_model = v;
    });
    c.flags.option<std::size_t>(c.app, "--ff-dim", "feed-forward width", [](RunConfig& r, std::size_t v) {
        r.model.ff_dim = v;
    });
    c.flags.option<std::size_t>(c.app, "--max-len", "maximum prefix length (0: longest trace)",
                                [](RunConfig& r, std::size_t v) { r.model.max_len = v; });
    c.flags.option<std::size_t>(c.app, "--batch-size", "mini-batch size", [](RunConfig& r, std::size_t v) {
        r.model.batch_size = v;
    });
    c.flags.option<double>(c.app, "--learning-rate", "SGD step size", [](RunConfig& r, double v) {
        r.model.learning_rate = v;
    });
    c.flags.option<double>(c.app, "--pad-dropout", "share of training positions replaced by PAD",
                           [](RunConfig& r, double v) { r.model.pad_dropout = v; });
    c.flags.option<std::string>(c.app, "--attention-mode", "learned or frozen-uniform",
                                [](RunConfig& r, const std::string& v) {
                                    r.model.attention_mode = attnxp::attention_mode_from_string(v);
                                });
}

void add_model_input(Command& c) {
    c.flags.option<std::string>(c.app, "--checkpoint", "trained model checkpoint",
                                [](RunConfig& r, const std::string& v) { r.checkpoint = v; });
    c.flags.option<std::string>(c.app, "--prefixes", "JSON prefix file (default: test split of --log)",
                                [](RunConfig& r, const std::string& v) { r.prefixes = v; });
}

void add_thresholds(Command& c) {
    c.flags.option<double>(c.app, "--delta-sim", "max cosine distance of kept modifications",
                           [](RunConfig& r, double v) { r.thresholds.delta_sim = v; });
    c.flags.option<double>(c.app, "--delta-attr", "psi floor for relevant activities",
                           [](RunConfig& r, double v) { r.thresholds.delta_attr = v; });
    c.flags.option<double>(c.app, "--delta-pred", "probability floor for likely next activities",
                           [](RunConfig& r, double v) { r.thresholds.delta_pred = v; });
    c.flags.option<double>(c.app, "--delta-edge", "normalised score floor for edges (default 1.5/|A|)",
                           [](RunConfig& r, double v) { r.thresholds.delta_edge = v; });
    c.flags.option<double>(c.app, "--sim-eps", "probability change still counted as unchanged",
                           [](RunConfig& r, double v) { r.thresholds.sim_eps = v; });
}

void add_explainer(Command& c) {
    c.flags.option<std::size_t>(c.app, "--n-mods", "random modifications per prefix",
                                [](RunConfig& r, std::size_t v) { r.explain.n_mods = v; });
    c.flags.option<std::size_t>(c.app, "--subset-cap", "sampled subsets when exhaustive enumeration is too large",
                                [](RunConfig& r, std::size_t v) { r.explain.subset_cap = v; });
    c.flags.option<std::size_t>(c.app, "--exhaustive-limit", "enumerate every subset up to this many positions",
                                [](RunConfig& r, std::size_t v) { r.explain.exhaustive_limit = v; });
    c.flags.option<std::string>(c.app, "--normalization", "shift-by-min or clamp-negative",
                                [](RunConfig& r, const std::string& v) {
                                    r.explain.normalization = attnxp::cli::normalization_from_string(v);
                                });
    c.flags.flag(c.app, "--literal-relevance-cell", "credit non-masked contributions to the last masked column",
                 [](RunConfig& r) { r.explain.cell = attnxp::RelevanceCell::LastMaskedColumn; });
    c.flags.flag(c.app, "--no-prune", "keep shortcut edges in the backward explainer",
                 [](RunConfig& r) { r.explain.prune = false; });
}

RunConfig resolve(const Command& c) {
    RunConfig config;
    if (!c.config_path.empty()) config = attnxp::cli::load_config(c.config_path, config);
    c.flags.apply(config);
    if (config.synth.tree.empty() && !config.synth.spec.empty()) {
        const auto spec = attnxp::load_synth_spec(config.synth.spec);
        config.synth.name = spec.name;
        config.synth.tree = attnxp::to_string(spec.tree);
        config.synth.traces = spec.traces;
        config.synth.seed = spec.seed;
        c.flags.apply(config);
    }
    if (c.fixup) c.fixup(config);
    config.command = c.name;
    config.validate();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explainable next-activity prediction with attention-based explainers"};
    app.require_subcommand(1);
    std::vector<std::unique_ptr<Command>> commands;
    auto make = [&](CLI::App* parent, const std::string& name, const std::string& path, const std::string& help,
                    std::function<void(const RunConfig&, std::ostream&)> run) -> Command& {
        auto cmd = std::make_unique<Command>();
        cmd->app = parent->add_subcommand(name, help);
        cmd->name = path;
        cmd->run = std::move(run);
        commands.push_back(std::move(cmd));
        return *commands.back();
    };

    {
        auto& c = make(&app, "stats", "stats", "event log statistics", attnxp::cli::cmd_stats);
        add_general(c, false);
        add_log(c);
    }
    {
        auto& c = make(&app, "synth", "synth", "generate a log from a process tree", attnxp::cli::cmd_synth);
        add_general(c, false);
        c.flags.option<std::string>(c.app, "--spec", "synth spec file (name/tree/traces/seed)",
                                    [](RunConfig& r, const std::string& v) { r.synth.spec = v; });
        c.flags.option<std::string>(c.app, "--tree", "process tree, e.g. \"seq(A, xor(B, C), D)\"",
                                    [](RunConfig& r, const std::string& v) { r.synth.tree = v; });
        c.flags.option<std::string>(c.app, "--name", "log name",
                                    [](RunConfig& r, const std::string& v) { r.synth.name = v; });
        c.flags.option<std::size_t>(c.app, "--traces", "number of traces",
                                    [](RunConfig& r, std::size_t v) { r.synth.traces = v; });
        c.flags.option<std::uint64_t>(c.app, "--seed", "sampling seed",
                                      [](RunConfig& r, std::uint64_t v) { r.synth.seed = v; });
    }
    {
        auto& c = make(&app, "train", "train", "train the next-activity transformer", attnxp::cli::cmd_train);
        add_general(c);
        add_log(c);
        add_model(c);
    }
    {
        CLI::App* prestudy = app.add_subcommand("prestudy", "attention reliability experiments");
        prestudy->require_subcommand(1);
        auto& e1 = make(prestudy, "exp1", "prestudy exp1", "baselines versus frozen-uniform and reseeded models",
                        attnxp::cli::cmd_exp1);
        add_general(e1);
        add_log(e1);
        add_model(e1);
        e1.flags.option<std::size_t>(e1.app, "--repeats", "models per family", [](RunConfig& r, std::size_t v) {
            r.exp1.repeats = v;
        });
        e1.flags.option<std::string>(e1.app, "--scope", "all-heads or per-head", [](RunConfig& r, const std::string& v) {
            r.exp1.scope = attnxp::cli::scope_from_string(v);
        });
        e1.flags.flag(e1.app, "--cross-product", "compare every baseline with every frozen model",
                      [](RunConfig& r) { r.exp1.cross_product = true; });

        auto& e2 = make(prestudy, "exp2", "prestudy exp2", "input masking versus attention masking",
                        attnxp::cli::cmd_exp2);
        add_general(e2);
        add_log(e2);
        add_model_input(e2);
    }
    {
        CLI::App* explain = app.add_subcommand("explain", "build an explanation graph");
        explain->require_subcommand(1);
        for (auto method : {attnxp::cli::ExplainMethod::Backward, attnxp::cli::ExplainMethod::AttentionExploration}) {
            const std::string name = attnxp::cli::to_string(method);
            auto& c = make(explain, name, "explain " + name, name + " explainer", attnxp::cli::cmd_explain);
            c.fixup = [method](RunConfig& r) { r.explain.method = method; };
            add_general(c);
            add_log(c);
            add_model_input(c);
            add_thresholds(c);
            add_explainer(c);
        }
    }
    {
        auto& c = make(&app, "evaluate", "evaluate", "score an explainer with the Co-metrics", attnxp::cli::cmd_evaluate);
        add_general(c);
        add_log(c);
        add_model_input(c);
        add_thresholds(c);
        add_explainer(c);
        c.flags.option<std::string>(c.app, "--method", "backward or attention-exploration",
                                    [](RunConfig& r, const std::string& v) {
                                        r.explain.method = attnxp::cli::explain_method_from_string(v);
                                    });
        c.flags.option<double>(c.app, "--sample-frac", "share of prefixes to evaluate",
                               [](RunConfig& r, double v) { r.evaluate.sample_frac = v; });
        c.flags.option<std::string>(c.app, "--f1", "micro or macro completeness",
                                    [](RunConfig& r, const std::string& v) {
                                        r.evaluate.average = attnxp::cli::f1_average_from_string(v);
                                    });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return attnxp::exit_code(attnxp::ErrorKind::Usage);
    }

    for (const auto& c : commands) {
        if (!c->app->parsed()) continue;
        try {
            c->run(resolve(*c), std::cout);
            return 0;
        } catch (const attnxp::Error& e) {
            std::cerr << "error (" << attnxp::to_string(e.kind()) << "): " << e.what() << "\n";
            return attnxp::exit_code(e.kind());
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    return attnxp::exit_code(attnxp::ErrorKind::Usage);
}
