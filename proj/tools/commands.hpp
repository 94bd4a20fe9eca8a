#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "attnxp/eventlog.hpp"
#include "attnxp/transformer.hpp"
#include "run_config.hpp"

namespace attnxp::cli {

// Each command writes its primary outputs plus resolved_config.json into
// config.out_dir and a short human-readable summary to `out`.
void cmd_stats(const RunConfig& config, std::ostream& out);
void cmd_synth(const RunConfig& config, std::ostream& out);
void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_exp1(const RunConfig& config, std::ostream& out);
void cmd_exp2(const RunConfig& config, std::ostream& out);
void cmd_explain(const RunConfig& config, std::ostream& out);
void cmd_evaluate(const RunConfig& config, std::ostream& out);

EventLog load_log(const LogSource& source, std::ostream& diagnostics);

struct PrefixSet {
    std::vector<Prefix> prefixes;
    std::string source;        // "file" or "test-split"
    std::size_t skipped = 0;   // unknown activities or longer than the model accepts
};

// Explicit prefix file when configured, otherwise the prefixes of the test
// split, re-expressed over the model vocabulary.
PrefixSet resolve_prefixes(const RunConfig& config, const SequenceModel& model, std::ostream& diagnostics);

// JSON array whose items are label arrays or {"activities": [...], "target": "X"}.
std::vector<Prefix> parse_prefix_file(std::string_view text, const Vocabulary& vocabulary, std::size_t* skipped);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace attnxp::cli
