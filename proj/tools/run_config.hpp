#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnxp/attnstats.hpp"
#include "attnxp/eventlog.hpp"
#include "attnxp/explain.hpp"
#include "attnxp/metrics.hpp"
#include "attnxp/transformer.hpp"

namespace attnxp::cli {

enum class LogFormat { Auto, Csv, Xes };

struct LogSource {
    std::string path;
    LogFormat format = LogFormat::Auto;
    CsvColumns columns;
    std::vector<std::string> activity_prefixes;
    std::optional<std::string> lifecycle;
};

struct SynthSettings {
    std::string spec;   // key/value spec file; `tree` wins when both are set
    std::string tree;
    std::string name = "synthetic";
    std::size_t traces = 1000;
    std::uint64_t seed = 0;
};

struct Exp1Settings {
    std::size_t repeats = 5;
    DistributionScope scope = DistributionScope::AllHeads;
    bool cross_product = false;
};

enum class ExplainMethod { Backward, AttentionExploration };

struct ExplainSettings {
    ExplainMethod method = ExplainMethod::AttentionExploration;
    std::size_t n_mods = 20;
    std::size_t subset_cap = 256;
    std::size_t exhaustive_limit = 8;
    RowNormalization normalization = RowNormalization::ShiftByMin;
    RelevanceCell cell = RelevanceCell::NonMasked;
    bool prune = true;
};

struct EvaluateSettings {
    double sample_frac = 1.0;
    F1Average average = F1Average::Micro;
};

// Everything a command needs; serialised next to its outputs so the run can
// be repeated from that file alone.
struct RunConfig {
    std::string command;
    LogSource log;
    std::string checkpoint;
    std::string prefixes;  // optional JSON prefix file; default is the test split
    std::string out_dir = "attnxp-out";
    std::uint64_t seed = 0;
    double train_frac = 0.7;
    std::size_t threads = 1;
    ModelConfig model;
    Thresholds thresholds;
    SynthSettings synth;
    Exp1Settings exp1;
    ExplainSettings explain;
    EvaluateSettings evaluate;

    // Throws Usage for out-of-range values.
    void validate() const;
};

std::string to_json(const RunConfig& config);
// Missing keys keep the values already in `base`; unknown keys are rejected.
RunConfig merge_json(RunConfig base, std::string_view text);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

const char* to_string(LogFormat format) noexcept;
const char* to_string(ExplainMethod method) noexcept;
const char* to_string(RowNormalization mode) noexcept;
const char* to_string(F1Average average) noexcept;
const char* to_string(DistributionScope scope) noexcept;
LogFormat log_format_from_string(const std::string& s);
ExplainMethod explain_method_from_string(const std::string& s);
RowNormalization normalization_from_string(const std::string& s);
F1Average f1_average_from_string(const std::string& s);
DistributionScope scope_from_string(const std::string& s);

}  // namespace attnxp::cli
