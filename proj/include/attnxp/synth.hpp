#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attnxp/eventlog.hpp"

namespace attnxp {

// Block-structured process description used to generate logs with a known
// control flow. Text form:
//   seq(A, B, C)                 A then B then C
//   xor(B, C)                    exactly one child, uniform choice
//   and(B, C)                    all children, randomly interleaved
//   loop(A, B, max_iter=3)       A (B A){0..max_iter-1}; each repeat taken
//                                with probability p_redo (default 0.5)
struct ProcessNode {
    enum class Kind { Activity, Sequence, Xor, And, Loop };

    Kind kind = Kind::Activity;
    std::string label;
    std::vector<ProcessNode> children;
    int max_iter = 3;
    double p_redo = 0.5;

    bool operator==(const ProcessNode&) const = default;
};

std::string to_string(const ProcessNode& node);
ProcessNode parse_process_tree(std::string_view text);

// Key/value file:
//   # comment
//   name = demo
//   tree = seq(A, xor(B, C), D)
//   traces = 1000      (optional)
//   seed = 7           (optional)
struct SynthSpec {
    std::string name = "synthetic";
    ProcessNode tree;
    std::size_t traces = 1000;
    std::uint64_t seed = 0;
};

SynthSpec parse_synth_spec(std::string_view text);
SynthSpec load_synth_spec(const std::filesystem::path& path);

using LabelTrace = std::vector<std::string>;
// Every trace the tree can produce, with its exact probability under the walk.
using Language = std::map<LabelTrace, double>;
using EdgeSet = std::set<std::pair<std::string, std::string>>;

Language enumerate_language(const ProcessNode& tree);
EdgeSet directly_follows(const Language& language);
// Labels that may follow `prefix`; kEndLabel stands for trace end.
std::set<std::string> possible_next(const Language& language, const LabelTrace& prefix);

struct SynthResult {
    EventLog log;
    EdgeSet ground_truth;
};

// Samples n_traces walks. Vocabulary in first-appearance order like parse_csv.
SynthResult synth_log(const SynthSpec& spec, std::size_t n_traces, std::uint64_t seed);

// Edge list file: one "source -> target" per line, sorted.
std::string format_edges(const EdgeSet& edges);
EdgeSet parse_edges(std::string_view text);

}  // namespace attnxp
