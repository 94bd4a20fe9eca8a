#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnxp/attnstats.hpp"
#include "attnxp/eventlog.hpp"
#include "attnxp/transformer.hpp"

namespace attnxp {

struct ModelComparison {
    double mean_jsd = 0.0;
    double mean_tvd = 0.0;
    std::size_t samples = 0;
};

// Mean JSD between attention distributions and mean TVD between predictions
// of two models over the same prefixes. With PerHead scope the JSD is the
// mean over heads.
ModelComparison compare_models(const SequenceModel& reference, const SequenceModel& other,
                               const std::vector<Prefix>& prefixes,
                               DistributionScope scope = DistributionScope::AllHeads, std::size_t threads = 1);

struct Exp1Row {
    std::string kind;        // "frozen" (baseline i vs frozen j) or "seeded" (baseline 0 vs baseline i)
    std::size_t baseline = 0;
    std::size_t other = 0;
    std::uint64_t baseline_seed = 0;
    std::uint64_t other_seed = 0;
    std::string other_mode;
    double mean_jsd = 0.0;
    double mean_tvd = 0.0;
};

struct Exp1Result {
    std::vector<Exp1Row> rows;
    std::size_t test_prefixes = 0;
};

struct Exp1Options {
    std::size_t repeats = 5;
    DistributionScope scope = DistributionScope::AllHeads;
    // Compare every baseline with every frozen model instead of pairing by index.
    bool cross_product = false;
    std::size_t threads = 1;
};

// Trains `repeats` seeded baselines and `repeats` frozen-uniform models on
// `train_log` and compares them on the prefixes of `test_log`. Seeds come from
// derive_seed(config.seed, kBaseline / kFrozen, i).
Exp1Result experiment1(const EventLog& train_log, const EventLog& test_log, const ModelConfig& config,
                       const Exp1Options& options = {});

struct Exp2Row {
    std::size_t prefix_index = 0;
    std::size_t position = 0;
    double tvd = 0.0;
};

struct Exp2Result {
    std::vector<Exp2Row> rows;
    std::vector<std::size_t> histogram;  // equal-width bins over [0, 1]
};

inline constexpr std::size_t kExp2Bins = 20;

// For every prefix and position: prediction with the position replaced by PAD
// versus prediction with that position masked inside every attention head.
Exp2Result experiment2(const SequenceModel& model, const std::vector<Prefix>& prefixes, std::size_t threads = 1);

std::vector<std::size_t> histogram(const std::vector<double>& values, std::size_t bins);

std::string exp1_csv(const Exp1Result& result);
std::string exp1_json(const Exp1Result& result);
std::string exp2_csv(const Exp2Result& result);
std::string exp2_json(const Exp2Result& result);

}  // namespace attnxp
