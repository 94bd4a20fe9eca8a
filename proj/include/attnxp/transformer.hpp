#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attnxp/eventlog.hpp"

namespace attnxp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class AttentionMode { Learned, FrozenUniform };

const char* to_string(AttentionMode mode) noexcept;
AttentionMode attention_mode_from_string(const std::string& s);

struct ModelConfig {
    std::size_t d_model = 36;  // embedding width; split evenly across heads
    std::size_t heads = 4;
    std::size_t max_len = 0;   // 0: longest training trace
    std::size_t ff_dim = 64;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double pad_dropout = 0.1;  // fraction of training positions replaced by PAD
    std::uint64_t seed = 0;
    AttentionMode attention_mode = AttentionMode::Learned;

    std::size_t head_dim() const { return d_model / heads; }
    // Throws Usage when the shape constraints do not hold.
    void validate() const;
};

// Probability over the business activities followed by END (index |A|).
struct PredictionVector {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
    std::size_t argmax() const;
};

// One post-softmax |prefix| x |prefix| matrix per head.
struct AttentionTensor {
    std::vector<Matrix> heads;

    std::size_t head_count() const noexcept { return heads.size(); }
    std::size_t length() const noexcept { return heads.empty() ? 0 : static_cast<std::size_t>(heads.front().rows()); }
};

struct ForwardResult {
    PredictionVector prediction;
    AttentionTensor attention;
};

// The surface the experiments and explainers consume. Implemented by
// TransformerModel and by test doubles.
class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual const Vocabulary& vocabulary() const = 0;
    virtual std::size_t max_length() const = 0;
    virtual ForwardResult forward(std::span<const ActivityId> prefix) const = 0;
    // Like forward, but rows and columns at `positions` are zeroed in every
    // head's attention matrix after the softmax.
    virtual PredictionVector forward_attention_masked(std::span<const ActivityId> prefix,
                                                      std::span<const std::size_t> positions) const = 0;

    // Index of a target symbol inside a PredictionVector.
    std::size_t output_index(ActivityId target) const;
};

struct Parameters {
    Matrix embedding;  // (|A| + 2) x d
    Matrix wq, wk, wv; // d x d, head j owns columns [j*dh, (j+1)*dh)
    Matrix wo;         // d x d
    Matrix bo;         // 1 x d
    Matrix ln1_gain, ln1_bias;
    Matrix w1, b1;     // d x ff, 1 x ff
    Matrix w2, b2;     // ff x d, 1 x d
    Matrix ln2_gain, ln2_bias;
    Matrix w_out, b_out;  // d x (|A| + 1), 1 x (|A| + 1)

    static const std::vector<std::string>& names();
    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;

    Parameters zeros_like() const;
    std::size_t count() const;
    bool all_finite() const;
    bool operator==(const Parameters& other) const;
};

class TransformerModel final : public SequenceModel {
public:
    // Randomly initialised model; max_len must already be resolved (> 0).
    TransformerModel(Vocabulary vocabulary, ModelConfig config);
    TransformerModel(Vocabulary vocabulary, ModelConfig config, Parameters parameters);

    const Vocabulary& vocabulary() const override { return vocabulary_; }
    std::size_t max_length() const override { return config_.max_len; }
    ForwardResult forward(std::span<const ActivityId> prefix) const override;
    PredictionVector forward_attention_masked(std::span<const ActivityId> prefix,
                                              std::span<const std::size_t> positions) const override;

    // Cross-entropy of `target` and its gradient, accumulated into `grad`.
    // Frozen attention parameters always receive an exactly zero gradient.
    double loss_and_gradient(std::span<const ActivityId> prefix, ActivityId target, Parameters& grad) const;
    double loss(std::span<const ActivityId> prefix, ActivityId target) const;

    const ModelConfig& config() const noexcept { return config_; }
    const Parameters& parameters() const noexcept { return params_; }
    Parameters& mutable_parameters() noexcept { return params_; }
    // True for tensors that training must leave untouched.
    bool is_frozen(std::size_t tensor_index) const;

    const Matrix& positional_encoding() const noexcept { return positional_; }

private:
    struct Cache;
    void run(std::span<const ActivityId> prefix, std::span<const std::size_t> masked, Cache& cache) const;
    void check_prefix(std::span<const ActivityId> prefix) const;

    Vocabulary vocabulary_;
    ModelConfig config_;
    Parameters params_;
    Matrix positional_;
};

// Sinusoidal encodings, rows = positions.
Matrix sinusoidal_positions(std::size_t max_len, std::size_t d_model);

struct TrainReport {
    std::vector<double> epoch_loss;
    std::size_t steps = 0;
    std::size_t samples = 0;
};

TransformerModel train(const EventLog& log, ModelConfig config, TrainReport* report = nullptr);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    // Largest |gradient| over frozen tensors (0 unless the contract is broken).
    double frozen_gradient_max = 0.0;
    double gradient_norm = 0.0;
};

// Central differences with the given step over a random subsample of
// parameters (all of them when samples == 0).
GradientCheckResult gradient_check(const TransformerModel& model, const Prefix& prefix, std::size_t samples = 0,
                                   std::uint64_t seed = 0, double step = 1e-4);

// Versioned checkpoint: magic, version, JSON header (config, vocabulary,
// tensor shapes), then little-endian float32 tensor data.
void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path);
TransformerModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const TransformerModel& model);
TransformerModel checkpoint_from_bytes(std::string_view bytes);

struct ClassificationReport {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    std::size_t samples = 0;
};

ClassificationReport evaluate_predictions(const SequenceModel& model, const std::vector<Prefix>& prefixes);

}  // namespace attnxp
