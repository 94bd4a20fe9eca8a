#include "attnxp/transformer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "attnxp/error.hpp"
#include "attnxp/rng.hpp"

namespace attnxp {

namespace {
constexpr double kLayerNormEps = 1e-6;
constexpr std::size_t kWq = 1;
constexpr std::size_t kWk = 2;
}  // namespace

const char* to_string(AttentionMode mode) noexcept {
    return mode == AttentionMode::Learned ? "learned" : "frozen-uniform";
}

AttentionMode attention_mode_from_string(const std::string& s) {
    if (s == "learned") return AttentionMode::Learned;
    if (s == "frozen-uniform") return AttentionMode::FrozenUniform;
    throw Error(ErrorKind::Usage, "unknown attention mode '" + s + "'");
}

void ModelConfig::validate() const {
    if (heads == 0) throw Error(ErrorKind::Usage, "heads must be >= 1");
    if (d_model == 0 || d_model % heads != 0) throw Error(ErrorKind::Usage, "d_model must be a positive multiple of heads");
    if (ff_dim == 0) throw Error(ErrorKind::Usage, "ff_dim must be positive");
    if (batch_size == 0) throw Error(ErrorKind::Usage, "batch_size must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::Usage, "learning rate must be positive");
    if (pad_dropout < 0.0 || pad_dropout >= 1.0) throw Error(ErrorKind::Usage, "pad_dropout must lie in [0, 1)");
}

std::size_t PredictionVector::argmax() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::size_t SequenceModel::output_index(ActivityId target) const {
    const auto& v = vocabulary();
    if (target == v.end()) return v.size();
    if (!v.is_activity(target)) throw Error(ErrorKind::Index, "PAD is not a prediction target");
    return target;
}

// ---------------------------------------------------------------------------
// Parameters

const std::vector<std::string>& Parameters::names() {
    static const std::vector<std::string> n{"embedding", "wq",       "wk",       "wv", "wo", "bo",
                                            "ln1_gain",  "ln1_bias", "w1",       "b1", "w2", "b2",
                                            "ln2_gain",  "ln2_bias", "w_out",    "b_out"};
    return n;
}

std::vector<Matrix*> Parameters::tensors() {
    return {&embedding, &wq, &wk, &wv, &wo, &bo, &ln1_gain, &ln1_bias,
            &w1,        &b1, &w2, &b2, &ln2_gain, &ln2_bias, &w_out, &b_out};
}

std::vector<const Matrix*> Parameters::tensors() const {
    return {&embedding, &wq, &wk, &wv, &wo, &bo, &ln1_gain, &ln1_bias,
            &w1,        &b1, &w2, &b2, &ln2_gain, &ln2_bias, &w_out, &b_out};
}

Parameters Parameters::zeros_like() const {
    Parameters z;
    auto dst = z.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = Matrix::Zero(src[i]->rows(), src[i]->cols());
    return z;
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for (auto* t : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
}

bool Parameters::all_finite() const {
    for (auto* t : tensors())
        if (!t->allFinite()) return false;
    return true;
}

bool Parameters::operator==(const Parameters& other) const {
    auto a = tensors();
    auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols()) return false;
        if (std::memcmp(a[i]->data(), b[i]->data(), sizeof(double) * static_cast<std::size_t>(a[i]->size())) != 0)
            return false;
    }
    return true;
}

Matrix sinusoidal_positions(std::size_t max_len, std::size_t d_model) {
    Matrix pe(static_cast<Eigen::Index>(max_len), static_cast<Eigen::Index>(d_model));
    for (std::size_t pos = 0; pos < max_len; ++pos) {
        for (std::size_t i = 0; i < d_model; ++i) {
            double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
            pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

namespace {

Parameters init_parameters(const Vocabulary& vocab, const ModelConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, streams::kInit));
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto ff = static_cast<Eigen::Index>(cfg.ff_dim);
    const auto out = static_cast<Eigen::Index>(vocab.size() + 1);
    const auto sym = static_cast<Eigen::Index>(vocab.symbol_count());

    auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double limit) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
        return m;
    };
    auto xavier = [&](Eigen::Index rows, Eigen::Index cols) {
        return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)));
    };

    Parameters p;
    p.embedding = uniform(sym, d, 0.05);
    // PAD starts as "no content": only the positional encoding remains.
    p.embedding.row(static_cast<Eigen::Index>(vocab.pad())).setZero();
    p.wq = xavier(d, d);
    p.wk = xavier(d, d);
    p.wv = xavier(d, d);
    p.wo = xavier(d, d);
    p.bo = Matrix::Zero(1, d);
    p.ln1_gain = Matrix::Ones(1, d);
    p.ln1_bias = Matrix::Zero(1, d);
    p.w1 = xavier(d, ff);
    p.b1 = Matrix::Zero(1, ff);
    p.w2 = xavier(ff, d);
    p.b2 = Matrix::Zero(1, d);
    p.ln2_gain = Matrix::Ones(1, d);
    p.ln2_bias = Matrix::Zero(1, d);
    p.w_out = xavier(d, out);
    p.b_out = Matrix::Zero(1, out);
    if (cfg.attention_mode == AttentionMode::FrozenUniform) {
        p.wq.setZero();
        p.wk.setZero();
    }
    return p;
}

void check_shapes(const Parameters& p, const Vocabulary& vocab, const ModelConfig& cfg) {
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto ff = static_cast<Eigen::Index>(cfg.ff_dim);
    const auto out = static_cast<Eigen::Index>(vocab.size() + 1);
    const auto sym = static_cast<Eigen::Index>(vocab.symbol_count());
    const std::vector<std::pair<Eigen::Index, Eigen::Index>> expected{
        {sym, d}, {d, d}, {d, d}, {d, d}, {d, d},  {1, d},  {1, d},   {1, d},
        {d, ff},  {1, ff}, {ff, d}, {1, d}, {1, d}, {1, d}, {d, out}, {1, out}};
    auto tensors = p.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i]->rows() != expected[i].first || tensors[i]->cols() != expected[i].second) {
            throw Error(ErrorKind::Schema, "parameter '" + Parameters::names()[i] + "' has shape " +
                                               std::to_string(tensors[i]->rows()) + "x" +
                                               std::to_string(tensors[i]->cols()) + ", expected " +
                                               std::to_string(expected[i].first) + "x" +
                                               std::to_string(expected[i].second));
        }
    }
}

void softmax_rows(Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double mx = m.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = std::exp(m(r, c) - mx);
            sum += m(r, c);
        }
        m.row(r) /= sum;
    }
}

struct LayerNormCache {
    Matrix xhat;
    Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache& cache) {
    const auto n = static_cast<double>(x.cols());
    cache.xhat.resize(x.rows(), x.cols());
    cache.inv_std.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mean = x.row(r).sum() / n;
        double var = (x.row(r).array() - mean).square().sum() / n;
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.inv_std(r) = inv;
        cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
    }
    Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
    y.rowwise() += bias.row(0);
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache, Matrix& dgain,
                           Matrix& dbias) {
    const auto n = static_cast<double>(dy.cols());
    dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    dbias.row(0) += dy.colwise().sum();
    Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        double mean_d = dxhat.row(r).sum() / n;
        double mean_dx = (dxhat.row(r).array() * cache.xhat.row(r).array()).sum() / n;
        dx.row(r) = cache.inv_std(r) *
                    (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

struct TransformerModel::Cache {
    std::vector<ActivityId> tokens;
    Matrix x0, q, k, v;
    std::vector<Matrix> attention;  // post-softmax
    std::vector<Matrix> applied;    // after positional masking
    Matrix concat, r1, x1, z, f, r2, x2;
    LayerNormCache ln1, ln2;
    RowVector pooled, probs;
};

TransformerModel::TransformerModel(Vocabulary vocabulary, ModelConfig config)
    : vocabulary_(std::move(vocabulary)), config_(config) {
    config_.validate();
    if (config_.max_len == 0) throw Error(ErrorKind::Usage, "max_len must be resolved before building a model");
    params_ = init_parameters(vocabulary_, config_);
    positional_ = sinusoidal_positions(config_.max_len, config_.d_model);
}

TransformerModel::TransformerModel(Vocabulary vocabulary, ModelConfig config, Parameters parameters)
    : vocabulary_(std::move(vocabulary)), config_(config), params_(std::move(parameters)) {
    config_.validate();
    if (config_.max_len == 0) throw Error(ErrorKind::Usage, "max_len must be positive");
    check_shapes(params_, vocabulary_, config_);
    positional_ = sinusoidal_positions(config_.max_len, config_.d_model);
}

bool TransformerModel::is_frozen(std::size_t tensor_index) const {
    return config_.attention_mode == AttentionMode::FrozenUniform && (tensor_index == kWq || tensor_index == kWk);
}

void TransformerModel::check_prefix(std::span<const ActivityId> prefix) const {
    if (prefix.empty()) throw Error(ErrorKind::Length, "empty prefix");
    if (prefix.size() > config_.max_len) {
        throw Error(ErrorKind::Length, "prefix length " + std::to_string(prefix.size()) + " exceeds max_len " +
                                           std::to_string(config_.max_len));
    }
    for (auto a : prefix) {
        if (a > vocabulary_.pad()) throw Error(ErrorKind::Index, "prefix symbol " + std::to_string(a) + " is not an input symbol");
    }
}

void TransformerModel::run(std::span<const ActivityId> prefix, std::span<const std::size_t> masked, Cache& c) const {
    check_prefix(prefix);
    const auto len = static_cast<Eigen::Index>(prefix.size());
    for (auto pos : masked) {
        if (pos >= prefix.size()) throw Error(ErrorKind::Index, "mask position " + std::to_string(pos) + " out of range");
    }
    const auto& p = params_;
    const auto d = static_cast<Eigen::Index>(config_.d_model);
    const auto dh = static_cast<Eigen::Index>(config_.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    c.tokens.assign(prefix.begin(), prefix.end());
    c.x0.resize(len, d);
    for (Eigen::Index i = 0; i < len; ++i) c.x0.row(i) = p.embedding.row(prefix[static_cast<std::size_t>(i)]) + positional_.row(i);

    c.q = c.x0 * p.wq;
    c.k = c.x0 * p.wk;
    c.v = c.x0 * p.wv;
    c.attention.resize(config_.heads);
    c.applied.resize(config_.heads);
    c.concat.resize(len, d);
    for (std::size_t h = 0; h < config_.heads; ++h) {
        const auto off = static_cast<Eigen::Index>(h) * dh;
        Matrix s = (c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose()) * scale;
        softmax_rows(s);
        c.attention[h] = s;
        for (auto pos : masked) {
            s.row(static_cast<Eigen::Index>(pos)).setZero();
            s.col(static_cast<Eigen::Index>(pos)).setZero();
        }
        c.concat.middleCols(off, dh) = s * c.v.middleCols(off, dh);
        c.applied[h] = std::move(s);
    }
    Matrix mo = c.concat * p.wo;
    mo.rowwise() += p.bo.row(0);
    c.r1 = c.x0 + mo;
    c.x1 = layer_norm(c.r1, p.ln1_gain, p.ln1_bias, c.ln1);
    c.z = c.x1 * p.w1;
    c.z.rowwise() += p.b1.row(0);
    Matrix zr = c.z.cwiseMax(0.0);
    c.f = zr * p.w2;
    c.f.rowwise() += p.b2.row(0);
    c.r2 = c.x1 + c.f;
    c.x2 = layer_norm(c.r2, p.ln2_gain, p.ln2_bias, c.ln2);
    c.pooled = c.x2.colwise().mean();
    RowVector logits = c.pooled * p.w_out + p.b_out.row(0);
    const double mx = logits.maxCoeff();
    c.probs = (logits.array() - mx).exp().matrix();
    c.probs /= c.probs.sum();
}

ForwardResult TransformerModel::forward(std::span<const ActivityId> prefix) const {
    Cache c;
    run(prefix, {}, c);
    ForwardResult r;
    r.prediction.probs.assign(c.probs.data(), c.probs.data() + c.probs.size());
    r.attention.heads = std::move(c.attention);
    return r;
}

PredictionVector TransformerModel::forward_attention_masked(std::span<const ActivityId> prefix,
                                                            std::span<const std::size_t> positions) const {
    Cache c;
    run(prefix, positions, c);
    PredictionVector out;
    out.probs.assign(c.probs.data(), c.probs.data() + c.probs.size());
    return out;
}

double TransformerModel::loss(std::span<const ActivityId> prefix, ActivityId target) const {
    Cache c;
    run(prefix, {}, c);
    return -std::log(c.probs(static_cast<Eigen::Index>(output_index(target))));
}

double TransformerModel::loss_and_gradient(std::span<const ActivityId> prefix, ActivityId target,
                                           Parameters& g) const {
    Cache c;
    run(prefix, {}, c);
    const auto& p = params_;
    const auto len = static_cast<Eigen::Index>(prefix.size());
    const auto dh = static_cast<Eigen::Index>(config_.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto t = static_cast<Eigen::Index>(output_index(target));
    const double loss = -std::log(c.probs(t));

    RowVector dlogits = c.probs;
    dlogits(t) -= 1.0;
    g.w_out += c.pooled.transpose() * dlogits;
    g.b_out.row(0) += dlogits;
    RowVector dpooled = dlogits * p.w_out.transpose();

    Matrix dx2 = dpooled.replicate(len, 1) / static_cast<double>(len);
    Matrix dr2 = layer_norm_backward(dx2, p.ln2_gain, c.ln2, g.ln2_gain, g.ln2_bias);
    Matrix dx1 = dr2;
    const Matrix& df = dr2;
    Matrix zr = c.z.cwiseMax(0.0);
    g.w2 += zr.transpose() * df;
    g.b2.row(0) += df.colwise().sum();
    Matrix dz = (df * p.w2.transpose()).array() * (c.z.array() > 0.0).cast<double>();
    g.w1 += c.x1.transpose() * dz;
    g.b1.row(0) += dz.colwise().sum();
    dx1 += dz * p.w1.transpose();

    Matrix dr1 = layer_norm_backward(dx1, p.ln1_gain, c.ln1, g.ln1_gain, g.ln1_bias);
    Matrix dx0 = dr1;
    const Matrix& dmo = dr1;
    g.wo += c.concat.transpose() * dmo;
    g.bo.row(0) += dmo.colwise().sum();
    Matrix dconcat = dmo * p.wo.transpose();

    const bool frozen = config_.attention_mode == AttentionMode::FrozenUniform;
    Matrix dq = Matrix::Zero(len, c.q.cols());
    Matrix dk = Matrix::Zero(len, c.k.cols());
    Matrix dv(len, c.v.cols());
    for (std::size_t h = 0; h < config_.heads; ++h) {
        const auto off = static_cast<Eigen::Index>(h) * dh;
        const Matrix& a = c.applied[h];
        Matrix dhead = dconcat.middleCols(off, dh);
        dv.middleCols(off, dh) = a.transpose() * dhead;
        if (frozen) continue;
        Matrix da = dhead * c.v.middleCols(off, dh).transpose();
        const Matrix& sm = c.attention[h];
        Eigen::VectorXd row_dot = (da.array() * sm.array()).rowwise().sum();
        Matrix ds = sm.array() * (da.colwise() - row_dot).array();
        ds *= scale;
        dq.middleCols(off, dh) = ds * c.k.middleCols(off, dh);
        dk.middleCols(off, dh) = ds.transpose() * c.q.middleCols(off, dh);
    }
    g.wv += c.x0.transpose() * dv;
    dx0 += dv * p.wv.transpose();
    if (!frozen) {
        g.wq += c.x0.transpose() * dq;
        g.wk += c.x0.transpose() * dk;
        dx0 += dq * p.wq.transpose() + dk * p.wk.transpose();
    }
    for (Eigen::Index i = 0; i < len; ++i) g.embedding.row(c.tokens[static_cast<std::size_t>(i)]) += dx0.row(i);
    return loss;
}

// ---------------------------------------------------------------------------
// Training

TransformerModel train(const EventLog& log, ModelConfig config, TrainReport* report) {
    config.validate();
    if (log.empty()) throw Error(ErrorKind::TrainingData, "training log is empty");
    auto prefixes = extract_prefixes(log, 1);
    if (prefixes.empty()) throw Error(ErrorKind::TrainingData, "no prefixes could be extracted");
    if (config.max_len == 0) config.max_len = log.stats().max_len;

    TransformerModel model(log.vocabulary(), config);
    const ActivityId pad = log.vocabulary().pad();
    std::vector<std::size_t> order(prefixes.size());
    std::iota(order.begin(), order.end(), 0);
    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep = {};
    rep.samples = prefixes.size();

    Parameters grad = model.parameters().zeros_like();
    std::vector<ActivityId> input;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, streams::kShuffle, epoch));
        Rng dropout_rng(derive_seed(config.seed, streams::kPadDropout, epoch));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            for (auto* t : grad.tensors()) t->setZero();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const auto& pf = prefixes[order[b]];
                input = pf.activities;
                if (config.pad_dropout > 0.0) {
                    for (auto& a : input)
                        if (dropout_rng.uniform() < config.pad_dropout) a = pad;
                }
                batch_loss += model.loss_and_gradient(input, pf.target, grad);
            }
            ++rep.steps;
            if (!std::isfinite(batch_loss)) {
                throw Error(ErrorKind::Divergence, "non-finite loss at step " + std::to_string(rep.steps) + " (epoch " +
                                                       std::to_string(epoch + 1) + ")");
            }
            epoch_loss += batch_loss;
            const double lr = config.learning_rate / static_cast<double>(stop - start);
            auto params = model.mutable_parameters().tensors();
            auto grads = grad.tensors();
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (model.is_frozen(i)) continue;
                *params[i] -= lr * *grads[i];
            }
            if (!model.parameters().all_finite()) {
                throw Error(ErrorKind::Divergence, "non-finite parameters after step " + std::to_string(rep.steps));
            }
        }
        rep.epoch_loss.push_back(epoch_loss / static_cast<double>(prefixes.size()));
    }
    return model;
}

GradientCheckResult gradient_check(const TransformerModel& model, const Prefix& prefix, std::size_t samples,
                                   std::uint64_t seed, double step) {
    GradientCheckResult result;
    Parameters grad = model.parameters().zeros_like();
    model.loss_and_gradient(prefix.activities, prefix.target, grad);

    auto grads = grad.tensors();
    double norm2 = 0.0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        norm2 += grads[i]->squaredNorm();
        if (model.is_frozen(i)) result.frozen_gradient_max = std::max(result.frozen_gradient_max, grads[i]->cwiseAbs().maxCoeff());
    }
    result.gradient_norm = std::sqrt(norm2);

    std::vector<std::pair<std::size_t, Eigen::Index>> coords;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (model.is_frozen(i)) continue;
        for (Eigen::Index j = 0; j < grads[i]->size(); ++j) coords.emplace_back(i, j);
    }
    if (samples > 0 && samples < coords.size()) {
        Rng rng(derive_seed(seed, streams::kGradCheck));
        rng.shuffle(coords);
        coords.resize(samples);
    }

    TransformerModel probe = model;
    auto params = probe.mutable_parameters().tensors();
    for (auto [i, j] : coords) {
        double& w = params[i]->data()[j];
        const double saved = w;
        w = saved + step;
        const double up = probe.loss(prefix.activities, prefix.target);
        w = saved - step;
        const double down = probe.loss(prefix.activities, prefix.target);
        w = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = grads[i]->data()[j];
        // Relative error with an absolute floor so that gradients at the
        // level of finite-difference noise do not dominate.
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(numeric - analytic) / denom);
        ++result.checked;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'A', 'T', 'T', 'N', 'X', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw Error(ErrorKind::Parse, "checkpoint truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(v);
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"d_model", c.d_model},
            {"heads", c.heads},
            {"max_len", c.max_len},
            {"ff_dim", c.ff_dim},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"pad_dropout", c.pad_dropout},
            {"seed", c.seed},
            {"attention_mode", to_string(c.attention_mode)}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.ff_dim = j.at("ff_dim").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.pad_dropout = j.at("pad_dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.attention_mode = attention_mode_from_string(j.at("attention_mode").get<std::string>());
    return c;
}
}  // namespace

std::string checkpoint_bytes(const TransformerModel& model) {
    nlohmann::json header;
    header["format"] = "attnxp-checkpoint";
    header["config"] = config_to_json(model.config());
    header["vocabulary"] = model.vocabulary().labels();
    auto tensors = model.parameters().tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        header["tensors"].push_back({{"name", Parameters::names()[i]}, {"rows", tensors[i]->rows()}, {"cols", tensors[i]->cols()}});
    }
    const std::string text = header.dump();
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    for (auto* t : tensors) {
        for (Eigen::Index i = 0; i < t->size(); ++i) {
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(t->data()[i])));
        }
    }
    return out;
}

TransformerModel checkpoint_from_bytes(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorKind::Parse, "not an attnxp checkpoint");
    }
    std::size_t pos = sizeof(kMagic);
    auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) throw Error(ErrorKind::Parse, "unsupported checkpoint version " + std::to_string(version));
    auto header_len = get_le<std::uint64_t>(bytes, pos);
    if (pos + header_len > bytes.size()) throw Error(ErrorKind::Parse, "checkpoint header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("checkpoint header: ") + e.what());
    }
    pos += header_len;

    ModelConfig config;
    std::vector<std::string> labels;
    try {
        config = config_from_json(header.at("config"));
        labels = header.at("vocabulary").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("checkpoint header: ") + e.what());
    }
    Vocabulary vocab(labels);
    Parameters params;
    auto tensors = params.tensors();
    const auto& declared = header.at("tensors");
    if (declared.size() != tensors.size()) throw Error(ErrorKind::Schema, "checkpoint declares the wrong number of tensors");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (declared[i].at("name").get<std::string>() != Parameters::names()[i]) {
            throw Error(ErrorKind::Schema, "checkpoint tensor " + std::to_string(i) + " is not '" + Parameters::names()[i] + "'");
        }
        auto rows = declared[i].at("rows").get<Eigen::Index>();
        auto cols = declared[i].at("cols").get<Eigen::Index>();
        tensors[i]->resize(rows, cols);
        for (Eigen::Index k = 0; k < tensors[i]->size(); ++k) {
            tensors[i]->data()[k] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos)));
        }
    }
    if (pos != bytes.size()) throw Error(ErrorKind::Parse, "trailing bytes after checkpoint data");
    return TransformerModel(std::move(vocab), config, std::move(params));
}

void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    const auto bytes = checkpoint_bytes(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TransformerModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_bytes(ss.str());
}

// ---------------------------------------------------------------------------

ClassificationReport evaluate_predictions(const SequenceModel& model, const std::vector<Prefix>& prefixes) {
    ClassificationReport rep;
    rep.samples = prefixes.size();
    if (prefixes.empty()) return rep;
    std::map<std::size_t, std::size_t> tp, fp, support;
    std::size_t correct = 0;
    for (const auto& pf : prefixes) {
        const auto truth = model.output_index(pf.target);
        const auto pred = model.forward(pf.activities).prediction.argmax();
        ++support[truth];
        if (pred == truth) {
            ++correct;
            ++tp[truth];
        } else {
            ++fp[pred];
        }
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(prefixes.size());
    double weighted = 0.0;
    for (auto [cls, n] : support) {
        const double t = static_cast<double>(tp[cls]);
        const double precision = t + static_cast<double>(fp[cls]) > 0 ? t / (t + static_cast<double>(fp[cls])) : 0.0;
        const double recall = t / static_cast<double>(n);
        const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        weighted += f1 * static_cast<double>(n);
    }
    rep.weighted_f1 = weighted / static_cast<double>(prefixes.size());
    return rep;
}

}  // namespace attnxp
