#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "facealign/common.hpp"
#include "facealign/correlation.hpp"
#include "facealign/gcn.hpp"
#include "facealign/logic.hpp"
#include "facealign/matrix.hpp"
#include "facealign/rng.hpp"
#include "facealign/vocab.hpp"

namespace facealign {

/// Trainable parameter set: fusion projection of the concatenated
/// visual/segmentation embedding, GCN weight stack, initial attribute text
/// embeddings, and a per-attribute bias.
struct ModelParams {
    Matrix fusion;              // (d_v + d_s) x d
    GcnParams gcn;
    Matrix text0;               // K x d
    std::vector<double> bias;   // K

    std::size_t n_attrs() const { return text0.rows(); }
    std::size_t text_dim() const { return text0.cols(); }

    void validate() const {
        gcn.validate();
        if (fusion.cols() != text_dim())
            throw ValidationError("fusion output dim does not match text dim");
        if (text0.cols() != gcn.layer_dims.front())
            throw ValidationError("text dim does not match gcn input dim");
        if (bias.size() != n_attrs()) throw ValidationError("bias length does not match K");
        if (!fusion.all_finite() || !text0.all_finite())
            throw ValidationError("non-finite model parameter");
        for (double b : bias)
            if (!std::isfinite(b)) throw ValidationError("non-finite bias entry");
    }
};

struct ModelDims {
    std::size_t n_attrs = 0;
    std::size_t d_visual = 0;
    std::size_t d_seg = 0;       // 0 disables the segmentation channel
    std::size_t d_text = 0;
    std::size_t gcn_layers = 2;
};

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    double lambda_logic = 1.0;
    bool train_text0 = false;
    bool use_bias = true;
    double prob_clamp_eps = 1e-7;
    double activation_slope = 0.2;

    void validate() const {
        if (learning_rate < 0.0) throw ValidationError("learning_rate must be nonnegative");
        if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must be in [0, 1)");
        if (epochs == 0) throw ValidationError("epochs must be positive");
        if (batch_size == 0) throw ValidationError("batch_size must be positive");
        if (lambda_logic < 0.0) throw ValidationError("lambda_logic must be nonnegative");
        if (prob_clamp_eps <= 0.0) throw ValidationError("prob_clamp_eps must be positive");
    }
};

inline ModelParams init_params(const ModelDims& dims, const TrainConfig& config) {
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    ModelParams p;
    const std::size_t d_in = dims.d_visual + dims.d_seg;
    const double text_std = 1.0 / std::sqrt(static_cast<double>(dims.d_text));
    p.fusion = Matrix(d_in, dims.d_text);
    for (double& v : p.fusion.data()) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
    std::vector<std::size_t> layer_dims(dims.gcn_layers + 1, dims.d_text);
    p.gcn = GcnParams::make(layer_dims, config.activation_slope, rng, text_std);
    p.text0 = Matrix(dims.n_attrs, dims.d_text);
    for (double& v : p.text0.data()) v = rng.normal(0.0, text_std);
    p.bias.assign(dims.n_attrs, 0.0);
    return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ForwardCache {
    Matrix inputs;        // N x (d_v + d_s), concatenated
    Matrix fused;         // N x d
    Matrix refined;       // K x d
    GcnCache gcn_cache;
    Matrix raw_probs;     // sigmoid before clamping
};

/// Concatenate visual and segmentation rows; seg may have zero columns.
inline Matrix concat_embeddings(const Matrix& visual, const Matrix& seg) {
    if (seg.cols() > 0 && seg.rows() != visual.rows())
        throw ValidationError("visual and segmentation row counts differ");
    Matrix x(visual.rows(), visual.cols() + seg.cols());
    for (std::size_t i = 0; i < visual.rows(); ++i) {
        for (std::size_t j = 0; j < visual.cols(); ++j) x(i, j) = visual(i, j);
        for (std::size_t j = 0; j < seg.cols(); ++j) x(i, visual.cols() + j) = seg(i, j);
    }
    return x;
}

/// Score each sample against each refined attribute embedding and squash:
/// P(y_ij) = sigmoid(fused_i . refined_j + bias_j), clamped away from 0/1.
inline std::pair<Predictions, ForwardCache> predict_cached(const ModelParams& params,
                                                           const Matrix& adjacency,
                                                           const Matrix& visual, const Matrix& seg,
                                                           double clamp_eps = 1e-7) {
    params.validate();
    ForwardCache cache;
    cache.inputs = concat_embeddings(visual, seg);
    if (cache.inputs.cols() != params.fusion.rows())
        throw ValidationError("embedding dims do not match fusion input");
    cache.fused = matmul(cache.inputs, params.fusion);
    auto [refined, gcn_cache] = gcn_forward(adjacency, params.gcn, params.text0);
    cache.refined = std::move(refined);
    cache.gcn_cache = std::move(gcn_cache);

    const std::size_t n = cache.fused.rows();
    const std::size_t k = params.n_attrs();
    Predictions preds;
    preds.probs = Matrix(n, k);
    cache.raw_probs = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double s = params.bias[j];
            for (std::size_t d = 0; d < cache.fused.cols(); ++d)
                s += cache.fused(i, d) * cache.refined(j, d);
            const double p = sigmoid(s);
            cache.raw_probs(i, j) = p;
            preds.probs(i, j) = std::min(1.0 - clamp_eps, std::max(clamp_eps, p));
        }
    return {std::move(preds), std::move(cache)};
}

inline Predictions predict(const ModelParams& params, const Matrix& adjacency, const Matrix& visual,
                           const Matrix& seg, double clamp_eps = 1e-7) {
    return predict_cached(params, adjacency, visual, seg, clamp_eps).first;
}

/// Summed over attributes, averaged over samples only.
inline std::pair<double, Matrix> bce_loss(const Predictions& preds, const LabelMatrix& labels) {
    const std::size_t n = preds.n_samples();
    const std::size_t k = preds.n_attrs();
    if (labels.n_samples() != n || labels.n_attrs != k)
        throw ValidationError("prediction and label shapes differ");
    Matrix grad(n, k);
    double loss = 0.0;
    const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double p = preds.probs(i, j);
            if (labels.at(i, j)) {
                loss -= std::log(p);
                grad(i, j) = -inv_n / p;
            } else {
                loss -= std::log(1.0 - p);
                grad(i, j) = inv_n / (1.0 - p);
            }
        }
    return {loss * inv_n, std::move(grad)};
}

struct ModelGrads {
    Matrix fusion;
    std::vector<Matrix> gcn_weights;
    Matrix text0;
    std::vector<double> bias;
};

struct LossBreakdown {
    double bce = 0.0;
    double logic = 0.0;
    double total = 0.0;
};

/// Combined objective: BCE plus lambda-weighted logical loss, with analytic
/// gradients for every trainable parameter.
inline std::pair<LossBreakdown, ModelGrads> total_loss(const ModelParams& params,
                                                       const Matrix& adjacency,
                                                       const RuleSet& rules, const Matrix& visual,
                                                       const Matrix& seg, const LabelMatrix& labels,
                                                       const TrainConfig& config) {
    auto [preds, cache] = predict_cached(params, adjacency, visual, seg, config.prob_clamp_eps);
    auto [bce, bce_grad] = bce_loss(preds, labels);
    auto [logic, logic_grad] = logical_loss(rules, preds);

    LossBreakdown breakdown;
    breakdown.bce = bce;
    breakdown.logic = logic;
    breakdown.total = bce + config.lambda_logic * logic;

    const std::size_t n = preds.n_samples();
    const std::size_t k = preds.n_attrs();

    // d(loss)/d(score); clamped entries contribute no gradient
    Matrix d_score(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double raw = cache.raw_probs(i, j);
            if (raw != preds.probs(i, j)) continue;
            const double d_prob = bce_grad(i, j) + config.lambda_logic * logic_grad(i, j);
            d_score(i, j) = d_prob * raw * (1.0 - raw);
        }

    ModelGrads grads;
    grads.bias.assign(k, 0.0);
    if (config.use_bias)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) grads.bias[j] += d_score(i, j);

    Matrix d_fused = matmul(d_score, cache.refined);             // N x d
    grads.fusion = matmul(cache.inputs.transposed(), d_fused);   // (d_v+d_s) x d
    Matrix d_refined = matmul(d_score.transposed(), cache.fused);  // K x d
    GcnGrads gg = gcn_backward(params.gcn, cache.gcn_cache, d_refined);
    grads.gcn_weights = std::move(gg.weights);
    grads.text0 = config.train_text0 ? std::move(gg.input) : Matrix(k, params.text_dim());
    return {breakdown, std::move(grads)};
}

struct EpochTrace {
    std::size_t epoch = 0;
    double bce = 0.0;
    double logic = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochTrace> trace;
};

/// Mini-batch SGD with momentum; deterministic for a fixed seed. The loss
/// trace records full-dataset losses at the end of each epoch.
inline TrainResult train(const Matrix& visual, const Matrix& seg, const LabelMatrix& labels,
                         const RuleSet& rules, const CorrelationMaps& correlation,
                         const ModelDims& dims, const TrainConfig& config) {
    config.validate();
    const Matrix& adjacency = correlation.adjacency;
    TrainResult result;
    result.params = init_params(dims, config);

    // momentum state
    Matrix v_fusion(result.params.fusion.rows(), result.params.fusion.cols());
    Matrix v_text0(result.params.text0.rows(), result.params.text0.cols());
    std::vector<double> v_bias(result.params.bias.size(), 0.0);
    std::vector<Matrix> v_gcn;
    for (const auto& w : result.params.gcn.weights) v_gcn.emplace_back(w.rows(), w.cols());

    const std::size_t n = labels.n_samples();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);

    auto gather = [&](const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                      Matrix& bv, Matrix& bs, LabelMatrix& bl) {
        const std::size_t m = end - begin;
        bv = Matrix(m, visual.cols());
        bs = Matrix(m, seg.cols());
        bl.n_attrs = labels.n_attrs;
        bl.labels.resize(m * labels.n_attrs);
        bl.sample_ids.assign(m, "");
        for (std::size_t r = 0; r < m; ++r) {
            const std::size_t s = idx[begin + r];
            for (std::size_t c = 0; c < visual.cols(); ++c) bv(r, c) = visual(s, c);
            for (std::size_t c = 0; c < seg.cols(); ++c) bs(r, c) = seg(s, c);
            for (std::size_t c = 0; c < labels.n_attrs; ++c) bl.at(r, c) = labels.at(s, c);
        }
    };

    auto sgd_step = [&](Matrix& param, Matrix& velocity, const Matrix& grad) {
        for (std::size_t i = 0; i < param.data().size(); ++i) {
            velocity.data()[i] = config.momentum * velocity.data()[i] - config.learning_rate * grad.data()[i];
            param.data()[i] += velocity.data()[i];
        }
    };

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            Matrix bv, bs;
            LabelMatrix bl;
            gather(order, begin, end, bv, bs, bl);
            auto [breakdown, grads] =
                total_loss(result.params, adjacency, rules, bv, bs, bl, config);
            if (!std::isfinite(breakdown.total))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(step));
            sgd_step(result.params.fusion, v_fusion, grads.fusion);
            for (std::size_t l = 0; l < v_gcn.size(); ++l)
                sgd_step(result.params.gcn.weights[l], v_gcn[l], grads.gcn_weights[l]);
            if (config.train_text0) sgd_step(result.params.text0, v_text0, grads.text0);
            if (config.use_bias)
                for (std::size_t j = 0; j < v_bias.size(); ++j) {
                    v_bias[j] = config.momentum * v_bias[j] - config.learning_rate * grads.bias[j];
                    result.params.bias[j] += v_bias[j];
                }
            ++step;
        }
        auto preds = predict(result.params, adjacency, visual, seg, config.prob_clamp_eps);
        const double bce = bce_loss(preds, labels).first;
        const double logic = logical_loss(rules, preds).first;
        result.trace.push_back(
            {epoch, bce, logic, bce + config.lambda_logic * logic});
    }
    return result;
}

// -- checkpoint serialization ------------------------------------------------

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Matrix& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_array()) throw ValidationError("checkpoint matrix is not an array");
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j[0].size() : 0;
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols) throw ValidationError("checkpoint matrix is ragged");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

}  // namespace detail

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ModelParams params;
    double tau = 0.0;
    double omega = 0.0;
    Matrix adjacency;
};

inline void save_model(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::ordered_json j;
    j["version"] = kCheckpointVersion;
    j["dims"] = {{"n_attrs", ckpt.params.n_attrs()},
                 {"d_in", ckpt.params.fusion.rows()},
                 {"d_text", ckpt.params.text_dim()}};
    j["fusion"] = detail::matrix_to_json(ckpt.params.fusion);
    j["bias"] = ckpt.params.bias;
    j["gcn"] = {{"layer_dims", ckpt.params.gcn.layer_dims},
                {"slope", ckpt.params.gcn.activation_slope}};
    nlohmann::ordered_json weights = nlohmann::ordered_json::array();
    for (const auto& w : ckpt.params.gcn.weights) weights.push_back(detail::matrix_to_json(w));
    j["gcn"]["weights"] = std::move(weights);
    j["text0"] = detail::matrix_to_json(ckpt.params.text0);
    j["tau"] = ckpt.tau;
    j["omega"] = ckpt.omega;
    j["adjacency"] = detail::matrix_to_json(ckpt.adjacency);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint: " + path);
    out << j.dump(2) << '\n';
}

inline Checkpoint load_model(const std::string& path) {
    nlohmann::ordered_json j;
    try {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open checkpoint: " + path);
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed checkpoint " + path + ": " + e.what());
    }
    try {
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw ValidationError("unsupported checkpoint version");
        Checkpoint ckpt;
        ckpt.params.fusion = detail::matrix_from_json(j.at("fusion"));
        ckpt.params.bias = j.at("bias").get<std::vector<double>>();
        ckpt.params.gcn.layer_dims = j.at("gcn").at("layer_dims").get<std::vector<std::size_t>>();
        ckpt.params.gcn.activation_slope = j.at("gcn").at("slope").get<double>();
        for (const auto& w : j.at("gcn").at("weights"))
            ckpt.params.gcn.weights.push_back(detail::matrix_from_json(w));
        ckpt.params.text0 = detail::matrix_from_json(j.at("text0"));
        ckpt.tau = j.at("tau").get<double>();
        ckpt.omega = j.at("omega").get<double>();
        ckpt.adjacency = detail::matrix_from_json(j.at("adjacency"));
        ckpt.params.validate();
        if (ckpt.adjacency.rows() != ckpt.params.n_attrs() ||
            ckpt.adjacency.cols() != ckpt.params.n_attrs())
            throw ValidationError("checkpoint adjacency shape does not match K");
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid checkpoint " + path + ": " + e.what());
    }
}

}  // namespace facealign
