#pragma once

#include <cstdint>
#include <vector>

#include "facealign/common.hpp"
#include "facealign/matrix.hpp"
#include "facealign/rng.hpp"

namespace facealign {

/// Weight stack for an L-layer graph convolution over attribute embeddings.
/// layer_dims has L+1 entries; the first and last must match so the
/// residual output (input + last layer) is well-shaped.
struct GcnParams {
    std::vector<Matrix> weights;       // weights[l] is d_l x d_{l+1}
    std::vector<std::size_t> layer_dims;
    double activation_slope = 0.2;     // leaky slope of the nonlinearity

    std::size_t n_layers() const { return weights.size(); }

    void validate() const {
        if (weights.empty()) throw ValidationError("gcn needs at least one layer");
        if (layer_dims.size() != weights.size() + 1)
            throw ValidationError("gcn layer_dims must have one more entry than weights");
        if (layer_dims.empty() || layer_dims.front() != layer_dims.back())
            throw ValidationError("gcn input and output dims must match for the residual");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != layer_dims[l] || weights[l].cols() != layer_dims[l + 1])
                throw ValidationError("gcn weight " + std::to_string(l) + " shape mismatch");
            if (!weights[l].all_finite())
                throw ValidationError("gcn weight " + std::to_string(l) + " has non-finite entries");
        }
    }

    static GcnParams make(const std::vector<std::size_t>& dims, double slope, Rng& rng,
                          double init_std) {
        GcnParams p;
        p.layer_dims = dims;
        p.activation_slope = slope;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            Matrix w(dims[l], dims[l + 1]);
            for (double& v : w.data()) v = rng.normal(0.0, init_std);
            p.weights.push_back(std::move(w));
        }
        p.validate();
        return p;
    }
};

/// Activations saved by the forward pass for the backward pass.
struct GcnCache {
    std::vector<Matrix> layer_inputs;     // T^0 .. T^{L-1} (post-activation)
    std::vector<Matrix> propagated;       // C-hat * T^{l-1}, per layer
    std::vector<Matrix> pre_activations;  // C-hat * T^{l-1} * W^{l-1}, per layer
    const Matrix* adjacency = nullptr;
    double slope = 0.0;
};

namespace detail {

inline double leaky(double x, double slope) { return x >= 0.0 ? x : slope * x; }
// subgradient at the kink uses the positive-side slope
inline double leaky_grad(double x, double slope) { return x >= 0.0 ? 1.0 : slope; }

}  // namespace detail

/// T^l = rho(C-hat * T^{l-1} * W^{l-1}), residual output T^0 + T^L.
inline std::pair<Matrix, GcnCache> gcn_forward(const Matrix& adjacency, const GcnParams& params,
                                               const Matrix& input) {
    params.validate();
    if (adjacency.rows() != adjacency.cols() || adjacency.rows() != input.rows())
        throw ValidationError("adjacency shape does not match embedding rows");
    if (input.cols() != params.layer_dims.front())
        throw ValidationError("embedding dim does not match gcn input dim");

    GcnCache cache;
    cache.adjacency = &adjacency;
    cache.slope = params.activation_slope;

    Matrix current = input;
    for (std::size_t l = 0; l < params.n_layers(); ++l) {
        cache.layer_inputs.push_back(current);
        Matrix propagated = matmul(adjacency, current);
        Matrix pre = matmul(propagated, params.weights[l]);
        cache.propagated.push_back(std::move(propagated));
        Matrix activated(pre.rows(), pre.cols());
        for (std::size_t i = 0; i < pre.data().size(); ++i)
            activated.data()[i] = detail::leaky(pre.data()[i], params.activation_slope);
        cache.pre_activations.push_back(std::move(pre));
        current = std::move(activated);
    }
    Matrix refined = input + current;
    return {std::move(refined), std::move(cache)};
}

struct GcnGrads {
    std::vector<Matrix> weights;  // one per layer
    Matrix input;                 // gradient at T^0, including the residual path
};

/// Analytic gradients of a scalar loss given d(loss)/d(refined output).
inline GcnGrads gcn_backward(const GcnParams& params, const GcnCache& cache,
                             const Matrix& upstream_grad) {
    const std::size_t layers = params.n_layers();
    if (cache.layer_inputs.size() != layers || cache.pre_activations.size() != layers)
        throw ValidationError("gcn cache does not match params");
    if (layers > 0 && !upstream_grad.same_shape(cache.pre_activations.back()))
        throw ValidationError("upstream gradient shape mismatch");

    GcnGrads grads;
    grads.weights.resize(layers);

    Matrix d_current = upstream_grad;  // gradient at T^L
    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& pre = cache.pre_activations[l];
        Matrix d_pre(pre.rows(), pre.cols());
        for (std::size_t i = 0; i < pre.data().size(); ++i)
            d_pre.data()[i] = d_current.data()[i] * detail::leaky_grad(pre.data()[i], cache.slope);
        grads.weights[l] = matmul(cache.propagated[l].transposed(), d_pre);
        // d(loss)/d(T^{l-1}) = C-hat^T * (d_pre * W^T)
        d_current = matmul(cache.adjacency->transposed(), matmul(d_pre, params.weights[l].transposed()));
    }
    grads.input = std::move(d_current);
    grads.input += upstream_grad;  // residual path
    return grads;
}

}  // namespace facealign
