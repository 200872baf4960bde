#pragma once

// Test-only oracles, kept independent of the library's implementation path:
// brute-force correlation chain, finite-difference gradients, and a
// per-sample confusion-matrix metrics oracle.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "facealign/matrix.hpp"
#include "facealign/vocab.hpp"

namespace oracle {

using facealign::LabelMatrix;
using facealign::Matrix;

struct CorrelationChain {
    std::vector<std::uint64_t> counts;
    std::vector<std::uint64_t> occurrences;
    Matrix cond_prob;
    Matrix sparse;
    Matrix adjacency;
};

// O(N * K^2) pair counting, written straight from the definitions.
inline CorrelationChain correlation_chain(const LabelMatrix& labels, double tau, double omega) {
    const std::size_t k = labels.n_attrs;
    const std::size_t n = labels.n_samples();
    CorrelationChain out;
    out.counts.assign(k * k, 0);
    out.occurrences.assign(k, 0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t s = 0; s < n; ++s)
                if (labels.at(s, i) && labels.at(s, j)) ++out.counts[i * k + j];
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t s = 0; s < n; ++s)
            if (labels.at(s, i)) ++out.occurrences[i];

    out.cond_prob = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            out.cond_prob(i, j) = out.occurrences[i] == 0
                                      ? 0.0
                                      : static_cast<double>(out.counts[i * k + j]) /
                                            static_cast<double>(out.occurrences[i]);

    out.sparse = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) out.sparse(i, j) = out.cond_prob(i, j) >= tau ? 1.0 : 0.0;

    out.adjacency = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t deg = 0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != i && out.sparse(i, j) == 1.0) ++deg;
        if (deg == 0) {
            out.adjacency(i, i) = 1.0;
        } else {
            out.adjacency(i, i) = 1.0 - omega;
            for (std::size_t j = 0; j < k; ++j)
                if (j != i && out.sparse(i, j) == 1.0)
                    out.adjacency(i, j) = omega / static_cast<double>(deg) * out.sparse(i, j);
        }
    }
    return out;
}

// Central finite difference of a scalar function at x, one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Max relative error between analytic and numeric gradients over a flat
// parameter vector; `loss_at` evaluates the loss with params[i] set to v.
inline double max_rel_error(std::vector<double>& params,
                            const std::vector<double>& analytic,
                            const std::function<double()>& loss,
                            double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss();
        params[i] = saved - h;
        const double down = loss();
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

struct SampleMetrics {
    double accuracy_mean = 0.0;  // attribute-mean accuracy
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    std::vector<double> per_attr_acc;
};

// Confusion-matrix metrics computed per sample, then averaged; degenerate
// samples (no true, no predicted positives) score 1.0 everywhere.
inline SampleMetrics metrics(const std::vector<std::vector<int>>& truth,
                             const std::vector<std::vector<int>>& pred) {
    const std::size_t n = truth.size();
    const std::size_t k = n ? truth[0].size() : 0;
    SampleMetrics out;
    out.per_attr_acc.assign(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        int tp = 0, fp = 0, fn = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (pred[i][j] == truth[i][j]) out.per_attr_acc[j] += 1.0;
            if (pred[i][j] == 1 && truth[i][j] == 1) ++tp;
            if (pred[i][j] == 1 && truth[i][j] == 0) ++fp;
            if (pred[i][j] == 0 && truth[i][j] == 1) ++fn;
        }
        double r, p, f;
        if (tp + fp + fn == 0) {
            r = p = f = 1.0;
        } else {
            r = tp + fn > 0 ? double(tp) / (tp + fn) : 1.0;
            p = tp + fp > 0 ? double(tp) / (tp + fp) : 1.0;
            f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        }
        out.recall += r;
        out.precision += p;
        out.f1 += f;
    }
    if (n) {
        out.recall /= n;
        out.precision /= n;
        out.f1 /= n;
        for (auto& a : out.per_attr_acc) a /= n;
    }
    for (double a : out.per_attr_acc) out.accuracy_mean += a;
    if (k) out.accuracy_mean /= k;
    return out;
}

}  // namespace oracle
