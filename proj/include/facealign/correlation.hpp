#pragma once

#include <cstdint>
#include <vector>

#include "facealign/common.hpp"
#include "facealign/matrix.hpp"
#include "facealign/vocab.hpp"

namespace facealign {

/// The correlation prior chain built from a label matrix:
/// counts M -> conditional probabilities P -> thresholded C -> reweighted
/// adjacency C-hat. All intermediates are kept for inspection and export.
struct CorrelationMaps {
    std::vector<std::uint64_t> counts;       // K x K row-major, m_ij
    std::vector<std::uint64_t> occurrences;  // n_i
    Matrix cond_prob;                        // P
    Matrix sparse;                           // C, entries 0/1
    Matrix adjacency;                        // C-hat, row-stochastic
    double tau = 0.0;
    double omega = 0.0;
    std::size_t k = 0;

    std::uint64_t count_at(std::size_t i, std::size_t j) const { return counts[i * k + j]; }
};

/// m_ij = #samples with both attributes positive; n_i = #samples with i positive.
inline void count_cooccurrence(const LabelMatrix& labels, std::vector<std::uint64_t>& counts,
                               std::vector<std::uint64_t>& occurrences) {
    const std::size_t k = labels.n_attrs;
    const std::size_t n = labels.n_samples();
    counts.assign(k * k, 0);
    occurrences.assign(k, 0);
    for (std::size_t s = 0; s < n; ++s) {
        const std::uint8_t* row = labels.labels.data() + s * k;
        for (std::size_t i = 0; i < k; ++i) {
            if (!row[i]) continue;
            ++occurrences[i];
            for (std::size_t j = 0; j < k; ++j)
                if (row[j]) ++counts[i * k + j];
        }
    }
}

/// p_ij = m_ij / n_i; rows with n_i = 0 are all-zero.
inline Matrix conditional_probabilities(const std::vector<std::uint64_t>& counts,
                                        const std::vector<std::uint64_t>& occurrences) {
    const std::size_t k = occurrences.size();
    Matrix p(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        if (occurrences[i] == 0) continue;
        const double inv = 1.0 / static_cast<double>(occurrences[i]);
        for (std::size_t j = 0; j < k; ++j)
            p(i, j) = static_cast<double>(counts[i * k + j]) * inv;
    }
    return p;
}

/// c_ij = 1 iff p_ij >= tau. The diagonal is computed like any entry but
/// the reweighting step overwrites it.
inline Matrix threshold_sparsify(const Matrix& cond_prob, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must be in [0, 1]");
    Matrix c(cond_prob.rows(), cond_prob.cols());
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < c.cols(); ++j)
            c(i, j) = cond_prob(i, j) >= tau ? 1.0 : 0.0;
    return c;
}

/// Row-stochastic reweighting: diagonal gets 1 - omega, each retained
/// off-diagonal edge gets omega / (row neighbor count). A row with no
/// neighbors collapses to identity propagation (diagonal 1).
inline Matrix reweight(const Matrix& sparse, double omega) {
    if (!(omega >= 0.0 && omega <= 1.0)) throw ValidationError("omega must be in [0, 1]");
    const std::size_t k = sparse.rows();
    Matrix a(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        double neighbors = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != i && sparse(i, j) != 0.0) neighbors += 1.0;
        if (neighbors == 0.0) {
            a(i, i) = 1.0;
            continue;
        }
        a(i, i) = 1.0 - omega;
        const double w = omega / neighbors;
        for (std::size_t j = 0; j < k; ++j)
            if (j != i && sparse(i, j) != 0.0) a(i, j) = w;
    }
    return a;
}

/// Full chain over a label matrix.
inline CorrelationMaps build_correlation(const LabelMatrix& labels, double tau, double omega) {
    CorrelationMaps maps;
    maps.k = labels.n_attrs;
    maps.tau = tau;
    maps.omega = omega;
    count_cooccurrence(labels, maps.counts, maps.occurrences);
    maps.cond_prob = conditional_probabilities(maps.counts, maps.occurrences);
    maps.sparse = threshold_sparsify(maps.cond_prob, tau);
    maps.adjacency = reweight(maps.sparse, omega);
    return maps;
}

}  // namespace facealign
