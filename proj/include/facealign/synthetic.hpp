#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facealign/common.hpp"
#include "facealign/logic.hpp"
#include "facealign/matrix.hpp"
#include "facealign/rng.hpp"
#include "facealign/vocab.hpp"

namespace facealign {

/// One planted conditional dependency: when attribute `given` is positive,
/// attribute `target` is redrawn as Bernoulli(prob).
struct PlantedConditional {
    std::size_t given = 0;
    std::size_t target = 0;
    double prob = 0.0;
};

struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    AttributeVocabulary vocabulary;
    std::vector<PlantedConditional> planted_conditionals;
    RuleSet rules;
    std::size_t embed_dim_visual = 32;
    std::size_t embed_dim_seg = 16;
    double noise_std = 0.1;
    double base_rate = 0.35;  // marginal positive rate before planting

    void validate() const {
        if (n_samples == 0) throw ValidationError("n_samples must be positive");
        if (vocabulary.size() == 0) throw ValidationError("vocabulary is empty");
        if (noise_std < 0.0) throw ValidationError("noise_std must be nonnegative");
        for (const auto& pc : planted_conditionals) {
            if (pc.prob < 0.0 || pc.prob > 1.0)
                throw ValidationError("planted probability out of [0, 1]");
            if (pc.given >= vocabulary.size() || pc.target >= vocabulary.size())
                throw ValidationError("planted conditional index out of range");
            if (pc.given == pc.target)
                throw ValidationError("planted conditional must relate two distinct attributes");
        }
    }
};

struct SyntheticData {
    LabelMatrix labels;
    EmbeddingSet visual;
    EmbeddingSet seg;
};

namespace detail {

constexpr std::size_t kMaxRejectionAttempts = 1000;

inline bool satisfies_rules(const RuleSet& rules, const std::uint8_t* row) {
    for (const Rule& r : rules.rules)
        if (rule_violated(r, row)) return false;
    return true;
}

}  // namespace detail

/// Seeded generator: labels from independent Bernoulli draws with planted
/// conditionals applied on top, rejection-sampled until every rule holds;
/// embeddings are fixed random linear maps of the label vector plus
/// Gaussian noise.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t k = spec.vocabulary.size();
    const std::size_t n = spec.n_samples;

    // Label -> embedding maps drawn once per seed, before the labels, so the
    // mapping is a stable function of (seed, k, dims).
    Matrix map_visual(k, spec.embed_dim_visual);
    for (double& v : map_visual.data()) v = rng.normal();
    Matrix map_seg(k, spec.embed_dim_seg);
    for (double& v : map_seg.data()) v = rng.normal();

    SyntheticData out;
    out.labels.n_attrs = k;
    out.labels.labels.resize(n * k);
    out.labels.sample_ids.resize(n);

    std::vector<std::uint8_t> row(k);
    for (std::size_t s = 0; s < n; ++s) {
        bool accepted = false;
        for (std::size_t attempt = 0; attempt < detail::kMaxRejectionAttempts; ++attempt) {
            for (std::size_t j = 0; j < k; ++j) row[j] = rng.bernoulli(spec.base_rate) ? 1 : 0;
            for (const auto& pc : spec.planted_conditionals)
                if (row[pc.given]) row[pc.target] = rng.bernoulli(pc.prob) ? 1 : 0;
            if (detail::satisfies_rules(spec.rules, row.data())) {
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw GenerationError("no rule-consistent label assignment found for sample " +
                                  std::to_string(s) + " after " +
                                  std::to_string(detail::kMaxRejectionAttempts) + " attempts");
        out.labels.sample_ids[s] = "sample_" + std::to_string(s);
        for (std::size_t j = 0; j < k; ++j) out.labels.at(s, j) = row[j];
    }

    auto project = [&](const Matrix& map, std::size_t dim) {
        Matrix e(n, dim);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t d = 0; d < dim; ++d) {
                double v = 0.0;
                for (std::size_t j = 0; j < k; ++j)
                    if (out.labels.at(s, j)) v += map(j, d);
                e(s, d) = v + rng.normal(0.0, spec.noise_std);
            }
        return e;
    };
    out.visual.vectors = project(map_visual, spec.embed_dim_visual);
    out.seg.vectors = project(map_seg, spec.embed_dim_seg);
    return out;
}

}  // namespace facealign
