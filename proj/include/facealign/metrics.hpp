#pragma once

#include <cstdint>
#include <vector>

#include "facealign/common.hpp"
#include "facealign/logic.hpp"
#include "facealign/vocab.hpp"

namespace facealign {

/// Accuracy is averaged per attribute; recall/precision/F1 are computed per
/// sample over its K predictions and averaged over samples.
struct MetricsReport {
    double accuracy = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    std::vector<double> per_attribute_accuracy;
    double threshold = 0.5;
};

inline MetricsReport evaluate(const Predictions& preds, const LabelMatrix& labels,
                              double threshold = 0.5) {
    const std::size_t n = preds.n_samples();
    const std::size_t k = preds.n_attrs();
    if (labels.n_samples() != n || labels.n_attrs != k)
        throw ValidationError("prediction and label shapes differ");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0, 1)");

    MetricsReport rep;
    rep.threshold = threshold;
    rep.per_attribute_accuracy.assign(k, 0.0);

    std::vector<std::size_t> correct_per_attr(k, 0);
    double sum_recall = 0.0, sum_precision = 0.0, sum_f1 = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const bool pred = preds.probs(i, j) >= threshold;
            const bool truth = labels.at(i, j) != 0;
            if (pred == truth) ++correct_per_attr[j];
            if (pred && truth) ++tp;
            else if (pred) ++fp;
            else if (truth) ++fn;
        }
        double recall, precision, f1;
        if (tp + fp + fn == 0) {
            // no true and no predicted positives: perfect agreement
            recall = precision = f1 = 1.0;
        } else {
            recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
            precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
            f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        }
        sum_recall += recall;
        sum_precision += precision;
        sum_f1 += f1;
    }

    double acc_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        rep.per_attribute_accuracy[j] =
            n > 0 ? static_cast<double>(correct_per_attr[j]) / static_cast<double>(n) : 0.0;
        acc_sum += rep.per_attribute_accuracy[j];
    }
    rep.accuracy = k > 0 ? acc_sum / static_cast<double>(k) : 0.0;
    if (n > 0) {
        rep.recall = sum_recall / static_cast<double>(n);
        rep.precision = sum_precision / static_cast<double>(n);
        rep.f1 = sum_f1 / static_cast<double>(n);
    }
    return rep;
}

}  // namespace facealign
