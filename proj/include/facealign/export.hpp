#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "facealign/correlation.hpp"
#include "facealign/logic.hpp"
#include "facealign/metrics.hpp"

namespace facealign {

using ordered_json = nlohmann::ordered_json;

inline ordered_json matrix_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline ordered_json correlation_json(const CorrelationMaps& maps) {
    ordered_json j;
    ordered_json counts = ordered_json::array();
    for (std::size_t i = 0; i < maps.k; ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t c = 0; c < maps.k; ++c) row.push_back(maps.count_at(i, c));
        counts.push_back(std::move(row));
    }
    j["counts"] = std::move(counts);
    j["occurrences"] = maps.occurrences;
    j["cond_prob"] = matrix_json(maps.cond_prob);
    j["sparse"] = matrix_json(maps.sparse);
    j["adjacency"] = matrix_json(maps.adjacency);
    j["tau"] = maps.tau;
    j["omega"] = maps.omega;
    return j;
}

inline ordered_json violation_report_json(const ViolationReport& rep) {
    ordered_json j;
    j["total_rate"] = rep.total_rate;
    ordered_json per_rule = ordered_json::array();
    for (std::size_t r = 0; r < rep.per_rule_counts.size(); ++r)
        per_rule.push_back({{"rule_index", r}, {"count", rep.per_rule_counts[r]}});
    j["per_rule"] = std::move(per_rule);
    ordered_json per_sample = ordered_json::array();
    for (std::size_t i = 0; i < rep.per_sample.size(); ++i) {
        if (rep.per_sample[i].empty()) continue;
        per_sample.push_back({{"sample_index", i}, {"rule_indices", rep.per_sample[i]}});
    }
    j["per_sample"] = std::move(per_sample);
    return j;
}

inline ordered_json metrics_report_json(const MetricsReport& rep) {
    ordered_json j;
    j["accuracy"] = rep.accuracy;
    j["recall"] = rep.recall;
    j["precision"] = rep.precision;
    j["f1"] = rep.f1;
    j["per_attribute_accuracy"] = rep.per_attribute_accuracy;
    j["threshold"] = rep.threshold;
    j["averaging"] = {{"accuracy", "attribute-mean"},
                      {"recall", "sample-mean"},
                      {"precision", "sample-mean"},
                      {"f1", "sample-mean"}};
    return j;
}

inline void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace facealign
