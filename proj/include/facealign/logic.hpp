#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "facealign/common.hpp"
#include "facealign/hash.hpp"
#include "facealign/matrix.hpp"
#include "facealign/vocab.hpp"

namespace facealign {

/// First-order rule over vocabulary indices. Excludes: antecedent positive
/// forbids every consequent. AtLeastOne: some consequent must be positive.
struct Rule {
    enum class Kind { Excludes, AtLeastOne };

    Kind kind;
    std::size_t antecedent = 0;  // meaningful only for Excludes
    std::vector<std::size_t> consequents;

    bool operator==(const Rule& o) const {
        return kind == o.kind && antecedent == o.antecedent && consequents == o.consequents;
    }
};

struct RuleSet {
    std::vector<Rule> rules;
    std::string source_hash;  // digest of the rule file content

    std::size_t size() const { return rules.size(); }
    bool empty() const { return rules.empty(); }
};

/// Per-attribute predicted probabilities, N x K.
struct Predictions {
    Matrix probs;

    std::size_t n_samples() const { return probs.rows(); }
    std::size_t n_attrs() const { return probs.cols(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = trim(s.substr(start, comma - start));
        if (!tok.empty()) out.push_back(tok);
        start = comma + 1;
    }
    return out;
}

inline std::size_t resolve(const AttributeVocabulary& vocab, const std::string& name,
                           std::size_t line_no) {
    auto idx = vocab.find(name);
    if (!idx)
        throw ParseError("line " + std::to_string(line_no) + ": unknown attribute '" + name + "'");
    return *idx;
}

inline std::vector<std::size_t> dedup_sorted_order(std::vector<std::size_t> v) {
    // dedup but keep first-seen order
    std::vector<std::size_t> out;
    std::set<std::size_t> seen;
    for (auto i : v)
        if (seen.insert(i).second) out.push_back(i);
    return out;
}

}  // namespace detail

/// Parse the rule file format:
///   EXCLUDES: <name> -> <name>[, <name>...]
///   AT_LEAST_ONE: <name>[, <name>...]
/// '#' begins a comment; blank lines ignored.
inline RuleSet parse_rules_text(const std::string& content, const AttributeVocabulary& vocab) {
    RuleSet rs;
    rs.source_hash = digest_hex(content);

    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;

        Rule rule;
        if (line.rfind("EXCLUDES:", 0) == 0) {
            const std::string body = line.substr(9);
            const auto arrow = body.find("->");
            if (arrow == std::string::npos)
                throw ParseError("line " + std::to_string(line_no) + ": EXCLUDES rule missing '->'");
            rule.kind = Rule::Kind::Excludes;
            rule.antecedent = detail::resolve(vocab, detail::trim(body.substr(0, arrow)), line_no);
            for (const auto& name : detail::split_list(body.substr(arrow + 2)))
                rule.consequents.push_back(detail::resolve(vocab, name, line_no));
            if (rule.consequents.empty())
                throw ParseError("line " + std::to_string(line_no) + ": EXCLUDES rule has no consequents");
        } else if (line.rfind("AT_LEAST_ONE:", 0) == 0) {
            rule.kind = Rule::Kind::AtLeastOne;
            for (const auto& name : detail::split_list(line.substr(13)))
                rule.consequents.push_back(detail::resolve(vocab, name, line_no));
            if (rule.consequents.empty())
                throw ParseError("line " + std::to_string(line_no) + ": AT_LEAST_ONE rule has no members");
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unrecognized rule form");
        }

        rule.consequents = detail::dedup_sorted_order(std::move(rule.consequents));
        if (rule.kind == Rule::Kind::Excludes &&
            std::find(rule.consequents.begin(), rule.consequents.end(), rule.antecedent) !=
                rule.consequents.end())
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": antecedent appears among its own consequents");
        if (std::find(rs.rules.begin(), rs.rules.end(), rule) == rs.rules.end())
            rs.rules.push_back(std::move(rule));
    }
    return rs;
}

inline RuleSet parse_rules(const std::string& path, const AttributeVocabulary& vocab) {
    return parse_rules_text(read_file_bytes(path), vocab);
}

/// Probability the rule is violated for one sample, treating per-attribute
/// marginals as independent. Excludes: at least one forbidden attribute
/// fires. AtLeastOne: no member fires.
inline double violation_probability(const Rule& rule, const std::vector<double>& sample_probs) {
    double none = 1.0;
    for (auto c : rule.consequents) none *= 1.0 - sample_probs[c];
    return rule.kind == Rule::Kind::Excludes ? 1.0 - none : none;
}

/// Expected logical loss over all samples and rules, with its analytic
/// gradient with respect to the predicted probabilities.
///
/// Per-sample, per-rule term:
///   Excludes:   P(antecedent) * (1 - prod(1 - P(consequent)))
///   AtLeastOne: prod(1 - P(member))
/// Loss is the term sum averaged over samples.
inline std::pair<double, Matrix> logical_loss(const RuleSet& rules, const Predictions& preds) {
    const std::size_t n = preds.n_samples();
    const std::size_t k = preds.n_attrs();
    Matrix grad(n, k);
    double total = 0.0;
    if (n == 0 || rules.empty()) return {0.0, std::move(grad)};

    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> p(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) p[j] = preds.probs(i, j);
        for (const Rule& rule : rules.rules) {
            const std::size_t m = rule.consequents.size();
            double prod_none = 1.0;
            for (auto c : rule.consequents) prod_none *= 1.0 - p[c];

            if (rule.kind == Rule::Kind::Excludes) {
                const double pa = p[rule.antecedent];
                const double v = 1.0 - prod_none;
                total += pa * v;
                grad(i, rule.antecedent) += inv_n * v;
                // d v / d p_c = prod over the other consequents of (1 - p)
                for (std::size_t ci = 0; ci < m; ++ci) {
                    double partial = 1.0;
                    for (std::size_t cj = 0; cj < m; ++cj)
                        if (cj != ci) partial *= 1.0 - p[rule.consequents[cj]];
                    grad(i, rule.consequents[ci]) += inv_n * pa * partial;
                }
            } else {
                total += prod_none;
                for (std::size_t ci = 0; ci < m; ++ci) {
                    double partial = 1.0;
                    for (std::size_t cj = 0; cj < m; ++cj)
                        if (cj != ci) partial *= 1.0 - p[rule.consequents[cj]];
                    grad(i, rule.consequents[ci]) -= inv_n * partial;
                }
            }
        }
    }
    return {total * inv_n, std::move(grad)};
}

/// Rule violations over hard (binarized) predictions.
struct ViolationReport {
    double total_rate = 0.0;  // violating (sample, rule) pairs / (N * M)
    std::vector<std::size_t> per_rule_counts;              // indexed by rule
    std::vector<std::vector<std::size_t>> per_sample;      // violating rule indices per sample
};

inline bool rule_violated(const Rule& rule, const std::uint8_t* row) {
    if (rule.kind == Rule::Kind::Excludes) {
        if (!row[rule.antecedent]) return false;
        for (auto c : rule.consequents)
            if (row[c]) return true;
        return false;
    }
    for (auto c : rule.consequents)
        if (row[c]) return false;
    return true;
}

inline ViolationReport check_rules(const RuleSet& rules, const LabelMatrix& hard_preds) {
    ViolationReport rep;
    const std::size_t n = hard_preds.n_samples();
    const std::size_t m = rules.size();
    rep.per_rule_counts.assign(m, 0);
    rep.per_sample.assign(n, {});
    std::size_t violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* row = hard_preds.labels.data() + i * hard_preds.n_attrs;
        for (std::size_t r = 0; r < m; ++r) {
            if (rule_violated(rules.rules[r], row)) {
                ++rep.per_rule_counts[r];
                rep.per_sample[i].push_back(r);
                ++violations;
            }
        }
    }
    rep.total_rate = (n == 0 || m == 0)
                         ? 0.0
                         : static_cast<double>(violations) / static_cast<double>(n * m);
    return rep;
}

/// Binarize probabilities at a threshold for linting.
inline LabelMatrix binarize(const Predictions& preds, double threshold = 0.5) {
    LabelMatrix lm;
    lm.n_attrs = preds.n_attrs();
    lm.labels.resize(preds.n_samples() * preds.n_attrs());
    lm.sample_ids.resize(preds.n_samples());
    for (std::size_t i = 0; i < preds.n_samples(); ++i) {
        lm.sample_ids[i] = std::to_string(i);
        for (std::size_t j = 0; j < preds.n_attrs(); ++j)
            lm.at(i, j) = preds.probs(i, j) >= threshold ? 1 : 0;
    }
    return lm;
}

}  // namespace facealign
