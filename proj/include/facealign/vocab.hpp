#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "facealign/common.hpp"
#include "facealign/matrix.hpp"

namespace facealign {

/// Ordered attribute names; the shared index space for every matrix in the
/// pipeline. Indices are assigned by position and stable for a run.
class AttributeVocabulary {
  public:
    AttributeVocabulary() = default;

    explicit AttributeVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) throw ValidationError("vocabulary must contain at least one attribute");
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i].empty()) throw ValidationError("empty attribute name at index " + std::to_string(i));
            auto [it, inserted] = index_.emplace(names_[i], i);
            if (!inserted) throw ValidationError("duplicate attribute name: " + names_[i]);
        }
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t i) const { return names_.at(i); }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

  private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// N x K binary ground-truth labels plus sample ids.
struct LabelMatrix {
    std::vector<std::uint8_t> labels;  // row-major N x K, entries 0/1
    std::vector<std::string> sample_ids;
    std::size_t n_attrs = 0;

    std::size_t n_samples() const { return sample_ids.size(); }
    std::uint8_t at(std::size_t sample, std::size_t attr) const {
        return labels[sample * n_attrs + attr];
    }
    std::uint8_t& at(std::size_t sample, std::size_t attr) {
        return labels[sample * n_attrs + attr];
    }
};

/// N x d real embedding rows, one per sample.
struct EmbeddingSet {
    Matrix vectors;  // N x d

    std::size_t n_samples() const { return vectors.rows(); }
    std::size_t dim() const { return vectors.cols(); }
};

enum class LabelFormat { Signed, Binary };  // signed: +1/-1, binary: 1/0

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

}  // namespace detail

/// Parse a CelebA-style attribute file: header of names, then rows of
/// sample id + K values. Signed input maps -1 -> 0.
inline std::pair<AttributeVocabulary, LabelMatrix> load_labels(const std::string& path,
                                                               LabelFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open label file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("label file is empty: " + path);
    const auto names = detail::split_ws(line);
    if (names.empty()) throw ParseError("label header has no attribute names: " + path);
    AttributeVocabulary vocab(names);
    const std::size_t k = vocab.size();

    LabelMatrix lm;
    lm.n_attrs = k;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != k + 1)
            throw ParseError("line " + std::to_string(line_no) + ": expected id plus " +
                             std::to_string(k) + " values, got " + std::to_string(toks.size() - 1));
        lm.sample_ids.push_back(toks[0]);
        for (std::size_t j = 0; j < k; ++j) {
            const std::string& t = toks[j + 1];
            std::uint8_t v;
            if (format == LabelFormat::Signed) {
                if (t == "1")
                    v = 1;
                else if (t == "-1")
                    v = 0;
                else
                    throw ParseError("line " + std::to_string(line_no) + ": expected 1 or -1, got '" + t + "'");
            } else {
                if (t == "1")
                    v = 1;
                else if (t == "0")
                    v = 0;
                else
                    throw ParseError("line " + std::to_string(line_no) + ": expected 0 or 1, got '" + t + "'");
            }
            lm.labels.push_back(v);
        }
    }
    return {std::move(vocab), std::move(lm)};
}

/// Write labels in the normalized binary (0/1) layout that load_labels reads
/// back with LabelFormat::Binary.
inline void write_labels(std::ostream& out, const AttributeVocabulary& vocab, const LabelMatrix& lm) {
    for (std::size_t j = 0; j < vocab.size(); ++j) {
        if (j) out << ' ';
        out << vocab.name(j);
    }
    out << '\n';
    for (std::size_t i = 0; i < lm.n_samples(); ++i) {
        out << lm.sample_ids[i];
        for (std::size_t j = 0; j < lm.n_attrs; ++j) out << ' ' << static_cast<int>(lm.at(i, j));
        out << '\n';
    }
}

inline void write_labels_file(const std::string& path, const AttributeVocabulary& vocab,
                              const LabelMatrix& lm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write label file: " + path);
    write_labels(out, vocab, lm);
}

/// Parse whitespace/comma-separated numeric rows of uniform width.
inline EmbeddingSet load_embeddings(const std::string& path, std::size_t expected_rows) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embedding file: " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line)
            if (c == ',') c = ' ';
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        std::vector<double> row;
        row.reserve(toks.size());
        for (const auto& t : toks) {
            double v;
            try {
                std::size_t pos = 0;
                v = std::stod(t, &pos);
                if (pos != t.size()) throw std::invalid_argument(t);
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + ": non-numeric token '" + t + "'");
            }
            if (!std::isfinite(v))
                throw ValidationError("line " + std::to_string(line_no) + ": non-finite value '" + t + "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("line " + std::to_string(line_no) + ": ragged row width " +
                             std::to_string(row.size()) + ", expected " +
                             std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.size() != expected_rows)
        throw ValidationError("embedding file " + path + " has " + std::to_string(rows.size()) +
                              " rows, expected " + std::to_string(expected_rows));

    EmbeddingSet es;
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    es.vectors = Matrix(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) es.vectors(i, j) = rows[i][j];
    return es;
}

/// Parse a prediction file: same header/id layout as a label file but the
/// values are probabilities in [0, 1].
inline std::pair<AttributeVocabulary, Matrix> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open prediction file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("prediction file is empty: " + path);
    AttributeVocabulary vocab(detail::split_ws(line));
    const std::size_t k = vocab.size();

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != k + 1)
            throw ParseError("line " + std::to_string(line_no) + ": expected id plus " +
                             std::to_string(k) + " values");
        std::vector<double> row;
        for (std::size_t j = 0; j < k; ++j) {
            double v;
            try {
                v = std::stod(toks[j + 1]);
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + ": non-numeric token '" +
                                 toks[j + 1] + "'");
            }
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("line " + std::to_string(line_no) +
                                      ": probability out of [0, 1]: " + toks[j + 1]);
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    Matrix probs(rows.size(), k);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < k; ++j) probs(i, j) = rows[i][j];
    return {std::move(vocab), std::move(probs)};
}

inline void write_embeddings_file(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write embedding file: " + path);
    out.precision(17);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << m(i, j);
        }
        out << '\n';
    }
}

}  // namespace facealign
