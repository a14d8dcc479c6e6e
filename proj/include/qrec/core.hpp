#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qrec {

// Invalid or inconsistent input data (files, ids, dimensions). CLI exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing, degenerate, or unusable model state. CLI exit code 3.
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The four SweSAT question domains. Model boundaries never cross subjects.
enum class Subject { xyz, kva, nog, dtk };

inline constexpr std::array<Subject, 4> kAllSubjects = {Subject::xyz, Subject::kva,
                                                        Subject::nog, Subject::dtk};

inline std::string_view subject_name(Subject s) {
    switch (s) {
        case Subject::xyz: return "XYZ";
        case Subject::kva: return "KVA";
        case Subject::nog: return "NOG";
        case Subject::dtk: return "DTK";
    }
    return "?";
}

inline Subject parse_subject(std::string_view s) {
    for (Subject candidate : kAllSubjects) {
        if (s == subject_name(candidate)) return candidate;
    }
    throw DataError("unknown subject \"" + std::string(s) + "\" (expected XYZ, KVA, NOG or DTK)");
}

// A question embedding: dense vector of finite doubles. Dimension is the length.
using Embedding = std::vector<double>;

inline bool all_finite(const Embedding& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct QuestionRecord {
    std::string id;
    Subject subject = Subject::xyz;
    std::string text;
    Embedding embedding;
};

// Strips leading/trailing whitespace and collapses internal whitespace runs to
// single spaces. Any ASCII whitespace counts.
inline std::string clean_text(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

// Element-wise arithmetic mean of token vectors.
inline Embedding mean_pool(const std::vector<Embedding>& token_vectors) {
    if (token_vectors.empty()) throw DataError("mean_pool: no tokens");
    const std::size_t dim = token_vectors.front().size();
    Embedding out(dim, 0.0);
    for (const Embedding& v : token_vectors) {
        if (v.size() != dim) {
            throw DataError("mean_pool: token dimension mismatch (" + std::to_string(v.size()) +
                            " vs " + std::to_string(dim) + ")");
        }
        for (std::size_t d = 0; d < dim; ++d) out[d] += v[d];
    }
    const double inv = 1.0 / static_cast<double>(token_vectors.size());
    for (double& x : out) x *= inv;
    return out;
}

inline double dot(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_distance(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean_distance(const Embedding& a, const Embedding& b) {
    return std::sqrt(squared_distance(a, b));
}

// Immutable set of questions sharing one embedding dimension. Validated on
// construction; safe for concurrent reads afterwards.
class Corpus {
public:
    Corpus() = default;

    explicit Corpus(std::vector<QuestionRecord> records) : records_(std::move(records)) {
        if (!records_.empty()) dim_ = records_.front().embedding.size();
        by_id_.reserve(records_.size());
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const QuestionRecord& r = records_[i];
            if (r.id.empty()) throw DataError("corpus: record " + std::to_string(i) + " has empty id");
            if (r.embedding.size() != dim_) {
                throw DataError("corpus: embedding dimension mismatch for id \"" + r.id + "\" (" +
                                std::to_string(r.embedding.size()) + " vs " + std::to_string(dim_) + ")");
            }
            if (dim_ == 0) throw DataError("corpus: empty embedding for id \"" + r.id + "\"");
            if (!all_finite(r.embedding)) {
                throw DataError("corpus: non-finite embedding value for id \"" + r.id + "\"");
            }
            if (!by_id_.emplace(r.id, i).second) {
                throw DataError("corpus: duplicate id \"" + r.id + "\"");
            }
            by_subject_[static_cast<std::size_t>(r.subject)].push_back(i);
        }
    }

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    std::size_t dim() const { return dim_; }

    const std::vector<QuestionRecord>& records() const { return records_; }
    const QuestionRecord& at(std::size_t i) const { return records_.at(i); }

    const QuestionRecord* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &records_[it->second];
    }

    const QuestionRecord& require(const std::string& id) const {
        const QuestionRecord* r = find(id);
        if (!r) throw DataError("unknown question id \"" + id + "\"");
        return *r;
    }

    const std::vector<std::size_t>& subject_indices(Subject s) const {
        return by_subject_[static_cast<std::size_t>(s)];
    }

    std::vector<Subject> subjects_present() const {
        std::vector<Subject> out;
        for (Subject s : kAllSubjects) {
            if (!subject_indices(s).empty()) out.push_back(s);
        }
        return out;
    }

private:
    std::vector<QuestionRecord> records_;
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::array<std::vector<std::size_t>, 4> by_subject_;
};

// Result shape shared by every recommendation strategy. Score semantics depend
// on the strategy: cosine similarity (descending), Euclidean distance or KL
// divergence (ascending). Ranks are 1..N.
struct Recommendation {
    std::string question_id;
    double score = 0.0;
    std::size_t rank = 0;

    bool operator==(const Recommendation&) const = default;
};

namespace detail {

struct ScoredId {
    double score;
    const std::string* id;
};

// Orders candidates by score (ascending or descending) with ties broken by
// ascending id, truncates to n, and assigns 1-based ranks.
inline std::vector<Recommendation> rank_candidates(std::vector<ScoredId> candidates,
                                                   std::size_t n, bool ascending) {
    std::sort(candidates.begin(), candidates.end(),
              [ascending](const ScoredId& a, const ScoredId& b) {
                  if (a.score != b.score) return ascending ? a.score < b.score : a.score > b.score;
                  return *a.id < *b.id;
              });
    if (candidates.size() > n) candidates.resize(n);
    std::vector<Recommendation> out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out.push_back({*candidates[i].id, candidates[i].score, i + 1});
    }
    return out;
}

}  // namespace detail

}  // namespace qrec
