#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "qrec/core.hpp"

namespace qrec {

// dot(a,b) / (|a| |b|), in [-1, 1]. Zero-norm inputs are rejected.
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) {
        throw DataError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
    }
    double dot_ab = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot_ab += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DataError("cosine_similarity: degenerate embedding (zero norm)");
    return dot_ab / (std::sqrt(na) * std::sqrt(nb));
}

// Exhaustive nearest-neighbor scan by cosine similarity, restricted to the
// query's subject and excluding the query itself. Descending score, ties by
// ascending id. Returns fewer than n when the subject pool is smaller.
inline std::vector<Recommendation> recommend_cosine(const Corpus& corpus,
                                                    const std::string& query_id, std::size_t n) {
    if (n == 0) throw DataError("recommend_cosine: n must be >= 1");
    const QuestionRecord& query = corpus.require(query_id);

    std::vector<detail::ScoredId> scored;
    const auto& pool = corpus.subject_indices(query.subject);
    scored.reserve(pool.size());
    for (std::size_t idx : pool) {
        const QuestionRecord& candidate = corpus.at(idx);
        if (candidate.id == query_id) continue;
        scored.push_back({cosine_similarity(query.embedding, candidate.embedding), &candidate.id});
    }
    return detail::rank_candidates(std::move(scored), n, /*ascending=*/false);
}

}  // namespace qrec
