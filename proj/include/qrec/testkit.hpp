#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qrec/analytics.hpp"
#include "qrec/core.hpp"
#include "qrec/rng.hpp"
#include "qrec/strategy.hpp"

namespace qrec {

// Deterministic synthetic data. Every generator is a pure function of its
// spec and seed, so fixtures double as ground-truth oracles.

// --- labeled Gaussian blob corpora -------------------------------------------

struct BlobSpec {
    Subject subject = Subject::xyz;
    std::size_t n_blobs = 1;
    std::size_t points_per_blob = 10;
    std::size_t dim = 8;
    double center_separation = 10.0;  // minimum pairwise center distance
    double blob_std = 1.0;            // isotropic per-coordinate std
    std::uint64_t seed = 0;
};

struct BlobCorpus {
    Corpus corpus;
    std::map<std::string, std::size_t> labels;  // question id -> blob index
    std::vector<Embedding> centers;
};

// Centers are placed at seeded random directions with rejection until all
// pairwise distances reach center_separation; points are isotropic Gaussian
// around their center.
inline BlobCorpus generate_blob_corpus(const BlobSpec& spec) {
    if (spec.n_blobs < 1 || spec.points_per_blob < 1 || spec.dim < 1) {
        throw DataError("generate_blob_corpus: blobs, points and dim must be >= 1");
    }
    if (!(spec.center_separation > 0.0) || !(spec.blob_std > 0.0)) {
        throw DataError("generate_blob_corpus: separation and std must be > 0");
    }
    Rng rng(spec.seed);

    BlobCorpus out;
    const double place_radius = spec.center_separation * static_cast<double>(spec.n_blobs);
    std::size_t attempts_left = 1000 * spec.n_blobs;
    while (out.centers.size() < spec.n_blobs) {
        if (attempts_left-- == 0) {
            throw DataError("generate_blob_corpus: could not place separated centers");
        }
        Embedding direction(spec.dim);
        double norm2 = 0.0;
        for (double& x : direction) {
            x = rng.normal();
            norm2 += x * x;
        }
        if (norm2 <= 0.0) continue;
        const double scale = place_radius * rng.uniform() / std::sqrt(norm2);
        for (double& x : direction) x *= scale;
        bool ok = true;
        for (const Embedding& c : out.centers) {
            if (euclidean_distance(c, direction) < spec.center_separation) {
                ok = false;
                break;
            }
        }
        if (ok) out.centers.push_back(std::move(direction));
    }

    std::vector<QuestionRecord> records;
    records.reserve(spec.n_blobs * spec.points_per_blob);
    for (std::size_t b = 0; b < spec.n_blobs; ++b) {
        for (std::size_t i = 0; i < spec.points_per_blob; ++i) {
            QuestionRecord r;
            r.id = std::string(subject_name(spec.subject)) + "-b" + std::to_string(b) + "-" +
                   std::to_string(i);
            r.subject = spec.subject;
            r.text = "synthetic question " + r.id;
            r.embedding.resize(spec.dim);
            for (std::size_t d = 0; d < spec.dim; ++d) {
                r.embedding[d] = out.centers[b][d] + spec.blob_std * rng.normal();
            }
            out.labels.emplace(r.id, b);
            records.push_back(std::move(r));
        }
    }
    out.corpus = Corpus(std::move(records));
    return out;
}

inline Corpus merge_corpora(const std::vector<Corpus>& parts) {
    std::vector<QuestionRecord> all;
    for (const Corpus& c : parts) {
        for (const QuestionRecord& r : c.records()) all.push_back(r);
    }
    return Corpus(std::move(all));
}

// --- scripted session logs -----------------------------------------------------

// One arm's recipe. Exactly one correctness mode must be set:
//   patterns        explicit per-session correctness sequences, cycled;
//   correctness_rate exact overall rate, built by construction;
//   streak_counts   exact wrong-answer streak multiset (length -> count).
struct ArmScript {
    Strategy arm = Strategy::cosine;
    std::size_t sessions = 0;  // session count for patterns / rate modes
    std::vector<std::vector<bool>> patterns;
    std::optional<double> correctness_rate;
    std::size_t questions_per_session = 5;
    std::map<std::size_t, std::size_t> streak_counts;
    std::vector<double> response_times_seconds;  // cycled over questions; default 30 s
    std::vector<double> session_minutes;         // cycled durations; empty -> seeded 5..25
    std::vector<int> ratings;                    // cycled; 0 means unrated; empty -> unrated
    std::set<Subject> question_types = {Subject::xyz};
};

struct SessionScript {
    std::vector<ArmScript> arms;
    std::uint64_t seed = 0;
    double start_epoch = 1735689600.0;  // 2025-01-01T00:00:00Z
};

namespace detail {

inline std::vector<std::vector<bool>> arm_patterns(const ArmScript& arm) {
    const int modes = (!arm.patterns.empty() ? 1 : 0) + (arm.correctness_rate ? 1 : 0) +
                      (!arm.streak_counts.empty() ? 1 : 0);
    if (modes != 1) {
        throw DataError("arm script for " + std::string(strategy_name(arm.arm)) +
                        ": exactly one of patterns, correctness_rate, streak_counts required");
    }

    std::vector<std::vector<bool>> out;
    if (!arm.patterns.empty()) {
        if (arm.sessions == 0) throw DataError("arm script: sessions must be >= 1");
        for (std::size_t i = 0; i < arm.sessions; ++i) {
            out.push_back(arm.patterns[i % arm.patterns.size()]);
        }
        return out;
    }

    if (arm.correctness_rate) {
        const double rate = *arm.correctness_rate;
        if (rate < 0.0 || rate > 1.0) throw DataError("arm script: rate must be in [0, 1]");
        if (arm.sessions == 0 || arm.questions_per_session == 0) {
            throw DataError("arm script: sessions and questions_per_session must be >= 1");
        }
        const double total_q = static_cast<double>(arm.sessions * arm.questions_per_session);
        const double want = rate * total_q;
        const double rounded = std::round(want);
        if (std::abs(want - rounded) > 1e-9) {
            throw DataError("arm script: rate " + std::to_string(rate) + " is unreachable with " +
                            std::to_string(arm.sessions) + " x " +
                            std::to_string(arm.questions_per_session) + " questions");
        }
        std::size_t remaining = static_cast<std::size_t>(rounded);
        for (std::size_t i = 0; i < arm.sessions; ++i) {
            const std::size_t sessions_left = arm.sessions - i;
            // Even split: ceil of the remaining average, so the total lands exactly.
            const std::size_t correct =
                (remaining + sessions_left - 1) / sessions_left;
            std::vector<bool> pattern(arm.questions_per_session, false);
            for (std::size_t q = 0; q < correct; ++q) pattern[q] = true;
            remaining -= correct;
            out.push_back(std::move(pattern));
        }
        return out;
    }

    // Streak mode: pack "len wrong answers then one correct" units into
    // sessions of at most 40 questions. Every streak is terminated by a
    // correct answer, so the multiset is exact under either trailing policy.
    constexpr std::size_t kMaxQuestions = 40;
    std::vector<bool> current;
    for (const auto& [len, count] : arm.streak_counts) {
        if (len == 0) throw DataError("arm script: streak length 0 is meaningless");
        for (std::size_t c = 0; c < count; ++c) {
            if (!current.empty() && current.size() + len + 1 > kMaxQuestions) {
                out.push_back(std::move(current));
                current.clear();
            }
            current.insert(current.end(), len, false);
            current.push_back(true);
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    if (out.empty()) throw DataError("arm script: streak_counts produced no sessions");
    return out;
}

}  // namespace detail

// Builds a session log whose recomputed metrics hit the scripted targets by
// construction. Ids, timestamps and ratings are deterministic in the seed.
inline SessionLog generate_session_log(const SessionScript& script) {
    SessionLog log;
    Rng rng(script.seed);
    std::size_t session_index = 0;
    for (const ArmScript& arm : script.arms) {
        const std::vector<std::vector<bool>> patterns = detail::arm_patterns(arm);
        std::size_t question_counter = 0;
        for (std::size_t i = 0; i < patterns.size(); ++i) {
            QuizSession s;
            s.session_id = std::string(strategy_name(arm.arm)) + "-" + std::to_string(i);
            if (session_index % 5 != 0) {
                s.user_id = "user-" + std::to_string(session_index % 7);
            }
            s.algorithm = arm.arm;
            s.question_types = arm.question_types;
            s.started_at = script.start_epoch + static_cast<double>(session_index) * 7200.0;
            const double minutes = !arm.session_minutes.empty()
                                       ? arm.session_minutes[i % arm.session_minutes.size()]
                                       : rng.uniform(5.0, 25.0);
            s.ended_at = s.started_at + minutes * 60.0;
            if (!arm.ratings.empty()) {
                const int rating = arm.ratings[i % arm.ratings.size()];
                if (rating != 0) s.rating = rating;
            }

            double cursor = s.started_at;
            for (std::size_t q = 0; q < patterns[i].size(); ++q) {
                SessionQuestion question;
                question.session_id = s.session_id;
                question.question_id = s.session_id + "-q" + std::to_string(q + 1);
                question.sequence_order = q + 1;
                question.presented_at = cursor;
                const double rt =
                    !arm.response_times_seconds.empty()
                        ? arm.response_times_seconds[question_counter %
                                                     arm.response_times_seconds.size()]
                        : 30.0;
                question.answered_at = cursor + rt;
                question.correct = patterns[i][q];
                cursor = *question.answered_at + 1.0;
                ++question_counter;
                log.questions.push_back(std::move(question));
            }
            log.sessions.push_back(std::move(s));
            ++session_index;
        }
    }
    return log;
}

// --- fixture builders targeting published statistics ----------------------------

// A sorted sample of size n with exact min, max, mean and linear-interpolation
// p25/p50. Values besides the anchors live in two constant blocks solved to
// hit the mean; throws when no such sample exists.
inline std::vector<double> build_sample_with_stats(std::size_t n, double mean, double p25,
                                                   double p50, double vmin, double vmax) {
    if (n < 8) throw DataError("build_sample_with_stats: need n >= 8");
    if (!(vmin <= p25 && p25 <= p50 && p50 <= vmax)) {
        throw DataError("build_sample_with_stats: anchors must be ordered");
    }
    const double r25 = static_cast<double>(n - 1) * 0.25;
    const double r50 = static_cast<double>(n - 1) * 0.50;
    const std::size_t i25_hi = static_cast<std::size_t>(std::ceil(r25));
    const std::size_t i50_lo = static_cast<std::size_t>(std::floor(r50));
    const std::size_t i50_hi = static_cast<std::size_t>(std::ceil(r50));
    if (i25_hi < 1 || i50_lo <= i25_hi || i50_hi >= n - 2) {
        throw DataError("build_sample_with_stats: n too small for distinct anchor blocks");
    }

    std::vector<double> v(n, 0.0);
    v[0] = vmin;
    v[n - 1] = vmax;
    for (std::size_t i = 1; i <= i25_hi; ++i) v[i] = p25;
    for (std::size_t i = i50_lo; i <= i50_hi; ++i) v[i] = p50;

    const std::size_t f1_begin = i25_hi + 1, f1_end = i50_lo;        // [p25, p50]
    const std::size_t f2_begin = i50_hi + 1, f2_end = n - 1;         // [p50, vmax]
    const double n1 = static_cast<double>(f1_end - f1_begin);
    const double n2 = static_cast<double>(f2_end - f2_begin);

    double fixed = vmin + vmax + static_cast<double>(i25_hi) * p25 +
                   static_cast<double>(i50_hi - i50_lo + 1) * p50;
    const double need = mean * static_cast<double>(n) - fixed;

    double c1 = p25;
    double c2 = n2 > 0 ? (need - n1 * c1) / n2 : p50;
    if (c2 < p50 || c2 > vmax) {
        c2 = std::clamp(c2, p50, vmax);
        c1 = n1 > 0 ? (need - n2 * c2) / n1 : p25;
        if (c1 < p25 - 1e-9 || c1 > p50 + 1e-9) {
            throw DataError("build_sample_with_stats: requested mean is unreachable");
        }
        c1 = std::clamp(c1, p25, p50);
    }
    for (std::size_t i = f1_begin; i < f1_end; ++i) v[i] = c1;
    for (std::size_t i = f2_begin; i < f2_end; ++i) v[i] = c2;
    return v;
}

// A sample of n response times with exact median, mean and linear-interpolation
// p95. (n-1)*0.5 and (n-1)*0.95 must be integers; the default 21 satisfies both.
inline std::vector<double> build_response_time_sample(double median, double mean, double p95,
                                                      std::size_t n = 21) {
    if (!(0.0 < median && median <= p95)) {
        throw DataError("build_response_time_sample: need 0 < median <= p95");
    }
    const double r50 = static_cast<double>(n - 1) * 0.50;
    const double r95 = static_cast<double>(n - 1) * 0.95;
    if (r50 != std::floor(r50) || r95 != std::floor(r95)) {
        throw DataError("build_response_time_sample: (n-1)*0.5 and (n-1)*0.95 must be integral");
    }
    const std::size_t i50 = static_cast<std::size_t>(r50);
    const std::size_t i95 = static_cast<std::size_t>(r95);
    if (i50 == 0 || i95 <= i50 + 1 || i95 != n - 2) {
        throw DataError("build_response_time_sample: unsupported n");
    }

    const double n_low = static_cast<double>(i50);            // block below the median
    const double n_mid = static_cast<double>(i95 - i50 - 1);  // block between median and p95
    const double need = mean * static_cast<double>(n) - median - p95;

    double c_low = median / 2.0;
    double c_mid = median;
    double tail = need - n_low * c_low - n_mid * c_mid;
    if (tail < p95) {
        tail = p95;
        c_mid = (need - n_low * c_low - tail) / n_mid;
        if (c_mid < median) {
            c_mid = median;
            c_low = (need - n_mid * c_mid - tail) / n_low;
            if (!(c_low > 0.0) || c_low > median + 1e-9) {
                throw DataError("build_response_time_sample: requested mean is unreachable");
            }
            c_low = std::min(c_low, median);
        }
    }

    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < i50; ++i) v[i] = c_low;
    v[i50] = median;
    for (std::size_t i = i50 + 1; i < i95; ++i) v[i] = c_mid;
    v[i95] = p95;
    v[n - 1] = tail;
    return v;
}

// Integer streak counts reproducing a percentage row within tol. The counts
// are rounded at the requested total and validated against their own sum, so
// rows that only sum to ~100 because of published rounding still work when a
// consistent integer solution exists.
inline std::map<std::size_t, std::size_t> streak_counts_from_percentages(
    const std::map<std::size_t, double>& percentages, std::size_t total = 10000,
    double tol = 0.01) {
    std::map<std::size_t, std::size_t> counts;
    double actual_total = 0.0;
    for (const auto& [len, pct] : percentages) {
        if (pct < 0.0) throw DataError("streak_counts_from_percentages: negative percentage");
        const double c = std::round(pct * static_cast<double>(total) / 100.0);
        if (c > 0.0) counts[len] = static_cast<std::size_t>(c);
        actual_total += c;
    }
    if (actual_total <= 0.0) throw DataError("streak_counts_from_percentages: empty distribution");
    for (const auto& [len, pct] : percentages) {
        const double c = counts.count(len) ? static_cast<double>(counts.at(len)) : 0.0;
        if (std::abs(100.0 * c / actual_total - pct) > tol) {
            throw DataError("streak_counts_from_percentages: percentages unreachable within " +
                            std::to_string(tol) + " at length " + std::to_string(len));
        }
    }
    return counts;
}

}  // namespace qrec
