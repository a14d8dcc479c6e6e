#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrec/core.hpp"
#include "qrec/linalg.hpp"
#include "qrec/rng.hpp"

namespace qrec {

struct GmmConfig {
    std::size_t k = 1;
    double tol = 1e-3;          // on the change in total log-likelihood
    std::size_t max_iter = 100;
    double reg_covar = 1e-6;    // added to covariance diagonals every M-step
    std::uint64_t seed = 0;
};

// Paper-tuned component counts per subject.
struct SubjectComponentCounts {
    std::size_t xyz = 16;
    std::size_t kva = 18;
    std::size_t nog = 15;
    std::size_t dtk = 31;

    std::size_t for_subject(Subject s) const {
        switch (s) {
            case Subject::xyz: return xyz;
            case Subject::kva: return kva;
            case Subject::nog: return nog;
            case Subject::dtk: return dtk;
        }
        return 1;
    }
};

// Fitted mixture over one subject's questions: parameters, convergence state,
// and the posterior membership vector of every training question.
struct GmmModel {
    GmmConfig config;
    Subject subject = Subject::xyz;
    std::size_t dim = 0;
    std::vector<double> weights;      // k mixing proportions, sum to 1
    std::vector<Embedding> means;     // k x dim
    std::vector<Matrix> covariances;  // k full dim x dim, symmetric PD after reg_covar
    bool converged = false;
    double final_log_likelihood = 0.0;
    std::vector<double> log_likelihood_path;  // one entry per E-step, nondecreasing
    std::map<std::string, std::vector<double>> posteriors;  // question id -> k probabilities
};

namespace detail {

struct KMeansResult {
    std::vector<Embedding> centers;
    std::vector<std::size_t> labels;
};

inline std::size_t nearest_center(const std::vector<Embedding>& centers, const Embedding& x) {
    std::size_t best = 0;
    double best_d2 = squared_distance(centers[0], x);
    for (std::size_t j = 1; j < centers.size(); ++j) {
        const double d2 = squared_distance(centers[j], x);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = j;
        }
    }
    return best;
}

// Lloyd's algorithm with k-means++ seeding. Empty clusters are repaired by
// stealing the point farthest from its assigned center, so every cluster ends
// non-empty.
inline KMeansResult kmeans(const std::vector<const Embedding*>& points, std::size_t k, Rng& rng,
                           std::size_t max_iter = 50) {
    const std::size_t n = points.size();
    const std::size_t dim = points[0]->size();

    KMeansResult result;
    result.centers.reserve(k);
    result.centers.push_back(*points[rng.uniform_index(n)]);
    std::vector<double> d2(n);
    while (result.centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = squared_distance(result.centers[0], *points[i]);
            for (std::size_t j = 1; j < result.centers.size(); ++j) {
                best = std::min(best, squared_distance(result.centers[j], *points[i]));
            }
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            // All remaining mass sits on chosen centers; fall back to uniform.
            result.centers.push_back(*points[rng.uniform_index(n)]);
            continue;
        }
        const double target = rng.uniform() * total;
        double cumulative = 0.0;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            cumulative += d2[i];
            if (cumulative >= target) {
                pick = i;
                break;
            }
        }
        result.centers.push_back(*points[pick]);
    }

    result.labels.assign(n, 0);
    auto assign_all = [&]() {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = nearest_center(result.centers, *points[i]);
            if (j != result.labels[i]) {
                result.labels[i] = j;
                changed = true;
            }
        }
        return changed;
    };
    auto repair_empty = [&]() {
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t label : result.labels) ++counts[label];
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            std::size_t farthest = 0;
            double best = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[result.labels[i]] <= 1) continue;
                const double d = squared_distance(result.centers[result.labels[i]], *points[i]);
                if (d > best) {
                    best = d;
                    farthest = i;
                }
            }
            --counts[result.labels[farthest]];
            result.labels[farthest] = j;
            counts[j] = 1;
            result.centers[j] = *points[farthest];
        }
    };

    assign_all();
    repair_empty();
    for (std::size_t it = 0; it < max_iter; ++it) {
        // Recompute centers.
        std::vector<Embedding> sums(k, Embedding(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[result.labels[i]];
            for (std::size_t d = 0; d < dim; ++d) sums[result.labels[i]][d] += (*points[i])[d];
        }
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t d = 0; d < dim; ++d) {
                result.centers[j][d] = sums[j][d] / static_cast<double>(counts[j]);
            }
        }
        const bool changed = assign_all();
        repair_empty();
        if (!changed) break;
    }
    return result;
}

// log N(x | mu, Sigma) given Sigma's Cholesky factor.
inline double log_gaussian(const Embedding& x, const Embedding& mu, const Matrix& chol,
                           double log_det) {
    const std::size_t dim = x.size();
    std::vector<double> diff(dim);
    for (std::size_t d = 0; d < dim; ++d) diff[d] = x[d] - mu[d];
    const std::vector<double> y = forward_substitute(chol, diff);
    double maha2 = 0.0;
    for (double v : y) maha2 += v * v;
    constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
    return -0.5 * (static_cast<double>(dim) * kLog2Pi + log_det + maha2);
}

// One E-step over all points: fills log-sum-exp-normalized responsibilities and
// returns the total log-likelihood.
inline double e_step(const GmmModel& model, const std::vector<const Embedding*>& points,
                     std::vector<std::vector<double>>& resp) {
    const std::size_t n = points.size();
    const std::size_t k = model.config.k;

    std::vector<Matrix> chols(k);
    std::vector<double> log_dets(k), log_weights(k);
    for (std::size_t j = 0; j < k; ++j) {
        if (!(model.weights[j] > 0.0)) {
            throw ModelError("gmm: component " + std::to_string(j) + " has zero weight");
        }
        chols[j] = cholesky_lower(model.covariances[j],
                                  "gmm: covariance of component " + std::to_string(j));
        log_dets[j] = cholesky_log_det(chols[j]);
        log_weights[j] = std::log(model.weights[j]);
    }

    double total = 0.0;
    std::vector<double> logp(k);
    for (std::size_t i = 0; i < n; ++i) {
        double max_logp = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            logp[j] = log_weights[j] +
                      log_gaussian(*points[i], model.means[j], chols[j], log_dets[j]);
            max_logp = std::max(max_logp, logp[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(logp[j] - max_logp);
        const double lse = max_logp + std::log(sum);
        if (!std::isfinite(lse)) {
            std::size_t offender = 0;
            for (std::size_t j = 0; j < k; ++j) {
                if (!std::isfinite(logp[j])) offender = j;
            }
            throw ModelError("gmm: non-finite likelihood at component " + std::to_string(offender));
        }
        for (std::size_t j = 0; j < k; ++j) resp[i][j] = std::exp(logp[j] - lse);
        // Exact renormalization so every posterior sums to 1 up to rounding.
        double rsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) rsum += resp[i][j];
        for (std::size_t j = 0; j < k; ++j) resp[i][j] /= rsum;
        total += lse;
    }
    return total;
}

}  // namespace detail

// Fits a full-covariance Gaussian mixture to the subject slice by EM.
//
// Initialization comes from a seeded k-means run (k-means++ seeding, at most 50
// Lloyd iterations). EM stops when the total log-likelihood changes by less
// than config.tol between iterations or after config.max_iter iterations; the
// converged flag records which. Covariance diagonals get reg_covar added every
// M-step. Posteriors are populated for every training question from the final
// E-step, so they are consistent with the returned parameters.
inline GmmModel fit_gmm(const Corpus& corpus, Subject subject, GmmConfig config) {
    const auto& slice = corpus.subject_indices(subject);
    const std::size_t n = slice.size();
    const std::size_t k = config.k;
    if (k < 1) throw DataError("fit_gmm: k must be >= 1");
    if (!(config.tol > 0.0)) throw DataError("fit_gmm: tol must be > 0");
    if (config.max_iter < 1) throw DataError("fit_gmm: max_iter must be >= 1");
    if (n < k) {
        throw ModelError("fit_gmm: subject " + std::string(subject_name(subject)) + " has " +
                         std::to_string(n) + " questions, fewer than k=" + std::to_string(k));
    }
    const std::size_t dim = corpus.dim();

    std::vector<const Embedding*> points;
    points.reserve(n);
    for (std::size_t idx : slice) points.push_back(&corpus.at(idx).embedding);

    GmmModel model;
    model.config = config;
    model.subject = subject;
    model.dim = dim;
    model.weights.assign(k, 0.0);
    model.means.assign(k, Embedding(dim, 0.0));
    model.covariances.assign(k, Matrix(dim, dim, 0.0));

    // k-means initialization.
    Rng rng(config.seed);
    const detail::KMeansResult init = detail::kmeans(points, k, rng);
    {
        std::vector<std::vector<double>> resp(n, std::vector<double>(k, 0.0));
        for (std::size_t i = 0; i < n; ++i) resp[i][init.labels[i]] = 1.0;
        // Hard-assignment M-step doubles as the parameter initializer.
        for (std::size_t j = 0; j < k; ++j) model.means[j] = init.centers[j];
        std::vector<double> counts(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) ++counts[init.labels[i]];
        for (std::size_t j = 0; j < k; ++j) model.weights[j] = counts[j] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = init.labels[i];
            const Embedding& x = *points[i];
            Matrix& cov = model.covariances[j];
            for (std::size_t a = 0; a < dim; ++a) {
                const double da = x[a] - model.means[j][a];
                for (std::size_t b = 0; b <= a; ++b) {
                    cov(a, b) += da * (x[b] - model.means[j][b]);
                }
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            Matrix& cov = model.covariances[j];
            for (std::size_t a = 0; a < dim; ++a) {
                for (std::size_t b = 0; b <= a; ++b) {
                    cov(a, b) /= counts[j];
                    cov(b, a) = cov(a, b);
                }
                cov(a, a) += config.reg_covar;
            }
        }
    }

    // EM. Each loop entry is one E-step; convergence compares successive
    // E-step log-likelihoods, so a break leaves parameters and likelihood
    // consistent.
    std::vector<std::vector<double>> resp(n, std::vector<double>(k, 0.0));
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        const double ll = detail::e_step(model, points, resp);
        model.log_likelihood_path.push_back(ll);
        if (it > 0 && std::abs(ll - model.log_likelihood_path[it - 1]) < config.tol) {
            model.converged = true;
            break;
        }

        // M-step.
        for (std::size_t j = 0; j < k; ++j) {
            double nj = 0.0;
            for (std::size_t i = 0; i < n; ++i) nj += resp[i][j];
            if (!(nj > 0.0) || !std::isfinite(nj)) {
                throw ModelError("gmm: component " + std::to_string(j) +
                                 " lost all responsibility mass");
            }
            model.weights[j] = nj / static_cast<double>(n);

            Embedding& mu = model.means[j];
            std::fill(mu.begin(), mu.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t d = 0; d < dim; ++d) mu[d] += resp[i][j] * (*points[i])[d];
            }
            for (std::size_t d = 0; d < dim; ++d) mu[d] /= nj;

            Matrix& cov = model.covariances[j];
            std::fill(cov.data().begin(), cov.data().end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const Embedding& x = *points[i];
                const double r = resp[i][j];
                for (std::size_t a = 0; a < dim; ++a) {
                    const double da = x[a] - mu[a];
                    for (std::size_t b = 0; b <= a; ++b) {
                        cov(a, b) += r * da * (x[b] - mu[b]);
                    }
                }
            }
            for (std::size_t a = 0; a < dim; ++a) {
                for (std::size_t b = 0; b <= a; ++b) {
                    cov(a, b) /= nj;
                    cov(b, a) = cov(a, b);
                }
                cov(a, a) += config.reg_covar;
            }
        }
    }
    if (!model.converged) {
        // max_iter M-steps ran; one more E-step aligns likelihood and
        // posteriors with the final parameters.
        const double ll = detail::e_step(model, points, resp);
        model.log_likelihood_path.push_back(ll);
    }
    model.final_log_likelihood = model.log_likelihood_path.back();

    for (std::size_t i = 0; i < n; ++i) {
        model.posteriors.emplace(corpus.at(slice[i]).id, resp[i]);
    }
    return model;
}

// Posterior membership probabilities of an arbitrary point under the model.
// Computed in log space and normalized, so entries sum to 1.
inline std::vector<double> posterior(const GmmModel& model, const Embedding& x) {
    if (x.size() != model.dim) {
        throw DataError("posterior: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                        std::to_string(model.dim) + ")");
    }
    const std::size_t k = model.config.k;
    std::vector<double> logp(k);
    double max_logp = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
        const Matrix chol = cholesky_lower(model.covariances[j],
                                           "gmm: covariance of component " + std::to_string(j));
        logp[j] = std::log(model.weights[j]) +
                  detail::log_gaussian(x, model.means[j], chol, cholesky_log_det(chol));
        max_logp = std::max(max_logp, logp[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(logp[j] - max_logp);
    const double lse = max_logp + std::log(sum);
    std::vector<double> out(k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += out[j] = std::exp(logp[j] - lse);
    for (std::size_t j = 0; j < k; ++j) out[j] /= total;
    return out;
}

// Floors entries at eps and renormalizes. KL is only finite on strictly
// positive vectors, and posteriors routinely underflow to exact zeros.
inline std::vector<double> smooth_probabilities(std::vector<double> p, double eps = 1e-10) {
    double total = 0.0;
    for (double& x : p) total += (x = std::max(x, eps));
    for (double& x : p) x /= total;
    return p;
}

// KL(p || q) = sum_i p_i ln(p_i / q_i). Zero p entries contribute nothing;
// callers are expected to smooth first (see smooth_probabilities). The tiny
// negative values floating-point summation can produce clamp to 0.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) {
        throw DataError("kl_divergence: length mismatch (" + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(s, 0.0);
}

// Symmetric Jensen-Shannon divergence, 0.5 KL(p||m) + 0.5 KL(q||m).
inline double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) {
        throw DataError("jensen_shannon: length mismatch (" + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()) + ")");
    }
    std::vector<double> m(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

// Which divergence ranks posterior profiles, and in which direction. The
// query-first KL is the default reading; Jensen-Shannon is the symmetric
// alternative.
enum class Divergence { kl_query_to_candidate, kl_candidate_to_query, jensen_shannon };

inline std::string_view divergence_name(Divergence d) {
    switch (d) {
        case Divergence::kl_query_to_candidate: return "kl_query_to_candidate";
        case Divergence::kl_candidate_to_query: return "kl_candidate_to_query";
        case Divergence::jensen_shannon: return "jensen_shannon";
    }
    return "?";
}

inline Divergence parse_divergence(std::string_view s) {
    if (s == "kl_query_to_candidate") return Divergence::kl_query_to_candidate;
    if (s == "kl_candidate_to_query") return Divergence::kl_candidate_to_query;
    if (s == "jensen_shannon") return Divergence::jensen_shannon;
    throw DataError("unknown divergence \"" + std::string(s) + "\"");
}

// Ranks the model's training questions by divergence between smoothed
// posterior profiles, ascending, excluding the query. Candidates are the
// questions the model was fitted on, so they share the query's subject.
inline std::vector<Recommendation> recommend_gmm_kl(
    const GmmModel& model, const Corpus& corpus, const std::string& query_id, std::size_t n,
    Divergence divergence = Divergence::kl_query_to_candidate) {
    if (n == 0) throw DataError("recommend_gmm_kl: n must be >= 1");
    auto query_it = model.posteriors.find(query_id);
    if (query_it == model.posteriors.end()) {
        throw DataError("recommend_gmm_kl: query id \"" + query_id + "\" has no posterior in model");
    }
    corpus.require(query_id);

    const std::vector<double> qp = smooth_probabilities(query_it->second);
    std::vector<detail::ScoredId> scored;
    scored.reserve(model.posteriors.size());
    for (const auto& [id, probs] : model.posteriors) {
        if (id == query_id) continue;
        const std::vector<double> cp = smooth_probabilities(probs);
        double score = 0.0;
        switch (divergence) {
            case Divergence::kl_query_to_candidate: score = kl_divergence(qp, cp); break;
            case Divergence::kl_candidate_to_query: score = kl_divergence(cp, qp); break;
            case Divergence::jensen_shannon: score = jensen_shannon(qp, cp); break;
        }
        scored.push_back({score, &id});
    }
    return detail::rank_candidates(std::move(scored), n, /*ascending=*/true);
}

// Cluster-oriented variant: restrict candidates to questions whose argmax
// posterior component matches the query's and rank by Euclidean distance in
// embedding space. When that subset runs out, backfill follows the query's
// remaining components in decreasing posterior order.
inline std::vector<Recommendation> recommend_gmm_cluster(const GmmModel& model,
                                                         const Corpus& corpus,
                                                         const std::string& query_id,
                                                         std::size_t n) {
    if (n == 0) throw DataError("recommend_gmm_cluster: n must be >= 1");
    auto query_it = model.posteriors.find(query_id);
    if (query_it == model.posteriors.end()) {
        throw DataError("recommend_gmm_cluster: query id \"" + query_id +
                        "\" has no posterior in model");
    }
    const QuestionRecord& query = corpus.require(query_id);
    const std::size_t k = model.config.k;

    auto argmax = [](const std::vector<double>& v) {
        return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    };

    // Components in the query's preference order (posterior descending, index
    // ascending on ties).
    std::vector<std::size_t> order(k);
    for (std::size_t j = 0; j < k; ++j) order[j] = j;
    const std::vector<double>& qp = query_it->second;
    std::sort(order.begin(), order.end(), [&qp](std::size_t a, std::size_t b) {
        if (qp[a] != qp[b]) return qp[a] > qp[b];
        return a < b;
    });

    std::vector<std::vector<detail::ScoredId>> by_component(k);
    for (const auto& [id, probs] : model.posteriors) {
        if (id == query_id) continue;
        const QuestionRecord& candidate = corpus.require(id);
        by_component[argmax(probs)].push_back(
            {euclidean_distance(query.embedding, candidate.embedding), &candidate.id});
    }

    std::vector<Recommendation> out;
    for (std::size_t j : order) {
        if (out.size() >= n) break;
        auto ranked =
            detail::rank_candidates(std::move(by_component[j]), n - out.size(), /*ascending=*/true);
        for (Recommendation& r : ranked) {
            r.rank = out.size() + 1;
            out.push_back(std::move(r));
        }
    }
    return out;
}

// --- model selection ----------------------------------------------------------

// Free parameters of a k-component full-covariance mixture in dim dimensions.
inline std::size_t gmm_parameter_count(std::size_t k, std::size_t dim) {
    return (k - 1) + k * dim + k * dim * (dim + 1) / 2;
}

inline double bic_score(std::size_t k_params, std::size_t n, double log_likelihood) {
    return static_cast<double>(k_params) * std::log(static_cast<double>(n)) -
           2.0 * log_likelihood;
}

// Mean silhouette over hard (argmax-posterior) assignments with Euclidean
// distance. Undefined (nullopt) when fewer than two clusters are occupied;
// singleton-cluster points score 0 by the usual convention.
inline std::optional<double> mean_silhouette(const std::vector<const Embedding*>& points,
                                             const std::vector<std::size_t>& labels,
                                             std::size_t k) {
    const std::size_t n = points.size();
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t label : labels) ++counts[label];
    std::size_t occupied = 0;
    for (std::size_t c : counts) occupied += c > 0 ? 1 : 0;
    if (occupied < 2 || n < 2) return std::nullopt;

    double total = 0.0;
    std::vector<double> mean_dist(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            mean_dist[labels[j]] += euclidean_distance(*points[i], *points[j]);
        }
        const std::size_t own = labels[i];
        if (counts[own] <= 1) continue;  // singleton: s(i) = 0
        const double a = mean_dist[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || counts[c] == 0) continue;
            b = std::min(b, mean_dist[c] / static_cast<double>(counts[c]));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

struct SelectKRow {
    std::size_t k = 0;
    std::optional<double> bic;
    std::optional<double> silhouette;
    bool converged = false;
    std::optional<double> log_likelihood;
    std::string error;  // non-empty when the fit for this k failed
};

struct SelectKReport {
    Subject subject = Subject::xyz;
    std::size_t chosen_k = 0;  // minimizes BIC among successful fits
    std::vector<SelectKRow> rows;
};

// Fits one GMM per k in [k_min, k_max] and reports BIC and mean silhouette.
// Individual fit failures are recorded per row; only all-failed is fatal.
// Each k gets its own derived seed so fits are independent and reproducible.
inline SelectKReport select_k(const Corpus& corpus, Subject subject, std::size_t k_min,
                              std::size_t k_max, const GmmConfig& base) {
    if (k_min < 1 || k_min > k_max) throw DataError("select_k: need 1 <= k_min <= k_max");
    const auto& slice = corpus.subject_indices(subject);

    SelectKReport report;
    report.subject = subject;
    double best_bic = std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= k_max; ++k) {
        SelectKRow row;
        row.k = k;
        GmmConfig config = base;
        config.k = k;
        config.seed = derive_seed(base.seed, "select-k:" + std::to_string(k));
        try {
            const GmmModel model = fit_gmm(corpus, subject, config);
            row.converged = model.converged;
            row.log_likelihood = model.final_log_likelihood;
            row.bic = bic_score(gmm_parameter_count(k, model.dim), slice.size(),
                                model.final_log_likelihood);

            std::vector<const Embedding*> points;
            std::vector<std::size_t> labels;
            points.reserve(slice.size());
            labels.reserve(slice.size());
            for (std::size_t idx : slice) {
                const QuestionRecord& q = corpus.at(idx);
                points.push_back(&q.embedding);
                const std::vector<double>& p = model.posteriors.at(q.id);
                labels.push_back(
                    static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
            }
            row.silhouette = mean_silhouette(points, labels, k);

            if (*row.bic < best_bic) {
                best_bic = *row.bic;
                report.chosen_k = k;
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        report.rows.push_back(std::move(row));
    }
    if (report.chosen_k == 0) {
        throw ModelError("select_k: every fit in [" + std::to_string(k_min) + ", " +
                         std::to_string(k_max) + "] failed for subject " +
                         std::string(subject_name(subject)));
    }
    return report;
}

inline void save_select_k_csv(const SelectKReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write selection report " + path.string());
    out << "k,bic,silhouette,converged,log_likelihood\n";
    out.precision(17);
    for (const SelectKRow& row : report.rows) {
        out << row.k << ",";
        if (row.bic) out << *row.bic;
        out << ",";
        if (row.silhouette) out << *row.silhouette;
        out << "," << (row.converged ? "true" : "false") << ",";
        if (row.log_likelihood) out << *row.log_likelihood;
        out << "\n";
    }
    if (!out) throw DataError("failed writing selection report " + path.string());
}

// --- persistence ----------------------------------------------------------------

inline constexpr int kGmmFormatVersion = 1;

inline nlohmann::json gmm_to_json(const GmmModel& model) {
    const std::size_t dim = model.dim;
    nlohmann::json covariances = nlohmann::json::array();
    for (const Matrix& cov : model.covariances) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < dim; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < dim; ++c) row.push_back(cov(r, c));
            rows.push_back(std::move(row));
        }
        covariances.push_back(std::move(rows));
    }
    nlohmann::json posteriors = nlohmann::json::object();
    for (const auto& [id, probs] : model.posteriors) posteriors[id] = probs;
    return {{"format", "qrec-gmm"},
            {"version", kGmmFormatVersion},
            {"subject", std::string(subject_name(model.subject))},
            {"dim", dim},
            {"config",
             {{"k", model.config.k},
              {"covariance", "full"},
              {"tol", model.config.tol},
              {"max_iter", model.config.max_iter},
              {"reg_covar", model.config.reg_covar},
              {"seed", model.config.seed}}},
            {"weights", model.weights},
            {"means", model.means},
            {"covariances", std::move(covariances)},
            {"converged", model.converged},
            {"final_log_likelihood", model.final_log_likelihood},
            {"log_likelihood_path", model.log_likelihood_path},
            {"posteriors", std::move(posteriors)}};
}

inline GmmModel gmm_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "qrec-gmm") {
            throw DataError("not a GMM model file");
        }
        if (j.at("version").get<int>() != kGmmFormatVersion) {
            throw DataError("unsupported GMM model version " + j.at("version").dump());
        }
        GmmModel model;
        model.subject = parse_subject(j.at("subject").get<std::string>());
        model.dim = j.at("dim").get<std::size_t>();
        const auto& c = j.at("config");
        if (c.at("covariance").get<std::string>() != "full") {
            throw DataError("unsupported covariance type " + c.at("covariance").dump());
        }
        model.config.k = c.at("k").get<std::size_t>();
        model.config.tol = c.at("tol").get<double>();
        model.config.max_iter = c.at("max_iter").get<std::size_t>();
        model.config.reg_covar = c.at("reg_covar").get<double>();
        model.config.seed = c.at("seed").get<std::uint64_t>();
        model.weights = j.at("weights").get<std::vector<double>>();
        model.means = j.at("means").get<std::vector<Embedding>>();
        model.converged = j.at("converged").get<bool>();
        model.final_log_likelihood = j.at("final_log_likelihood").get<double>();
        model.log_likelihood_path = j.at("log_likelihood_path").get<std::vector<double>>();

        const std::size_t k = model.config.k;
        const std::size_t dim = model.dim;
        if (model.weights.size() != k || model.means.size() != k) {
            throw DataError("GMM parameter counts do not match k");
        }
        double wsum = 0.0;
        for (double w : model.weights) wsum += w;
        if (std::abs(wsum - 1.0) > 1e-9) throw DataError("GMM weights do not sum to 1");
        for (const auto& cov_json : j.at("covariances")) {
            Matrix cov(dim, dim);
            for (std::size_t r = 0; r < dim; ++r) {
                for (std::size_t col = 0; col < dim; ++col) {
                    cov(r, col) = cov_json.at(r).at(col).get<double>();
                }
            }
            model.covariances.push_back(std::move(cov));
        }
        if (model.covariances.size() != k) throw DataError("GMM covariance count does not match k");
        for (const auto& [id, probs] : j.at("posteriors").items()) {
            model.posteriors.emplace(id, probs.get<std::vector<double>>());
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid GMM model file: ") + e.what());
    }
}

inline void save_gmm(const GmmModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write GMM model file " + path.string());
    out << gmm_to_json(model).dump(2) << "\n";
    if (!out) throw DataError("failed writing GMM model file " + path.string());
}

inline GmmModel load_gmm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open GMM model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid GMM model file " + path.string() + ": " + e.what());
    }
    return gmm_from_json(j);
}

}  // namespace qrec
