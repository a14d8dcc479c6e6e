#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "qrec/core.hpp"

namespace qrec {

// Recommendation arms. The first three names match the production session
// logs; gmmClusterAlg is the cluster-oriented extension of the GMM approach.
enum class Strategy { cosine, som, gmm_kl, gmm_cluster };

inline constexpr std::array<Strategy, 4> kAllStrategies = {Strategy::cosine, Strategy::som,
                                                           Strategy::gmm_kl,
                                                           Strategy::gmm_cluster};

inline std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::cosine: return "cosineSimilarityAlg";
        case Strategy::som: return "somSimilarityAlg";
        case Strategy::gmm_kl: return "gmmSimilarityAlg";
        case Strategy::gmm_cluster: return "gmmClusterAlg";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view s) {
    for (Strategy candidate : kAllStrategies) {
        if (s == strategy_name(candidate)) return candidate;
    }
    throw DataError("unknown strategy \"" + std::string(s) + "\"");
}

// The three arms the study randomized over.
inline std::vector<Strategy> default_arms() {
    return {Strategy::cosine, Strategy::som, Strategy::gmm_kl};
}

}  // namespace qrec
