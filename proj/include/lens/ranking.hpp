#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lens/bench.hpp"
#include "lens/csv.hpp"
#include "lens/ensemble.hpp"
#include "lens/ole.hpp"
#include "lens/parallel.hpp"
#include "lens/tensor.hpp"

namespace lens {

// Per-sample outputs of a pool on a fixed evaluation set, computed once via
// the shared-prefix scheduler. Subset scores are pure arithmetic on the
// cache, so one greedy step costs O(candidates * points) instead of
// O(candidates) network evaluations.
class PredictionCache {
public:
    PredictionCache(const LayerEnsembleModel& model, SampleSet pool_sorted, const Tensor& X)
        : pool_(std::move(pool_sorted)) {
        if (model.output_dim() != 1) {
            throw std::invalid_argument("PredictionCache: scalar-output architecture required");
        }
        const auto outputs = ole_eval(model, pool_, X);
        n_points_ = X.rows();
        outputs_.resize(pool_.size());
        for (std::size_t j = 0; j < pool_.size(); ++j) {
            outputs_[j].resize(n_points_);
            for (std::size_t t = 0; t < n_points_; ++t) outputs_[j][t] = outputs[j].at(t, 0);
        }
    }

    const SampleSet& pool() const { return pool_; }
    std::size_t n_points() const { return n_points_; }

    // Q of the subset identified by ascending pool indices. Mean and
    // population variance are accumulated in pool order, matching predict().
    double subset_quality(const std::vector<std::size_t>& members,
                          const std::vector<GaussianPrediction>& oracle) const {
        if (members.empty()) throw std::invalid_argument("subset_quality: empty subset");
        if (oracle.size() != n_points_) {
            throw std::invalid_argument("subset_quality: oracle length mismatch");
        }
        const double inv_j = 1.0 / static_cast<double>(members.size());
        double sum_kl = 0.0;
        for (std::size_t t = 0; t < n_points_; ++t) {
            double sum = 0.0;
            for (std::size_t j : members) sum += outputs_[j][t];
            const double mean = sum * inv_j;
            double ss = 0.0;
            for (std::size_t j : members) {
                const double d = outputs_[j][t] - mean;
                ss += d * d;
            }
            const GaussianPrediction p{mean, std::max(ss * inv_j, kVarFloor)};
            sum_kl += std::max(kl_gauss(p, oracle[t]), 0.0);
        }
        return sum_kl / static_cast<double>(n_points_);
    }

private:
    SampleSet pool_;
    std::size_t n_points_ = 0;
    std::vector<std::vector<double>> outputs_;  // [pool index][point]
};

// Greedy nested subsets S^1 c S^2 c ... of a candidate pool, each step
// appending the sample whose addition gives the best (lowest) validation
// quality score. Ties go to the lexicographically smallest sample.
struct RankedSamples {
    SampleSet pool;                    // lex-sorted candidate pool
    std::vector<std::size_t> order;    // chosen pool indices, insertion order
    std::vector<LayerSample> ranked;   // chosen samples, insertion order
    std::vector<double> val_scores;    // Q(S^P) for P = 1..ranked.size()
    std::uint64_t q_evaluations = 0;   // number of candidate Q evaluations
};

inline RankedSamples rank_samples(const LayerEnsembleModel& model, const SampleSet& pool,
                                  const Tensor& X_val,
                                  const std::vector<GaussianPrediction>& oracle_val,
                                  std::size_t max_p, int threads = 1) {
    if (max_p < 1 || max_p > pool.size()) {
        throw std::invalid_argument("rank_samples: max_P out of [1, |pool|]");
    }
    model.validate_samples(pool);

    RankedSamples result{sort_samples(pool), {}, {}, {}, 0};
    const PredictionCache cache(model, result.pool, X_val);

    std::vector<bool> chosen(result.pool.size(), false);
    std::vector<std::size_t> members;  // ascending pool indices of S^P
    for (std::size_t step = 0; step < max_p; ++step) {
        std::vector<std::size_t> candidates;
        candidates.reserve(result.pool.size() - step);
        for (std::size_t j = 0; j < result.pool.size(); ++j) {
            if (!chosen[j]) candidates.push_back(j);
        }

        std::vector<double> scores(candidates.size());
        parallel_for(candidates.size(), threads, [&](std::size_t c) {
            std::vector<std::size_t> trial = members;
            trial.insert(std::upper_bound(trial.begin(), trial.end(), candidates[c]),
                         candidates[c]);
            scores[c] = cache.subset_quality(trial, oracle_val);
        });
        result.q_evaluations += candidates.size();

        std::size_t best = 0;
        for (std::size_t c = 1; c < candidates.size(); ++c) {
            if (scores[c] < scores[best]) best = c;
        }
        const std::size_t pick = candidates[best];
        chosen[pick] = true;
        members.insert(std::upper_bound(members.begin(), members.end(), pick), pick);
        result.order.push_back(pick);
        result.ranked.push_back(result.pool[pick]);
        result.val_scores.push_back(scores[best]);
    }
    return result;
}

// Q of every ranked prefix on a held-out set: curve[P-1] = Q(S^P).
inline std::vector<double> evaluate_prefixes(const LayerEnsembleModel& model,
                                             const RankedSamples& ranked, const Tensor& X_test,
                                             const std::vector<GaussianPrediction>& oracle_test) {
    if (ranked.ranked.empty()) throw std::invalid_argument("evaluate_prefixes: empty ranking");
    const PredictionCache cache(model, ranked.pool, X_test);
    std::vector<double> curve;
    curve.reserve(ranked.order.size());
    std::vector<std::size_t> members;
    for (std::size_t idx : ranked.order) {
        members.insert(std::upper_bound(members.begin(), members.end(), idx), idx);
        curve.push_back(cache.subset_quality(members, oracle_test));
    }
    return curve;
}

inline constexpr const char* kRankingCsvHeader = "rank,sample_indices,Q_val,Q_test";

inline void write_ranking_csv(std::ostream& os, const RankedSamples& ranked,
                              const std::vector<double>& test_curve) {
    os << kRankingCsvHeader << '\n';
    for (std::size_t p = 0; p < ranked.ranked.size(); ++p) {
        os << (p + 1) << ',' << ranked.ranked[p].to_string('-') << ','
           << format_double(ranked.val_scores[p]) << ',' << format_double(test_curve[p]) << '\n';
    }
}

inline constexpr const char* kPrefixCurveCsvHeader = "P,Q";

inline void write_prefix_curve_csv(std::ostream& os, const std::vector<double>& curve) {
    os << kPrefixCurveCsvHeader << '\n';
    for (std::size_t p = 0; p < curve.size(); ++p) {
        os << (p + 1) << ',' << format_double(curve[p]) << '\n';
    }
}

}  // namespace lens
