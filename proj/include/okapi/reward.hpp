#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "okapi/checkpoint.hpp"
#include "okapi/corpus.hpp"

namespace okapi {

// One training pair: same prompt, preferred response first. Token sequences,
// prompt rendered through PromptFormat and BOS-prefixed.
struct PreferencePair {
    std::vector<int> x;
    std::vector<int> y_c;
    std::vector<int> y_r;
    std::pair<int, int> source_ranks; // (rank of y_c, rank of y_r), 1 is best
};

struct RewardConfig {
    int epochs = 2;
    int batch_size = 64;
    double lr = 1e-5;
    double holdout_fraction = 0.1; // fraction of ranked sets held out
    uint64_t seed = 0;

    std::string describe() const;
};

struct RewardEpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
};

// Scalar score: linear head on the trunk state at the final non-PAD position
// of x ++ [SEP] ++ y. pooled_state, when given, receives that trunk state.
double reward_score(const PolicyCheckpoint& rm, const std::vector<int>& x,
                    const std::vector<int>& y, std::vector<double>* pooled_state = nullptr);

// -log sigmoid(score_c - score_r), computed as softplus(-(score_c - score_r)).
double ranking_loss(double score_c, double score_r);

// All C(T,2) ordered (better, worse) 0-based index pairs from a rank
// permutation: best rank first, worse side in ascending position order.
std::vector<std::pair<int, int>> rank_index_pairs(const std::vector<int>& ranks);

std::vector<PreferencePair> pairs_from_ranked(const RankedResponseSet& set);

// Trunk initialized from the sft checkpoint, scalar head from zeros, whole
// model trained on all derived pairs. Ranked sets (not pairs) are split
// train/holdout so the two sides never share a prompt.
PolicyCheckpoint train_reward(const PolicyCheckpoint& sft,
                              const std::vector<RankedResponseSet>& data,
                              const RewardConfig& cfg,
                              std::vector<RewardEpochMetrics>* metrics = nullptr);

} // namespace okapi
