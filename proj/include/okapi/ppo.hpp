#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "okapi/checkpoint.hpp"
#include "okapi/corpus.hpp"

namespace okapi {

struct PpoConfig {
    int epochs = 5;
    double kl_beta = 0.05;
    double clip_eps = 0.2;
    int batch_size = 32;
    double lr = 1e-6;
    double weight_decay = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;
    int trainable_top_layers = 4;
    double gae_lambda = 0.95;
    double gae_gamma = 1.0;
    int max_new_tokens = 64; // sampling cap per response
    int minibatch_size = 4;  // rollouts per gradient step
    uint64_t seed = 0;

    void validate(int n_layers) const;
    std::string describe() const;
};

// One sampled (prompt, response) with everything the update step needs.
// response includes the terminal EOS when the policy emitted one; all
// per-token arrays run over response positions.
struct Rollout {
    std::vector<int> prompt;
    std::vector<int> response;
    std::vector<double> per_token_logp_policy;
    std::vector<double> per_token_logp_ref;
    double reward_final = 0.0;
    std::vector<double> values; // |response|+1, terminal entry 0
    std::vector<double> advantages;
    std::vector<double> returns;
};

// Sampled KL estimator: sum of (logp_policy - logp_ref) over response tokens.
double kl_term(const Rollout& rollout);

// Per-token reward -beta*(logp_policy - logp_ref), with reward_final added at
// the last token. Sums to reward_final - beta*kl_term.
std::vector<double> shaped_rewards(const Rollout& rollout, double beta);

// Raw (gamma, lambda) advantage estimates and returns = advantages + values.
// Whitening is a separate batch-level step.
std::pair<std::vector<double>, std::vector<double>> gae_advantages(const Rollout& rollout,
                                                                   const PpoConfig& cfg);

// Mean 0, std 1; all zeros when the variance is zero.
std::vector<double> whiten(const std::vector<double>& xs);

// Mean over tokens of -min(ratio*A, clip(ratio, 1-eps, 1+eps)*A).
double ppo_policy_loss(const std::vector<double>& ratio, const std::vector<double>& advantages,
                       double clip_eps);

// Reward source for rollouts. The checkpoint-backed scorer runs the trained
// reward model; the function-backed one wraps any (prompt_text,
// response_text) -> real, e.g. a synthetic oracle.
class RewardScorer {
public:
    virtual ~RewardScorer() = default;
    virtual double score(const Rollout& rollout) = 0;
    virtual std::string name() const = 0;
};

class CheckpointRewardScorer : public RewardScorer {
public:
    explicit CheckpointRewardScorer(const PolicyCheckpoint& rm);
    double score(const Rollout& rollout) override;
    std::string name() const override { return "reward-model"; }

private:
    const PolicyCheckpoint& rm_;
};

class FunctionRewardScorer : public RewardScorer {
public:
    FunctionRewardScorer(std::string name,
                         std::function<double(const std::string&, const std::string&)> fn)
        : name_(std::move(name)), fn_(std::move(fn)) {}
    double score(const Rollout& rollout) override;
    std::string name() const override { return name_; }

private:
    std::string name_;
    std::function<double(const std::string&, const std::string&)> fn_;
};

struct PpoEpochStats {
    int epoch = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
};

// Clipped-surrogate PPO against a frozen copy of the sft policy. Only the top
// trainable_top_layers blocks, the final norm, and the (zero-initialized)
// value head move; everything else stays bit-identical to sft.
PolicyCheckpoint run_ppo(const PolicyCheckpoint& sft, RewardScorer& scorer,
                         const std::vector<InstructionExample>& prompts, const PpoConfig& cfg,
                         std::vector<PpoEpochStats>* log = nullptr);

PolicyCheckpoint run_ppo(const PolicyCheckpoint& sft, const PolicyCheckpoint& rm,
                         const std::vector<InstructionExample>& prompts, const PpoConfig& cfg,
                         std::vector<PpoEpochStats>* log = nullptr);

// The parameter names run_ppo updates for this config (top blocks, final
// norm, value head). Exposed so the freeze contract is testable.
std::vector<std::string> ppo_trainable_params(const ModelConfig& config, int trainable_top_layers);

} // namespace okapi
