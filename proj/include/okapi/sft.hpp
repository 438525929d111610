#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "okapi/checkpoint.hpp"
#include "okapi/corpus.hpp"
#include "okapi/model.hpp"

namespace okapi {

struct SftConfig {
    int epochs = 3;
    double peak_lr = 2e-5;
    int warmup_steps = 200;
    int batch_size = 128;
    double weight_decay = 0.05;
    uint64_t seed = 0;

    std::string describe() const;
};

// Instruction-tuning prompt layout. The input block is omitted when the
// example has no input. Splitting rendered text at the response marker
// recovers the response.
struct PromptFormat {
    enum class LossMask { full_sequence, response_only };
    LossMask loss_mask_policy = LossMask::response_only;

    static std::string response_marker();
    std::string render_prompt(const InstructionExample& ex) const;
    std::string render_full(const InstructionExample& ex) const;
    std::string split_response(const std::string& full) const;

    // [BOS] + prompt bytes + response bytes + [EOS], with target_mask per
    // loss_mask_policy.
    LossItem to_loss_item(const InstructionExample& ex) const;
    std::vector<int> prompt_tokens(const InstructionExample& ex) const;
};

// Linear 0 -> peak over warmup_steps, then cosine decay peak -> 0 across the
// remaining steps. Throws unless total_steps > warmup_steps.
double lr_at(int step, int total_steps, const SftConfig& cfg);

// Full-parameter fine-tune of a role=base checkpoint; returns role=sft.
// Aborts with the step index on a non-finite loss. epoch_losses, when given,
// receives the mean training loss of each epoch.
PolicyCheckpoint run_sft(const PolicyCheckpoint& base,
                         const std::vector<InstructionExample>& corpus, const SftConfig& cfg,
                         const PromptFormat& fmt = {},
                         std::vector<double>* epoch_losses = nullptr);

std::string corpus_fingerprint(const std::vector<InstructionExample>& corpus);

} // namespace okapi
