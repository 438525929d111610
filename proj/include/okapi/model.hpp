#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "okapi/checkpoint.hpp"
#include "okapi/graph.hpp"

namespace okapi {

// Builds transformer forward passes on a Graph from checkpoint parameters.
// Parameter leaves are created lazily and shared across calls on the same
// instance, so one backward() accumulates gradients over everything built
// through it.
class ModelForward {
public:
    ModelForward(Graph& g, const PolicyCheckpoint& ckpt);

    // Hidden states after the final layer norm, [T, d_model].
    TensorNode* states(const std::vector<int>& tokens);
    // Next-token logits at every position, [T, vocab_size].
    TensorNode* logits(const std::vector<int>& tokens);
    // Logits at the last position only, [1, vocab_size].
    TensorNode* logits_last(const std::vector<int>& tokens);

    // Grad-enabled leaf for a checkpoint parameter, cached by name.
    TensorNode* param(const std::string& name);
    bool has_param(const std::string& name) const { return ckpt_->params.count(name) > 0; }

    const ModelConfig& config() const { return cfg_; }
    Graph& graph() { return *g_; }

    // Names of parameters materialized so far, with their leaves.
    const std::map<std::string, TensorNode*>& leaves() const { return leaves_; }

private:
    TensorNode* block(TensorNode* x, int layer, TensorNode* mask);
    void check_tokens(const std::vector<int>& tokens) const;

    Graph* g_;
    const PolicyCheckpoint* ckpt_;
    ModelConfig cfg_;
    std::map<std::string, TensorNode*> leaves_;
};

// One training sequence plus a mask saying which positions count as
// prediction targets. target_mask has the same length as tokens; position 0
// can never be a target.
struct LossItem {
    std::vector<int> tokens;
    std::vector<uint8_t> target_mask;
};

// All non-PAD positions from 1 on are targets.
LossItem make_loss_item(const std::vector<int>& tokens);

// Mean next-token negative log-likelihood over all masked target positions
// in the batch. Throws on an empty batch, an over-length sequence, or a
// batch with zero targets.
TensorNode* lm_loss_node(ModelForward& model, const std::vector<LossItem>& batch);
double lm_loss_value(const PolicyCheckpoint& ckpt, const std::vector<std::vector<int>>& batch);

// Autoregressive sampling. Stops after max_new tokens, at EOS, or when the
// context window fills. temperature 0 is greedy argmax with lowest-index
// tie-break; temperature > 0 samples from softmax(logits / temperature)
// with an Rng seeded by `seed`. PAD is never emitted.
std::vector<int> generate(const PolicyCheckpoint& ckpt, const std::vector<int>& prompt,
                          int max_new, double temperature, uint64_t seed);

struct SeqLogprob {
    double logprob = 0.0;
    int token_count = 0;
};

// Sum of log p(continuation[i] | context + continuation[:i]).
SeqLogprob sequence_logprob(const PolicyCheckpoint& ckpt, const std::vector<int>& context,
                            const std::vector<int>& continuation);

// log p(tokens[t] | tokens[:t]) for t in [start, tokens.size()). start >= 1.
std::vector<double> per_token_logprobs(const PolicyCheckpoint& ckpt,
                                       const std::vector<int>& tokens, int start);

} // namespace okapi
