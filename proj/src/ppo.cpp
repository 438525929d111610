#include "okapi/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "okapi/errors.hpp"
#include "okapi/graph.hpp"
#include "okapi/model.hpp"
#include "okapi/optim.hpp"
#include "okapi/reward.hpp"
#include "okapi/sft.hpp"
#include "okapi/tokenizer.hpp"
#include "okapi/util.hpp"

namespace okapi {

void PpoConfig::validate(int n_layers) const {
    if (epochs < 0) throw ConfigError("ppo: epochs must be >= 0");
    if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("ppo: clip_eps must be in (0,1)");
    if (kl_beta < 0.0) throw ConfigError("ppo: kl_beta must be >= 0");
    if (batch_size <= 0 || minibatch_size <= 0) throw ConfigError("ppo: batch sizes must be positive");
    if (trainable_top_layers < 1)
        throw ConfigError("ppo: trainable_top_layers must be >= 1");
    (void)n_layers; // larger values are clamped to n_layers
    if (gae_lambda < 0.0 || gae_lambda > 1.0 || gae_gamma < 0.0 || gae_gamma > 1.0)
        throw ConfigError("ppo: gae_lambda and gae_gamma must be in [0,1]");
    if (max_new_tokens <= 0) throw ConfigError("ppo: max_new_tokens must be positive");
}

std::string PpoConfig::describe() const {
    return "epochs=" + std::to_string(epochs) + " kl_beta=" + format_double(kl_beta) +
           " clip_eps=" + format_double(clip_eps) + " batch_size=" + std::to_string(batch_size) +
           " lr=" + format_double(lr) + " weight_decay=" + format_double(weight_decay) +
           " adam_betas=(" + format_double(adam_beta1) + "," + format_double(adam_beta2) + ")" +
           " adam_eps=" + format_double(adam_eps) +
           " trainable_top_layers=" + std::to_string(trainable_top_layers) +
           " gae_lambda=" + format_double(gae_lambda) + " gae_gamma=" + format_double(gae_gamma) +
           " max_new_tokens=" + std::to_string(max_new_tokens) +
           " minibatch_size=" + std::to_string(minibatch_size) + " seed=" + std::to_string(seed);
}

double kl_term(const Rollout& rollout) {
    if (rollout.per_token_logp_policy.size() != rollout.per_token_logp_ref.size())
        throw Error("kl_term: per-token logp arrays differ in length");
    double s = 0.0;
    for (size_t i = 0; i < rollout.per_token_logp_policy.size(); ++i)
        s += rollout.per_token_logp_policy[i] - rollout.per_token_logp_ref[i];
    return s;
}

std::vector<double> shaped_rewards(const Rollout& rollout, double beta) {
    if (rollout.per_token_logp_policy.size() != rollout.per_token_logp_ref.size())
        throw Error("shaped_rewards: per-token logp arrays differ in length");
    std::vector<double> out(rollout.per_token_logp_policy.size(), 0.0);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = -beta * (rollout.per_token_logp_policy[i] - rollout.per_token_logp_ref[i]);
    if (!out.empty()) out.back() += rollout.reward_final;
    return out;
}

std::pair<std::vector<double>, std::vector<double>> gae_advantages(const Rollout& rollout,
                                                                   const PpoConfig& cfg) {
    const size_t m = rollout.per_token_logp_policy.size();
    if (m == 0) throw Error("gae_advantages: empty response");
    if (rollout.values.size() != m + 1)
        throw Error("gae_advantages: values must have length |response|+1");
    if (rollout.values.back() != 0.0)
        throw Error("gae_advantages: terminal value must be 0");
    std::vector<double> rewards = shaped_rewards(rollout, cfg.kl_beta);

    std::vector<double> adv(m, 0.0), ret(m, 0.0);
    double next = 0.0;
    for (size_t t = m; t-- > 0;) {
        double delta = rewards[t] + cfg.gae_gamma * rollout.values[t + 1] - rollout.values[t];
        next = delta + cfg.gae_gamma * cfg.gae_lambda * next;
        adv[t] = next;
        ret[t] = adv[t] + rollout.values[t];
    }
    return {std::move(adv), std::move(ret)};
}

std::vector<double> whiten(const std::vector<double>& xs) {
    if (xs.empty()) return {};
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    double sd = std::sqrt(var);
    std::vector<double> out(xs.size(), 0.0);
    if (sd < 1e-12) return out;
    for (size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - mean) / sd;
    return out;
}

double ppo_policy_loss(const std::vector<double>& ratio, const std::vector<double>& advantages,
                       double clip_eps) {
    if (ratio.size() != advantages.size())
        throw Error("ppo_policy_loss: ratio/advantage length mismatch");
    if (ratio.empty()) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i < ratio.size(); ++i) {
        double clipped = std::min(std::max(ratio[i], 1.0 - clip_eps), 1.0 + clip_eps);
        s += -std::min(ratio[i] * advantages[i], clipped * advantages[i]);
    }
    return s / static_cast<double>(ratio.size());
}

CheckpointRewardScorer::CheckpointRewardScorer(const PolicyCheckpoint& rm) : rm_(rm) {
    if (rm.role != Role::reward)
        throw TrainError("ppo reward scorer: checkpoint role is " + role_to_string(rm.role) +
                         ", expected reward");
}

double CheckpointRewardScorer::score(const Rollout& rollout) {
    std::vector<int> y;
    for (int t : rollout.response)
        if (t < 256) y.push_back(t);
    return reward_score(rm_, rollout.prompt, y);
}

double FunctionRewardScorer::score(const Rollout& rollout) {
    return fn_(Tokenizer::decode(rollout.prompt), Tokenizer::decode(rollout.response));
}

std::vector<std::string> ppo_trainable_params(const ModelConfig& config,
                                              int trainable_top_layers) {
    std::vector<std::string> out;
    const int k = std::min(trainable_top_layers, config.n_layers);
    for (int i = config.n_layers - k; i < config.n_layers; ++i) {
        const std::string pfx = "layer" + std::to_string(i) + ".";
        for (const char* m : {"ln1.gain", "ln1.bias", "attn.wq", "attn.wk", "attn.wv", "attn.wo",
                              "attn.bq", "attn.bk", "attn.bv", "attn.bo", "ln2.gain", "ln2.bias",
                              "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"})
            out.push_back(pfx + m);
    }
    out.push_back("final_ln.gain");
    out.push_back("final_ln.bias");
    out.push_back("value_head.w");
    out.push_back("value_head.b");
    return out;
}

namespace {

struct PromptEntry {
    std::vector<int> tokens;
    std::string text;
};

std::vector<double> value_predictions(const PolicyCheckpoint& ckpt, const std::vector<int>& full,
                                      size_t prompt_len) {
    Graph g(0, false);
    ModelForward model(g, ckpt);
    TensorNode* st = model.states(full);
    const size_t m = full.size() - prompt_len;
    TensorNode* rows = g.slice(st, 0, static_cast<int>(prompt_len) - 1,
                               static_cast<int>(prompt_len + m) - 1);
    TensorNode* v = g.add(g.matmul(rows, model.param("value_head.w")), model.param("value_head.b"));
    std::vector<double> out = v->data;
    out.push_back(0.0);
    return out;
}

} // namespace

PolicyCheckpoint run_ppo(const PolicyCheckpoint& sft, RewardScorer& scorer,
                         const std::vector<InstructionExample>& prompts, const PpoConfig& cfg,
                         std::vector<PpoEpochStats>* log) {
    check_role_transition(sft.role, Role::ppo);
    cfg.validate(sft.config.n_layers);
    if (prompts.empty()) throw TrainError("run_ppo: no prompts");

    PolicyCheckpoint ckpt = sft;
    ckpt.role = Role::ppo;
    const int d = ckpt.config.d_model;
    ckpt.params["value_head.w"] = Param{{d, 1}, std::vector<double>(static_cast<size_t>(d), 0.0)};
    ckpt.params["value_head.b"] = Param{{1}, {0.0}};
    ckpt.provenance.push_back(
        "stage=ppo canonical(epochs=5 kl_beta=0.05 clip_eps=0.2 batch_size=32 lr=1e-06 "
        "weight_decay=0.1 adam_betas=(0.9,0.95) trainable_top_layers=4) applied(" +
        cfg.describe() + ") reward=" + scorer.name() + " prompts=" + std::to_string(prompts.size()));
    if (cfg.epochs == 0) return ckpt;

    const PolicyCheckpoint& ref = sft;

    std::set<std::string> trainable;
    for (const std::string& name : ppo_trainable_params(ckpt.config, cfg.trainable_top_layers))
        trainable.insert(name);

    PromptFormat fmt;
    std::vector<PromptEntry> entries;
    entries.reserve(prompts.size());
    for (const InstructionExample& ex : prompts) {
        PromptEntry e;
        e.text = fmt.render_prompt(ex);
        e.tokens = Tokenizer::encode(e.text);
        e.tokens.insert(e.tokens.begin(), Tokenizer::BOS);
        if (static_cast<int>(e.tokens.size()) + 2 > ckpt.config.context_len)
            throw TrainError("run_ppo: prompt '" + ex.id + "' leaves no room for a response");
        entries.push_back(std::move(e));
    }

    AdamW opt(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
    Rng rng(cfg.seed);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order(entries.size());
        std::iota(order.begin(), order.end(), 0);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
        const size_t batch_n = std::min(entries.size(), static_cast<size_t>(cfg.batch_size));

        std::vector<Rollout> batch;
        batch.reserve(batch_n);
        double reward_sum = 0.0, kl_sum = 0.0;
        for (size_t slot = 0; slot < batch_n; ++slot) {
            const PromptEntry& pe = entries[order[slot]];
            Rollout ro;
            ro.prompt = pe.tokens;
            const int room = ckpt.config.context_len - static_cast<int>(pe.tokens.size());
            const int max_new = std::min(cfg.max_new_tokens, room);
            const uint64_t gen_seed =
                Rng::mix(Rng::mix(cfg.seed, 0x9e3779b9u + static_cast<uint64_t>(epoch)),
                         static_cast<uint64_t>(slot));
            ro.response = generate(ckpt, ro.prompt, max_new, 1.0, gen_seed);
            if (ro.response.empty())
                throw TrainError("run_ppo: empty response for prompt " + std::to_string(slot));

            std::vector<int> full = ro.prompt;
            full.insert(full.end(), ro.response.begin(), ro.response.end());
            ro.per_token_logp_policy = per_token_logprobs(ckpt, full, ro.prompt.size());
            ro.per_token_logp_ref = per_token_logprobs(ref, full, ro.prompt.size());
            ro.values = value_predictions(ckpt, full, ro.prompt.size());
            ro.reward_final = scorer.score(ro);

            auto [adv, ret] = gae_advantages(ro, cfg);
            ro.advantages = std::move(adv);
            ro.returns = std::move(ret);
            reward_sum += ro.reward_final;
            kl_sum += kl_term(ro);
            batch.push_back(std::move(ro));
        }

        // whiten advantages across the whole batch
        std::vector<double> flat;
        for (const Rollout& ro : batch)
            flat.insert(flat.end(), ro.advantages.begin(), ro.advantages.end());
        flat = whiten(flat);
        size_t cursor = 0;
        for (Rollout& ro : batch)
            for (double& a : ro.advantages) a = flat[cursor++];

        double pol_loss_sum = 0.0, val_loss_sum = 0.0;
        size_t token_total = 0;
        for (size_t start = 0; start < batch.size();
             start += static_cast<size_t>(cfg.minibatch_size)) {
            const size_t end =
                std::min(batch.size(), start + static_cast<size_t>(cfg.minibatch_size));
            Graph g;
            ModelForward model(g, ckpt);
            TensorNode* pol_sum = nullptr;
            TensorNode* val_sum = nullptr;
            size_t mb_tokens = 0;
            for (size_t k = start; k < end; ++k) {
                const Rollout& ro = batch[k];
                const int p = static_cast<int>(ro.prompt.size());
                const int m = static_cast<int>(ro.response.size());
                std::vector<int> full = ro.prompt;
                full.insert(full.end(), ro.response.begin(), ro.response.end());

                TensorNode* st = model.states(full);
                TensorNode* rows = g.slice(st, 0, p - 1, p - 1 + m);
                TensorNode* logits =
                    g.add(g.matmul(rows, model.param("lm_head.w")), model.param("lm_head.b"));
                TensorNode* lp = g.log_softmax(logits);
                TensorNode* new_logp = g.gather_rows(lp, ro.response);
                TensorNode* old_logp =
                    g.constant({m}, ro.per_token_logp_policy);
                TensorNode* ratio = g.exp(g.sub(new_logp, old_logp));
                TensorNode* adv = g.constant({m}, ro.advantages);
                TensorNode* unclipped = g.mul(ratio, adv);
                TensorNode* clipped =
                    g.mul(g.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv);
                TensorNode* pol = g.scale(g.sum(g.min_elem(unclipped, clipped)), -1.0);
                pol_sum = pol_sum ? g.add(pol_sum, pol) : pol;

                TensorNode* v_new =
                    g.add(g.matmul(rows, model.param("value_head.w")), model.param("value_head.b"));
                std::vector<double> v_old_flat(ro.values.begin(), ro.values.end() - 1);
                TensorNode* v_old = g.constant({m, 1}, v_old_flat);
                TensorNode* ret = g.constant({m, 1}, ro.returns);
                TensorNode* v_clip =
                    g.add(v_old, g.clamp(g.sub(v_new, v_old), -cfg.clip_eps, cfg.clip_eps));
                TensorNode* e1 = g.sub(v_new, ret);
                TensorNode* e2 = g.sub(v_clip, ret);
                TensorNode* sq1 = g.mul(e1, e1);
                TensorNode* sq2 = g.mul(e2, e2);
                TensorNode* vmax =
                    g.scale(g.min_elem(g.scale(sq1, -1.0), g.scale(sq2, -1.0)), -1.0);
                TensorNode* val = g.sum(vmax);
                val_sum = val_sum ? g.add(val_sum, val) : val;
                mb_tokens += static_cast<size_t>(m);
            }
            const double inv = 1.0 / static_cast<double>(mb_tokens);
            TensorNode* pol_mean = g.scale(pol_sum, inv);
            TensorNode* val_mean = g.scale(val_sum, inv);
            TensorNode* total = g.add(pol_mean, g.scale(val_mean, 0.5));
            if (!std::isfinite(total->data[0]))
                throw TrainError("run_ppo: non-finite loss at epoch " + std::to_string(epoch));
            g.backward(total);
            opt.begin_step();
            for (const auto& [name, leaf] : model.leaves()) {
                if (!trainable.count(name)) continue;
                opt.update(name, ckpt.params.at(name).data, leaf->grad, cfg.lr);
            }
            pol_loss_sum += pol_mean->data[0] * static_cast<double>(mb_tokens);
            val_loss_sum += val_mean->data[0] * static_cast<double>(mb_tokens);
            token_total += mb_tokens;
        }

        if (log) {
            PpoEpochStats st;
            st.epoch = epoch;
            st.mean_reward = reward_sum / static_cast<double>(batch.size());
            st.mean_kl = kl_sum / static_cast<double>(batch.size());
            st.policy_loss = pol_loss_sum / static_cast<double>(token_total);
            st.value_loss = val_loss_sum / static_cast<double>(token_total);
            log->push_back(st);
        }
    }
    return ckpt;
}

PolicyCheckpoint run_ppo(const PolicyCheckpoint& sft, const PolicyCheckpoint& rm,
                         const std::vector<InstructionExample>& prompts, const PpoConfig& cfg,
                         std::vector<PpoEpochStats>* log) {
    CheckpointRewardScorer scorer(rm);
    return run_ppo(sft, scorer, prompts, cfg, log);
}

} // namespace okapi
