#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "okapi/checkpoint.hpp"
#include "okapi/errors.hpp"
#include "okapi/ppo.hpp"
#include "okapi/tokenizer.hpp"
#include "okapi/util.hpp"

using namespace okapi;

namespace {

ModelConfig tiny_config(uint64_t seed = 0) {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 16;
    c.n_heads = 2;
    c.context_len = 96;
    c.seed = seed;
    return c;
}

PolicyCheckpoint tiny_sft(uint64_t seed = 0) {
    PolicyCheckpoint ckpt = init_base_checkpoint(tiny_config(seed));
    ckpt.role = Role::sft;
    return ckpt;
}

Rollout rollout_with(const std::vector<double>& lp_policy, const std::vector<double>& lp_ref,
                     double reward_final) {
    Rollout r;
    r.prompt = {Tokenizer::BOS, 'p'};
    r.response.assign(lp_policy.size(), 'x');
    r.per_token_logp_policy = lp_policy;
    r.per_token_logp_ref = lp_ref;
    r.reward_final = reward_final;
    r.values.assign(lp_policy.size() + 1, 0.0);
    return r;
}

InstructionExample prompt_ex(const std::string& id, const std::string& word) {
    InstructionExample e;
    e.id = id;
    e.lang = "qa";
    e.instruction = "Append 2 marker symbols * to the input text.";
    e.input = word;
    e.output = word + " **";
    e.origin = Origin::generated;
    return e;
}

} // namespace

TEST_CASE("kl_term: zero against itself, known value otherwise") {
    Rollout self = rollout_with({-1.3, -0.7}, {-1.3, -0.7}, 0.0);
    CHECK(kl_term(self) == 0.0);

    Rollout r = rollout_with({-1.0, -2.0}, {-1.1, -1.95}, 0.0);
    CHECK(kl_term(r) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("shaped rewards put the score on the last token and sum correctly") {
    Rollout r = rollout_with({-1.0, -2.0, -0.5}, {-1.2, -1.8, -0.5}, 3.0);
    auto shaped = shaped_rewards(r, 0.05);
    REQUIRE(shaped.size() == 3);
    CHECK(shaped[0] == doctest::Approx(-0.05 * 0.2));
    CHECK(shaped[1] == doctest::Approx(-0.05 * -0.2));
    double total = shaped[0] + shaped[1] + shaped[2];
    CHECK(std::abs(total - (r.reward_final - 0.05 * kl_term(r))) < 1e-10);

    // beta scales only the KL part
    auto unshaped = shaped_rewards(r, 0.0);
    CHECK(unshaped[0] == 0.0);
    CHECK(unshaped[1] == 0.0);
    CHECK(unshaped[2] == 3.0);
}

TEST_CASE("gae: terminal-credit example and brute-force oracle") {
    PpoConfig cfg;
    cfg.gae_gamma = 1.0;
    cfg.gae_lambda = 1.0;
    cfg.kl_beta = 0.0;

    Rollout r = rollout_with({-1.0, -1.0, -1.0}, {-1.0, -1.0, -1.0}, 2.5);
    auto [adv, ret] = gae_advantages(r, cfg);
    REQUIRE(adv.size() == 3);
    for (double a : adv) CHECK(a == doctest::Approx(2.5).epsilon(1e-12));
    for (size_t t = 0; t < 3; ++t) CHECK(ret[t] == doctest::Approx(adv[t] + r.values[t]));

    // random instances against an O(n^2) evaluation of the defining sum
    Rng rng(77);
    for (int rep = 0; rep < 20; ++rep) {
        const size_t n = 1 + static_cast<size_t>(rng.uniform_int(8));
        Rollout x;
        x.prompt = {Tokenizer::BOS};
        x.response.assign(n, 'x');
        x.per_token_logp_policy.resize(n);
        x.per_token_logp_ref.resize(n);
        for (size_t i = 0; i < n; ++i) {
            x.per_token_logp_policy[i] = -std::abs(rng.normal());
            x.per_token_logp_ref[i] = -std::abs(rng.normal());
        }
        x.reward_final = 2.0 * rng.normal();
        x.values.resize(n + 1);
        for (size_t i = 0; i < n; ++i) x.values[i] = rng.normal();
        x.values[n] = 0.0;

        PpoConfig c2;
        c2.gae_gamma = 0.97;
        c2.gae_lambda = 0.9;
        c2.kl_beta = 0.05;
        auto [got, got_ret] = gae_advantages(x, c2);

        auto rewards = shaped_rewards(x, c2.kl_beta);
        for (size_t t = 0; t < n; ++t) {
            double sum = 0.0;
            for (size_t l = t; l < n; ++l) {
                double delta = rewards[l] + c2.gae_gamma * x.values[l + 1] - x.values[l];
                sum += std::pow(c2.gae_gamma * c2.gae_lambda, static_cast<double>(l - t)) * delta;
            }
            CHECK(std::abs(got[t] - sum) < 1e-9);
            CHECK(got_ret[t] == doctest::Approx(got[t] + x.values[t]).epsilon(1e-12));
        }
    }

    Rollout bad = rollout_with({-1.0}, {-1.0}, 0.0);
    bad.values = {0.0, 0.5}; // nonzero terminal
    CHECK_THROWS_AS(gae_advantages(bad, cfg), Error);
}

TEST_CASE("whiten normalizes and guards zero variance") {
    auto w = whiten({1.0, 2.0, 3.0, 4.0});
    double mean = (w[0] + w[1] + w[2] + w[3]) / 4;
    CHECK(std::abs(mean) < 1e-12);
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    CHECK(std::sqrt(var / 4) == doctest::Approx(1.0).epsilon(1e-12));

    auto flat = whiten({2.5, 2.5, 2.5});
    CHECK(flat == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(whiten({}).empty());
}

TEST_CASE("clipped surrogate loss: frozen examples") {
    CHECK(ppo_policy_loss({1.0}, {2.0}, 0.2) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(ppo_policy_loss({1.5}, {1.0}, 0.2) == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK(ppo_policy_loss({0.5}, {-1.0}, 0.2) == doctest::Approx(0.8).epsilon(1e-12));
    // mean over tokens
    CHECK(ppo_policy_loss({1.0, 1.5}, {2.0, 1.0}, 0.2) ==
          doctest::Approx((-2.0 - 1.2) / 2).epsilon(1e-12));
    CHECK(ppo_policy_loss({}, {}, 0.2) == 0.0);
}

TEST_CASE("ppo_trainable_params names exactly the top blocks, final norm, value head") {
    ModelConfig cfg = tiny_config();
    auto names = ppo_trainable_params(cfg, 1);
    std::set<std::string> set(names.begin(), names.end());
    CHECK(set.count("layer1.attn.wq"));
    CHECK(set.count("layer1.mlp.b2"));
    CHECK(set.count("final_ln.gain"));
    CHECK(set.count("value_head.w"));
    CHECK_FALSE(set.count("layer0.attn.wq"));
    CHECK_FALSE(set.count("tok_emb"));
    CHECK_FALSE(set.count("lm_head.w"));
    CHECK(names.size() == 16 + 2 + 2);

    auto all = ppo_trainable_params(cfg, 4); // clamped to n_layers
    std::set<std::string> all_set(all.begin(), all.end());
    CHECK(all_set.count("layer0.attn.wq"));
}

TEST_CASE("run_ppo epochs=0: untouched policy params plus a fresh zero value head") {
    PolicyCheckpoint sft = tiny_sft(41);
    PpoConfig cfg;
    cfg.epochs = 0;
    cfg.batch_size = 2;
    cfg.max_new_tokens = 4;
    FunctionRewardScorer zero("zero", [](const std::string&, const std::string&) { return 0.0; });
    PolicyCheckpoint out = run_ppo(sft, zero, {prompt_ex("p1", "ruby")}, cfg);
    CHECK(out.role == Role::ppo);
    for (const auto& [name, p] : sft.params) CHECK(out.param(name).data == p.data);
    REQUIRE(out.has_param("value_head.w"));
    CHECK(out.param("value_head.w").shape == std::vector<int>{16, 1});
    for (double v : out.param("value_head.w").data) CHECK(v == 0.0);
    CHECK(out.param("value_head.b").data == std::vector<double>{0.0});
}

TEST_CASE("run_ppo freezes everything outside the trainable set") {
    PolicyCheckpoint sft = tiny_sft(42);
    std::vector<InstructionExample> prompts;
    for (int i = 0; i < 4; ++i)
        prompts.push_back(prompt_ex("p" + std::to_string(i),
                                    std::string(1, static_cast<char>('a' + i))));

    FunctionRewardScorer oracle("stars", [](const std::string&, const std::string& resp) {
        return static_cast<double>(std::count(resp.begin(), resp.end(), '*'));
    });

    PpoConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.minibatch_size = 2;
    cfg.lr = 1e-3;
    cfg.max_new_tokens = 6;
    cfg.trainable_top_layers = 1;
    cfg.seed = 5;

    std::vector<PpoEpochStats> log;
    PolicyCheckpoint out = run_ppo(sft, oracle, prompts, cfg, &log);
    REQUIRE(log.size() == 2);
    CHECK(log[0].epoch == 1);

    auto trainable = ppo_trainable_params(sft.config, cfg.trainable_top_layers);
    std::set<std::string> tset(trainable.begin(), trainable.end());
    bool some_moved = false;
    for (const auto& [name, p] : out.params) {
        if (name == "value_head.w" || name == "value_head.b") continue;
        if (tset.count(name)) {
            if (out.param(name).data != sft.param(name).data) some_moved = true;
        } else {
            CHECK(out.param(name).data == sft.param(name).data); // bit-identical
        }
    }
    CHECK(some_moved);

    // same seed, same result
    PolicyCheckpoint again = run_ppo(sft, oracle, prompts, cfg);
    CHECK(checkpoint_fingerprint(again) == checkpoint_fingerprint(out));
}

TEST_CASE("ppo config validation") {
    PpoConfig cfg;
    CHECK_THROWS_AS([&] { PpoConfig c; c.clip_eps = 0.0; c.validate(4); }(), ConfigError);
    CHECK_THROWS_AS([&] { PpoConfig c; c.trainable_top_layers = 0; c.validate(4); }(), ConfigError);
    CHECK_THROWS_AS([&] { PpoConfig c; c.gae_lambda = 1.5; c.validate(4); }(), ConfigError);
    CHECK_THROWS_AS([&] { PpoConfig c; c.batch_size = 0; c.validate(4); }(), ConfigError);
    cfg.validate(4);
}
