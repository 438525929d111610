#include <cmath>
#include <vector>

#include "doctest.h"
#include "okapi/checkpoint.hpp"
#include "okapi/errors.hpp"
#include "okapi/reward.hpp"
#include "okapi/sft.hpp"
#include "okapi/tokenizer.hpp"

using namespace okapi;

namespace {

constexpr double kLn2 = 0.6931471805599453;

ModelConfig tiny_config(uint64_t seed = 0) {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 16;
    c.n_heads = 2;
    c.context_len = 128;
    c.seed = seed;
    return c;
}

PolicyCheckpoint tiny_sft(uint64_t seed = 0) {
    PolicyCheckpoint ckpt = init_base_checkpoint(tiny_config(seed));
    ckpt.role = Role::sft;
    return ckpt;
}

RankedResponseSet make_set(const std::string& id, const std::vector<std::string>& responses,
                           const std::vector<int>& ranks) {
    RankedResponseSet s;
    s.base.id = id;
    s.base.lang = "qa";
    s.base.instruction = "Pick the marked answer.";
    s.base.input = "word";
    s.base.output = "word";
    s.base.origin = Origin::generated;
    s.responses = responses;
    s.ranks = ranks;
    return s;
}

} // namespace

TEST_CASE("ranking loss: frozen values and invariants") {
    CHECK(ranking_loss(0.0, 0.0) == doctest::Approx(kLn2).epsilon(1e-12));
    CHECK(ranking_loss(1.0, 0.0) == doctest::Approx(0.3132616875182228).epsilon(1e-12));
    CHECK(ranking_loss(-25.0, 25.0) == doctest::Approx(50.0).epsilon(1e-6));
    CHECK(std::isfinite(ranking_loss(-500.0, 500.0))); // no overflow at huge margins
    CHECK(ranking_loss(-500.0, 500.0) == doctest::Approx(1000.0));

    // symmetric sum is minimized exactly at equal scores
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        double a = 3.0 * rng.normal(), b = 3.0 * rng.normal();
        double sym = ranking_loss(a, b) + ranking_loss(b, a);
        CHECK(sym >= 2 * kLn2 - 1e-12);
        if (std::abs(a - b) > 1e-6) CHECK(sym > 2 * kLn2);
    }
    // shift invariance
    for (int i = 0; i < 50; ++i) {
        double a = rng.normal(), b = rng.normal(), c = 10.0 * rng.normal();
        CHECK(std::abs(ranking_loss(a + c, b + c) - ranking_loss(a, b)) < 1e-12);
    }
}

TEST_CASE("rank_index_pairs enumerates better-first, ascending worse positions") {
    // ranks[i] is the rank of response i; expected pairs are 0-based indices
    auto pairs = rank_index_pairs({3, 1, 4, 2});
    std::vector<std::pair<int, int>> want = {{1, 0}, {1, 2}, {1, 3}, {3, 0}, {3, 2}, {0, 2}};
    CHECK(pairs == want);

    CHECK(rank_index_pairs({1, 2}) == std::vector<std::pair<int, int>>{{0, 1}});
    CHECK(rank_index_pairs({2, 1}) == std::vector<std::pair<int, int>>{{1, 0}});

    for (int t : {2, 3, 4, 6})
        CHECK(rank_index_pairs(std::vector<int>([&] {
                  std::vector<int> r(static_cast<size_t>(t));
                  for (int i = 0; i < t; ++i) r[static_cast<size_t>(i)] = t - i;
                  return r;
              }()))
                  .size() == static_cast<size_t>(t * (t - 1) / 2));

    CHECK_THROWS_AS(rank_index_pairs({1, 1, 2, 3}), Error); // duplicate rank
    CHECK_THROWS_AS(rank_index_pairs({1, 3}), Error);       // not 1..T
    CHECK_THROWS_AS(rank_index_pairs({1}), Error);          // too short
}

TEST_CASE("pairs_from_ranked tokenizes prompt once and orders by preference") {
    RankedResponseSet set = make_set("s1", {"aa", "bb", "cc", "dd"}, {3, 1, 4, 2});
    auto pairs = pairs_from_ranked(set);
    REQUIRE(pairs.size() == 6);

    PromptFormat fmt;
    std::vector<int> x = {Tokenizer::BOS};
    for (int t : Tokenizer::encode(fmt.render_prompt(set.base))) x.push_back(t);
    for (const PreferencePair& p : pairs) {
        CHECK(p.x == x);
        CHECK(p.source_ranks.first < p.source_ranks.second);
    }
    CHECK(pairs[0].y_c == Tokenizer::encode("bb"));
    CHECK(pairs[0].y_r == Tokenizer::encode("aa"));
    CHECK(pairs[5].y_c == Tokenizer::encode("aa"));
    CHECK(pairs[5].y_r == Tokenizer::encode("cc"));
}

TEST_CASE("fresh zero head scores 0 and loses at exactly ln 2") {
    PolicyCheckpoint sft = tiny_sft(31);
    RewardConfig cfg;
    cfg.epochs = 0;
    PolicyCheckpoint rm = train_reward(sft, {make_set("s1", {"a", "b", "c", "d"}, {1, 2, 3, 4})},
                                       cfg);
    CHECK(rm.role == Role::reward);
    CHECK(rm.has_param("reward_head.w"));
    CHECK(rm.param("reward_head.w").shape == std::vector<int>{16, 1});
    CHECK(rm.param("reward_head.b").shape == std::vector<int>{1});

    std::vector<int> x = {Tokenizer::BOS, 'q'};
    CHECK(reward_score(rm, x, Tokenizer::encode("left")) == 0.0);
    double loss = ranking_loss(reward_score(rm, x, Tokenizer::encode("left")),
                               reward_score(rm, x, Tokenizer::encode("right")));
    CHECK(std::abs(loss - kLn2) < 1e-9);

    std::vector<double> pooled;
    reward_score(rm, x, Tokenizer::encode("left"), &pooled);
    CHECK(pooled.size() == 16);
}

TEST_CASE("train_reward separates an easy preference and is deterministic") {
    PolicyCheckpoint sft = tiny_sft(32);
    // marker-count preference: more '*' outranks fewer
    std::vector<RankedResponseSet> data;
    for (int i = 0; i < 10; ++i) {
        std::string w(1, static_cast<char>('a' + i));
        data.push_back(make_set("s" + std::to_string(i),
                                {w + " ****", w + " ***", w + " *", w}, {1, 2, 3, 4}));
    }

    RewardConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.lr = 1e-3;
    cfg.seed = 9;
    std::vector<RewardEpochMetrics> metrics;
    PolicyCheckpoint rm = train_reward(sft, data, cfg, &metrics);
    REQUIRE(metrics.size() == 2);
    CHECK(metrics[0].epoch == 1);
    CHECK(metrics.back().train_accuracy > 0.8);
    CHECK(metrics.back().holdout_accuracy >= 0.5);
    CHECK(metrics.back().train_loss < kLn2);

    PolicyCheckpoint again = train_reward(sft, data, cfg);
    CHECK(checkpoint_fingerprint(again) == checkpoint_fingerprint(rm));

    // trained model actually prefers the marked response on a held-out prompt
    PromptFormat fmt;
    InstructionExample probe = make_set("probe", {"", "", "", ""}, {1, 2, 3, 4}).base;
    std::vector<int> x = {Tokenizer::BOS};
    for (int t : Tokenizer::encode(fmt.render_prompt(probe))) x.push_back(t);
    CHECK(reward_score(rm, x, Tokenizer::encode("zz ****")) >
          reward_score(rm, x, Tokenizer::encode("zz")));

    CHECK_THROWS_AS(train_reward(rm, data, cfg), TrainError); // reward is not sft
    CHECK_THROWS_AS(train_reward(sft, {}, cfg), TrainError);
}
