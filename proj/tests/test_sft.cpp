#include <cmath>

#include "doctest.h"
#include "okapi/checkpoint.hpp"
#include "okapi/errors.hpp"
#include "okapi/model.hpp"
#include "okapi/sft.hpp"
#include "okapi/tokenizer.hpp"

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

InstructionExample ex(const std::string& id, const std::string& instr, const std::string& input,
                      const std::string& output) {
    InstructionExample e;
    e.id = id;
    e.lang = "qa";
    e.instruction = instr;
    e.input = input;
    e.output = output;
    e.origin = Origin::generated;
    return e;
}

} // namespace

TEST_CASE("prompt layout omits the input block when input is empty") {
    PromptFormat fmt;
    InstructionExample a = ex("t1", "Echo the input.", "hi", "hi");
    std::string pa = fmt.render_prompt(a);
    CHECK(pa.find("### Instruction:\nEcho the input.\n\n") == 0);
    CHECK(pa.find("### Input:\nhi\n\n") != std::string::npos);
    CHECK(pa.rfind(PromptFormat::response_marker()) == pa.size() - PromptFormat::response_marker().size());

    InstructionExample b = ex("t2", "Say hello.", "", "hello");
    std::string pb = fmt.render_prompt(b);
    CHECK(pb.find("### Input:") == std::string::npos);

    CHECK(fmt.split_response(fmt.render_full(a)) == "hi");
    CHECK_THROWS_AS(fmt.split_response("no marker here"), ParseError);
}

TEST_CASE("loss items mask the prompt under response_only") {
    PromptFormat fmt;
    InstructionExample e = ex("t1", "Echo.", "x", "yz");
    LossItem item = fmt.to_loss_item(e);
    REQUIRE(item.tokens.size() == item.target_mask.size());
    CHECK(item.tokens.front() == Tokenizer::BOS);
    CHECK(item.tokens.back() == Tokenizer::EOS);

    size_t prompt_len = fmt.prompt_tokens(e).size();
    for (size_t t = 0; t < item.tokens.size(); ++t)
        CHECK(item.target_mask[t] == (t >= prompt_len ? 1 : 0));
    // targets: 'y', 'z', EOS
    CHECK(item.tokens.size() - prompt_len == 3);

    PromptFormat full;
    full.loss_mask_policy = PromptFormat::LossMask::full_sequence;
    LossItem fitem = full.to_loss_item(e);
    CHECK(fitem.target_mask[0] == 0);
    for (size_t t = 1; t < fitem.tokens.size(); ++t) CHECK(fitem.target_mask[t] == 1);
}

TEST_CASE("lr schedule: linear warmup then cosine decay to zero") {
    SftConfig cfg;
    cfg.peak_lr = 1.0;
    cfg.warmup_steps = 10;
    CHECK(lr_at(0, 100, cfg) == 0.0);
    CHECK(lr_at(5, 100, cfg) == doctest::Approx(0.5));
    CHECK(lr_at(10, 100, cfg) == doctest::Approx(1.0));
    CHECK(lr_at(55, 100, cfg) == doctest::Approx(0.5)); // cosine midpoint
    CHECK(lr_at(100, 100, cfg) == doctest::Approx(0.0).epsilon(1e-12));
    for (int s = 1; s <= 10; ++s)
        CHECK(lr_at(s, 100, cfg) - lr_at(s - 1, 100, cfg) == doctest::Approx(0.1));
    CHECK_THROWS_AS(lr_at(3, 10, cfg), TrainError);  // total == warmup
    CHECK_THROWS_AS(lr_at(-1, 100, cfg), TrainError);
    CHECK_THROWS_AS(lr_at(101, 100, cfg), TrainError);
}

TEST_CASE("run_sft drops the training loss and is seed-deterministic") {
    PolicyCheckpoint base = init_base_checkpoint(tiny_config(21));
    std::vector<InstructionExample> corpus;
    for (int i = 0; i < 8; ++i)
        corpus.push_back(ex("c" + std::to_string(i), "Echo the input.",
                            std::string(1, static_cast<char>('a' + i)),
                            std::string(1, static_cast<char>('a' + i))));

    SftConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.peak_lr = 5e-3;
    cfg.warmup_steps = 1;
    cfg.seed = 3;

    std::vector<double> losses;
    PolicyCheckpoint tuned = run_sft(base, corpus, cfg, {}, &losses);
    CHECK(tuned.role == Role::sft);
    REQUIRE(losses.size() == 4);
    CHECK(losses.back() < losses.front());
    for (double l : losses) CHECK(std::isfinite(l));

    PolicyCheckpoint again = run_sft(base, corpus, cfg);
    CHECK(checkpoint_fingerprint(again) == checkpoint_fingerprint(tuned));

    cfg.seed = 4;
    PolicyCheckpoint shuffled = run_sft(base, corpus, cfg);
    CHECK(checkpoint_fingerprint(shuffled) != checkpoint_fingerprint(tuned));
}

TEST_CASE("run_sft with zero epochs only restamps the checkpoint") {
    PolicyCheckpoint base = init_base_checkpoint(tiny_config(22));
    SftConfig cfg;
    cfg.epochs = 0;
    PolicyCheckpoint out = run_sft(base, {ex("a", "Do.", "", "x")}, cfg);
    CHECK(out.role == Role::sft);
    for (const auto& [name, p] : base.params) CHECK(out.param(name).data == p.data);
    CHECK(out.provenance.size() == base.provenance.size() + 1);

    CHECK_THROWS_AS(run_sft(out, {ex("a", "Do.", "", "x")}, cfg), TrainError); // sft is not base
    CHECK_THROWS_AS(run_sft(base, {}, cfg), TrainError);
}
