#include <algorithm>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "okapi/errors.hpp"
#include "okapi/pipeline.hpp"
#include "okapi/util.hpp"

using namespace okapi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("okapi-pipe-" + tag + "-" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<InstructionExample> numbered_corpus(int n) {
    std::vector<InstructionExample> out;
    for (int i = 0; i < n; ++i) {
        InstructionExample ex;
        ex.id = "ex-" + std::to_string(i);
        ex.lang = "qa";
        ex.instruction = "Repeat the input.";
        ex.input = "w" + std::to_string(i);
        ex.output = "w" + std::to_string(i);
        out.push_back(std::move(ex));
    }
    return out;
}

// Small enough that a full nine-stage run finishes in seconds.
FlatConfig micro_config() {
    FlatConfig c;
    c.set("model.n_layers", "1");
    c.set("model.d_model", "16");
    c.set("model.n_heads", "2");
    c.set("model.context_len", "256");
    c.set("world.n_languages", "2");
    c.set("world.base_corpus_size", "12");
    c.set("generate.target_count", "4");
    c.set("sft.epochs", "1");
    c.set("sft.batch_size", "4");
    c.set("sft.peak_lr", "1e-3");
    c.set("sft.warmup_steps", "0");
    c.set("rank.max_sets", "2");
    c.set("rank.max_response_tokens", "8");
    c.set("reward.epochs", "1");
    c.set("reward.batch_size", "8");
    c.set("reward.lr", "1e-4");
    c.set("ppo.epochs", "1");
    c.set("ppo.batch_size", "2");
    c.set("ppo.minibatch_size", "2");
    c.set("ppo.max_new_tokens", "8");
    c.set("ppo.trainable_top_layers", "1");
    c.set("ppo.lr", "1e-4");
    c.set("eval.n_items", "4");
    c.set("eval.oracle_prompts", "2");
    c.set("eval.oracle_samples", "1");
    return c;
}

} // namespace

TEST_CASE("split_sizes allocates by largest remainder") {
    SplitSpec spec;
    CHECK(split_sizes(158, spec) == std::array<size_t, 3>{52, 42, 64});
    CHECK(split_sizes(79, spec) == std::array<size_t, 3>{26, 21, 32});
    CHECK(split_sizes(4, spec) == std::array<size_t, 3>{1, 1, 2});
    CHECK(split_sizes(3, spec) == std::array<size_t, 3>{1, 1, 1});

    for (size_t n = 3; n <= 64; ++n) {
        auto s = split_sizes(n, spec);
        CHECK(s[0] + s[1] + s[2] == n);
    }

    SplitSpec bad;
    bad.rank = 0;
    CHECK_THROWS_AS(split_sizes(10, bad), ConfigError);
    CHECK_THROWS_AS(split_sizes(2, spec), Error);
}

TEST_CASE("split_corpus partitions without loss or overlap") {
    auto corpus = numbered_corpus(23);
    SplitSpec spec;
    auto pools = split_corpus(corpus, spec, 99);
    auto sizes = split_sizes(23, spec);
    CHECK(pools[0].size() == sizes[0]);
    CHECK(pools[1].size() == sizes[1]);
    CHECK(pools[2].size() == sizes[2]);

    std::set<std::string> seen;
    for (const auto& pool : pools)
        for (const auto& ex : pool) CHECK(seen.insert(ex.id).second);
    CHECK(seen.size() == corpus.size());

    auto again = split_corpus(corpus, spec, 99);
    CHECK(again[0][0].id == pools[0][0].id);
    auto other = split_corpus(corpus, spec, 100);
    bool same_order = true;
    for (size_t i = 0; i < pools[0].size() && same_order; ++i)
        same_order = other[0][i].id == pools[0][i].id;
    CHECK_FALSE(same_order);
}

TEST_CASE("fingerprint_path tracks content and layout") {
    TempDir dir("fp");
    write_file((dir.path / "a.txt").string(), "hello");
    write_file((dir.path / "b.txt").string(), "world");
    fs::create_directories(dir.path / "sub");
    write_file((dir.path / "sub" / "c.txt").string(), "deep");

    std::string f1 = fingerprint_path((dir.path / "a.txt").string());
    CHECK(f1 == fingerprint_path((dir.path / "a.txt").string()));
    CHECK(f1 != fingerprint_path((dir.path / "b.txt").string()));

    std::string d1 = fingerprint_path(dir.path.string());
    write_file((dir.path / "b.txt").string(), "world!");
    std::string d2 = fingerprint_path(dir.path.string());
    CHECK(d1 != d2);

    fs::rename(dir.path / "b.txt", dir.path / "bb.txt");
    CHECK(fingerprint_path(dir.path.string()) != d2);

    CHECK_THROWS_AS(fingerprint_path((dir.path / "missing").string()), Error);
}

TEST_CASE("world round-trips through its on-disk form") {
    TempDir dir("world");
    SyntheticWorld world = make_world(3, 11, 10);
    save_world(world, dir.path.string());
    SyntheticWorld back = load_world(dir.path.string());

    REQUIRE(back.languages.size() == world.languages.size());
    const std::string probe = "Hello *marked* text!";
    for (size_t i = 0; i < world.languages.size(); ++i) {
        const auto& a = world.languages[i];
        const auto& b = back.languages[i];
        CHECK(b.lang.code == a.lang.code);
        CHECK(b.lang.name == a.lang.name);
        CHECK(b.lang.cc_ratio_percent == a.lang.cc_ratio_percent);
        CHECK(b.apply(probe) == a.apply(probe));
        CHECK(b.invert(a.apply(probe)) == probe);
        CHECK(b.marker() == a.marker());
        CHECK(back.corpora.at(a.lang.code).size() == world.corpora.at(a.lang.code).size());
        CHECK(back.seeds.at(a.lang.code).size() == world.seeds.at(a.lang.code).size());
    }
    const auto& orig0 = world.corpora.at("qa")[0];
    const auto& back0 = back.corpora.at("qa")[0];
    CHECK(back0.id == orig0.id);
    CHECK(back0.instruction == orig0.instruction);
    CHECK(back0.output == orig0.output);
}

TEST_CASE("load_world rejects corrupt language maps") {
    TempDir dir("badworld");
    CHECK_THROWS_AS(load_world(dir.path.string()), Error);

    std::string short_map(94, 'x');
    write_file((dir.path / "languages.jsonl").string(),
               std::string(R"({"code":"qa","name":"Qa","ratio":40.0,"map":")") + short_map +
                   "\"}\n");
    CHECK_THROWS_AS(load_world(dir.path.string()), ParseError);

    std::string dup_map;
    for (int i = 0; i < 95; ++i) dup_map += 'z';
    write_file((dir.path / "languages.jsonl").string(),
               std::string(R"({"code":"qa","name":"Qa","ratio":40.0,"map":")") + dup_map +
                   "\"}\n");
    CHECK_THROWS_AS(load_world(dir.path.string()), ParseError);

    write_file((dir.path / "languages.jsonl").string(), "not json\n");
    CHECK_THROWS_AS(load_world(dir.path.string()), ParseError);
}

TEST_CASE("judge names round-trip") {
    for (SynthJudge j :
         {SynthJudge::length_sort, SynthJudge::marker_count, SynthJudge::seeded_random})
        CHECK(judge_from_string(judge_to_string(j)) == j);
    CHECK_THROWS_AS(judge_from_string("vibes"), ConfigError);
}

TEST_CASE("run_plan validates its stage list and out_dir") {
    RunPlan plan;
    plan.config = micro_config();
    CHECK_THROWS_AS(run_plan(plan), ConfigError); // no out_dir

    TempDir dir("plan-validate");
    plan.out_dir = dir.path.string();
    plan.stages = {"bogus"};
    CHECK_THROWS_AS(run_plan(plan), ConfigError);
    plan.stages = {"generate", "world"}; // out of order
    CHECK_THROWS_AS(run_plan(plan), ConfigError);

    plan.stages = {"sft"}; // upstream artifacts absent
    CHECK_THROWS_AS(run_plan(plan), TrainError);
}

TEST_CASE("run_plan executes stages incrementally and resumes from manifests") {
    TempDir dir("plan-run");
    RunPlan plan;
    plan.out_dir = dir.path.string();
    plan.seed = 7;
    plan.config = micro_config();

    // Partial plans extend earlier ones through the shared out_dir.
    plan.stages = {"world"};
    RunOutcome w = run_plan(plan);
    REQUIRE(w.stages.size() == 1);
    CHECK(w.stages[0].executed);
    CHECK(fs::exists(dir.path / "world" / "languages.jsonl"));

    plan.stages = {"generate"};
    RunOutcome g = run_plan(plan);
    REQUIRE(g.stages.size() == 1);
    CHECK(g.stages[0].executed);
    CHECK(fs::exists(dir.path / "data" / "generated.jsonl"));

    // Full plan: world and generate are already clean, the rest runs.
    plan.stages = {};
    RunOutcome full = run_plan(plan);
    REQUIRE(full.stages.size() == all_stages().size());
    CHECK_FALSE(full.stages[0].executed);
    CHECK_FALSE(full.stages[1].executed);
    for (size_t i = 2; i < full.stages.size(); ++i) CHECK(full.stages[i].executed);
    CHECK(fs::exists(full.report_path));
    CHECK(full.metrics.count("oracle_reward.sft") == 1);
    CHECK(full.metrics.count("oracle_reward.ppo") == 1);
    CHECK(full.metrics.count("acc.none.base") == 1);
    CHECK(full.metrics.count("acc.per_token.rlhf") == 1);
    CHECK(full.metrics.count("acc.none.sft.qa") == 1);
    std::string report = read_file(full.report_path);
    CHECK(report.find("| Language |") != std::string::npos);
    CHECK(report.find("Ave Group") != std::string::npos);

    // Identical rerun: everything cached.
    RunOutcome cached = run_plan(plan);
    for (const StageRun& sr : cached.stages) CHECK_FALSE(sr.executed);
    CHECK(cached.metrics.at("acc.none.base") ==
          doctest::Approx(full.metrics.at("acc.none.base")));

    // Losing one artifact re-runs its stage and everything downstream only.
    fs::remove_all(dir.path / "ckpt" / "reward");
    RunOutcome partial = run_plan(plan);
    REQUIRE(partial.stages.size() == all_stages().size());
    for (size_t i = 0; i < partial.stages.size(); ++i) {
        bool expect = all_stages()[i] == "reward" || all_stages()[i] == "ppo" ||
                      all_stages()[i] == "eval" || all_stages()[i] == "report";
        CHECK(partial.stages[i].executed == expect);
    }

    // resume=false forces every stage.
    plan.resume = false;
    RunOutcome forced = run_plan(plan);
    for (const StageRun& sr : forced.stages) CHECK(sr.executed);
}

TEST_CASE("identical plans in different directories produce identical bytes") {
    TempDir a("det-a"), b("det-b");
    RunPlan plan;
    plan.seed = 21;
    plan.config = micro_config();

    plan.out_dir = a.path.string();
    run_plan(plan);
    plan.out_dir = b.path.string();
    run_plan(plan);

    CHECK(fingerprint_path((a.path / "ckpt").string()) ==
          fingerprint_path((b.path / "ckpt").string()));
    CHECK(fingerprint_path((a.path / "manifests").string()) ==
          fingerprint_path((b.path / "manifests").string()));
    CHECK(fingerprint_path((a.path / "world").string()) ==
          fingerprint_path((b.path / "world").string()));
    CHECK(read_file((a.path / "eval" / "summary.json").string()) ==
          read_file((b.path / "eval" / "summary.json").string()));
}
