#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "doctest.h"
#include "okapi/errors.hpp"
#include "okapi/rouge.hpp"
#include "okapi/selfinstruct.hpp"
#include "okapi/synth.hpp"
#include "okapi/util.hpp"

using namespace okapi;

namespace {

// Reference LCS, written differently from the library's (1-D rolling array
// there, full table here) so a shared bug cannot hide.
size_t lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<size_t>> t(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1
                                           : std::max(t[i - 1][j], t[i][j - 1]);
    return t[a.size()][b.size()];
}

double f1_from_lcs(size_t lcs, size_t len_c, size_t len_r) {
    if (len_c == 0 || len_r == 0) return 0.0;
    double p = static_cast<double>(lcs) / static_cast<double>(len_c);
    double r = static_cast<double>(lcs) / static_cast<double>(len_r);
    if (p + r == 0.0) return 0.0;
    return 2 * p * r / (p + r);
}

std::string random_text(Rng& rng, int max_words) {
    static const char* words[] = {"copy", "the", "input", "text", "mark", "word",
                                  "join", "with", "a", "hyphen", "repeat", "twice"};
    int n = rng.uniform_int(max_words + 1);
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += rng.uniform() < 0.2 ? "  " : " ";
        out += words[rng.uniform_int(12)];
        if (rng.uniform() < 0.3) out[out.size() - 1] = static_cast<char>(
            std::toupper(static_cast<unsigned char>(out[out.size() - 1])));
    }
    return out;
}

} // namespace

TEST_CASE("rouge_l equals the reference LCS computation") {
    CHECK(rouge_l("the cat sat", "the cat sat") == 1.0);
    CHECK(rouge_l("", "anything") == 0.0);
    CHECK(rouge_l("anything", "") == 0.0);
    CHECK(rouge_l("a b c", "d e f") == 0.0);
    CHECK(rouge_tokens("  The  CAT\tsat ") == std::vector<std::string>{"the", "cat", "sat"});

    Rng rng(101);
    for (int i = 0; i < 500; ++i) {
        std::string c = random_text(rng, 10);
        std::string r = random_text(rng, 10);
        auto tc = rouge_tokens(c);
        auto tr = rouge_tokens(r);
        double want = f1_from_lcs(lcs_table(tc, tr), tc.size(), tr.size());
        CHECK(rouge_l(c, r) == want); // exact, not approximate
    }
}

TEST_CASE("max_similarity returns the arg-max id with lexicographic ties") {
    std::vector<InstructionExample> pool(3);
    pool[0].id = "b";
    pool[0].instruction = "copy the text";
    pool[1].id = "a";
    pool[1].instruction = "copy the text";
    pool[2].id = "c";
    pool[2].instruction = "unrelated words here";
    SimilarityHit hit = max_similarity("copy the text", pool);
    CHECK(hit.score == 1.0);
    CHECK(hit.id == "a"); // tie broken toward smaller id
    CHECK_THROWS_AS(max_similarity("x", {}), Error);
}

TEST_CASE("generation keeps only sufficiently novel instructions") {
    SyntheticWorld world = make_world(1, 420, 24);
    SyntheticTeacher teacher(world.languages, SynthJudge::marker_count, 17);
    const auto& seeds = world.seeds.at("qa");

    GenBatchConfig cfg;
    cfg.target_count = 8;
    cfg.seed = 99;
    GenerationResult res = generate_instructions(teacher, seeds, seeds, cfg);
    CHECK_FALSE(res.teacher_failed);
    REQUIRE(res.accepted.size() == 8);
    CHECK_FALSE(res.decision_log.empty());

    // novelty: every accepted instruction clears the threshold against the
    // conditioning pool and everything accepted before it
    std::vector<InstructionExample> ref = seeds;
    for (const InstructionExample& ex : res.accepted) {
        CHECK(max_similarity(ex.instruction, ref).score < cfg.rouge_threshold);
        ref.push_back(ex);
    }
    for (const InstructionExample& ex : res.accepted) {
        CHECK(ex.origin == Origin::generated);
        CHECK(ex.lang == "qa");
        CHECK_FALSE(ex.instruction.empty());
    }

    // determinism
    GenerationResult res2 = generate_instructions(teacher, seeds, seeds, cfg);
    REQUIRE(res2.accepted.size() == res.accepted.size());
    for (size_t i = 0; i < res.accepted.size(); ++i)
        CHECK(res2.accepted[i].instruction == res.accepted[i].instruction);
}

TEST_CASE("a cramped task space exhausts the round budget instead of looping") {
    SyntheticWorld world = make_world(1, 77, 24);
    // tiny word pool makes every candidate a near-duplicate
    SyntheticTeacher teacher(world.languages, SynthJudge::marker_count, 18,
                             /*gen_word_pool_cap=*/2);
    const auto& seeds = world.seeds.at("qa");

    GenBatchConfig cfg;
    cfg.target_count = 200;
    cfg.max_rounds_per_target = 3;
    cfg.seed = 7;
    GenerationResult res = generate_instructions(teacher, seeds, seeds, cfg);
    CHECK(res.accepted.size() < 200); // budget ran out, loop still terminated
}

TEST_CASE("flipped retention keeps near-duplicates instead") {
    SyntheticWorld world = make_world(1, 55, 24);
    SyntheticTeacher teacher(world.languages, SynthJudge::marker_count, 19);
    const auto& seeds = world.seeds.at("qa");

    GenBatchConfig cfg;
    cfg.target_count = 6;
    cfg.retain_above = true;
    cfg.rouge_threshold = 0.3;
    cfg.max_rounds_per_target = 40;
    cfg.seed = 8;
    GenerationResult res = generate_instructions(teacher, seeds, seeds, cfg);
    std::vector<InstructionExample> ref = seeds;
    for (const InstructionExample& ex : res.accepted) {
        CHECK(max_similarity(ex.instruction, ref).score >= cfg.rouge_threshold);
        ref.push_back(ex);
    }
}
