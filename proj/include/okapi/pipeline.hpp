#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "okapi/config.hpp"
#include "okapi/corpus.hpp"
#include "okapi/synth.hpp"

namespace okapi {

// Pool proportions for the SFT / ranking / PPO splits.
struct SplitSpec {
    int sft = 52;
    int rank = 42;
    int ppo = 64;
};

// Largest-remainder allocation of n records across the three pools.
std::array<size_t, 3> split_sizes(size_t n, const SplitSpec& spec);

// Seeded shuffle, then partition into (sft_pool, rank_pool, ppo_pool):
// disjoint, covering, sizes from split_sizes.
std::array<std::vector<InstructionExample>, 3> split_corpus(
    const std::vector<InstructionExample>& corpus, const SplitSpec& spec, uint64_t seed);

// Canonical stage order; every plan runs a subsequence of this.
const std::vector<std::string>& all_stages();

struct RunPlan {
    std::string out_dir;
    uint64_t seed = 0;
    std::vector<std::string> stages; // empty means all
    FlatConfig config;
    bool resume = true; // reuse artifacts whose manifests still match
};

struct StageRun {
    std::string stage;
    bool executed = false;
    double seconds = 0.0;
};

struct RunOutcome {
    std::vector<StageRun> stages;
    std::string report_path;
    // flattened eval-stage summary: oracle_reward.sft, oracle_reward.ppo,
    // acc.<norm>.<model>, acc.<norm>.<model>.<lang>
    std::map<std::string, double> metrics;
};

// Executes the planned stages in order against a synthetic world. Each stage
// writes its artifacts plus a manifest of input hashes; a stage is skipped
// only when resuming, nothing upstream executed, and its manifest still
// matches. Throws on stage failure; completed artifacts stay on disk.
RunOutcome run_plan(const RunPlan& plan);

// Content hash of a file, or of a directory's files (sorted by relative
// path). Used for manifest entries.
std::string fingerprint_path(const std::string& path);

// World persistence: languages.jsonl carries {code, name, ratio, map} where
// map is the 95-char image of bytes 32..126; corpora and seeds use the
// corpus format.
void save_world(const SyntheticWorld& world, const std::string& dir);
SyntheticWorld load_world(const std::string& dir);

SynthJudge judge_from_string(const std::string& name);
std::string judge_to_string(SynthJudge judge);

} // namespace okapi
