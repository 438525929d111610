#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "okapi/corpus.hpp"
#include "okapi/evalharness.hpp"
#include "okapi/language.hpp"
#include "okapi/teacher.hpp"
#include "okapi/util.hpp"

namespace okapi {

// A toy language: a bijection over printable bytes 32..126 (identity
// elsewhere). The marker symbol '*' maps through the permutation like any
// other byte, so every language has its own marker glyph.
struct SyntheticLanguage {
    Language lang;
    std::array<unsigned char, 256> map{};
    std::array<unsigned char, 256> inv{};

    std::string apply(const std::string& text) const;
    std::string invert(const std::string& text) const;
    char marker() const { return static_cast<char>(map[static_cast<size_t>('*')]); }
};

struct SyntheticWorld {
    std::vector<SyntheticLanguage> languages; // [0] is the identity base language
    std::map<std::string, std::vector<InstructionExample>> seeds;   // >= 20 per language
    std::map<std::string, std::vector<InstructionExample>> corpora; // remapped base corpus

    const SyntheticLanguage& language(const std::string& code) const;
    std::vector<Language> registry() const;
};

// Deterministic world: identity base language plus n_languages-1 permuted
// ones whose declared data ratios cycle through the M/L/H categories, a
// base corpus of task triples, and its per-language remaps.
SyntheticWorld make_world(int n_languages, uint64_t seed, int base_corpus_size = 158);

// One base-language task triple. word_pool_cap < full pool shrinks the
// parameter space to force near-duplicates.
InstructionExample synth_task(Rng& rng, int word_pool_cap = 0);

enum class SynthJudge { length_sort, marker_count, seeded_random };
enum class OracleKind { marker_count, length_band, judge_agreement };

struct OracleReward {
    OracleKind kind = OracleKind::marker_count;
    char marker = '*';            // counted byte for marker_count
    int band_lo = 5, band_hi = 10; // inclusive byte-length band
    SynthJudge judge = SynthJudge::marker_count; // for judge_agreement

    double score(const std::string& prompt, const std::string& response) const;
};

// Stand-in for the external teacher: answers instruction-generation prompts
// with fresh tasks, translation prompts with the byte remap, and the
// two-turn ranking dialog with a configurable judge. Pure function of
// (dialog, seed).
class SyntheticTeacher : public TeacherOracle {
public:
    SyntheticTeacher(std::vector<SyntheticLanguage> languages, SynthJudge judge, uint64_t seed,
                     int gen_word_pool_cap = 0, double malformed_rate = 0.0);

    std::string chat(const std::vector<ChatMessage>& dialog) override;
    std::string name() const override { return "synthetic"; }

    // Source-language detection: invert with every registered language and
    // keep the one whose result looks most like base text ([a-z ] share);
    // ties go to the lexicographically smallest code.
    const SyntheticLanguage& detect_language(const std::string& text) const;

private:
    std::string handle_generation(const std::string& prompt) const;
    std::string handle_translation(const std::string& prompt) const;
    std::string handle_rank_turn1(const std::string& prompt) const;
    std::string handle_rank_turn2(const std::vector<ChatMessage>& dialog) const;

    std::vector<SyntheticLanguage> languages_;
    SynthJudge judge_;
    uint64_t seed_;
    int gen_word_pool_cap_;
    double malformed_rate_;
};

// Ranks 4 responses with the judge's comparator (1 = best); ties keep the
// earlier response ahead. Exposed so tests can re-sort independently.
std::array<int, 4> judge_ranks(SynthJudge judge, const std::vector<std::string>& base_responses,
                               uint64_t tie_seed);

// Multiple-choice items whose gold answer is the choice with the most
// marker glyphs, in the given language.
std::vector<EvalItem> make_marker_eval_set(const SyntheticLanguage& lang, int n_items,
                                           uint64_t seed);

} // namespace okapi
