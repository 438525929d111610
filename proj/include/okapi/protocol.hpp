#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "okapi/checkpoint.hpp"
#include "okapi/corpus.hpp"
#include "okapi/language.hpp"
#include "okapi/sft.hpp"
#include "okapi/teacher.hpp"

namespace okapi {

// Single-turn translation prompt: fixed instructions plus the record as a
// JSON object with keys {instruction, input, output}. An empty input stays
// "" here; the "<empty>" marker belongs to the ranking dialog only.
std::string build_translation_prompt(const Language& target, const InstructionExample& record);

// Extracts the {instruction, input, output} object embedded in a prompt or
// teacher reply. Throws ProtocolError when keys are missing or non-string.
struct PromptObject {
    std::string instruction;
    std::string input;
    std::string output;
};
PromptObject parse_prompt_object(const std::string& text);

// Prompt-shape probes, used by the synthetic teacher to dispatch and by
// tests. translation_target_name pulls the language name out of "into X
// language.".
bool is_translation_prompt(const std::string& text);
std::string translation_target_name(const std::string& text);
bool is_ranking_turn1(const std::string& text);
bool is_ranking_turn2(const std::string& text);

struct RankingTurn1 {
    std::string instruction;
    std::string input; // "" when the dialog showed "<empty>"
    std::vector<std::string> responses;
};
RankingTurn1 parse_ranking_turn1(const std::string& turn1);

InstructionExample translate_record(TeacherOracle& teacher, const Language& target,
                                    const InstructionExample& record);
std::vector<InstructionExample> translate_corpus(TeacherOracle& teacher, const Language& target,
                                                 const std::vector<InstructionExample>& records);

// Two-turn judging dialog. Turn 1 asks for an English translation of the
// instruction, input (or "<empty>") and the four responses; turn 2 asks for
// the ranking.
std::pair<std::string, std::string> build_ranking_dialog(const InstructionExample& base,
                                                         const std::vector<std::string>& responses);

// Parses "Response k: r" / "Response k: overall rank: r" lines, k = 1..4 in
// order, into a permutation of 1..4. ParseError carries the offending line.
std::array<int, 4> parse_rank_output(const std::string& text);

// The example-output surface form ("Response 1: 3"), or the long form with
// "overall rank:" when long_form is set.
std::string render_rank_output(const std::array<int, 4>& ranks, bool long_form = false);

struct RankProductionStats {
    int produced = 0;
    int dropped = 0;
    std::vector<std::string> log;
};

// Samples 4 responses from the sft policy at temperature 1 (distinct
// sub-seeds), runs the two-turn dialog, parses ranks with one re-ask on
// parse failure, then drops. nullopt means dropped (logged in stats).
std::optional<RankedResponseSet> produce_ranked_set(TeacherOracle& teacher,
                                                    const InstructionExample& base,
                                                    const PolicyCheckpoint& policy, uint64_t seed,
                                                    const PromptFormat& fmt,
                                                    int max_response_tokens,
                                                    RankProductionStats* stats = nullptr);

} // namespace okapi
