#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "okapi/corpus.hpp"
#include "okapi/teacher.hpp"

namespace okapi {

struct GenBatchConfig {
    int n_incontext = 3;
    double rouge_threshold = 0.7;
    bool retain_above = false; // novelty sense flipped, for comparison runs
    int target_count = 0;
    int max_rounds_per_target = 25; // teacher-exhaustion cap
    uint64_t seed = 0;
};

// The in-context generation request sent to the teacher.
std::string build_generation_prompt(const std::vector<InstructionExample>& incontext);
bool is_generation_prompt(const std::string& text);

// Pulls {instruction, input, output} out of a teacher reply in the
// generation format; nullopt when the reply does not parse.
std::optional<InstructionExample> parse_generated_task(const std::string& reply);

struct GenerationResult {
    std::vector<InstructionExample> accepted;
    std::vector<std::string> decision_log; // one line per accept/reject/skip
    bool teacher_failed = false;
};

// Self-instruct loop: sample in-context examples from seeds plus accepted,
// ask the teacher for a new task, keep it when its max similarity against
// conditioning_pool plus accepted stays below the threshold. Stops at
// target_count, the round cap, or teacher failure (partial results are
// returned either way).
GenerationResult generate_instructions(TeacherOracle& teacher,
                                       const std::vector<InstructionExample>& seeds,
                                       const std::vector<InstructionExample>& conditioning_pool,
                                       const GenBatchConfig& cfg);

} // namespace okapi
