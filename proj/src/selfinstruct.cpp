#include "okapi/selfinstruct.hpp"

#include <algorithm>
#include <sstream>

#include "okapi/errors.hpp"
#include "okapi/rouge.hpp"
#include "okapi/util.hpp"

namespace okapi {

namespace {

const char* kGenerationPreamble =
    "You are asked to come up with one new task for a text model. Here are some example tasks.";

const char* kGenerationCoda =
    "Write one new task that is different from every example. Answer in exactly this format:\n"
    "Instruction: ...\n"
    "Input: ...\n"
    "Output: ...\n"
    "Use <empty> for Input when the task needs no input.";

} // namespace

std::string build_generation_prompt(const std::vector<InstructionExample>& incontext) {
    if (incontext.empty()) throw Error("generation prompt needs at least one in-context example");
    std::ostringstream out;
    out << kGenerationPreamble << "\n";
    for (size_t i = 0; i < incontext.size(); ++i) {
        const InstructionExample& ex = incontext[i];
        out << "\nTask " << (i + 1) << ":\n";
        out << "Instruction: " << ex.instruction << "\n";
        out << "Input: " << input_to_disk(ex.input) << "\n";
        out << "Output: " << ex.output << "\n";
    }
    out << "\n" << kGenerationCoda;
    return out.str();
}

bool is_generation_prompt(const std::string& text) {
    return starts_with(text, kGenerationPreamble);
}

std::optional<InstructionExample> parse_generated_task(const std::string& reply) {
    InstructionExample ex;
    bool has_instruction = false, has_input = false, has_output = false;
    for (const std::string& line : split_lines(reply)) {
        if (!has_instruction && starts_with(line, "Instruction: ")) {
            ex.instruction = trim(line.substr(13));
            has_instruction = true;
        } else if (has_instruction && !has_input && starts_with(line, "Input: ")) {
            ex.input = input_from_disk(trim(line.substr(7)));
            has_input = true;
        } else if (has_input && !has_output && starts_with(line, "Output: ")) {
            ex.output = trim(line.substr(8));
            has_output = true;
        }
    }
    if (!has_instruction || !has_input || !has_output || ex.instruction.empty() ||
        ex.output.empty())
        return std::nullopt;
    ex.origin = Origin::generated;
    return ex;
}

GenerationResult generate_instructions(TeacherOracle& teacher,
                                       const std::vector<InstructionExample>& seeds,
                                       const std::vector<InstructionExample>& conditioning_pool,
                                       const GenBatchConfig& cfg) {
    if (seeds.empty()) throw Error("generate_instructions: no seeds");
    if (cfg.target_count <= 0) throw Error("generate_instructions: target_count must be positive");
    if (cfg.rouge_threshold <= 0.0 || cfg.rouge_threshold > 1.0)
        throw Error("generate_instructions: rouge_threshold must be in (0, 1]");

    GenerationResult result;
    Rng rng(cfg.seed);
    const std::string lang = seeds.front().lang;
    const long max_rounds =
        static_cast<long>(cfg.target_count) * std::max(1, cfg.max_rounds_per_target);

    for (long round = 0; round < max_rounds &&
                         static_cast<int>(result.accepted.size()) < cfg.target_count;
         ++round) {
        std::vector<const InstructionExample*> pool;
        for (const InstructionExample& ex : seeds) pool.push_back(&ex);
        for (const InstructionExample& ex : result.accepted) pool.push_back(&ex);

        const int k = std::min<int>(cfg.n_incontext, static_cast<int>(pool.size()));
        std::vector<InstructionExample> incontext;
        for (int i = 0; i < k; ++i) {
            size_t j = static_cast<size_t>(i) +
                       rng.uniform_int(static_cast<uint64_t>(pool.size() - static_cast<size_t>(i)));
            std::swap(pool[static_cast<size_t>(i)], pool[j]);
            incontext.push_back(*pool[static_cast<size_t>(i)]);
        }

        std::string reply;
        try {
            reply = teacher.chat({{"user", build_generation_prompt(incontext)}});
        } catch (const std::exception& e) {
            result.teacher_failed = true;
            result.decision_log.push_back("abort round=" + std::to_string(round) +
                                          " teacher failure: " + e.what());
            break;
        }

        std::optional<InstructionExample> cand = parse_generated_task(reply);
        if (!cand) {
            result.decision_log.push_back("skip round=" + std::to_string(round) +
                                          " unparseable reply: " + reply.substr(0, 80));
            continue;
        }

        std::vector<InstructionExample> against = conditioning_pool;
        against.insert(against.end(), result.accepted.begin(), result.accepted.end());
        double score = 0.0;
        std::string blocker = "(empty pool)";
        if (!against.empty()) {
            SimilarityHit hit = max_similarity(cand->instruction, against);
            score = hit.score;
            blocker = hit.id;
        }
        const bool novel = cfg.retain_above ? score >= cfg.rouge_threshold
                                            : score < cfg.rouge_threshold;
        std::ostringstream line;
        line << (novel ? "accept" : "reject") << " round=" << round << " sim=" << score
             << " nearest=" << blocker << " instruction=" << cand->instruction;
        result.decision_log.push_back(line.str());
        if (!novel) continue;

        cand->id = "gen-" + std::to_string(result.accepted.size() + 1);
        cand->lang = lang;
        result.accepted.push_back(std::move(*cand));
    }
    return result;
}

} // namespace okapi
