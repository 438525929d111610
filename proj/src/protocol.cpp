#include "okapi/protocol.hpp"

#include <set>

#include "json.hpp"
#include "okapi/errors.hpp"
#include "okapi/model.hpp"
#include "okapi/tokenizer.hpp"
#include "okapi/util.hpp"

using nlohmann::json;

namespace okapi {

namespace {

const char* kTranslationInstructions =
    "Translate the values in the following JSON object into <target language> language. You "
    "must keep the keys in the JSON object in English. If a value contains programming code, "
    "only translate the comments while preserving the code. Your translations must convey all "
    "the content in the original text and cannot involve explanations or other unnecessary "
    "information. Please ensure that the translated text is natural for native speakers with "
    "correct grammar and proper word choices. Your translation must also use exact terminology "
    "to provide accurate information even for the experts in the related fields. Your output "
    "must only contain a JSON object with translated text and cannot include explanations or "
    "other information.";

const char* kRankingTurn1Preamble =
    "You will be given an instruction, an input for the instruction, and four possible "
    "responses for the instruction. The input can be empty, shown as <empty>. You need to "
    "translate the provided instruction, input, and responses into English.";

const char* kRankingTurn2 =
    "Given the translated instruction, input, and responses, you will need to rank the "
    "responses according to three factors: correctness with respect to the instruction and "
    "input, coherence, and naturalness.\n"
    "You will need to provide an overall rank for each response when all the three factors are "
    "considered. The overall rank for a response must be an integer between 1 and 4 where 1 is "
    "for the best response and 4 is the worst response. You cannot assign the same rank for two "
    "different responses.\n"
    "The format of your output must be: for each response: \"<Response r>: overall rank: "
    "<1/2/3/4>\". The responses must be in original order. Do not include explanation in your "
    "output.";

} // namespace

bool is_translation_prompt(const std::string& text) {
    return starts_with(text, "Translate the values in the following JSON object into ");
}

std::string translation_target_name(const std::string& text) {
    const std::string head = "Translate the values in the following JSON object into ";
    if (!starts_with(text, head)) throw ProtocolError("not a translation prompt");
    auto end = text.find(" language.", head.size());
    if (end == std::string::npos) throw ProtocolError("translation prompt has no target language");
    return text.substr(head.size(), end - head.size());
}

bool is_ranking_turn1(const std::string& text) {
    return starts_with(text, kRankingTurn1Preamble);
}

bool is_ranking_turn2(const std::string& text) {
    return starts_with(text, "Given the translated instruction, input, and responses,");
}

RankingTurn1 parse_ranking_turn1(const std::string& turn1) {
    // Accepts both the prompt (with preamble) and a teacher reply in the same
    // body layout. Line-oriented, but response text may span lines: a new
    // field only starts at one of the known prefixes.
    RankingTurn1 out;
    std::string* active = nullptr;
    bool seen_instruction = false, seen_input = false;
    std::string body =
        is_ranking_turn1(turn1) ? turn1.substr(std::string(kRankingTurn1Preamble).size()) : turn1;
    for (const std::string& line : split_lines(body)) {
        if (!seen_instruction && starts_with(line, "Instruction: ")) {
            out.instruction = line.substr(13);
            active = &out.instruction;
            seen_instruction = true;
        } else if (seen_instruction && !seen_input && starts_with(line, "Input: ")) {
            out.input = line.substr(7);
            active = &out.input;
            seen_input = true;
        } else if (seen_input && out.responses.size() < 4 && starts_with(line, "Response ") &&
                   line.size() > 11 &&
                   line[9] == static_cast<char>('1' + out.responses.size()) &&
                   line.compare(10, 2, ": ") == 0) {
            out.responses.push_back(line.substr(12));
            active = &out.responses.back();
        } else if (active) {
            *active += "\n" + line;
        } else if (!trim(line).empty()) {
            throw ProtocolError("unexpected text before Instruction: " + line);
        }
    }
    if (!seen_instruction || !seen_input || out.responses.size() != 4)
        throw ProtocolError("ranking turn 1 needs Instruction, Input and 4 responses");
    if (out.input == "<empty>") out.input.clear();
    return out;
}

std::string build_translation_prompt(const Language& target, const InstructionExample& record) {
    if (target.name.empty()) throw Error("language has no name: " + target.code);
    std::string head = replace_all(kTranslationInstructions, "<target language>", target.name);
    json obj;
    obj["instruction"] = record.instruction;
    obj["input"] = record.input;
    obj["output"] = record.output;
    return head + "\n\n" + obj.dump(2);
}

PromptObject parse_prompt_object(const std::string& text) {
    auto brace = text.find('{');
    if (brace == std::string::npos)
        throw ProtocolError("no JSON object found in text: " + text.substr(0, 120));
    json obj;
    try {
        obj = json::parse(text.substr(brace));
    } catch (const json::exception& e) {
        throw ProtocolError("malformed JSON object: " + std::string(e.what()) +
                            "; text: " + text.substr(0, 120));
    }
    PromptObject out;
    for (const char* key : {"instruction", "input", "output"}) {
        if (!obj.contains(key) || !obj.at(key).is_string())
            throw ProtocolError("object is missing string key '" + std::string(key) +
                                "'; text: " + text.substr(0, 120));
    }
    out.instruction = obj.at("instruction").get<std::string>();
    out.input = obj.at("input").get<std::string>();
    out.output = obj.at("output").get<std::string>();
    return out;
}

InstructionExample translate_record(TeacherOracle& teacher, const Language& target,
                                    const InstructionExample& record) {
    std::string prompt = build_translation_prompt(target, record);
    std::string reply = teacher.chat({{"user", prompt}});
    PromptObject obj;
    try {
        obj = parse_prompt_object(reply);
    } catch (const ProtocolError& e) {
        throw ProtocolError(std::string("translate_record '") + record.id + "': " + e.what() +
                            "\n--- prompt ---\n" + prompt + "\n--- reply ---\n" + reply);
    }
    InstructionExample out = record;
    out.lang = target.code;
    out.origin = Origin::translated;
    out.instruction = obj.instruction;
    out.input = obj.input;
    out.output = obj.output;
    return out;
}

std::vector<InstructionExample> translate_corpus(TeacherOracle& teacher, const Language& target,
                                                 const std::vector<InstructionExample>& records) {
    std::vector<InstructionExample> out;
    out.reserve(records.size());
    for (const InstructionExample& r : records) out.push_back(translate_record(teacher, target, r));
    return out;
}

std::pair<std::string, std::string> build_ranking_dialog(
    const InstructionExample& base, const std::vector<std::string>& responses) {
    if (responses.size() != 4)
        throw ProtocolError("ranking dialog needs exactly 4 responses, got " +
                            std::to_string(responses.size()));
    std::string turn1 = std::string(kRankingTurn1Preamble) + "\n\n";
    turn1 += "Instruction: " + base.instruction + "\n";
    turn1 += "Input: " + (base.input.empty() ? std::string("<empty>") : base.input) + "\n";
    for (int i = 0; i < 4; ++i)
        turn1 += "Response " + std::to_string(i + 1) + ": " + responses[static_cast<size_t>(i)] +
                 (i < 3 ? "\n" : "");
    return {turn1, std::string(kRankingTurn2)};
}

std::array<int, 4> parse_rank_output(const std::string& text) {
    std::vector<std::string> lines;
    for (const std::string& raw : split_lines(text)) {
        std::string t = trim(raw);
        if (!t.empty()) lines.push_back(t);
    }
    if (lines.size() != 4)
        throw ParseError("rank output must have exactly 4 lines, got " +
                         std::to_string(lines.size()) + ": " + text.substr(0, 120));

    std::array<int, 4> ranks{};
    std::set<int> seen;
    for (int i = 0; i < 4; ++i) {
        const std::string& line = lines[static_cast<size_t>(i)];
        std::string expect = "Response " + std::to_string(i + 1) + ": ";
        if (!starts_with(line, expect))
            throw ParseError("expected line " + std::to_string(i + 1) + " to start with '" +
                             expect + "': " + line);
        std::string rest = line.substr(expect.size());
        if (starts_with(rest, "overall rank: ")) rest = rest.substr(14);
        rest = trim(rest);
        if (rest.size() != 1 || rest[0] < '1' || rest[0] > '4')
            throw ParseError("rank out of range 1..4: " + line);
        int r = rest[0] - '0';
        if (!seen.insert(r).second) throw ParseError("duplicate rank: " + line);
        ranks[static_cast<size_t>(i)] = r;
    }
    return ranks;
}

std::string render_rank_output(const std::array<int, 4>& ranks, bool long_form) {
    std::string out;
    for (int i = 0; i < 4; ++i) {
        out += "Response " + std::to_string(i + 1) + ": ";
        if (long_form) out += "overall rank: ";
        out += std::to_string(ranks[static_cast<size_t>(i)]);
        if (i < 3) out += "\n";
    }
    return out;
}

std::optional<RankedResponseSet> produce_ranked_set(TeacherOracle& teacher,
                                                    const InstructionExample& base,
                                                    const PolicyCheckpoint& policy, uint64_t seed,
                                                    const PromptFormat& fmt,
                                                    int max_response_tokens,
                                                    RankProductionStats* stats) {
    if (policy.role != Role::sft)
        throw ProtocolError("ranked responses must come from an sft policy, got role=" +
                            role_to_string(policy.role));

    std::vector<int> prompt = fmt.prompt_tokens(base);
    std::vector<std::string> responses;
    for (int i = 0; i < 4; ++i) {
        std::vector<int> toks = generate(policy, prompt, max_response_tokens, 1.0,
                                         Rng::mix(seed, static_cast<uint64_t>(i)));
        responses.push_back(Tokenizer::decode(toks));
    }

    auto [turn1, turn2] = build_ranking_dialog(base, responses);
    std::vector<ChatMessage> dialog = {{"user", turn1}};
    std::string reply1 = teacher.chat(dialog);
    dialog.push_back({"assistant", reply1});
    dialog.push_back({"user", turn2});
    std::string reply2 = teacher.chat(dialog);

    RankedResponseSet set;
    set.base = base;
    set.responses = responses;
    set.judge_transcript = {turn1, reply1, turn2, reply2};

    std::array<int, 4> ranks{};
    try {
        ranks = parse_rank_output(reply2);
    } catch (const ParseError& first) {
        dialog.push_back({"assistant", reply2});
        dialog.push_back({"user", turn2});
        std::string reply3 = teacher.chat(dialog);
        set.judge_transcript.push_back(reply3);
        try {
            ranks = parse_rank_output(reply3);
        } catch (const ParseError& second) {
            if (stats) {
                ++stats->dropped;
                stats->log.push_back("drop id=" + base.id + " first=[" + first.what() +
                                     "] reask=[" + second.what() + "]");
            }
            return std::nullopt;
        }
    }
    set.ranks.assign(ranks.begin(), ranks.end());
    std::set<std::string> distinct(responses.begin(), responses.end());
    set.ties_possible = distinct.size() < responses.size();
    set.validate();
    if (stats) {
        ++stats->produced;
        stats->log.push_back("rank id=" + base.id + " ranks=" + std::to_string(ranks[0]) +
                             std::to_string(ranks[1]) + std::to_string(ranks[2]) +
                             std::to_string(ranks[3]) +
                             (set.ties_possible ? " ties_possible" : ""));
    }
    return set;
}

} // namespace okapi
