#include "okapi/synth.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "okapi/errors.hpp"
#include "okapi/protocol.hpp"
#include "okapi/selfinstruct.hpp"
#include "okapi/sft.hpp"

using nlohmann::json;

namespace okapi {

std::string SyntheticLanguage::apply(const std::string& text) const {
    std::string out = text;
    for (char& c : out) c = static_cast<char>(map[static_cast<unsigned char>(c)]);
    return out;
}

std::string SyntheticLanguage::invert(const std::string& text) const {
    std::string out = text;
    for (char& c : out) c = static_cast<char>(inv[static_cast<unsigned char>(c)]);
    return out;
}

const SyntheticLanguage& SyntheticWorld::language(const std::string& code) const {
    for (const SyntheticLanguage& l : languages)
        if (l.lang.code == code) return l;
    throw Error("synthetic world has no language '" + code + "'");
}

std::vector<Language> SyntheticWorld::registry() const {
    std::vector<Language> out;
    out.reserve(languages.size());
    for (const SyntheticLanguage& l : languages) out.push_back(l.lang);
    return out;
}

namespace {

const std::vector<std::string>& word_pool() {
    static const std::vector<std::string> words = {
        "ruby",  "stone", "river", "cloud",  "amber", "birch",  "coral", "delta",
        "ember", "fjord", "grove", "heron",  "ivory", "jade",   "khaki", "lotus",
        "maple", "night", "ocean", "pearl",  "quartz", "raven", "slate", "tulip",
        "umber", "viola", "wheat", "xenon",  "yarrow", "zephyr"};
    return words;
}

std::string pick_word(Rng& rng, int cap) {
    const auto& words = word_pool();
    int n = cap > 0 ? std::min(cap, static_cast<int>(words.size()))
                    : static_cast<int>(words.size());
    return words[static_cast<size_t>(rng.uniform_int(n))];
}

std::string pick_phrase(Rng& rng, int cap, int min_words = 2, int max_words = 4) {
    int n = min_words + rng.uniform_int(max_words - min_words + 1);
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += " ";
        out += pick_word(rng, cap);
    }
    return out;
}

std::vector<std::string> phrase_words(const std::string& phrase) {
    return split_ws(phrase);
}

std::string join_with(const std::vector<std::string>& words, const std::string& sep) {
    std::string out;
    for (const std::string& w : words) {
        if (!out.empty()) out += sep;
        out += w;
    }
    return out;
}

// Text transforms shared by the task generator; op 0 is identity.
std::string apply_op(int op, const std::string& text, int n) {
    std::vector<std::string> words = phrase_words(text);
    switch (op) {
    case 1: return text + " " + std::string(static_cast<size_t>(n), '*');
    case 2: {
        std::string out;
        for (const std::string& w : words) {
            if (!out.empty()) out += " ";
            out += w + " *";
        }
        return out;
    }
    case 3: return words.front();
    case 4: return words.back();
    case 5: return join_with(words, "-");
    case 6: return "(" + text + ")";
    case 7: return text + " " + text;
    case 8: std::sort(words.begin(), words.end()); return join_with(words, " ");
    case 9: std::reverse(words.begin(), words.end()); return join_with(words, " ");
    default: return text;
    }
}

std::string lead_clause(int op, const std::string& p, int n) {
    switch (op) {
    case 1: return "Append " + std::to_string(n) + " marker symbols * to the words '" + p + "'";
    case 2: return "Put a marker symbol * after each of the words '" + p + "'";
    case 3: return "Output the first word of '" + p + "'";
    case 4: return "Output the last word of '" + p + "'";
    case 5: return "Join the words '" + p + "' with hyphens";
    case 6: return "Wrap the words '" + p + "' in parentheses";
    case 7: return "Write the words '" + p + "' twice with a space between";
    case 8: return "Sort the words '" + p + "' alphabetically";
    case 9: return "Reverse the order of the words '" + p + "'";
    default: return "Write the words '" + p + "' exactly";
    }
}

std::string then_clause(int op, int n) {
    switch (op) {
    case 1: return "then append " + std::to_string(n) + " marker symbols *";
    case 2: return "then put a marker symbol * after each word";
    case 3: return "then keep only the first word";
    case 4: return "then keep only the last word";
    case 5: return "then join the words with hyphens";
    case 6: return "then wrap the result in parentheses";
    case 7: return "then write the result twice with a space between";
    case 8: return "then sort the words alphabetically";
    default: return "then reverse the word order";
    }
}

} // namespace

InstructionExample synth_task(Rng& rng, int word_pool_cap) {
    InstructionExample ex;
    ex.id = "task";
    ex.lang = "qa";
    ex.origin = Origin::generated;
    const int op1 = rng.uniform_int(10);
    const int n1 = 2 + rng.uniform_int(3);
    const std::string p = pick_phrase(rng, word_pool_cap, 3, 3);
    ex.instruction = lead_clause(op1, p, n1);
    std::string out = apply_op(op1, p, n1);
    if (rng.uniform() < 0.6) {
        int op2 = 1 + rng.uniform_int(9);
        if (op2 == op1) op2 = op2 % 9 + 1;
        const int n2 = 2 + rng.uniform_int(3);
        ex.instruction += ", " + then_clause(op2, n2);
        out = apply_op(op2, out, n2);
    }
    ex.instruction += ".";
    ex.output = out;
    return ex;
}

namespace {

SyntheticLanguage make_synth_language(const std::string& code, const std::string& name,
                                      double ratio, uint64_t perm_seed, bool identity) {
    SyntheticLanguage s;
    s.lang = make_language(code, name, ratio);
    for (int i = 0; i < 256; ++i) s.map[static_cast<size_t>(i)] = static_cast<unsigned char>(i);
    if (!identity) {
        Rng rng(perm_seed);
        for (int i = 126; i > 32; --i) {
            int j = 32 + rng.uniform_int(i - 32 + 1);
            std::swap(s.map[static_cast<size_t>(i)], s.map[static_cast<size_t>(j)]);
        }
    }
    for (int i = 0; i < 256; ++i) s.inv[s.map[static_cast<size_t>(i)]] = static_cast<unsigned char>(i);
    return s;
}

InstructionExample remap_example(const SyntheticLanguage& lang, const InstructionExample& ex,
                                 Origin origin) {
    InstructionExample out = ex;
    out.lang = lang.lang.code;
    out.origin = origin;
    out.instruction = lang.apply(ex.instruction);
    out.input = lang.apply(ex.input);
    out.output = lang.apply(ex.output);
    return out;
}

} // namespace

SyntheticWorld make_world(int n_languages, uint64_t seed, int base_corpus_size) {
    if (n_languages < 1) throw Error("make_world: need at least 1 language");
    if (n_languages > 26) throw Error("make_world: at most 26 languages");
    if (base_corpus_size < 3) throw Error("make_world: base corpus too small");

    SyntheticWorld world;
    const double h_ratios[] = {2.0, 1.5, 3.2};
    const double m_ratios[] = {0.5, 0.3, 0.17};
    const double l_ratios[] = {0.05, 0.022, 0.034};
    for (int i = 0; i < n_languages; ++i) {
        std::string code = std::string("q") + static_cast<char>('a' + i);
        std::string name = std::string(1, static_cast<char>('Q')) + static_cast<char>('a' + i);
        double ratio;
        if (i == 0)
            ratio = 40.0;
        else if (i % 3 == 1)
            ratio = m_ratios[(i / 3) % 3];
        else if (i % 3 == 2)
            ratio = l_ratios[(i / 3) % 3];
        else
            ratio = h_ratios[(i / 3) % 3];
        world.languages.push_back(make_synth_language(
            code, name, ratio, Rng::mix(seed, 1000 + static_cast<uint64_t>(i)), i == 0));
    }

    Rng corpus_rng(Rng::mix(seed, 1));
    std::vector<InstructionExample> base;
    for (int k = 0; k < base_corpus_size; ++k) {
        InstructionExample ex = synth_task(corpus_rng);
        char id[16];
        std::snprintf(id, sizeof id, "task-%04d", k + 1);
        ex.id = id;
        ex.lang = world.languages[0].lang.code;
        base.push_back(std::move(ex));
    }

    Rng seed_rng(Rng::mix(seed, 2));
    std::vector<InstructionExample> base_seeds;
    for (int k = 0; k < 20; ++k) {
        InstructionExample ex = synth_task(seed_rng);
        ex.origin = Origin::seed;
        ex.lang = world.languages[0].lang.code;
        base_seeds.push_back(std::move(ex));
    }

    for (const SyntheticLanguage& lang : world.languages) {
        const bool is_base = lang.lang.code == world.languages[0].lang.code;
        std::vector<InstructionExample> corpus;
        corpus.reserve(base.size());
        for (const InstructionExample& ex : base)
            corpus.push_back(is_base ? ex
                                     : remap_example(lang, ex, Origin::translated));
        world.corpora[lang.lang.code] = std::move(corpus);

        std::vector<InstructionExample> seeds;
        for (size_t k = 0; k < base_seeds.size(); ++k) {
            InstructionExample ex =
                is_base ? base_seeds[k] : remap_example(lang, base_seeds[k], Origin::seed);
            char id[48];
            std::snprintf(id, sizeof id, "seed-%s-%02zu", lang.lang.code.c_str(), k + 1);
            ex.id = id;
            seeds.push_back(std::move(ex));
        }
        world.seeds[lang.lang.code] = std::move(seeds);
    }
    return world;
}

double OracleReward::score(const std::string& prompt, const std::string& response) const {
    (void)prompt;
    switch (kind) {
    case OracleKind::marker_count:
        return static_cast<double>(std::count(response.begin(), response.end(), marker));
    case OracleKind::length_band:
        return response.size() >= static_cast<size_t>(band_lo) &&
                       response.size() <= static_cast<size_t>(band_hi)
                   ? 1.0
                   : 0.0;
    case OracleKind::judge_agreement:
        switch (judge) {
        case SynthJudge::length_sort: return static_cast<double>(response.size());
        case SynthJudge::marker_count:
            return static_cast<double>(std::count(response.begin(), response.end(), marker));
        case SynthJudge::seeded_random: return 0.0;
        }
    }
    throw Error("unknown oracle kind");
}

std::array<int, 4> judge_ranks(SynthJudge judge, const std::vector<std::string>& base_responses,
                               uint64_t tie_seed) {
    if (base_responses.size() != 4) throw Error("judge_ranks: need 4 responses");
    std::array<int, 4> order = {0, 1, 2, 3};
    if (judge == SynthJudge::seeded_random) {
        Rng rng(tie_seed);
        for (int i = 3; i > 0; --i) {
            int j = rng.uniform_int(i + 1);
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
    } else {
        std::array<double, 4> key{};
        for (size_t i = 0; i < 4; ++i) {
            const std::string& r = base_responses[i];
            key[i] = judge == SynthJudge::length_sort
                         ? static_cast<double>(r.size())
                         : static_cast<double>(std::count(r.begin(), r.end(), '*'));
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return key[static_cast<size_t>(a)] >
                                                    key[static_cast<size_t>(b)]; });
    }
    std::array<int, 4> ranks{};
    for (int pos = 0; pos < 4; ++pos)
        ranks[static_cast<size_t>(order[static_cast<size_t>(pos)])] = pos + 1;
    return ranks;
}

SyntheticTeacher::SyntheticTeacher(std::vector<SyntheticLanguage> languages, SynthJudge judge,
                                   uint64_t seed, int gen_word_pool_cap, double malformed_rate)
    : languages_(std::move(languages)), judge_(judge), seed_(seed),
      gen_word_pool_cap_(gen_word_pool_cap), malformed_rate_(malformed_rate) {
    if (languages_.empty()) throw Error("synthetic teacher needs at least one language");
}

const SyntheticLanguage& SyntheticTeacher::detect_language(const std::string& text) const {
    const SyntheticLanguage* best = nullptr;
    double best_score = -1.0;
    for (const SyntheticLanguage& lang : languages_) {
        std::string cand = lang.invert(text);
        size_t good = 0;
        for (char c : cand)
            if ((c >= 'a' && c <= 'z') || c == ' ') ++good;
        double score = cand.empty() ? 0.0 : static_cast<double>(good) / cand.size();
        if (!best || score > best_score ||
            (score == best_score && lang.lang.code < best->lang.code)) {
            best = &lang;
            best_score = score;
        }
    }
    return *best;
}

std::string SyntheticTeacher::handle_generation(const std::string& prompt) const {
    Rng rng(Rng::mix(seed_, fnv1a64(prompt.data(), prompt.size())));
    InstructionExample task = synth_task(rng, gen_word_pool_cap_);
    return "Instruction: " + task.instruction + "\nInput: " + input_to_disk(task.input) +
           "\nOutput: " + task.output;
}

std::string SyntheticTeacher::handle_translation(const std::string& prompt) const {
    std::string target_name = translation_target_name(prompt);
    const SyntheticLanguage* target = nullptr;
    for (const SyntheticLanguage& lang : languages_)
        if (lang.lang.name == target_name) target = &lang;
    if (!target) throw ProtocolError("synthetic teacher knows no language named " + target_name);

    PromptObject obj = parse_prompt_object(prompt);
    const SyntheticLanguage& source = detect_language(obj.instruction);
    json reply;
    reply["instruction"] = target->apply(source.invert(obj.instruction));
    reply["input"] = target->apply(source.invert(obj.input));
    reply["output"] = target->apply(source.invert(obj.output));
    return reply.dump(2);
}

std::string SyntheticTeacher::handle_rank_turn1(const std::string& prompt) const {
    RankingTurn1 parsed = parse_ranking_turn1(prompt);
    const SyntheticLanguage& source = detect_language(parsed.instruction);
    std::string out = "Instruction: " + source.invert(parsed.instruction) + "\n";
    std::string input = source.invert(parsed.input);
    out += "Input: " + (input.empty() ? std::string("<empty>") : input);
    for (size_t i = 0; i < parsed.responses.size(); ++i)
        out += "\nResponse " + std::to_string(i + 1) + ": " + source.invert(parsed.responses[i]);
    return out;
}

std::string SyntheticTeacher::handle_rank_turn2(const std::vector<ChatMessage>& dialog) const {
    const ChatMessage* turn1 = nullptr;
    for (const ChatMessage& m : dialog)
        if (m.role == "user" && is_ranking_turn1(m.content)) turn1 = &m;
    if (!turn1) throw ProtocolError("ranking turn 2 without a preceding turn 1");

    std::string transcript;
    for (const ChatMessage& m : dialog) transcript += m.role + "\x1f" + m.content + "\x1e";

    if (malformed_rate_ > 0.0) {
        Rng rng(Rng::mix(seed_ ^ 0x6d616c666f726dULL,
                         fnv1a64(transcript.data(), transcript.size())));
        if (rng.uniform() < malformed_rate_)
            return "I believe the second response is the strongest overall.";
    }

    RankingTurn1 parsed = parse_ranking_turn1(turn1->content);
    const SyntheticLanguage& source = detect_language(parsed.instruction);
    std::vector<std::string> base_responses;
    for (const std::string& r : parsed.responses) base_responses.push_back(source.invert(r));

    std::array<int, 4> ranks = judge_ranks(
        judge_, base_responses,
        Rng::mix(seed_, fnv1a64(turn1->content.data(), turn1->content.size())));
    return render_rank_output(ranks, true);
}

std::string SyntheticTeacher::chat(const std::vector<ChatMessage>& dialog) {
    if (dialog.empty() || dialog.back().role != "user")
        throw ProtocolError("synthetic teacher expects a trailing user message");
    const std::string& prompt = dialog.back().content;
    if (is_generation_prompt(prompt)) return handle_generation(prompt);
    if (is_translation_prompt(prompt)) return handle_translation(prompt);
    if (is_ranking_turn1(prompt)) return handle_rank_turn1(prompt);
    if (is_ranking_turn2(prompt)) return handle_rank_turn2(dialog);
    throw ProtocolError("synthetic teacher cannot answer: " + prompt.substr(0, 80));
}

std::vector<EvalItem> make_marker_eval_set(const SyntheticLanguage& lang, int n_items,
                                           uint64_t seed) {
    if (n_items <= 0) throw Error("make_marker_eval_set: n_items must be positive");
    Rng rng(Rng::mix(seed, 77));
    PromptFormat fmt;
    std::vector<EvalItem> items;
    const int counts[4] = {0, 1, 2, 4};
    for (int k = 0; k < n_items; ++k) {
        std::string phrase = pick_phrase(rng, 0, 1, 2);
        InstructionExample ex;
        ex.instruction =
            lang.apply("Append as many marker symbols * as you can to the words '" + phrase + "'.");

        std::array<int, 4> order = {0, 1, 2, 3};
        for (int i = 3; i > 0; --i) {
            int j = rng.uniform_int(i + 1);
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        EvalItem item;
        item.id = "marker-mc-" + std::to_string(k + 1);
        item.lang = lang.lang.code;
        item.dataset = EvalDataset::custom;
        item.context = fmt.render_prompt(ex);
        int gold = 0, best = -1;
        for (int pos = 0; pos < 4; ++pos) {
            int c = counts[order[static_cast<size_t>(pos)]];
            std::string choice = phrase;
            if (c > 0) choice += " " + std::string(static_cast<size_t>(c), '*');
            item.choices.push_back(lang.apply(choice));
            if (c > best) {
                best = c;
                gold = pos;
            }
        }
        item.gold_index = gold;
        item.validate();
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace okapi
