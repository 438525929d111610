#include "okapi/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <set>

#include "json.hpp"
#include "okapi/jsonio.hpp"
#include "okapi/checkpoint.hpp"
#include "okapi/errors.hpp"
#include "okapi/evalharness.hpp"
#include "okapi/model.hpp"
#include "okapi/ppo.hpp"
#include "okapi/protocol.hpp"
#include "okapi/reward.hpp"
#include "okapi/selfinstruct.hpp"
#include "okapi/sft.hpp"
#include "okapi/tokenizer.hpp"
#include "okapi/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace okapi {

std::array<size_t, 3> split_sizes(size_t n, const SplitSpec& spec) {
    if (spec.sft <= 0 || spec.rank <= 0 || spec.ppo <= 0)
        throw ConfigError("split spec components must all be positive");
    if (n < 3) throw Error("split_corpus: need at least 3 records, got " + std::to_string(n));
    const double w[3] = {static_cast<double>(spec.sft), static_cast<double>(spec.rank),
                         static_cast<double>(spec.ppo)};
    const double total = w[0] + w[1] + w[2];
    std::array<size_t, 3> sizes{};
    double frac[3];
    size_t used = 0;
    for (int i = 0; i < 3; ++i) {
        double q = static_cast<double>(n) * w[i] / total;
        sizes[static_cast<size_t>(i)] = static_cast<size_t>(q);
        frac[i] = q - static_cast<double>(sizes[static_cast<size_t>(i)]);
        used += sizes[static_cast<size_t>(i)];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (size_t left = n - used, k = 0; k < left; ++k)
        ++sizes[static_cast<size_t>(order[k % 3])];
    return sizes;
}

std::array<std::vector<InstructionExample>, 3> split_corpus(
    const std::vector<InstructionExample>& corpus, const SplitSpec& spec, uint64_t seed) {
    auto sizes = split_sizes(corpus.size(), spec);
    std::vector<size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);

    std::array<std::vector<InstructionExample>, 3> pools;
    size_t cursor = 0;
    for (size_t p = 0; p < 3; ++p) {
        pools[p].reserve(sizes[p]);
        for (size_t k = 0; k < sizes[p]; ++k) pools[p].push_back(corpus[idx[cursor++]]);
    }
    return pools;
}

const std::vector<std::string>& all_stages() {
    static const std::vector<std::string> stages = {"world",       "generate", "translate",
                                                    "sft",         "sample_rank", "reward",
                                                    "ppo",         "eval",     "report"};
    return stages;
}

SynthJudge judge_from_string(const std::string& name) {
    if (name == "length_sort") return SynthJudge::length_sort;
    if (name == "marker_count") return SynthJudge::marker_count;
    if (name == "seeded_random") return SynthJudge::seeded_random;
    throw ConfigError("unknown judge '" + name + "'");
}

std::string judge_to_string(SynthJudge judge) {
    switch (judge) {
    case SynthJudge::length_sort: return "length_sort";
    case SynthJudge::marker_count: return "marker_count";
    case SynthJudge::seeded_random: return "seeded_random";
    }
    throw Error("unknown judge value");
}

std::string fingerprint_path(const std::string& path) {
    if (!fs::exists(path)) throw Error("fingerprint_path: no such path: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_str = [&h](const std::string& s) { h = Rng::mix(h, fnv1a64(s)); };
    if (fs::is_directory(path)) {
        std::vector<std::string> rels;
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file())
                rels.push_back(fs::relative(e.path(), path).generic_string());
        std::sort(rels.begin(), rels.end());
        for (const std::string& r : rels) {
            mix_str(r);
            mix_str(read_file((fs::path(path) / r).string()));
        }
    } else {
        mix_str(read_file(path));
    }
    return hex64(h);
}

void save_world(const SyntheticWorld& world, const std::string& dir) {
    fs::create_directories(dir);
    std::string langs;
    for (const SyntheticLanguage& l : world.languages) {
        std::string map;
        for (int b = 32; b <= 126; ++b)
            map += static_cast<char>(l.map[static_cast<size_t>(b)]);
        json j;
        j["code"] = l.lang.code;
        j["name"] = l.lang.name;
        j["ratio"] = l.lang.cc_ratio_percent;
        j["map"] = map;
        langs += json_line(j) + "\n";
    }
    write_file((fs::path(dir) / "languages.jsonl").string(), langs);
    for (const SyntheticLanguage& l : world.languages) {
        const std::string& code = l.lang.code;
        save_corpus(world.corpora.at(code), (fs::path(dir) / ("corpus." + code + ".jsonl")).string());
        save_corpus(world.seeds.at(code), (fs::path(dir) / ("seeds." + code + ".jsonl")).string());
    }
}

SyntheticWorld load_world(const std::string& dir) {
    const std::string langs_path = (fs::path(dir) / "languages.jsonl").string();
    if (!fs::exists(langs_path)) throw Error("load_world: missing " + langs_path);
    SyntheticWorld world;
    int lineno = 0;
    for (const std::string& line : split_lines(read_file(langs_path))) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(langs_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        SyntheticLanguage l;
        l.lang = make_language(j.at("code").get<std::string>(), j.at("name").get<std::string>(),
                               j.at("ratio").get<double>());
        std::string map = j.at("map").get<std::string>();
        if (map.size() != 95)
            throw ParseError(langs_path + ":" + std::to_string(lineno) +
                             ": map must cover bytes 32..126");
        for (int b = 0; b < 256; ++b) l.map[static_cast<size_t>(b)] = static_cast<unsigned char>(b);
        std::set<unsigned char> seen;
        for (int b = 32; b <= 126; ++b) {
            unsigned char m = static_cast<unsigned char>(map[static_cast<size_t>(b - 32)]);
            if (m < 32 || m > 126 || !seen.insert(m).second)
                throw ParseError(langs_path + ":" + std::to_string(lineno) +
                                 ": map is not a permutation of bytes 32..126");
            l.map[static_cast<size_t>(b)] = m;
        }
        for (int b = 0; b < 256; ++b)
            l.inv[l.map[static_cast<size_t>(b)]] = static_cast<unsigned char>(b);
        world.languages.push_back(std::move(l));
    }
    if (world.languages.empty()) throw ParseError(langs_path + ": no languages");
    for (const SyntheticLanguage& l : world.languages) {
        const std::string& code = l.lang.code;
        world.corpora[code] = load_corpus((fs::path(dir) / ("corpus." + code + ".jsonl")).string());
        world.seeds[code] = load_corpus((fs::path(dir) / ("seeds." + code + ".jsonl")).string());
    }
    return world;
}

namespace {

struct Ctx {
    const RunPlan* plan = nullptr;
    fs::path out;
    uint64_t seed = 0;
    bool upstream_executed = false;

    const FlatConfig& cfg() const { return plan->config; }
    std::string abs(const std::string& rel) const { return (out / rel).string(); }
};

ModelConfig model_config(const Ctx& c) {
    ModelConfig mc;
    mc.n_layers = c.cfg().get_int("model.n_layers", mc.n_layers);
    mc.d_model = c.cfg().get_int("model.d_model", mc.d_model);
    mc.n_heads = c.cfg().get_int("model.n_heads", mc.n_heads);
    mc.context_len = c.cfg().get_int("model.context_len", mc.context_len);
    mc.seed = c.seed;
    mc.validate();
    return mc;
}

std::vector<std::string> lang_codes(const Ctx& c) {
    int n = c.cfg().get_int("world.n_languages", 3);
    std::vector<std::string> codes;
    for (int i = 0; i < n; ++i) codes.push_back(std::string("q") + static_cast<char>('a' + i));
    return codes;
}

std::unique_ptr<TeacherOracle> make_teacher(const Ctx& c, const SyntheticWorld& world) {
    const std::string kind = c.cfg().get("teacher.kind", "synthetic");
    if (kind == "external")
        return std::make_unique<ExternalTeacher>(c.cfg().require("teacher.endpoint"),
                                                 c.cfg().require("teacher.model"),
                                                 c.cfg().get_int("teacher.timeout_ms", 30000),
                                                 c.cfg().get_int("teacher.max_retries", 3));
    if (kind != "synthetic")
        throw ConfigError("teacher.kind must be 'synthetic' or 'external', got '" + kind + "'");
    return std::make_unique<SyntheticTeacher>(
        world.languages, judge_from_string(c.cfg().get("world.judge", "marker_count")),
        Rng::mix(c.seed, fnv1a64("teacher")), c.cfg().get_int("teacher.word_pool_cap", 0),
        c.cfg().get_real("teacher.malformed_rate", 0.0));
}

SplitSpec split_spec(const Ctx& c) {
    SplitSpec s;
    s.sft = c.cfg().get_int("split.sft", s.sft);
    s.rank = c.cfg().get_int("split.rank", s.rank);
    s.ppo = c.cfg().get_int("split.ppo", s.ppo);
    return s;
}

// Per-language 52:42:64-proportioned splits, merged across languages with
// language-suffixed ids so merged pools stay collision-free.
std::array<std::vector<InstructionExample>, 3> merged_pools(const Ctx& c) {
    SplitSpec spec = split_spec(c);
    std::array<std::vector<InstructionExample>, 3> merged;
    for (const std::string& code : lang_codes(c)) {
        auto corpus = load_corpus(c.abs("data/corpus." + code + ".jsonl"));
        auto pools = split_corpus(corpus, spec, Rng::mix(c.seed, fnv1a64("split." + code)));
        for (size_t p = 0; p < 3; ++p)
            for (InstructionExample& ex : pools[p]) {
                ex.id += "-" + code;
                merged[p].push_back(std::move(ex));
            }
    }
    return merged;
}

std::vector<InstructionExample> merged_full_corpus(const Ctx& c) {
    std::vector<InstructionExample> merged;
    for (const std::string& code : lang_codes(c))
        for (InstructionExample& ex : load_corpus(c.abs("data/corpus." + code + ".jsonl"))) {
            ex.id += "-" + code;
            merged.push_back(std::move(ex));
        }
    return merged;
}

SftConfig sft_config(const Ctx& c, const std::string& tag) {
    SftConfig s;
    s.epochs = c.cfg().get_int("sft.epochs", 6);
    s.peak_lr = c.cfg().get_real("sft.peak_lr", 3e-3);
    s.warmup_steps = c.cfg().get_int("sft.warmup_steps", 2);
    s.batch_size = c.cfg().get_int("sft.batch_size", 32);
    s.weight_decay = c.cfg().get_real("sft.weight_decay", 0.05);
    s.seed = Rng::mix(c.seed, fnv1a64(tag));
    return s;
}

std::string manifest_head(const Ctx& c, const std::string& stage,
                          const std::vector<std::string>& inputs) {
    std::string s = "stage=" + stage + "\nseed=" + std::to_string(c.seed) +
                    "\nconfig_hash=" + hex64(fnv1a64(c.cfg().render())) + "\n";
    for (const std::string& in : inputs)
        s += "input=" + in + " hash=" + fingerprint_path(c.abs(in)) + "\n";
    return s;
}

std::string manifest_file(const Ctx& c, const std::string& stage) {
    return c.abs("manifests/" + stage + ".manifest");
}

bool stage_clean(const Ctx& c, const std::string& stage, const std::vector<std::string>& inputs,
                 const std::vector<std::string>& outputs) {
    if (!c.plan->resume || c.upstream_executed) return false;
    const std::string mp = manifest_file(c, stage);
    if (!fs::exists(mp)) return false;
    for (const std::string& in : inputs)
        if (!fs::exists(c.abs(in))) return false;
    for (const std::string& outp : outputs)
        if (!fs::exists(c.abs(outp))) return false;

    const std::string stored = read_file(mp);
    if (!starts_with(stored, manifest_head(c, stage, inputs))) return false;

    std::set<std::string> seen;
    for (const std::string& line : split_lines(stored)) {
        if (!starts_with(line, "output=")) continue;
        size_t sp = line.rfind(" hash=");
        if (sp == std::string::npos) return false;
        std::string rel = line.substr(7, sp - 7);
        std::string hash = line.substr(sp + 6);
        if (!fs::exists(c.abs(rel)) || fingerprint_path(c.abs(rel)) != hash) return false;
        seen.insert(rel);
    }
    for (const std::string& outp : outputs)
        if (!seen.count(outp)) return false;
    return true;
}

void write_manifest(const Ctx& c, const std::string& stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    std::string s = manifest_head(c, stage, inputs);
    for (const std::string& outp : outputs)
        s += "output=" + outp + " hash=" + fingerprint_path(c.abs(outp)) + "\n";
    write_file(manifest_file(c, stage), s);
}

void stage_world(const Ctx& c) {
    SyntheticWorld world = make_world(c.cfg().get_int("world.n_languages", 3), c.seed,
                                      c.cfg().get_int("world.base_corpus_size", 48));
    save_world(world, c.abs("world"));
}

void stage_generate(const Ctx& c) {
    SyntheticWorld world = load_world(c.abs("world"));
    auto teacher = make_teacher(c, world);
    const std::string base_code = world.languages.front().lang.code;
    GenBatchConfig gcfg;
    gcfg.n_incontext = c.cfg().get_int("generate.n_incontext", gcfg.n_incontext);
    gcfg.rouge_threshold = c.cfg().get_real("generate.rouge_threshold", gcfg.rouge_threshold);
    gcfg.target_count = c.cfg().get_int("generate.target_count", 18);
    gcfg.max_rounds_per_target =
        c.cfg().get_int("generate.max_rounds_per_target", gcfg.max_rounds_per_target);
    gcfg.seed = Rng::mix(c.seed, fnv1a64("generate"));

    const auto& seeds = world.seeds.at(base_code);
    GenerationResult res = generate_instructions(*teacher, seeds, seeds, gcfg);
    if (res.accepted.empty()) throw TrainError("generate: no instructions accepted");
    save_corpus(res.accepted, c.abs("data/generated.jsonl"));
    std::string log;
    for (const std::string& line : res.decision_log) log += line + "\n";
    write_file(c.abs("data/generate.log"), log);
}

void stage_translate(const Ctx& c) {
    SyntheticWorld world = load_world(c.abs("world"));
    auto teacher = make_teacher(c, world);
    auto generated = load_corpus(c.abs("data/generated.jsonl"));
    for (size_t i = 0; i < world.languages.size(); ++i) {
        const SyntheticLanguage& l = world.languages[i];
        std::vector<InstructionExample> corpus =
            i == 0 ? generated : translate_corpus(*teacher, l.lang, generated);
        save_corpus(corpus, c.abs("data/corpus." + l.lang.code + ".jsonl"));
    }
}

void stage_sft(const Ctx& c) {
    PolicyCheckpoint base = init_base_checkpoint(model_config(c));
    save_checkpoint(base, c.abs("ckpt/base"));

    auto pools = merged_pools(c);
    std::vector<InstructionExample> full_arm =
        c.cfg().get_bool("pipeline.matched_data", false) ? pools[0] : merged_full_corpus(c);

    PolicyCheckpoint sft_full = run_sft(base, full_arm, sft_config(c, "sft.full"));
    save_checkpoint(sft_full, c.abs("ckpt/sft_full"));
    PolicyCheckpoint sft_rl = run_sft(base, pools[0], sft_config(c, "sft.rl"));
    save_checkpoint(sft_rl, c.abs("ckpt/sft_rl"));
}

void stage_sample_rank(const Ctx& c) {
    SyntheticWorld world = load_world(c.abs("world"));
    auto teacher = make_teacher(c, world);
    PolicyCheckpoint policy = load_checkpoint(c.abs("ckpt/sft_rl"));
    std::vector<InstructionExample> pool = merged_pools(c)[1];

    Rng rng(Rng::mix(c.seed, fnv1a64("rank-sample")));
    for (size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    const size_t cap = static_cast<size_t>(c.cfg().get_int("rank.max_sets", 12));
    if (pool.size() > cap) pool.resize(cap);

    PromptFormat fmt;
    const int max_tokens = c.cfg().get_int("rank.max_response_tokens", 24);
    RankProductionStats stats;
    std::vector<RankedResponseSet> sets;
    for (const InstructionExample& ex : pool) {
        auto set = produce_ranked_set(*teacher, ex, policy, Rng::mix(c.seed, fnv1a64(ex.id)), fmt,
                                      max_tokens, &stats);
        if (set) sets.push_back(std::move(*set));
    }
    if (sets.empty()) throw TrainError("sample_rank: every ranking attempt was dropped");
    save_ranked_sets(sets, c.abs("data/ranked.jsonl"));
    std::string log = "produced=" + std::to_string(stats.produced) +
                      " dropped=" + std::to_string(stats.dropped) + "\n";
    for (const std::string& line : stats.log) log += line + "\n";
    write_file(c.abs("data/rank.log"), log);
}

void stage_reward(const Ctx& c) {
    PolicyCheckpoint sft = load_checkpoint(c.abs("ckpt/sft_rl"));
    auto sets = load_ranked_sets(c.abs("data/ranked.jsonl"));
    RewardConfig rcfg;
    rcfg.epochs = c.cfg().get_int("reward.epochs", rcfg.epochs);
    rcfg.batch_size = c.cfg().get_int("reward.batch_size", rcfg.batch_size);
    rcfg.lr = c.cfg().get_real("reward.lr", rcfg.lr);
    rcfg.holdout_fraction = c.cfg().get_real("reward.holdout_fraction", rcfg.holdout_fraction);
    rcfg.seed = Rng::mix(c.seed, fnv1a64("reward"));

    std::vector<RewardEpochMetrics> metrics;
    PolicyCheckpoint rm = train_reward(sft, sets, rcfg, &metrics);
    save_checkpoint(rm, c.abs("ckpt/reward"));
    std::string lines;
    for (const RewardEpochMetrics& m : metrics) {
        json j;
        j["epoch"] = m.epoch;
        j["train_loss"] = m.train_loss;
        j["train_accuracy"] = m.train_accuracy;
        j["holdout_accuracy"] = m.holdout_accuracy;
        lines += json_line(j) + "\n";
    }
    write_file(c.abs("metrics/reward_metrics.jsonl"), lines);
}

PpoConfig ppo_config(const Ctx& c) {
    PpoConfig p;
    p.epochs = c.cfg().get_int("ppo.epochs", p.epochs);
    p.kl_beta = c.cfg().get_real("ppo.kl_beta", p.kl_beta);
    p.clip_eps = c.cfg().get_real("ppo.clip_eps", p.clip_eps);
    p.batch_size = c.cfg().get_int("ppo.batch_size", 12);
    p.lr = c.cfg().get_real("ppo.lr", 5e-4);
    p.weight_decay = c.cfg().get_real("ppo.weight_decay", p.weight_decay);
    p.trainable_top_layers = c.cfg().get_int("ppo.trainable_top_layers", p.trainable_top_layers);
    p.gae_lambda = c.cfg().get_real("ppo.gae_lambda", p.gae_lambda);
    p.gae_gamma = c.cfg().get_real("ppo.gae_gamma", p.gae_gamma);
    p.max_new_tokens = c.cfg().get_int("ppo.max_new_tokens", 24);
    p.minibatch_size = c.cfg().get_int("ppo.minibatch_size", p.minibatch_size);
    p.seed = Rng::mix(c.seed, fnv1a64("ppo"));
    return p;
}

// Marker glyph per prompt text, so the oracle can score merged multilingual
// pools exactly.
std::map<std::string, char> marker_by_prompt(const SyntheticWorld& world,
                                             const std::vector<InstructionExample>& prompts) {
    PromptFormat fmt;
    std::map<std::string, char> out;
    for (const InstructionExample& ex : prompts)
        out[fmt.render_prompt(ex)] = world.language(ex.lang).marker();
    return out;
}

void stage_ppo(const Ctx& c) {
    SyntheticWorld world = load_world(c.abs("world"));
    PolicyCheckpoint sft = load_checkpoint(c.abs("ckpt/sft_rl"));
    std::vector<InstructionExample> prompts = merged_pools(c)[2];
    PpoConfig pcfg = ppo_config(c);

    std::vector<PpoEpochStats> log;
    PolicyCheckpoint ppo;
    const std::string source = c.cfg().get("ppo.reward_source", "model");
    if (source == "model") {
        PolicyCheckpoint rm = load_checkpoint(c.abs("ckpt/reward"));
        ppo = run_ppo(sft, rm, prompts, pcfg, &log);
    } else if (source == "oracle") {
        auto markers = marker_by_prompt(world, prompts);
        FunctionRewardScorer scorer(
            "oracle:marker_count", [markers](const std::string& prompt, const std::string& resp) {
                auto it = markers.find(prompt);
                if (it == markers.end())
                    throw TrainError("oracle scorer: unknown prompt");
                return static_cast<double>(std::count(resp.begin(), resp.end(), it->second));
            });
        ppo = run_ppo(sft, scorer, prompts, pcfg, &log);
    } else {
        throw ConfigError("ppo.reward_source must be 'model' or 'oracle', got '" + source + "'");
    }
    save_checkpoint(ppo, c.abs("ckpt/ppo"));
    std::string lines;
    for (const PpoEpochStats& st : log) {
        json j;
        j["epoch"] = st.epoch;
        j["mean_reward"] = st.mean_reward;
        j["mean_kl"] = st.mean_kl;
        j["policy_loss"] = st.policy_loss;
        j["value_loss"] = st.value_loss;
        lines += json_line(j) + "\n";
    }
    write_file(c.abs("metrics/ppo_log.jsonl"), lines);
}

double mean_oracle_reward(const PolicyCheckpoint& ckpt,
                          const std::vector<InstructionExample>& prompts,
                          const std::map<std::string, char>& markers, int samples, int max_new,
                          uint64_t seed) {
    PromptFormat fmt;
    double total = 0.0;
    int n = 0;
    for (size_t i = 0; i < prompts.size(); ++i) {
        const std::string rendered = fmt.render_prompt(prompts[i]);
        std::vector<int> toks = Tokenizer::encode(rendered);
        toks.insert(toks.begin(), Tokenizer::BOS);
        const char marker = markers.at(rendered);
        for (int s = 0; s < samples; ++s) {
            auto resp = generate(ckpt, toks, max_new, 1.0,
                                 Rng::mix(Rng::mix(seed, static_cast<uint64_t>(i)),
                                          static_cast<uint64_t>(s)));
            std::string text = Tokenizer::decode(resp);
            total += static_cast<double>(std::count(text.begin(), text.end(), marker));
            ++n;
        }
    }
    return n ? total / n : 0.0;
}

void stage_eval(const Ctx& c) {
    SyntheticWorld world = load_world(c.abs("world"));
    PolicyCheckpoint base = load_checkpoint(c.abs("ckpt/base"));
    PolicyCheckpoint sft_full = load_checkpoint(c.abs("ckpt/sft_full"));
    PolicyCheckpoint sft_rl = load_checkpoint(c.abs("ckpt/sft_rl"));
    PolicyCheckpoint ppo = load_checkpoint(c.abs("ckpt/ppo"));

    const int n_items = c.cfg().get_int("eval.n_items", 24);
    std::vector<EvalItem> items;
    for (const SyntheticLanguage& l : world.languages) {
        auto li = make_marker_eval_set(l, n_items, Rng::mix(c.seed, fnv1a64("eval." + l.lang.code)));
        save_eval_items(li, c.abs("eval/items." + l.lang.code + ".jsonl"));
        items.insert(items.end(), li.begin(), li.end());
    }

    const std::vector<Language> registry = world.registry();
    json summary;
    const std::vector<std::pair<std::string, const PolicyCheckpoint*>> models = {
        {"base", &base}, {"sft", &sft_full}, {"sft_rl", &sft_rl}, {"rlhf", &ppo}};
    for (ScoreNorm norm : {ScoreNorm::none, ScoreNorm::per_token}) {
        const std::string norm_key = norm == ScoreNorm::none ? "none" : "per_token";
        for (const auto& [label, ckpt] : models) {
            EvalReport rep = evaluate(*ckpt, items, norm, registry);
            json langs;
            for (const auto& [code, acc] : rep.per_language) langs[code] = acc;
            summary["accuracy"][norm_key][label]["langs"] = langs;
            summary["accuracy"][norm_key][label]["overall"] = rep.overall;
            summary["accuracy"][norm_key][label]["skipped"] = rep.skipped;
        }
    }

    std::vector<InstructionExample> pool = merged_pools(c)[2];
    const size_t cap = static_cast<size_t>(c.cfg().get_int("eval.oracle_prompts", 12));
    if (pool.size() > cap) pool.resize(cap);
    auto markers = marker_by_prompt(world, pool);
    const int samples = c.cfg().get_int("eval.oracle_samples", 2);
    const int max_new = c.cfg().get_int("ppo.max_new_tokens", 24);
    const uint64_t es = Rng::mix(c.seed, fnv1a64("oracle-eval"));
    summary["oracle_reward"]["sft"] =
        mean_oracle_reward(sft_rl, pool, markers, samples, max_new, es);
    summary["oracle_reward"]["ppo"] = mean_oracle_reward(ppo, pool, markers, samples, max_new, es);

    write_file(c.abs("eval/summary.json"), json_pretty(summary) + "\n");
}

void stage_report(const Ctx& c) {
    SyntheticWorld world = load_world(c.abs("world"));
    json summary = json::parse(read_file(c.abs("eval/summary.json")));
    const std::vector<Language> registry = world.registry();

    std::string md = "# Synthetic-world run\n\n";
    md += "seed=" + std::to_string(c.seed) + ", languages=";
    for (size_t i = 0; i < registry.size(); ++i)
        md += (i ? "," : "") + registry[i].code;
    md += "\n\n";
    md += "Mean oracle reward (markers per sampled response, PPO prompt pool):\n\n";
    md += "- SFT policy: " + format_double(summary["oracle_reward"]["sft"].get<double>()) + "\n";
    md += "- PPO policy: " + format_double(summary["oracle_reward"]["ppo"].get<double>()) + "\n\n";

    for (const std::string& norm_key : {std::string("none"), std::string("per_token")}) {
        md += std::string("## Multiple-choice accuracy (") +
              (norm_key == "none" ? "no normalization" : "per-token normalized") + ")\n\n";
        std::vector<ReportColumn> cols;
        for (const auto& [label, title] :
             std::vector<std::pair<std::string, std::string>>{
                 {"base", "Base"}, {"sft", "SFT"}, {"rlhf", "RLHF"}}) {
            ReportColumn col;
            col.label = title;
            for (const auto& [code, acc] : summary["accuracy"][norm_key][label]["langs"].items())
                col.per_language[code] = acc.get<double>();
            cols.push_back(std::move(col));
        }
        md += render_table(cols, registry, true) + "\n";
    }
    write_file(c.abs("report.md"), md);
}

} // namespace

RunOutcome run_plan(const RunPlan& plan) {
    if (plan.out_dir.empty()) throw ConfigError("run_plan: out_dir is required");
    std::vector<std::string> stages = plan.stages.empty() ? all_stages() : plan.stages;
    {
        size_t cursor = 0;
        for (const std::string& s : stages) {
            auto it = std::find(all_stages().begin() + static_cast<long>(cursor),
                                all_stages().end(), s);
            if (it == all_stages().end())
                throw ConfigError("run_plan: unknown or out-of-order stage '" + s + "'");
            cursor = static_cast<size_t>(it - all_stages().begin()) + 1;
        }
    }

    Ctx c;
    c.plan = &plan;
    c.out = plan.out_dir;
    c.seed = plan.seed;
    for (const char* d : {"", "world", "data", "ckpt", "metrics", "eval", "manifests"})
        fs::create_directories(c.out / d);

    std::vector<std::string> corpus_files;
    for (const std::string& code : lang_codes(c))
        corpus_files.push_back("data/corpus." + code + ".jsonl");

    struct StageDef {
        std::string name;
        std::vector<std::string> inputs;
        std::vector<std::string> outputs;
        std::function<void(const Ctx&)> fn;
    };
    const std::string reward_source = c.cfg().get("ppo.reward_source", "model");
    std::vector<std::string> ppo_inputs = corpus_files;
    ppo_inputs.push_back("world");
    ppo_inputs.push_back("ckpt/sft_rl");
    if (reward_source == "model") ppo_inputs.push_back("ckpt/reward");

    std::vector<std::string> sft_inputs = corpus_files;
    std::vector<std::string> rank_inputs = corpus_files;
    rank_inputs.push_back("world");
    rank_inputs.push_back("ckpt/sft_rl");
    std::vector<std::string> eval_inputs = corpus_files;
    eval_inputs.push_back("world");
    for (const char* k : {"ckpt/base", "ckpt/sft_full", "ckpt/sft_rl", "ckpt/ppo"})
        eval_inputs.push_back(k);

    const std::vector<StageDef> defs = {
        {"world", {}, {"world"}, stage_world},
        {"generate", {"world"}, {"data/generated.jsonl", "data/generate.log"}, stage_generate},
        {"translate", {"world", "data/generated.jsonl"}, corpus_files, stage_translate},
        {"sft", sft_inputs, {"ckpt/base", "ckpt/sft_full", "ckpt/sft_rl"}, stage_sft},
        {"sample_rank", rank_inputs, {"data/ranked.jsonl", "data/rank.log"}, stage_sample_rank},
        {"reward",
         {"data/ranked.jsonl", "ckpt/sft_rl"},
         {"ckpt/reward", "metrics/reward_metrics.jsonl"},
         stage_reward},
        {"ppo", ppo_inputs, {"ckpt/ppo", "metrics/ppo_log.jsonl"}, stage_ppo},
        {"eval", eval_inputs, {"eval/summary.json"}, stage_eval},
        {"report", {"eval/summary.json"}, {"report.md"}, stage_report},
    };

    RunOutcome outcome;
    for (const StageDef& def : defs) {
        if (std::find(stages.begin(), stages.end(), def.name) == stages.end()) continue;
        StageRun sr;
        sr.stage = def.name;
        if (stage_clean(c, def.name, def.inputs, def.outputs)) {
            outcome.stages.push_back(sr);
            continue;
        }
        for (const std::string& in : def.inputs)
            if (!fs::exists(c.abs(in)))
                throw TrainError("stage " + def.name + " needs missing input " + in +
                                 "; run its producing stage first");
        const auto t0 = std::chrono::steady_clock::now();
        def.fn(c);
        sr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(c, def.name, def.inputs, def.outputs);
        sr.executed = true;
        c.upstream_executed = true;
        outcome.stages.push_back(sr);
    }

    outcome.report_path = c.abs("report.md");
    const std::string summary_path = c.abs("eval/summary.json");
    if (fs::exists(summary_path)) {
        json summary = json::parse(read_file(summary_path));
        outcome.metrics["oracle_reward.sft"] = summary["oracle_reward"]["sft"].get<double>();
        outcome.metrics["oracle_reward.ppo"] = summary["oracle_reward"]["ppo"].get<double>();
        for (const auto& [norm_key, by_model] : summary["accuracy"].items())
            for (const auto& [label, rep] : by_model.items()) {
                outcome.metrics["acc." + norm_key + "." + label] = rep["overall"].get<double>();
                for (const auto& [code, acc] : rep["langs"].items())
                    outcome.metrics["acc." + norm_key + "." + label + "." + code] =
                        acc.get<double>();
            }
    }
    return outcome;
}

} // namespace okapi
