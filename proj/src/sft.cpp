#include "okapi/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "okapi/errors.hpp"
#include "okapi/optim.hpp"
#include "okapi/tokenizer.hpp"

namespace okapi {

std::string SftConfig::describe() const {
    std::ostringstream s;
    s << "epochs=" << epochs << ",peak_lr=" << peak_lr << ",warmup_steps=" << warmup_steps
      << ",batch_size=" << batch_size << ",weight_decay=" << weight_decay << ",seed=" << seed;
    return s.str();
}

std::string PromptFormat::response_marker() { return "### Response:\n"; }

std::string PromptFormat::render_prompt(const InstructionExample& ex) const {
    std::string out = "### Instruction:\n" + ex.instruction + "\n\n";
    if (!ex.input.empty()) out += "### Input:\n" + ex.input + "\n\n";
    return out + response_marker();
}

std::string PromptFormat::render_full(const InstructionExample& ex) const {
    return render_prompt(ex) + ex.output;
}

std::string PromptFormat::split_response(const std::string& full) const {
    size_t pos = full.find(response_marker());
    if (pos == std::string::npos) throw ParseError("rendered text has no response marker");
    return full.substr(pos + response_marker().size());
}

std::vector<int> PromptFormat::prompt_tokens(const InstructionExample& ex) const {
    std::vector<int> toks = {Tokenizer::BOS};
    for (int t : Tokenizer::encode(render_prompt(ex))) toks.push_back(t);
    return toks;
}

LossItem PromptFormat::to_loss_item(const InstructionExample& ex) const {
    std::vector<int> toks = prompt_tokens(ex);
    const size_t prompt_len = toks.size();
    for (int t : Tokenizer::encode(ex.output)) toks.push_back(t);
    toks.push_back(Tokenizer::EOS);

    LossItem item;
    item.tokens = std::move(toks);
    item.target_mask.assign(item.tokens.size(), 0);
    const size_t first =
        loss_mask_policy == LossMask::response_only ? prompt_len : 1;
    for (size_t t = first; t < item.tokens.size(); ++t) item.target_mask[t] = 1;
    return item;
}

double lr_at(int step, int total_steps, const SftConfig& cfg) {
    if (total_steps <= cfg.warmup_steps)
        throw TrainError("lr schedule: total_steps " + std::to_string(total_steps) +
                         " must exceed warmup_steps " + std::to_string(cfg.warmup_steps));
    if (step < 0 || step > total_steps)
        throw TrainError("lr schedule: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(total_steps) + "]");
    if (step < cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(total_steps - cfg.warmup_steps);
    return std::max(0.0, cfg.peak_lr * 0.5 * (1.0 + std::cos(progress * 3.141592653589793)));
}

std::string corpus_fingerprint(const std::vector<InstructionExample>& corpus) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const InstructionExample& ex : corpus) {
        std::string rec = ex.id + "\x1f" + ex.lang + "\x1f" + ex.instruction + "\x1f" + ex.input +
                          "\x1f" + ex.output + "\x1f" + origin_to_string(ex.origin) + "\x1e";
        h = fnv1a64(rec.data(), rec.size()) ^ (h * 0x100000001b3ULL);
    }
    return hex64(h);
}

PolicyCheckpoint run_sft(const PolicyCheckpoint& base,
                         const std::vector<InstructionExample>& corpus, const SftConfig& cfg,
                         const PromptFormat& fmt, std::vector<double>* epoch_losses) {
    if (base.role != Role::base) throw TrainError("run_sft: expected a role=base checkpoint");
    if (corpus.empty()) throw TrainError("run_sft: empty corpus");
    if (cfg.epochs < 0 || cfg.batch_size <= 0) throw TrainError("run_sft: bad config");
    check_role_transition(base.role, Role::sft);

    PolicyCheckpoint ckpt = base;
    ckpt.role = Role::sft;
    static const SftConfig canonical;
    ckpt.provenance.push_back("stage=sft canonical(" + canonical.describe() + ") applied(" +
                              cfg.describe() + ") corpus=" + corpus_fingerprint(corpus) +
                              " n=" + std::to_string(corpus.size()));
    if (epoch_losses) epoch_losses->clear();
    if (cfg.epochs == 0) return ckpt;

    std::vector<LossItem> items;
    items.reserve(corpus.size());
    for (const InstructionExample& ex : corpus) items.push_back(fmt.to_loss_item(ex));

    const int n = static_cast<int>(items.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int total_steps = cfg.epochs * steps_per_epoch;

    AdamW opt(0.9, 0.999, 1e-8, cfg.weight_decay);
    Rng rng(cfg.seed);
    std::vector<int> order(items.size());
    std::iota(order.begin(), order.end(), 0);

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(static_cast<uint64_t>(i) + 1)]);

        double epoch_loss = 0.0;
        for (int b = 0; b < steps_per_epoch; ++b, ++step) {
            std::vector<LossItem> batch;
            for (int i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i)
                batch.push_back(items[static_cast<size_t>(order[static_cast<size_t>(i)])]);

            Graph g;
            ModelForward model(g, ckpt);
            TensorNode* loss = lm_loss_node(model, batch);
            if (!std::isfinite(loss->data[0]))
                throw TrainError("run_sft: non-finite loss at step " + std::to_string(step));
            epoch_loss += loss->data[0] * static_cast<double>(batch.size());
            g.backward(loss);

            const double lr = lr_at(step, total_steps, cfg);
            opt.begin_step();
            for (const auto& [name, leaf] : model.leaves())
                opt.update(name, ckpt.param(name).data, leaf->grad, lr);
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(n));
    }
    return ckpt;
}

} // namespace okapi
