#include "okapi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "okapi/errors.hpp"
#include "okapi/tokenizer.hpp"

namespace okapi {

ModelForward::ModelForward(Graph& g, const PolicyCheckpoint& ckpt)
    : g_(&g), ckpt_(&ckpt), cfg_(ckpt.config) {
    cfg_.validate();
}

TensorNode* ModelForward::param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const Param& p = ckpt_->param(name);
    TensorNode* leaf = g_->input(p.shape, p.data, name);
    leaves_[name] = leaf;
    return leaf;
}

void ModelForward::check_tokens(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw ShapeError("model input: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg_.context_len)
        throw ShapeError("model input: sequence length " + std::to_string(tokens.size()) +
                         " exceeds context_len " + std::to_string(cfg_.context_len));
    for (int t : tokens)
        if (t < 0 || t >= cfg_.vocab_size)
            throw ShapeError("model input: token id " + std::to_string(t) +
                             " outside vocab of size " + std::to_string(cfg_.vocab_size));
}

TensorNode* ModelForward::block(TensorNode* x, int layer, TensorNode* mask) {
    const std::string pfx = "layer" + std::to_string(layer) + ".";
    const int hd = cfg_.head_dim();
    Graph& g = *g_;

    TensorNode* h = g.layer_norm(x, param(pfx + "ln1.gain"), param(pfx + "ln1.bias"));
    TensorNode* q = g.add(g.matmul(h, param(pfx + "attn.wq")), param(pfx + "attn.bq"));
    TensorNode* k = g.add(g.matmul(h, param(pfx + "attn.wk")), param(pfx + "attn.bk"));
    TensorNode* v = g.add(g.matmul(h, param(pfx + "attn.wv")), param(pfx + "attn.bv"));

    TensorNode* merged = nullptr;
    for (int hi = 0; hi < cfg_.n_heads; ++hi) {
        TensorNode* qh = g.slice(q, 1, hi * hd, (hi + 1) * hd);
        TensorNode* kh = g.slice(k, 1, hi * hd, (hi + 1) * hd);
        TensorNode* vh = g.slice(v, 1, hi * hd, (hi + 1) * hd);
        TensorNode* scores = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(double(hd)));
        TensorNode* att = g.softmax(g.add(scores, mask));
        TensorNode* oh = g.matmul(att, vh);
        merged = merged ? g.concat(merged, oh, 1) : oh;
    }
    TensorNode* proj = g.add(g.matmul(merged, param(pfx + "attn.wo")), param(pfx + "attn.bo"));
    x = g.add(x, proj);

    TensorNode* m = g.layer_norm(x, param(pfx + "ln2.gain"), param(pfx + "ln2.bias"));
    m = g.gelu(g.add(g.matmul(m, param(pfx + "mlp.w1")), param(pfx + "mlp.b1")));
    m = g.add(g.matmul(m, param(pfx + "mlp.w2")), param(pfx + "mlp.b2"));
    return g.add(x, m);
}

TensorNode* ModelForward::states(const std::vector<int>& tokens) {
    check_tokens(tokens);
    Graph& g = *g_;
    const int T = static_cast<int>(tokens.size());

    std::vector<int> pos(T);
    std::iota(pos.begin(), pos.end(), 0);
    TensorNode* x = g.add(g.embedding_lookup(param("tok_emb"), tokens),
                          g.embedding_lookup(param("pos_emb"), pos));

    std::vector<double> mdata(static_cast<size_t>(T) * T, 0.0);
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) mdata[static_cast<size_t>(i) * T + j] = -1e9;
    TensorNode* mask = g.constant({T, T}, std::move(mdata));

    for (int l = 0; l < cfg_.n_layers; ++l) x = block(x, l, mask);
    return g.layer_norm(x, param("final_ln.gain"), param("final_ln.bias"));
}

TensorNode* ModelForward::logits(const std::vector<int>& tokens) {
    return g_->add(g_->matmul(states(tokens), param("lm_head.w")), param("lm_head.b"));
}

TensorNode* ModelForward::logits_last(const std::vector<int>& tokens) {
    TensorNode* s = states(tokens);
    TensorNode* last = g_->slice(s, 0, s->rows() - 1, s->rows());
    return g_->add(g_->matmul(last, param("lm_head.w")), param("lm_head.b"));
}

LossItem make_loss_item(const std::vector<int>& tokens) {
    LossItem item;
    item.tokens = tokens;
    item.target_mask.assign(tokens.size(), 0);
    for (size_t t = 1; t < tokens.size(); ++t)
        item.target_mask[t] = tokens[t] == Tokenizer::PAD ? 0 : 1;
    return item;
}

TensorNode* lm_loss_node(ModelForward& model, const std::vector<LossItem>& batch) {
    if (batch.empty()) throw TrainError("lm_loss: empty batch");
    Graph& g = model.graph();

    TensorNode* total = nullptr;
    long n_targets = 0;
    for (const LossItem& item : batch) {
        const auto& toks = item.tokens;
        if (item.target_mask.size() != toks.size())
            throw ShapeError("lm_loss: target_mask length mismatch");
        if (static_cast<int>(toks.size()) > model.config().context_len)
            throw ShapeError("lm_loss: sequence length " + std::to_string(toks.size()) +
                             " exceeds context_len " +
                             std::to_string(model.config().context_len));
        if (toks.size() < 2) continue;

        const int L = static_cast<int>(toks.size()) - 1;
        std::vector<int> input(toks.begin(), toks.end() - 1);
        std::vector<int> targets(toks.begin() + 1, toks.end());
        std::vector<double> w(L, 0.0);
        long item_targets = 0;
        for (int i = 0; i < L; ++i)
            if (item.target_mask[i + 1]) {
                w[i] = 1.0;
                ++item_targets;
            }
        if (item_targets == 0) continue;
        n_targets += item_targets;

        TensorNode* lp = g.log_softmax(model.logits(input));
        TensorNode* picked = g.gather_rows(lp, targets);
        TensorNode* masked = g.mul(picked, g.constant({L}, std::move(w)));
        TensorNode* s = g.sum(masked);
        total = total ? g.add(total, s) : s;
    }
    if (!total || n_targets == 0) throw TrainError("lm_loss: batch contains no target positions");
    return g.scale(total, -1.0 / static_cast<double>(n_targets));
}

double lm_loss_value(const PolicyCheckpoint& ckpt, const std::vector<std::vector<int>>& batch) {
    Graph g(0, false);
    ModelForward model(g, ckpt);
    std::vector<LossItem> items;
    items.reserve(batch.size());
    for (const auto& toks : batch) items.push_back(make_loss_item(toks));
    return lm_loss_node(model, items)->data[0];
}

std::vector<int> generate(const PolicyCheckpoint& ckpt, const std::vector<int>& prompt,
                          int max_new, double temperature, uint64_t seed) {
    if (prompt.empty()) throw ShapeError("generate: empty prompt");
    if (temperature < 0.0) throw Error("generate: negative temperature");
    if (static_cast<int>(prompt.size()) > ckpt.config.context_len)
        throw ShapeError("generate: prompt length " + std::to_string(prompt.size()) +
                         " exceeds context_len " + std::to_string(ckpt.config.context_len));

    std::vector<int> tokens = prompt;
    Rng rng(seed);
    const int V = ckpt.config.vocab_size;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(tokens.size()) >= ckpt.config.context_len) break;
        Graph g(0, false);
        ModelForward model(g, ckpt);
        std::vector<double> logit = model.logits_last(tokens)->data;
        if (Tokenizer::PAD < V) logit[Tokenizer::PAD] = -1e30;

        int next;
        if (temperature == 0.0) {
            next = 0;
            for (int j = 1; j < V; ++j)
                if (logit[j] > logit[next]) next = j;
        } else {
            double mx = *std::max_element(logit.begin(), logit.end());
            std::vector<double> p(V);
            double z = 0.0;
            for (int j = 0; j < V; ++j) z += p[j] = std::exp((logit[j] - mx) / temperature);
            double u = rng.uniform() * z;
            double c = 0.0;
            next = V - 1;
            for (int j = 0; j < V; ++j) {
                c += p[j];
                if (u < c) {
                    next = j;
                    break;
                }
            }
        }
        tokens.push_back(next);
        if (next == Tokenizer::EOS) break;
    }
    return std::vector<int>(tokens.begin() + static_cast<long>(prompt.size()), tokens.end());
}

std::vector<double> per_token_logprobs(const PolicyCheckpoint& ckpt,
                                       const std::vector<int>& tokens, int start) {
    if (start < 1) throw Error("per_token_logprobs: start must be >= 1");
    if (start >= static_cast<int>(tokens.size()))
        throw Error("per_token_logprobs: start beyond sequence end");
    Graph g(0, false);
    ModelForward model(g, ckpt);
    std::vector<int> input(tokens.begin(), tokens.end() - 1);
    TensorNode* lp = g.log_softmax(model.logits(input));
    const int V = ckpt.config.vocab_size;
    std::vector<double> out;
    out.reserve(tokens.size() - static_cast<size_t>(start));
    for (size_t t = static_cast<size_t>(start); t < tokens.size(); ++t)
        out.push_back(lp->data[(t - 1) * static_cast<size_t>(V) + static_cast<size_t>(tokens[t])]);
    return out;
}

SeqLogprob sequence_logprob(const PolicyCheckpoint& ckpt, const std::vector<int>& context,
                            const std::vector<int>& continuation) {
    if (continuation.empty()) throw Error("sequence_logprob: empty continuation");
    if (context.empty()) throw Error("sequence_logprob: empty context");
    if (static_cast<int>(context.size() + continuation.size()) > ckpt.config.context_len)
        throw ShapeError("sequence_logprob: context + continuation exceeds context_len");

    std::vector<int> full = context;
    full.insert(full.end(), continuation.begin(), continuation.end());
    std::vector<double> lps = per_token_logprobs(ckpt, full, static_cast<int>(context.size()));
    SeqLogprob r;
    r.token_count = static_cast<int>(continuation.size());
    for (double v : lps) r.logprob += v;
    return r;
}

} // namespace okapi
