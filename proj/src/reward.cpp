#include "okapi/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "okapi/errors.hpp"
#include "okapi/graph.hpp"
#include "okapi/model.hpp"
#include "okapi/optim.hpp"
#include "okapi/sft.hpp"
#include "okapi/tokenizer.hpp"
#include "okapi/util.hpp"

namespace okapi {

std::string RewardConfig::describe() const {
    return "epochs=" + std::to_string(epochs) + " batch_size=" + std::to_string(batch_size) +
           " lr=" + format_double(lr) + " holdout_fraction=" + format_double(holdout_fraction) +
           " seed=" + std::to_string(seed);
}

double ranking_loss(double score_c, double score_r) {
    const double x = -(score_c - score_r);
    // softplus(x) = log(1+exp(x)), stable for large |x|
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

std::vector<std::pair<int, int>> rank_index_pairs(const std::vector<int>& ranks) {
    const int t = static_cast<int>(ranks.size());
    if (t < 2) throw Error("rank_index_pairs: need at least 2 ranks");
    std::vector<int> pos_of_rank(static_cast<size_t>(t) + 1, -1);
    for (int i = 0; i < t; ++i) {
        int r = ranks[static_cast<size_t>(i)];
        if (r < 1 || r > t || pos_of_rank[static_cast<size_t>(r)] != -1)
            throw Error("rank_index_pairs: ranks must be a permutation of 1.." +
                        std::to_string(t));
        pos_of_rank[static_cast<size_t>(r)] = i;
    }
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<size_t>(t * (t - 1) / 2));
    for (int r = 1; r <= t; ++r) {
        int p = pos_of_rank[static_cast<size_t>(r)];
        for (int q = 0; q < t; ++q)
            if (ranks[static_cast<size_t>(q)] > r) out.emplace_back(p, q);
    }
    return out;
}

namespace {

std::vector<int> prompt_tokens_for(const std::string& instruction, const std::string& input) {
    InstructionExample ex;
    ex.instruction = instruction;
    ex.input = input;
    PromptFormat fmt;
    std::vector<int> toks = Tokenizer::encode(fmt.render_prompt(ex));
    toks.insert(toks.begin(), Tokenizer::BOS);
    return toks;
}

} // namespace

std::vector<PreferencePair> pairs_from_ranked(const RankedResponseSet& set) {
    set.validate();
    std::vector<int> x = prompt_tokens_for(set.base.instruction, set.base.input);
    std::vector<PreferencePair> out;
    for (auto [better, worse] : rank_index_pairs(set.ranks)) {
        PreferencePair p;
        p.x = x;
        p.y_c = Tokenizer::encode(set.responses[static_cast<size_t>(better)]);
        p.y_r = Tokenizer::encode(set.responses[static_cast<size_t>(worse)]);
        p.source_ranks = {set.ranks[static_cast<size_t>(better)],
                          set.ranks[static_cast<size_t>(worse)]};
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

// Score node for x ++ SEP ++ y inside an existing graph; grads flow into the
// model's shared leaves.
TensorNode* score_node(Graph& g, ModelForward& model, const std::vector<int>& x,
                       const std::vector<int>& y, std::vector<double>* pooled_state) {
    std::vector<int> seq = x;
    seq.push_back(Tokenizer::SEP);
    seq.insert(seq.end(), y.begin(), y.end());
    if (static_cast<int>(seq.size()) > model.config().context_len)
        throw TrainError("reward input of length " + std::to_string(seq.size()) +
                         " exceeds context_len " + std::to_string(model.config().context_len));
    TensorNode* st = model.states(seq);
    int last = static_cast<int>(seq.size()) - 1;
    while (last > 0 && seq[static_cast<size_t>(last)] == Tokenizer::PAD) --last;
    TensorNode* row = g.slice(st, 0, last, last + 1);
    if (pooled_state) *pooled_state = row->data;
    return g.add(g.matmul(row, model.param("reward_head.w")), model.param("reward_head.b"));
}

} // namespace

double reward_score(const PolicyCheckpoint& rm, const std::vector<int>& x,
                    const std::vector<int>& y, std::vector<double>* pooled_state) {
    if (rm.role != Role::reward)
        throw TrainError("reward_score: checkpoint role is " + role_to_string(rm.role) +
                         ", expected reward");
    Graph g;
    ModelForward model(g, rm);
    return score_node(g, model, x, y, pooled_state)->data[0];
}

namespace {

struct PairEval {
    double loss = 0.0;
    bool correct = false;
};

PairEval eval_pair(const PolicyCheckpoint& ckpt, const PreferencePair& pair) {
    Graph g;
    ModelForward model(g, ckpt);
    double c = score_node(g, model, pair.x, pair.y_c, nullptr)->data[0];
    double r = score_node(g, model, pair.x, pair.y_r, nullptr)->data[0];
    return {ranking_loss(c, r), c > r};
}

} // namespace

PolicyCheckpoint train_reward(const PolicyCheckpoint& sft,
                              const std::vector<RankedResponseSet>& data,
                              const RewardConfig& cfg,
                              std::vector<RewardEpochMetrics>* metrics) {
    check_role_transition(sft.role, Role::reward);
    if (data.empty()) throw TrainError("train_reward: no ranked sets");
    if (cfg.epochs < 0 || cfg.batch_size <= 0) throw TrainError("train_reward: bad config");

    PolicyCheckpoint ckpt = sft;
    ckpt.role = Role::reward;
    const int d = ckpt.config.d_model;
    ckpt.params["reward_head.w"] = Param{{d, 1}, std::vector<double>(static_cast<size_t>(d), 0.0)};
    ckpt.params["reward_head.b"] = Param{{1}, {0.0}};

    std::vector<std::vector<PreferencePair>> per_set;
    per_set.reserve(data.size());
    for (const RankedResponseSet& s : data) per_set.push_back(pairs_from_ranked(s));

    Rng rng(cfg.seed);
    std::vector<size_t> order(per_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);

    size_t n_holdout = static_cast<size_t>(
        std::llround(static_cast<double>(order.size()) * cfg.holdout_fraction));
    if (n_holdout == 0 && order.size() >= 2 && cfg.holdout_fraction > 0.0) n_holdout = 1;
    if (n_holdout >= order.size()) n_holdout = order.size() - 1;

    std::vector<PreferencePair> train_pairs, holdout_pairs;
    for (size_t i = 0; i < order.size(); ++i) {
        auto& dst = i < n_holdout ? holdout_pairs : train_pairs;
        for (PreferencePair& p : per_set[order[i]]) dst.push_back(p);
    }
    if (train_pairs.empty()) throw TrainError("train_reward: no training pairs");

    ckpt.provenance.push_back("stage=reward canonical(epochs=2 batch_size=64 lr=1e-05) applied(" +
                              cfg.describe() + ") sets=" + std::to_string(data.size()) +
                              " train_pairs=" + std::to_string(train_pairs.size()) +
                              " holdout_pairs=" + std::to_string(holdout_pairs.size()));

    AdamW opt(0.9, 0.999, 1e-8, 0.0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = train_pairs.size(); i > 1; --i)
            std::swap(train_pairs[i - 1],
                      train_pairs[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);

        double loss_sum = 0.0;
        size_t correct = 0;
        for (size_t start = 0; start < train_pairs.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(train_pairs.size(), start + static_cast<size_t>(cfg.batch_size));
            std::map<std::string, std::vector<double>> grad_accum;
            for (size_t k = start; k < end; ++k) {
                const PreferencePair& pair = train_pairs[k];
                Graph g;
                ModelForward model(g, ckpt);
                TensorNode* c = score_node(g, model, pair.x, pair.y_c, nullptr);
                TensorNode* r = score_node(g, model, pair.x, pair.y_r, nullptr);
                TensorNode* loss = g.softplus(g.scale(g.sub(c, r), -1.0));
                if (!std::isfinite(loss->data[0]))
                    throw TrainError("train_reward: non-finite loss at epoch " +
                                     std::to_string(epoch + 1));
                loss_sum += loss->data[0];
                if (c->data[0] > r->data[0]) ++correct;
                g.backward(loss);
                for (const auto& [name, leaf] : model.leaves()) {
                    auto& acc = grad_accum[name];
                    if (acc.empty()) acc.assign(leaf->grad.size(), 0.0);
                    for (size_t j = 0; j < acc.size(); ++j) acc[j] += leaf->grad[j];
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            opt.begin_step();
            for (auto& [name, grad] : grad_accum) {
                for (double& v : grad) v *= inv;
                opt.update(name, ckpt.params.at(name).data, grad, cfg.lr);
            }
        }

        RewardEpochMetrics em;
        em.epoch = epoch + 1;
        em.train_loss = loss_sum / static_cast<double>(train_pairs.size());
        em.train_accuracy =
            static_cast<double>(correct) / static_cast<double>(train_pairs.size());
        if (holdout_pairs.empty()) {
            em.holdout_accuracy = std::numeric_limits<double>::quiet_NaN();
        } else {
            size_t ok = 0;
            for (const PreferencePair& pair : holdout_pairs)
                if (eval_pair(ckpt, pair).correct) ++ok;
            em.holdout_accuracy =
                static_cast<double>(ok) / static_cast<double>(holdout_pairs.size());
        }
        if (metrics) metrics->push_back(em);
    }
    return ckpt;
}

} // namespace okapi
