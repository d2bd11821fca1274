#include "lewis/agents.hpp"

#include <span>

#include "lewis/errors.hpp"

namespace lewis {

namespace {

constexpr std::size_t kEvalChunk = 256;

void check_agent_args(int hidden, double p) {
    if (hidden < 1) throw ConfigError("agent: hidden size must be >= 1");
    // p = 0 is the explicit frozen-agent case: the gate draw still happens
    // every step but never passes.
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("agent: update probability must lie in [0, 1]");
}

}  // namespace

SpeakerAgent::SpeakerAgent(const GameConfig& game, int hidden, double p, Rng init_rng)
    : input_proj(game.object_dim(), hidden, init_rng),
      cell(hidden, hidden, init_rng),
      token_embed(game.speaker_vocab(), hidden, init_rng),
      output_proj(hidden, game.W, init_rng),
      update_prob(p),
      hidden_size(hidden) {
    check_agent_args(hidden, p);
}

ParamRefs SpeakerAgent::params() {
    ParamRefs refs;
    input_proj.collect(refs, "input_proj");
    cell.collect(refs, "cell");
    token_embed.collect(refs, "token_embed");
    output_proj.collect(refs, "output_proj");
    return refs;
}

SpeakerAgent::Bound SpeakerAgent::bind(Tape& t) const {
    Bound p;
    p.input_proj = input_proj.bind(t, p.flat);
    p.cell = cell.bind(t, p.flat);
    p.token_embed = token_embed.bind(t, p.flat);
    p.output_proj = output_proj.bind(t, p.flat);
    return p;
}

SpeakerAgent::Bound SpeakerAgent::bound_from_flat(const std::vector<int>& flat) {
    if (flat.size() != 2 + 20 + 1 + 2) throw ContractError("speaker bound: wrong leaf count");
    Bound p;
    p.flat = flat;
    std::size_t at = 0;
    p.input_proj = {flat[at], flat[at + 1]};
    at += 2;
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.w_x[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.w_h[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.b[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.ln_gain[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.ln_bias[g] = flat[at++];
    p.token_embed = {flat[at++]};
    p.output_proj = {flat[at], flat[at + 1]};
    return p;
}

ListenerAgent::ListenerAgent(const GameConfig& game, int hidden, int embed_dim, double p,
                             Rng init_rng)
    : token_embed(game.listener_vocab(), embed_dim, init_rng),
      cell(embed_dim, hidden, init_rng),
      update_prob(p),
      hidden_size(hidden) {
    check_agent_args(hidden, p);
    if (embed_dim < 1) throw ConfigError("agent: embedding dim must be >= 1");
    heads.reserve(static_cast<std::size_t>(game.K));
    for (int k = 0; k < game.K; ++k) heads.emplace_back(hidden, game.V, init_rng);
}

ParamRefs ListenerAgent::params() {
    ParamRefs refs;
    token_embed.collect(refs, "token_embed");
    cell.collect(refs, "cell");
    for (std::size_t k = 0; k < heads.size(); ++k)
        heads[k].collect(refs, "head_" + std::to_string(k));
    return refs;
}

ListenerAgent::Bound ListenerAgent::bind(Tape& t) const {
    Bound p;
    p.token_embed = token_embed.bind(t, p.flat);
    p.cell = cell.bind(t, p.flat);
    p.heads.reserve(heads.size());
    for (const Linear& head : heads) p.heads.push_back(head.bind(t, p.flat));
    return p;
}

ListenerAgent::Bound ListenerAgent::bound_from_flat(const std::vector<int>& flat) {
    if (flat.size() < 1 + 20 + 2 || (flat.size() - 21) % 2 != 0)
        throw ContractError("listener bound: wrong leaf count");
    Bound p;
    p.flat = flat;
    std::size_t at = 0;
    p.token_embed = {flat[at++]};
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.w_x[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.w_h[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.b[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.ln_gain[g] = flat[at++];
    for (int g = 0; g < LstmCell::kGates; ++g) p.cell.ln_bias[g] = flat[at++];
    while (at < flat.size()) {
        p.heads.push_back({flat[at], flat[at + 1]});
        at += 2;
    }
    return p;
}

namespace {

enum class TokenSource { kSample, kGreedy, kForced };

// Shared autoregressive loop. Greedy mode consumes no rng and builds no
// gradient-bearing log/entropy nodes; forced mode replays given messages.
SpeakerRollout rollout(Tape& t, const SpeakerAgent::Bound& p,
                       const std::vector<ObjectInstance>& objs, const GameConfig& cfg,
                       TokenSource source, Rng* rng, const std::vector<Message>* forced) {
    const int batch = static_cast<int>(objs.size());
    if (batch == 0) throw ContractError("speaker rollout: empty batch");

    SpeakerRollout out;
    out.messages.resize(static_cast<std::size_t>(batch));
    for (Message& m : out.messages) m.tokens.reserve(static_cast<std::size_t>(cfg.T + 1));

    LstmCell::State state;
    state.h = Linear::apply(t, p.input_proj, t.leaf(one_hot_rows(objs, cfg)));
    state.c = t.leaf(NArray({batch, t.val(state.h).last_dim()}));

    std::vector<std::int32_t> prev(static_cast<std::size_t>(batch),
                                   static_cast<std::int32_t>(cfg.start_token()));
    for (int step = 0; step < cfg.T; ++step) {
        state = LstmCell::step(t, p.cell, Embedding::apply(t, p.token_embed, prev), state);
        const int probs = t.softmax_last(Linear::apply(t, p.output_proj, state.h));
        const NArray& pv = t.val(probs);
        for (int b = 0; b < batch; ++b) {
            const double* row = pv.data() + static_cast<std::size_t>(b) * cfg.W;
            int tok = 0;
            switch (source) {
                case TokenSource::kSample:
                    tok = rng->categorical(
                        std::span<const double>(row, static_cast<std::size_t>(cfg.W)));
                    break;
                case TokenSource::kGreedy:
                    for (int w = 1; w < cfg.W; ++w)
                        if (row[w] > row[tok]) tok = w;
                    break;
                case TokenSource::kForced:
                    tok = (*forced)[static_cast<std::size_t>(b)]
                              .tokens[static_cast<std::size_t>(step)];
                    break;
            }
            prev[static_cast<std::size_t>(b)] = static_cast<std::int32_t>(tok);
            out.messages[static_cast<std::size_t>(b)].tokens.push_back(
                static_cast<std::int32_t>(tok));
        }
        if (source != TokenSource::kGreedy) {
            out.step_log_probs.push_back(
                t.log(t.clamp_min(t.gather_last(probs, prev), kMinProb)));
            out.step_entropies.push_back(
                t.scale(t.sum_last(t.mul(probs, t.log(t.clamp_min(probs, kMinProb)))), -1.0));
        }
    }
    const auto eos = static_cast<std::int32_t>(cfg.eos_token());
    for (Message& m : out.messages) m.tokens.push_back(eos);
    return out;
}

}  // namespace

SpeakerRollout speaker_sample_batch(Tape& t, const SpeakerAgent::Bound& p,
                                    const std::vector<ObjectInstance>& objs,
                                    const GameConfig& cfg, Rng& rng) {
    return rollout(t, p, objs, cfg, TokenSource::kSample, &rng, nullptr);
}

SpeakerRollout speaker_forced_batch(Tape& t, const SpeakerAgent::Bound& p,
                                    const std::vector<ObjectInstance>& objs,
                                    const std::vector<Message>& msgs, const GameConfig& cfg) {
    if (msgs.size() != objs.size()) throw ContractError("forced rollout: objects/messages mismatch");
    return rollout(t, p, objs, cfg, TokenSource::kForced, nullptr, &msgs);
}

std::vector<Message> speaker_greedy_batch(const SpeakerAgent& s,
                                          const std::vector<ObjectInstance>& objs,
                                          const GameConfig& cfg) {
    std::vector<Message> out;
    out.reserve(objs.size());
    for (std::size_t at = 0; at < objs.size(); at += kEvalChunk) {
        const std::vector<ObjectInstance> chunk(
            objs.begin() + static_cast<std::ptrdiff_t>(at),
            objs.begin() + static_cast<std::ptrdiff_t>(std::min(at + kEvalChunk, objs.size())));
        Tape t;
        SpeakerRollout r = rollout(t, s.bind(t), chunk, cfg, TokenSource::kGreedy, nullptr, nullptr);
        for (Message& m : r.messages) out.push_back(std::move(m));
    }
    return out;
}

ListenerOutputs listener_forward_batch(Tape& t, const ListenerAgent::Bound& p,
                                       const std::vector<Message>& msgs, const GameConfig& cfg) {
    const int batch = static_cast<int>(msgs.size());
    if (batch == 0) throw ContractError("listener forward: empty batch");
    const int hidden = t.val(p.cell.w_h[0]).dim(0);

    LstmCell::State state = LstmCell::initial_state(t, batch, hidden);
    std::vector<std::int32_t> ids(static_cast<std::size_t>(batch));
    for (int step = 0; step <= cfg.T; ++step) {
        for (int b = 0; b < batch; ++b)
            ids[static_cast<std::size_t>(b)] = msgs[static_cast<std::size_t>(b)]
                                                   .tokens[static_cast<std::size_t>(step)];
        state = LstmCell::step(t, p.cell, Embedding::apply(t, p.token_embed, ids), state);
    }

    ListenerOutputs out;
    out.head_probs.reserve(p.heads.size());
    for (const Linear::Bound& head : p.heads)
        out.head_probs.push_back(t.softmax_last(Linear::apply(t, head, state.h)));
    return out;
}

SpeakerSample speaker_sample(const SpeakerAgent& s, const ObjectInstance& v, const GameConfig& cfg,
                             Rng& rng) {
    Tape t;
    SpeakerRollout r = speaker_sample_batch(t, s.bind(t), {v}, cfg, rng);
    SpeakerSample out;
    out.message = std::move(r.messages[0]);
    out.log_probs = NArray({cfg.T});
    out.entropies = NArray({cfg.T});
    for (int step = 0; step < cfg.T; ++step) {
        out.log_probs.v[static_cast<std::size_t>(step)] =
            t.val(r.step_log_probs[static_cast<std::size_t>(step)]).v[0];
        out.entropies.v[static_cast<std::size_t>(step)] =
            t.val(r.step_entropies[static_cast<std::size_t>(step)]).v[0];
    }
    return out;
}

Message speaker_greedy(const SpeakerAgent& s, const ObjectInstance& v, const GameConfig& cfg) {
    return speaker_greedy_batch(s, {v}, cfg)[0];
}

NArray listener_forward(const ListenerAgent& l, const Message& m, const GameConfig& cfg) {
    if (!is_valid_message(m, cfg)) throw ConfigError("listener: invalid message");
    Tape t;
    ListenerOutputs out = listener_forward_batch(t, l.bind(t), {m}, cfg);
    NArray probs({cfg.K, cfg.V});
    for (int k = 0; k < cfg.K; ++k)
        for (int j = 0; j < cfg.V; ++j)
            probs.v[static_cast<std::size_t>(k * cfg.V + j)] =
                t.val(out.head_probs[static_cast<std::size_t>(k)]).v[static_cast<std::size_t>(j)];
    return probs;
}

SampledMessages sample_messages(const SpeakerAgent& s, const std::vector<ObjectInstance>& objs,
                                const GameConfig& cfg, Rng& rng) {
    SampledMessages out;
    out.messages.reserve(objs.size());
    out.step_entropies.reserve(objs.size());
    for (std::size_t at = 0; at < objs.size(); at += kEvalChunk) {
        const std::vector<ObjectInstance> chunk(
            objs.begin() + static_cast<std::ptrdiff_t>(at),
            objs.begin() + static_cast<std::ptrdiff_t>(std::min(at + kEvalChunk, objs.size())));
        Tape t;
        SpeakerRollout r = speaker_sample_batch(t, s.bind(t), chunk, cfg, rng);
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            out.messages.push_back(std::move(r.messages[b]));
            std::vector<double> ent(static_cast<std::size_t>(cfg.T));
            for (int step = 0; step < cfg.T; ++step)
                ent[static_cast<std::size_t>(step)] =
                    t.val(r.step_entropies[static_cast<std::size_t>(step)]).v[b];
            out.step_entropies.push_back(std::move(ent));
        }
    }
    return out;
}

std::vector<Message> greedy_messages(const SpeakerAgent& s, const std::vector<ObjectInstance>& objs,
                                     const GameConfig& cfg) {
    return speaker_greedy_batch(s, objs, cfg);
}

std::vector<ObjectInstance> listener_decode(const ListenerAgent& l,
                                            const std::vector<Message>& msgs,
                                            const GameConfig& cfg) {
    std::vector<ObjectInstance> out;
    out.reserve(msgs.size());
    for (std::size_t at = 0; at < msgs.size(); at += kEvalChunk) {
        const std::vector<Message> chunk(
            msgs.begin() + static_cast<std::ptrdiff_t>(at),
            msgs.begin() + static_cast<std::ptrdiff_t>(std::min(at + kEvalChunk, msgs.size())));
        Tape t;
        ListenerOutputs lo = listener_forward_batch(t, l.bind(t), chunk, cfg);
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            ObjectInstance v(static_cast<std::size_t>(cfg.K));
            for (int k = 0; k < cfg.K; ++k) {
                const NArray& probs = t.val(lo.head_probs[static_cast<std::size_t>(k)]);
                const double* row = probs.data() + b * static_cast<std::size_t>(cfg.V);
                int best = 0;
                for (int j = 1; j < cfg.V; ++j)
                    if (row[j] > row[best]) best = j;
                v[static_cast<std::size_t>(k)] = best;
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

}  // namespace lewis
