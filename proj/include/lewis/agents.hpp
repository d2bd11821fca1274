#pragma once

#include <cmath>
#include <vector>

#include "lewis/game.hpp"
#include "lewis/nn.hpp"

namespace lewis {

// Probability floor used wherever a log is taken of a softmax output:
// log(kMinProb) = -50. Sampled tokens can only hit it through rounding
// pathologies; listener targets hit it when a head saturates wrongly.
inline const double kMinProb = std::exp(-50.0);

struct SpeakerAgent {
    Linear input_proj;     // K*V -> h, initializes the recurrent state
    LstmCell cell;         // input dim = h (token embeddings)
    Embedding token_embed; // [W+2, h]: tokens, EoS, start-of-sequence
    Linear output_proj;    // h -> W; EoS is outside the softmax
    double update_prob = 1.0;
    int hidden_size = 0;

    SpeakerAgent() = default;
    SpeakerAgent(const GameConfig& game, int hidden, double p, Rng init_rng);
    ParamRefs params();

    struct Bound {
        Linear::Bound input_proj, output_proj;
        LstmCell::Bound cell;
        Embedding::Bound token_embed;
        std::vector<int> flat;  // leaf ids in params() order
    };
    Bound bind(Tape& t) const;
    // Reassembles a Bound from leaf ids laid out in params() order; lets
    // tests differentiate with externally supplied parameter leaves.
    static Bound bound_from_flat(const std::vector<int>& flat);
};

struct ListenerAgent {
    Embedding token_embed;      // [W+1, embed_dim]: tokens + EoS
    LstmCell cell;              // input dim = embed_dim
    std::vector<Linear> heads;  // K heads, h -> V each
    double update_prob = 1.0;
    int hidden_size = 0;

    ListenerAgent() = default;
    ListenerAgent(const GameConfig& game, int hidden, int embed_dim, double p, Rng init_rng);
    ParamRefs params();

    struct Bound {
        Embedding::Bound token_embed;
        LstmCell::Bound cell;
        std::vector<Linear::Bound> heads;
        std::vector<int> flat;
    };
    Bound bind(Tape& t) const;
    static Bound bound_from_flat(const std::vector<int>& flat);
};

// One autoregressive batch rollout. step_log_probs[t] and step_entropies[t]
// are [B] nodes on the tape that produced the rollout: the sampled token's
// log-probability and the full categorical entropy at step t.
struct SpeakerRollout {
    std::vector<Message> messages;
    std::vector<int> step_log_probs;
    std::vector<int> step_entropies;
};

// Samples T tokens per object (one uniform per example per step, batch-major)
// and appends the fixed EoS.
SpeakerRollout speaker_sample_batch(Tape& t, const SpeakerAgent::Bound& p,
                                    const std::vector<ObjectInstance>& objs,
                                    const GameConfig& cfg, Rng& rng);

// Teacher-forced variant: identical graph, but the tokens come from msgs
// instead of being sampled. Used to differentiate the policy-gradient
// surrogate with frozen messages.
SpeakerRollout speaker_forced_batch(Tape& t, const SpeakerAgent::Bound& p,
                                    const std::vector<ObjectInstance>& objs,
                                    const std::vector<Message>& msgs, const GameConfig& cfg);

// Argmax decoding; no tape or RNG involvement.
std::vector<Message> speaker_greedy_batch(const SpeakerAgent& s,
                                          const std::vector<ObjectInstance>& objs,
                                          const GameConfig& cfg);

// K per-attribute distribution nodes, each [B, V], computed from the LSTM
// state after consuming all T tokens and the EoS.
struct ListenerOutputs {
    std::vector<int> head_probs;
};

ListenerOutputs listener_forward_batch(Tape& t, const ListenerAgent::Bound& p,
                                       const std::vector<Message>& msgs, const GameConfig& cfg);

// Single-example wrappers over the batch paths.
struct SpeakerSample {
    Message message;
    NArray log_probs;  // [T]
    NArray entropies;  // [T]
};
SpeakerSample speaker_sample(const SpeakerAgent& s, const ObjectInstance& v, const GameConfig& cfg,
                             Rng& rng);
Message speaker_greedy(const SpeakerAgent& s, const ObjectInstance& v, const GameConfig& cfg);
// [K, V] row-stochastic matrix of attribute-value probabilities.
NArray listener_forward(const ListenerAgent& l, const Message& m, const GameConfig& cfg);

// Value-only evaluation helpers; they chunk internally so tape memory stays
// bounded on large object lists.
struct SampledMessages {
    std::vector<Message> messages;
    std::vector<std::vector<double>> step_entropies;  // [i][t]
};
SampledMessages sample_messages(const SpeakerAgent& s, const std::vector<ObjectInstance>& objs,
                                const GameConfig& cfg, Rng& rng);
std::vector<Message> greedy_messages(const SpeakerAgent& s, const std::vector<ObjectInstance>& objs,
                                     const GameConfig& cfg);
// Per-message argmax decode across all K heads.
std::vector<ObjectInstance> listener_decode(const ListenerAgent& l,
                                            const std::vector<Message>& msgs,
                                            const GameConfig& cfg);

}  // namespace lewis
