#pragma once

#include <cstdint>
#include <vector>

#include "lewis/agents.hpp"

namespace lewis {

struct TrainHyper {
    double entropy_coefficient = 0.02;
    int batch_size = 1024;
};

// One game iteration's tensors: objects, the speaker's sampled messages with
// their gradient-bearing log-prob/entropy nodes, and the listener's
// per-attribute distributions over those messages.
struct StepBatch {
    std::vector<ObjectInstance> objects;
    SpeakerRollout rollout;
    ListenerOutputs listener;
};

StepBatch make_step_batch(Tape& t, const SpeakerAgent::Bound& sp, const ListenerAgent::Bound& lp,
                          std::vector<ObjectInstance> objects, const GameConfig& cfg,
                          Rng& token_rng);

// [B] node: -(1/K) sum_k log pi_k(true value | m), with each log clamped at
// -50; *clamp_count (if given) accumulates how many entries hit the floor.
int per_example_nll(Tape& t, const StepBatch& batch, const GameConfig& cfg,
                    std::int64_t* clamp_count);

// Scalar node: the batch-mean reconstruction NLL, sum_b nll_b * (1/B).
int listener_loss(Tape& t, const StepBatch& batch, const GameConfig& cfg,
                  std::int64_t* clamp_count = nullptr);

// Terminal rewards r_b = -nll_b; every earlier timestep's reward is zero by
// construction, so this is the only reward vector a step produces.
std::vector<double> speaker_reward(Tape& t, const StepBatch& batch, const GameConfig& cfg,
                                   std::int64_t* clamp_count = nullptr);

// (x - mean) / population std; all zeros when std < 1e-8. Batch size >= 2.
std::vector<double> normalize_rewards(const std::vector<double>& rewards);

// Scalar node: -(1/(B*T)) sum_b sum_t [log pi(m_t) * rbar_b + coef * H_t,b].
// The normalized rewards enter as constants; no gradient flows through them.
int speaker_loss(Tape& t, const StepBatch& batch, const std::vector<double>& normalized_rewards,
                 const TrainHyper& hyper);

struct StepMetrics {
    double listener_loss = 0.0;
    double mean_reward = 0.0;
    double speaker_entropy = 0.0;  // mean per-token entropy over the batch
    bool speaker_updated = false;
    bool listener_updated = false;
    std::int64_t clamped_logs = 0;
};

// The streams a training step consumes, in a fixed order: batch object draws,
// token sampling, then one gate uniform per role. Gate draws happen every
// step regardless of p, so two configs with equal p values replay identically.
struct TrainStreams {
    Rng* batch;
    Rng* tokens;
    Rng* gate_speaker;
    Rng* gate_listener;
};

// One game iteration: sample B objects with replacement, roll the game,
// compute both losses (always), then apply each agent's Adam step with
// probability agent.update_prob. Non-finite loss values abort the run.
StepMetrics train_step(SpeakerAgent& speaker, Adam& speaker_opt, ListenerAgent& listener,
                       Adam& listener_opt, const std::vector<ObjectInstance>& train_objects,
                       const GameConfig& cfg, const TrainHyper& hyper, TrainStreams streams);

}  // namespace lewis
