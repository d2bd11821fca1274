#include "lewis/training.hpp"

#include <cmath>

#include "lewis/errors.hpp"

namespace lewis {

StepBatch make_step_batch(Tape& t, const SpeakerAgent::Bound& sp, const ListenerAgent::Bound& lp,
                          std::vector<ObjectInstance> objects, const GameConfig& cfg,
                          Rng& token_rng) {
    StepBatch batch;
    batch.objects = std::move(objects);
    batch.rollout = speaker_sample_batch(t, sp, batch.objects, cfg, token_rng);
    batch.listener = listener_forward_batch(t, lp, batch.rollout.messages, cfg);
    return batch;
}

int per_example_nll(Tape& t, const StepBatch& batch, const GameConfig& cfg,
                    std::int64_t* clamp_count) {
    const std::size_t B = batch.objects.size();
    int sum_log = -1;
    for (int k = 0; k < cfg.K; ++k) {
        std::vector<std::int32_t> targets(B);
        for (std::size_t b = 0; b < B; ++b)
            targets[b] = static_cast<std::int32_t>(batch.objects[b][static_cast<std::size_t>(k)]);
        const int picked = t.gather_last(batch.listener.head_probs[static_cast<std::size_t>(k)],
                                         std::move(targets));
        if (clamp_count) {
            for (double p : t.val(picked).v)
                if (p < kMinProb) ++*clamp_count;
        }
        const int lg = t.log(t.clamp_min(picked, kMinProb));
        sum_log = (sum_log < 0) ? lg : t.add(sum_log, lg);
    }
    return t.scale(sum_log, -1.0 / cfg.K);
}

int listener_loss(Tape& t, const StepBatch& batch, const GameConfig& cfg,
                  std::int64_t* clamp_count) {
    const int nll = per_example_nll(t, batch, cfg, clamp_count);
    return t.scale(t.sum_all(nll), 1.0 / static_cast<double>(batch.objects.size()));
}

std::vector<double> speaker_reward(Tape& t, const StepBatch& batch, const GameConfig& cfg,
                                   std::int64_t* clamp_count) {
    const int nll = per_example_nll(t, batch, cfg, clamp_count);
    std::vector<double> r = t.val(nll).v;
    for (double& x : r) x = -x;
    return r;
}

std::vector<double> normalize_rewards(const std::vector<double>& rewards) {
    const std::size_t n = rewards.size();
    if (n < 2) throw ContractError("normalize_rewards: batch must have at least 2 entries");
    double mean = 0.0;
    for (double x : rewards) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : rewards) var += (x - mean) * (x - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(n));
    std::vector<double> out(n, 0.0);
    if (std_dev < 1e-8) return out;
    for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / std_dev;
    return out;
}

int speaker_loss(Tape& t, const StepBatch& batch, const std::vector<double>& normalized_rewards,
                 const TrainHyper& hyper) {
    const std::size_t B = batch.objects.size();
    const int T = static_cast<int>(batch.rollout.step_log_probs.size());
    if (normalized_rewards.size() != B)
        throw ContractError("speaker_loss: reward vector does not match batch");
    const int rbar = t.leaf(NArray({static_cast<int>(B)}, normalized_rewards));
    int acc = -1;
    for (int step = 0; step < T; ++step) {
        const std::size_t s = static_cast<std::size_t>(step);
        const int term = t.add(t.mul(batch.rollout.step_log_probs[s], rbar),
                               t.scale(batch.rollout.step_entropies[s], hyper.entropy_coefficient));
        acc = (acc < 0) ? term : t.add(acc, term);
    }
    return t.scale(t.sum_all(acc), -1.0 / (static_cast<double>(B) * T));
}

StepMetrics train_step(SpeakerAgent& speaker, Adam& speaker_opt, ListenerAgent& listener,
                       Adam& listener_opt, const std::vector<ObjectInstance>& train_objects,
                       const GameConfig& cfg, const TrainHyper& hyper, TrainStreams streams) {
    if (train_objects.empty()) throw ContractError("train_step: empty train split");
    const int B = hyper.batch_size;
    std::vector<ObjectInstance> objects;
    objects.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b)
        objects.push_back(train_objects[static_cast<std::size_t>(
            streams.batch->uniform_int(static_cast<int>(train_objects.size())))]);

    Tape t;
    const SpeakerAgent::Bound sp = speaker.bind(t);
    const ListenerAgent::Bound lp = listener.bind(t);
    StepBatch batch = make_step_batch(t, sp, lp, std::move(objects), cfg, *streams.tokens);

    StepMetrics out;
    const int nll = per_example_nll(t, batch, cfg, &out.clamped_logs);
    const int l_loss = t.scale(t.sum_all(nll), 1.0 / static_cast<double>(B));

    std::vector<double> rewards = t.val(nll).v;
    for (double& x : rewards) x = -x;
    double reward_sum = 0.0;
    for (double x : rewards) reward_sum += x;
    out.mean_reward = reward_sum * (1.0 / static_cast<double>(B));

    const int s_loss = speaker_loss(t, batch, normalize_rewards(rewards), hyper);

    out.listener_loss = t.val(l_loss).v[0];
    const double s_loss_value = t.val(s_loss).v[0];
    if (!std::isfinite(out.listener_loss))
        throw NumericError("train_step: listener loss is not finite");
    if (!std::isfinite(s_loss_value)) throw NumericError("train_step: speaker loss is not finite");

    double entropy_sum = 0.0;
    for (int ent_node : batch.rollout.step_entropies)
        for (double h : t.val(ent_node).v) entropy_sum += h;
    out.speaker_entropy = entropy_sum / (static_cast<double>(B) * cfg.T);

    // Gate draws are consumed every step, one per role, whatever p is.
    out.speaker_updated = streams.gate_speaker->uniform() < speaker.update_prob;
    out.listener_updated = streams.gate_listener->uniform() < listener.update_prob;

    if (out.speaker_updated || out.listener_updated) {
        if (out.speaker_updated && out.listener_updated) {
            t.backward(t.add(s_loss, l_loss));
        } else {
            t.backward(out.speaker_updated ? s_loss : l_loss);
        }
        if (out.speaker_updated) {
            std::vector<const NArray*> grads;
            grads.reserve(sp.flat.size());
            for (int id : sp.flat) grads.push_back(&t.grad(id));
            speaker_opt.step(speaker.params(), grads);
        }
        if (out.listener_updated) {
            std::vector<const NArray*> grads;
            grads.reserve(lp.flat.size());
            for (int id : lp.flat) grads.push_back(&t.grad(id));
            listener_opt.step(listener.params(), grads);
        }
    }
    return out;
}

}  // namespace lewis
