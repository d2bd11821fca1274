#include "lewis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lewis/errors.hpp"

namespace lewis {

SpeakerView make_speaker_view(const SpeakerAgent& s, const GameConfig& cfg) {
    SpeakerView v;
    v.sample = [s, cfg](const std::vector<ObjectInstance>& objs, Rng& rng) {
        return sample_messages(s, objs, cfg, rng);
    };
    v.greedy = [s, cfg](const std::vector<ObjectInstance>& objs) {
        return greedy_messages(s, objs, cfg);
    };
    return v;
}

ListenerView make_listener_view(const ListenerAgent& l, const GameConfig& cfg) {
    ListenerView v;
    v.decode = [l, cfg](const std::vector<Message>& msgs) { return listener_decode(l, msgs, cfg); };
    return v;
}

int edit_distance(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::span<const std::int32_t> message_core(const Message& m) {
    if (m.tokens.empty()) throw ContractError("message_core: empty message");
    return {m.tokens.data(), m.tokens.size() - 1};
}

double object_distance(const ObjectInstance& a, const ObjectInstance& b) {
    if (a.size() != b.size() || a.empty())
        throw ContractError("object_distance: attribute counts differ");
    int diff = 0;
    for (std::size_t k = 0; k < a.size(); ++k) diff += a[k] != b[k] ? 1 : 0;
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

double language_distance(const SpeakerView& a, const SpeakerView& b,
                         const std::vector<ObjectInstance>& objects, int samples_per_object,
                         const GameConfig& cfg, Rng rng_a, Rng rng_b) {
    if (objects.empty()) throw ContractError("language_distance: empty object set");
    if (samples_per_object < 1) throw ContractError("language_distance: need >= 1 sample");
    double total = 0.0;
    for (int round = 0; round < samples_per_object; ++round) {
        const std::vector<Message> ma = a.sample(objects, rng_a).messages;
        const std::vector<Message> mb = b.sample(objects, rng_b).messages;
        for (std::size_t i = 0; i < objects.size(); ++i)
            total += edit_distance(message_core(ma[i]), message_core(mb[i]));
    }
    const double comparisons = static_cast<double>(objects.size()) * samples_per_object;
    return total / (comparisons * cfg.T);
}

std::optional<double> speaker_sync(const std::vector<SpeakerView>& speakers,
                                   const std::vector<ObjectInstance>& objects,
                                   int samples_per_object, const GameConfig& cfg, Rng base) {
    if (speakers.empty()) throw ContractError("speaker_sync: no speakers");
    const std::size_t n = speakers.size();
    if (n == 1) return std::nullopt;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::uint64_t key = static_cast<std::uint64_t>(i) * n + j;
            total += language_distance(speakers[i], speakers[j], objects, samples_per_object, cfg,
                                       base.stream("sync_lo", key), base.stream("sync_hi", key));
            ++pairs;
        }
    }
    return 1.0 - total / static_cast<double>(pairs);
}

double entropy_estimate(const SpeakerView& s, const std::vector<ObjectInstance>& objects,
                        int samples_per_object, Rng rng) {
    if (objects.empty()) throw ContractError("entropy_estimate: empty object set");
    if (samples_per_object < 1) throw ContractError("entropy_estimate: need >= 1 sample");
    double total = 0.0;
    for (int round = 0; round < samples_per_object; ++round) {
        const SampledMessages out = s.sample(objects, rng);
        for (const std::vector<double>& steps : out.step_entropies)
            for (double h : steps) total += h;
    }
    return total / (static_cast<double>(objects.size()) * samples_per_object);
}

namespace {

// Average ranks, 1-based; ties share the mean of their rank span.
std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ContractError("spearman: inputs must have equal length >= 2");
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx <= 0.0 || vy <= 0.0) return std::nullopt;
    return cov / std::sqrt(vx * vy);
}

std::optional<double> topographic_similarity(const SpeakerView& s,
                                             const std::vector<ObjectInstance>& objects,
                                             Rng rng, std::string* reason) {
    if (objects.size() < 2) throw ContractError("topographic_similarity: need >= 2 objects");
    // One sampled message per object: greedy decoding of even an untrained
    // network inherits object structure through its continuity, which would
    // put a strong floor under the correlation.
    const std::vector<Message> msgs = s.sample(objects, rng).messages;
    std::vector<double> d_obj, d_mes;
    if (objects.size() <= kTopsimExactPairCap) {
        for (std::size_t i = 0; i + 1 < objects.size(); ++i) {
            for (std::size_t j = i + 1; j < objects.size(); ++j) {
                d_obj.push_back(object_distance(objects[i], objects[j]));
                d_mes.push_back(edit_distance(message_core(msgs[i]), message_core(msgs[j])));
            }
        }
    } else {
        for (int k = 0; k < kTopsimSampledPairs; ++k) {
            std::size_t i = rng.uniform_int(objects.size());
            std::size_t j = rng.uniform_int(objects.size());
            while (j == i) j = rng.uniform_int(objects.size());
            d_obj.push_back(object_distance(objects[i], objects[j]));
            d_mes.push_back(edit_distance(message_core(msgs[i]), message_core(msgs[j])));
        }
    }
    const std::optional<double> rho = spearman(d_obj, d_mes);
    if (!rho && reason)
        *reason = "zero variance in object distances or message distances over the pair set";
    return rho;
}

double generalization(const SpeakerView& s, const ListenerView& l,
                      const std::vector<ObjectInstance>& objects) {
    if (objects.empty()) throw ContractError("generalization: empty object set");
    const std::vector<Message> msgs = s.greedy(objects);
    const std::vector<ObjectInstance> decoded = l.decode(msgs);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < objects.size(); ++i) exact += decoded[i] == objects[i] ? 1 : 0;
    return static_cast<double>(exact) / static_cast<double>(objects.size());
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j{{"eval_step", eval_step},
                     {"neg_entropy", neg_entropy},
                     {"generalization", generalization},
                     {"train_accuracy", train_accuracy}};
    j["sync"] = sync ? nlohmann::json(*sync) : nlohmann::json(nullptr);
    j["topsim"] = topsim ? nlohmann::json(*topsim) : nlohmann::json(nullptr);
    j["topsim_reason"] = topsim_reason;
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.eval_step = j.at("eval_step").get<std::int64_t>();
    r.neg_entropy = j.at("neg_entropy").get<double>();
    r.generalization = j.at("generalization").get<double>();
    r.train_accuracy = j.at("train_accuracy").get<double>();
    if (!j.at("sync").is_null()) r.sync = j.at("sync").get<double>();
    if (!j.at("topsim").is_null()) r.topsim = j.at("topsim").get<double>();
    r.topsim_reason = j.at("topsim_reason").get<std::string>();
    return r;
}

MetricsReport evaluate_population(const Population& pop, const DatasetSplit& data,
                                  const GameConfig& cfg, const EvalOptions& opts, Rng rng,
                                  std::int64_t eval_step) {
    if (pop.speakers.empty() || pop.listeners.empty())
        throw ContractError("evaluate_population: population not built");
    MetricsReport report;
    report.eval_step = eval_step;

    std::vector<SpeakerView> speaker_views;
    for (const SpeakerAgent& s : pop.speakers) speaker_views.push_back(make_speaker_view(s, cfg));

    report.sync = speaker_sync(speaker_views, data.train, opts.sync_samples_per_object, cfg,
                               rng.stream("sync"));

    double entropy_total = 0.0;
    for (std::size_t i = 0; i < speaker_views.size(); ++i)
        entropy_total += entropy_estimate(speaker_views[i], data.train,
                                          opts.entropy_samples_per_object,
                                          rng.stream("entropy", i));
    report.neg_entropy = -entropy_total / static_cast<double>(speaker_views.size());

    double topsim_total = 0.0;
    std::size_t topsim_present = 0;
    std::string first_reason;
    for (std::size_t i = 0; i < speaker_views.size(); ++i) {
        std::string reason;
        const std::optional<double> rho =
            topographic_similarity(speaker_views[i], data.train, rng.stream("topsim", i), &reason);
        if (rho) {
            topsim_total += *rho;
            ++topsim_present;
        } else if (first_reason.empty()) {
            first_reason = reason;
        }
    }
    if (topsim_present > 0) {
        report.topsim = topsim_total / static_cast<double>(topsim_present);
    } else {
        report.topsim_reason = first_reason;
    }

    // Greedy messages are speaker-only work: compute once per speaker per
    // split, then decode with every listener.
    auto pair_accuracy = [&](const std::vector<ObjectInstance>& objects) {
        double total = 0.0;
        for (const SpeakerView& sv : speaker_views) {
            const std::vector<Message> msgs = sv.greedy(objects);
            for (const ListenerAgent& l : pop.listeners) {
                const std::vector<ObjectInstance> decoded = listener_decode(l, msgs, cfg);
                std::size_t exact = 0;
                for (std::size_t i = 0; i < objects.size(); ++i)
                    exact += decoded[i] == objects[i] ? 1 : 0;
                total += static_cast<double>(exact) / static_cast<double>(objects.size());
            }
        }
        return total / static_cast<double>(pop.speakers.size() * pop.listeners.size());
    };
    report.generalization = pair_accuracy(data.test);
    report.train_accuracy = pair_accuracy(data.train);
    return report;
}

std::optional<double> sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return std::nullopt;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

StabilityReport stability(const std::vector<MetricsReport>& seed_reports) {
    if (seed_reports.size() < 2) throw ContractError("stability: need >= 2 seeds");
    StabilityReport out;
    std::vector<double> sync, neg_entropy, topsim, gene, train;
    for (const MetricsReport& r : seed_reports) {
        if (r.sync) sync.push_back(*r.sync);
        if (r.topsim) topsim.push_back(*r.topsim);
        neg_entropy.push_back(r.neg_entropy);
        gene.push_back(r.generalization);
        train.push_back(r.train_accuracy);
    }
    out.sync = sample_std(sync);
    out.neg_entropy = sample_std(neg_entropy);
    out.topsim = sample_std(topsim);
    out.generalization = sample_std(gene);
    out.train_accuracy = sample_std(train);
    return out;
}

std::optional<double> relative_variation(double mean_small, double mean_large) {
    if (std::abs(mean_small) < 1e-12) return std::nullopt;
    return 100.0 * (mean_large - mean_small) / mean_small;
}

}  // namespace lewis
