#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lewis/population.hpp"

namespace lewis {

// Evaluation works against these views rather than the agent types so tests
// can inject hand-built codebooks. The factories below snapshot an agent by
// value; a view stays valid after the live agent trains on.
struct SpeakerView {
    std::function<SampledMessages(const std::vector<ObjectInstance>&, Rng&)> sample;
    std::function<std::vector<Message>(const std::vector<ObjectInstance>&)> greedy;
};

struct ListenerView {
    std::function<std::vector<ObjectInstance>(const std::vector<Message>&)> decode;
};

SpeakerView make_speaker_view(const SpeakerAgent& s, const GameConfig& cfg);
ListenerView make_listener_view(const ListenerAgent& l, const GameConfig& cfg);

// Levenshtein distance with unit insert/delete/substitute costs.
int edit_distance(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

// The T payload tokens of a message, excluding the trailing end marker
// (identical everywhere, so it carries no distance information).
std::span<const std::int32_t> message_core(const Message& m);

// Fraction of attribute positions where the two objects disagree.
double object_distance(const ObjectInstance& a, const ObjectInstance& b);

// Monte Carlo estimate of the expected edit distance between the two
// speakers' sampled messages, each distance normalized by T. Each speaker
// draws from its own stream, so swapping (a, rng_a) with (b, rng_b) replays
// the same message pairs and returns the identical value.
double language_distance(const SpeakerView& a, const SpeakerView& b,
                         const std::vector<ObjectInstance>& objects, int samples_per_object,
                         const GameConfig& cfg, Rng rng_a, Rng rng_b);

// 1 minus the mean language distance over all unordered speaker pairs; each
// pair's two sampling streams are derived from `base` and the pair's
// canonical (low, high) index key. Absent when the population has one speaker.
std::optional<double> speaker_sync(const std::vector<SpeakerView>& speakers,
                                   const std::vector<ObjectInstance>& objects,
                                   int samples_per_object, const GameConfig& cfg, Rng base);

// Mean over objects and sampled trajectories of the per-step categorical
// entropy sum (natural log): a per-token analytic estimator of the language
// entropy along the sampling distribution.
double entropy_estimate(const SpeakerView& s, const std::vector<ObjectInstance>& objects,
                        int samples_per_object, Rng rng);

// Spearman rank correlation with average-rank tie handling. Absent when
// either side has zero rank variance.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

// Spearman correlation between object distance and raw message edit distance
// over unordered object pairs (all pairs up to the exact cap, a fixed-size
// uniform sample beyond it), with one sampled message per object drawn from
// `rng`. Absent on zero variance; `reason` is filled when given.
inline constexpr std::size_t kTopsimExactPairCap = 512;   // object-count threshold
inline constexpr int kTopsimSampledPairs = 10000;
std::optional<double> topographic_similarity(const SpeakerView& s,
                                             const std::vector<ObjectInstance>& objects,
                                             Rng rng, std::string* reason = nullptr);

// Fraction of objects whose greedy message decodes back to exactly the
// object, attribute for attribute.
double generalization(const SpeakerView& s, const ListenerView& l,
                      const std::vector<ObjectInstance>& objects);

// One evaluation snapshot of a population.
struct MetricsReport {
    std::int64_t eval_step = 0;
    std::optional<double> sync;    // absent when N = 1
    double neg_entropy = 0.0;      // mean over speakers of -H
    std::optional<double> topsim;  // mean over speakers; absent on zero variance
    std::string topsim_reason;     // set when topsim is absent
    double generalization = 0.0;   // mean exact-match over all pairs, test split
    double train_accuracy = 0.0;   // same, train split

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

struct EvalOptions {
    int entropy_samples_per_object = 5;
    int sync_samples_per_object = 1;
};

// Full metric suite over read-only agent snapshots. Sync and topographic
// similarity are computed on the train split, generalization on the test
// split. Deterministic given (population state, rng).
MetricsReport evaluate_population(const Population& pop, const DatasetSplit& data,
                                  const GameConfig& cfg, const EvalOptions& opts, Rng rng,
                                  std::int64_t eval_step);

// Sample standard deviation (n-1 denominator); absent below two values.
std::optional<double> sample_std(const std::vector<double>& xs);

// Per-metric sample standard deviation across seeds. Absent sub-metrics are
// skipped; a field is absent when fewer than two seeds report it.
struct StabilityReport {
    std::optional<double> sync;
    std::optional<double> neg_entropy;
    std::optional<double> topsim;
    std::optional<double> generalization;
    std::optional<double> train_accuracy;
};
StabilityReport stability(const std::vector<MetricsReport>& seed_reports);

// 100 * (mean_large - mean_small) / mean_small; absent when the reference
// mean is numerically zero.
std::optional<double> relative_variation(double mean_small, double mean_large);

}  // namespace lewis
