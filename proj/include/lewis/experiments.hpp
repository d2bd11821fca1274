#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lewis/metrics.hpp"
#include "lewis/nn.hpp"
#include "lewis/population.hpp"
#include "lewis/training.hpp"

namespace lewis {

// JSON forms accept partial objects (absent fields keep the current value)
// and reject unknown keys.
void to_json(nlohmann::json& j, const GameConfig& c);
void from_json(const nlohmann::json& j, GameConfig& c);
void to_json(nlohmann::json& j, const TrainHyper& c);
void from_json(const nlohmann::json& j, TrainHyper& c);
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
void to_json(nlohmann::json& j, const HeterogeneityDistribution& c);
void from_json(const nlohmann::json& j, HeterogeneityDistribution& c);
void to_json(nlohmann::json& j, const SpeedSpec& c);
void from_json(const nlohmann::json& j, SpeedSpec& c);
void to_json(nlohmann::json& j, const CapacitySpec& c);
void from_json(const nlohmann::json& j, CapacitySpec& c);
void to_json(nlohmann::json& j, const PopulationConfig& c);
void from_json(const nlohmann::json& j, PopulationConfig& c);

// A complete run description: one population, one game, one training budget.
// `seeds` enumerates the replicas; everything else is shared across them.
struct ExperimentConfig {
    GameConfig game;
    PopulationConfig population;
    TrainHyper hyper;
    AdamConfig adam;
    std::int64_t total_steps = 4000;
    std::int64_t eval_every = 200;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6};

    void validate() const;
    nlohmann::json to_json() const;

    // Small game, h=32, batch 256: the fast profile every default points at.
    static ExperimentConfig desk_profile();
    // W=20, T=10, h=128, batch 1024: the full-scale setting.
    static ExperimentConfig paper_profile();

    // Starts from `base` and overrides the fields present in `j`.
    static ExperimentConfig parse(const nlohmann::json& j);
    static ExperimentConfig parse(const nlohmann::json& j, const ExperimentConfig& base);

    // FNV-1a over the sorted-key JSON dump with `seeds` removed: stable under
    // field reordering, independent of the seed list, 16 lowercase hex chars.
    std::string hash() const;
};

// Live training state for one (config, seed) cell. All randomness comes from
// named streams of the seed, so two Trainers built alike replay identically.
struct Trainer {
    ExperimentConfig cfg;
    std::uint64_t seed = 0;
    Population pop;
    std::vector<Adam> speaker_opts;
    std::vector<Adam> listener_opts;
    DatasetSplit data;
    Rng pairing, batch, tokens, gate_speaker, gate_listener;
    std::int64_t step = 0;

    static Trainer make(const ExperimentConfig& cfg, std::uint64_t seed);

    // Samples one speaker-listener pair and runs one game iteration.
    StepMetrics step_once();

    // Full metric suite at the current step. The evaluation stream depends
    // only on the seed, never on the step, so frozen agents produce a
    // constant metric series and evaluation never perturbs training.
    MetricsReport evaluate() const;

    // Parameters, optimizer moments, stream counters, and the step counter —
    // everything needed to continue bit-identically.
    nlohmann::json state_json();
    void restore(const nlohmann::json& j);
};

struct RunOptions {
    std::string out_root;  // empty: in-memory only, nothing persisted
    bool resume = true;    // reuse runs/<hash>/<seed>/checkpoint.json if present
    // Stop after this step, leaving a checkpoint to resume from.
    std::optional<std::int64_t> halt_after_step;
};

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<MetricsReport> series;
    MetricsReport final_report;
    double wall_seconds = 0.0;
    nlohmann::json manifest;
    std::string run_dir;  // empty for in-memory runs
    bool completed = true;
};

// Trains for total_steps, evaluating at step 0, every eval_every steps, and
// at the final step. Deterministic given (config, seed). With an out_root it
// writes runs/<hash>/<seed>/{metrics.jsonl, manifest.json, checkpoint.json}
// and resumes from the checkpoint when allowed. A non-finite loss aborts with
// the last-good checkpoint path in the error message.
RunRecord run(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opts = {});

// All seeds of the config; with an out_root also writes runs/<hash>/summary.csv.
std::vector<RunRecord> run_all_seeds(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Per-seed final metrics plus cross-seed mean and sample-std rows.
std::string summary_csv(const std::vector<RunRecord>& records);

enum class SweepAxis { kPopulationSize, kRhoSpeed, kRhoCapacity, kRhoAgents, kSigmaP };

const char* axis_name(SweepAxis axis);

// One sweep value applied to a base config:
//   population_size — N speakers and N listeners;
//   rho_speed       — p^S = min(1, v), p^L = min(1, 1/v);
//   rho_capacity    — h^S = round(v * h), h^L = h from the base capacity;
//   rho_agents      — v >= 1: (round(v), 1) agents, else (1, round(1/v));
//   sigma_p         — heterogeneous log-normal update probabilities, scale v.
ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, double value);

struct SweepCell {
    double axis_value = 0.0;
    std::uint64_t seed = 0;
    std::optional<MetricsReport> final_report;  // absent when the run failed
    std::string error;                          // failure reason for the gap
};

struct CorrelationRow {
    std::string metric;
    std::optional<double> rho;  // absent below 2 pairs or on zero variance
    int pairs = 0;
};

// Spearman correlation between axis value and each final metric, pooled over
// seeds; failed cells and absent metric values are skipped as explicit gaps.
std::vector<CorrelationRow> correlation_table(const std::vector<SweepCell>& cells);

struct SweepResult {
    std::string axis_label;
    std::vector<SweepCell> cells;
    std::vector<CorrelationRow> table;
};

// Runs every (value, seed) cell. A failed cell is recorded, not fatal.
// Requires >= 3 axis values.
SweepResult sweep(SweepAxis axis, const std::vector<double>& values,
                  const ExperimentConfig& base, const RunOptions& opts = {});

// Same cell/correlation machinery over pre-built configs (e.g. the symmetric
// update-probability sweep, which is not one of the ratio axes).
SweepResult sweep_configs(const std::string& axis_label,
                          const std::vector<std::pair<double, ExperimentConfig>>& cells,
                          const RunOptions& opts = {});

std::string sweep_csv(const SweepResult& result);

// Final reports of all seeds of one population size at one sigma_p.
struct SigmaEnsemble {
    double sigma_p = 0.0;
    std::vector<MetricsReport> finals;
};

struct Fig4Row {
    double sigma_p = 0.0;
    std::string metric;
    std::optional<double> mean_variation;  // 100 * (large - small) / small
    std::optional<double> std_variation;   // same, over cross-seed sample stds
};

// Relative variation of cross-seed means and stds between a small and a large
// population, per sigma_p and metric. The grids must match exactly; an entry
// is absent when its small-population reference is zero or unavailable.
std::vector<Fig4Row> fig4_report(const std::vector<SigmaEnsemble>& small_n,
                                 const std::vector<SigmaEnsemble>& large_n);

std::string fig4_csv(const std::vector<Fig4Row>& rows);

// Trains `speaker` against a frozen copy of `listener` (update probability
// forced to 0) until greedy train accuracy reaches `target`, checking at
// step 0 and every check_every steps; absent on timeout at step_cap.
std::optional<std::int64_t> steps_to_accuracy(SpeakerAgent speaker, ListenerAgent listener,
                                              const DatasetSplit& data, const GameConfig& game,
                                              const TrainHyper& hyper, const AdamConfig& adam,
                                              std::int64_t step_cap, std::int64_t check_every,
                                              double target, Rng master);

struct ProbeRow {
    int fresh_hidden = 0;
    std::uint64_t seed = 0;
    std::optional<std::int64_t> steps;  // absent: timed out
};

// Pairs the fixed pretrained listener with freshly initialized speakers of
// each hidden size and reports steps to reach `target` train accuracy.
std::vector<ProbeRow> pretrain_freeze_probe(const ListenerAgent& pretrained,
                                            const DatasetSplit& data, const GameConfig& game,
                                            const TrainHyper& hyper, const AdamConfig& adam,
                                            const std::vector<int>& fresh_hidden,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::int64_t step_cap, std::int64_t check_every,
                                            double target = 0.95);

std::string probe_csv(const std::vector<ProbeRow>& rows);

struct BaselineRow {
    std::uint64_t seed = 0;
    MetricsReport report;
};

// Untrained-population metric suite: build the population, evaluate at step
// 0, never train.
std::vector<BaselineRow> random_baseline(const ExperimentConfig& cfg,
                                         const std::vector<std::uint64_t>& seeds);

std::string baseline_csv(const std::vector<BaselineRow>& rows);

// $LEWISPOP_OUT when set, else "out".
std::string default_out_root();

}  // namespace lewis
